#pragma once

#include <functional>
#include <vector>

#include "gbfn/bfn.hpp"
#include "gbfn/guided.hpp"
#include "gbfn/types.hpp"

namespace gbfn::analysis {

struct EquivarianceReport {
    double value_residual;
    double grad_residual;
    Eigen::Matrix3d rotation;
    bool value_ok;
    bool grad_ok;
};

struct TrajectoryStats {
    std::vector<double> mean_score;  // per step, across trajectories
    std::vector<double> var_score;   // population variance
    std::vector<double> mean_mu;
    std::vector<double> times;
    double terminal_mean;
    double terminal_median;
    std::vector<double> terminal_deciles;  // 10 sorted summary points
};

// Haar-uniform proper rotation from QR orthogonalization with sign fix.
Eigen::Matrix3d random_rotation(std::uint64_t seed);

// Rotates molecule and pocket together about the pocket center and compares
// predictor value and coordinate gradient against the rotated originals.
// Value here is the scalar the guidance differentiates.
EquivarianceReport check_equivariance(const PropertyPredictor& predictor,
                                      const HybridMolecule& m, const PocketContext& pocket,
                                      const Eigen::Matrix3d& rotation, double target,
                                      double value_tol = 1e-10, double grad_tol = 1e-8);

// Elementwise mean/variance of guidance scores across equal-length
// trajectories. Population variance: the seed set is the whole run.
TrajectoryStats trajectory_stats(const std::vector<std::vector<TrajectoryRecord>>& trajectories);

// Paired guided-vs-unguided terminal scores: (mean delta, strict win rate).
std::pair<double, double> improvement_metric(const std::vector<double>& guided,
                                             const std::vector<double>& unguided);

// O(h^2) central differences of a scalar field, one coordinate at a time.
Matrix finite_difference_gradient(const std::function<double(const Matrix&)>& f,
                                  const Matrix& point, double h);

std::string stats_to_csv(const TrajectoryStats& stats);

}  // namespace gbfn::analysis
