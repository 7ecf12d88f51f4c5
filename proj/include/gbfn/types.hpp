#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gbfn/errors.hpp"

namespace gbfn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

constexpr double kSimplexTol = 1e-9;

inline void check_finite(const Matrix& m, const std::string& name) {
    if (!m.allFinite()) throw InvalidStateError(name + " contains a non-finite value");
}

inline void check_simplex_rows(const Matrix& rows, const std::string& name) {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        double sum = rows.row(i).sum();
        if (std::abs(sum - 1.0) > kSimplexTol)
            throw InvalidStateError(name + ": row " + std::to_string(i) +
                                    " sums to " + std::to_string(sum));
        if ((rows.row(i).array() < -kSimplexTol).any())
            throw InvalidStateError(name + ": row " + std::to_string(i) +
                                    " has a negative entry");
    }
}

// N typed points: coordinates plus a categorical distribution per atom.
// Rows of `types` are simplex points; one-hot for concrete molecules.
struct HybridMolecule {
    Matrix coords;  // N x 3
    Matrix types;   // N x K

    HybridMolecule(Matrix coords_in, Matrix types_in)
        : coords(std::move(coords_in)), types(std::move(types_in)) {
        if (coords.rows() < 1) throw DimensionError("molecule needs at least one atom");
        if (coords.cols() != 3) throw ShapeError("coords must be N x 3");
        if (types.cols() < 2) throw DimensionError("molecule needs at least two classes");
        if (types.rows() != coords.rows())
            throw ShapeError("coords and types disagree on atom count");
        check_finite(coords, "molecule coords");
        check_simplex_rows(types, "molecule types");
    }

    Eigen::Index n_atoms() const { return coords.rows(); }
    Eigen::Index n_classes() const { return types.cols(); }

    // Per-row argmax, used for one-hot export.
    std::vector<int> class_indices() const {
        std::vector<int> out(static_cast<size_t>(types.rows()));
        for (Eigen::Index i = 0; i < types.rows(); ++i) {
            Eigen::Index k;
            types.row(i).maxCoeff(&k);
            out[static_cast<size_t>(i)] = static_cast<int>(k);
        }
        return out;
    }
};

// Binding-site stand-in: shell atoms, interior hotspots, centered at origin.
struct PocketContext {
    Matrix coords;    // N_P x 3, centered so mean == center
    Matrix types;     // N_P x K one-hot
    Matrix hotspots;  // H x 3
    Eigen::RowVector3d center;

    PocketContext(Matrix coords_in, Matrix types_in, Matrix hotspots_in)
        : coords(std::move(coords_in)),
          types(std::move(types_in)),
          hotspots(std::move(hotspots_in)) {
        if (hotspots.rows() < 1) throw DimensionError("pocket needs at least one hotspot");
        if (coords.cols() != 3 || hotspots.cols() != 3)
            throw ShapeError("pocket coordinate matrices must have 3 columns");
        if (types.rows() != coords.rows())
            throw ShapeError("pocket coords and types disagree on atom count");
        check_finite(coords, "pocket coords");
        check_simplex_rows(types, "pocket types");
        center = coords.colwise().mean();
    }

    Eigen::Index n_classes() const { return types.cols(); }
};

// Gaussian belief over coordinates: shared scalar precision, per-entry mean.
struct ContinuousParamState {
    Matrix mean;       // N x 3
    double precision;  // rho > 0, non-decreasing across updates

    ContinuousParamState(Matrix mean_in, double precision_in)
        : mean(std::move(mean_in)), precision(precision_in) {
        if (!(precision > 0.0)) throw DomainError("precision must be positive");
        if (mean.cols() != 3) throw ShapeError("coordinate mean must be N x 3");
        check_finite(mean, "coordinate mean");
    }
};

// Categorical belief: one simplex row per atom.
struct DiscreteParamState {
    Matrix probs;  // N x K

    explicit DiscreteParamState(Matrix probs_in) : probs(std::move(probs_in)) {
        if (probs.cols() < 2) throw DimensionError("type belief needs at least two classes");
        check_simplex_rows(probs, "type belief");
    }
};

enum class Channel { Coords, Types };

// A sender draw: payload shape follows the channel tag.
struct NoisyObservation {
    Matrix payload;
    Channel channel;
    double alpha;

    NoisyObservation(Matrix payload_in, Channel channel_in, double alpha_in)
        : payload(std::move(payload_in)), channel(channel_in), alpha(alpha_in) {
        check_finite(payload, "observation payload");
        if (channel == Channel::Coords && payload.cols() != 3)
            throw ShapeError("coords observation must be N x 3");
    }
};

// Per-step sender precisions and timestamps for an n-step run.
struct AccuracySchedule {
    int n_steps;
    std::vector<double> alpha_coords;
    std::vector<double> alpha_types;
    double rho_0;
    std::vector<double> times;  // t_i = (i-1)/n

    double final_precision() const {
        double rho = rho_0;
        for (double a : alpha_coords) rho += a;
        return rho;
    }
};

// Prior belief: zero coordinate means at precision rho_0, uniform type rows.
std::pair<ContinuousParamState, DiscreteParamState> new_prior_state(int n_atoms,
                                                                    int n_classes,
                                                                    double rho_0);

// Closed-form schedules: alpha_x geometric in sigma1, alpha_v linear in step.
AccuracySchedule build_schedule(int n_steps, double sigma1, double beta1, double rho_0);

// Text dump: "N K" header, then one "x y z class_index" line per atom,
// 9 significant digits.
std::string molecule_to_text(const HybridMolecule& m);
HybridMolecule molecule_from_text(const std::string& text);

}  // namespace gbfn
