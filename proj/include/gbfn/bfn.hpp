#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gbfn/rng.hpp"
#include "gbfn/types.hpp"

namespace gbfn {

// Deterministic clean-state reconstruction from the current belief.
// Stochasticity lives entirely in the sampler.
class OutputModel {
public:
    virtual ~OutputModel() = default;
    virtual HybridMolecule predict(const ContinuousParamState& theta_x,
                                   const DiscreteParamState& theta_v,
                                   const PocketContext& pocket, double t) const = 0;
    virtual int n_atoms() const = 0;
    virtual int n_classes() const = 0;
};

// Per-step log entry shared by all samplers. Guidance fields stay empty for
// unguided runs; `variant` is set only by the diffusion baseline.
struct TrajectoryRecord {
    int step = 0;
    double t = 0.0;
    std::optional<double> rho;
    std::optional<double> guidance_score;
    std::optional<double> predicted_mean;
    std::optional<double> total_variance;
    std::optional<double> grad_coords_norm;
    std::optional<double> grad_types_norm;
    double theta_x_norm = 0.0;
    double theta_v_entropy = 0.0;
    std::uint64_t rng_counter = 0;
    std::optional<std::string> variant;
};

struct SampleResult {
    HybridMolecule molecule;
    std::vector<TrajectoryRecord> trajectory;

    // Clean-state predictions per step, kept for offline log verification;
    // not serialized.
    std::vector<HybridMolecule> step_predictions;
};

// y = x + alpha^{-1/2} eps, entrywise standard normal eps.
NoisyObservation continuous_sender_sample(const Matrix& x, double alpha, Rng& rng);

// rho_i = rho_{i-1} + alpha; theta_i = (theta_{i-1} rho_{i-1} + y alpha) / rho_i.
ContinuousParamState continuous_update(const ContinuousParamState& prev,
                                       const NoisyObservation& y, double alpha);

// E[mu | z] with Sigma = scale * I: returns z + scale * score.
Matrix tweedie_mean(const Matrix& z, double covariance_scale, const Matrix& score);

// Score form of the continuous update:
// theta_i = (alpha/rho_i) x + (rho_{i-1}/rho_i) theta_{i-1} + (1/rho_i) score.
ContinuousParamState continuous_update_gradient_form(const ContinuousParamState& prev,
                                                     const Matrix& x, const Matrix& score,
                                                     double alpha);

// y ~ N(alpha (K e_x - 1), alpha K I), drawn entrywise. Rows must be one-hot.
NoisyObservation discrete_sender_sample(const Matrix& one_hot_rows, double alpha, Rng& rng);

// Per row: theta_i = normalized(e^y (.) theta_{i-1}), computed as a stabilized
// row-softmax of y + log theta_{i-1}.
DiscreteParamState discrete_update(const DiscreteParamState& prev, const NoisyObservation& y);

// Forms y = alpha (K e_x - 1) + score, then applies discrete_update.
DiscreteParamState discrete_update_gradient_form(const DiscreteParamState& prev,
                                                 const Matrix& one_hot_rows,
                                                 const Matrix& score, double alpha);

// Draws a concrete one-hot molecule per row of the soft type prediction.
Matrix sample_one_hot_rows(const Matrix& soft_rows, Rng& rng);

// n-step belief refinement loop; the final sample is drawn from the output
// model at theta_n. The receiver distribution plays no role during generation;
// its effect is realized by the model-then-sender two-step draw per iteration.
SampleResult unconditional_sample(const OutputModel& model, const PocketContext& pocket,
                                  const AccuracySchedule& schedule, Rng& rng);

double mean_row_entropy(const Matrix& simplex_rows);

}  // namespace gbfn
