#pragma once

#include <optional>
#include <utility>

#include "gbfn/bfn.hpp"
#include "gbfn/guided.hpp"
#include "gbfn/rng.hpp"
#include "gbfn/types.hpp"

namespace gbfn {

// DDPM schedule; alpha_bar(0) is defined as 1.
struct DiffusionSchedule {
    int n_steps = 0;
    std::vector<double> betas;       // length T, each in (0,1)
    std::vector<double> alphas;      // 1 - beta_t
    std::vector<double> alpha_bars;  // running product, strictly decreasing

    double beta(int t) const { return betas.at(static_cast<size_t>(t - 1)); }
    double alpha(int t) const { return alphas.at(static_cast<size_t>(t - 1)); }
    double alpha_bar(int t) const {
        return t == 0 ? 1.0 : alpha_bars.at(static_cast<size_t>(t - 1));
    }
    void check_step(int t) const;
};

// Linear beta ramp from beta_min to beta_max over T steps.
DiffusionSchedule build_diffusion_schedule(int n_steps, double beta_min, double beta_max);

struct DiffusionState {
    Matrix coords;  // x_t, N x 3
    Matrix types;   // v_t, N x K one-hot rows
    int step;
};

// Clean-state denoiser contract for the baseline. When the coordinate
// dependence of the prediction is (locally) a scalar multiple of the
// identity, coord_chain_scale returns it and the predicted-final-state
// guidance path uses the analytic chain rule; otherwise a central-difference
// fallback is used and flagged.
class DenoiserX0 {
public:
    virtual ~DenoiserX0() = default;
    virtual int n_atoms() const = 0;
    virtual int n_classes() const = 0;
    virtual std::pair<Matrix, Matrix> predict(const Matrix& x_t, const Matrix& v_t, int t,
                                              const DiffusionSchedule& schedule,
                                              const PocketContext& pocket) const = 0;
    virtual std::optional<double> coord_chain_scale(const Matrix& x_t, int t,
                                                    const DiffusionSchedule& schedule,
                                                    const PocketContext& pocket) const {
        (void)x_t;
        (void)t;
        (void)schedule;
        (void)pocket;
        return std::nullopt;
    }
};

enum class GuidanceVariant { IntermediateState, PredictedFinalState };  // x_t vs x_hat_0

// Forward marginal: sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps.
Matrix forward_marginal_coords(const Matrix& x_0, int t, const DiffusionSchedule& schedule,
                               Rng& rng);

// Guided reverse coordinate step:
// x_{t-1} = mu_tilde(x_t, x0_hat) + lambda ((1-a_t)/sqrt(a_t)) grad + sigma_t z,
// with z = 0 at t = 1.
Matrix ddpm_guided_step_coords(const Matrix& x_t, const Matrix& x0_hat, int t,
                               const DiffusionSchedule& schedule, const Matrix& grad,
                               double lambda, Rng& rng);

// Posterior coefficients of mu_tilde, exposed for coefficient tests.
std::pair<double, double> ddpm_posterior_coefficients(int t, const DiffusionSchedule& schedule);

// theta_post = normalized([a_t v_t + (1-a_t)/K] (.) [abar_{t-1} v0_hat + (1-abar_{t-1})/K]).
Matrix categorical_posterior(const Matrix& v_t, const Matrix& v0_hat, int t,
                             const DiffusionSchedule& schedule);

// w = (theta_post + delta) (.) e^{lambda grad}, renormalized, then one
// categorical draw per row.
Matrix categorical_guided_sample(const Matrix& theta_post, const Matrix& grad, double lambda,
                                 double delta, Rng& rng);

struct GuidanceGradients {
    Matrix coords;  // N x 3
    Matrix types;   // N x K
    bool used_finite_difference = false;
};

// Predictor gradients evaluated directly at the noisy intermediate state.
GuidanceGradients guidance_grad_xt(const PropertyPredictor& predictor,
                                   const DiffusionState& state, const PocketContext& pocket,
                                   double target);

// Single-sample posterior-style guidance: gradients at the predicted clean
// state, chained through the denoiser's coordinate dependence.
GuidanceGradients guidance_grad_x0(const PropertyPredictor& predictor, const DenoiserX0& model,
                                   const DiffusionState& state, const PocketContext& pocket,
                                   const DiffusionSchedule& schedule, double target);

struct TargetOptConfig {
    GuidanceConfig guidance;
    GuidanceVariant variant = GuidanceVariant::PredictedFinalState;
    double delta = 1e-8;  // floor inside the guided categorical tilt
};

// Full reverse loop from x_T ~ N(0, I) and uniform-categorical v_T.
SampleResult targetopt_sample(const DenoiserX0& model, const PropertyPredictor& predictor,
                              const PocketContext& pocket, const DiffusionSchedule& schedule,
                              const TargetOptConfig& config, Rng& rng);

}  // namespace gbfn
