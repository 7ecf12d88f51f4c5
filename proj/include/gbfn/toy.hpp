#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "gbfn/bfn.hpp"
#include "gbfn/diffusion.hpp"
#include "gbfn/guided.hpp"
#include "gbfn/types.hpp"

namespace gbfn::toy {

struct TemplateLibrary {
    std::vector<HybridMolecule> templates;  // shared N and K, one-hot types
    std::vector<std::string> ids;
};

// Parameters of the analytic property surrogates.
struct ToyPropertyParams {
    Vector hotspot_weights;          // per-class w, length K
    double kernel_width = 1.0;       // s
    double affinity_floor = -12.0;   // DS range lower end (best)
    double affinity_ceiling = 0.0;   // DS range upper end
    double sa_slope = 4.0;           // a
    double sa_offset = -2.0;         // b
    std::vector<int> easy_classes;   // classes counted toward the SA mass fraction
    double member_jitter = 0.05;     // ensemble member perturbation scale
    // Heteroscedastic noise base. Kept on the order of the score residuals the
    // guidance sees, so the mean term of the Gaussian log-likelihood gradient
    // dominates its variance term and guidance pulls toward the target rather
    // than toward high-uncertainty regions.
    double sigma_base = 0.4;
    double spatial_scale = 4.0;      // distance scale of the noise growth
};

struct ToyWorld {
    PocketContext pocket;
    TemplateLibrary library;
    ToyPropertyParams params;
};

// Deterministic synthetic world: pocket atoms on a shell, hotspots inside,
// templates near hotspots. Pure function of the seed.
ToyWorld make_toy_world(std::uint64_t seed, int n_atoms, int n_classes, int n_templates,
                        double pocket_size);

// Output model pulling the belief toward the nearest template:
// x_hat = (1-g(t)) theta_x + g(t) x_T*, g(t) = clamp(t, 0, 1); ties break to
// the lowest template index.
std::unique_ptr<OutputModel> attractor_output_model(const ToyWorld& world);

// The same attractor re-indexed by diffusion time t/T, so the BFN samplers
// and the diffusion baseline share one denoising target.
std::unique_ptr<DenoiserX0> attractor_denoiser(const ToyWorld& world);

struct SurrogateValue {
    double value;
    Matrix grad_coords;  // N x 3
    Matrix grad_types;   // N x K
};

// Docking-score stand-in on [affinity_floor, affinity_ceiling]; lower is
// better. Analytic gradients in both channels.
SurrogateValue affinity_surrogate(const HybridMolecule& m, const PocketContext& pocket,
                                  const ToyPropertyParams& params);

// Synthetic-accessibility stand-in in [0,1]: logistic in the mean easy-class
// mass fraction. grad_coords is identically zero.
SurrogateValue sa_surrogate(const HybridMolecule& m, const ToyPropertyParams& params);

// Score = (DS / -20) * SA with product-rule gradients.
SurrogateValue combined_score(const HybridMolecule& m, const PocketContext& pocket,
                              const ToyPropertyParams& params);

// M jittered copies of the combined score with heteroscedastic member noise
// growing away from the pocket center. Gradients follow the full guidance
// log-likelihood, including its dependence on the predictive variance.
std::unique_ptr<PropertyPredictor> toy_ensemble_predictor(const ToyWorld& world, int ensemble_size,
                                                          std::uint64_t rng_init,
                                                          GuidanceMode mode,
                                                          double target_label);

// Exact joint posterior over all K^N type assignments (N <= 3, K <= 3) for a
// given log-likelihood on full assignments. Brute-force oracle.
struct EnumeratedPosterior {
    std::vector<double> joint;  // K^N probabilities, assignment index base-K
    Matrix marginals;           // N x K
};
EnumeratedPosterior enumerate_discrete_posterior(
    const DiscreteParamState& theta,
    const std::function<double(const std::vector<int>&)>& log_likelihood);

// Exact posterior mean of N(theta_x, 1/(rho + alpha)) tilted by
// exp(-c ||x - x*||^2): the conjugate closed form behind the guided
// continuous-kernel check.
Matrix gaussian_tilt_closed_form(const ContinuousParamState& theta, double alpha, double c,
                                 const Matrix& x_star);

// Canonical JSON serialization of the world (ordered keys, 9 significant
// digits); used for determinism hashing.
std::string world_to_json(const ToyWorld& world);

}  // namespace gbfn::toy
