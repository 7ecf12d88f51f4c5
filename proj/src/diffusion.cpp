#include "gbfn/diffusion.hpp"

#include <cmath>

#include "gbfn/analysis.hpp"

namespace gbfn {

void DiffusionSchedule::check_step(int t) const {
    if (t < 1 || t > n_steps)
        throw DomainError("diffusion step " + std::to_string(t) + " out of range [1, " +
                          std::to_string(n_steps) + "]");
}

DiffusionSchedule build_diffusion_schedule(int n_steps, double beta_min, double beta_max) {
    if (n_steps < 1) throw DimensionError("diffusion n_steps must be >= 1");
    if (!(beta_min > 0.0 && beta_max < 1.0 && beta_min <= beta_max))
        throw DomainError("betas must satisfy 0 < beta_min <= beta_max < 1");
    DiffusionSchedule s;
    s.n_steps = n_steps;
    double abar = 1.0;
    for (int t = 1; t <= n_steps; ++t) {
        double beta = n_steps == 1
                          ? beta_min
                          : beta_min + (beta_max - beta_min) * (t - 1.0) / (n_steps - 1.0);
        s.betas.push_back(beta);
        s.alphas.push_back(1.0 - beta);
        abar *= 1.0 - beta;
        s.alpha_bars.push_back(abar);
    }
    return s;
}

Matrix forward_marginal_coords(const Matrix& x_0, int t, const DiffusionSchedule& schedule,
                               Rng& rng) {
    schedule.check_step(t);
    double abar = schedule.alpha_bar(t);
    return std::sqrt(abar) * x_0 +
           std::sqrt(1.0 - abar) * rng.normal_matrix(x_0.rows(), x_0.cols());
}

std::pair<double, double> ddpm_posterior_coefficients(int t, const DiffusionSchedule& schedule) {
    schedule.check_step(t);
    double beta = schedule.beta(t);
    double alpha = schedule.alpha(t);
    double abar_t = schedule.alpha_bar(t);
    double abar_prev = schedule.alpha_bar(t - 1);
    double x0_coeff = std::sqrt(abar_prev) * beta / (1.0 - abar_t);
    double xt_coeff = std::sqrt(alpha) * (1.0 - abar_prev) / (1.0 - abar_t);
    return {x0_coeff, xt_coeff};
}

Matrix ddpm_guided_step_coords(const Matrix& x_t, const Matrix& x0_hat, int t,
                               const DiffusionSchedule& schedule, const Matrix& grad,
                               double lambda, Rng& rng) {
    schedule.check_step(t);
    if (x_t.rows() != x0_hat.rows() || x_t.rows() != grad.rows())
        throw ShapeError("ddpm_guided_step_coords: shape mismatch");
    auto [x0_coeff, xt_coeff] = ddpm_posterior_coefficients(t, schedule);
    double alpha = schedule.alpha(t);
    double abar_t = schedule.alpha_bar(t);
    double abar_prev = schedule.alpha_bar(t - 1);
    Matrix mean = x0_coeff * x0_hat + xt_coeff * x_t +
                  lambda * ((1.0 - alpha) / std::sqrt(alpha)) * grad;
    if (t == 1) return mean;
    double sigma = std::sqrt(schedule.beta(t) * (1.0 - abar_prev) / (1.0 - abar_t));
    return mean + sigma * rng.normal_matrix(x_t.rows(), x_t.cols());
}

Matrix categorical_posterior(const Matrix& v_t, const Matrix& v0_hat, int t,
                             const DiffusionSchedule& schedule) {
    schedule.check_step(t);
    if (v_t.rows() != v0_hat.rows() || v_t.cols() != v0_hat.cols())
        throw ShapeError("categorical_posterior: shape mismatch");
    double k = static_cast<double>(v_t.cols());
    double alpha = schedule.alpha(t);
    double abar_prev = schedule.alpha_bar(t - 1);
    Matrix out(v_t.rows(), v_t.cols());
    for (Eigen::Index i = 0; i < v_t.rows(); ++i) {
        Eigen::ArrayXd a = alpha * v_t.row(i).array() + (1.0 - alpha) / k;
        Eigen::ArrayXd b = abar_prev * v0_hat.row(i).array() + (1.0 - abar_prev) / k;
        Eigen::ArrayXd w = a * b;
        out.row(i) = (w / w.sum()).matrix();
    }
    return out;
}

Matrix categorical_guided_sample(const Matrix& theta_post, const Matrix& grad, double lambda,
                                 double delta, Rng& rng) {
    if (theta_post.rows() != grad.rows() || theta_post.cols() != grad.cols())
        throw ShapeError("categorical_guided_sample: shape mismatch");
    if (delta < 0.0) throw DomainError("delta must be nonnegative");
    Matrix one_hot = Matrix::Zero(theta_post.rows(), theta_post.cols());
    for (Eigen::Index i = 0; i < theta_post.rows(); ++i) {
        Eigen::ArrayXd tilt = lambda * grad.row(i).transpose().array();
        tilt -= tilt.maxCoeff();  // overflow guard; normalization absorbs it
        Eigen::ArrayXd w = (theta_post.row(i).transpose().array() + delta) * tilt.exp();
        int kk = rng.categorical(w.matrix());
        one_hot(i, kk) = 1.0;
    }
    return one_hot;
}

GuidanceGradients guidance_grad_xt(const PropertyPredictor& predictor,
                                   const DiffusionState& state, const PocketContext& pocket,
                                   double target) {
    HybridMolecule m(state.coords, state.types);
    GuidanceGradients g;
    g.coords = predictor.grad_coords(m, pocket, target);
    g.types = predictor.grad_types(state.types, state.coords, pocket, target);
    return g;
}

GuidanceGradients guidance_grad_x0(const PropertyPredictor& predictor, const DenoiserX0& model,
                                   const DiffusionState& state, const PocketContext& pocket,
                                   const DiffusionSchedule& schedule, double target) {
    auto [x0_hat, v0_hat] =
        model.predict(state.coords, state.types, state.step, schedule, pocket);
    HybridMolecule m0(x0_hat, v0_hat);
    GuidanceGradients g;
    Matrix grad_at_x0 = predictor.grad_coords(m0, pocket, target);
    // Types tilt lives in predicted-final-state space; no chain factor.
    g.types = predictor.grad_types(v0_hat, x0_hat, pocket, target);

    auto scale = model.coord_chain_scale(state.coords, state.step, schedule, pocket);
    if (scale) {
        g.coords = *scale * grad_at_x0;
    } else {
        // Central differences of s(x_t) = log p(l | x0_hat(x_t), p).
        g.used_finite_difference = true;
        auto value = [&](const Matrix& x) {
            auto [x0, v0] = model.predict(x, state.types, state.step, schedule, pocket);
            PropertyPrediction pred =
                variance_decompose(predictor.predict(HybridMolecule(x0, v0), pocket));
            return guidance_log_likelihood(pred, target);
        };
        g.coords = analysis::finite_difference_gradient(value, state.coords, 1e-4);
    }
    return g;
}

SampleResult targetopt_sample(const DenoiserX0& model, const PropertyPredictor& predictor,
                              const PocketContext& pocket, const DiffusionSchedule& schedule,
                              const TargetOptConfig& config, Rng& rng) {
    config.guidance.validate();
    const char* variant_tag =
        config.variant == GuidanceVariant::IntermediateState ? "xt" : "x0";
    int n = model.n_atoms();
    int k = model.n_classes();

    // Initial state: x_T ~ N(0, I), uniform categorical types.
    Matrix x_t = rng.normal_matrix(n, 3);
    Matrix uniform = Matrix::Constant(n, k, 1.0 / k);
    Matrix v_t = sample_one_hot_rows(uniform, rng);

    std::vector<TrajectoryRecord> trajectory;
    std::vector<HybridMolecule> predictions;
    trajectory.reserve(static_cast<size_t>(schedule.n_steps));
    double lambda_x = config.guidance.lambda_coords;
    double lambda_v = config.guidance.lambda_types;

    for (int t = schedule.n_steps; t >= 1; --t) {
        try {
            DiffusionState state{x_t, v_t, t};
            auto [x0_hat, v0_hat] = model.predict(x_t, v_t, t, schedule, pocket);
            HybridMolecule m0(x0_hat, v0_hat);

            GuidanceGradients grads;
            if (lambda_x == 0.0 && lambda_v == 0.0) {
                grads.coords = Matrix::Zero(n, 3);
                grads.types = Matrix::Zero(n, k);
            } else if (config.variant == GuidanceVariant::IntermediateState) {
                grads = guidance_grad_xt(predictor, state, pocket, config.guidance.target_label);
            } else {
                grads = guidance_grad_x0(predictor, model, state, pocket, schedule,
                                         config.guidance.target_label);
            }

            PropertyPrediction pred = variance_decompose(predictor.predict(m0, pocket));

            Matrix x_prev =
                ddpm_guided_step_coords(x_t, x0_hat, t, schedule, grads.coords, lambda_x, rng);
            Matrix theta_post = categorical_posterior(v_t, v0_hat, t, schedule);
            Matrix v_prev =
                categorical_guided_sample(theta_post, grads.types, lambda_v, config.delta, rng);

            TrajectoryRecord rec;
            rec.step = schedule.n_steps - t + 1;
            rec.t = static_cast<double>(t);
            rec.guidance_score =
                guidance_log_likelihood(pred, config.guidance.target_label);
            rec.predicted_mean = pred.mean;
            rec.total_variance = pred.total;
            rec.grad_coords_norm = grads.coords.norm();
            rec.grad_types_norm = grads.types.norm();
            rec.theta_x_norm = x_prev.norm();
            rec.theta_v_entropy = mean_row_entropy(theta_post);
            rec.rng_counter = rng.counter();
            rec.variant = variant_tag;
            trajectory.push_back(std::move(rec));
            predictions.push_back(std::move(m0));

            x_t = std::move(x_prev);
            v_t = std::move(v_prev);
        } catch (const SamplerError&) {
            throw;
        } catch (const Error& e) {
            throw SamplerError(e.what(), schedule.n_steps - t + 1);
        }
    }

    HybridMolecule final_mol(std::move(x_t), std::move(v_t));
    return SampleResult{std::move(final_mol), std::move(trajectory), std::move(predictions)};
}

}  // namespace gbfn
