#include "gbfn/bfn.hpp"

#include <cmath>

namespace gbfn {

namespace {

constexpr double kLogFloor = 1e-30;  // floor before log, see discrete_update

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeError(std::string(what) + ": shapes disagree");
}

void check_one_hot(const Matrix& rows) {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        int ones = 0;
        for (Eigen::Index k = 0; k < rows.cols(); ++k) {
            double v = rows(i, k);
            if (v == 1.0)
                ++ones;
            else if (v != 0.0)
                throw InvalidStateError("row " + std::to_string(i) + " is not one-hot");
        }
        if (ones != 1) throw InvalidStateError("row " + std::to_string(i) + " is not one-hot");
    }
}

// Row-softmax of logits, subtracting the row max first.
Matrix row_softmax(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        double mx = logits.row(i).maxCoeff();
        Eigen::ArrayXd e = (logits.row(i).array() - mx).exp();
        out.row(i) = (e / e.sum()).matrix();
    }
    return out;
}

}  // namespace

NoisyObservation continuous_sender_sample(const Matrix& x, double alpha, Rng& rng) {
    if (!(alpha > 0.0)) throw DomainError("sender alpha must be positive");
    Matrix y = x + rng.normal_matrix(x.rows(), x.cols()) / std::sqrt(alpha);
    return NoisyObservation(std::move(y), Channel::Coords, alpha);
}

ContinuousParamState continuous_update(const ContinuousParamState& prev,
                                       const NoisyObservation& y, double alpha) {
    if (y.channel != Channel::Coords)
        throw ShapeError("continuous_update expects a coords-channel observation");
    check_same_shape(prev.mean, y.payload, "continuous_update");
    if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
    double rho_i = prev.precision + alpha;
    Matrix mean = (prev.mean * prev.precision + y.payload * alpha) / rho_i;
    return ContinuousParamState(std::move(mean), rho_i);
}

Matrix tweedie_mean(const Matrix& z, double covariance_scale, const Matrix& score) {
    check_same_shape(z, score, "tweedie_mean");
    if (!(covariance_scale > 0.0)) throw DomainError("covariance scale must be positive");
    return z + covariance_scale * score;
}

ContinuousParamState continuous_update_gradient_form(const ContinuousParamState& prev,
                                                     const Matrix& x, const Matrix& score,
                                                     double alpha) {
    check_same_shape(prev.mean, x, "continuous_update_gradient_form");
    check_same_shape(prev.mean, score, "continuous_update_gradient_form");
    if (!(alpha > 0.0)) throw DomainError("alpha must be positive");
    double rho_i = prev.precision + alpha;
    Matrix mean = (alpha / rho_i) * x + (prev.precision / rho_i) * prev.mean + score / rho_i;
    return ContinuousParamState(std::move(mean), rho_i);
}

NoisyObservation discrete_sender_sample(const Matrix& one_hot_rows, double alpha, Rng& rng) {
    if (!(alpha > 0.0)) throw DomainError("sender alpha must be positive");
    check_one_hot(one_hot_rows);
    double k = static_cast<double>(one_hot_rows.cols());
    Matrix mean = alpha * (k * one_hot_rows.array() - 1.0).matrix();
    Matrix y = mean + std::sqrt(alpha * k) * rng.normal_matrix(mean.rows(), mean.cols());
    return NoisyObservation(std::move(y), Channel::Types, alpha);
}

DiscreteParamState discrete_update(const DiscreteParamState& prev, const NoisyObservation& y) {
    if (y.channel != Channel::Types)
        throw ShapeError("discrete_update expects a types-channel observation");
    check_same_shape(prev.probs, y.payload, "discrete_update");
    for (Eigen::Index i = 0; i < prev.probs.rows(); ++i) {
        if (prev.probs.row(i).sum() <= 0.0)
            throw InvalidStateError("type belief row " + std::to_string(i) + " is all zero");
    }
    Matrix logits =
        y.payload + prev.probs.array().max(kLogFloor).log().matrix();
    return DiscreteParamState(row_softmax(logits));
}

DiscreteParamState discrete_update_gradient_form(const DiscreteParamState& prev,
                                                 const Matrix& one_hot_rows, const Matrix& score,
                                                 double alpha) {
    check_same_shape(prev.probs, one_hot_rows, "discrete_update_gradient_form");
    check_same_shape(prev.probs, score, "discrete_update_gradient_form");
    double k = static_cast<double>(prev.probs.cols());
    Matrix y = alpha * (k * one_hot_rows.array() - 1.0).matrix() + score;
    return discrete_update(prev, NoisyObservation(std::move(y), Channel::Types, alpha));
}

Matrix sample_one_hot_rows(const Matrix& soft_rows, Rng& rng) {
    Matrix out = Matrix::Zero(soft_rows.rows(), soft_rows.cols());
    for (Eigen::Index i = 0; i < soft_rows.rows(); ++i) {
        int k = rng.categorical(soft_rows.row(i).transpose());
        out(i, k) = 1.0;
    }
    return out;
}

double mean_row_entropy(const Matrix& simplex_rows) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < simplex_rows.rows(); ++i) {
        for (Eigen::Index k = 0; k < simplex_rows.cols(); ++k) {
            double p = simplex_rows(i, k);
            if (p > 0.0) total -= p * std::log(p);
        }
    }
    return total / static_cast<double>(simplex_rows.rows());
}

SampleResult unconditional_sample(const OutputModel& model, const PocketContext& pocket,
                                  const AccuracySchedule& schedule, Rng& rng) {
    auto [theta_x, theta_v] = new_prior_state(model.n_atoms(), model.n_classes(),
                                              schedule.rho_0);
    std::vector<TrajectoryRecord> trajectory;
    std::vector<HybridMolecule> predictions;
    trajectory.reserve(static_cast<size_t>(schedule.n_steps));

    for (int i = 1; i <= schedule.n_steps; ++i) {
        size_t idx = static_cast<size_t>(i - 1);
        double t = schedule.times[idx];
        try {
            HybridMolecule m_hat = model.predict(theta_x, theta_v, pocket, t);
            Matrix e_hat = sample_one_hot_rows(m_hat.types, rng);
            NoisyObservation y_x =
                continuous_sender_sample(m_hat.coords, schedule.alpha_coords[idx], rng);
            NoisyObservation y_v =
                discrete_sender_sample(e_hat, schedule.alpha_types[idx], rng);
            theta_x = continuous_update(theta_x, y_x, schedule.alpha_coords[idx]);
            theta_v = discrete_update(theta_v, y_v);

            TrajectoryRecord rec;
            rec.step = i;
            rec.t = t;
            rec.rho = theta_x.precision;
            rec.theta_x_norm = theta_x.mean.norm();
            rec.theta_v_entropy = mean_row_entropy(theta_v.probs);
            rec.rng_counter = rng.counter();
            trajectory.push_back(std::move(rec));
            predictions.push_back(std::move(m_hat));
        } catch (const Error& e) {
            throw SamplerError(e.what(), i);
        }
    }

    double t_final = schedule.times.back();
    HybridMolecule final_mol = model.predict(theta_x, theta_v, pocket, t_final);
    return SampleResult{std::move(final_mol), std::move(trajectory), std::move(predictions)};
}

}  // namespace gbfn
