#include "gbfn/toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

namespace gbfn::toy {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr int kPocketShellAtoms = 24;
constexpr int kHotspotCount = 4;

double round_sig9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::strtod(buf, nullptr);
}

Matrix renormalize_rows(Matrix rows) {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        double s = rows.row(i).sum();
        if (s <= 0.0) throw InvalidStateError("cannot renormalize an all-zero row");
        rows.row(i) /= s;
    }
    return rows;
}

// Index of the template whose coordinates are mean-square closest; ties break
// to the lowest index.
size_t nearest_template(const TemplateLibrary& lib, const Matrix& coords) {
    size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < lib.templates.size(); ++j) {
        double d = (lib.templates[j].coords - coords).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = j;
        }
    }
    return best;
}

struct AffinityRaw {
    double value;        // nonnegative kernel sum
    Matrix grad_coords;  // N x 3
    Matrix grad_types;   // N x K
};

AffinityRaw affinity_raw(const Matrix& coords, const Matrix& types, const PocketContext& pocket,
                         const ToyPropertyParams& params) {
    if (types.cols() != params.hotspot_weights.size())
        throw ShapeError("affinity: type width disagrees with hotspot weights");
    double s2 = params.kernel_width * params.kernel_width;
    AffinityRaw out{0.0, Matrix::Zero(coords.rows(), 3),
                    Matrix::Zero(types.rows(), types.cols())};
    for (Eigen::Index j = 0; j < coords.rows(); ++j) {
        double class_weight = types.row(j).dot(params.hotspot_weights.transpose());
        for (Eigen::Index h = 0; h < pocket.hotspots.rows(); ++h) {
            Eigen::RowVector3d diff = coords.row(j) - pocket.hotspots.row(h);
            double kernel = std::exp(-diff.squaredNorm() / (2.0 * s2));
            out.value += class_weight * kernel;
            out.grad_coords.row(j) += class_weight * kernel * (-diff / s2);
            out.grad_types.row(j) += kernel * params.hotspot_weights.transpose();
        }
    }
    return out;
}

double affinity_max_raw(Eigen::Index n_atoms, const PocketContext& pocket,
                        const ToyPropertyParams& params) {
    double w_max = params.hotspot_weights.maxCoeff();
    return static_cast<double>(n_atoms) * static_cast<double>(pocket.hotspots.rows()) * w_max;
}

class AttractorModel final : public OutputModel {
public:
    explicit AttractorModel(const ToyWorld& world) : world_(world) {}

    int n_atoms() const override {
        return static_cast<int>(world_.library.templates.front().coords.rows());
    }
    int n_classes() const override {
        return static_cast<int>(world_.library.templates.front().types.cols());
    }

    HybridMolecule predict(const ContinuousParamState& theta_x,
                           const DiscreteParamState& theta_v, const PocketContext&,
                           double t) const override {
        double g = std::clamp(t, 0.0, 1.0);
        const auto& tpl = world_.library.templates[nearest_template(world_.library, theta_x.mean)];
        Matrix x_hat = (1.0 - g) * theta_x.mean + g * tpl.coords;
        Matrix v_hat = renormalize_rows((1.0 - g) * theta_v.probs + g * tpl.types);
        return HybridMolecule(std::move(x_hat), std::move(v_hat));
    }

private:
    ToyWorld world_;
};

// The attractor re-parameterized by diffusion step: pull strength t/T, so the
// prediction is pure template at t = T and the identity at t -> 0.
class AttractorDenoiser final : public DenoiserX0 {
public:
    explicit AttractorDenoiser(const ToyWorld& world) : world_(world) {}

    int n_atoms() const override {
        return static_cast<int>(world_.library.templates.front().coords.rows());
    }
    int n_classes() const override {
        return static_cast<int>(world_.library.templates.front().types.cols());
    }

    std::pair<Matrix, Matrix> predict(const Matrix& x_t, const Matrix& v_t, int t,
                                      const DiffusionSchedule& schedule,
                                      const PocketContext&) const override {
        double g = static_cast<double>(t) / schedule.n_steps;
        const auto& tpl = world_.library.templates[nearest_template(world_.library, x_t)];
        Matrix x0 = (1.0 - g) * x_t + g * tpl.coords;
        Matrix v0 = renormalize_rows((1.0 - g) * v_t + g * tpl.types);
        return {std::move(x0), std::move(v0)};
    }

    std::optional<double> coord_chain_scale(const Matrix&, int t,
                                            const DiffusionSchedule& schedule,
                                            const PocketContext&) const override {
        // Piecewise-linear in x_t away from template-selection boundaries.
        return 1.0 - static_cast<double>(t) / schedule.n_steps;
    }

private:
    ToyWorld world_;
};

class ToyEnsemblePredictor final : public PropertyPredictor {
public:
    ToyEnsemblePredictor(const ToyWorld& world, int ensemble_size, std::uint64_t rng_init,
                         GuidanceMode mode, double target_label)
        : world_(world), mode_(mode), target_(target_label) {
        if (ensemble_size < 1) throw DimensionError("ensemble size must be >= 1");
        Rng rng(rng_init);
        Eigen::Index k = world_.params.hotspot_weights.size();
        for (int i = 0; i < ensemble_size; ++i) {
            ToyPropertyParams member = world_.params;
            for (Eigen::Index c = 0; c < k; ++c) {
                member.hotspot_weights[c] =
                    std::max(0.0, member.hotspot_weights[c] +
                                      world_.params.member_jitter * rng.normal());
            }
            members_.push_back(std::move(member));
        }
    }

    std::vector<MemberPrediction> predict(const HybridMolecule& m,
                                          const PocketContext& pocket) const override {
        std::vector<MemberPrediction> out;
        out.reserve(members_.size());
        double s2 = member_sigma2(m);
        for (const auto& member : members_) {
            out.push_back({combined_score(m, pocket, member).value, s2});
        }
        return out;
    }

    Matrix grad_coords(const HybridMolecule& m, const PocketContext& pocket,
                       double target) const override {
        return gradient(m, pocket, target, /*coords_channel=*/true);
    }

    Matrix grad_types(const Matrix& relaxed_types, const Matrix& coords,
                      const PocketContext& pocket, double target) const override {
        HybridMolecule m(coords, relaxed_types);
        return gradient(m, pocket, target, /*coords_channel=*/false);
    }

    double guidance_value(const HybridMolecule& m, const PocketContext& pocket,
                          double target) const override {
        PropertyPrediction pred = variance_decompose(predict(m, pocket));
        if (mode_ == GuidanceMode::MaximizeMean) return pred.mean;
        return guidance_log_likelihood(pred, target);
    }

private:
    // Heteroscedastic member noise: grows with the molecule centroid's
    // distance from the pocket center (the origin after centering).
    double member_sigma2(const HybridMolecule& m) const {
        double d = m.coords.colwise().mean().norm();
        double base = world_.params.sigma_base * world_.params.sigma_base;
        return base * (1.0 + d / world_.params.spatial_scale);
    }

    Matrix gradient(const HybridMolecule& m, const PocketContext& pocket, double target,
                    bool coords_channel) const {
        double mm = static_cast<double>(members_.size());
        double mu_hat = 0.0, second = 0.0;
        Matrix dmu_hat = coords_channel ? Matrix::Zero(m.n_atoms(), 3)
                                        : Matrix::Zero(m.n_atoms(), m.n_classes());
        Matrix dsecond = dmu_hat;
        std::vector<double> mus;
        mus.reserve(members_.size());
        for (const auto& member : members_) {
            SurrogateValue sv = combined_score(m, pocket, member);
            const Matrix& g = coords_channel ? sv.grad_coords : sv.grad_types;
            mu_hat += sv.value;
            second += sv.value * sv.value;
            dmu_hat += g;
            dsecond += 2.0 * sv.value * g;
            mus.push_back(sv.value);
        }
        mu_hat /= mm;
        second /= mm;
        dmu_hat /= mm;
        dsecond /= mm;

        if (mode_ == GuidanceMode::MaximizeMean) return dmu_hat;

        double aleatoric = member_sigma2(m);
        double epistemic = second - mu_hat * mu_hat;
        double total = aleatoric + epistemic;
        if (!(total > 0.0)) throw DomainError("degenerate predictive variance");

        Matrix dtotal = dsecond - 2.0 * mu_hat * dmu_hat;  // d epistemic
        if (coords_channel) {
            // d aleatoric / d x: depends only on the centroid distance.
            double d = m.coords.colwise().mean().norm();
            if (d > 1e-12) {
                double base = world_.params.sigma_base * world_.params.sigma_base;
                Eigen::RowVector3d dir = m.coords.colwise().mean() / d;
                Eigen::RowVector3d row =
                    (base / world_.params.spatial_scale) * dir /
                    static_cast<double>(m.n_atoms());
                dtotal.rowwise() += row;
            }
        }

        double resid = target - mu_hat;
        return (resid / total) * dmu_hat +
               (resid * resid / (2.0 * total * total) - 0.5 / total) * dtotal;
    }

    ToyWorld world_;
    std::vector<ToyPropertyParams> members_;
    GuidanceMode mode_;
    double target_;
};

}  // namespace

ToyWorld make_toy_world(std::uint64_t seed, int n_atoms, int n_classes, int n_templates,
                        double pocket_size) {
    if (n_atoms < 1 || n_classes < 2 || n_templates < 1)
        throw DimensionError("toy world sizes must be positive (n_classes >= 2)");
    if (!(pocket_size > 0.0)) throw DomainError("pocket_size must be positive");
    Rng rng(seed);

    auto unit_dir = [&rng]() {
        Eigen::RowVector3d v;
        do {
            v << rng.normal(), rng.normal(), rng.normal();
        } while (v.norm() < 1e-8);
        return Eigen::RowVector3d(v / v.norm());
    };

    Matrix pocket_coords(kPocketShellAtoms, 3);
    Matrix pocket_types = Matrix::Zero(kPocketShellAtoms, n_classes);
    for (int i = 0; i < kPocketShellAtoms; ++i) {
        pocket_coords.row(i) = unit_dir() * pocket_size;
        pocket_types(i, static_cast<int>(rng.uniform() * n_classes) % n_classes) = 1.0;
    }
    pocket_coords.rowwise() -= Eigen::RowVector3d(pocket_coords.colwise().mean());

    Matrix hotspots(kHotspotCount, 3);
    for (int h = 0; h < kHotspotCount; ++h) {
        double r = 0.5 * pocket_size * std::cbrt(rng.uniform());
        hotspots.row(h) = unit_dir() * r;
    }

    ToyPropertyParams params;
    params.hotspot_weights = Vector(n_classes);
    for (int k = 0; k < n_classes; ++k) params.hotspot_weights[k] = 0.5 + rng.uniform();
    params.kernel_width = 0.35 * pocket_size;
    params.spatial_scale = pocket_size;
    for (int k = 0; k < (n_classes + 1) / 2; ++k) params.easy_classes.push_back(k);

    TemplateLibrary library;
    for (int j = 0; j < n_templates; ++j) {
        Matrix coords(n_atoms, 3);
        Matrix types = Matrix::Zero(n_atoms, n_classes);
        for (int a = 0; a < n_atoms; ++a) {
            Eigen::RowVector3d pos = hotspots.row(a % kHotspotCount);
            pos += unit_dir() * (0.3 * pocket_size * rng.uniform());
            double norm = pos.norm();
            if (norm > pocket_size) pos *= pocket_size / norm;
            coords.row(a) = pos;
            types(a, static_cast<int>(rng.uniform() * n_classes) % n_classes) = 1.0;
        }
        library.templates.emplace_back(std::move(coords), std::move(types));
        library.ids.push_back("template-" + std::to_string(j));
    }

    PocketContext pocket(std::move(pocket_coords), std::move(pocket_types), std::move(hotspots));
    return ToyWorld{std::move(pocket), std::move(library), std::move(params)};
}

std::unique_ptr<OutputModel> attractor_output_model(const ToyWorld& world) {
    return std::make_unique<AttractorModel>(world);
}

std::unique_ptr<DenoiserX0> attractor_denoiser(const ToyWorld& world) {
    return std::make_unique<AttractorDenoiser>(world);
}

SurrogateValue affinity_surrogate(const HybridMolecule& m, const PocketContext& pocket,
                                  const ToyPropertyParams& params) {
    AffinityRaw raw = affinity_raw(m.coords, m.types, pocket, params);
    double raw_max = affinity_max_raw(m.n_atoms(), pocket, params);
    double span = params.affinity_floor - params.affinity_ceiling;  // negative
    if (raw_max <= 0.0) {
        return SurrogateValue{params.affinity_ceiling, Matrix::Zero(m.n_atoms(), 3),
                              Matrix::Zero(m.n_atoms(), m.n_classes())};
    }
    double scale = span / raw_max;
    return SurrogateValue{params.affinity_ceiling + scale * raw.value,
                          scale * raw.grad_coords, scale * raw.grad_types};
}

SurrogateValue sa_surrogate(const HybridMolecule& m, const ToyPropertyParams& params) {
    double frac = 0.0;
    for (Eigen::Index j = 0; j < m.n_atoms(); ++j)
        for (int k : params.easy_classes) frac += m.types(j, k);
    frac /= static_cast<double>(m.n_atoms());
    double z = params.sa_slope * frac + params.sa_offset;
    double sa = 1.0 / (1.0 + std::exp(-z));
    Matrix grad_types = Matrix::Zero(m.n_atoms(), m.n_classes());
    double d = sa * (1.0 - sa) * params.sa_slope / static_cast<double>(m.n_atoms());
    for (Eigen::Index j = 0; j < m.n_atoms(); ++j)
        for (int k : params.easy_classes) grad_types(j, k) = d;
    return SurrogateValue{sa, Matrix::Zero(m.n_atoms(), 3), std::move(grad_types)};
}

SurrogateValue combined_score(const HybridMolecule& m, const PocketContext& pocket,
                              const ToyPropertyParams& params) {
    SurrogateValue ds = affinity_surrogate(m, pocket, params);
    SurrogateValue sa = sa_surrogate(m, params);
    double ds_scaled = ds.value / -20.0;
    SurrogateValue out;
    out.value = ds_scaled * sa.value;
    out.grad_coords = (sa.value / -20.0) * ds.grad_coords;  // SA has no coords term
    out.grad_types = (sa.value / -20.0) * ds.grad_types + ds_scaled * sa.grad_types;
    return out;
}

std::unique_ptr<PropertyPredictor> toy_ensemble_predictor(const ToyWorld& world,
                                                          int ensemble_size,
                                                          std::uint64_t rng_init,
                                                          GuidanceMode mode,
                                                          double target_label) {
    return std::make_unique<ToyEnsemblePredictor>(world, ensemble_size, rng_init, mode,
                                                  target_label);
}

EnumeratedPosterior enumerate_discrete_posterior(
    const DiscreteParamState& theta,
    const std::function<double(const std::vector<int>&)>& log_likelihood) {
    Eigen::Index n = theta.probs.rows();
    Eigen::Index k = theta.probs.cols();
    if (n > 3 || k > 3)
        throw DimensionError("enumeration oracle capped at N <= 3, K <= 3");

    size_t count = 1;
    for (Eigen::Index i = 0; i < n; ++i) count *= static_cast<size_t>(k);

    std::vector<double> logw(count);
    double max_logw = -std::numeric_limits<double>::infinity();
    std::vector<int> assignment(static_cast<size_t>(n));
    for (size_t idx = 0; idx < count; ++idx) {
        size_t rem = idx;
        double log_prior = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int cls = static_cast<int>(rem % static_cast<size_t>(k));
            rem /= static_cast<size_t>(k);
            assignment[static_cast<size_t>(i)] = cls;
            log_prior += std::log(std::max(theta.probs(i, cls), 1e-300));
        }
        logw[idx] = log_prior + log_likelihood(assignment);
        max_logw = std::max(max_logw, logw[idx]);
    }

    EnumeratedPosterior out;
    out.joint.resize(count);
    double total = 0.0;
    for (size_t idx = 0; idx < count; ++idx) {
        out.joint[idx] = std::exp(logw[idx] - max_logw);
        total += out.joint[idx];
    }
    out.marginals = Matrix::Zero(n, k);
    for (size_t idx = 0; idx < count; ++idx) {
        out.joint[idx] /= total;
        size_t rem = idx;
        for (Eigen::Index i = 0; i < n; ++i) {
            int cls = static_cast<int>(rem % static_cast<size_t>(k));
            rem /= static_cast<size_t>(k);
            out.marginals(i, cls) += out.joint[idx];
        }
    }
    return out;
}

Matrix gaussian_tilt_closed_form(const ContinuousParamState& theta, double alpha, double c,
                                 const Matrix& x_star) {
    if (c < 0.0) throw DomainError("tilt strength c must be nonnegative");
    if (x_star.rows() != theta.mean.rows() || x_star.cols() != theta.mean.cols())
        throw ShapeError("gaussian_tilt_closed_form: shape mismatch");
    if (c == 0.0) return theta.mean;  // untilted: exactly the prior mean
    double rho = theta.precision + alpha;
    // N(theta, 1/rho) times exp(-c ||x - x*||^2): conjugate product.
    return (rho * theta.mean + 2.0 * c * x_star) / (rho + 2.0 * c);
}

std::string world_to_json(const ToyWorld& world) {
    auto matrix_to_json = [](const Matrix& m) {
        ordered_json rows = ordered_json::array();
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            ordered_json row = ordered_json::array();
            for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(round_sig9(m(i, j)));
            rows.push_back(std::move(row));
        }
        return rows;
    };

    ordered_json doc;
    ordered_json pocket;
    pocket["coords"] = matrix_to_json(world.pocket.coords);
    pocket["types"] = matrix_to_json(world.pocket.types);
    doc["pocket"] = std::move(pocket);
    doc["hotspots"] = matrix_to_json(world.pocket.hotspots);

    ordered_json templates = ordered_json::array();
    for (size_t i = 0; i < world.library.templates.size(); ++i) {
        ordered_json t;
        t["id"] = world.library.ids[i];
        t["coords"] = matrix_to_json(world.library.templates[i].coords);
        t["types"] = matrix_to_json(world.library.templates[i].types);
        templates.push_back(std::move(t));
    }
    doc["templates"] = std::move(templates);

    const auto& p = world.params;
    ordered_json params;
    ordered_json weights = ordered_json::array();
    for (Eigen::Index k = 0; k < p.hotspot_weights.size(); ++k)
        weights.push_back(round_sig9(p.hotspot_weights[k]));
    params["hotspot_weights"] = std::move(weights);
    params["kernel_width"] = round_sig9(p.kernel_width);
    params["affinity_floor"] = round_sig9(p.affinity_floor);
    params["affinity_ceiling"] = round_sig9(p.affinity_ceiling);
    params["sa_slope"] = round_sig9(p.sa_slope);
    params["sa_offset"] = round_sig9(p.sa_offset);
    params["easy_classes"] = p.easy_classes;
    params["member_jitter"] = round_sig9(p.member_jitter);
    params["sigma_base"] = round_sig9(p.sigma_base);
    params["spatial_scale"] = round_sig9(p.spatial_scale);
    doc["params"] = std::move(params);

    return doc.dump();
}

}  // namespace gbfn::toy
