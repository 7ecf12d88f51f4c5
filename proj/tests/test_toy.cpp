#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gbfn/analysis.hpp"
#include "gbfn/toy.hpp"

using namespace gbfn;
using namespace gbfn::toy;

namespace {

Matrix random_simplex_rows(int n, int k, Rng& rng, double floor = 0.1) {
    Matrix probs(n, k);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) probs(i, c) = floor + rng.uniform();
        probs.row(i) /= probs.row(i).sum();
    }
    return probs;
}

}  // namespace

TEST_CASE("worlds are pure functions of their seed") {
    ToyWorld a = make_toy_world(5, 6, 4, 3, 4.0);
    ToyWorld b = make_toy_world(5, 6, 4, 3, 4.0);
    ToyWorld c = make_toy_world(6, 6, 4, 3, 4.0);
    CHECK(world_to_json(a) == world_to_json(b));
    CHECK(world_to_json(a) != world_to_json(c));

    CHECK(a.pocket.center.norm() < 1e-9);
    CHECK(a.library.templates.size() == 3);
    for (const auto& tmpl : a.library.templates)
        for (Eigen::Index i = 0; i < tmpl.coords.rows(); ++i)
            CHECK(tmpl.coords.row(i).norm() <= 4.0 + 1e-12);

    ToyWorld single = make_toy_world(5, 6, 4, 1, 4.0);
    CHECK(single.library.templates.size() == 1);

    CHECK_THROWS_AS(make_toy_world(5, 0, 4, 3, 4.0), DimensionError);
    CHECK_THROWS_AS(make_toy_world(5, 6, 4, 3, 0.0), DomainError);
}

TEST_CASE("attractor model interpolates belief and template") {
    ToyWorld world = make_toy_world(5, 6, 4, 2, 4.0);
    auto model = attractor_output_model(world);

    Rng rng(1);
    ContinuousParamState theta_x(rng.normal_matrix(6, 3), 1.0);
    DiscreteParamState theta_v(random_simplex_rows(6, 4, rng));

    // t = 0: identity on the belief.
    HybridMolecule at0 = model->predict(theta_x, theta_v, world.pocket, 0.0);
    CHECK(at0.coords == theta_x.mean);
    CHECK((at0.types - theta_v.probs).cwiseAbs().maxCoeff() < 1e-12);

    // t = 1 with the belief on template 1: exact projection.
    const auto& tmpl = world.library.templates[1];
    ContinuousParamState on(tmpl.coords, 1.0);
    HybridMolecule at1 = model->predict(on, theta_v, world.pocket, 1.0);
    CHECK(at1.coords == tmpl.coords);
    CHECK((at1.types - tmpl.types).cwiseAbs().maxCoeff() < 1e-12);

    // Equidistant belief: the lowest-index template wins the tie.
    Matrix mid =
        0.5 * (world.library.templates[0].coords + world.library.templates[1].coords);
    ContinuousParamState between(mid, 1.0);
    HybridMolecule tie = model->predict(between, theta_v, world.pocket, 1.0);
    CHECK(tie.coords == world.library.templates[0].coords);
}

TEST_CASE("affinity kernel decays as stated and respects zero weights") {
    ToyWorld world = make_toy_world(7, 1, 3, 1, 4.0);
    ToyPropertyParams params = world.params;
    double s = params.kernel_width;

    // One atom, fully on the heaviest class, exactly on hotspot 0.
    int best_class = 0;
    params.hotspot_weights.maxCoeff(&best_class);
    Matrix types = Matrix::Zero(1, 3);
    types(0, best_class) = 1.0;

    HybridMolecule on_spot(world.pocket.hotspots.row(0), types);
    SurrogateValue at0 = affinity_surrogate(on_spot, world.pocket, params);

    Matrix moved = world.pocket.hotspots.row(0);
    moved(0, 0) += 3.0 * s;
    HybridMolecule away(moved, types);
    SurrogateValue at3s = affinity_surrogate(away, world.pocket, params);

    // Contribution of hotspot 0 shrinks by e^{-4.5}; the other hotspots make
    // the full values only approximately proportional, so compare the
    // single-hotspot world directly by masking: rebuild with one hotspot.
    PocketContext one_spot(world.pocket.coords, world.pocket.types,
                           world.pocket.hotspots.topRows(1));
    double v0 = affinity_surrogate(on_spot, one_spot, params).value - params.affinity_ceiling;
    double v3 = affinity_surrogate(away, one_spot, params).value - params.affinity_ceiling;
    CHECK(v3 / v0 == doctest::Approx(std::exp(-4.5)).epsilon(1e-9));
    CHECK(at0.value <= at3s.value);  // lower (more negative) is better

    ToyPropertyParams zero = params;
    zero.hotspot_weights.setZero();
    SurrogateValue none = affinity_surrogate(on_spot, world.pocket, zero);
    CHECK(none.value == zero.affinity_ceiling);
    CHECK(none.grad_coords.isZero(0.0));
    CHECK(none.grad_types.isZero(0.0));
}

TEST_CASE("affinity coordinate gradients match finite differences") {
    ToyWorld world = make_toy_world(8, 4, 3, 1, 4.0);
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        Matrix coords = 1.5 * rng.normal_matrix(4, 3);
        Matrix types = random_simplex_rows(4, 3, rng);
        HybridMolecule m(coords, types);
        SurrogateValue sv = affinity_surrogate(m, world.pocket, world.params);
        auto value = [&](const Matrix& x) {
            return affinity_surrogate(HybridMolecule(x, types), world.pocket, world.params)
                .value;
        };
        Matrix fd = analysis::finite_difference_gradient(value, coords, 1e-6);
        CHECK((sv.grad_coords - fd).norm() / std::max(1e-9, fd.norm()) < 1e-6);
    }
}

TEST_CASE("synthetic-accessibility surrogate and its gradient") {
    ToyWorld world = make_toy_world(9, 4, 4, 1, 4.0);
    ToyPropertyParams params = world.params;
    params.easy_classes = {0, 1};
    params.sa_slope = 4.0;
    params.sa_offset = -2.0;

    // All mass on easy classes: logistic(4 * 1 - 2) = logistic(2).
    Matrix easy = Matrix::Zero(4, 4);
    for (int i = 0; i < 4; ++i) easy(i, i % 2) = 1.0;
    HybridMolecule m_easy(Matrix::Zero(4, 3), easy);
    CHECK(sa_surrogate(m_easy, params).value ==
          doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));

    ToyPropertyParams flat = params;
    flat.sa_slope = 0.0;
    SurrogateValue sv_flat = sa_surrogate(m_easy, flat);
    CHECK(sv_flat.value == doctest::Approx(1.0 / (1.0 + std::exp(2.0))).epsilon(1e-12));
    CHECK(sv_flat.grad_types.isZero(0.0));

    // Tangent-direction finite differences on the simplex.
    Rng rng(3);
    double h = 1e-6;
    for (int trial = 0; trial < 50; ++trial) {
        Matrix types = random_simplex_rows(4, 4, rng);
        HybridMolecule m(Matrix::Zero(4, 3), types);
        SurrogateValue sv = sa_surrogate(m, params);
        for (int k = 1; k < 4; ++k) {
            Matrix up = types, down = types;
            up(0, k) += h;
            up(0, 0) -= h;
            down(0, k) -= h;
            down(0, 0) += h;
            double fd = (sa_surrogate(HybridMolecule(Matrix::Zero(4, 3), up), params).value -
                         sa_surrogate(HybridMolecule(Matrix::Zero(4, 3), down), params).value) /
                        (2.0 * h);
            double want = sv.grad_types(0, k) - sv.grad_types(0, 0);
            CHECK(std::abs(fd - want) < 1e-6);
        }
    }
}

TEST_CASE("combined score follows the product formula and stays below 0.6") {
    ToyWorld world = make_toy_world(10, 5, 4, 2, 4.0);
    Rng rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        Matrix coords = 2.0 * rng.normal_matrix(5, 3);
        Matrix types = random_simplex_rows(5, 4, rng);
        HybridMolecule m(coords, types);
        SurrogateValue ds = affinity_surrogate(m, world.pocket, world.params);
        SurrogateValue sa = sa_surrogate(m, world.params);
        SurrogateValue sc = combined_score(m, world.pocket, world.params);
        CHECK(sc.value == doctest::Approx(ds.value / -20.0 * sa.value).epsilon(1e-12));
        CHECK(sc.value >= 0.0);
        CHECK(sc.value <= 0.6);
        CHECK(ds.value >= world.params.affinity_floor - 1e-12);
        CHECK(ds.value <= world.params.affinity_ceiling + 1e-12);
    }
    // Hand case: DS = -10, SA = 0.8 gives 0.4 by the formula.
    CHECK(-10.0 / -20.0 * 0.8 == doctest::Approx(0.4));
}

TEST_CASE("ensemble predictor: spread, jitter monotonicity, determinism") {
    ToyWorld world = make_toy_world(11, 4, 3, 2, 4.0);
    Rng rng(5);
    Matrix coords = rng.normal_matrix(4, 3);
    Matrix types = random_simplex_rows(4, 3, rng);
    HybridMolecule m(coords, types);

    ToyWorld no_jitter = world;
    no_jitter.params.member_jitter = 0.0;
    auto lone = toy_ensemble_predictor(no_jitter, 1, 11, GuidanceMode::TargetLikelihood, 0.6);
    PropertyPrediction p = variance_decompose(lone->predict(m, world.pocket));
    CHECK(p.epistemic == 0.0);
    CHECK(p.aleatoric > 0.0);

    ToyWorld wide = world;
    wide.params.member_jitter *= 4.0;
    auto narrow = toy_ensemble_predictor(world, 8, 11, GuidanceMode::TargetLikelihood, 0.6);
    auto broad = toy_ensemble_predictor(wide, 8, 11, GuidanceMode::TargetLikelihood, 0.6);
    double mean_narrow = 0.0, mean_broad = 0.0;
    Rng state_rng(6);
    for (int i = 0; i < 100; ++i) {
        HybridMolecule s(state_rng.normal_matrix(4, 3), random_simplex_rows(4, 3, state_rng));
        mean_narrow += variance_decompose(narrow->predict(s, world.pocket)).epistemic;
        mean_broad += variance_decompose(broad->predict(s, world.pocket)).epistemic;
    }
    CHECK(mean_broad > mean_narrow);

    auto again = toy_ensemble_predictor(world, 8, 11, GuidanceMode::TargetLikelihood, 0.6);
    auto a = narrow->predict(m, world.pocket);
    auto b = again->predict(m, world.pocket);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].mu == b[i].mu);
        CHECK(a[i].sigma2 == b[i].sigma2);
    }
}

TEST_CASE("member noise grows away from the pocket center") {
    ToyWorld world = make_toy_world(11, 4, 3, 2, 4.0);
    auto predictor = toy_ensemble_predictor(world, 4, 11, GuidanceMode::TargetLikelihood, 0.6);
    Matrix types = Matrix::Constant(4, 3, 1.0 / 3);
    HybridMolecule centered(Matrix::Zero(4, 3), types);
    HybridMolecule offset(Matrix::Constant(4, 3, 2.0), types);
    double near = variance_decompose(predictor->predict(centered, world.pocket)).aleatoric;
    double far = variance_decompose(predictor->predict(offset, world.pocket)).aleatoric;
    CHECK(far > near);
}

TEST_CASE("enumeration oracle handles the small cases exactly") {
    // Uniform belief, constant likelihood: uniform posterior.
    DiscreteParamState uniform(Matrix::Constant(2, 3, 1.0 / 3));
    EnumeratedPosterior flat =
        enumerate_discrete_posterior(uniform, [](const std::vector<int>&) { return 1.7; });
    for (double p : flat.joint) CHECK(p == doctest::Approx(1.0 / 9).epsilon(1e-12));
    CHECK((flat.marginals.array() - 1.0 / 3).abs().maxCoeff() < 1e-12);

    // Single-atom Bayes rule.
    DiscreteParamState half(Matrix::Constant(1, 2, 0.5));
    EnumeratedPosterior tilted = enumerate_discrete_posterior(
        half, [](const std::vector<int>& a) { return a[0] == 0 ? std::log(4.0) : 0.0; });
    CHECK(tilted.marginals(0, 0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(tilted.marginals(0, 1) == doctest::Approx(0.2).epsilon(1e-12));

    // Factorized likelihood: joint is the product of per-atom tilts.
    Rng rng(7);
    Matrix probs = random_simplex_rows(3, 3, rng);
    Matrix w = rng.normal_matrix(3, 3);
    EnumeratedPosterior joint = enumerate_discrete_posterior(
        DiscreteParamState(probs), [&](const std::vector<int>& a) {
            double s = 0.0;
            for (size_t i = 0; i < a.size(); ++i) s += w(static_cast<int>(i), a[i]);
            return s;
        });
    Matrix per_atom(3, 3);
    for (int i = 0; i < 3; ++i) {
        Eigen::Array3d t = probs.row(i).transpose().array() * w.row(i).transpose().array().exp();
        per_atom.row(i) = (t / t.sum()).transpose();
    }
    CHECK((joint.marginals - per_atom).cwiseAbs().maxCoeff() < 1e-12);
    for (size_t idx = 0; idx < joint.joint.size(); ++idx) {
        size_t rem = idx;
        double prod = 1.0;
        for (int i = 0; i < 3; ++i) {
            prod *= per_atom(i, static_cast<int>(rem % 3));
            rem /= 3;
        }
        CHECK(joint.joint[idx] == doctest::Approx(prod).epsilon(1e-10));
    }

    DiscreteParamState too_big(Matrix::Constant(4, 2, 0.5));
    CHECK_THROWS_AS(
        enumerate_discrete_posterior(too_big, [](const std::vector<int>&) { return 0.0; }),
        DimensionError);
}

TEST_CASE("tilted-Gaussian closed form hand values") {
    // Posterior precision 1 (rho + alpha = 1), tilt c = 0.5 toward x* = 2:
    // mean = 2 c x* / (1 + 2 c) = 1.
    ContinuousParamState theta(Matrix::Zero(1, 3), 0.4);
    Matrix x_star = Matrix::Constant(1, 3, 2.0);
    Matrix tilted = gaussian_tilt_closed_form(theta, 0.6, 0.5, x_star);
    CHECK(tilted.isApproxToConstant(1.0, 1e-12));

    CHECK(gaussian_tilt_closed_form(theta, 0.6, 0.0, x_star) == theta.mean);
    CHECK(gaussian_tilt_closed_form(theta, 0.6, 0.9, theta.mean) == theta.mean);
    CHECK_THROWS_AS(gaussian_tilt_closed_form(theta, 0.6, -0.1, x_star), DomainError);
}
