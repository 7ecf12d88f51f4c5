#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "gbfn/analysis.hpp"
#include "gbfn/toy.hpp"

using namespace gbfn;
using namespace gbfn::analysis;

namespace {

Matrix random_simplex_rows(int n, int k, Rng& rng) {
    Matrix probs(n, k);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) probs(i, c) = 0.1 + rng.uniform();
        probs.row(i) /= probs.row(i).sum();
    }
    return probs;
}

TrajectoryRecord scored_record(int step, double t, double score, double mu) {
    TrajectoryRecord rec;
    rec.step = step;
    rec.t = t;
    rec.guidance_score = score;
    rec.predicted_mean = mu;
    return rec;
}

// Deliberately non-equivariant: leaks an absolute coordinate into the value
// and a fixed direction into the gradient.
class BrokenPredictor : public PropertyPredictor {
public:
    explicit BrokenPredictor(const PropertyPredictor& inner) : inner_(inner) {}

    std::vector<MemberPrediction> predict(const HybridMolecule& m,
                                          const PocketContext& pocket) const override {
        return inner_.predict(m, pocket);
    }
    Matrix grad_coords(const HybridMolecule& m, const PocketContext& pocket,
                       double target) const override {
        Matrix g = inner_.grad_coords(m, pocket, target);
        g(0, 0) += 1.0;
        return g;
    }
    Matrix grad_types(const Matrix& relaxed_types, const Matrix& coords,
                      const PocketContext& pocket, double target) const override {
        return inner_.grad_types(relaxed_types, coords, pocket, target);
    }
    double guidance_value(const HybridMolecule& m, const PocketContext& pocket,
                          double target) const override {
        return inner_.guidance_value(m, pocket, target) + m.coords(0, 0);
    }

private:
    const PropertyPredictor& inner_;
};

}  // namespace

TEST_CASE("random rotations are proper, seeded, and distinct") {
    Eigen::Matrix3d r1 = random_rotation(42);
    Eigen::Matrix3d r2 = random_rotation(42);
    Eigen::Matrix3d r3 = random_rotation(43);
    CHECK(r1 == r2);
    CHECK((r1 - r3).norm() > 1e-6);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        Eigen::Matrix3d r = random_rotation(seed);
        CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() < 1e-12);
        CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("identity rotation leaves no residual") {
    toy::ToyWorld world = toy::make_toy_world(21, 5, 3, 2, 4.0);
    auto predictor =
        toy::toy_ensemble_predictor(world, 4, 21, GuidanceMode::TargetLikelihood, 0.6);
    Rng rng(1);
    HybridMolecule m(rng.normal_matrix(5, 3), random_simplex_rows(5, 3, rng));
    EquivarianceReport rep = check_equivariance(*predictor, m, world.pocket,
                                                Eigen::Matrix3d::Identity(), 0.6);
    CHECK(rep.value_residual == 0.0);
    CHECK(rep.grad_residual == 0.0);
}

TEST_CASE("the shipped predictor is rotation-equivariant; the broken one is not") {
    toy::ToyWorld world = toy::make_toy_world(22, 5, 3, 2, 4.0);
    auto predictor =
        toy::toy_ensemble_predictor(world, 4, 22, GuidanceMode::TargetLikelihood, 0.6);
    BrokenPredictor broken(*predictor);

    Rng rng(2);
    HybridMolecule m(rng.normal_matrix(5, 3), random_simplex_rows(5, 3, rng));

    int broken_detected = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Eigen::Matrix3d r = random_rotation(seed);
        EquivarianceReport good = check_equivariance(*predictor, m, world.pocket, r, 0.6);
        CHECK(good.value_residual < 1e-10);
        CHECK(good.grad_residual < 1e-8);
        CHECK(good.value_ok);
        CHECK(good.grad_ok);
        EquivarianceReport bad = check_equivariance(broken, m, world.pocket, r, 0.6);
        if (bad.grad_residual > 0.01) ++broken_detected;
    }
    CHECK(broken_detected >= 19);
}

TEST_CASE("trajectory statistics on hand-built trajectories") {
    std::vector<TrajectoryRecord> a = {scored_record(1, 0.0, 0.0, 0.1),
                                       scored_record(2, 0.5, 4.0, 0.2)};
    std::vector<TrajectoryRecord> b = {scored_record(1, 0.0, 2.0, 0.3),
                                       scored_record(2, 0.5, 4.0, 0.4)};

    TrajectoryStats same = trajectory_stats({a, a, a});
    CHECK(same.var_score[0] == 0.0);
    CHECK(same.var_score[1] == 0.0);
    CHECK(same.mean_score[0] == 0.0);
    CHECK(same.terminal_mean == 4.0);
    CHECK(same.terminal_median == 4.0);

    TrajectoryStats mixed = trajectory_stats({a, b});
    CHECK(mixed.mean_score[0] == doctest::Approx(1.0));
    CHECK(mixed.var_score[0] == doctest::Approx(1.0));
    CHECK(mixed.mean_mu[0] == doctest::Approx(0.2));
    CHECK(mixed.times[1] == 0.5);

    // Deciles of 10 distinct values are the sorted values themselves.
    std::vector<std::vector<TrajectoryRecord>> ten;
    for (int i = 9; i >= 0; --i) ten.push_back({scored_record(1, 0.0, i, 0.0)});
    TrajectoryStats deciles = trajectory_stats(ten);
    REQUIRE(deciles.terminal_deciles.size() == 10);
    for (int d = 0; d < 10; ++d) CHECK(deciles.terminal_deciles[d] == double(d));
    CHECK(deciles.terminal_median == doctest::Approx(4.5));

    // Order of trajectories does not change terminal summaries.
    std::vector<std::vector<TrajectoryRecord>> shuffled(ten.rbegin(), ten.rend());
    TrajectoryStats again = trajectory_stats(shuffled);
    CHECK(again.terminal_deciles == deciles.terminal_deciles);
    CHECK(again.terminal_mean == deciles.terminal_mean);
}

TEST_CASE("trajectory statistics reject ragged or unscored input") {
    std::vector<TrajectoryRecord> two = {scored_record(1, 0.0, 0.0, 0.0),
                                         scored_record(2, 0.5, 1.0, 0.0)};
    std::vector<TrajectoryRecord> one = {scored_record(1, 0.0, 0.0, 0.0)};
    CHECK_THROWS_AS(trajectory_stats({two, one}), ShapeError);
    CHECK_THROWS_AS(trajectory_stats({}), DimensionError);

    TrajectoryRecord unscored;
    unscored.step = 1;
    CHECK_THROWS_AS(trajectory_stats({{unscored}}), InvalidStateError);
}

TEST_CASE("paired improvement metric") {
    auto [d0, w0] = improvement_metric({1.0, 2.0}, {1.0, 2.0});
    CHECK(d0 == 0.0);
    CHECK(w0 == 0.0);  // ties are not wins

    auto [d1, w1] = improvement_metric({2.0, 3.0}, {1.0, 2.0});
    CHECK(d1 == doctest::Approx(1.0));
    CHECK(w1 == 1.0);

    auto [d2, w2] = improvement_metric({2.0, 0.0}, {1.0, 1.0});
    CHECK(d2 == doctest::Approx(0.0));
    CHECK(w2 == 0.5);

    CHECK_THROWS_AS(improvement_metric({1.0}, {1.0, 2.0}), DimensionError);
    CHECK_THROWS_AS(improvement_metric({}, {}), DimensionError);
}

TEST_CASE("central differences recover simple analytic gradients") {
    Matrix point(1, 3);
    point << 1.0, 2.0, 3.0;
    Matrix grad = finite_difference_gradient(
        [](const Matrix& x) { return x.squaredNorm(); }, point, 1e-5);
    Matrix want(1, 3);
    want << 2.0, 4.0, 6.0;
    CHECK((grad - want).cwiseAbs().maxCoeff() < 1e-8);

    Matrix zero = finite_difference_gradient([](const Matrix&) { return 7.0; }, point, 1e-5);
    CHECK(zero.isZero(0.0));

    Matrix origin = Matrix::Zero(1, 1);
    Matrix dsin = finite_difference_gradient(
        [](const Matrix& x) { return std::sin(x(0, 0)); }, origin, 1e-6);
    CHECK(std::abs(dsin(0, 0) - 1.0) < 1e-10);

    CHECK_THROWS_AS(finite_difference_gradient(
                        [](const Matrix&) { return std::nan(""); }, point, 1e-5),
                    DomainError);
    CHECK_THROWS_AS(finite_difference_gradient(
                        [](const Matrix& x) { return x.sum(); }, point, 0.0),
                    DomainError);
}

TEST_CASE("stats render to a fixed csv layout") {
    std::vector<TrajectoryRecord> a = {scored_record(1, 0.0, 0.5, 0.25)};
    std::string csv = stats_to_csv(trajectory_stats({a}));
    CHECK(csv == "step,t,mean_score,var_score,mean_mu\n1,0,0.5,0,0.25\n");
}
