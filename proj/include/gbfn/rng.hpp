#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "gbfn/errors.hpp"

namespace gbfn {

// Counting random stream. Every public draw advances a counter that is logged
// in trajectory records, so a run can be audited draw-by-draw. Gaussian and
// Gumbel variates are produced from explicit inverse/Box-Muller transforms
// rather than std distributions, which keeps the byte-level output of a seed
// independent of the standard library version.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(mix(seed)) {}

    // Derives an independent stream from (base, stream_index) by counter-mode
    // splitting, so adding chains never perturbs earlier ones.
    static Rng split(std::uint64_t base, std::uint64_t stream) {
        return Rng(mix(base + 0x9e3779b97f4a7c15ULL * (stream + 1)));
    }

    // Uniform on (0, 1).
    double uniform() {
        ++counter_;
        return next_unit();
    }

    // Standard normal via Box-Muller; counts as one variate.
    double normal() {
        ++counter_;
        double u1 = next_unit();
        double u2 = next_unit();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Standard Gumbel.
    double gumbel() {
        ++counter_;
        return -std::log(-std::log(next_unit()));
    }

    // Index draw from an unnormalized nonnegative weight vector.
    int categorical(const Eigen::VectorXd& weights) {
        double total = weights.sum();
        if (!(total > 0.0)) {
            throw InvalidStateError("categorical draw from all-zero weight row");
        }
        ++counter_;
        double u = next_unit() * total;
        double acc = 0.0;
        for (int k = 0; k < weights.size(); ++k) {
            acc += weights[k];
            if (u <= acc) return k;
        }
        return static_cast<int>(weights.size()) - 1;
    }

    // Raw 64-bit draw for seeding derived streams.
    std::uint64_t draw_seed() {
        ++counter_;
        return gen_();
    }

    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols) {
        Eigen::MatrixXd m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
        return m;
    }

    std::uint64_t counter() const { return counter_; }

private:
    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    // Uniform on (0, 1): 53-bit mantissa, zero excluded.
    double next_unit() {
        std::uint64_t bits = gen_() >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    std::mt19937_64 gen_;
    std::uint64_t counter_ = 0;
};

}  // namespace gbfn
