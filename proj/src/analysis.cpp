#include "gbfn/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gbfn/rng.hpp"

namespace gbfn::analysis {

namespace {

double record_score(const TrajectoryRecord& rec) {
    if (!rec.guidance_score)
        throw InvalidStateError("trajectory record at step " + std::to_string(rec.step) +
                                " has no guidance score");
    return *rec.guidance_score;
}

}  // namespace

Eigen::Matrix3d random_rotation(std::uint64_t seed) {
    Rng rng(seed);
    Eigen::Matrix3d g = rng.normal_matrix(3, 3);
    Eigen::HouseholderQR<Eigen::Matrix3d> qr(g);
    Eigen::Matrix3d q = qr.householderQ();
    Eigen::Matrix3d r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Sign fix keeps the Haar distribution; a final column flip lands in SO(3).
    for (int i = 0; i < 3; ++i)
        if (r(i, i) < 0.0) q.col(i) *= -1.0;
    if (q.determinant() < 0.0) q.col(2) *= -1.0;
    return q;
}

EquivarianceReport check_equivariance(const PropertyPredictor& predictor,
                                      const HybridMolecule& m, const PocketContext& pocket,
                                      const Eigen::Matrix3d& rotation, double target,
                                      double value_tol, double grad_tol) {
    auto rotate_about_center = [&](const Matrix& coords) {
        Matrix centered = coords.rowwise() - pocket.center;
        Matrix out = centered * rotation.transpose();
        out.rowwise() += pocket.center;
        return out;
    };

    HybridMolecule m_rot(rotate_about_center(m.coords), m.types);
    PocketContext pocket_rot(rotate_about_center(pocket.coords), pocket.types,
                             rotate_about_center(pocket.hotspots));

    double v0 = predictor.guidance_value(m, pocket, target);
    double v1 = predictor.guidance_value(m_rot, pocket_rot, target);
    Matrix g0 = predictor.grad_coords(m, pocket, target);
    Matrix g1 = predictor.grad_coords(m_rot, pocket_rot, target);

    EquivarianceReport report;
    report.rotation = rotation;
    report.value_residual = std::abs(v1 - v0);
    report.grad_residual = (g1 - g0 * rotation.transpose()).norm();
    report.value_ok = report.value_residual < value_tol;
    report.grad_ok = report.grad_residual < grad_tol;
    return report;
}

TrajectoryStats trajectory_stats(
    const std::vector<std::vector<TrajectoryRecord>>& trajectories) {
    if (trajectories.empty()) throw DimensionError("trajectory_stats: no trajectories");
    size_t steps = trajectories.front().size();
    if (steps == 0) throw DimensionError("trajectory_stats: empty trajectory");
    for (const auto& traj : trajectories)
        if (traj.size() != steps)
            throw ShapeError("trajectory_stats: trajectories have unequal step counts");

    double n = static_cast<double>(trajectories.size());
    TrajectoryStats stats;
    stats.mean_score.resize(steps);
    stats.var_score.resize(steps);
    stats.mean_mu.resize(steps);
    stats.times.resize(steps);
    for (size_t s = 0; s < steps; ++s) {
        double sum = 0.0, sum_sq = 0.0, mu_sum = 0.0;
        for (const auto& traj : trajectories) {
            double v = record_score(traj[s]);
            sum += v;
            sum_sq += v * v;
            mu_sum += traj[s].predicted_mean.value_or(std::nan(""));
        }
        double mean = sum / n;
        stats.mean_score[s] = mean;
        stats.var_score[s] = std::max(0.0, sum_sq / n - mean * mean);
        stats.mean_mu[s] = mu_sum / n;
        stats.times[s] = trajectories.front()[s].t;
    }

    std::vector<double> terminal;
    terminal.reserve(trajectories.size());
    for (const auto& traj : trajectories) terminal.push_back(record_score(traj.back()));
    std::sort(terminal.begin(), terminal.end());
    stats.terminal_mean =
        std::accumulate(terminal.begin(), terminal.end(), 0.0) / n;
    size_t sz = terminal.size();
    stats.terminal_median = sz % 2 == 1
                                ? terminal[sz / 2]
                                : 0.5 * (terminal[sz / 2 - 1] + terminal[sz / 2]);
    stats.terminal_deciles.resize(10);
    for (int d = 1; d <= 10; ++d) {
        size_t idx = static_cast<size_t>(
            std::ceil(static_cast<double>(d) * static_cast<double>(sz) / 10.0));
        stats.terminal_deciles[static_cast<size_t>(d - 1)] =
            terminal[std::min(sz, std::max<size_t>(idx, 1)) - 1];
    }
    return stats;
}

std::pair<double, double> improvement_metric(const std::vector<double>& guided,
                                             const std::vector<double>& unguided) {
    if (guided.size() != unguided.size() || guided.empty())
        throw DimensionError("improvement_metric: score arrays must be paired and nonempty");
    double n = static_cast<double>(guided.size());
    double delta = 0.0;
    double wins = 0.0;
    for (size_t i = 0; i < guided.size(); ++i) {
        delta += guided[i] - unguided[i];
        if (guided[i] > unguided[i]) wins += 1.0;  // strict: ties are not wins
    }
    return {delta / n, wins / n};
}

Matrix finite_difference_gradient(const std::function<double(const Matrix&)>& f,
                                  const Matrix& point, double h) {
    if (!(h > 0.0)) throw DomainError("finite_difference_gradient: h must be positive");
    Matrix grad(point.rows(), point.cols());
    Matrix probe = point;
    for (Eigen::Index i = 0; i < point.rows(); ++i) {
        for (Eigen::Index j = 0; j < point.cols(); ++j) {
            probe(i, j) = point(i, j) + h;
            double up = f(probe);
            probe(i, j) = point(i, j) - h;
            double down = f(probe);
            probe(i, j) = point(i, j);
            if (!std::isfinite(up) || !std::isfinite(down))
                throw DomainError("finite_difference_gradient: non-finite function value");
            grad(i, j) = (up - down) / (2.0 * h);
        }
    }
    return grad;
}

std::string stats_to_csv(const TrajectoryStats& stats) {
    std::ostringstream out;
    out.precision(17);
    out << "step,t,mean_score,var_score,mean_mu\n";
    for (size_t s = 0; s < stats.mean_score.size(); ++s) {
        out << (s + 1) << ',' << stats.times[s] << ',' << stats.mean_score[s] << ','
            << stats.var_score[s] << ',' << stats.mean_mu[s] << '\n';
    }
    return out.str();
}

}  // namespace gbfn::analysis
