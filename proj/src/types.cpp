#include "gbfn/types.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace gbfn {

std::pair<ContinuousParamState, DiscreteParamState> new_prior_state(int n_atoms, int n_classes,
                                                                    double rho_0) {
    if (n_atoms < 1) throw DimensionError("n_atoms must be >= 1");
    if (n_classes < 2) throw DimensionError("n_classes must be >= 2");
    if (!(rho_0 > 0.0)) throw DomainError("rho_0 must be positive");
    Matrix mean = Matrix::Zero(n_atoms, 3);
    Matrix probs = Matrix::Constant(n_atoms, n_classes, 1.0 / n_classes);
    return {ContinuousParamState(std::move(mean), rho_0), DiscreteParamState(std::move(probs))};
}

AccuracySchedule build_schedule(int n_steps, double sigma1, double beta1, double rho_0) {
    if (n_steps < 1) throw DimensionError("n_steps must be >= 1");
    if (!(sigma1 > 0.0 && sigma1 < 1.0)) throw DomainError("sigma1 must lie in (0, 1)");
    if (!(beta1 > 0.0)) throw DomainError("beta1 must be positive");
    if (!(rho_0 > 0.0)) throw DomainError("rho_0 must be positive");

    AccuracySchedule s;
    s.n_steps = n_steps;
    s.rho_0 = rho_0;
    double n = static_cast<double>(n_steps);
    double step_factor = 1.0 - std::pow(sigma1, 2.0 / n);
    for (int i = 1; i <= n_steps; ++i) {
        s.alpha_coords.push_back(std::pow(sigma1, -2.0 * i / n) * step_factor);
        s.alpha_types.push_back(beta1 * (2.0 * i - 1.0) / (n * n));
        s.times.push_back((i - 1.0) / n);
    }
    return s;
}

std::string molecule_to_text(const HybridMolecule& m) {
    std::ostringstream out;
    out << m.n_atoms() << " " << m.n_classes() << "\n";
    auto classes = m.class_indices();
    char buf[128];
    for (Eigen::Index i = 0; i < m.n_atoms(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %d\n", m.coords(i, 0), m.coords(i, 1),
                      m.coords(i, 2), classes[static_cast<size_t>(i)]);
        out << buf;
    }
    return out.str();
}

HybridMolecule molecule_from_text(const std::string& text) {
    std::istringstream in(text);
    Eigen::Index n = 0, k = 0;
    if (!(in >> n >> k)) throw IoError("molecule dump: malformed header");
    if (n < 1 || k < 2) throw IoError("molecule dump: invalid sizes in header");
    Matrix coords(n, 3);
    Matrix types = Matrix::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        int cls = -1;
        if (!(in >> coords(i, 0) >> coords(i, 1) >> coords(i, 2) >> cls))
            throw IoError("molecule dump: truncated atom line " + std::to_string(i));
        if (cls < 0 || cls >= k) throw IoError("molecule dump: class index out of range");
        types(i, cls) = 1.0;
    }
    return HybridMolecule(std::move(coords), std::move(types));
}

}  // namespace gbfn
