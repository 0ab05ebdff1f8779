#ifndef MFG_TESTS_SUPPORT_HPP
#define MFG_TESTS_SUPPORT_HPP

// Shared fixtures for the unit and acceptance suites: the default initial
// cloud, test-function seminorms, and the replica-averaged weak-residual
// estimator used by the refinement studies.

#include "mfg/fokker_planck.hpp"
#include "mfg/mfg_driver.hpp"

namespace mfg::testsup {

/// Standard initial condition: centered goodwill with 0.5 spread and flat
/// personal histories.
inline EmpiricalMeasure default_m0(const AdvertisingModel& m, std::size_t n,
                                   std::uint64_t seed) {
    std::vector<LiftedState> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        pts.push_back(constant_history_state(0.5 * rng::normal(seed, i, 0), m.m_mem, m.d));
    return EmpiricalMeasure::uniform(std::move(pts));
}

/// Scale of a test function: gradient plus adjoint-pairing seminorms.
inline double seminorm(const TestFunction& f) {
    if (f.kind == TestFunction::Kind::constant) return 1.0;
    return norm2(f.b_zeta) + norm2(f.atb_zeta);
}

/// Replica-averaged residual level: the mean over `replicas` independent
/// ensembles of the worst seminorm-normalized max-residual across the
/// 8-function basis. Averaging tames the realization scatter of the
/// sup-martingale statistic so the step/ensemble scaling is visible.
inline double residual_level(const AdvertisingModel& m, const FeedbackPolicy* policy,
                             std::size_t n_paths, double dt, std::uint64_t seed,
                             int replicas = 4) {
    const auto basis = make_test_basis(m.op);
    double acc = 0.0;
    for (int r = 0; r < replicas; ++r) {
        const EmpiricalMeasure m0 = default_m0(m, n_paths, rng::fold(seed, 555));
        const auto series =
            weak_residual_stream(m, policy, m0, dt, n_paths, rng::fold(seed, 1000 + r), basis);
        double worst = 0.0;
        for (std::size_t f = 0; f < basis.size(); ++f)
            worst = std::max(worst, series[f].max_r / seminorm(basis[f]));
        acc += worst;
    }
    return acc / static_cast<double>(replicas);
}

} // namespace mfg::testsup

#endif
