#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "mfg/models.hpp"
#include "mfg/rng.hpp"

using namespace mfg;

namespace {
EmpiricalMeasure dirac_at(double y0, const AdvertisingModel& m) {
    return EmpiricalMeasure::dirac(constant_history_state(y0, m.m_mem, m.d));
}
} // namespace

TEST_CASE("presets construct and validate") {
    CHECK_NOTHROW((void)make_advertising_default());
    CHECK_NOTHROW((void)make_zero_delay_oracle());
    CHECK_NOTHROW((void)make_decoupled());
    CHECK_THROWS_AS((void)make_preset("nope"), std::invalid_argument);
    AdvertisingModel bad;
    bad.nu = 0.0;
    CHECK_THROWS_AS(finalize_model(bad), std::invalid_argument);
    AdvertisingModel bad2;
    bad2.c0 = 0.0;
    CHECK_THROWS_AS(finalize_model(bad2), std::invalid_argument);
}

TEST_CASE("running cost: closed-form values") {
    const AdvertisingModel m = make_advertising_default();
    const LiftedState x = constant_history_state(0.0, m.m_mem, m.d);
    const EmpiricalMeasure mu = dirac_at(0.0, m);
    // logistic at 0 gives -1/2, the kernel against its own atom gives +1.
    CHECK(running_cost(m, x, 0.0, mu) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(running_cost(m, x, 2.0, mu) - running_cost(m, x, 0.0, mu) ==
          doctest::Approx(m.nu * 4.0));
    AdvertisingModel m3 = m;
    m3.nu = 3.0;
    finalize_model(m3);
    CHECK(running_cost(m3, x, 2.0, mu) - running_cost(m3, x, 0.0, mu) == doctest::Approx(12.0));
    CHECK_THROWS_AS((void)running_cost(m, x, -1.0, mu), std::invalid_argument);
}

TEST_CASE("interaction term stays in (0, 1] for unit strength") {
    const AdvertisingModel m = make_advertising_default();
    for (std::uint64_t k = 0; k < 50; ++k) {
        const double x0 = std::clamp(6.0 * rng::normal(77, k, 0), -8.0, 8.0);
        const EmpiricalMeasure mu =
            dirac_at(std::clamp(3.0 * rng::normal(78, k, 0), -8.0, 8.0), m);
        double inter = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            const double dz = x0 - mu.particles[i].y0;
            inter += mu.weights[i] * std::exp(-0.5 * dz * dz);
        }
        CHECK(inter > 0.0);
        CHECK(inter <= 1.0 + 1e-15);
        // And the full coupling term carries it on top of the logistic part.
        CHECK(coupling_F(m, x0, mu) ==
              doctest::Approx(-1.0 / (1.0 + std::exp(x0)) + inter).epsilon(1e-12));
    }
}

TEST_CASE("terminal cost: tail values and Lipschitz quotient") {
    const AdvertisingModel m = make_advertising_default();
    const LiftedState far = constant_history_state(10.0, m.m_mem, m.d);
    CHECK(std::fabs(terminal_cost(m, far, dirac_at(10.0, m)) - 1.0) < 1e-4);
    const LiftedState x0 = constant_history_state(0.0, m.m_mem, m.d);
    CHECK(terminal_cost(m, x0, dirac_at(5.0, m)) ==
          doctest::Approx(-0.5 + std::exp(-12.5)).epsilon(1e-12));
    // Sampled weak-norm Lipschitz quotient is finite.
    double worst = 0.0;
    const EmpiricalMeasure mu = dirac_at(0.3, m);
    for (std::uint64_t k = 0; k < 40; ++k) {
        const LiftedState a = constant_history_state(2.0 * rng::normal(80, k, 0), m.m_mem, m.d);
        const LiftedState b = constant_history_state(2.0 * rng::normal(81, k, 0), m.m_mem, m.d);
        Vec dv = m.op.weighted(a);
        const Vec bv = m.op.weighted(b);
        for (std::size_t i = 0; i < dv.size(); ++i) dv[i] -= bv[i];
        const double den = weak_norm_weighted(m.op, dv);
        if (den < 1e-12) continue;
        worst = std::max(worst,
                         std::fabs(terminal_cost(m, a, mu) - terminal_cost(m, b, mu)) / den);
    }
    CHECK(worst < 100.0);
    CHECK(worst > 0.0);
}

TEST_CASE("hamiltonian branches and closed-form gap") {
    const AdvertisingModel m = make_advertising_default();
    for (std::uint64_t k = 0; k < 20; ++k) {
        const double y0 = 2.0 * rng::normal(90, k, 0);
        const double z = rng::normal(90, k, 1);
        const double p0 = 2.0 * rng::normal(90, k, 2);
        const double base = -m.b0(y0, z) * p0 - y0 * p0;
        const double h = hamiltonian0(m, y0, z, p0);
        if (p0 < 0.0)
            CHECK(h - base == doctest::Approx(m.c0 * m.c0 * p0 * p0 / (4.0 * m.nu)));
        else
            CHECK(h == doctest::Approx(base));
    }
}

TEST_CASE("closed-loop drift equals minus the shifted drift at the optimizer") {
    const AdvertisingModel m = make_advertising_default();
    for (std::uint64_t k = 0; k < 20; ++k) {
        const double y0 = rng::normal(91, k, 0);
        const double z = rng::normal(91, k, 1);
        const double p0 = 2.0 * rng::normal(91, k, 2);
        const double alpha = std::max(0.0, -m.c0 * p0 / (2.0 * m.nu));
        CHECK(hamiltonian0_p(m, y0, z, p0) ==
              doctest::Approx(-(m.b0(y0, z) + y0 + m.c0 * alpha)));
    }
}

TEST_CASE("assumption audit passes on the default model") {
    const AdvertisingModel m = make_advertising_default();
    const AssumptionReport rep = audit_assumptions(m, 2024, 40);
    for (const auto& a : rep.audits) {
        INFO(a.name, " worst=", a.worst, " detail=", a.detail);
        CHECK(a.pass);
    }
    CHECK(rep.all_pass());
}

TEST_CASE("sign-flipped coupling fails monotonicity with an explicit witness") {
    AdvertisingModel m = make_advertising_default();
    m.coupling_strength = -1.0;
    finalize_model(m);
    CouplingFn F = [&](const LiftedState& x, const EmpiricalMeasure& mu) {
        return coupling_F(m, x.y0, mu);
    };
    // Explicit witness: diracs at 0 and 1.
    const double pr = coupling_pairing(F, dirac_at(0.0, m), dirac_at(1.0, m));
    CHECK(pr < -1e-9);
    CHECK(pr == doctest::Approx(-2.0 * (1.0 - std::exp(-0.5))).epsilon(1e-10));
}

TEST_CASE("gaussian kernel Gram matrix is PSD (monotonicity oracle)") {
    // Positive-definiteness of the Gaussian kernel makes the interaction
    // pairing a nonnegative quadratic form.
    const std::size_t n = 24;
    Vec pts(n);
    for (std::size_t i = 0; i < n; ++i) pts[i] = 4.0 * rng::normal(123, i, 0);
    Mat gram(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double dz = pts[i] - pts[j];
            gram(i, j) = std::exp(-0.5 * dz * dz);
        }
    const SymEigen eg = jacobi_eigensym(gram);
    CHECK(eg.values.back() >= -1e-9);
}

TEST_CASE("gaussian coupling pairing nonnegative over random pairs") {
    const AdvertisingModel m = make_advertising_default();
    CouplingFn F = CouplingSpec{CouplingSpec::Kind::gaussian_goodwill, 1.0}.build();
    for (std::uint64_t k = 0; k < 50; ++k) {
        std::vector<LiftedState> p1, p2;
        for (std::size_t i = 0; i < 8; ++i) {
            p1.push_back(constant_history_state(2.0 * rng::normal(200 + k, i, 0), m.m_mem, m.d));
            p2.push_back(constant_history_state(2.0 * rng::normal(300 + k, i, 0), m.m_mem, m.d));
        }
        CHECK(coupling_pairing(F, EmpiricalMeasure::uniform(p1), EmpiricalMeasure::uniform(p2)) >=
              -1e-9);
    }
}

TEST_CASE("separable vector coupling: pairing equals the moment-difference norm") {
    const AdvertisingModel m = make_advertising_default();
    CouplingFn F2 = CouplingSpec{CouplingSpec::Kind::separable_vector, 1.0}.build();
    for (std::uint64_t k = 0; k < 20; ++k) {
        std::vector<LiftedState> p1, p2;
        for (std::size_t i = 0; i < 6; ++i) {
            p1.push_back(constant_history_state(2.0 * rng::normal(400 + k, i, 0), m.m_mem, m.d));
            p2.push_back(constant_history_state(2.0 * rng::normal(500 + k, i, 0), m.m_mem, m.d));
        }
        const EmpiricalMeasure mu1 = EmpiricalMeasure::uniform(p1);
        const EmpiricalMeasure mu2 = EmpiricalMeasure::uniform(p2);
        // Oracle: expand the h2 moments of both measures directly.
        double a1 = 0.0, b1 = 0.0, a2 = 0.0, b2 = 0.0;
        for (std::size_t i = 0; i < mu1.size(); ++i) {
            a1 += mu1.weights[i] * std::tanh(mu1.particles[i].y0);
            b1 += mu1.weights[i] * 0.5 * std::sin(mu1.particles[i].y0);
        }
        for (std::size_t i = 0; i < mu2.size(); ++i) {
            a2 += mu2.weights[i] * std::tanh(mu2.particles[i].y0);
            b2 += mu2.weights[i] * 0.5 * std::sin(mu2.particles[i].y0);
        }
        const double expect = (a1 - a2) * (a1 - a2) + (b1 - b2) * (b1 - b2);
        CHECK(coupling_pairing(F2, mu1, mu2) == doctest::Approx(expect).epsilon(1e-10));
        CHECK(coupling_pairing(F2, mu1, mu2) >= 0.0);
    }
}

TEST_CASE("separable scalar and convolution couplings are monotone on samples") {
    const AdvertisingModel m = make_advertising_default();
    for (auto kind :
         {CouplingSpec::Kind::separable_scalar, CouplingSpec::Kind::convolution}) {
        CouplingFn F = CouplingSpec{kind, 1.0}.build();
        for (std::uint64_t k = 0; k < 20; ++k) {
            std::vector<LiftedState> p1, p2;
            for (std::size_t i = 0; i < 6; ++i) {
                p1.push_back(
                    constant_history_state(2.0 * rng::normal(600 + k, i, 0), m.m_mem, m.d));
                p2.push_back(
                    constant_history_state(2.0 * rng::normal(700 + k, i, 0), m.m_mem, m.d));
            }
            CHECK(coupling_pairing(F, EmpiricalMeasure::uniform(p1),
                                   EmpiricalMeasure::uniform(p2)) >= -1e-9);
        }
    }
}

TEST_CASE("pairing of identical measures vanishes") {
    const AdvertisingModel m = make_advertising_default();
    CouplingFn F = [&](const LiftedState& x, const EmpiricalMeasure& mu) {
        return coupling_F(m, x.y0, mu);
    };
    const EmpiricalMeasure mu = dirac_at(0.4, m);
    CHECK(coupling_pairing(F, mu, mu) == doctest::Approx(0.0));
}

TEST_CASE("delay integral uses the kernel-weighted quadrature") {
    AdvertisingModel m = make_advertising_default();
    // Flat history of ones: the integral equals the kernel mass.
    const LiftedState flat = constant_history_state(1.0, m.m_mem, m.d);
    double mass = 0.0;
    for (std::size_t j = 0; j < m.m_mem; ++j) mass += m.op.quad_weights[j] * m.eta[j];
    CHECK(delay_integral(m, flat) == doctest::Approx(mass).epsilon(1e-14));
    // Exponential kernel mass converges to 1 - exp(-d) under refinement.
    AdvertisingModel fine = m;
    fine.m_mem = 256;
    finalize_model(fine);
    double mass_fine = 0.0;
    for (std::size_t j = 0; j < fine.m_mem; ++j)
        mass_fine += fine.op.quad_weights[j] * fine.eta[j];
    CHECK(mass_fine == doctest::Approx(1.0 - std::exp(-fine.d)).epsilon(1e-3));
}
