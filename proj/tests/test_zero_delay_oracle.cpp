#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfg/zero_delay_oracle.hpp"

#include "support.hpp"

using namespace mfg;

TEST_CASE("oracle rejects models with an active delay kernel") {
    const AdvertisingModel m = make_advertising_default();
    const EmpiricalMeasure m0 = testsup::default_m0(m, 64, 3);
    CHECK_THROWS_AS((void)oracle_solve_zero_delay(m, m0), std::invalid_argument);
}

TEST_CASE("finite-volume law conserves mass to rounding") {
    AdvertisingModel m = make_zero_delay_oracle();
    const EmpiricalMeasure m0 = testsup::default_m0(m, 512, 5);
    ZeroDelayParams p;
    p.grid_nodes = 129;
    p.max_iter = 3;
    const ZeroDelaySolution sol = oracle_solve_zero_delay(m, m0, p);
    CHECK(sol.mass_error <= 1e-12);
    for (const auto& rho : sol.density) {
        double mass = 0.0;
        for (double r : rho) mass += r * sol.cell_width;
        CHECK(std::fabs(mass - 1.0) <= 1e-12);
    }
}

TEST_CASE("frozen dynamics: both pipelines reduce to exact time quadrature") {
    AdvertisingModel m = make_zero_delay_oracle();
    m.b0.kappa = 0.0;
    m.b0.beta = 0.0;
    m.sigma0.kind = Sigma0Spec::Kind::constant;
    m.sigma0.scale = 0.0;
    m.nu = 1e8;
    finalize_model(m);
    m.coupling_override = [](double y) { return -1.0 / (1.0 + std::exp(y)); };
    m.terminal_override = [](const LiftedState& x, const EmpiricalMeasure&) {
        return -1.0 / (1.0 + std::exp(x.y0));
    };
    const EmpiricalMeasure m0 = testsup::default_m0(m, 128, 7);
    // Dense oracle side.
    ZeroDelayParams zp;
    zp.grid_nodes = 65;
    zp.max_iter = 1;
    zp.dt = m.T / 64.0;
    const ZeroDelaySolution z = oracle_solve_zero_delay(m, m0, zp);
    for (std::size_t k = 0; k < z.times.size(); ++k)
        for (std::size_t i = 0; i < z.grid.size(); ++i) {
            const double f = -1.0 / (1.0 + std::exp(z.grid[i]));
            const double expect = (m.T - z.times[k]) * f + f;
            CHECK(z.value[k][i] == doctest::Approx(expect).epsilon(1e-8));
        }
    // Particle-pipeline side on its own grid.
    const double dt = m.op.mem_spacing() / 2.0;
    const auto n_steps = static_cast<std::size_t>(std::lround(m.T / dt));
    MeasureFlow cf;
    cf.times.resize(n_steps + 1);
    cf.slices.assign(n_steps + 1, m0);
    for (std::size_t k = 0; k <= n_steps; ++k) cf.times[k] = dt * static_cast<double>(k);
    const GridSpec grid = make_grid(m, m0, 1, 65);
    const ValueFunction v = solve_hjb(m, cf, grid, dt, HjbOptions{1, 1});
    for (std::size_t k = 0; k < v.times.size(); ++k)
        for (std::size_t i = 0; i < grid.axes[0].count; ++i) {
            const double f = -1.0 / (1.0 + std::exp(grid.axes[0].coord(i)));
            const double expect = (m.T - v.times[k]) * f + f;
            CHECK(v.values[k][i] == doctest::Approx(expect).epsilon(1e-8));
        }
}

TEST_CASE("oracle equilibrium matches the particle pipeline on goodwill marginals") {
    AdvertisingModel m = make_zero_delay_oracle();
    m.m_mem = 8; // memory is inert, keep the lift small
    finalize_model(m);
    const EmpiricalMeasure m0 = testsup::default_m0(m, 1024, 11);

    ZeroDelayParams zp;
    zp.grid_nodes = 257;
    zp.dt = m.T / 128.0;
    zp.theta = 0.5;
    const ZeroDelaySolution z = oracle_solve_zero_delay(m, m0, zp);
    CHECK(z.converged);

    SolverParams sp;
    sp.dt = m.T / 128.0;
    sp.n_particles = 1024;
    sp.grid_nodes = 65;
    sp.dist_particles = 128;
    sp.dist_stride = 8;
    const MfgSolution sol = solve_mfg(m, m0, 0.5, 0.0, 15, 2024, sp);
    CHECK(sol.converged);

    // Goodwill-marginal distance on shared slices, against the support size.
    double diam = 0.0;
    for (const auto& p : sol.flow.slices.back().particles)
        diam = std::max(diam, std::fabs(p.y0));
    diam = 2.0 * diam;
    const auto stride = (z.times.size() - 1) / 8;
    for (std::size_t k = 0; k < z.times.size(); k += stride) {
        Vec gw(z.grid.size());
        for (std::size_t i = 0; i < z.grid.size(); ++i) gw[i] = z.density[k][i] * z.cell_width;
        Vec py, pw;
        for (std::size_t i = 0; i < sol.flow.slices[k].size(); ++i) {
            py.push_back(sol.flow.slices[k].particles[i].y0);
            pw.push_back(sol.flow.slices[k].weights[i]);
        }
        const double d1 = wasserstein1_sorted_1d(z.grid, gw, py, pw);
        CHECK(d1 <= 0.05 * diam);
    }
}

TEST_CASE("oracle solution wraps into the common solution record") {
    AdvertisingModel m = make_zero_delay_oracle();
    const EmpiricalMeasure m0 = testsup::default_m0(m, 256, 13);
    ZeroDelayParams p;
    p.grid_nodes = 65;
    p.max_iter = 2;
    const ZeroDelaySolution z = oracle_solve_zero_delay(m, m0, p);
    const MfgSolution wrapped = to_mfg_solution(m, z);
    wrapped.flow.validate();
    CHECK(wrapped.flow.times.size() == z.times.size());
    CHECK(wrapped.value.values.size() == z.value.size());
}
