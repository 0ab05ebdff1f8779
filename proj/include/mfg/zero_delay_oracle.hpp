#ifndef MFG_ZERO_DELAY_ORACLE_HPP
#define MFG_ZERO_DELAY_ORACLE_HPP

// Cross-validation solver for the memoryless case (eta = 0): a dense 1-D
// pipeline that shares no numerical kernels with the particle code. The
// value function is solved semi-Lagrangian (two-point diffusion quadrature,
// control by ternary search instead of the closed form), the law is a
// finite-volume density with conservative upwind fluxes, and the fixed
// point is the same damped iteration acting directly on densities.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/mfg_driver.hpp"

namespace mfg {

struct ZeroDelayParams {
    std::size_t grid_nodes = 257;
    double dt = 0.0;     // 0 = model.T / 256
    double theta = 0.5;
    double tol = 0.0;    // 0 = 1e-2 * initial residual
    std::size_t max_iter = 25;
};

struct ZeroDelaySolution {
    Vec times;
    Vec grid;                     // cell centers
    double cell_width = 0.0;
    std::vector<Vec> density;     // per-slice cell averages, unit mass
    std::vector<Vec> value;
    Vec residual_history;
    bool converged = false;
    std::size_t iterations = 0;
    double mass_error = 0.0;      // worst |1 - sum rho h| seen
};

namespace oracle_detail {

inline double interp1(const Vec& grid, const Vec& v, double y) {
    const double h = grid[1] - grid[0];
    double u = (y - grid.front()) / h;
    u = std::clamp(u, 0.0, static_cast<double>(grid.size() - 1));
    const auto i0 = static_cast<std::size_t>(
        std::min<double>(std::floor(u), static_cast<double>(grid.size() - 2)));
    const double f = u - static_cast<double>(i0);
    return v[i0] + f * (v[i0 + 1] - v[i0]);
}

inline double coupling_density(const AdvertisingModel& m, double y, const Vec& grid,
                               const Vec& rho, double h) {
    if (m.coupling_override) return m.coupling_override(y);
    double inter = 0.0;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double dz = y - grid[j];
        inter += rho[j] * h * std::exp(-0.5 * dz * dz);
    }
    return -1.0 / (1.0 + std::exp(y)) + m.coupling_strength * inter;
}

/// argmin over [0, cap] of the one-step cost; ternary search on a convex
/// piecewise-quadratic objective (deliberately not the closed form).
inline double best_control(const AdvertisingModel& m, const Vec& grid, const Vec& v_next,
                           double y, double dt, double cap) {
    auto step_cost = [&](double a) {
        const double b = m.b0(y, 0.0) + m.c0 * a;
        const double sig = m.sigma0(y);
        const double y_mid = y + dt * b;
        const double vv = 0.5 * (interp1(grid, v_next, y_mid + sig * std::sqrt(dt)) +
                                 interp1(grid, v_next, y_mid - sig * std::sqrt(dt)));
        return dt * m.nu * a * a + vv;
    };
    double lo = 0.0, hi = cap;
    for (int it = 0; it < 80; ++it) {
        const double m1 = lo + (hi - lo) / 3.0;
        const double m2 = hi - (hi - lo) / 3.0;
        if (step_cost(m1) <= step_cost(m2))
            hi = m2;
        else
            lo = m1;
    }
    // Return the best evaluated candidate; the interval midpoint can carry
    // a large quadratic penalty when the control cost is extreme.
    const double mid = 0.5 * (lo + hi);
    double best = 0.0, best_cost = step_cost(0.0);
    for (double cand : {mid, cap}) {
        const double c = step_cost(cand);
        if (c < best_cost) {
            best_cost = c;
            best = cand;
        }
    }
    return best;
}

} // namespace oracle_detail

/// Full dense solve of the memoryless game. Requires a model with a zero
/// delay kernel; the goodwill dynamics then decouple from the memory.
inline ZeroDelaySolution oracle_solve_zero_delay(const AdvertisingModel& m,
                                                 const EmpiricalMeasure& m0,
                                                 const ZeroDelayParams& params = {}) {
    for (double e : m.eta)
        if (e != 0.0)
            throw std::invalid_argument("oracle_solve_zero_delay: model must have eta = 0");
    m0.validate();
    const double dt = params.dt > 0.0 ? params.dt : m.T / 256.0;
    const auto n_steps = static_cast<std::size_t>(std::lround(m.T / dt));
    if (std::fabs(m.T - dt * static_cast<double>(n_steps)) > 1e-9)
        throw std::invalid_argument("oracle_solve_zero_delay: dt must divide the horizon");

    // Grid sized from the initial support plus drifted + diffused margin.
    double y_min = m0.particles.front().y0, y_max = y_min;
    for (const auto& p : m0.particles) {
        y_min = std::min(y_min, p.y0);
        y_max = std::max(y_max, p.y0);
    }
    const double margin =
        (m.b0.bound() + m.c0 * m.alpha_cap) * m.T + 5.0 * m.sigma0.bound() * std::sqrt(m.T) + 1.0;
    const std::size_t n = params.grid_nodes;
    const double lo = y_min - margin, hi = y_max + margin;
    const double h = (hi - lo) / static_cast<double>(n);

    ZeroDelaySolution sol;
    sol.cell_width = h;
    sol.grid.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        sol.grid[i] = lo + h * (0.5 + static_cast<double>(i));
    sol.times.resize(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) sol.times[k] = dt * static_cast<double>(k);

    // CFL for the conservative explicit update.
    double d_max = 0.0;
    for (double y : sol.grid) d_max = std::max(d_max, 0.5 * m.sigma0(y) * m.sigma0(y));
    const double b_max = m.b0.bound() + m.c0 * m.alpha_cap;
    const double cfl = b_max / h + 2.0 * d_max / (h * h);
    if (dt * cfl > 1.0 + 1e-12)
        throw std::invalid_argument("oracle_solve_zero_delay: CFL violation, max dt = " +
                                    std::to_string(1.0 / cfl));

    // Initial density: histogram of the initial cloud.
    Vec rho0(n, 0.0);
    for (std::size_t i = 0; i < m0.size(); ++i) {
        double u = (m0.particles[i].y0 - lo) / h;
        u = std::clamp(u, 0.0, static_cast<double>(n) - 1e-9);
        rho0[static_cast<std::size_t>(u)] += m0.weights[i] / h;
    }

    std::vector<Vec> flow(n_steps + 1, rho0); // constant-in-time initial guess
    double tol_eff = params.tol;

    auto solve_value = [&](const std::vector<Vec>& rho_flow) {
        std::vector<Vec> v(n_steps + 1, Vec(n, 0.0));
        if (m.terminal_override) {
            EmpiricalMeasure mt;
            for (std::size_t i = 0; i < n; ++i) {
                const double w = rho_flow[n_steps][i] * h;
                if (w <= 0.0) continue;
                mt.particles.push_back(constant_history_state(sol.grid[i], m.m_mem, m.d));
                mt.weights.push_back(w);
            }
            for (std::size_t i = 0; i < n; ++i)
                v[n_steps][i] = m.terminal_override(
                    constant_history_state(sol.grid[i], m.m_mem, m.d), mt);
        } else {
            for (std::size_t i = 0; i < n; ++i)
                v[n_steps][i] = oracle_detail::coupling_density(m, sol.grid[i], sol.grid,
                                                                rho_flow[n_steps], h);
        }
        for (std::size_t k = n_steps; k-- > 0;) {
            for (std::size_t i = 0; i < n; ++i) {
                const double y = sol.grid[i];
                const double f1 =
                    oracle_detail::coupling_density(m, y, sol.grid, rho_flow[k + 1], h);
                const double a =
                    oracle_detail::best_control(m, sol.grid, v[k + 1], y, dt, m.alpha_cap);
                const double b = m.b0(y, 0.0) + m.c0 * a;
                const double sig = m.sigma0(y);
                const double y_mid = y + dt * b;
                const double vv =
                    0.5 * (oracle_detail::interp1(sol.grid, v[k + 1], y_mid + sig * std::sqrt(dt)) +
                           oracle_detail::interp1(sol.grid, v[k + 1], y_mid - sig * std::sqrt(dt)));
                v[k][i] = dt * (f1 + m.nu * a * a) + vv;
            }
        }
        return v;
    };

    auto propagate_density = [&](const std::vector<Vec>& v) {
        std::vector<Vec> out(n_steps + 1, Vec(n, 0.0));
        out[0] = rho0;
        Vec flux(n + 1, 0.0);
        for (std::size_t k = 0; k < n_steps; ++k) {
            const Vec& rk = out[k];
            flux.assign(n + 1, 0.0);
            for (std::size_t f = 1; f < n; ++f) {
                const double y_face = lo + h * static_cast<double>(f);
                const double a =
                    oracle_detail::best_control(m, sol.grid, v[k], y_face, dt, m.alpha_cap);
                const double b = m.b0(y_face, 0.0) + m.c0 * a;
                const double up = b > 0.0 ? rk[f - 1] : rk[f];
                const double dl = 0.5 * m.sigma0(sol.grid[f - 1]) * m.sigma0(sol.grid[f - 1]);
                const double dr = 0.5 * m.sigma0(sol.grid[f]) * m.sigma0(sol.grid[f]);
                flux[f] = b * up - (dr * rk[f] - dl * rk[f - 1]) / h;
            }
            for (std::size_t i = 0; i < n; ++i)
                out[k + 1][i] = rk[i] - dt / h * (flux[i + 1] - flux[i]);
            double mass = 0.0;
            for (double r : out[k + 1]) mass += r * h;
            sol.mass_error = std::max(sol.mass_error, std::fabs(mass - 1.0));
        }
        return out;
    };

    auto flow_dist = [&](const std::vector<Vec>& a, const std::vector<Vec>& b) {
        double worst = 0.0;
        for (std::size_t k = 0; k <= n_steps; ++k) {
            Vec wa(n), wb(n);
            for (std::size_t i = 0; i < n; ++i) {
                wa[i] = a[k][i] * h;
                wb[i] = b[k][i] * h;
            }
            worst = std::max(worst, wasserstein1_sorted_1d(sol.grid, wa, sol.grid, wb));
        }
        return worst;
    };

    std::vector<Vec> value;
    for (std::size_t it = 0; it < params.max_iter; ++it) {
        value = solve_value(flow);
        std::vector<Vec> next = propagate_density(value);
        const double r = flow_dist(flow, next);
        sol.residual_history.push_back(r);
        sol.iterations = it + 1;
        if (tol_eff <= 0.0) tol_eff = std::max(1e-2 * r, 1e-14);
        if (r <= tol_eff) {
            sol.converged = true;
            flow = std::move(next);
            break;
        }
        for (std::size_t k = 1; k <= n_steps; ++k)
            for (std::size_t i = 0; i < n; ++i)
                flow[k][i] = (1.0 - params.theta) * flow[k][i] + params.theta * next[k][i];
    }
    sol.density = std::move(flow);
    sol.value = solve_value(sol.density);
    return sol;
}

/// Wraps the dense solution as a particle-measure solution so downstream
/// reporting and comparisons can treat both pipelines uniformly.
inline MfgSolution to_mfg_solution(const AdvertisingModel& m, const ZeroDelaySolution& z) {
    MfgSolution out;
    out.converged = z.converged;
    out.iterations = z.iterations;
    out.residual_history = z.residual_history;
    out.flow.times = z.times;
    out.flow.slices.resize(z.times.size());
    const std::size_t n = z.grid.size();
    for (std::size_t k = 0; k < z.times.size(); ++k) {
        auto& sl = out.flow.slices[k];
        double mass = 0.0;
        for (std::size_t i = 0; i < n; ++i) mass += z.density[k][i] * z.cell_width;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = z.density[k][i] * z.cell_width / mass;
            if (w <= 0.0) continue;
            sl.particles.push_back(constant_history_state(z.grid[i], m.m_mem, m.d));
            sl.weights.push_back(w);
        }
    }
    out.value.times = z.times;
    out.value.grid.axes.assign(
        1, Axis{z.grid.front(), z.grid.back(), z.grid.size()});
    out.value.reduced = ReducedMap{};
    out.value.reduced.m_hjb = 0;
    out.value.strides.assign(1, 1);
    out.value.values = z.value;
    return out;
}

} // namespace mfg

#endif
