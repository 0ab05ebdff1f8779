#ifndef MFG_FOKKER_PLANCK_HPP
#define MFG_FOKKER_PLANCK_HPP

// The population law under a feedback drift is the particle flow of the
// closed-loop dynamics; this module audits it against the weak formulation:
// for test functions phi,
//
//   int phi(t) dm(t) - int phi(0) dm0
//     = int_0^t int [ dphi/dt + <x, A* Dphi> + 1/2 tr(sigma sigma* D^2 phi)
//                     - <w, Dphi> ] dm(s) ds.
//
// Test directions are taken in the range of B so the unbounded-operator
// pairing reduces to the assembled bounded matrix A^T B; the trace term
// collapses to the goodwill entry because the noise is degenerate.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/sde_engine.hpp"

namespace mfg {

/// Cylinder test function phi(t, x) = q(t) * psi(<x, B zeta>) with q a
/// polynomial of degree <= 2 and psi from a small closed-form family.
struct TestFunction {
    enum class Kind { constant, linear_B, quadratic_B, cylindrical };
    Kind kind = Kind::constant;
    std::string id = "const";
    Vec zeta;        // direction, weighted coordinates
    Vec b_zeta;      // B zeta
    Vec atb_zeta;    // A_tilde^T B zeta
    double q0 = 1.0, q1 = 0.0, q2 = 0.0; // q(t) = q0 + q1 t + q2 t^2

    double q(double t) const { return q0 + q1 * t + q2 * t * t; }
    double dq(double t) const { return q1 + 2.0 * q2 * t; }

    double shape(double s) const {
        switch (kind) {
            case Kind::constant: return 1.0;
            case Kind::linear_B: return s;
            case Kind::quadratic_B: return 0.5 * s * s;
            case Kind::cylindrical: return std::tanh(s);
        }
        return 0.0;
    }
    double shape_d1(double s) const {
        switch (kind) {
            case Kind::constant: return 0.0;
            case Kind::linear_B: return 1.0;
            case Kind::quadratic_B: return s;
            case Kind::cylindrical: {
                const double c = std::cosh(s);
                return 1.0 / (c * c);
            }
        }
        return 0.0;
    }
    double shape_d2(double s) const {
        switch (kind) {
            case Kind::constant:
            case Kind::linear_B: return 0.0;
            case Kind::quadratic_B: return 1.0;
            case Kind::cylindrical: {
                const double th = std::tanh(s);
                const double c = std::cosh(s);
                return -2.0 * th / (c * c);
            }
        }
        return 0.0;
    }

    double phi(double t, const Vec& x_weighted) const {
        const double s = kind == Kind::constant ? 0.0 : dot(x_weighted, b_zeta);
        return q(t) * shape(s);
    }

    /// dphi/dt + <x, A* Dphi> + 1/2 sigma0^2 (D^2 phi)_00 - w0 (Dphi)_0,
    /// with w0 the goodwill component of the divergence drift.
    double integrand(double t, const Vec& x_weighted, double w0, double sigma_at) const {
        if (kind == Kind::constant) return dq(t);
        const double s = dot(x_weighted, b_zeta);
        const double adv = dot(x_weighted, atb_zeta) * shape_d1(s);
        const double tr = 0.5 * sigma_at * sigma_at * shape_d2(s) * b_zeta[0] * b_zeta[0];
        const double w_term = w0 * shape_d1(s) * b_zeta[0];
        return dq(t) * shape(s) + q(t) * (adv + tr - w_term);
    }
};

inline TestFunction make_test_function(const LiftedOperator& op, TestFunction::Kind kind,
                                       std::size_t eig_index, const std::string& id,
                                       double q0 = 1.0, double q1 = 0.0, double q2 = 0.0) {
    TestFunction f;
    f.kind = kind;
    f.id = id;
    f.q0 = q0;
    f.q1 = q1;
    f.q2 = q2;
    if (kind != TestFunction::Kind::constant) {
        const std::size_t n = op.dim();
        f.zeta.assign(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) f.zeta[i] = op.eigenbasis(i, eig_index % n);
        f.b_zeta = matvec(op.B, f.zeta);
        f.atb_zeta = matvec(transpose(op.A_tilde), f.b_zeta);
    }
    return f;
}

/// The standard 8-function audit basis: one constant, three linear, three
/// quadratic (leading eigendirections of B) and one cylindrical profile
/// with a quadratic time factor. Any finite basis under-tests the weak
/// identity; the size is a coverage knob.
inline std::vector<TestFunction> make_test_basis(const LiftedOperator& op) {
    using K = TestFunction::Kind;
    std::vector<TestFunction> basis;
    basis.push_back(make_test_function(op, K::constant, 0, "const"));
    basis.push_back(make_test_function(op, K::linear_B, 0, "lin0"));
    basis.push_back(make_test_function(op, K::linear_B, 1, "lin1"));
    basis.push_back(make_test_function(op, K::linear_B, 2, "lin2", 1.0, 0.5, 0.0));
    basis.push_back(make_test_function(op, K::quadratic_B, 0, "quad0"));
    basis.push_back(make_test_function(op, K::quadratic_B, 1, "quad1"));
    basis.push_back(make_test_function(op, K::quadratic_B, 2, "quad2"));
    basis.push_back(make_test_function(op, K::cylindrical, 0, "cyl0", 1.0, 0.0, 0.25));
    return basis;
}

// ---------------------------------------------------------------------------
// Propagation
// ---------------------------------------------------------------------------

/// The weak solution of the linear continuity equation with divergence
/// drift w = -b_tilde(x, alpha*) is the law of the closed-loop SDE; this is
/// the same code path as the plain ensemble simulation (bitwise identical
/// for the same seed).
inline MeasureFlow propagate(const AdvertisingModel& m, const FeedbackPolicy& policy,
                             const EmpiricalMeasure& m0, double dt, std::size_t n_particles,
                             std::uint64_t seed, const SimOptions& opt = {}) {
    return simulate(m, &policy, m0, dt, n_particles, seed, opt);
}

/// Pure-translation propagation (transport switched off, constant
/// divergence drift, no noise): every coordinate moves by -w dt per step.
/// A controlled-experiment hook, not a model path.
inline MeasureFlow propagate_translation(const EmpiricalMeasure& m0, const Vec& w_raw,
                                         double dt, double T) {
    m0.validate();
    const std::size_t dim = 1 + m0.particles.front().mem_size();
    if (w_raw.size() != dim) throw std::invalid_argument("propagate_translation: dim mismatch");
    const auto n_steps = static_cast<std::size_t>(std::lround(T / dt));
    MeasureFlow flow;
    flow.times.resize(n_steps + 1);
    flow.slices.assign(n_steps + 1, m0);
    for (std::size_t k = 0; k <= n_steps; ++k) {
        flow.times[k] = dt * static_cast<double>(k);
        const double shift = dt * static_cast<double>(k);
        for (auto& p : flow.slices[k].particles) {
            p.y0 -= w_raw[0] * shift;
            for (std::size_t j = 0; j < p.memory.size(); ++j)
                p.memory[j] -= w_raw[1 + j] * shift;
        }
    }
    return flow;
}

// ---------------------------------------------------------------------------
// Weak residual
// ---------------------------------------------------------------------------

struct ResidualSeries {
    std::string phi_id;
    Vec times;
    Vec r;
    double max_r = 0.0;
    bool growth_flag = false; // test function large relative to 1 + ||x||
};

namespace detail {

inline double default_w0(const AdvertisingModel& m, const FeedbackPolicy* policy, double t,
                         const LiftedState& x) {
    if (policy) return policy->w_goodwill(t, x);
    const double z = delay_integral(m, x);
    return -(m.b0(x.y0, z) + x.y0);
}

} // namespace detail

/// Residual series of the weak identity for one test function over a
/// stored flow; the time integral uses the trapezoid rule on the slices.
inline ResidualSeries weak_residual(const AdvertisingModel& m, const MeasureFlow& flow,
                                    const TestFunction& phi, const FeedbackPolicy* policy) {
    flow.validate();
    ResidualSeries out;
    out.phi_id = phi.id;
    out.times = flow.times;
    const std::size_t k_slices = flow.slices.size();
    Vec mass(k_slices, 0.0), gen(k_slices, 0.0);
    for (std::size_t k = 0; k < k_slices; ++k) {
        const double t = flow.times[k];
        const auto& mu = flow.slices[k];
        double mk = 0.0, gk = 0.0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            const Vec xw = m.op.weighted(mu.particles[i]);
            mk += mu.weights[i] * phi.phi(t, xw);
            const double w0 = detail::default_w0(m, policy, t, mu.particles[i]);
            gk += mu.weights[i] *
                  phi.integrand(t, xw, w0, m.sigma0(mu.particles[i].y0));
            const double growth = std::fabs(phi.phi(t, xw)) / (1.0 + norm2(xw));
            if (growth > 1e3) out.growth_flag = true;
        }
        mass[k] = mk;
        gen[k] = gk;
    }
    out.r.assign(k_slices, 0.0);
    double integral = 0.0;
    for (std::size_t k = 1; k < k_slices; ++k) {
        integral += 0.5 * (gen[k - 1] + gen[k]) * (flow.times[k] - flow.times[k - 1]);
        out.r[k] = std::fabs(mass[k] - mass[0] - integral);
        out.max_r = std::max(out.max_r, out.r[k]);
    }
    return out;
}

/// Streaming variant: steps the ensemble once and accumulates the residual
/// statistics for a whole basis without storing the flow (used for the
/// refinement studies, where storing every slice would be prohibitive).
inline std::vector<ResidualSeries> weak_residual_stream(
    const AdvertisingModel& m, const FeedbackPolicy* policy, const EmpiricalMeasure& m0,
    double dt, std::size_t n_paths, std::uint64_t seed,
    const std::vector<TestFunction>& basis) {
    m0.validate();
    const std::size_t r = detail::checked_lag_stride(m, dt);
    const std::size_t n_steps = detail::checked_step_count(m.T, dt);
    const EmpiricalMeasure init = systematic_resample(m0, n_paths, rng::fold(seed, 0xfeedu));
    const double wgt = 1.0 / static_cast<double>(n_paths);

    std::vector<detail::PathCursor> cursors(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i)
        cursors[i].init(init.particles[i], m.m_mem, r, m.op.mem_spacing());

    const std::size_t nb = basis.size();
    std::vector<Vec> mass(nb, Vec(n_steps + 1, 0.0));
    std::vector<Vec> gen(nb, Vec(n_steps + 1, 0.0));
    std::vector<char> growth(nb, 0);

    LiftedState state;
    state.d = m.d;
    state.memory.assign(m.m_mem, 0.0);
    Vec xw(1 + m.m_mem);
    for (std::size_t k = 0; k <= n_steps; ++k) {
        const double t = dt * static_cast<double>(k);
        for (std::size_t i = 0; i < n_paths; ++i) {
            auto& cur = cursors[i];
            state.y0 = cur.y;
            cur.extract_memory(k, m.m_mem, state.memory);
            if (!std::isfinite(state.y0))
                throw NumericalFailure("weak_residual_stream: non-finite state on path " +
                                       std::to_string(i) + " at step " + std::to_string(k));
            xw[0] = state.y0;
            for (std::size_t j = 0; j < m.m_mem; ++j)
                xw[1 + j] = m.op.coord_scale[1 + j] * state.memory[j];
            const double w0 = detail::default_w0(m, policy, t, state);
            const double sig = m.sigma0(state.y0);
            for (std::size_t f = 0; f < nb; ++f) {
                mass[f][k] += wgt * basis[f].phi(t, xw);
                gen[f][k] += wgt * basis[f].integrand(t, xw, w0, sig);
                if (std::fabs(basis[f].phi(t, xw)) > 1e3 * (1.0 + norm2(xw))) growth[f] = 1;
            }
            if (k == n_steps) continue;
            double z = 0.0;
            for (std::size_t j = 0; j < m.m_mem; ++j)
                z += m.op.quad_weights[j] * m.eta[j] * state.memory[j];
            const double alpha = policy ? policy->alpha_star(t, state) : 0.0;
            const double drift = m.b0(state.y0, z) + m.c0 * alpha;
            const double xi = rng::normal(seed, i, k);
            cur.push(k, state.y0);
            cur.y = state.y0 + dt * drift + sig * std::sqrt(dt) * xi;
        }
    }

    std::vector<ResidualSeries> out(nb);
    for (std::size_t f = 0; f < nb; ++f) {
        out[f].phi_id = basis[f].id;
        out[f].growth_flag = growth[f] != 0;
        out[f].times.resize(n_steps + 1);
        out[f].r.assign(n_steps + 1, 0.0);
        double integral = 0.0;
        for (std::size_t k = 0; k <= n_steps; ++k) {
            out[f].times[k] = dt * static_cast<double>(k);
            if (k == 0) continue;
            integral += 0.5 * (gen[f][k - 1] + gen[f][k]) * dt;
            out[f].r[k] = std::fabs(mass[f][k] - mass[f][0] - integral);
            out[f].max_r = std::max(out[f].max_r, out[f].r[k]);
        }
    }
    return out;
}

} // namespace mfg

#endif
