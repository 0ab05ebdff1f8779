#ifndef MFG_SDE_ENGINE_HPP
#define MFG_SDE_ENGINE_HPP

// Monte Carlo propagation of the controlled delay dynamics. Paths are
// stepped by Euler-Maruyama in the goodwill coordinate while the memory
// segment is kept exact: a per-path ring buffer stores the goodwill history
// at the step resolution, and the sampled memory nodes are read off at
// aligned lags with no interpolation. Noise comes from the counter-based
// generator, so ensembles are reproducible bit-for-bit at any thread count.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/hjb_solver.hpp"
#include "mfg/measure_transport.hpp"
#include "mfg/models.hpp"
#include "mfg/parallel.hpp"
#include "mfg/rng.hpp"

namespace mfg {

/// Noise description: diffusion on the goodwill coordinate and the
/// generator family used for the driving increments.
struct NoiseSpec {
    Sigma0Spec sigma0;
    std::string rng_kind = rng::kGeneratorId;
};

inline NoiseSpec noise_spec(const AdvertisingModel& m) { return {m.sigma0, rng::kGeneratorId}; }

/// One simulated trajectory (used by the path dump interface).
struct SdePath {
    Vec times;
    std::vector<LiftedState> states;
    std::uint64_t seed = 0;
    std::size_t path_index = 0;
};

struct SimOptions {
    std::size_t slice_stride = 1; // record every stride-th step (plus the last)
    unsigned threads = 0;         // 0 = global worker count
};

namespace detail {

/// Per-path stepping state: goodwill value plus the fine history ring.
struct PathCursor {
    double y = 0.0;
    Vec ring;         // ring[j % L] = y(t_j) for the most recent L steps
    std::size_t lag_stride = 1; // memory node spacing in steps

    void init(const LiftedState& x0, std::size_t m_mem, std::size_t r, double h) {
        lag_stride = r;
        y = x0.y0;
        const std::size_t L = m_mem * r;
        ring.resize(L);
        // y(-l dt) by piecewise-linear interpolation of the initial segment;
        // exact at the memory nodes themselves.
        const double dt = h / static_cast<double>(r);
        for (std::size_t l = 1; l <= L; ++l) {
            const double theta = -static_cast<double>(l) * dt;
            const double u = (theta + static_cast<double>(m_mem) * h) / h;
            const auto j0 = static_cast<std::size_t>(std::min<double>(
                std::floor(u), static_cast<double>(m_mem) - 1.0));
            const double frac = u - static_cast<double>(j0);
            const double left = x0.memory[j0];
            const double right = j0 + 1 < m_mem ? x0.memory[j0 + 1] : x0.y0;
            ring[(L - l) % L] = left + frac * (right - left);
        }
    }

    double lag_value(std::size_t step, std::size_t lag) const {
        const std::size_t L = ring.size();
        return ring[(step + L - lag) % L];
    }

    void extract_memory(std::size_t step, std::size_t m_mem, Vec& mem) const {
        for (std::size_t j = 0; j < m_mem; ++j)
            mem[j] = lag_value(step, (m_mem - j) * lag_stride);
    }

    void push(std::size_t step, double y_now) { ring[step % ring.size()] = y_now; }
};

inline std::size_t checked_lag_stride(const AdvertisingModel& m, double dt) {
    const double h = m.op.mem_spacing();
    const double r = h / dt;
    const auto ri = static_cast<std::size_t>(std::lround(r));
    if (ri == 0 || std::fabs(r - static_cast<double>(ri)) > 1e-9 * r)
        throw std::invalid_argument(
            "simulate: dt must divide the memory grid spacing (h = dt * integer)");
    return ri;
}

inline std::size_t checked_step_count(double T, double dt) {
    const double k = T / dt;
    const auto ki = static_cast<std::size_t>(std::lround(k));
    if (ki == 0 || std::fabs(k - static_cast<double>(ki)) > 1e-9 * k)
        throw std::invalid_argument("simulate: dt must divide the horizon");
    return ki;
}

} // namespace detail

/// Law flow of the controlled delay dynamics started from m0. The initial
/// slice is the systematic resampling of m0 to n_paths particles (the
/// identity when m0 already has n_paths uniform atoms). Drift at each step:
/// b0(y, kernel integral of the memory) + c0 * alpha from the policy
/// (alpha = 0 when no policy is given); diffusion sigma0(y) acting on the
/// goodwill coordinate only.
inline MeasureFlow simulate(const AdvertisingModel& m, const FeedbackPolicy* policy,
                            const EmpiricalMeasure& m0, double dt, std::size_t n_paths,
                            std::uint64_t seed, const SimOptions& opt = {}) {
    if (n_paths == 0) throw std::invalid_argument("simulate: n_paths must be positive");
    m0.validate();
    if (m0.particles.front().mem_size() != m.m_mem)
        throw std::invalid_argument("simulate: m0 memory size does not match the model");
    const std::size_t r = detail::checked_lag_stride(m, dt);
    const std::size_t n_steps = detail::checked_step_count(m.T, dt);
    const std::size_t stride = opt.slice_stride == 0 ? 1 : opt.slice_stride;

    const EmpiricalMeasure init = systematic_resample(m0, n_paths, rng::fold(seed, 0xfeedu));

    std::vector<std::size_t> record_steps;
    for (std::size_t k = 0; k <= n_steps; k += stride) record_steps.push_back(k);
    if (record_steps.back() != n_steps) record_steps.push_back(n_steps);

    MeasureFlow flow;
    flow.times.resize(record_steps.size());
    flow.slices.resize(record_steps.size());
    for (std::size_t s = 0; s < record_steps.size(); ++s) {
        flow.times[s] = dt * static_cast<double>(record_steps[s]);
        flow.slices[s].particles.assign(n_paths, LiftedState{});
        flow.slices[s].weights.assign(n_paths, 1.0 / static_cast<double>(n_paths));
    }

    std::vector<std::string> failures(n_paths);
    parallel::for_range(
        n_paths,
        [&](std::size_t i) {
            detail::PathCursor cur;
            cur.init(init.particles[i], m.m_mem, r, m.op.mem_spacing());
            LiftedState state;
            state.d = m.d;
            state.memory.assign(m.m_mem, 0.0);
            std::size_t rec = 0;
            for (std::size_t k = 0; k <= n_steps; ++k) {
                state.y0 = cur.y;
                cur.extract_memory(k, m.m_mem, state.memory);
                if (!std::isfinite(state.y0)) {
                    failures[i] = "simulate: non-finite state on path " + std::to_string(i) +
                                  " at step " + std::to_string(k);
                    return;
                }
                if (rec < record_steps.size() && record_steps[rec] == k)
                    flow.slices[rec++].particles[i] = state;
                if (k == n_steps) break;
                double z = 0.0;
                for (std::size_t j = 0; j < m.m_mem; ++j)
                    z += m.op.quad_weights[j] * m.eta[j] * state.memory[j];
                const double t = dt * static_cast<double>(k);
                const double alpha = policy ? policy->alpha_star(t, state) : 0.0;
                const double drift = m.b0(state.y0, z) + m.c0 * alpha;
                const double xi = rng::normal(seed, i, k);
                const double y_next =
                    state.y0 + dt * drift + m.sigma0(state.y0) * std::sqrt(dt) * xi;
                cur.push(k, state.y0);
                cur.y = y_next;
            }
        },
        opt.threads);
    for (const auto& f : failures)
        if (!f.empty()) throw NumericalFailure(f);
    return flow;
}

/// Re-simulates one member of an ensemble; identical to the path the
/// ensemble produced because the noise is a pure function of
/// (seed, path_index, step).
inline SdePath simulate_single_path(const AdvertisingModel& m, const FeedbackPolicy* policy,
                                    const LiftedState& x0, double dt, std::uint64_t seed,
                                    std::size_t path_index) {
    const std::size_t r = detail::checked_lag_stride(m, dt);
    const std::size_t n_steps = detail::checked_step_count(m.T, dt);
    SdePath path;
    path.seed = seed;
    path.path_index = path_index;
    detail::PathCursor cur;
    cur.init(x0, m.m_mem, r, m.op.mem_spacing());
    LiftedState state;
    state.d = m.d;
    state.memory.assign(m.m_mem, 0.0);
    for (std::size_t k = 0; k <= n_steps; ++k) {
        state.y0 = cur.y;
        cur.extract_memory(k, m.m_mem, state.memory);
        path.times.push_back(dt * static_cast<double>(k));
        path.states.push_back(state);
        if (k == n_steps) break;
        double z = 0.0;
        for (std::size_t j = 0; j < m.m_mem; ++j)
            z += m.op.quad_weights[j] * m.eta[j] * state.memory[j];
        const double t = dt * static_cast<double>(k);
        const double alpha = policy ? policy->alpha_star(t, state) : 0.0;
        const double drift = m.b0(state.y0, z) + m.c0 * alpha;
        const double xi = rng::normal(seed, path_index, k);
        cur.push(k, state.y0);
        cur.y = state.y0 + dt * drift + m.sigma0(state.y0) * std::sqrt(dt) * xi;
    }
    return path;
}

/// Sup over slices of the second moment; the discrete uniform moment bound.
inline double moment_certificate(const MeasureFlow& flow, const LiftedOperator& op) {
    if (flow.slices.empty()) throw std::invalid_argument("moment_certificate: empty flow");
    double sup = 0.0;
    for (const auto& s : flow.slices) sup = std::max(sup, second_moment(s, op));
    return sup;
}

/// Exact equality of two flows, used by the determinism checks.
inline bool flows_equal_bitwise(const MeasureFlow& a, const MeasureFlow& b) {
    if (a.times != b.times || a.slices.size() != b.slices.size()) return false;
    for (std::size_t k = 0; k < a.slices.size(); ++k) {
        const auto& sa = a.slices[k];
        const auto& sb = b.slices[k];
        if (sa.weights != sb.weights || sa.size() != sb.size()) return false;
        for (std::size_t i = 0; i < sa.size(); ++i) {
            if (sa.particles[i].y0 != sb.particles[i].y0 ||
                sa.particles[i].memory != sb.particles[i].memory)
                return false;
        }
    }
    return true;
}

} // namespace mfg

#endif
