#ifndef MFG_MFG_DRIVER_HPP
#define MFG_MFG_DRIVER_HPP

// Fixed-point machinery for the coupled value/law system: one application
// of Psi solves the backward equation for the current flow, synthesizes the
// feedback and propagates the population under it; the equilibrium is
// reached by damped iteration with measure mixtures as the convex
// combination.
//
// The same noise seed drives every Psi evaluation (common random numbers),
// so successive flows are pathwise coupled and the iteration residual
// measures policy changes rather than Monte Carlo noise. Residuals and
// certificates are evaluated on seeded particle/slice subsamples sized so
// every per-slice distance stays on the exact LP path.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/fokker_planck.hpp"
#include "mfg/hjb_solver.hpp"
#include "mfg/measure_transport.hpp"
#include "mfg/models.hpp"
#include "mfg/sde_engine.hpp"

namespace mfg {

struct SolverParams {
    double dt = 0.0;                // 0 = model.T / 256
    std::size_t n_particles = 4096;
    std::size_t grid_nodes = 129;
    std::size_t m_hjb = 1;
    double theta = 0.5;             // damping of the Picard iteration
    double tol = 0.0;               // 0 = 1e-2 * initial residual
    std::size_t max_iter = 25;
    std::size_t dist_stride = 8;    // slice stride for flow-distance estimates
    std::size_t dist_particles = 128; // per-slice subsample (keeps the LP exact)
    double w_lip_cap = 200.0;       // flag threshold for the feedback quotient
    double grid_radius = 0.0;       // 0 = sized from the initial cloud
    std::uint64_t salt = 0;         // decorrelates resampling streams only

    double step(const AdvertisingModel& m) const { return dt > 0.0 ? dt : m.T / 256.0; }
};

struct IterationRecord {
    std::size_t iter = 0;
    double residual = 0.0;
    double moment_sup = 0.0;
    double holder_const = 0.0;
};

/// Converged pair plus iteration diagnostics.
struct MfgSolution {
    ValueFunction value;
    MeasureFlow flow;
    Vec residual_history;
    std::size_t iterations = 0;
    bool converged = false;
    std::vector<std::pair<std::string, double>> monotonicity_certificates;
    std::vector<IterationRecord> iteration_log;
    double tol_used = 0.0;
    double w_lip_estimate = 0.0;
    bool w_lip_flagged = false;
    std::uint64_t cap_hits = 0;
    std::string diagnostic;
};

/// Lasry-Lions pairing of a coupling against a measure pair.
inline double monotonicity_pairing(const CouplingFn& F, const EmpiricalMeasure& mu1,
                                   const EmpiricalMeasure& mu2) {
    return coupling_pairing(F, mu1, mu2);
}

namespace detail {

/// Goodwill-quantile sketch of a uniform cloud: atoms sorted by y0 and
/// picked at evenly spaced quantiles. Near-duplicate clouds produce
/// near-duplicate sketches regardless of atom order, so distances between
/// sketches track structural differences instead of re-injecting
/// independent-sampling noise at every comparison.
inline EmpiricalMeasure quantile_sketch(const EmpiricalMeasure& mu, std::size_t n_sub) {
    if (mu.size() <= n_sub) return mu;
    std::vector<std::size_t> idx(mu.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t l, std::size_t r) {
        return mu.particles[l].y0 < mu.particles[r].y0;
    });
    EmpiricalMeasure out;
    out.particles.reserve(n_sub);
    out.weights.assign(n_sub, 1.0 / static_cast<double>(n_sub));
    for (std::size_t i = 0; i < n_sub; ++i) {
        const double pos =
            (static_cast<double>(i) + 0.5) * static_cast<double>(mu.size()) / n_sub;
        out.particles.push_back(mu.particles[idx[static_cast<std::size_t>(pos)]]);
    }
    return out;
}

/// Subsampled rho_{-1,infinity} estimate: quantile sketches on both flows,
/// exact LP per retained slice.
inline double flow_residual_estimate(const MeasureFlow& a, const MeasureFlow& b,
                                     const LiftedOperator& op, std::size_t stride,
                                     std::size_t n_sub, std::uint64_t /*seed*/) {
    if (a.times.size() != b.times.size())
        throw std::invalid_argument("flow_residual_estimate: grids differ");
    const GroundMetric g = GroundMetric::weak_ground(op);
    double best = 0.0;
    const std::size_t last = a.times.size() - 1;
    std::size_t k = 0;
    while (true) {
        const std::size_t kk = std::min(k, last);
        best = std::max(best, wasserstein1(quantile_sketch(a.slices[kk], n_sub),
                                           quantile_sketch(b.slices[kk], n_sub), g));
        if (kk == last) break;
        k += stride;
    }
    return best;
}

/// Sampled Lipschitz quotient of the feedback drift in the weak norm.
inline double feedback_lip_estimate(const AdvertisingModel& m, const FeedbackPolicy& pol,
                                    const MeasureFlow& flow, std::uint64_t seed) {
    double worst = 0.0;
    const std::size_t k = flow.slices.size() / 2;
    const auto& mu = flow.slices[k];
    const double t = flow.times[k];
    const std::size_t n_pairs = std::min<std::size_t>(40, mu.size() / 2);
    for (std::size_t s = 0; s < n_pairs; ++s) {
        const std::size_t i = rng::counter_word(seed, 0xabc, s, 0) % mu.size();
        const std::size_t j = rng::counter_word(seed, 0xabc, s, 1) % mu.size();
        if (i == j) continue;
        Vec a = m.op.weighted(mu.particles[i]);
        const Vec b = m.op.weighted(mu.particles[j]);
        for (std::size_t c = 0; c < a.size(); ++c) a[c] -= b[c];
        const double den = weak_norm_weighted(m.op, a);
        if (den < 1e-12) continue;
        const double num =
            std::fabs(pol.w_goodwill(t, mu.particles[i]) - pol.w_goodwill(t, mu.particles[j]));
        worst = std::max(worst, num / den);
    }
    return worst;
}

} // namespace detail

struct PsiResult {
    MeasureFlow flow;
    ValueFunction value;
    double w_lip_estimate = 0.0;
    bool w_lip_flagged = false;
    std::uint64_t cap_hits = 0;
};

/// One application of the fixed-point map: backward solve for the value
/// function given the flow, feedback synthesis, forward propagation of the
/// population from the flow's initial slice. The initial slice is preserved
/// exactly.
inline PsiResult psi(const AdvertisingModel& m, const MeasureFlow& flow,
                     const SolverParams& params, std::uint64_t seed) {
    flow.validate();
    const double dt = params.step(m);
    GridSpec grid;
    if (params.grid_radius > 0.0) {
        ReducedMap red = make_reduced_map(m, params.m_hjb);
        grid.axes.assign(1 + red.m_hjb,
                         Axis{-params.grid_radius, params.grid_radius, params.grid_nodes});
        for (std::size_t a = 1; a < grid.axes.size(); ++a)
            grid.axes[a].count = (params.grid_nodes + 1) / 2;
    } else {
        grid = make_grid(m, flow.slices.front(), params.m_hjb, params.grid_nodes);
    }
    PsiResult out;
    out.value = solve_hjb(m, flow, grid, dt, HjbOptions{params.m_hjb, 1});
    const FeedbackPolicy pol = synthesize_feedback(out.value, m, flow);
    out.flow = propagate(m, pol, flow.slices.front(), dt, params.n_particles, seed);
    out.w_lip_estimate = detail::feedback_lip_estimate(m, pol, out.flow, rng::fold(seed, 0x11f));
    out.w_lip_flagged = out.w_lip_estimate > params.w_lip_cap;
    out.cap_hits = pol.cap_hits->load();
    return out;
}

/// Time-constant flow m(t) = m0 resampled to the particle budget.
inline MeasureFlow constant_flow(const AdvertisingModel& m, const EmpiricalMeasure& m0,
                                 const SolverParams& params, std::uint64_t seed) {
    const double dt = params.step(m);
    const auto n_steps = static_cast<std::size_t>(std::lround(m.T / dt));
    const EmpiricalMeasure init =
        systematic_resample(m0, params.n_particles, rng::fold(seed, 0xfeedu));
    MeasureFlow flow;
    flow.times.resize(n_steps + 1);
    flow.slices.assign(n_steps + 1, init);
    for (std::size_t k = 0; k <= n_steps; ++k) flow.times[k] = dt * static_cast<double>(k);
    return flow;
}

/// Damped Picard iteration m_{k+1} = resample((1-theta) m_k + theta Psi(m_k))
/// slice-wise, with the initial slice pinned. Non-convergence returns
/// converged = false with the full history; divergence (residual above ten
/// times the initial one) aborts.
inline MfgSolution solve_mfg_from_flow(const AdvertisingModel& m, MeasureFlow cur, double theta,
                                       double tol, std::size_t max_iter, std::uint64_t seed,
                                       SolverParams params = {}) {
    if (!(theta > 0.0 && theta <= 1.0))
        throw std::invalid_argument("solve_mfg: theta must lie in (0, 1]");
    if (tol < 0.0) throw std::invalid_argument("solve_mfg: tol must be nonnegative");
    params.theta = theta;
    params.tol = tol;
    params.max_iter = max_iter;

    MfgSolution sol;
    const EmpiricalMeasure init_slice = cur.slices.front();
    double tol_eff = tol;
    bool theta_halved = false;
    double theta_eff = theta;

    for (std::size_t it = 0; it < max_iter; ++it) {
        PsiResult p = psi(m, cur, params, seed);
        const double r = detail::flow_residual_estimate(cur, p.flow, m.op, params.dist_stride,
                                                        params.dist_particles,
                                                        rng::fold(seed, 0xd157 + params.salt));
        sol.residual_history.push_back(r);
        sol.w_lip_estimate = std::max(sol.w_lip_estimate, p.w_lip_estimate);
        sol.w_lip_flagged = sol.w_lip_flagged || p.w_lip_flagged;
        sol.cap_hits += p.cap_hits;

        IterationRecord rec;
        rec.iter = it;
        rec.residual = r;
        {
            double ms = 0.0;
            for (std::size_t k = 0; k < p.flow.slices.size(); k += params.dist_stride)
                ms = std::max(ms, second_moment(p.flow.slices[k], m.op));
            rec.moment_sup = ms;
            MeasureFlow thin;
            for (std::size_t k = 0; k < p.flow.slices.size(); k += params.dist_stride) {
                thin.times.push_back(p.flow.times[k]);
                thin.slices.push_back(p.flow.slices[k]);
            }
            HolderOptions hopt;
            hopt.subsample = 64;
            hopt.seed = rng::fold(seed, 0x401d);
            rec.holder_const = thin.slices.size() >= 2 ? holder_certificate(thin, m.op, hopt) : 0.0;
        }
        sol.iteration_log.push_back(rec);

        if (tol_eff <= 0.0) tol_eff = std::max(1e-2 * r, 1e-14);
        sol.tol_used = tol_eff;
        sol.iterations = it + 1;

        if (r <= tol_eff) {
            sol.converged = true;
            sol.flow = std::move(p.flow);
            sol.value = std::move(p.value);
            break;
        }
        if (r > 10.0 * std::max(sol.residual_history.front(), 1e-14) && it > 0)
            throw NumericalFailure("solve_mfg: diverged at iteration " + std::to_string(it) +
                                   " with residual " + std::to_string(r));
        // One damping-halving retry on a sustained stall; no further scheduling.
        const std::size_t h = sol.residual_history.size();
        if (!theta_halved && h >= 3 && sol.residual_history[h - 1] > 0.95 * sol.residual_history[h - 2] &&
            sol.residual_history[h - 2] > 0.95 * sol.residual_history[h - 3]) {
            theta_eff *= 0.5;
            theta_halved = true;
        }

        if (it + 1 == max_iter) {
            sol.flow = std::move(p.flow);
            sol.value = std::move(p.value);
            sol.diagnostic = "max_iter reached";
            break;
        }

        MeasureFlow next;
        next.times = cur.times;
        next.slices.resize(cur.slices.size());
        next.slices[0] = init_slice;
        // Slot-stratified resampling of the weighted union: every particle
        // slot keeps exactly one of its two pair atoms, chosen by a
        // low-discrepancy sequence hitting the damping fraction, with the
        // threshold rotated by theta per iteration so every slot refreshes
        // within ceil(1/theta) iterations (no straggling dynasties). The
        // damped flow stays slot-coupled to the fixed-point map's output,
        // so the residual tracks policy changes, not resampling noise.
        constexpr double golden = 0.6180339887498949;
        for (std::size_t k = 1; k < cur.slices.size(); ++k) {
            const EmpiricalMeasure& ma = cur.slices[k];
            const EmpiricalMeasure& mb = p.flow.slices[k];
            const std::size_t n_slots = std::min(ma.size(), mb.size());
            const double u0 =
                rng::uniform01(rng::fold(seed, 0x3137 + params.salt * 7654321), k, 0);
            EmpiricalMeasure mixed;
            mixed.particles.reserve(n_slots);
            mixed.weights.assign(n_slots, 1.0 / static_cast<double>(n_slots));
            for (std::size_t i = 0; i < n_slots; ++i) {
                const double ui = std::fmod(
                    u0 + static_cast<double>(i) * golden + static_cast<double>(it) * theta_eff,
                    1.0);
                mixed.particles.push_back(ui < theta_eff ? mb.particles[i] : ma.particles[i]);
            }
            next.slices[k] = std::move(mixed);
        }
        cur = std::move(next);
    }

    // Pairing certificates of the coupling along the converged flow.
    if (!sol.flow.slices.empty()) {
        CouplingFn F = [&m](const LiftedState& x, const EmpiricalMeasure& mu) {
            return coupling_F(m, x.y0, mu);
        };
        const std::size_t last = sol.flow.slices.size() - 1;
        const std::size_t mid = last / 2;
        auto sub = [&](std::size_t k) {
            return sol.flow.slices[k].size() > 64
                       ? systematic_resample(sol.flow.slices[k], 64, rng::fold(seed, 0xcc + k))
                       : sol.flow.slices[k];
        };
        sol.monotonicity_certificates.emplace_back(
            "m(0)-vs-m(T/2)", monotonicity_pairing(F, sub(0), sub(mid)));
        sol.monotonicity_certificates.emplace_back(
            "m(0)-vs-m(T)", monotonicity_pairing(F, sub(0), sub(last)));
        sol.monotonicity_certificates.emplace_back(
            "m(T/2)-vs-m(T)", monotonicity_pairing(F, sub(mid), sub(last)));
    }
    return sol;
}

/// Default entry point: iterate from the time-constant flow m(t) = m0.
inline MfgSolution solve_mfg(const AdvertisingModel& m, const EmpiricalMeasure& m0, double theta,
                             double tol, std::size_t max_iter, std::uint64_t seed,
                             SolverParams params = {}) {
    return solve_mfg_from_flow(m, constant_flow(m, m0, params, seed), theta, tol, max_iter, seed,
                               params);
}

// ---------------------------------------------------------------------------
// Multistart uniqueness audit
// ---------------------------------------------------------------------------

struct MultistartReport {
    bool monotone_audit_pass = false;
    double worst_pairing = 0.0;
    std::string witness;
    bool starts_run = false;
    std::vector<bool> start_converged;
    std::vector<Vec> residual_histories;
    double max_pairwise_flow_distance = 0.0;
    double max_value_sup_distance = 0.0;
};

/// Runs the solver from several initial flow guesses and reports the spread
/// of the converged pairs. The coupling's monotonicity is audited first; on
/// failure the report carries an explicit witness pair and the starts are
/// skipped (the uniqueness surrogate has no backing without monotonicity).
inline MultistartReport uniqueness_multistart(const AdvertisingModel& m,
                                              const EmpiricalMeasure& m0, std::size_t n_starts,
                                              double tol, std::uint64_t seed,
                                              SolverParams params = {}) {
    MultistartReport rep;
    CouplingFn F = [&m](const LiftedState& x, const EmpiricalMeasure& mu) {
        return coupling_F(m, x.y0, mu);
    };
    rep.worst_pairing = 0.0;
    rep.monotone_audit_pass = true;
    for (std::size_t k = 0; k < 50; ++k) {
        // Two-atom pairs detect sign flips immediately; wider random clouds
        // cover the generic case.
        EmpiricalMeasure mu1, mu2;
        if (k == 0) {
            mu1 = EmpiricalMeasure::dirac(constant_history_state(0.0, m.m_mem, m.d));
            mu2 = EmpiricalMeasure::dirac(constant_history_state(1.0, m.m_mem, m.d));
        } else {
            mu1 = detail::random_cloud(m, seed, 2 * k, 10);
            mu2 = detail::random_cloud(m, seed, 2 * k + 1, 10);
        }
        const double pr = monotonicity_pairing(F, mu1, mu2);
        if (pr < rep.worst_pairing) {
            rep.worst_pairing = pr;
            rep.witness = "pair " + std::to_string(k) + ": pairing = " + std::to_string(pr);
        }
        if (pr < -1e-9) rep.monotone_audit_pass = false;
    }
    if (!rep.monotone_audit_pass) return rep;

    // A common grid radius keeps the value functions node-comparable across
    // starts (perturbed clouds would otherwise size their own grids).
    if (params.grid_radius <= 0.0) {
        const GridSpec g0 = make_grid(m, m0, params.m_hjb, params.grid_nodes);
        params.grid_radius = g0.axes[0].hi + 2.0;
    }

    rep.starts_run = true;
    std::vector<MeasureFlow> flows;
    std::vector<ValueFunction> values;
    for (std::size_t s = 0; s < n_starts; ++s) {
        SolverParams p = params;
        p.salt = s + 1;
        MfgSolution sol;
        if (s == 1) {
            // Start from one application of the fixed-point map to the
            // constant guess.
            MeasureFlow warm = psi(m, constant_flow(m, m0, p, seed), p, seed).flow;
            sol = solve_mfg_from_flow(m, std::move(warm), params.theta, tol, params.max_iter,
                                      seed, p);
        } else if (s >= 2) {
            // Randomized perturbation of the flow guess away from t = 0;
            // the initial law itself is part of the problem, not the guess.
            MeasureFlow guess = constant_flow(m, m0, p, seed);
            for (std::size_t k = 1; k < guess.slices.size(); ++k)
                for (std::size_t i = 0; i < guess.slices[k].size(); ++i) {
                    const double dy =
                        0.25 * rng::normal(rng::fold(seed, 900 + s), i, k);
                    guess.slices[k].particles[i].y0 += dy;
                    for (double& v : guess.slices[k].particles[i].memory) v += dy;
                }
            sol = solve_mfg_from_flow(m, std::move(guess), params.theta, tol, params.max_iter,
                                      seed, p);
        } else {
            sol = solve_mfg(m, m0, params.theta, tol, params.max_iter, seed, p);
        }
        rep.start_converged.push_back(sol.converged);
        rep.residual_histories.push_back(sol.residual_history);
        flows.push_back(std::move(sol.flow));
        values.push_back(std::move(sol.value));
    }
    for (std::size_t i = 0; i < flows.size(); ++i)
        for (std::size_t j = i + 1; j < flows.size(); ++j) {
            const double dfl = detail::flow_residual_estimate(
                flows[i], flows[j], m.op, params.dist_stride, params.dist_particles,
                rng::fold(seed, 0xdead));
            rep.max_pairwise_flow_distance = std::max(rep.max_pairwise_flow_distance, dfl);
            double dv = 0.0;
            for (std::size_t k = 0; k < values[i].values.size(); ++k)
                for (std::size_t nidx = 0; nidx < values[i].values[k].size(); ++nidx)
                    dv = std::max(dv, std::fabs(values[i].values[k][nidx] -
                                                values[j].values[k][nidx]));
            rep.max_value_sup_distance = std::max(rep.max_value_sup_distance, dv);
        }
    return rep;
}

} // namespace mfg

#endif
