#ifndef MFG_HJB_SOLVER_HPP
#define MFG_HJB_SOLVER_HPP

// Backward solver for the value function on a reduced-coordinate grid:
// goodwill plus a small number of kernel-weighted memory averages. The
// scheme is explicit and monotone (upwind drift, central diffusion on the
// goodwill axis only; the memory axes are advective, mirroring the
// degenerate noise), with the advertising control eliminated in closed
// form at each node.
//
// The full memory segment is intractable as a grid dimension. Memory enters
// the drift only through the kernel integral, so the grid carries block
// averages of the kernel-weighted history; each block relaxes toward the
// adjacent newer block at the kernel's edge rate (a lag-chain surrogate for
// the transport of the segment).

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/models.hpp"
#include "mfg/parallel.hpp"

namespace mfg {

// ---------------------------------------------------------------------------
// Grids and reduced coordinates
// ---------------------------------------------------------------------------

struct Axis {
    double lo = -1.0;
    double hi = 1.0;
    std::size_t count = 2;
    double h() const { return (hi - lo) / static_cast<double>(count - 1); }
    double coord(std::size_t i) const { return lo + h() * static_cast<double>(i); }
};

struct GridSpec {
    std::vector<Axis> axes; // axis 0 = goodwill, axes 1.. = memory blocks
    std::size_t dim() const { return axes.size(); }
    std::size_t size() const {
        std::size_t n = 1;
        for (const auto& a : axes) n *= a.count;
        return n;
    }
};

/// Continuous kernel evaluation matching sample_eta.
inline double eta_at(EtaKind kind, double d, double theta) {
    switch (kind) {
        case EtaKind::zero: return 0.0;
        case EtaKind::constant: return 1.0;
        case EtaKind::exponential: return std::exp(theta);
        case EtaKind::linear: return 1.0 + theta / d;
    }
    return 0.0;
}

/// Compression of the full memory segment to m_hjb kernel-weighted block
/// averages, newest block first, plus the lag-chain rates used as the
/// blocks' drift on the grid.
struct ReducedMap {
    std::size_t m_hjb = 1;
    std::vector<std::vector<std::size_t>> blocks; // memory node indices per block
    Vec block_mass;                               // c_b = sum_j w_j eta_j
    Vec block_rate;                               // eta(newest edge of block) / c_b
    double total_mass = 0.0;

    std::size_t dim() const { return 1 + m_hjb; }

    Vec apply(const AdvertisingModel& m, const LiftedState& x) const {
        Vec r(dim(), 0.0);
        r[0] = x.y0;
        for (std::size_t b = 0; b < m_hjb; ++b) {
            double s = 0.0;
            for (std::size_t j : blocks[b]) s += m.op.quad_weights[j] * m.eta[j] * x.memory[j];
            r[1 + b] = block_mass[b] > 0.0 ? s / block_mass[b] : 0.0;
        }
        return r;
    }

    /// Kernel integral reconstructed from reduced coordinates.
    double kernel_integral(const Vec& reduced) const {
        double s = 0.0;
        for (std::size_t b = 0; b < m_hjb; ++b) s += block_mass[b] * reduced[1 + b];
        return s;
    }
};

inline ReducedMap make_reduced_map(const AdvertisingModel& m, std::size_t m_hjb) {
    ReducedMap r;
    double total = 0.0;
    for (std::size_t j = 0; j < m.m_mem; ++j) total += m.op.quad_weights[j] * m.eta[j];
    if (total <= 1e-14 || m_hjb == 0) {
        r.m_hjb = 0;
        r.total_mass = 0.0;
        return r;
    }
    if (m_hjb > 3) throw std::invalid_argument("make_reduced_map: at most 3 memory blocks");
    r.m_hjb = m_hjb;
    r.total_mass = total;
    r.blocks.resize(m_hjb);
    r.block_mass.assign(m_hjb, 0.0);
    r.block_rate.assign(m_hjb, 0.0);
    // Block b covers theta in [-(b+1) D, -b D], D = d / m_hjb; node j sits at
    // theta_j = -(M - j) h. Newest nodes (largest j) belong to block 0.
    const double h = m.op.mem_spacing();
    const double D = m.d / static_cast<double>(m_hjb);
    for (std::size_t j = 0; j < m.m_mem; ++j) {
        const double theta = -(static_cast<double>(m.m_mem - j)) * h;
        auto b = static_cast<std::size_t>(std::min<double>(
            static_cast<double>(m_hjb) - 1.0, std::floor(-theta / D - 1e-12)));
        r.blocks[b].push_back(j);
        r.block_mass[b] += m.op.quad_weights[j] * m.eta[j];
    }
    // Lag rate of block b: kernel value at its newest edge over the block's
    // kernel mass (for one constant block this is 1/d, for an exponential
    // kernel 1/(1 - e^{-d}), matching the continuum transport balance).
    for (std::size_t b = 0; b < m_hjb; ++b) {
        const double edge = -static_cast<double>(b) * D;
        r.block_rate[b] =
            r.block_mass[b] > 0.0 ? eta_at(m.eta_kind, m.d, edge) / r.block_mass[b] : 0.0;
    }
    return r;
}

/// Grid extents sized from the initial spread and the bounded closed-loop
/// drift over the horizon. Memory axes carry half the goodwill resolution:
/// the lag-chain drift is linear in the grid span, so its explicit-step
/// stability factor scales with the node count alone, and full resolution
/// there would force an inadmissibly small time step.
inline GridSpec make_grid(const AdvertisingModel& m, const EmpiricalMeasure& m0,
                          std::size_t m_hjb, std::size_t nodes_per_axis = 129) {
    double y_max = 0.0;
    for (const auto& p : m0.particles) {
        y_max = std::max(y_max, std::fabs(p.y0));
        for (double v : p.memory) y_max = std::max(y_max, std::fabs(v));
    }
    const double drift_sup = m.b0.bound() + m.c0 * m.alpha_cap;
    const double r = 5.0 * (y_max + drift_sup * m.T);
    ReducedMap red = make_reduced_map(m, m_hjb);
    GridSpec g;
    g.axes.assign(1 + red.m_hjb, Axis{-r, r, nodes_per_axis});
    for (std::size_t a = 1; a < g.axes.size(); ++a) g.axes[a].count = (nodes_per_axis + 1) / 2;
    return g;
}

// ---------------------------------------------------------------------------
// Value function
// ---------------------------------------------------------------------------

struct ValueFunction {
    Vec times;                       // shared with the flow grid it was solved on
    GridSpec grid;
    ReducedMap reduced;
    std::vector<Vec> values;         // one flattened array per time slice
    std::vector<std::size_t> strides;
    double sup_bound = 0.0;          // recorded comparison bound

    std::size_t slice_count() const { return values.size(); }

    std::size_t flat(const std::vector<std::size_t>& idx) const {
        std::size_t f = 0;
        for (std::size_t a = 0; a < idx.size(); ++a) f += idx[a] * strides[a];
        return f;
    }

    std::size_t time_index(double t) const {
        if (times.size() < 2) return 0;
        const double dt = times[1] - times[0];
        const double k = (t - times[0]) / dt;
        const auto ki = static_cast<long>(std::lround(k));
        return static_cast<std::size_t>(std::clamp<long>(ki, 0, static_cast<long>(times.size()) - 1));
    }

    /// Multilinear interpolation; coordinates outside the hull are clamped
    /// and reported through the flag.
    double value_at(std::size_t k, const Vec& x, bool* clamped = nullptr) const {
        const std::size_t d = grid.dim();
        std::vector<std::size_t> base(d);
        Vec frac(d);
        for (std::size_t a = 0; a < d; ++a) {
            const Axis& ax = grid.axes[a];
            double u = (x[a] - ax.lo) / ax.h();
            if (u < 0.0 || u > static_cast<double>(ax.count - 1)) {
                if (clamped) *clamped = true;
                u = std::clamp(u, 0.0, static_cast<double>(ax.count - 1));
            }
            auto i0 = static_cast<std::size_t>(std::min<double>(std::floor(u),
                                                                static_cast<double>(ax.count - 2)));
            base[a] = i0;
            frac[a] = u - static_cast<double>(i0);
        }
        const Vec& v = values[k];
        double acc = 0.0;
        const std::size_t corners = std::size_t{1} << d;
        for (std::size_t c = 0; c < corners; ++c) {
            double w = 1.0;
            std::size_t f = 0;
            for (std::size_t a = 0; a < d; ++a) {
                const bool hi = (c >> a) & 1u;
                w *= hi ? frac[a] : 1.0 - frac[a];
                f += (base[a] + (hi ? 1 : 0)) * strides[a];
            }
            acc += w * v[f];
        }
        return acc;
    }
};

// ---------------------------------------------------------------------------
// Control formula and Hamiltonian
// ---------------------------------------------------------------------------

/// argmax over alpha >= 0 of -c0 alpha p0 - nu alpha^2.
inline double optimal_control(double p0, double c0, double nu) {
    if (!(nu > 0.0)) throw std::invalid_argument("optimal_control: nu must be positive");
    return std::max(0.0, -c0 * p0 / (2.0 * nu));
}

/// Full Hamiltonian on reduced coordinates: closed-form control supremum
/// minus the coupling term.
inline double hamiltonian(const AdvertisingModel& m, const ReducedMap& red, const Vec& x_reduced,
                          const Vec& p_reduced, const EmpiricalMeasure& mu) {
    if (x_reduced.size() != red.dim() || p_reduced.size() != red.dim())
        throw std::invalid_argument("hamiltonian: reduced dimension mismatch");
    const double z = red.kernel_integral(x_reduced);
    return hamiltonian0(m, x_reduced[0], z, p_reduced[0]) - coupling_F(m, x_reduced[0], mu);
}

// ---------------------------------------------------------------------------
// Gradient access
// ---------------------------------------------------------------------------

struct GradientResult {
    Vec p;
    bool clamped = false;
};

/// Componentwise central difference of the interpolant at the grid spacing;
/// second-order one-sided at the hull boundary; clamped (and flagged)
/// outside the hull.
inline GradientResult gradient(const ValueFunction& v, double t, const Vec& x) {
    const std::size_t k = v.time_index(t);
    const std::size_t d = v.grid.dim();
    GradientResult out;
    out.p.assign(d, 0.0);
    Vec xc = x;
    for (std::size_t a = 0; a < d; ++a) {
        const Axis& ax = v.grid.axes[a];
        if (xc[a] < ax.lo || xc[a] > ax.hi) out.clamped = true;
        xc[a] = std::clamp(xc[a], ax.lo, ax.hi);
    }
    for (std::size_t a = 0; a < d; ++a) {
        const Axis& ax = v.grid.axes[a];
        const double h = ax.h();
        Vec xp = xc, xm = xc;
        xp[a] += h;
        xm[a] -= h;
        if (xp[a] <= ax.hi && xm[a] >= ax.lo) {
            out.p[a] = (v.value_at(k, xp) - v.value_at(k, xm)) / (2.0 * h);
        } else if (xp[a] > ax.hi) {
            Vec x1 = xc, x2 = xc;
            x1[a] -= h;
            x2[a] -= 2.0 * h;
            out.p[a] = (3.0 * v.value_at(k, xc) - 4.0 * v.value_at(k, x1) + v.value_at(k, x2)) /
                       (2.0 * h);
        } else {
            Vec x1 = xc, x2 = xc;
            x1[a] += h;
            x2[a] += 2.0 * h;
            out.p[a] = (-3.0 * v.value_at(k, xc) + 4.0 * v.value_at(k, x1) - v.value_at(k, x2)) /
                       (2.0 * h);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backward sweep
// ---------------------------------------------------------------------------

namespace detail {

/// Closed-loop reduced drift at a node: goodwill decay plus optimal
/// advertising, and the lag-chain transport of the memory blocks.
inline void reduced_drift(const AdvertisingModel& m, const ReducedMap& red, const Vec& x,
                          double alpha, Vec& b_out) {
    const double z = red.kernel_integral(x);
    b_out[0] = m.b0(x[0], z) + m.c0 * alpha;
    for (std::size_t b = 0; b < red.m_hjb; ++b) {
        const double inflow = b == 0 ? x[0] : x[1 + b - 1];
        b_out[1 + b] = red.block_rate[b] * (inflow - x[1 + b]);
    }
}

/// Worst-case CFL factor over the grid: sum_a |b_a|/h_a + sigma^2/h0^2.
inline double cfl_bound(const AdvertisingModel& m, const ReducedMap& red, const GridSpec& g) {
    const double sig = m.sigma0.bound();
    double worst = sig * sig / (g.axes[0].h() * g.axes[0].h());
    worst += (m.b0.bound() + m.c0 * m.alpha_cap + 0.0) / g.axes[0].h();
    for (std::size_t b = 0; b < red.m_hjb; ++b) {
        const Axis& ax = g.axes[1 + b];
        const double span = std::max(std::fabs(ax.hi), std::fabs(ax.lo)) * 2.0;
        worst += red.block_rate[b] * span / ax.h();
    }
    return worst;
}

} // namespace detail

struct HjbOptions {
    std::size_t m_hjb = 1;
    std::size_t flow_stride = 1; // HJB step = stride * flow step
};

/// Backward explicit monotone sweep from the terminal condition
/// v(T, .) = G(., m(T)). Throws on CFL violation (with the admissible step
/// in the message) and on non-finite values (with the node location).
inline ValueFunction solve_hjb(const AdvertisingModel& m, const MeasureFlow& m_flow,
                               const GridSpec& grid, double dt, const HjbOptions& opt = {}) {
    if (m_flow.times.size() < 2) throw std::invalid_argument("solve_hjb: flow too short");
    const double flow_dt = m_flow.times[1] - m_flow.times[0];
    const auto stride = static_cast<std::size_t>(std::lround(dt / flow_dt));
    if (stride == 0 || std::fabs(dt - flow_dt * static_cast<double>(stride)) > 1e-9 * dt)
        throw std::invalid_argument("solve_hjb: dt must be a multiple of the flow step");
    if ((m_flow.times.size() - 1) % stride != 0)
        throw std::invalid_argument("solve_hjb: flow grid does not contain the HJB grid");

    ValueFunction vf;
    vf.reduced = make_reduced_map(m, opt.m_hjb);
    vf.grid = grid;
    if (grid.dim() != vf.reduced.dim())
        throw std::invalid_argument("solve_hjb: grid dimension does not match reduced map");

    const double cfl = detail::cfl_bound(m, vf.reduced, grid);
    if (dt * cfl > 1.0 + 1e-12)
        throw std::invalid_argument("solve_hjb: CFL violation, max admissible dt = " +
                                    std::to_string(1.0 / cfl));

    const std::size_t n_axes = grid.dim();
    vf.strides.assign(n_axes, 1);
    for (std::size_t a = n_axes; a-- > 1;)
        vf.strides[a - 1] = vf.strides[a] * grid.axes[a].count;
    const std::size_t n_nodes = grid.size();

    const std::size_t k_slices = (m_flow.times.size() - 1) / stride + 1;
    vf.times.resize(k_slices);
    for (std::size_t k = 0; k < k_slices; ++k) vf.times[k] = m_flow.times[k * stride];
    vf.values.assign(k_slices, Vec(n_nodes, 0.0));

    // Goodwill samples per slice drive the coupling tables.
    const Axis& y_axis = grid.axes[0];
    auto coupling_table = [&](const EmpiricalMeasure& mu, Vec& table) {
        Vec z0(mu.size()), w(mu.size());
        for (std::size_t i = 0; i < mu.size(); ++i) {
            z0[i] = mu.particles[i].y0;
            w[i] = mu.weights[i];
        }
        parallel::for_range(y_axis.count, [&](std::size_t i) {
            table[i] = coupling_F_samples(m, y_axis.coord(i), z0, w);
        });
    };

    // Terminal slice.
    {
        Vec g_table(y_axis.count);
        const EmpiricalMeasure& mu_t = m_flow.slices.back();
        if (m.terminal_override) {
            for (std::size_t i = 0; i < y_axis.count; ++i) {
                LiftedState s = constant_history_state(y_axis.coord(i), m.m_mem, m.d);
                g_table[i] = m.terminal_override(s, mu_t);
            }
        } else {
            coupling_table(mu_t, g_table);
        }
        Vec& vt = vf.values.back();
        for (std::size_t node = 0; node < n_nodes; ++node)
            vt[node] = g_table[node / vf.strides[0]];
        double sup_g = 0.0;
        for (double v : g_table) sup_g = std::max(sup_g, std::fabs(v));
        vf.sup_bound = m.T * (1.0 + std::fabs(m.coupling_strength)) + sup_g + 1e-9;
    }

    std::vector<std::size_t> idx(n_axes);
    Vec f_table(y_axis.count);
    for (std::size_t k = k_slices - 1; k-- > 0;) {
        const Vec& next = vf.values[k + 1];
        Vec& cur = vf.values[k];
        coupling_table(m_flow.slices[(k + 1) * stride], f_table);

        parallel::for_range(n_nodes, [&](std::size_t node) {
            // Decode the multi-index.
            std::size_t rest = node;
            std::size_t id[4];
            for (std::size_t a = 0; a < n_axes; ++a) {
                id[a] = rest / vf.strides[a];
                rest %= vf.strides[a];
            }
            Vec x(n_axes);
            for (std::size_t a = 0; a < n_axes; ++a) x[a] = grid.axes[a].coord(id[a]);

            auto at = [&](std::size_t axis, long shift) {
                const long j = static_cast<long>(id[axis]) + shift;
                const long jc = std::clamp<long>(j, 0, static_cast<long>(grid.axes[axis].count) - 1);
                return next[node + (static_cast<std::size_t>(jc) - id[axis]) * vf.strides[axis]];
            };

            // Frozen gradient in the goodwill direction (central, one-sided
            // at the boundary) fixes the control for this step.
            const double h0 = grid.axes[0].h();
            double p0;
            if (id[0] == 0)
                p0 = (-3.0 * at(0, 0) + 4.0 * at(0, 1) - at(0, 2)) / (2.0 * h0);
            else if (id[0] + 1 == grid.axes[0].count)
                p0 = (3.0 * at(0, 0) - 4.0 * at(0, -1) + at(0, -2)) / (2.0 * h0);
            else
                p0 = (at(0, 1) - at(0, -1)) / (2.0 * h0);
            const double alpha = std::min(m.alpha_cap, optimal_control(p0, m.c0, m.nu));

            Vec b(n_axes);
            detail::reduced_drift(m, vf.reduced, x, alpha, b);

            double h_term = f_table[id[0]] + m.nu * alpha * alpha;
            for (std::size_t a = 0; a < n_axes; ++a) {
                const double h = grid.axes[a].h();
                if (b[a] > 0.0)
                    h_term += b[a] * (at(a, 1) - at(a, 0)) / h;
                else
                    h_term += b[a] * (at(a, 0) - at(a, -1)) / h;
            }
            const double sig = m.sigma0(x[0]);
            h_term += 0.5 * sig * sig * (at(0, 1) - 2.0 * at(0, 0) + at(0, -1)) / (h0 * h0);

            cur[node] = at(0, 0) + dt * h_term;
        });

        for (std::size_t node = 0; node < n_nodes; ++node)
            if (!std::isfinite(cur[node])) {
                std::size_t rest = node;
                std::string loc;
                for (std::size_t a = 0; a < n_axes; ++a) {
                    loc += std::to_string(rest / vf.strides[a]);
                    rest %= vf.strides[a];
                    if (a + 1 < n_axes) loc += ",";
                }
                throw NumericalFailure("solve_hjb: non-finite value at slice " +
                                       std::to_string(k) + " node (" + loc + ")");
            }
    }
    return vf;
}

/// Fitted semiconvexity constant of v(t, .) along weak-norm segments:
/// the largest violation of midpoint convexity over grid-node triples,
/// normalized by the squared weak-norm separation of lifted representatives
/// with block-constant memory. Node triples avoid interpolation kinks, so
/// the estimate reflects the computed solution rather than the interpolant.
inline double fitted_semiconvexity(const ValueFunction& v, const AdvertisingModel& m,
                                   std::size_t slice, std::size_t n_samples = 4000,
                                   std::uint64_t seed = 1) {
    const GridSpec& grid = v.grid;
    const std::size_t dims = grid.dim();
    double worst = 0.0;
    for (std::uint64_t k = 0; k < n_samples; ++k) {
        std::vector<long> center(dims), step(dims);
        bool degenerate = true;
        for (std::size_t a = 0; a < dims; ++a) {
            const auto n = static_cast<long>(grid.axes[a].count);
            center[a] = n / 4 + static_cast<long>(rng::counter_word(seed, k, a, 0) %
                                                  static_cast<std::uint64_t>(n / 2));
            step[a] = static_cast<long>(rng::counter_word(seed, k, a, 1) % 9) - 4;
            if (step[a] != 0) degenerate = false;
        }
        if (degenerate) continue;
        bool in_range = true;
        std::size_t f_lo = 0, f_mid = 0, f_hi = 0;
        for (std::size_t a = 0; a < dims; ++a) {
            const long lo = center[a] - step[a], hi = center[a] + step[a];
            if (lo < 0 || hi < 0 || lo >= static_cast<long>(grid.axes[a].count) ||
                hi >= static_cast<long>(grid.axes[a].count)) {
                in_range = false;
                break;
            }
            f_lo += static_cast<std::size_t>(lo) * v.strides[a];
            f_mid += static_cast<std::size_t>(center[a]) * v.strides[a];
            f_hi += static_cast<std::size_t>(hi) * v.strides[a];
        }
        if (!in_range) continue;
        const double s =
            0.5 * v.values[slice][f_lo] + 0.5 * v.values[slice][f_hi] - v.values[slice][f_mid];
        if (s >= 0.0) continue;
        LiftedState la = constant_history_state(grid.axes[0].coord(center[0] - step[0]),
                                                m.m_mem, m.d);
        LiftedState lb = constant_history_state(grid.axes[0].coord(center[0] + step[0]),
                                                m.m_mem, m.d);
        for (std::size_t blk = 0; blk < v.reduced.m_hjb; ++blk)
            for (std::size_t j : v.reduced.blocks[blk]) {
                la.memory[j] = grid.axes[1 + blk].coord(center[1 + blk] - step[1 + blk]);
                lb.memory[j] = grid.axes[1 + blk].coord(center[1 + blk] + step[1 + blk]);
            }
        Vec dv = m.op.weighted(la);
        const Vec bv = m.op.weighted(lb);
        for (std::size_t i = 0; i < dv.size(); ++i) dv[i] -= bv[i];
        const double sep = weak_norm_weighted(m.op, dv);
        if (sep < 1e-8) continue;
        worst = std::max(worst, -s / (0.25 * sep * sep));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Feedback synthesis
// ---------------------------------------------------------------------------

/// Synthesized optimal feedback: advertising rate alpha*(t, x) and the
/// closed-loop goodwill drift. Full lifted states are first compressed
/// through the value function's reduced map.
struct FeedbackPolicy {
    const ValueFunction* value = nullptr;
    const AdvertisingModel* model = nullptr;
    const MeasureFlow* flow = nullptr;
    // Compression map matching the model the policy is evaluated against;
    // coincides with value->reduced when the model is the one the value
    // function was solved on, and rebinds the block averages to a finer
    // memory grid otherwise.
    ReducedMap eval_map;
    std::shared_ptr<std::atomic<std::uint64_t>> cap_hits =
        std::make_shared<std::atomic<std::uint64_t>>(0);

    double alpha_star_reduced(double t, const Vec& xr) const {
        const GradientResult g = gradient(*value, t, xr);
        double a = optimal_control(g.p[0], model->c0, model->nu);
        if (a > model->alpha_cap) {
            a = model->alpha_cap;
            cap_hits->fetch_add(1, std::memory_order_relaxed);
        }
        return a;
    }

    double alpha_star(double t, const LiftedState& x) const {
        return alpha_star_reduced(t, eval_map.apply(*model, x));
    }

    /// Goodwill component of the divergence drift w = -b_tilde(x, alpha*);
    /// the memory components vanish.
    double w_goodwill(double t, const LiftedState& x) const {
        const Vec xr = eval_map.apply(*model, x);
        const double a = alpha_star_reduced(t, xr);
        const double z = delay_integral(*model, x);
        return -(model->b0(x.y0, z) + x.y0 + model->c0 * a);
    }
};

inline FeedbackPolicy synthesize_feedback(const ValueFunction& v, const AdvertisingModel& m,
                                          const MeasureFlow& flow) {
    FeedbackPolicy p;
    p.value = &v;
    p.model = &m;
    p.flow = &flow;
    p.eval_map = make_reduced_map(m, v.reduced.m_hjb);
    return p;
}

} // namespace mfg

#endif
