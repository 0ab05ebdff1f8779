#ifndef MFG_MODELS_HPP
#define MFG_MODELS_HPP

// Concrete game definitions: the optimal-advertising model with delayed
// goodwill dynamics, a small library of monotone couplings, and sampled
// audits of the structural assumptions the solver relies on.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfg/measure_transport.hpp"
#include "mfg/operator_core.hpp"
#include "mfg/rng.hpp"

namespace mfg {

/// Bounded diffusion coefficient acting on the goodwill coordinate only
/// (the memory carries no noise; the diffusion is degenerate by design).
struct Sigma0Spec {
    enum class Kind { constant, bounded_decay };
    Kind kind = Kind::bounded_decay;
    double scale = 0.25;

    double operator()(double y) const {
        return kind == Kind::constant ? scale : scale / std::sqrt(1.0 + y * y);
    }
    double bound() const { return std::fabs(scale); }
};

/// Goodwill decay drift, default b0(y, z) = -kappa tanh(y) + beta tanh(z)
/// (bounded Lipschitz) with z the kernel-weighted memory integral. The
/// linear variant -kappa y + beta z exists for closed-form oracles.
struct B0Spec {
    enum class Kind { tanh_decay, linear };
    Kind kind = Kind::tanh_decay;
    double kappa = 1.0;
    double beta = 0.5;

    double operator()(double y, double z) const {
        if (kind == Kind::linear) return -kappa * y + beta * z;
        return -kappa * std::tanh(y) + beta * std::tanh(z);
    }
    double bound() const { return std::fabs(kappa) + std::fabs(beta); }
    double lipschitz() const { return std::max(std::fabs(kappa), std::fabs(beta)); }
};

enum class EtaKind { zero, constant, exponential, linear };

inline Vec sample_eta(EtaKind kind, double d, std::size_t m_mem) {
    Vec eta(m_mem, 0.0);
    const double h = d / static_cast<double>(m_mem);
    for (std::size_t j = 0; j < m_mem; ++j) {
        const double theta = -(static_cast<double>(m_mem - j)) * h;
        switch (kind) {
            case EtaKind::zero: eta[j] = 0.0; break;
            case EtaKind::constant: eta[j] = 1.0; break;
            case EtaKind::exponential: eta[j] = std::exp(theta); break;
            case EtaKind::linear: eta[j] = 1.0 + theta / d; break;
        }
    }
    return eta;
}

/// The advertising game: delayed goodwill dynamics, quadratic advertising
/// cost, logistic own-goodwill term and a Gaussian crowding interaction.
struct AdvertisingModel {
    double d = 0.5;
    double T = 1.0;
    std::size_t m_mem = 32;
    EtaKind eta_kind = EtaKind::exponential;
    B0Spec b0;
    Sigma0Spec sigma0;
    double c0 = 1.0;               // advertising effectiveness
    double nu = 1.0;               // control cost
    double coupling_strength = 1.0;
    std::string name = "advertising";

    Vec eta;                        // kernel samples on the memory grid
    LiftedOperator op;              // delay lift for (d, m_mem)
    double alpha_cap = 0.0;         // hard cap on the feedback control

    /// Optional overrides for controlled experiments; when empty the
    /// standard costs below apply.
    std::function<double(const LiftedState&, const EmpiricalMeasure&)> terminal_override;
    std::function<double(double)> coupling_override; // x0 -> F, measure-free

    std::size_t dim() const { return 1 + m_mem; }
};

namespace detail {
/// Lipschitz bounds of the logistic and Gaussian-kernel terms in y0.
inline double coupling_x_lipschitz(double strength) {
    return 0.25 + std::exp(-0.5) * std::fabs(strength);
}
} // namespace detail

inline void finalize_model(AdvertisingModel& m) {
    if (!(m.nu > 0.0)) throw std::invalid_argument("AdvertisingModel: nu must be positive");
    if (!(m.c0 > 0.0)) throw std::invalid_argument("AdvertisingModel: c0 must be positive");
    if (!(m.T > 0.0)) throw std::invalid_argument("AdvertisingModel: T must be positive");
    m.op = build_delay_lift(m.d, m.m_mem);
    m.eta = sample_eta(m.eta_kind, m.d, m.m_mem);
    // Control cap from the value-function Lipschitz estimate: the gradient
    // never exceeds T * Lip(f1) + Lip(G), so the unconstrained argmax stays
    // below c0 * that / (2 nu); a safety factor of 2 on top.
    const double lf = detail::coupling_x_lipschitz(m.coupling_strength);
    m.alpha_cap = std::max(1.0, 2.0 * m.c0 * (m.T * lf + lf) / (2.0 * m.nu));
}

inline AdvertisingModel make_advertising_default() {
    AdvertisingModel m;
    m.name = "advertising-default";
    finalize_model(m);
    return m;
}

/// Memory decouples entirely: eta = 0, so the goodwill dynamics are 1-D.
inline AdvertisingModel make_zero_delay_oracle() {
    AdvertisingModel m;
    m.name = "zero-delay-oracle";
    m.eta_kind = EtaKind::zero;
    finalize_model(m);
    return m;
}

/// Coupling off and control cost effectively infinite: the population flow
/// no longer depends on itself and the fixed point is reached in one step.
inline AdvertisingModel make_decoupled() {
    AdvertisingModel m;
    m.name = "decoupled";
    m.coupling_strength = 0.0;
    m.nu = 1e12;
    finalize_model(m);
    return m;
}

inline AdvertisingModel make_preset(const std::string& name) {
    if (name == "advertising-default") return make_advertising_default();
    if (name == "zero-delay-oracle") return make_zero_delay_oracle();
    if (name == "decoupled") return make_decoupled();
    throw std::invalid_argument("unknown model preset: " + name);
}

// ---------------------------------------------------------------------------
// Cost structure
// ---------------------------------------------------------------------------

/// Kernel-weighted memory integral sum_j w_j eta_j mem_j.
inline double delay_integral(const AdvertisingModel& m, const LiftedState& x) {
    double s = 0.0;
    for (std::size_t j = 0; j < m.m_mem; ++j)
        s += m.op.quad_weights[j] * m.eta[j] * x.memory[j];
    return s;
}

/// Coupling term F(x, mu): logistic own-goodwill reward plus the Gaussian
/// crowding penalty against the population.
inline double coupling_F(const AdvertisingModel& m, double x0, const EmpiricalMeasure& mu) {
    if (m.coupling_override) return m.coupling_override(x0);
    double inter = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const double dz = x0 - mu.particles[i].y0;
        inter += mu.weights[i] * std::exp(-0.5 * dz * dz);
    }
    return -1.0 / (1.0 + std::exp(x0)) + m.coupling_strength * inter;
}

/// Same coupling evaluated against raw goodwill samples (used by solver
/// code paths that carry marginals only).
inline double coupling_F_samples(const AdvertisingModel& m, double x0, const Vec& z0s,
                                 const Vec& ws) {
    if (m.coupling_override) return m.coupling_override(x0);
    double inter = 0.0;
    for (std::size_t i = 0; i < z0s.size(); ++i) {
        const double dz = x0 - z0s[i];
        inter += ws[i] * std::exp(-0.5 * dz * dz);
    }
    return -1.0 / (1.0 + std::exp(x0)) + m.coupling_strength * inter;
}

inline double running_cost(const AdvertisingModel& m, const LiftedState& x, double alpha,
                           const EmpiricalMeasure& mu) {
    if (alpha < 0.0) throw std::invalid_argument("running_cost: alpha must be nonnegative");
    return coupling_F(m, x.y0, mu) + m.nu * alpha * alpha;
}

inline double terminal_cost(const AdvertisingModel& m, const LiftedState& x,
                            const EmpiricalMeasure& mu) {
    if (m.terminal_override) return m.terminal_override(x, mu);
    return coupling_F(m, x.y0, mu);
}

/// Control-free part of the Hamiltonian: the supremum over advertising
/// rates of the drift/cost pairing, which has a closed quadratic branch for
/// negative goodwill gradients.
inline double hamiltonian0(const AdvertisingModel& m, double y0, double z, double p0) {
    double h = -m.b0(y0, z) * p0 - y0 * p0;
    if (p0 < 0.0) h += m.c0 * m.c0 * p0 * p0 / (4.0 * m.nu);
    return h;
}

/// Goodwill component of the optimal closed-loop drift -H_p: minus the
/// shifted drift evaluated at the optimal advertising rate.
inline double hamiltonian0_p(const AdvertisingModel& m, double y0, double z, double p0) {
    const double alpha = std::max(0.0, -m.c0 * p0 / (2.0 * m.nu));
    return -(m.b0(y0, z) + y0 + m.c0 * alpha);
}

// ---------------------------------------------------------------------------
// Coupling library
// ---------------------------------------------------------------------------

using CouplingFn = std::function<double(const LiftedState&, const EmpiricalMeasure&)>;

/// Lasry-Lions pairing <F(., mu1) - F(., mu2), mu1 - mu2>; nonnegative for
/// monotone couplings.
inline double coupling_pairing(const CouplingFn& F, const EmpiricalMeasure& mu1,
                               const EmpiricalMeasure& mu2) {
    if (mu1.size() == 0 || mu2.size() == 0)
        throw std::invalid_argument("coupling_pairing: empty measure");
    double s = 0.0;
    for (std::size_t i = 0; i < mu1.size(); ++i)
        s += mu1.weights[i] * (F(mu1.particles[i], mu1) - F(mu1.particles[i], mu2));
    for (std::size_t j = 0; j < mu2.size(); ++j)
        s -= mu2.weights[j] * (F(mu2.particles[j], mu1) - F(mu2.particles[j], mu2));
    return s;
}

/// Named interaction presets. All are monotone in the measure argument by
/// construction; the separable ones expose the algebraic identity
/// pairing = <G(I1) - G(I2), I1 - I2> with I the h-moment.
struct CouplingSpec {
    enum class Kind { separable_scalar, separable_vector, convolution, gaussian_goodwill };
    Kind kind = Kind::gaussian_goodwill;
    double strength = 1.0;

    CouplingFn build() const {
        switch (kind) {
            case Kind::separable_scalar: {
                // F1(x, mu) = h1(x) G1(int h1 dmu), h1 = tanh(y0), G1 = id.
                return [](const LiftedState& x, const EmpiricalMeasure& mu) {
                    double m1 = 0.0;
                    for (std::size_t i = 0; i < mu.size(); ++i)
                        m1 += mu.weights[i] * std::tanh(mu.particles[i].y0);
                    return std::tanh(x.y0) * m1;
                };
            }
            case Kind::separable_vector: {
                // F2(x, mu) = <h2(x), G2(int h2 dmu)> with a two-component
                // bounded h2 and G2 = identity.
                return [](const LiftedState& x, const EmpiricalMeasure& mu) {
                    double a = 0.0, b = 0.0;
                    for (std::size_t i = 0; i < mu.size(); ++i) {
                        a += mu.weights[i] * std::tanh(mu.particles[i].y0);
                        b += mu.weights[i] * 0.5 * std::sin(mu.particles[i].y0);
                    }
                    return std::tanh(x.y0) * a + 0.5 * std::sin(x.y0) * b;
                };
            }
            case Kind::convolution: {
                // F(x, mu) = sum_k l(rho*mu(z_k)) rho(z_k - x) nu_k on a
                // fixed grid of base points, l = tanh, rho = Gaussian.
                return [](const LiftedState& x, const EmpiricalMeasure& mu) {
                    const int nz = 41;
                    double acc = 0.0;
                    for (int k = 0; k < nz; ++k) {
                        const double z = -5.0 + 10.0 * k / (nz - 1);
                        double conv = 0.0;
                        for (std::size_t i = 0; i < mu.size(); ++i) {
                            const double dz = z - mu.particles[i].y0;
                            conv += mu.weights[i] * std::exp(-0.5 * dz * dz);
                        }
                        const double dx = z - x.y0;
                        acc += std::tanh(conv) * std::exp(-0.5 * dx * dx) / nz;
                    }
                    return acc;
                };
            }
            case Kind::gaussian_goodwill:
            default: {
                const double s = strength;
                return [s](const LiftedState& x, const EmpiricalMeasure& mu) {
                    double inter = 0.0;
                    for (std::size_t i = 0; i < mu.size(); ++i) {
                        const double dz = x.y0 - mu.particles[i].y0;
                        inter += mu.weights[i] * std::exp(-0.5 * dz * dz);
                    }
                    return -1.0 / (1.0 + std::exp(x.y0)) + s * inter;
                };
            }
        }
    }
};

// ---------------------------------------------------------------------------
// Assumption audits
// ---------------------------------------------------------------------------

struct AssumptionAudit {
    std::string name;
    bool pass = false;
    double worst = 0.0;
    std::string detail;
};

struct AssumptionReport {
    std::vector<AssumptionAudit> audits;
    bool all_pass() const {
        for (const auto& a : audits)
            if (!a.pass) return false;
        return true;
    }
};

namespace detail {

inline LiftedState random_state(const AdvertisingModel& m, std::uint64_t seed, std::uint64_t k) {
    LiftedState s;
    s.d = m.d;
    s.y0 = 2.5 * rng::normal(seed, k, 0);
    s.memory.resize(m.m_mem);
    for (std::size_t j = 0; j < m.m_mem; ++j)
        s.memory[j] = 2.5 * rng::normal(seed, k, 1 + j);
    return s;
}

inline EmpiricalMeasure random_cloud(const AdvertisingModel& m, std::uint64_t seed,
                                     std::uint64_t tag, std::size_t n) {
    std::vector<LiftedState> pts;
    pts.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        pts.push_back(random_state(m, rng::fold(seed, tag), 100 + i));
    return EmpiricalMeasure::uniform(std::move(pts));
}

} // namespace detail

/// Sampled audit of the structural assumptions: Lipschitz quotients of the
/// Hamiltonian and its gradient, boundedness, separability, convexity in
/// the gradient variable, and the monotonicity pairings of the coupling and
/// terminal costs.
inline AssumptionReport audit_assumptions(const AdvertisingModel& m, std::uint64_t seed = 2024,
                                          std::size_t n_samples = 50) {
    AssumptionReport rep;
    const GroundMetric weak = GroundMetric::weak_ground(m.op);

    auto ham = [&](const LiftedState& x, double p0, const EmpiricalMeasure& mu) {
        return hamiltonian0(m, x.y0, delay_integral(m, x), p0) - coupling_F(m, x.y0, mu);
    };
    auto ham_p = [&](const LiftedState& x, double p0) {
        return hamiltonian0_p(m, x.y0, delay_integral(m, x), p0);
    };

    // Smallness of measures keeps the exact LP cheap inside the audit.
    std::vector<EmpiricalMeasure> clouds;
    for (std::size_t c = 0; c < 6; ++c) clouds.push_back(detail::random_cloud(m, seed, c, 12));

    {   // H Lipschitz in (x, p, mu).
        double worst = 0.0;
        for (std::size_t k = 0; k < n_samples; ++k) {
            const LiftedState x = detail::random_state(m, seed, 2 * k);
            const LiftedState y = detail::random_state(m, seed, 2 * k + 1);
            const double p = 3.0 * rng::normal(seed, 7000 + k, 0);
            const double q = 3.0 * rng::normal(seed, 7000 + k, 1);
            const auto& mu = clouds[k % clouds.size()];
            const auto& nu = clouds[(k + 1) % clouds.size()];
            const double dx = weak_norm_weighted(m.op, [&] {
                Vec a = m.op.weighted(x), b = m.op.weighted(y);
                for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
                return a;
            }());
            const double dmu = wasserstein1(mu, nu, weak);
            const double num = std::fabs(ham(x, p, mu) - ham(y, q, nu));
            const double den =
                (dx + dmu) * (1.0 + std::fabs(p) + std::fabs(q)) + std::fabs(p - q) + 1e-12;
            worst = std::max(worst, num / den);
        }
        rep.audits.push_back({"hamiltonian_lipschitz", worst < 100.0, worst,
                              "sampled quotient |dH| / ((dx+dmu)(1+|p|+|q|)+|dp|)"});
    }
    {   // H(.,0,.) bounded.
        double worst = 0.0;
        for (std::size_t k = 0; k < n_samples; ++k) {
            const LiftedState x = detail::random_state(m, seed, 500 + k);
            worst = std::max(worst, std::fabs(ham(x, 0.0, clouds[k % clouds.size()])));
        }
        const double cap = 2.0 + std::fabs(m.coupling_strength);
        rep.audits.push_back({"hamiltonian_zero_gradient_bounded", worst <= cap, worst,
                              "sup |H(.,0,.)| vs cap " + std::to_string(cap)});
    }
    {   // H_p Lipschitz.
        double worst = 0.0;
        for (std::size_t k = 0; k < n_samples; ++k) {
            const LiftedState x = detail::random_state(m, seed, 1000 + 2 * k);
            const LiftedState y = detail::random_state(m, seed, 1000 + 2 * k + 1);
            const double p = 3.0 * rng::normal(seed, 8000 + k, 0);
            const double q = 3.0 * rng::normal(seed, 8000 + k, 1);
            Vec a = m.op.weighted(x), b = m.op.weighted(y);
            for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
            const double den = weak_norm_weighted(m.op, a) + std::fabs(p - q) + 1e-12;
            worst = std::max(worst, std::fabs(ham_p(x, p) - ham_p(y, q)) / den);
        }
        rep.audits.push_back({"hamiltonian_gradient_lipschitz", worst < 100.0, worst,
                              "sampled quotient |dH_p| / (dx + |dp|)"});
    }
    {   // Diffusion bounded and weak-norm Lipschitz.
        double sup = 0.0;
        for (int i = -50; i <= 50; ++i) sup = std::max(sup, std::fabs(m.sigma0(i)));
        double worst = 0.0;
        for (std::size_t k = 0; k < n_samples; ++k) {
            const LiftedState x = detail::random_state(m, seed, 3000 + 2 * k);
            const LiftedState y = detail::random_state(m, seed, 3000 + 2 * k + 1);
            Vec a = m.op.weighted(x), b = m.op.weighted(y);
            for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
            const double den = weak_norm_weighted(m.op, a) + 1e-12;
            worst = std::max(worst, std::fabs(m.sigma0(x.y0) - m.sigma0(y.y0)) / den);
        }
        rep.audits.push_back({"sigma_bounded_lipschitz",
                              std::isfinite(sup) && sup <= m.sigma0.bound() + 1e-12 && worst < 100.0,
                              worst, "sup sigma = " + std::to_string(sup)});
    }
    {   // Terminal cost weak-norm Lipschitz (sampled quotient).
        double worst = 0.0;
        for (std::size_t k = 0; k < n_samples; ++k) {
            const LiftedState x = detail::random_state(m, seed, 4000 + 2 * k);
            const LiftedState y = detail::random_state(m, seed, 4000 + 2 * k + 1);
            const auto& mu = clouds[k % clouds.size()];
            Vec a = m.op.weighted(x), b = m.op.weighted(y);
            for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
            const double den = weak_norm_weighted(m.op, a) + 1e-12;
            worst = std::max(worst,
                             std::fabs(terminal_cost(m, x, mu) - terminal_cost(m, y, mu)) / den);
        }
        rep.audits.push_back(
            {"terminal_cost_lipschitz", worst < 100.0, worst, "sampled quotient"});
    }
    {   // Monotonicity of the coupling and terminal interaction.
        CouplingFn F = [&](const LiftedState& x, const EmpiricalMeasure& mu) {
            return coupling_F(m, x.y0, mu);
        };
        double worst = 0.0;
        for (std::size_t k = 0; k < n_samples; ++k) {
            const auto mu1 = detail::random_cloud(m, seed, 40 + 2 * k, 10);
            const auto mu2 = detail::random_cloud(m, seed, 41 + 2 * k, 10);
            worst = std::min(worst, coupling_pairing(F, mu1, mu2));
        }
        rep.audits.push_back({"coupling_monotone", worst >= -1e-9, worst,
                              "smallest Lasry-Lions pairing over random pairs"});
        rep.audits.push_back({"terminal_monotone", worst >= -1e-9, worst,
                              "terminal interaction has the same kernel"});
    }
    {   // Separated structure: H(x,p,mu1) - H(x,p,mu2) independent of p.
        double worst = 0.0;
        for (std::size_t k = 0; k < 20; ++k) {
            const LiftedState x = detail::random_state(m, seed, 5000 + k);
            const auto& mu1 = clouds[k % clouds.size()];
            const auto& mu2 = clouds[(k + 3) % clouds.size()];
            const double p = 3.0 * rng::normal(seed, 9000 + k, 0);
            const double q = 3.0 * rng::normal(seed, 9000 + k, 1);
            const double d1 = ham(x, p, mu1) - ham(x, p, mu2);
            const double d2 = ham(x, q, mu1) - ham(x, q, mu2);
            worst = std::max(worst, std::fabs(d1 - d2));
        }
        rep.audits.push_back({"separated_structure", worst <= 1e-12, worst,
                              "variation of H(x,p,mu1)-H(x,p,mu2) over p"});
    }
    {   // Midpoint convexity of H0 in the gradient variable.
        double worst = 0.0;
        for (std::size_t k = 0; k < n_samples; ++k) {
            const LiftedState x = detail::random_state(m, seed, 6000 + k);
            const double z = delay_integral(m, x);
            const double p = 4.0 * rng::normal(seed, 9500 + k, 0);
            const double q = 4.0 * rng::normal(seed, 9500 + k, 1);
            const double viol = hamiltonian0(m, x.y0, z, 0.5 * (p + q)) -
                                0.5 * (hamiltonian0(m, x.y0, z, p) + hamiltonian0(m, x.y0, z, q));
            worst = std::max(worst, viol);
        }
        rep.audits.push_back({"hamiltonian_convex_in_p", worst <= 1e-9, worst,
                              "midpoint convexity violation"});
    }
    return rep;
}

} // namespace mfg

#endif
