#ifndef MFG_OPERATOR_CORE_HPP
#define MFG_OPERATOR_CORE_HPP

// Finite-dimensional lift of a scalar delay equation. The state space is
// R x L^2(-d,0): current goodwill level plus a memory segment sampled on a
// uniform grid. The transport operator, its dissipative shift, the weak-norm
// operator B and the associated spectral machinery are assembled here.
//
// Internally everything is expressed in quadrature-orthonormal coordinates
// x_hat = W^{1/2} x (W = diag(1, quad_weights)), so the plain matrix
// transpose is the adjoint for the discretized inner product.
//
// The machinery is wired up for the delay transport lift only. Other
// dissipative generator families (second-order elliptic operators, say)
// would enter through the same resolvent-pair identity for B, but are not
// built here. In finite dimensions the compactness of B is vacuous; its
// decaying eigenvalue profile stands in as the diagnostic.

#include <cmath>
#include <cstddef>
#include <stdexcept>

#include "mfg/linalg.hpp"

namespace mfg {

/// One agent state: goodwill level plus sampled history.
/// memory[j] holds y(t + theta_j) with theta_j = -(M - j) * (d / M),
/// i.e. oldest sample first, newest sample last (at theta = -d/M).
struct LiftedState {
    double y0 = 0.0;
    Vec memory;
    double d = 1.0;

    std::size_t mem_size() const { return memory.size(); }
    std::size_t dim() const { return 1 + memory.size(); }
};

/// Convenience: state with a flat history, y(theta) = y0 for all theta.
inline LiftedState constant_history_state(double y0, std::size_t m_mem, double d) {
    LiftedState s;
    s.y0 = y0;
    s.memory.assign(m_mem, y0);
    s.d = d;
    return s;
}

/// Discretized transport machinery for the delay lift.
///
/// A_tilde is the shifted transport generator in weighted coordinates:
/// row 0 carries the -y0 shift, memory rows carry first-order upwind
/// differencing of the segment derivative with the node nearest theta = 0
/// coupled to y0. B solves ((I - A_tilde)(I - A_tilde^T)) B = I, B_half is
/// its symmetric PSD square root, and the eigenbasis of B (decreasing
/// eigenvalues) defines the spectral projections.
struct LiftedOperator {
    double d = 1.0;
    std::size_t m_mem = 1;
    Vec quad_weights;   // L^2 weights on the memory grid, total mass d
    Vec coord_scale;    // sqrt of diag(1, quad_weights)
    Mat A_tilde;        // shifted transport generator, weighted coordinates
    Mat B;              // weak-norm operator
    Mat B_half;         // symmetric PSD square root of B
    Mat eigenbasis;     // eigenvectors of B as columns, eigenvalues decreasing
    Vec eigenvalues;
    LuFactors A_tilde_lu; // factorization of A_tilde (used by diagnostics)

    std::size_t dim() const { return 1 + m_mem; }
    double mem_spacing() const { return d / static_cast<double>(m_mem); }

    /// Raw state -> weighted coordinates.
    Vec weighted(const LiftedState& x) const {
        if (x.mem_size() != m_mem)
            throw std::invalid_argument("LiftedOperator: state dimension mismatch");
        Vec v(dim());
        v[0] = x.y0;
        for (std::size_t j = 0; j < m_mem; ++j) v[1 + j] = coord_scale[1 + j] * x.memory[j];
        return v;
    }

    /// Weighted coordinates -> raw state.
    LiftedState unweighted(const Vec& v) const {
        if (v.size() != dim())
            throw std::invalid_argument("LiftedOperator: vector dimension mismatch");
        LiftedState x;
        x.d = d;
        x.y0 = v[0];
        x.memory.resize(m_mem);
        for (std::size_t j = 0; j < m_mem; ++j) x.memory[j] = v[1 + j] / coord_scale[1 + j];
        return x;
    }
};

/// Trapezoid weights on the memory grid with the theta = 0 endpoint mass
/// folded into the newest node (the ghost value there is y0 itself).
inline Vec delay_quad_weights(double d, std::size_t m_mem) {
    const double h = d / static_cast<double>(m_mem);
    Vec w(m_mem, h);
    w[0] -= 0.5 * h;
    w[m_mem - 1] += 0.5 * h;
    return w;
}

/// Assemble the delay lift: shifted transport operator, weak-norm operator,
/// square root and eigenbasis.
inline LiftedOperator build_delay_lift(double d, std::size_t m_mem) {
    if (!(d > 0.0)) throw std::invalid_argument("build_delay_lift: d must be positive");
    if (m_mem == 0) throw std::invalid_argument("build_delay_lift: M_mem must be >= 1");

    LiftedOperator op;
    op.d = d;
    op.m_mem = m_mem;
    op.quad_weights = delay_quad_weights(d, m_mem);
    const std::size_t n = op.dim();
    op.coord_scale.assign(n, 1.0);
    for (std::size_t j = 0; j < m_mem; ++j) op.coord_scale[1 + j] = std::sqrt(op.quad_weights[j]);

    // Nodal operator: row 0 is the -y0 shift; memory row j approximates the
    // segment derivative by (x_{j+1} - x_j)/h with ghost x_M = y0.
    const double h = op.mem_spacing();
    Mat raw(n, n);
    raw(0, 0) = -1.0;
    for (std::size_t j = 0; j < m_mem; ++j) {
        raw(1 + j, 1 + j) = -1.0 / h;
        if (j + 1 < m_mem)
            raw(1 + j, 2 + j) = 1.0 / h;
        else
            raw(1 + j, 0) = 1.0 / h;
    }

    // Similarity transform into quadrature-orthonormal coordinates.
    op.A_tilde = Mat(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            op.A_tilde(i, j) = op.coord_scale[i] * raw(i, j) / op.coord_scale[j];

    Mat m_minus = Mat::identity(n) - op.A_tilde;           // I - A_tilde
    Mat pair = m_minus * transpose(m_minus);               // (I-A)(I-A^T)
    Mat b;
    try {
        b = invert(pair);
    } catch (const NumericalFailure&) {
        throw NumericalFailure("build_delay_lift: resolvent pair is singular");
    }
    // Enforce exact symmetry before the eigendecomposition.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double s = 0.5 * (b(i, j) + b(j, i));
            b(i, j) = s;
            b(j, i) = s;
        }
    op.B = b;
    op.B_half = sym_sqrt(op.B);
    SymEigen eg = jacobi_eigensym(op.B);
    op.eigenvalues = eg.values;
    op.eigenbasis = eg.vectors;
    op.A_tilde_lu = lu_factor(op.A_tilde);
    return op;
}

/// || x ||_{-1} = sqrt(<B x, x>) in weighted coordinates.
inline double weak_norm_weighted(const LiftedOperator& op, const Vec& v) {
    if (v.size() != op.dim())
        throw std::invalid_argument("weak_norm: dimension mismatch");
    return std::sqrt(std::max(0.0, dot(matvec(op.B, v), v)));
}

inline double weak_norm(const LiftedOperator& op, const LiftedState& x) {
    return weak_norm_weighted(op, op.weighted(x));
}

/// Quadrature-weighted norm of the lifted state (the discrete H-norm).
inline double strong_norm(const LiftedOperator& op, const LiftedState& x) {
    return norm2(op.weighted(x));
}

/// Diagnostic norm induced by the plain inverse pair (A_tilde^-T A_tilde^-1).
/// In the continuum this norm dominates |y0| exactly; the operator B above
/// does not have that property, so the goodwill-domination check is reported
/// against this variant.
inline double weak_norm_inverse_pair(const LiftedOperator& op, const LiftedState& x) {
    Vec u = lu_solve(op.A_tilde_lu, op.weighted(x));
    return norm2(u);
}

/// Yosida approximation A_n = n A (n I - A)^{-1} of a square matrix.
inline Mat yosida(const Mat& a, unsigned n) {
    if (n == 0) throw std::invalid_argument("yosida: n must be positive");
    if (a.rows() != a.cols()) throw std::invalid_argument("yosida: square matrix required");
    Mat res = static_cast<double>(n) * Mat::identity(a.rows()) - a;
    Mat inv;
    try {
        inv = invert(res);
    } catch (const NumericalFailure&) {
        throw NumericalFailure("yosida: (nI - A) is singular");
    }
    return static_cast<double>(n) * (a * inv);
}

/// Orthogonal projection onto the span of the top-N eigenvectors of B.
inline LiftedState project(const LiftedOperator& op, const LiftedState& x, std::size_t n_modes) {
    if (n_modes < 1 || n_modes > op.dim())
        throw std::invalid_argument("project: N out of range");
    Vec v = op.weighted(x);
    Vec out(op.dim(), 0.0);
    for (std::size_t k = 0; k < n_modes; ++k) {
        double c = 0.0;
        for (std::size_t i = 0; i < op.dim(); ++i) c += op.eigenbasis(i, k) * v[i];
        for (std::size_t i = 0; i < op.dim(); ++i) out[i] += c * op.eigenbasis(i, k);
    }
    return op.unweighted(out);
}

} // namespace mfg

#endif
