#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfg/linalg.hpp"
#include "mfg/rng.hpp"

using namespace mfg;

namespace {
Mat random_mat(std::size_t n, std::uint64_t seed) {
    Mat a(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) a(i, j) = rng::normal(seed, i, j);
    return a;
}
} // namespace

TEST_CASE("lu solve reproduces the right hand side") {
    const std::size_t n = 17;
    Mat a = random_mat(n, 11) + 5.0 * Mat::identity(n);
    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = rng::normal(12, i, 0);
    const Vec b = matvec(a, x);
    const Vec x2 = lu_solve(lu_factor(a), b);
    for (std::size_t i = 0; i < n; ++i) CHECK(x2[i] == doctest::Approx(x[i]).epsilon(1e-10));
}

TEST_CASE("invert gives a two-sided inverse") {
    const std::size_t n = 12;
    Mat a = random_mat(n, 3) + 4.0 * Mat::identity(n);
    const Mat inv = invert(a);
    CHECK(frobenius_norm(a * inv - Mat::identity(n)) < 1e-10);
    CHECK(frobenius_norm(inv * a - Mat::identity(n)) < 1e-10);
}

TEST_CASE("lu_factor rejects singular input") {
    Mat a(2, 2);
    a(0, 0) = 1.0;
    a(0, 1) = 2.0;
    a(1, 0) = 2.0;
    a(1, 1) = 4.0;
    CHECK_THROWS_AS((void)lu_factor(a), NumericalFailure);
}

TEST_CASE("jacobi eigensym diagonalizes a symmetric matrix") {
    const std::size_t n = 20;
    Mat g = random_mat(n, 7);
    Mat a = g * transpose(g); // SPD
    SymEigen eg = jacobi_eigensym(a);
    for (std::size_t k = 0; k < n; ++k) {
        Vec v(n);
        for (std::size_t i = 0; i < n; ++i) v[i] = eg.vectors(i, k);
        const Vec av = matvec(a, v);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(av[i] == doctest::Approx(eg.values[k] * v[i]).epsilon(1e-8).scale(1.0 + frobenius_norm(a)));
        if (k > 0) CHECK(eg.values[k - 1] >= eg.values[k]);
    }
}

TEST_CASE("sym_sqrt squares back") {
    const std::size_t n = 9;
    Mat g = random_mat(n, 21);
    Mat a = g * transpose(g) + 0.1 * Mat::identity(n);
    const Mat r = sym_sqrt(a);
    CHECK(frobenius_norm(r * r - a) < 1e-9 * (1.0 + frobenius_norm(a)));
}

TEST_CASE("cholesky succeeds on SPD and fails otherwise") {
    Mat g = random_mat(6, 5);
    Mat spd = g * transpose(g) + Mat::identity(6);
    const Mat l = cholesky(spd);
    CHECK(frobenius_norm(l * transpose(l) - spd) < 1e-10 * (1.0 + frobenius_norm(spd)));
    Mat neg = -1.0 * Mat::identity(3);
    CHECK_THROWS_AS((void)cholesky(neg), NumericalFailure);
}

TEST_CASE("spectral norm matches the top eigenvalue of a symmetric matrix") {
    Mat a(2, 2);
    a(0, 0) = 3.0;
    a(1, 1) = 1.0;
    CHECK(spectral_norm(a) == doctest::Approx(3.0).epsilon(1e-8));
}
