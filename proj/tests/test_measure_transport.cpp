#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>

#include "mfg/measure_transport.hpp"
#include "mfg/rng.hpp"

using namespace mfg;

namespace {

/// 2x2 lift with identity B: the strong and weak grounds coincide with the
/// Euclidean distance on (y0, mem).
LiftedOperator euclidean_op() {
    LiftedOperator op = build_delay_lift(1.0, 1);
    op.B = Mat::identity(2);
    op.B_half = Mat::identity(2);
    return op;
}

LiftedState st(double y0, double mem = 0.0) {
    LiftedState s;
    s.d = 1.0;
    s.y0 = y0;
    s.memory = {mem};
    return s;
}

EmpiricalMeasure cloud_1d(const Vec& ys) {
    std::vector<LiftedState> pts;
    for (double y : ys) pts.push_back(st(y));
    return EmpiricalMeasure::uniform(std::move(pts));
}

EmpiricalMeasure random_cloud(std::size_t n, std::uint64_t seed) {
    std::vector<LiftedState> pts;
    for (std::size_t i = 0; i < n; ++i)
        pts.push_back(st(rng::normal(seed, i, 0), rng::normal(seed, i, 1)));
    return EmpiricalMeasure::uniform(std::move(pts));
}

/// Brute-force assignment oracle for uniform n-atom measures: the optimal
/// plan is a permutation, enumerated exhaustively.
double permutation_oracle(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                          const GroundMetric& g) {
    const auto xs = mfg::detail::ground_coords(mu, g);
    const auto ys = mfg::detail::ground_coords(nu, g);
    std::vector<std::size_t> perm(xs.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = 1e300;
    do {
        double c = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i)
            c += mfg::detail::euclid(xs[i], ys[perm[i]]);
        best = std::min(best, c / static_cast<double>(xs.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

} // namespace

TEST_CASE("invariants of empirical measures") {
    EmpiricalMeasure mu = cloud_1d({0.0, 1.0});
    CHECK_NOTHROW(mu.validate());
    mu.weights[0] = -0.1;
    CHECK_THROWS_AS(mu.validate(), std::invalid_argument);
    mu.weights = {0.6, 0.6};
    CHECK_THROWS_AS(mu.validate(), std::invalid_argument);
}

TEST_CASE("identity of indiscernibles and single-pair transport") {
    const LiftedOperator op = euclidean_op();
    const GroundMetric g = GroundMetric::strong_ground(op);
    const EmpiricalMeasure mu = random_cloud(9, 4);
    CHECK(wasserstein1(mu, mu, g) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(wasserstein1(cloud_1d({0.0}), cloud_1d({1.0}), g) == doctest::Approx(1.0));
}

TEST_CASE("three-atom example matches the enumeration oracle") {
    const LiftedOperator op = euclidean_op();
    const GroundMetric g = GroundMetric::strong_ground(op);
    const EmpiricalMeasure mu = cloud_1d({0.0, 1.0, 3.0});
    const EmpiricalMeasure nu = cloud_1d({0.0, 2.0, 3.0});
    const double lp = wasserstein1(mu, nu, g);
    CHECK(lp == doctest::Approx(permutation_oracle(mu, nu, g)).epsilon(1e-12));
    CHECK(lp == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("empty measures are rejected") {
    const LiftedOperator op = euclidean_op();
    EmpiricalMeasure empty;
    CHECK_THROWS_AS((void)wasserstein1(empty, cloud_1d({0.0}), GroundMetric::strong_ground(op)),
                    std::invalid_argument);
}

TEST_CASE("1-D exactness: LP equals the sorted-quantile formula") {
    const LiftedOperator op = euclidean_op();
    const GroundMetric g = GroundMetric::strong_ground(op);
    for (std::uint64_t trial = 0; trial < 30; ++trial) {
        const std::size_t n = 2 + rng::counter_word(50, trial, 0, 0) % 30;
        Vec xs(n), ys(n);
        for (std::size_t i = 0; i < n; ++i) {
            xs[i] = 3.0 * rng::normal(51, trial, i);
            ys[i] = 3.0 * rng::normal(52, trial, i);
        }
        const double lp = wasserstein1(cloud_1d(xs), cloud_1d(ys), g);
        Vec xs2 = xs, ys2 = ys;
        std::sort(xs2.begin(), xs2.end());
        std::sort(ys2.begin(), ys2.end());
        double quantile = 0.0;
        for (std::size_t i = 0; i < n; ++i) quantile += std::fabs(xs2[i] - ys2[i]);
        quantile /= static_cast<double>(n);
        CHECK(lp == doctest::Approx(quantile).epsilon(1e-10));
        // Independent route: the cumulative-distribution sweep.
        Vec w(n, 1.0 / static_cast<double>(n));
        CHECK(wasserstein1_sorted_1d(xs, w, ys, w) == doctest::Approx(quantile).epsilon(1e-10));
    }
}

TEST_CASE("metric axioms on random triples") {
    const LiftedOperator op = euclidean_op();
    const GroundMetric g = GroundMetric::strong_ground(op);
    for (std::uint64_t trial = 0; trial < 25; ++trial) {
        const EmpiricalMeasure a = random_cloud(7, 100 + 3 * trial);
        const EmpiricalMeasure b = random_cloud(9, 101 + 3 * trial);
        const EmpiricalMeasure c = random_cloud(8, 102 + 3 * trial);
        const double ab = wasserstein1(a, b, g);
        const double ba = wasserstein1(b, a, g);
        const double ac = wasserstein1(a, c, g);
        const double cb = wasserstein1(c, b, g);
        CHECK(std::fabs(ab - ba) <= 1e-9);
        CHECK(ab <= ac + cb + 1e-9);
    }
}

TEST_CASE("LP dual certificate is tight") {
    const LiftedOperator op = euclidean_op();
    const GroundMetric g = GroundMetric::weak_ground(op);
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        const TransportResult r =
            wasserstein1_result(random_cloud(12, 300 + trial), random_cloud(17, 400 + trial), g);
        CHECK(r.exact);
        CHECK(r.dual_gap <= 1e-9 * (1.0 + r.cost));
    }
}

TEST_CASE("weak distance bounded by the strong one times ||B_half||") {
    const LiftedOperator op = build_delay_lift(0.5, 6);
    const double bh_norm = std::sqrt(op.eigenvalues.front());
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        std::vector<LiftedState> xs, ys;
        for (std::size_t i = 0; i < 8; ++i) {
            LiftedState a, b;
            a.d = b.d = 0.5;
            a.y0 = rng::normal(600 + trial, i, 0);
            b.y0 = rng::normal(601 + trial, i, 0);
            a.memory.resize(6);
            b.memory.resize(6);
            for (std::size_t j = 0; j < 6; ++j) {
                a.memory[j] = rng::normal(600 + trial, i, 1 + j);
                b.memory[j] = rng::normal(601 + trial, i, 1 + j);
            }
            xs.push_back(a);
            ys.push_back(b);
        }
        const EmpiricalMeasure mu = EmpiricalMeasure::uniform(xs);
        const EmpiricalMeasure nu = EmpiricalMeasure::uniform(ys);
        const double ww = wasserstein1(mu, nu, GroundMetric::weak_ground(op));
        const double ws = wasserstein1(mu, nu, GroundMetric::strong_ground(op));
        CHECK(ww <= bh_norm * ws + 1e-9);
    }
}

TEST_CASE("transport cost is convex under mixtures") {
    const LiftedOperator op = euclidean_op();
    const GroundMetric g = GroundMetric::strong_ground(op);
    for (std::uint64_t trial = 0; trial < 10; ++trial) {
        const EmpiricalMeasure mu1 = random_cloud(6, 700 + trial);
        const EmpiricalMeasure mu2 = random_cloud(5, 710 + trial);
        const EmpiricalMeasure nu1 = random_cloud(7, 720 + trial);
        const EmpiricalMeasure nu2 = random_cloud(6, 730 + trial);
        const double lambda = 0.3 + 0.4 * rng::uniform01(740, trial, 0);
        const double lhs = wasserstein1(mixture(lambda, mu1, mu2), mixture(lambda, nu1, nu2), g);
        const double rhs =
            lambda * wasserstein1(mu1, nu1, g) + (1.0 - lambda) * wasserstein1(mu2, nu2, g);
        CHECK(lhs <= rhs + 1e-9);
    }
}

TEST_CASE("entropic solver brackets the LP and certifies convergence") {
    const LiftedOperator op = euclidean_op();
    const GroundMetric g = GroundMetric::strong_ground(op);
    TransportOptions forced;
    forced.force_entropic = true;
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
        const EmpiricalMeasure mu = random_cloud(40, 800 + trial);
        const EmpiricalMeasure nu = random_cloud(37, 810 + trial);
        const double lp = wasserstein1(mu, nu, g);
        const TransportResult ent = wasserstein1_result(mu, nu, g, forced);
        CHECK(!ent.exact);
        CHECK(ent.dual_gap >= -1e-12);
        // The rounded plan upper-bounds the LP, the c-transform pair
        // lower-bounds it.
        CHECK(ent.cost + 1e-9 >= lp);
        CHECK(ent.lp_lower_bound <= lp + 1e-9);
        // Entropic bias at the default temperature stays modest.
        CHECK(ent.cost - lp <= 0.25 * (1.0 + lp));
    }
}

TEST_CASE("entropic non-convergence surfaces the last certified gap") {
    const LiftedOperator op = euclidean_op();
    const GroundMetric g = GroundMetric::strong_ground(op);
    TransportOptions starved;
    starved.force_entropic = true;
    starved.entropic_max_sweeps = 2; // not enough to anneal anywhere near target
    try {
        (void)wasserstein1_result(random_cloud(40, 820), random_cloud(41, 821), g, starved);
        CHECK(false); // must throw
    } catch (const NumericalFailure& e) {
        CHECK(std::string(e.what()).find("gap") != std::string::npos);
    }
}

TEST_CASE("second moment: diracs, symmetric pair, Monte Carlo normal") {
    const LiftedOperator op = euclidean_op();
    CHECK(second_moment(EmpiricalMeasure::dirac(st(0.0)), op) == doctest::Approx(0.0));
    EmpiricalMeasure pair;
    pair.particles = {st(1.0), st(-1.0)};
    pair.weights = {0.5, 0.5};
    CHECK(second_moment(pair, op) == doctest::Approx(1.0));
    std::vector<LiftedState> pts;
    const std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) pts.push_back(st(rng::normal(900, i, 0)));
    const double mc = second_moment(EmpiricalMeasure::uniform(std::move(pts)), op);
    CHECK(std::fabs(mc - 1.0) <= 0.05); // 3-sigma band at n = 1e4
}

TEST_CASE("flow distance: zero, single differing slice, brute force") {
    const LiftedOperator op = euclidean_op();
    MeasureFlow f1;
    f1.times = {0.0, 0.5, 1.0};
    f1.slices = {cloud_1d({0.0, 1.0}), cloud_1d({0.5, 1.5}), cloud_1d({0.0})};
    CHECK(flow_distance(f1, f1, op) == doctest::Approx(0.0));
    MeasureFlow f2 = f1;
    f2.slices[2] = cloud_1d({1.0});
    CHECK(flow_distance(f1, f2, op) == doctest::Approx(1.0)); // max picks the last slice
    MeasureFlow f3 = f1;
    for (std::size_t k = 0; k < f3.slices.size(); ++k)
        for (std::size_t i = 0; i < f3.slices[k].size(); ++i)
            f3.slices[k].particles[i].y0 += 0.3 * rng::normal(77, k, i);
    const GroundMetric g = GroundMetric::weak_ground(op);
    double brute = 0.0;
    for (std::size_t k = 0; k < f1.times.size(); ++k)
        brute = std::max(brute, wasserstein1(f1.slices[k], f3.slices[k], g));
    CHECK(flow_distance(f1, f3, op) == doctest::Approx(brute));
    MeasureFlow bad = f1;
    bad.times[1] = 0.25;
    CHECK_THROWS_AS((void)flow_distance(f1, bad, op), std::invalid_argument);
}

TEST_CASE("holder certificate: constant flow, drifting dirac closed form") {
    const LiftedOperator op = build_delay_lift(1.0, 1);
    MeasureFlow constant;
    constant.times = {0.0, 0.25, 0.5, 0.75};
    constant.slices.assign(4, EmpiricalMeasure::dirac(st(1.0, 1.0)));
    CHECK(holder_certificate(constant, op) == doctest::Approx(0.0));

    // Diracs drifting at unit speed in y0 with frozen memory: the distance
    // between slices k and k+s is s*dt*||B_half e0||, so the skip-one pair
    // maximizes the square-root ratio at sqrt(2)*||B_half e0||*sqrt(dt).
    const double dt = 0.125;
    MeasureFlow drift;
    for (std::size_t k = 0; k < 5; ++k) {
        drift.times.push_back(dt * static_cast<double>(k));
        drift.slices.push_back(EmpiricalMeasure::dirac(st(dt * static_cast<double>(k), 0.0)));
    }
    Vec e0(2, 0.0);
    e0[0] = 1.0;
    const double bhe0 = norm2(matvec(op.B_half, e0));
    const double expect = std::sqrt(2.0) * bhe0 * std::sqrt(dt);
    CHECK(holder_certificate(drift, op) == doctest::Approx(expect).epsilon(1e-12));

    MeasureFlow tooshort;
    tooshort.times = {0.0};
    tooshort.slices = {EmpiricalMeasure::dirac(st(0.0))};
    CHECK_THROWS_AS((void)holder_certificate(tooshort, op), std::invalid_argument);
}

TEST_CASE("holder certificate stable under halving for a random-walk flow") {
    const LiftedOperator op = euclidean_op();
    auto walk_flow = [&](double dt, std::size_t steps, std::uint64_t seed) {
        const std::size_t n = 128;
        Vec ys(n, 0.0);
        MeasureFlow f;
        for (std::size_t k = 0; k <= steps; ++k) {
            f.times.push_back(dt * static_cast<double>(k));
            f.slices.push_back(cloud_1d(ys));
            for (std::size_t i = 0; i < n; ++i)
                ys[i] += std::sqrt(dt) * rng::normal(seed, i, k);
        }
        return f;
    };
    const double h1 = holder_certificate(walk_flow(0.1, 10, 31), op);
    const double h2 = holder_certificate(walk_flow(0.05, 20, 32), op);
    CHECK(h2 <= 2.0 * h1);
    CHECK(h1 <= 2.0 * h2);
}

TEST_CASE("systematic resampling is the identity on uniform same-size input") {
    const EmpiricalMeasure mu = random_cloud(16, 1000);
    const EmpiricalMeasure out = systematic_resample(mu, 16, 55);
    for (std::size_t i = 0; i < 16; ++i) {
        CHECK(out.particles[i].y0 == mu.particles[i].y0);
        CHECK(out.weights[i] == doctest::Approx(1.0 / 16));
    }
}

TEST_CASE("measure CSV round trip") {
    const EmpiricalMeasure mu = random_cloud(11, 1100);
    const std::string path =
        (std::filesystem::temp_directory_path() / "measure_roundtrip_test.csv").string();
    write_measure_csv(path, mu);
    const EmpiricalMeasure back = read_measure_csv(path, 1.0);
    REQUIRE(back.size() == mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        CHECK(back.weights[i] == mu.weights[i]);
        CHECK(back.particles[i].y0 == mu.particles[i].y0);
        CHECK(back.particles[i].memory == mu.particles[i].memory);
    }
}
