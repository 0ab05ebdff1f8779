#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mfg/sde_engine.hpp"

using namespace mfg;

namespace {

AdvertisingModel quiet_model(std::size_t m_mem = 8) {
    AdvertisingModel m;
    m.b0.kappa = 0.0;
    m.b0.beta = 0.0;
    m.sigma0.kind = Sigma0Spec::Kind::constant;
    m.sigma0.scale = 0.0;
    m.eta_kind = EtaKind::zero;
    m.m_mem = m_mem;
    finalize_model(m);
    return m;
}

} // namespace

TEST_CASE("zero dynamics: slices are the memory-shift pushforward of m0") {
    AdvertisingModel m = quiet_model(8);
    // Ramp history so the shift is visible.
    LiftedState x0;
    x0.d = m.d;
    x0.y0 = 1.0;
    x0.memory.resize(8);
    const double h = m.op.mem_spacing();
    for (std::size_t j = 0; j < 8; ++j)
        x0.memory[j] = -(static_cast<double>(8 - j)) * h; // y(theta) = theta
    const EmpiricalMeasure m0 = EmpiricalMeasure::dirac(x0);
    const double dt = h; // one memory node per step
    const MeasureFlow flow = simulate(m, nullptr, m0, dt, 1, 99);
    const auto n_steps = flow.times.size() - 1;
    for (std::size_t k = 0; k <= n_steps; ++k) {
        const LiftedState& s = flow.slices[k].particles[0];
        CHECK(s.y0 == doctest::Approx(1.0)); // y0 never moves
        for (std::size_t j = 0; j < 8; ++j) {
            // Exact sample of the (frozen-then-constant) history at the lag.
            const double theta = -(static_cast<double>(8 - j)) * h;
            const double t_sample = dt * static_cast<double>(k) + theta;
            const double expect = t_sample < 0.0 ? t_sample : 1.0;
            CHECK(s.memory[j] == doctest::Approx(expect).epsilon(1e-14));
        }
    }
}

TEST_CASE("exponential decay oracle") {
    AdvertisingModel m = quiet_model(8);
    m.b0.kind = B0Spec::Kind::linear;
    m.b0.kappa = 1.0; // b0 = -y
    m.eta = sample_eta(EtaKind::zero, m.d, m.m_mem);
    const double dt = m.op.mem_spacing() / 2.0;
    const EmpiricalMeasure m0 =
        EmpiricalMeasure::dirac(constant_history_state(1.0, m.m_mem, m.d));
    const MeasureFlow flow = simulate(m, nullptr, m0, dt, 1, 5);
    for (std::size_t k = 0; k < flow.times.size(); ++k) {
        const double t = flow.times[k];
        CHECK(std::fabs(flow.slices[k].particles[0].y0 - std::exp(-t)) <= 2.0 * dt * m.T);
    }
}

TEST_CASE("Brownian variance at 1e5 paths") {
    AdvertisingModel m = quiet_model(4);
    m.sigma0.scale = 1.0;
    const double dt = m.op.mem_spacing(); // 0.125
    const std::size_t n = 100000;
    const EmpiricalMeasure m0 =
        EmpiricalMeasure::dirac(constant_history_state(0.0, m.m_mem, m.d));
    SimOptions opt;
    opt.slice_stride = 1 << 20; // only first and last slices
    const MeasureFlow flow = simulate(m, nullptr, m0, dt, n, 77, opt);
    const auto& last = flow.slices.back();
    double mean = 0.0;
    for (const auto& p : last.particles) mean += p.y0;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const auto& p : last.particles) var += (p.y0 - mean) * (p.y0 - mean);
    var /= static_cast<double>(n - 1);
    CHECK(std::fabs(var - 1.0) <= 3.0 * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST_CASE("bitwise determinism across thread counts") {
    AdvertisingModel m = make_advertising_default();
    m.m_mem = 8;
    finalize_model(m);
    const double dt = m.op.mem_spacing() / 2.0;
    std::vector<LiftedState> pts;
    for (std::size_t i = 0; i < 64; ++i)
        pts.push_back(constant_history_state(0.3 * rng::normal(1, i, 0), m.m_mem, m.d));
    const EmpiricalMeasure m0 = EmpiricalMeasure::uniform(std::move(pts));
    SimOptions o1, o4, o8;
    o1.threads = 1;
    o4.threads = 4;
    o8.threads = 8;
    const MeasureFlow f1 = simulate(m, nullptr, m0, dt, 64, 123, o1);
    const MeasureFlow f4 = simulate(m, nullptr, m0, dt, 64, 123, o4);
    const MeasureFlow f8 = simulate(m, nullptr, m0, dt, 64, 123, o8);
    CHECK(flows_equal_bitwise(f1, f4));
    CHECK(flows_equal_bitwise(f1, f8));
}

TEST_CASE("single-path replay matches the ensemble member") {
    AdvertisingModel m = make_advertising_default();
    m.m_mem = 8;
    finalize_model(m);
    const double dt = m.op.mem_spacing();
    std::vector<LiftedState> pts;
    for (std::size_t i = 0; i < 16; ++i)
        pts.push_back(constant_history_state(0.3 * rng::normal(2, i, 0), m.m_mem, m.d));
    const EmpiricalMeasure m0 = EmpiricalMeasure::uniform(std::move(pts));
    const MeasureFlow flow = simulate(m, nullptr, m0, dt, 16, 321);
    const SdePath path = simulate_single_path(m, nullptr, m0.particles[5], dt, 321, 5);
    for (std::size_t k = 0; k < flow.times.size(); ++k)
        CHECK(path.states[k].y0 == flow.slices[k].particles[5].y0);
}

TEST_CASE("step must divide the memory spacing and the horizon") {
    AdvertisingModel m = quiet_model(8);
    const EmpiricalMeasure m0 =
        EmpiricalMeasure::dirac(constant_history_state(0.0, m.m_mem, m.d));
    CHECK_THROWS_AS((void)simulate(m, nullptr, m0, m.op.mem_spacing() / 2.5, 1, 1),
                    std::invalid_argument);
}

TEST_CASE("explosive drift is reported with path and step") {
    AdvertisingModel m = quiet_model(4);
    m.b0.kind = B0Spec::Kind::linear;
    m.b0.kappa = -1e155; // run-away growth overflows quickly
    const EmpiricalMeasure m0 =
        EmpiricalMeasure::dirac(constant_history_state(1.0, m.m_mem, m.d));
    CHECK_THROWS_AS((void)simulate(m, nullptr, m0, m.op.mem_spacing(), 1, 1), NumericalFailure);
}

TEST_CASE("moment certificate: zero flow, decaying flow, Brownian flow") {
    AdvertisingModel m = quiet_model(4);
    const EmpiricalMeasure d0 =
        EmpiricalMeasure::dirac(constant_history_state(0.0, m.m_mem, m.d));
    const double dt = m.op.mem_spacing();
    CHECK(moment_certificate(simulate(m, nullptr, d0, dt, 1, 1), m.op) == doctest::Approx(0.0));

    AdvertisingModel md = quiet_model(4);
    md.b0.kind = B0Spec::Kind::linear;
    md.b0.kappa = 1.0;
    const EmpiricalMeasure d1 =
        EmpiricalMeasure::dirac(constant_history_state(1.0, md.m_mem, md.d));
    const MeasureFlow decay = simulate(md, nullptr, d1, dt, 1, 1);
    double prev = second_moment(decay.slices[0], md.op);
    for (std::size_t k = 1; k < decay.slices.size(); ++k) {
        const double cur = second_moment(decay.slices[k], md.op);
        CHECK(cur <= prev + 1e-12);
        prev = cur;
    }

    AdvertisingModel mb = quiet_model(4);
    mb.sigma0.scale = 1.0;
    const std::size_t n = 20000;
    const MeasureFlow brown = simulate(mb, nullptr, d0, dt, n, 2);
    // Ito isometry oracle: E y(t)^2 = t, memory nodes carry the lagged
    // variance t - lag (clipped at zero), quadrature-weighted.
    const double t_end = mb.T;
    double expect = t_end;
    for (std::size_t j = 0; j < mb.m_mem; ++j) {
        const double lag =
            (static_cast<double>(mb.m_mem - j)) * mb.op.mem_spacing();
        expect += mb.op.quad_weights[j] * std::max(0.0, t_end - lag);
    }
    const double est = second_moment(brown.slices.back(), mb.op);
    CHECK(std::fabs(est - expect) <= 5.0 * expect / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("holder certificate bounded and stable across step halvings") {
    AdvertisingModel m = make_advertising_default();
    m.m_mem = 8;
    finalize_model(m);
    std::vector<LiftedState> pts;
    for (std::size_t i = 0; i < 256; ++i)
        pts.push_back(constant_history_state(0.3 * rng::normal(3, i, 0), m.m_mem, m.d));
    const EmpiricalMeasure m0 = EmpiricalMeasure::uniform(std::move(pts));
    HolderOptions hopt;
    hopt.subsample = 64;
    Vec certs;
    for (double div : {1.0, 2.0, 4.0}) {
        const double dt = m.op.mem_spacing() / div;
        const MeasureFlow flow = simulate(m, nullptr, m0, dt, 256, 4);
        certs.push_back(holder_certificate(flow, m.op, hopt));
    }
    for (std::size_t i = 0; i + 1 < certs.size(); ++i) {
        CHECK(certs[i] <= 2.0 * certs[i + 1]);
        CHECK(certs[i + 1] <= 2.0 * certs[i]);
        CHECK(std::isfinite(certs[i]));
    }
}

TEST_CASE("independent seeds give statistically equal laws") {
    AdvertisingModel m = make_advertising_default();
    m.m_mem = 8;
    finalize_model(m);
    const double dt = m.op.mem_spacing() / 2.0;
    std::vector<LiftedState> pts;
    const std::size_t n = 1024;
    for (std::size_t i = 0; i < n; ++i)
        pts.push_back(constant_history_state(0.3 * rng::normal(5, i, 0), m.m_mem, m.d));
    const EmpiricalMeasure m0 = EmpiricalMeasure::uniform(std::move(pts));
    const MeasureFlow fa = simulate(m, nullptr, m0, dt, n, 1001);
    const MeasureFlow fb = simulate(m, nullptr, m0, dt, n, 2002);
    const GroundMetric g = GroundMetric::weak_ground(m.op);
    for (std::size_t k : {std::size_t(0), fa.slices.size() / 2, fa.slices.size() - 1}) {
        const EmpiricalMeasure sa = systematic_resample(fa.slices[k], 128, 7);
        const EmpiricalMeasure sb = systematic_resample(fb.slices[k], 128, 7);
        double diam = 0.0;
        for (const auto& p : fa.slices[k].particles)
            for (const auto& q : fb.slices[k].particles) {
                (void)q;
                diam = std::max(diam, 2.0 * std::fabs(p.y0) + 1.0);
                break;
            }
        CHECK(wasserstein1(sa, sb, g) <=
              5.0 / std::sqrt(static_cast<double>(n)) * std::max(diam, 1.0));
    }
}
