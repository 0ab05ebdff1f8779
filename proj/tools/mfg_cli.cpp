// Batch driver for the delayed-goodwill game solver: runs simulations,
// equilibrium solves, structural audits, cross-validation against the dense
// memoryless solver, and parameter sweeps. Every run writes a manifest
// (config hash, seeds, version) before any result file; identical configs
// and seeds reproduce all CSV outputs byte for byte.

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <string>

#include "mfg/io.hpp"
#include "mfg/svg.hpp"
#include "mfg/zero_delay_oracle.hpp"

namespace fs = std::filesystem;
using mfg::io::json;

namespace {

struct ExperimentConfig {
    mfg::AdvertisingModel model;
    mfg::SolverParams solver;
    std::size_t m0_n = 4096;
    double m0_mean = 0.0;
    double m0_spread = 0.5;
    std::size_t flow_stride = 16; // slice stride for flow dumps
    std::size_t paths_dump = 4;
    json raw;
};

mfg::EmpiricalMeasure build_m0(const ExperimentConfig& cfg, std::uint64_t seed) {
    std::vector<mfg::LiftedState> pts;
    pts.reserve(cfg.m0_n);
    for (std::size_t i = 0; i < cfg.m0_n; ++i)
        pts.push_back(mfg::constant_history_state(
            cfg.m0_mean + cfg.m0_spread * mfg::rng::normal(seed, i, 0), cfg.model.m_mem,
            cfg.model.d));
    return mfg::EmpiricalMeasure::uniform(std::move(pts));
}

mfg::AdvertisingModel model_from_json(const json& j) {
    mfg::AdvertisingModel m;
    if (j.contains("preset")) m = mfg::make_preset(j["preset"].get<std::string>());
    if (j.contains("d")) m.d = j["d"].get<double>();
    if (j.contains("T")) m.T = j["T"].get<double>();
    if (j.contains("m_mem")) m.m_mem = j["m_mem"].get<std::size_t>();
    if (j.contains("eta")) {
        const std::string e = j["eta"].get<std::string>();
        if (e == "zero") m.eta_kind = mfg::EtaKind::zero;
        else if (e == "constant") m.eta_kind = mfg::EtaKind::constant;
        else if (e == "exponential") m.eta_kind = mfg::EtaKind::exponential;
        else if (e == "linear") m.eta_kind = mfg::EtaKind::linear;
        else throw std::invalid_argument("unknown eta kind: " + e);
    }
    if (j.contains("kappa")) m.b0.kappa = j["kappa"].get<double>();
    if (j.contains("beta")) m.b0.beta = j["beta"].get<double>();
    if (j.contains("c0")) m.c0 = j["c0"].get<double>();
    if (j.contains("nu")) m.nu = j["nu"].get<double>();
    if (j.contains("sigma_scale")) m.sigma0.scale = j["sigma_scale"].get<double>();
    if (j.contains("sigma_kind")) {
        const std::string s = j["sigma_kind"].get<std::string>();
        if (s == "constant") m.sigma0.kind = mfg::Sigma0Spec::Kind::constant;
        else if (s == "bounded_decay") m.sigma0.kind = mfg::Sigma0Spec::Kind::bounded_decay;
        else throw std::invalid_argument("unknown sigma kind: " + s);
    }
    if (j.contains("coupling_strength"))
        m.coupling_strength = j["coupling_strength"].get<double>();
    mfg::finalize_model(m);
    return m;
}

ExperimentConfig load_config(const std::string& path) {
    if (!fs::exists(path)) throw std::invalid_argument("config file not found: " + path);
    ExperimentConfig cfg;
    cfg.raw = mfg::io::read_json(path);
    json model_json;
    if (cfg.raw.contains("model_file")) {
        const fs::path mf = fs::path(path).parent_path() /
                            cfg.raw["model_file"].get<std::string>();
        if (!fs::exists(mf))
            throw std::invalid_argument("model file not found: " + mf.string());
        model_json = mfg::io::read_json(mf.string());
    } else if (cfg.raw.contains("model")) {
        model_json = cfg.raw["model"];
    } else {
        throw std::invalid_argument("config needs a 'model' object or 'model_file' path");
    }
    cfg.model = model_from_json(model_json);
    if (cfg.raw.contains("solver")) {
        const json& s = cfg.raw["solver"];
        if (s.contains("dt_steps"))
            cfg.solver.dt = cfg.model.T / s["dt_steps"].get<double>();
        if (s.contains("n_particles")) cfg.solver.n_particles = s["n_particles"].get<std::size_t>();
        if (s.contains("grid_nodes")) cfg.solver.grid_nodes = s["grid_nodes"].get<std::size_t>();
        if (s.contains("m_hjb")) cfg.solver.m_hjb = s["m_hjb"].get<std::size_t>();
        if (s.contains("theta")) cfg.solver.theta = s["theta"].get<double>();
        if (s.contains("tol")) cfg.solver.tol = s["tol"].get<double>();
        if (s.contains("max_iter")) cfg.solver.max_iter = s["max_iter"].get<std::size_t>();
        if (s.contains("dist_stride")) cfg.solver.dist_stride = s["dist_stride"].get<std::size_t>();
        if (s.contains("dist_particles"))
            cfg.solver.dist_particles = s["dist_particles"].get<std::size_t>();
    }
    if (cfg.raw.contains("m0")) {
        const json& s = cfg.raw["m0"];
        if (s.contains("n")) cfg.m0_n = s["n"].get<std::size_t>();
        if (s.contains("mean")) cfg.m0_mean = s["mean"].get<double>();
        if (s.contains("spread")) cfg.m0_spread = s["spread"].get<double>();
    }
    if (cfg.raw.contains("flow_stride")) cfg.flow_stride = cfg.raw["flow_stride"].get<std::size_t>();
    if (cfg.raw.contains("paths_dump")) cfg.paths_dump = cfg.raw["paths_dump"].get<std::size_t>();
    if (!(cfg.solver.theta > 0.0 && cfg.solver.theta <= 1.0))
        throw std::invalid_argument("solver.theta must lie in (0, 1]");
    if (cfg.m0_n == 0 || cfg.solver.n_particles == 0 || cfg.solver.grid_nodes < 3)
        throw std::invalid_argument("particle and grid counts must be positive");
    return cfg;
}

void write_manifest(const std::string& out, const ExperimentConfig& cfg,
                    const std::string& subcommand, std::uint64_t seed, unsigned threads) {
    json man;
    man["subcommand"] = subcommand;
    man["config_hash"] = mfg::io::config_hash(cfg.raw);
    man["seed"] = seed;
    man["threads"] = threads;
    man["version"] = mfg::io::version();
    man["rng"] = mfg::rng::kGeneratorId;
    mfg::io::write_json(out + "/manifest.json", man);
}

mfg::MeasureFlow thin_flow(const mfg::MeasureFlow& flow, std::size_t stride) {
    if (stride <= 1) return flow;
    mfg::MeasureFlow out;
    for (std::size_t k = 0; k < flow.times.size(); k += stride) {
        out.times.push_back(flow.times[k]);
        out.slices.push_back(flow.slices[k]);
    }
    if (out.times.back() != flow.times.back()) {
        out.times.push_back(flow.times.back());
        out.slices.push_back(flow.slices.back());
    }
    return out;
}

void plot_flow_quantiles(const std::string& path, const mfg::MeasureFlow& flow) {
    mfg::svg::Plot plot;
    plot.title = "goodwill quantiles over time";
    plot.xlabel = "t";
    plot.ylabel = "y0";
    mfg::svg::Band band;
    mfg::svg::Series mean;
    mean.label = "mean";
    mean.color = "#b43f1f";
    for (std::size_t k = 0; k < flow.times.size(); ++k) {
        mfg::Vec ys;
        for (const auto& p : flow.slices[k].particles) ys.push_back(p.y0);
        std::sort(ys.begin(), ys.end());
        const double q10 = ys[static_cast<std::size_t>(0.10 * (ys.size() - 1))];
        const double q90 = ys[static_cast<std::size_t>(0.90 * (ys.size() - 1))];
        double mu = 0.0;
        for (double y : ys) mu += y;
        mu /= static_cast<double>(ys.size());
        band.x.push_back(flow.times[k]);
        band.lo.push_back(q10);
        band.hi.push_back(q90);
        mean.x.push_back(flow.times[k]);
        mean.y.push_back(mu);
    }
    plot.bands.push_back(std::move(band));
    plot.series.push_back(std::move(mean));
    mfg::svg::write(path, plot);
}

void plot_value_slice(const std::string& path, const mfg::ValueFunction& v) {
    mfg::svg::Plot plot;
    plot.title = "value function at t = 0 (memory blocks at 0)";
    plot.xlabel = "y0";
    plot.ylabel = "v";
    mfg::svg::Series s;
    s.label = "v(0, y0)";
    const mfg::Axis& ax = v.grid.axes[0];
    for (std::size_t i = 0; i < ax.count; ++i) {
        mfg::Vec x(v.grid.dim(), 0.0);
        x[0] = ax.coord(i);
        s.x.push_back(x[0]);
        s.y.push_back(v.value_at(0, x));
    }
    plot.series.push_back(std::move(s));
    mfg::svg::write(path, plot);
}

int run_simulate(const ExperimentConfig& cfg, const std::string& out, std::uint64_t seed) {
    const mfg::EmpiricalMeasure m0 = build_m0(cfg, mfg::rng::fold(seed, 1));
    const double dt = cfg.solver.step(cfg.model);
    const mfg::MeasureFlow flow =
        mfg::simulate(cfg.model, nullptr, m0, dt, cfg.solver.n_particles, seed);
    mfg::io::write_flow(out, "flow", thin_flow(flow, cfg.flow_stride), cfg.model.d);
    std::vector<mfg::SdePath> paths;
    for (std::size_t i = 0; i < std::min(cfg.paths_dump, cfg.solver.n_particles); ++i)
        paths.push_back(mfg::simulate_single_path(
            cfg.model, nullptr, flow.slices.front().particles[i], dt, seed, i));
    mfg::io::write_paths_csv(out + "/paths.csv", paths);
    plot_flow_quantiles(out + "/flow_quantiles.svg", thin_flow(flow, cfg.flow_stride));
    json summary;
    summary["moment_sup"] = mfg::moment_certificate(flow, cfg.model.op);
    mfg::io::write_json(out + "/summary.json", summary);
    return 0;
}

int run_solve_mfg(const ExperimentConfig& cfg, const std::string& out, std::uint64_t seed) {
    const mfg::EmpiricalMeasure m0 = build_m0(cfg, mfg::rng::fold(seed, 1));
    const mfg::MfgSolution sol =
        mfg::solve_mfg(cfg.model, m0, cfg.solver.theta, cfg.solver.tol, cfg.solver.max_iter,
                       seed, cfg.solver);
    mfg::io::write_iteration_log(out + "/iterations.csv", sol.iteration_log);
    mfg::io::write_flow(out, "equilibrium_flow", thin_flow(sol.flow, cfg.flow_stride),
                        cfg.model.d);
    mfg::io::write_value_function(out, "value", sol.value);
    {
        mfg::svg::Plot plot;
        plot.title = "fixed-point residual per iteration";
        plot.xlabel = "iteration";
        plot.ylabel = "residual";
        plot.log_y = true;
        mfg::svg::Series s;
        s.label = "residual";
        for (std::size_t i = 0; i < sol.residual_history.size(); ++i) {
            s.x.push_back(static_cast<double>(i));
            s.y.push_back(sol.residual_history[i]);
        }
        plot.series.push_back(std::move(s));
        mfg::svg::write(out + "/residual.svg", plot);
    }
    plot_value_slice(out + "/value_slice.svg", sol.value);
    plot_flow_quantiles(out + "/flow_quantiles.svg", thin_flow(sol.flow, cfg.flow_stride));
    json summary;
    summary["converged"] = sol.converged;
    summary["iterations"] = sol.iterations;
    summary["tol_used"] = sol.tol_used;
    summary["residual_history"] = sol.residual_history;
    summary["w_lip_estimate"] = sol.w_lip_estimate;
    summary["w_lip_flagged"] = sol.w_lip_flagged;
    summary["control_cap_hits"] = sol.cap_hits;
    json pairs = json::array();
    for (const auto& c : sol.monotonicity_certificates)
        pairs.push_back({{"pair", c.first}, {"value", c.second}});
    summary["monotonicity_certificates"] = pairs;
    mfg::io::write_json(out + "/summary.json", summary);
    std::printf("solve-mfg: converged=%s iterations=%zu final residual=%.3e\n",
                sol.converged ? "true" : "false", sol.iterations,
                sol.residual_history.empty() ? 0.0 : sol.residual_history.back());
    return sol.converged ? 0 : 1;
}

int run_audit(const ExperimentConfig& cfg, const std::string& out, std::uint64_t seed) {
    const mfg::AssumptionReport rep = mfg::audit_assumptions(cfg.model, seed, 50);
    json audits = json::array();
    for (const auto& a : rep.audits) {
        audits.push_back(
            {{"name", a.name}, {"pass", a.pass}, {"worst", a.worst}, {"detail", a.detail}});
        std::printf("audit %-36s %s (worst %.3e)\n", a.name.c_str(),
                    a.pass ? "pass" : "FAIL", a.worst);
    }
    // Weak-solution residual suite on the feedback flow at audit scale.
    ExperimentConfig small = cfg;
    small.solver.n_particles = std::min<std::size_t>(small.solver.n_particles, 1024);
    const mfg::EmpiricalMeasure m0 = build_m0(small, mfg::rng::fold(seed, 1));
    const double dt = small.solver.step(small.model);
    const mfg::MeasureFlow guess = mfg::constant_flow(small.model, m0, small.solver, seed);
    const mfg::PsiResult p = mfg::psi(small.model, guess, small.solver, seed);
    const mfg::FeedbackPolicy pol = mfg::synthesize_feedback(p.value, small.model, p.flow);
    const auto basis = mfg::make_test_basis(small.model.op);
    const auto series = mfg::weak_residual_stream(small.model, &pol, m0, dt,
                                                  small.solver.n_particles,
                                                  mfg::rng::fold(seed, 2), basis);
    mfg::io::write_residual_report(out, "weak_residuals", series);
    json res;
    const bool all_pass = rep.all_pass();
    for (const auto& s : series) {
        res[s.phi_id] = s.max_r;
        std::printf("weak residual %-8s max %.3e%s\n", s.phi_id.c_str(), s.max_r,
                    s.growth_flag ? " (growth flag)" : "");
    }
    json summary;
    summary["assumptions"] = audits;
    summary["weak_residual_max"] = res;
    summary["all_assumptions_pass"] = all_pass;
    summary["noise"] = mfg::noise_spec(cfg.model).rng_kind;
    // Decay profile of the weak-norm operator's spectrum (the finite-
    // dimensional stand-in for its compactness).
    mfg::Vec eig_head(cfg.model.op.eigenvalues.begin(),
                      cfg.model.op.eigenvalues.begin() +
                          std::min<std::size_t>(8, cfg.model.op.eigenvalues.size()));
    summary["weak_norm_eigenvalues_head"] = eig_head;
    summary["weak_norm_eigenvalue_tail_ratio"] =
        cfg.model.op.eigenvalues.back() / cfg.model.op.eigenvalues.front();
    mfg::io::write_json(out + "/summary.json", summary);
    return all_pass ? 0 : 1;
}

int run_oracle_compare(const ExperimentConfig& cfg, const std::string& out,
                       std::uint64_t seed) {
    for (double e : cfg.model.eta)
        if (e != 0.0)
            throw std::invalid_argument("oracle-compare requires a zero delay kernel (eta)");
    const mfg::EmpiricalMeasure m0 = build_m0(cfg, mfg::rng::fold(seed, 1));
    const mfg::MfgSolution sol =
        mfg::solve_mfg(cfg.model, m0, cfg.solver.theta, cfg.solver.tol, cfg.solver.max_iter,
                       seed, cfg.solver);
    mfg::ZeroDelayParams zp;
    zp.dt = cfg.solver.step(cfg.model);
    zp.theta = cfg.solver.theta;
    zp.max_iter = cfg.solver.max_iter;
    const mfg::ZeroDelaySolution z = mfg::oracle_solve_zero_delay(cfg.model, m0, zp);

    std::ofstream csv(out + "/oracle_compare.csv");
    csv << "t,d1_marginal,support_diameter\n";
    double worst_ratio = 0.0;
    for (std::size_t k = 0; k < z.times.size(); k += cfg.solver.dist_stride) {
        mfg::Vec gw(z.grid.size());
        for (std::size_t i = 0; i < z.grid.size(); ++i) gw[i] = z.density[k][i] * z.cell_width;
        mfg::Vec py, pw;
        double lo = 1e300, hi = -1e300;
        for (std::size_t i = 0; i < sol.flow.slices[k].size(); ++i) {
            const double y = sol.flow.slices[k].particles[i].y0;
            py.push_back(y);
            pw.push_back(sol.flow.slices[k].weights[i]);
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
        const double d1 = mfg::wasserstein1_sorted_1d(z.grid, gw, py, pw);
        const double diam = std::max(hi - lo, 1e-12);
        worst_ratio = std::max(worst_ratio, d1 / diam);
        csv << mfg::detail::fmt17(z.times[k]) << ',' << mfg::detail::fmt17(d1) << ','
            << mfg::detail::fmt17(diam) << "\n";
    }
    json summary;
    summary["pipeline_converged"] = sol.converged;
    summary["oracle_converged"] = z.converged;
    summary["oracle_mass_error"] = z.mass_error;
    summary["worst_marginal_ratio"] = worst_ratio;
    mfg::io::write_json(out + "/summary.json", summary);
    std::printf("oracle-compare: worst per-slice d1 / diameter = %.4f\n", worst_ratio);
    return (sol.converged && z.converged) ? 0 : 1;
}

int run_sweep(const ExperimentConfig& cfg, const std::string& out, std::uint64_t seed) {
    const json sweep = cfg.raw.contains("sweep") ? cfg.raw["sweep"] : json::object();
    const std::vector<double> horizons =
        sweep.contains("T") ? sweep["T"].get<std::vector<double>>()
                            : std::vector<double>{cfg.model.T};
    const std::vector<double> nus = sweep.contains("nu")
                                        ? sweep["nu"].get<std::vector<double>>()
                                        : std::vector<double>{cfg.model.nu};
    const std::vector<double> strengths =
        sweep.contains("coupling_strength")
            ? sweep["coupling_strength"].get<std::vector<double>>()
            : std::vector<double>{cfg.model.coupling_strength};
    std::ofstream conv(out + "/convergence_table.csv");
    conv << "T,nu,coupling_strength,converged,iterations,initial_residual,final_residual\n";
    std::ofstream semi(out + "/semiconvexity_table.csv");
    semi << "T,nu,coupling_strength,fitted_constant\n";
    for (double T : horizons)
        for (double nu : nus)
            for (double s : strengths) {
                mfg::AdvertisingModel m = cfg.model;
                m.T = T;
                m.nu = nu;
                m.coupling_strength = s;
                mfg::finalize_model(m);
                ExperimentConfig sub = cfg;
                sub.model = m;
                if (cfg.raw.contains("solver") && cfg.raw["solver"].contains("dt_steps"))
                    sub.solver.dt = T / cfg.raw["solver"]["dt_steps"].get<double>();
                const mfg::EmpiricalMeasure m0 = build_m0(sub, mfg::rng::fold(seed, 1));
                // Semiconvexity of the value solved on the frozen flow.
                const mfg::MeasureFlow guess = mfg::constant_flow(m, m0, sub.solver, seed);
                const mfg::PsiResult p = mfg::psi(m, guess, sub.solver, seed);
                const double c_fit = mfg::fitted_semiconvexity(p.value, m, 0, 2000,
                                                               mfg::rng::fold(seed, 77));
                semi << mfg::detail::fmt17(T) << ',' << mfg::detail::fmt17(nu) << ','
                     << mfg::detail::fmt17(s) << ',' << mfg::detail::fmt17(c_fit) << "\n";
                const mfg::MfgSolution sol =
                    mfg::solve_mfg(m, m0, sub.solver.theta, sub.solver.tol,
                                   sub.solver.max_iter, seed, sub.solver);
                conv << mfg::detail::fmt17(T) << ',' << mfg::detail::fmt17(nu) << ','
                     << mfg::detail::fmt17(s) << ',' << (sol.converged ? 1 : 0) << ','
                     << sol.iterations << ','
                     << mfg::detail::fmt17(sol.residual_history.front()) << ','
                     << mfg::detail::fmt17(sol.residual_history.back()) << "\n";
                std::printf("sweep T=%.3g nu=%.3g s=%.3g: converged=%d iters=%zu C_semi=%.4f\n",
                            T, nu, s, (int)sol.converged, sol.iterations, c_fit);
            }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Delayed-goodwill mean field game batch tools"};
    app.require_subcommand(1);
    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 20240808ull;
    unsigned threads = 1;
    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--seed", seed, "base seed for all random streams");
    app.add_option("--threads", threads, "worker cap (results are thread-count independent)");
    app.add_option("--out", out_dir, "output directory");
    auto* sc_sim = app.add_subcommand("simulate", "propagate the uncontrolled ensemble");
    auto* sc_solve = app.add_subcommand("solve-mfg", "damped fixed-point equilibrium solve");
    auto* sc_audit =
        app.add_subcommand("audit", "structural assumption and weak-residual audit");
    auto* sc_oracle = app.add_subcommand(
        "oracle-compare", "cross-validate the memoryless model against the dense solver");
    auto* sc_sweep = app.add_subcommand("sweep", "parameter sweeps with summary tables");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    ExperimentConfig cfg;
    try {
        cfg = load_config(config_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    }

    mfg::parallel::set_worker_count(threads);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) {
        std::fprintf(stderr, "config error: cannot create output directory %s\n",
                     out_dir.c_str());
        return 2;
    }

    try {
        const std::string sub = app.get_subcommands().front()->get_name();
        write_manifest(out_dir, cfg, sub, seed, threads);
        if (sc_sim->parsed()) return run_simulate(cfg, out_dir, seed);
        if (sc_solve->parsed()) return run_solve_mfg(cfg, out_dir, seed);
        if (sc_audit->parsed()) return run_audit(cfg, out_dir, seed);
        if (sc_oracle->parsed()) return run_oracle_compare(cfg, out_dir, seed);
        if (sc_sweep->parsed()) return run_sweep(cfg, out_dir, seed);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::ofstream diag(out_dir + "/diagnostics.txt");
        diag << e.what() << "\n";
        std::fprintf(stderr, "solver failure: %s\n", e.what());
        return 1;
    }
    return 0;
}
