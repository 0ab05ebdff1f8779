#ifndef MFG_IO_HPP
#define MFG_IO_HPP

// File formats of the batch tools: CSV payloads with JSON manifests. All
// numbers are printed with 17 significant digits so re-runs with identical
// configs and seeds reproduce outputs byte for byte.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfg/mfg_driver.hpp"
#include "mfg/sde_engine.hpp"

namespace mfg::io {

using nlohmann::json;

inline std::string version() { return "0.1.0"; }

/// FNV-1a over the canonical JSON dump; stable across runs.
inline std::uint64_t config_hash(const json& j) {
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_json: cannot open " + path);
    out << j.dump(2) << "\n";
}

inline json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_json: cannot open " + path);
    json j;
    in >> j;
    return j;
}

/// One CSV per slice plus a manifest listing the slice times.
inline void write_flow(const std::string& dir, const std::string& name, const MeasureFlow& flow,
                       double d) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["name"] = name;
    manifest["d"] = d;
    manifest["times"] = flow.times;
    std::vector<std::string> files;
    for (std::size_t k = 0; k < flow.slices.size(); ++k) {
        const std::string file = name + "_slice_" + std::to_string(k) + ".csv";
        write_measure_csv(dir + "/" + file, flow.slices[k]);
        files.push_back(file);
    }
    manifest["files"] = files;
    write_json(dir + "/" + name + "_manifest.json", manifest);
}

inline MeasureFlow read_flow(const std::string& dir, const std::string& name) {
    const json manifest = read_json(dir + "/" + name + "_manifest.json");
    MeasureFlow flow;
    flow.times = manifest["times"].get<Vec>();
    const double d = manifest["d"].get<double>();
    for (const auto& f : manifest["files"])
        flow.slices.push_back(read_measure_csv(dir + "/" + f.get<std::string>(), d));
    flow.validate();
    return flow;
}

/// One CSV per slice (grid coordinates and values) plus a grid manifest.
inline void write_value_function(const std::string& dir, const std::string& name,
                                 const ValueFunction& vf) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["name"] = name;
    manifest["times"] = vf.times;
    json axes = json::array();
    for (const auto& a : vf.grid.axes)
        axes.push_back({{"lo", a.lo}, {"hi", a.hi}, {"count", a.count}});
    manifest["grid"] = axes;
    std::vector<std::string> files;
    const std::size_t n_axes = vf.grid.dim();
    for (std::size_t k = 0; k < vf.values.size(); ++k) {
        const std::string file = name + "_slice_" + std::to_string(k) + ".csv";
        std::ofstream out(dir + "/" + file);
        for (std::size_t a = 0; a < n_axes; ++a) out << "x" << a << ",";
        out << "v\n";
        for (std::size_t node = 0; node < vf.values[k].size(); ++node) {
            std::size_t rest = node;
            for (std::size_t a = 0; a < n_axes; ++a) {
                out << detail::fmt17(vf.grid.axes[a].coord(rest / vf.strides[a])) << ',';
                rest %= vf.strides[a];
            }
            out << detail::fmt17(vf.values[k][node]) << "\n";
        }
        files.push_back(file);
    }
    manifest["files"] = files;
    write_json(dir + "/" + name + "_manifest.json", manifest);
}

inline void write_iteration_log(const std::string& path,
                                const std::vector<IterationRecord>& log) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_iteration_log: cannot open " + path);
    out << "iter,residual,moment_sup,holder_const\n";
    for (const auto& r : log)
        out << r.iter << ',' << detail::fmt17(r.residual) << ',' << detail::fmt17(r.moment_sup)
            << ',' << detail::fmt17(r.holder_const) << "\n";
}

inline void write_residual_report(const std::string& dir, const std::string& name,
                                  const std::vector<ResidualSeries>& series) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir + "/" + name + ".csv");
    out << "phi_id,t,residual\n";
    json summary;
    for (const auto& s : series) {
        for (std::size_t k = 0; k < s.times.size(); ++k)
            out << s.phi_id << ',' << detail::fmt17(s.times[k]) << ',' << detail::fmt17(s.r[k])
                << "\n";
        summary[s.phi_id] = {{"max_residual", s.max_r}, {"growth_flag", s.growth_flag}};
    }
    write_json(dir + "/" + name + "_summary.json", summary);
}

inline void write_paths_csv(const std::string& path, const std::vector<SdePath>& paths) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_paths_csv: cannot open " + path);
    out << "path,step,t,y0\n";
    for (const auto& p : paths)
        for (std::size_t k = 0; k < p.times.size(); ++k)
            out << p.path_index << ',' << k << ',' << detail::fmt17(p.times[k]) << ','
                << detail::fmt17(p.states[k].y0) << "\n";
}

} // namespace mfg::io

#endif
