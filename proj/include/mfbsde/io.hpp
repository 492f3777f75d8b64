// io.hpp - file formats: CSV for clouds, fields and per-iteration history,
// a small binary container for particle paths, JSON for reports. All text
// numbers use %.17g so doubles round-trip exactly; writes go through a
// temp-file-then-rename step so readers never see half a file.
#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "coefficients.hpp"
#include "errors.hpp"
#include "fixed_point.hpp"
#include "grid.hpp"
#include "inner_solver.hpp"
#include "measure.hpp"
#include "problems.hpp"

namespace mfbsde::io {

inline std::string format_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void atomic_write_text(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw error("atomic_write_text: cannot open " + tmp.string());
        out << content;
        if (!out) throw error("atomic_write_text: write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

inline void atomic_write_bytes(const std::string& path,
                               const std::vector<char>& bytes) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    const fs::path tmp = target.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw error("atomic_write_bytes: cannot open " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) throw error("atomic_write_bytes: write failed for " + tmp.string());
    }
    fs::rename(tmp, target);
}

// ---------------------------------------------------------------------------
// point clouds: header x_1,...,x_k,weight

inline void write_measure_csv(const std::string& path, const EmpiricalMeasure& mu) {
    std::string s;
    for (std::size_t j = 0; j < mu.dim(); ++j) s += "x_" + std::to_string(j + 1) + ",";
    s += "weight\n";
    for (std::size_t i = 0; i < mu.size(); ++i) {
        for (double c : mu.atom(i)) s += format_g(c) + ",";
        s += format_g(mu.weight(i)) + "\n";
    }
    atomic_write_text(path, s);
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, const std::string& ctx) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || (end && *end != '\0'))
        throw error("could not parse number '" + s + "' in " + ctx);
    return v;
}

} // namespace detail

inline EmpiricalMeasure read_measure_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw error("read_measure_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line))
        throw error("read_measure_csv: empty file " + path);
    const auto header = detail::split_csv_line(line);
    if (header.size() < 2 || header.back() != "weight")
        throw error("read_measure_csv: expected header x_1,...,weight in " + path);
    const std::size_t dim = header.size() - 1;
    std::vector<double> pts, weights;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != dim + 1)
            throw error("read_measure_csv: row with " + std::to_string(cells.size()) +
                        " cells, expected " + std::to_string(dim + 1) + " in " + path);
        for (std::size_t j = 0; j < dim; ++j)
            pts.push_back(detail::parse_double(cells[j], path));
        weights.push_back(detail::parse_double(cells[dim], path));
    }
    if (weights.empty()) throw error("read_measure_csv: no rows in " + path);
    double total = 0;
    for (double w : weights) total += w;
    if (!(total > 0)) throw error("read_measure_csv: weights sum to zero in " + path);
    for (double& w : weights) w /= total;
    return EmpiricalMeasure(dim, std::move(pts), std::move(weights));
}

// ---------------------------------------------------------------------------
// decoupling field: one row per (time level, grid node)

inline void write_field_csv(const std::string& path, const DecouplingField& f) {
    const auto& g = f.grid();
    const std::size_t d = g.dim(), p = f.values_per_node();
    std::string s = "t";
    for (std::size_t j = 0; j < d; ++j) s += ",x_" + std::to_string(j + 1);
    for (std::size_t c = 0; c < p; ++c) s += ",u_" + std::to_string(c + 1);
    s += "\n";
    for (std::size_t k = 0; k <= g.n_steps(); ++k)
        for (std::size_t i = 0; i < g.n_space(); ++i) {
            double x[2];
            g.node_coord(i, {x, d});
            s += format_g(g.times()[k]);
            for (std::size_t j = 0; j < d; ++j) s += "," + format_g(x[j]);
            for (double v : f.at(k, i)) s += "," + format_g(v);
            s += "\n";
        }
    atomic_write_text(path, s);
}

// ---------------------------------------------------------------------------
// measure flow: a directory of per-time clouds plus an index

inline void write_flow_dir(const std::string& dir, const MeasureFlow& flow) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json idx;
    idx["times"] = nlohmann::json::array();
    idx["files"] = nlohmann::json::array();
    for (std::size_t k = 0; k < flow.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "slice_%04zu.csv", k);
        write_measure_csv((fs::path(dir) / name).string(), flow.at(k));
        idx["times"].push_back(flow.times()[k]);
        idx["files"].push_back(name);
    }
    atomic_write_text((fs::path(dir) / "index.json").string(), idx.dump(2) + "\n");
}

inline MeasureFlow read_flow_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "index.json");
    if (!in) throw error("read_flow_dir: cannot open index.json in " + dir);
    nlohmann::json idx = nlohmann::json::parse(in);
    std::vector<double> times = idx.at("times").get<std::vector<double>>();
    std::vector<EmpiricalMeasure> ms;
    for (const auto& f : idx.at("files"))
        ms.push_back(read_measure_csv((fs::path(dir) / f.get<std::string>()).string()));
    return MeasureFlow(std::move(times), std::move(ms));
}

// ---------------------------------------------------------------------------
// particle paths: little-endian binary container

inline void write_paths_bin(const std::string& path, const ParticlePaths& P) {
    std::vector<char> bytes;
    auto put = [&](const void* src, std::size_t n) {
        const char* c = static_cast<const char*>(src);
        bytes.insert(bytes.end(), c, c + n);
    };
    const char magic[4] = {'M', 'F', 'B', 'P'};
    put(magic, 4);
    const std::uint32_t version = 1;
    put(&version, 4);
    const std::uint64_t head[7] = {P.particles,     P.n_steps + 1, P.d, P.p, P.m,
                                   P.seed,          P.reflected_particles};
    put(head, sizeof head);
    auto put_vec = [&](const std::vector<double>& v) {
        put(v.data(), v.size() * sizeof(double));
    };
    put_vec(P.X);
    put_vec(P.Y);
    put_vec(P.Z);
    put_vec(P.dW);
    atomic_write_bytes(path, bytes);
}

inline ParticlePaths read_paths_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw error("read_paths_bin: cannot open " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "MFBP")
        throw error("read_paths_bin: bad magic in " + path);
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), 4);
    if (!in || version != 1)
        throw error("read_paths_bin: unsupported version in " + path);
    std::uint64_t head[7];
    in.read(reinterpret_cast<char*>(head), sizeof head);
    if (!in) throw error("read_paths_bin: truncated header in " + path);
    ParticlePaths P;
    P.particles = std::size_t(head[0]);
    const std::size_t n_times = std::size_t(head[1]);
    if (n_times == 0) throw error("read_paths_bin: zero time levels in " + path);
    P.n_steps = n_times - 1;
    P.d = std::size_t(head[2]);
    P.p = std::size_t(head[3]);
    P.m = std::size_t(head[4]);
    P.seed = head[5];
    P.reflected_particles = std::size_t(head[6]);
    auto get_vec = [&](std::vector<double>& v, std::size_t n, const char* what) {
        v.resize(n);
        in.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(double)));
        if (!in)
            throw error("read_paths_bin: truncated " + std::string(what) + " in " + path);
    };
    get_vec(P.X, P.particles * n_times * P.d, "X");
    get_vec(P.Y, P.particles * n_times * P.p, "Y");
    get_vec(P.Z, P.particles * P.n_steps * P.p * P.m, "Z");
    get_vec(P.dW, P.particles * P.n_steps * P.m, "dW");
    return P;
}

// ---------------------------------------------------------------------------
// per-iteration history

inline void write_convergence_csv(const std::string& path,
                                  const std::vector<IterationRecord>& hist) {
    std::string s = "iter,du,dflow,field_sup,field_slope,flow_m4,reflected\n";
    for (const auto& r : hist) {
        s += std::to_string(r.iter) + "," + format_g(r.du) + "," + format_g(r.dflow) +
             "," + format_g(r.field_sup) + "," + format_g(r.field_slope) + "," +
             format_g(r.flow_m4) + "," + std::to_string(r.reflected) + "\n";
    }
    atomic_write_text(path, s);
}

// ---------------------------------------------------------------------------
// mean trajectories for plotting, with optional scalar reference columns

inline void write_plot_csv(const std::string& path, const ParticlePaths& P,
                           std::span<const double> times,
                           const ReferenceSolution* ref = nullptr) {
    if (times.size() != P.n_steps + 1)
        throw dimension_error("write_plot_csv: times/paths length mismatch");
    const bool with_ref = ref != nullptr && P.d == 1 && P.p == 1;
    std::string s = "t";
    for (std::size_t j = 0; j < P.d; ++j) s += ",mean_x_" + std::to_string(j + 1);
    for (std::size_t j = 0; j < P.p; ++j) s += ",mean_y_" + std::to_string(j + 1);
    if (with_ref) s += ",ref_x_1,ref_y_1,w2_to_ref";
    s += "\n";
    std::vector<double> mx(P.d), my(P.p);
    for (std::size_t k = 0; k <= P.n_steps; ++k) {
        std::fill(mx.begin(), mx.end(), 0.0);
        std::fill(my.begin(), my.end(), 0.0);
        for (std::size_t i = 0; i < P.particles; ++i) {
            const auto x = P.x(i, k);
            const auto y = P.y(i, k);
            for (std::size_t j = 0; j < P.d; ++j) mx[j] += x[j];
            for (std::size_t j = 0; j < P.p; ++j) my[j] += y[j];
        }
        for (double& v : mx) v /= double(P.particles);
        for (double& v : my) v /= double(P.particles);
        s += format_g(times[k]);
        for (double v : mx) s += "," + format_g(v);
        for (double v : my) s += "," + format_g(v);
        if (with_ref) {
            const double rx = ref->mean_x(times[k]);
            const double ry = ref->mean_y(times[k]);
            s += "," + format_g(rx) + "," + format_g(ry) + "," +
                 format_g(std::abs(mx[0] - rx));
        }
        s += "\n";
    }
    atomic_write_text(path, s);
}

// ---------------------------------------------------------------------------
// assumption report as JSON

inline nlohmann::json assumption_report_json(const AssumptionReport& r) {
    nlohmann::json j;
    j["declared_L"] = r.declared_L;
    j["lipschitz_estimates"] = r.lipschitz_estimates;
    j["ellipticity_min"] = r.ellipticity_min;
    j["sigma_time_continuity"] = r.sigma_time_continuity;
    j["lipschitz_ok"] = r.lipschitz_ok();
    j["ellipticity_ok"] = r.ellipticity_ok();
    j["clean"] = r.clean();
    j["growth_violations"] = nlohmann::json::array();
    for (const auto& v : r.growth_violations)
        j["growth_violations"].push_back({{"coefficient", v.coefficient},
                                          {"where", v.where},
                                          {"lhs", v.lhs},
                                          {"rhs", v.rhs}});
    return j;
}

} // namespace mfbsde::io
