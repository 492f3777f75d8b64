// mfbsde command line.
//
//   mfbsde solve      --problem counterexample?A=1 --out runs/a1
//   mfbsde multistart --problem counterexample --A-values -1,0,1 --out runs/ms
//   mfbsde validate   --problem mean-reversion
//   mfbsde w2 a.csv b.csv --method auto
//
// Configuration is a flat map of dotted keys, merged in order: problem
// defaults, then --config file (JSON, nested or flat), then MFBSDE_*
// environment variables, then --set key=value, then explicit --seed and
// --threads flags. Bare keys in --set and in the problem query string are
// problem parameters. Every run directory gets a manifest.json, written
// even when the run fails.

#include <CLI11.hpp>
#include <json.hpp>

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <mfbsde/mfbsde.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using ConfigMap = std::map<std::string, std::string>;

const std::vector<std::string> kConfigKeys = {
    "grid.n_t",           "grid.n_x",        "grid.x_min",
    "grid.x_max",         "grid.cfl_fraction",
    "solver.theta",       "solver.tol_u",    "solver.tol_flow",
    "solver.max_iters",   "solver.particles", "solver.seed",
    "solver.threads",     "solver.gamma_cap", "solver.lipschitz_cap",
    "solver.gamma_prime", "solver.ladder",    "solver.center_noise",
};

bool known_config_key(const std::string& k) {
    for (const auto& key : kConfigKeys)
        if (key == k) return true;
    return false;
}

std::string env_name(const std::string& key) {
    std::string s = "MFBSDE_";
    for (char c : key)
        s += (c == '.' || c == '-') ? '_' : char(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

double parse_number(const std::string& v, const std::string& what) {
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || (end && *end != '\0'))
        throw mfbsde::config_error("cannot parse '" + v + "' as a number for " + what);
    return x;
}

double get_d(const ConfigMap& m, const std::string& key, double fallback) {
    auto it = m.find(key);
    return it == m.end() ? fallback : parse_number(it->second, key);
}

std::size_t get_u(const ConfigMap& m, const std::string& key, std::size_t fallback) {
    auto it = m.find(key);
    if (it == m.end()) return fallback;
    const double v = parse_number(it->second, key);
    if (v < 0 || v != std::floor(v))
        throw mfbsde::config_error(key + " must be a nonnegative integer, got " +
                                   it->second);
    return std::size_t(v);
}

std::vector<double> get_list(const ConfigMap& m, const std::string& key) {
    auto it = m.find(key);
    std::vector<double> out;
    if (it == m.end() || it->second.empty()) return out;
    std::string cur;
    for (char c : it->second + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(parse_number(cur, key));
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    return out;
}

void flatten_json(const json& j, const std::string& prefix, ConfigMap& out) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items())
            flatten_json(v, prefix.empty() ? k : prefix + "." + k, out);
    } else if (j.is_array()) {
        std::string s;
        for (const auto& e : j) {
            if (!s.empty()) s += ",";
            s += e.is_string() ? e.get<std::string>() : json(e).dump();
        }
        out[prefix] = s;
    } else if (j.is_string()) {
        out[prefix] = j.get<std::string>();
    } else {
        out[prefix] = j.dump();
    }
}

struct RunSpec {
    std::string problem_name;
    std::map<std::string, double> problem_params;
    ConfigMap cfg;
};

// "--problem name?k=v&k=v" plus config sources merged by precedence
RunSpec build_run_spec(const std::string& problem_spec, const std::string& config_file,
                       const std::vector<std::string>& sets, std::optional<std::uint64_t> seed_flag,
                       std::optional<unsigned> threads_flag) {
    RunSpec rs;
    std::string query;
    const auto qpos = problem_spec.find('?');
    rs.problem_name = problem_spec.substr(0, qpos);
    if (qpos != std::string::npos) query = problem_spec.substr(qpos + 1);
    if (rs.problem_name.empty())
        throw mfbsde::config_error("--problem requires a problem name");

    if (!config_file.empty()) {
        std::ifstream in(config_file);
        if (!in) throw mfbsde::config_error("cannot open config file " + config_file);
        json j;
        try {
            j = json::parse(in);
        } catch (const std::exception& e) {
            throw mfbsde::config_error("config file " + config_file + ": " + e.what());
        }
        ConfigMap flat;
        flatten_json(j, "", flat);
        for (const auto& [k, v] : flat) {
            if (k.rfind("problem.", 0) == 0) {
                rs.problem_params[k.substr(8)] = parse_number(v, k);
            } else if (known_config_key(k)) {
                rs.cfg[k] = v;
            } else {
                throw mfbsde::config_error("config file: unknown key '" + k + "'");
            }
        }
    }

    for (const auto& key : kConfigKeys)
        if (const char* v = std::getenv(env_name(key).c_str())) rs.cfg[key] = v;

    auto apply_pair = [&](const std::string& kv, const char* who) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw mfbsde::config_error(std::string(who) + " expects key=value, got '" +
                                       kv + "'");
        const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k.rfind("problem.", 0) == 0) {
            rs.problem_params[k.substr(8)] = parse_number(v, k);
        } else if (k.find('.') != std::string::npos) {
            if (!known_config_key(k))
                throw mfbsde::config_error(std::string(who) + ": unknown config key '" +
                                           k + "'");
            rs.cfg[k] = v;
        } else {
            rs.problem_params[k] = parse_number(v, k);
        }
    };
    if (!query.empty()) {
        std::string cur;
        for (char c : query + "&") {
            if (c == '&') {
                if (!cur.empty()) apply_pair(cur, "--problem query");
                cur.clear();
            } else {
                cur += c;
            }
        }
    }
    for (const auto& kv : sets) apply_pair(kv, "--set");
    if (seed_flag) rs.cfg["solver.seed"] = std::to_string(*seed_flag);
    if (threads_flag) rs.cfg["solver.threads"] = std::to_string(*threads_flag);
    return rs;
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string run_id(const std::string& command, const RunSpec& rs) {
    std::string s = command + "\n" + rs.problem_name + "\n";
    for (const auto& [k, v] : rs.problem_params)
        s += k + "=" + mfbsde::io::format_g(v) + "\n";
    for (const auto& [k, v] : rs.cfg) s += k + "=" + v + "\n";
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(s)));
    return buf;
}

mfbsde::GridSpec make_grid(const mfbsde::Problem& p, const ConfigMap& cfg) {
    const std::size_t n_t = get_u(cfg, "grid.n_t", p.defaults.n_t);
    const std::size_t n_x = get_u(cfg, "grid.n_x", p.defaults.n_x);
    const double lo = get_d(cfg, "grid.x_min", p.defaults.x_lo);
    const double hi = get_d(cfg, "grid.x_max", p.defaults.x_hi);
    const double cfl = get_d(cfg, "grid.cfl_fraction", 1.0);
    return mfbsde::GridSpec(p.horizon, n_t, {mfbsde::Axis{lo, hi, n_x}}, cfl);
}

mfbsde::SolverConfig make_solver_config(const mfbsde::Problem& p,
                                        const mfbsde::GridSpec& grid,
                                        const ConfigMap& cfg) {
    mfbsde::SolverConfig sc(grid, p.x0);
    sc.particles = get_u(cfg, "solver.particles", p.defaults.particles);
    sc.theta = get_d(cfg, "solver.theta", p.defaults.theta);
    sc.tol_u = get_d(cfg, "solver.tol_u", 1e-3);
    sc.tol_flow = get_d(cfg, "solver.tol_flow", 1e-3);
    sc.max_iters = get_u(cfg, "solver.max_iters", p.defaults.max_iters);
    sc.seed = get_u(cfg, "solver.seed", 1);
    sc.gamma_cap = get_d(cfg, "solver.gamma_cap", 0.0);
    sc.lipschitz_cap = get_d(cfg, "solver.lipschitz_cap", 0.0);
    sc.gamma_prime = get_d(cfg, "solver.gamma_prime", 0.0);
    sc.truncation_ladder = get_list(cfg, "solver.ladder");
    sc.threads = unsigned(get_u(cfg, "solver.threads", 1));
    sc.center_noise = get_u(cfg, "solver.center_noise", 1) != 0;
    return sc;
}

json history_json(const std::vector<mfbsde::IterationRecord>& hist) {
    json arr = json::array();
    for (const auto& r : hist)
        arr.push_back({{"iter", r.iter},
                       {"du", r.du},
                       {"dflow", r.dflow},
                       {"field_sup", r.field_sup},
                       {"field_slope", r.field_slope},
                       {"flow_m4", r.flow_m4},
                       {"reflected", r.reflected}});
    return arr;
}

json diagnostics_json(const mfbsde::SolveDiagnostics& d) {
    return {{"gamma_cap", d.envelopes.gamma_cap},
            {"lipschitz_cap", d.envelopes.lipschitz_cap},
            {"gamma_prime", d.envelopes.gamma_prime},
            {"max_field_sup", d.max_field_sup},
            {"max_field_slope", d.max_field_slope},
            {"max_flow_m4", d.max_flow_m4},
            {"max_reflected", d.max_reflected},
            {"time_increment_ratio", d.time_increment_ratio}};
}

json base_manifest(const std::string& command, const RunSpec& rs) {
    json m;
    m["schema_version"] = 1;
    m["run_id"] = run_id(command, rs);
    m["command"] = command;
    m["problem"] = {{"name", rs.problem_name}, {"params", rs.problem_params}};
    m["config"] = rs.cfg;
    m["outputs"] = json::array();
    return m;
}

void write_manifest(const std::string& out_dir, const json& m) {
    mfbsde::io::atomic_write_text((fs::path(out_dir) / "manifest.json").string(),
                                  m.dump(2) + "\n");
}

void write_flow_summary(const std::string& path, const mfbsde::MeasureFlow& flow) {
    const std::size_t d = flow.dim();
    std::string s = "t";
    for (std::size_t j = 0; j < d; ++j) s += ",mean_x_" + std::to_string(j + 1);
    for (std::size_t j = 0; j < d; ++j) s += ",std_x_" + std::to_string(j + 1);
    s += "\n";
    for (std::size_t k = 0; k < flow.size(); ++k) {
        const auto& mu = flow.at(k);
        s += mfbsde::io::format_g(flow.times()[k]);
        const auto mean = mu.mean();
        const auto m2 = mu.second_moments();
        for (std::size_t j = 0; j < d; ++j) s += "," + mfbsde::io::format_g(mean[j]);
        for (std::size_t j = 0; j < d; ++j) {
            const double var = std::max(0.0, m2[j] - mean[j] * mean[j]);
            s += "," + mfbsde::io::format_g(std::sqrt(var));
        }
        s += "\n";
    }
    mfbsde::io::atomic_write_text(path, s);
}

void write_bundle_outputs(const std::string& out_dir, const mfbsde::SolutionBundle& b,
                          const mfbsde::Problem& prob, const mfbsde::GridSpec& grid,
                          bool dump_flow, bool dump_paths, json& manifest) {
    auto add = [&](const std::string& name) { manifest["outputs"].push_back(name); };
    mfbsde::io::write_convergence_csv((fs::path(out_dir) / "convergence.csv").string(),
                                      b.history);
    add("convergence.csv");
    mfbsde::io::write_field_csv((fs::path(out_dir) / "field.csv").string(), b.u);
    add("field.csv");
    mfbsde::io::write_field_csv((fs::path(out_dir) / "z_field.csv").string(), b.z);
    add("z_field.csv");
    write_flow_summary((fs::path(out_dir) / "flow_summary.csv").string(), b.flow);
    add("flow_summary.csv");
    const mfbsde::ReferenceSolution* ref =
        prob.reference ? &*prob.reference : nullptr;
    mfbsde::io::write_plot_csv((fs::path(out_dir) / "plot.csv").string(), b.paths,
                               grid.times(), ref);
    add("plot.csv");
    if (dump_flow) {
        mfbsde::io::write_flow_dir((fs::path(out_dir) / "flow").string(), b.flow);
        add("flow/");
    }
    if (dump_paths) {
        mfbsde::io::write_paths_bin((fs::path(out_dir) / "paths.bin").string(), b.paths);
        add("paths.bin");
    }
}

int run_solve(const RunSpec& rs, const std::string& out_dir, bool basin_init,
              bool dump_flow, bool dump_paths) {
    json manifest = base_manifest("solve", rs);
    fs::create_directories(out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    auto seconds_since = [](auto start) {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    };
    try {
        mfbsde::Problem prob = mfbsde::make_problem(rs.problem_name, rs.problem_params);
        const mfbsde::GridSpec grid = make_grid(prob, rs.cfg);
        const mfbsde::SolverConfig sc = make_solver_config(prob, grid, rs.cfg);

        std::optional<mfbsde::InitialState> init;
        if (basin_init && prob.make_init)
            init = prob.make_init(grid, sc.particles, sc.seed, sc.center_noise);

        const auto t_solve = std::chrono::steady_clock::now();
        mfbsde::SolutionBundle bundle = [&] {
            if (!sc.truncation_ladder.empty()) {
                mfbsde::ContinuationResult cr = mfbsde::continuation_solve(prob.coeffs, sc);
                json levels = json::array();
                for (const auto& lv : cr.levels)
                    levels.push_back({{"radius", lv.radius},
                                      {"converged", lv.converged},
                                      {"iterations", lv.iterations},
                                      {"final_du", lv.final_du},
                                      {"final_dflow", lv.final_dflow}});
                manifest["levels"] = levels;
                manifest["continuation_completed"] = cr.completed;
                if (!cr.error.empty()) manifest["continuation_error"] = cr.error;
                return std::move(cr.bundle);
            }
            return mfbsde::solve(prob.coeffs, sc, std::move(init));
        }();
        const double solve_s = seconds_since(t_solve);

        manifest["status"] = bundle.converged ? "converged" : "not_converged";
        manifest["iterations"] = bundle.iterations;
        manifest["final_du"] = bundle.final_du;
        manifest["final_dflow"] = bundle.final_dflow;
        manifest["history"] = history_json(bundle.history);
        manifest["diagnostics"] = diagnostics_json(bundle.diagnostics);
        write_bundle_outputs(out_dir, bundle, prob, grid, dump_flow, dump_paths,
                             manifest);
        manifest["timings"] = {{"total_seconds", seconds_since(t0)},
                               {"solve_seconds", solve_s}};
        write_manifest(out_dir, manifest);

        std::cout << (bundle.converged ? "converged" : "did not converge") << " after "
                  << bundle.iterations << " iterations (du=" << bundle.final_du
                  << ", dflow=" << bundle.final_dflow << ")\n"
                  << "outputs in " << out_dir << "\n";
        return bundle.converged ? 0 : 2;
    } catch (const std::exception& e) {
        manifest["status"] = "error";
        manifest["error"] = e.what();
        manifest["timings"] = {{"total_seconds", seconds_since(t0)}};
        try {
            write_manifest(out_dir, manifest);
        } catch (...) {
        }
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int run_multistart(const RunSpec& rs, const std::string& out_dir,
                   const std::string& a_values_arg, std::size_t random_inits) {
    json manifest = base_manifest("multistart", rs);
    fs::create_directories(out_dir);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (rs.problem_name != "counterexample")
            throw mfbsde::config_error(
                "multistart needs a problem with a basin initializer; supported: "
                "counterexample");
        mfbsde::Problem base = mfbsde::make_problem(rs.problem_name, rs.problem_params);
        const double R = base.params.at("R");
        const mfbsde::GridSpec grid = make_grid(base, rs.cfg);
        const mfbsde::SolverConfig sc = make_solver_config(base, grid, rs.cfg);

        std::vector<double> a_values;
        {
            ConfigMap tmp;
            tmp["A-values"] = a_values_arg;
            a_values = get_list(tmp, "A-values");
        }
        if (random_inits > 0) {
            std::mt19937_64 gen(mfbsde::stream_seed(sc.seed, 0x5747a275ULL));
            const double amax = 0.9 * R / std::numbers::sqrt2;
            std::uniform_real_distribution<double> dist(-amax, amax);
            for (std::size_t i = 0; i < random_inits; ++i) a_values.push_back(dist(gen));
        }
        if (a_values.size() < 2)
            throw mfbsde::config_error(
                "multistart needs at least two starts; pass --A-values or "
                "--random-inits");

        std::vector<mfbsde::InitialState> inits;
        std::vector<mfbsde::Problem> probs;
        for (double a : a_values) {
            auto params = rs.problem_params;
            params["A"] = a;
            probs.push_back(mfbsde::make_problem(rs.problem_name, params));
            inits.push_back(
                probs.back().make_init(grid, sc.particles, sc.seed, sc.center_noise));
        }
        mfbsde::MultiStartResult ms =
            mfbsde::multi_start(base.coeffs, sc, std::move(inits));

        json starts = json::array();
        bool all_converged = true;
        for (std::size_t i = 0; i < ms.bundles.size(); ++i) {
            char dir_name[32];
            std::snprintf(dir_name, sizeof dir_name, "start_%02zu", i);
            const std::string sdir = (fs::path(out_dir) / dir_name).string();
            fs::create_directories(sdir);
            mfbsde::io::write_convergence_csv(
                (fs::path(sdir) / "convergence.csv").string(), ms.bundles[i].history);
            mfbsde::io::write_plot_csv((fs::path(sdir) / "plot.csv").string(),
                                       ms.bundles[i].paths, grid.times(),
                                       probs[i].reference ? &*probs[i].reference
                                                          : nullptr);
            all_converged = all_converged && ms.bundles[i].converged;
            starts.push_back({{"A", a_values[i]},
                              {"dir", dir_name},
                              {"converged", ms.bundles[i].converged},
                              {"iterations", ms.bundles[i].iterations},
                              {"final_du", ms.bundles[i].final_du},
                              {"final_dflow", ms.bundles[i].final_dflow},
                              {"label", ms.labels[i]}});
        }
        {
            std::string s = "i,j,field_dist,flow_dist\n";
            for (std::size_t i = 0; i < ms.bundles.size(); ++i)
                for (std::size_t j = i + 1; j < ms.bundles.size(); ++j)
                    s += std::to_string(i) + "," + std::to_string(j) + "," +
                         mfbsde::io::format_g(ms.field_dist[i][j]) + "," +
                         mfbsde::io::format_g(ms.flow_dist[i][j]) + "\n";
            mfbsde::io::atomic_write_text(
                (fs::path(out_dir) / "distance_matrix.csv").string(), s);
        }
        manifest["status"] = all_converged ? "converged" : "not_converged";
        manifest["starts"] = starts;
        manifest["distinct_count"] = ms.distinct_count;
        manifest["threshold"] = ms.threshold;
        manifest["outputs"].push_back("distance_matrix.csv");
        manifest["timings"] = {
            {"total_seconds",
             std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                 .count()}};
        write_manifest(out_dir, manifest);
        std::cout << ms.distinct_count << " distinct solution"
                  << (ms.distinct_count == 1 ? "" : "s") << " among "
                  << ms.bundles.size() << " starts (threshold " << ms.threshold
                  << ")\noutputs in " << out_dir << "\n";
        return all_converged ? 0 : 2;
    } catch (const std::exception& e) {
        manifest["status"] = "error";
        manifest["error"] = e.what();
        try {
            write_manifest(out_dir, manifest);
        } catch (...) {
        }
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int run_validate(const RunSpec& rs, const std::string& out_dir, std::size_t samples,
                 double box_radius, const std::string& format) {
    try {
        mfbsde::Problem prob = mfbsde::make_problem(rs.problem_name, rs.problem_params);
        mfbsde::ProbeOptions opt;
        opt.n_samples = samples;
        opt.box_radius = box_radius;
        opt.seed = get_u(rs.cfg, "solver.seed", 1);
        opt.t_max = prob.horizon;
        const unsigned threads = unsigned(get_u(rs.cfg, "solver.threads", 1));
        const mfbsde::AssumptionReport rep =
            mfbsde::probe_assumptions(prob.coeffs, opt, threads);
        const json j = mfbsde::io::assumption_report_json(rep);
        if (!out_dir.empty()) {
            fs::create_directories(out_dir);
            mfbsde::io::atomic_write_text(
                (fs::path(out_dir) / "assumptions.json").string(), j.dump(2) + "\n");
        }
        if (format == "json") {
            std::cout << j.dump(2) << "\n";
        } else {
            std::cout << "declared L: " << rep.declared_L << "\n";
            for (const auto& [k, v] : rep.lipschitz_estimates)
                std::cout << "lipschitz[" << k << "] ~ " << v << "\n";
            std::cout << "ellipticity min: " << rep.ellipticity_min << "\n"
                      << "sigma time continuity: " << rep.sigma_time_continuity << "\n"
                      << "growth violations: " << rep.growth_violations.size() << "\n";
            for (const auto& v : rep.growth_violations)
                std::cout << "  " << v.coefficient << " at " << v.where << ": |value| "
                          << v.lhs << " > bound " << v.rhs << "\n";
        }
        if (!rep.ellipticity_ok()) {
            std::cout << "verdict: degenerate volatility\n";
            return 1;
        }
        if (!rep.clean()) {
            std::cout << "verdict: warnings\n";
            return 2;
        }
        std::cout << "verdict: clean\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

int run_w2(const std::string& file_a, const std::string& file_b,
           const std::string& method, std::size_t projections, std::uint64_t seed,
           std::size_t cap, const std::string& format) {
    try {
        const mfbsde::EmpiricalMeasure a = mfbsde::io::read_measure_csv(file_a);
        const mfbsde::EmpiricalMeasure b = mfbsde::io::read_measure_csv(file_b);
        // Resolve "auto" to the algorithm that will actually run, mirroring
        // w2_auto's dispatch, so the reported method names the computation.
        std::string resolved = method;
        if (method == "auto") {
            if (a.dim() == 1 && b.dim() == 1) {
                resolved = "1d";
            } else if (a.size() == b.size() && a.size() <= cap &&
                       a.uniform_weights() && b.uniform_weights()) {
                resolved = "assignment";
            } else {
                resolved = "sliced";
            }
        }
        double v = 0;
        if (resolved == "1d") {
            v = mfbsde::w2_1d(a, b);
        } else if (resolved == "assignment") {
            v = mfbsde::w2_assignment(a, b, cap);
        } else if (resolved == "sliced") {
            v = mfbsde::w2_sliced(a, b, projections, seed);
        } else {
            throw mfbsde::config_error("unknown method '" + method +
                                       "'; use auto, 1d, assignment or sliced");
        }
        if (format == "json") {
            std::cout << json{{"w2", v}, {"method", resolved}}.dump() << "\n";
        } else {
            std::cout << mfbsde::io::format_g(v) << "\n";
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"coupled forward-backward mean-field solver"};
    app.require_subcommand(1);

    std::string problem_spec, config_file, out_dir = "out", format = "text";
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed_flag;
    std::optional<unsigned> threads_flag;
    bool no_basin = false, dump_flow = false, dump_paths = false;

    auto add_common = [&](CLI::App* cmd, bool with_out) {
        cmd->add_option("--problem", problem_spec,
                        "problem name, optionally with ?param=value&... query");
        cmd->add_option("--config", config_file, "JSON config file");
        cmd->add_option("--set", sets, "override config entries as key=value");
        cmd->add_option("--seed", seed_flag, "noise seed (overrides solver.seed)");
        cmd->add_option("--threads", threads_flag,
                        "worker threads (overrides solver.threads)");
        cmd->add_option("--format", format, "stdout format: text or json")
            ->check(CLI::IsMember({"text", "json"}));
        if (with_out) cmd->add_option("--out", out_dir, "output directory");
    };

    CLI::App* c_solve = app.add_subcommand("solve", "run the fixed-point solver");
    add_common(c_solve, true);
    c_solve->add_flag("--no-basin-init", no_basin,
                      "ignore the problem's basin initializer");
    c_solve->add_flag("--dump-flow", dump_flow, "write every time-slice cloud");
    c_solve->add_flag("--dump-paths", dump_paths, "write the particle paths (binary)");

    CLI::App* c_multi =
        app.add_subcommand("multistart", "solve from several basins and compare limits");
    add_common(c_multi, true);
    std::string a_values;
    std::size_t random_inits = 0;
    c_multi->add_option("--A-values", a_values, "comma-separated basin targets");
    c_multi->add_option("--random-inits", random_inits,
                        "number of random basin targets to add");

    CLI::App* c_validate =
        app.add_subcommand("validate", "probe the standing assumptions");
    add_common(c_validate, true);
    std::size_t samples = 64;
    double box_radius = 2.0;
    c_validate->add_option("--samples", samples, "probe sample count");
    c_validate->add_option("--box-radius", box_radius, "probe box half-width");

    CLI::App* c_w2 = app.add_subcommand("w2", "distance between two point-cloud CSVs");
    std::string file_a, file_b, method = "auto";
    std::size_t projections = 64, cap = mfbsde::kAssignmentCap;
    std::uint64_t w2_seed = 0x5eed;
    c_w2->add_option("a", file_a, "first cloud CSV")->required();
    c_w2->add_option("b", file_b, "second cloud CSV")->required();
    c_w2->add_option("--method", method, "auto | 1d | assignment | sliced")
        ->check(CLI::IsMember({"auto", "1d", "assignment", "sliced"}));
    c_w2->add_option("--projections", projections, "directions for the sliced method");
    c_w2->add_option("--seed", w2_seed, "projection seed for the sliced method");
    c_w2->add_option("--cap", cap, "size limit for the exact assignment method");
    c_w2->add_option("--format", format, "stdout format: text or json")
        ->check(CLI::IsMember({"text", "json"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_w2->parsed()) return run_w2(file_a, file_b, method, projections, w2_seed,
                                          cap, format);
        if (problem_spec.empty()) {
            std::cerr << "error: --problem is required\n";
            return 1;
        }
        const RunSpec rs =
            build_run_spec(problem_spec, config_file, sets, seed_flag, threads_flag);
        if (c_solve->parsed())
            return run_solve(rs, out_dir, !no_basin, dump_flow, dump_paths);
        if (c_multi->parsed()) return run_multistart(rs, out_dir, a_values, random_inits);
        if (c_validate->parsed())
            return run_validate(rs, out_dir, samples, box_radius, format);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
