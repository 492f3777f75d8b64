// End-to-end checks of the command-line tool: real process spawns, exit
// codes, manifests, file outputs, and configuration precedence.
#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "nlohmann/json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mfbsde_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

struct RunResult {
    int exit_code = -1;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunResult run_cli(const std::string& args, const TempDir& td,
                  const std::string& extra_env = "") {
    const std::string out_f = td.sub("stdout.txt"), err_f = td.sub("stderr.txt");
    std::string cmd = extra_env + " " + std::string(MFBSDE_CLI_PATH) + " " + args +
                      " >" + out_f + " 2>" + err_f;
    const int rc = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    r.out = slurp(out_f);
    r.err = slurp(err_f);
    return r;
}

json read_manifest(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    json j;
    in >> j;
    return j;
}

} // namespace

TEST(Cli, HelpListsSubcommands) {
    TempDir td;
    RunResult r = run_cli("--help", td);
    EXPECT_EQ(r.exit_code, 0);
    for (const char* sub : {"solve", "multistart", "validate", "w2"})
        EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
}

TEST(Cli, SolveDecoupledConvergesWithFullOutputs) {
    TempDir td;
    const std::string out = td.sub("run");
    RunResult r = run_cli("solve --problem decoupled --out " + out +
                              " --set solver.particles=300 --set grid.n_t=50"
                              " --set grid.n_x=41",
                          td);
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("converged"), std::string::npos);
    for (const char* f : {"manifest.json", "convergence.csv", "field.csv",
                          "z_field.csv", "flow_summary.csv", "plot.csv"})
        EXPECT_TRUE(fs::exists(fs::path(out) / f)) << f;
    json m = read_manifest(out);
    EXPECT_EQ(m["status"], "converged");
    EXPECT_EQ(m["command"], "solve");
    EXPECT_EQ(m["problem"]["name"], "decoupled");
    EXPECT_EQ(m["iterations"], 2);
    std::ifstream plot(fs::path(out) / "plot.csv");
    std::string header;
    std::getline(plot, header);
    EXPECT_EQ(header, "t,mean_x_1,mean_y_1,ref_x_1,ref_y_1,w2_to_ref");
}

TEST(Cli, SolveReportsNonConvergenceWithExitTwo) {
    TempDir td;
    const std::string out = td.sub("run");
    RunResult r = run_cli("solve --problem 'counterexample?A=1' --out " + out +
                              " --set solver.particles=200 --set grid.n_t=60"
                              " --set grid.n_x=41 --set solver.max_iters=1"
                              " --set solver.tol_u=1e-14 --set solver.tol_flow=1e-14",
                          td);
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_EQ(read_manifest(out)["status"], "not_converged");
}

TEST(Cli, UnknownProblemListsTheRegistry) {
    TempDir td;
    RunResult r = run_cli("solve --problem nonsense --out " + td.sub("x"), td);
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.err.find("counterexample"), std::string::npos);
    EXPECT_NE(r.err.find("mean-reversion"), std::string::npos);
    json m = read_manifest(td.sub("x"));
    EXPECT_EQ(m["status"], "error");
}

TEST(Cli, UnknownConfigKeyIsRejected) {
    TempDir td;
    RunResult r = run_cli("solve --problem decoupled --out " + td.sub("x") +
                              " --set solver.bogus=1",
                          td);
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.err.find("solver.bogus"), std::string::npos);
}

TEST(Cli, ConfigPrecedenceFileThenEnvThenFlag) {
    TempDir td;
    {
        std::ofstream cfg(td.sub("cfg.json"));
        cfg << R"({"solver": {"seed": 3, "particles": 200}, "grid": {"n_t": 50, "n_x": 41}})";
    }
    const std::string out1 = td.sub("r1");
    RunResult r1 = run_cli("solve --problem decoupled --config " + td.sub("cfg.json") +
                               " --out " + out1,
                           td, "MFBSDE_SOLVER_SEED=7");
    ASSERT_EQ(r1.exit_code, 0) << r1.err;
    EXPECT_EQ(read_manifest(out1)["config"]["solver.seed"], "7");

    const std::string out2 = td.sub("r2");
    RunResult r2 = run_cli("solve --problem decoupled --config " + td.sub("cfg.json") +
                               " --out " + out2 + " --set solver.seed=9",
                           td, "MFBSDE_SOLVER_SEED=7");
    ASSERT_EQ(r2.exit_code, 0) << r2.err;
    EXPECT_EQ(read_manifest(out2)["config"]["solver.seed"], "9");
}

TEST(Cli, ValidateEmitsCleanVerdictAndReportFile) {
    TempDir td;
    const std::string out = td.sub("v");
    RunResult r = run_cli("validate --problem counterexample --out " + out, td);
    EXPECT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("verdict: clean"), std::string::npos);
    EXPECT_TRUE(fs::exists(fs::path(out) / "assumptions.json"));
    json rep;
    std::ifstream(fs::path(out) / "assumptions.json") >> rep;
    EXPECT_TRUE(rep.contains("lipschitz_estimates"));
    EXPECT_TRUE(rep.contains("ellipticity_min"));
}

TEST(Cli, W2ComputesTheExactOneDimensionalDistance) {
    TempDir td;
    std::ofstream(td.sub("a.csv")) << "x_1,weight\n0.0,0.5\n0.0,0.5\n";
    std::ofstream(td.sub("b.csv")) << "x_1,weight\n1.0,0.5\n1.0,0.5\n";
    RunResult r = run_cli("w2 " + td.sub("a.csv") + " " + td.sub("b.csv"), td);
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_EQ(std::stod(r.out), 1.0);

    RunResult j = run_cli("w2 " + td.sub("a.csv") + " " + td.sub("b.csv") +
                              " --format json",
                          td);
    ASSERT_EQ(j.exit_code, 0);
    json parsed = json::parse(j.out);
    EXPECT_DOUBLE_EQ(double(parsed["w2"]), 1.0);
    EXPECT_EQ(parsed["method"], "1d");
}

TEST(Cli, MultistartSeparatesBasinsEndToEnd) {
    TempDir td;
    const std::string out = td.sub("ms");
    RunResult r = run_cli("multistart --problem counterexample --A-values=-1,0,1"
                          " --out " + out +
                              " --set solver.particles=500 --set grid.n_t=80"
                              " --set grid.n_x=61 --set solver.max_iters=30",
                          td);
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("3 distinct solution"), std::string::npos);
    EXPECT_TRUE(fs::exists(fs::path(out) / "distance_matrix.csv"));
    for (const char* d : {"start_00", "start_01", "start_02"})
        EXPECT_TRUE(fs::exists(fs::path(out) / d / "plot.csv")) << d;
    json m = read_manifest(out);
    EXPECT_EQ(m["distinct_count"], 3);
}

TEST(Cli, ThreadCountLeavesEveryNumericOutputByteIdentical) {
    TempDir td;
    const std::string base = " --problem 'counterexample?A=1' "
                             "--set solver.particles=400 --set grid.n_t=60 "
                             "--set grid.n_x=41 --set solver.max_iters=20";
    const std::string o1 = td.sub("t1"), o4 = td.sub("t4");
    RunResult r1 = run_cli("solve" + base + " --threads 1 --out " + o1, td);
    RunResult r4 = run_cli("solve" + base + " --threads 4 --out " + o4, td);
    ASSERT_EQ(r1.exit_code, 0) << r1.err;
    ASSERT_EQ(r4.exit_code, 0) << r4.err;
    for (const char* f : {"field.csv", "z_field.csv", "convergence.csv", "plot.csv",
                          "flow_summary.csv"})
        EXPECT_EQ(slurp(fs::path(o1) / f), slurp(fs::path(o4) / f)) << f;
}
