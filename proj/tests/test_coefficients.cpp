// coefficient bundles, truncation, assumption probing
#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include <mfbsde/coefficients.hpp>
#include <mfbsde/problems.hpp>

using namespace mfbsde;

namespace {

CoefficientSet linear_terminal_set(double L) {
    CoefficientSet c;
    c.dims = Dims{1, 1, 1};
    c.declared_L = L;
    c.B = [](double, std::span<const double>, std::span<const double>,
             std::span<const double>, const EmpiricalMeasure&, std::span<double> o) {
        o[0] = 0.0;
    };
    c.F = c.B;
    c.Sigma = [](double, std::span<const double>, std::span<const double>,
                 const EmpiricalMeasure&, std::span<double> o) { o[0] = 1.0; };
    c.G = [](std::span<const double> x, const EmpiricalMeasure&, std::span<double> o) {
        o[0] = x[0];
    };
    return c;
}

} // namespace

TEST(ProjectBall, RadialProjection) {
    std::vector<double> v = {3.0, 4.0}, out(2);
    project_ball(v, 10.0, out);
    EXPECT_DOUBLE_EQ(out[0], 3.0);
    EXPECT_DOUBLE_EQ(out[1], 4.0);
    project_ball(v, 1.0, out);
    EXPECT_NEAR(out[0], 0.6, 1e-15);
    EXPECT_NEAR(out[1], 0.8, 1e-15);
    project_ball(v, 0.0, out);
    EXPECT_DOUBLE_EQ(out[0], 0.0);
    EXPECT_THROW(project_ball(v, -1.0, out), domain_error);
}

TEST(Truncate, IdentityInsideCapsOutside) {
    CoefficientSet c;
    c.dims = Dims{2, 1, 1};
    c.B = [](double, std::span<const double> x, std::span<const double>,
             std::span<const double>, const EmpiricalMeasure&, std::span<double> o) {
        o[0] = x[0];
        o[1] = x[1];
    };
    c.F = [](double, std::span<const double>, std::span<const double> y,
             std::span<const double>, const EmpiricalMeasure&, std::span<double> o) {
        o[0] = 10.0 * y[0];
    };
    c.Sigma = [](double, std::span<const double>, std::span<const double>,
                 const EmpiricalMeasure&, std::span<double> o) {
        o[0] = 1.0;
        o[1] = 0.0;
    };
    c.G = [](std::span<const double>, const EmpiricalMeasure&, std::span<double> o) {
        o[0] = 7.0;
    };
    auto t = truncate(c, 2.0);
    auto mu = EmpiricalMeasure(3, {0.0, 0.0, 0.0});
    std::vector<double> x = {0.6, 0.8}, y = {1.0}, z = {0.0}, out(2);
    t.B(0.0, x, y, z, mu, out);
    EXPECT_DOUBLE_EQ(out[0], 0.6); // |x| = 1 < 2: untouched
    EXPECT_DOUBLE_EQ(out[1], 0.8);
    std::vector<double> far = {6.0, 8.0};
    t.B(0.0, far, y, z, mu, out);
    EXPECT_NEAR(norm2(std::span<const double>(out)), 2.0, 1e-14);
    EXPECT_NEAR(out[0] / out[1], 6.0 / 8.0, 1e-14); // direction kept
    std::vector<double> f(1);
    t.F(0.0, x, y, z, mu, f);
    EXPECT_DOUBLE_EQ(f[0], 2.0); // 10 capped to 2
    std::vector<double> g(1);
    t.G(x, EmpiricalMeasure(2, {0.0, 0.0}), g);
    EXPECT_DOUBLE_EQ(g[0], 7.0); // terminal map untouched
    EXPECT_THROW(truncate(c, 0.0), domain_error);
}

TEST(ProbeAssumptions, CleanOnClippedMeanProblem) {
    const auto c = counterexample_coefficients(10.0);
    ProbeOptions opt;
    opt.n_samples = 96;
    opt.seed = 5;
    opt.t_max = 0.785;
    const auto rep = probe_assumptions(c, opt);
    EXPECT_TRUE(rep.clean());
    EXPECT_TRUE(rep.lipschitz_ok());
    EXPECT_TRUE(rep.ellipticity_ok());
    EXPECT_NEAR(rep.ellipticity_min, 1.0, 1e-12);
    EXPECT_LE(rep.lipschitz_estimates.at("B"), 1.0 + 1e-9);
    EXPECT_LE(rep.lipschitz_estimates.at("F"), 1.0 + 1e-9);
    EXPECT_LE(rep.lipschitz_estimates.at("Sigma"), 1e-12);
    EXPECT_LE(rep.lipschitz_estimates.at("G"), 1.0 + 1e-9);
    EXPECT_TRUE(rep.growth_violations.empty());
    EXPECT_LE(rep.sigma_time_continuity, 1e-15);
}

TEST(ProbeAssumptions, FlagsUnboundedTerminalMap) {
    // G(x) = x exceeds the declared bound once |x| > L inside the probe box
    const auto c = linear_terminal_set(1.0);
    ProbeOptions opt;
    opt.n_samples = 128;
    opt.box_radius = 3.0;
    opt.seed = 2;
    const auto rep = probe_assumptions(c, opt);
    EXPECT_FALSE(rep.clean());
    bool g_violation = false;
    for (const auto& v : rep.growth_violations)
        if (v.coefficient == "G") {
            g_violation = true;
            EXPECT_GT(v.lhs, v.rhs);
        }
    EXPECT_TRUE(g_violation);
    EXPECT_TRUE(rep.lipschitz_ok()); // slope 1 <= declared 1
    EXPECT_TRUE(rep.ellipticity_ok());
}

TEST(ProbeAssumptions, FlagsDegenerateVolatility) {
    auto c = linear_terminal_set(1.0);
    c.Sigma = [](double, std::span<const double>, std::span<const double>,
                 const EmpiricalMeasure&, std::span<double> o) { o[0] = 0.0; };
    const auto rep = probe_assumptions(c, ProbeOptions{});
    EXPECT_FALSE(rep.ellipticity_ok());
    EXPECT_NEAR(rep.ellipticity_min, 0.0, 1e-15);
    EXPECT_FALSE(rep.clean());
}

TEST(ProbeAssumptions, DeterministicAndThreadCountInvariant) {
    const auto c = counterexample_coefficients(10.0);
    ProbeOptions opt;
    opt.n_samples = 64;
    opt.seed = 9;
    const auto r1 = probe_assumptions(c, opt, 1);
    const auto r2 = probe_assumptions(c, opt, 1);
    const auto r4 = probe_assumptions(c, opt, 4);
    EXPECT_EQ(r1.lipschitz_estimates, r2.lipschitz_estimates);
    EXPECT_EQ(r1.lipschitz_estimates, r4.lipschitz_estimates);
    EXPECT_DOUBLE_EQ(r1.ellipticity_min, r4.ellipticity_min);
    EXPECT_EQ(r1.growth_violations.size(), r4.growth_violations.size());
}

TEST(ProbeAssumptions, EstimatesKnownLipschitzSlope) {
    // B = 2x: the probe's ratio estimate should approach 2 from below
    CoefficientSet c = linear_terminal_set(2.5);
    c.B = [](double, std::span<const double> x, std::span<const double>,
             std::span<const double>, const EmpiricalMeasure&, std::span<double> o) {
        o[0] = 2.0 * x[0];
    };
    ProbeOptions opt;
    opt.n_samples = 256;
    opt.seed = 4;
    const auto rep = probe_assumptions(c, opt);
    EXPECT_GT(rep.lipschitz_estimates.at("B"), 1.2);
    EXPECT_LE(rep.lipschitz_estimates.at("B"), 2.0 + 1e-9);
    EXPECT_TRUE(rep.lipschitz_ok()); // 2 <= declared 2.5
}
