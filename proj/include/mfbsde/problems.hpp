// problems.hpp - bundled verification problems with known behaviour.
//
// "counterexample": horizon pi/4, clipped mean coupling in all three of
// drift, driver and terminal map. It admits a one-parameter family of
// solutions mean_x(t) = A sin t, mean_y(t) = A cos t; which one an iteration
// lands on depends on where it starts, making it the canonical probe for
// multi-start runs. The basin initializer targets a chosen A.
//
// "decoupled": constant drift and driver, linear terminal map; the field
// u(t, x) = x is exact for the discrete scheme, and no coefficient reads
// the measure, so the iteration settles in two sweeps.
//
// "mean-reversion": drift pulls each particle toward the population mean;
// the mean itself stays at x0, giving a flat reference line.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "coefficients.hpp"
#include "errors.hpp"
#include "fixed_point.hpp"
#include "grid.hpp"
#include "measure.hpp"
#include "rng.hpp"

namespace mfbsde {

struct ReferenceSolution {
    std::function<double(double)> mean_x;
    std::function<double(double)> mean_y;
    std::string description;
};

struct ProblemDefaults {
    std::size_t n_t = 100;
    std::size_t n_x = 101;
    double x_lo = -6.0, x_hi = 6.0;
    std::size_t particles = 2000;
    double theta = 0.5;
    std::size_t max_iters = 60;
};

struct Problem {
    std::string name;
    CoefficientSet coeffs;
    double horizon = 1.0;
    std::vector<double> x0;
    ProblemDefaults defaults;
    std::map<std::string, double> params; // resolved parameter values
    std::optional<ReferenceSolution> reference;
    // optional basin-of-attraction initializer (grid, particles, seed)
    std::function<InitialState(const GridSpec&, std::size_t, std::uint64_t, bool)>
        make_init; // (grid, particles, seed, center_noise)
};

// ---------------------------------------------------------------------------
// clipped-mean problem with a continuum of solutions

inline CoefficientSet counterexample_coefficients(double R) {
    if (!(R > 0)) throw domain_error("counterexample: clip radius must be positive");
    CoefficientSet c;
    c.dims = Dims{1, 1, 1};
    c.declared_L = std::max(1.0, R);
    c.B = [R](double, std::span<const double>, std::span<const double>,
              std::span<const double>, const EmpiricalMeasure& nu,
              std::span<double> out) {
        out[0] = std::clamp(nu.mean()[1], -R, R); // mean of the y-coordinate
    };
    c.F = [R](double, std::span<const double>, std::span<const double>,
              std::span<const double>, const EmpiricalMeasure& nu,
              std::span<double> out) {
        out[0] = std::clamp(nu.mean()[0], -R, R); // mean of the x-coordinate
    };
    c.Sigma = [](double, std::span<const double>, std::span<const double>,
                 const EmpiricalMeasure&, std::span<double> out) { out[0] = 1.0; };
    c.G = [R](std::span<const double>, const EmpiricalMeasure& muT,
              std::span<double> out) { out[0] = std::clamp(muT.mean()[0], -R, R); };
    return c;
}

// field A cos t (flat in x) and particle flow A sin t + W, sharing the
// solver's noise streams so the first forward sweep reuses the same paths
inline InitialState counterexample_basin_init(double A, const GridSpec& grid,
                                              std::size_t particles,
                                              std::uint64_t seed,
                                              bool center_noise = true) {
    if (grid.dim() != 1)
        throw grid_error("counterexample_basin_init: needs a one-dimensional grid");
    if (particles == 0)
        throw domain_error("counterexample_basin_init: need >= 1 particle");
    const std::size_t N = grid.n_steps(), ns = grid.n_space();
    DecouplingField phi(grid, 1);
    for (std::size_t k = 0; k <= N; ++k) {
        const double v = A * std::cos(grid.times()[k]);
        for (std::size_t i = 0; i < ns; ++i) phi.at(k, i)[0] = v;
    }

    // same per-particle streams and optional per-step recentering as
    // simulate_forward, so the opening flow rides the very noise the solver
    // will reuse
    const Axis& ax = grid.axis(0);
    const double sq_dt = std::sqrt(grid.dt());
    std::vector<double> dw(particles * N);
    for (std::size_t i = 0; i < particles; ++i) {
        GaussianStream gs(stream_seed(seed, i));
        for (std::size_t k = 0; k < N; ++k) dw[i * N + k] = sq_dt * gs.next();
    }
    if (center_noise && particles > 1) {
        for (std::size_t k = 0; k < N; ++k) {
            double mean = 0;
            for (std::size_t i = 0; i < particles; ++i) mean += dw[i * N + k];
            mean /= double(particles);
            for (std::size_t i = 0; i < particles; ++i) dw[i * N + k] -= mean;
        }
    }
    std::vector<std::vector<double>> slices(N + 1, std::vector<double>(particles));
    for (std::size_t i = 0; i < particles; ++i) {
        double w = 0;
        slices[0][i] = std::clamp(A * std::sin(grid.times()[0]), ax.lo, ax.hi);
        for (std::size_t k = 1; k <= N; ++k) {
            w += dw[i * N + (k - 1)];
            double x = A * std::sin(grid.times()[k]) + w;
            int guard = 0;
            while ((x < ax.lo || x > ax.hi) && guard++ < 64) {
                if (x < ax.lo) x = 2 * ax.lo - x;
                if (x > ax.hi) x = 2 * ax.hi - x;
            }
            slices[k][i] = std::clamp(x, ax.lo, ax.hi);
        }
    }
    std::vector<EmpiricalMeasure> ms;
    ms.reserve(N + 1);
    for (std::size_t k = 0; k <= N; ++k)
        ms.emplace_back(1, std::move(slices[k]));
    return InitialState{std::move(phi),
                        MeasureFlow(std::vector<double>(grid.times().begin(),
                                                        grid.times().end()),
                                    std::move(ms))};
}

inline Problem counterexample(double A = 1.0, double R = 10.0) {
    if (!(std::abs(A) * std::numbers::sqrt2 < R))
        throw domain_error(
            "counterexample: need |A|*sqrt(2) < R so the targeted solution stays "
            "inside the clip (got A=" +
            std::to_string(A) + ", R=" + std::to_string(R) + ")");
    Problem p;
    p.name = "counterexample";
    p.coeffs = counterexample_coefficients(R);
    p.horizon = std::numbers::pi / 4.0;
    p.x0 = {0.0};
    p.defaults = ProblemDefaults{200, 161, -8.0, 8.0, 5000, 0.5, 80};
    p.params = {{"A", A}, {"R", R}};
    p.reference = ReferenceSolution{
        [A](double t) { return A * std::sin(t); },
        [A](double t) { return A * std::cos(t); },
        "mean_x = A sin t, mean_y = A cos t (one member of a solution family)"};
    p.make_init = [A](const GridSpec& g, std::size_t M, std::uint64_t seed,
                      bool center_noise) {
        return counterexample_basin_init(A, g, M, seed, center_noise);
    };
    return p;
}

// ---------------------------------------------------------------------------
// constant drift / driver with exact linear field u(t, x) = x

inline Problem decoupled_oracle(double c = 0.5) {
    Problem p;
    p.name = "decoupled";
    CoefficientSet cs;
    cs.dims = Dims{1, 1, 1};
    cs.declared_L = std::max(1.0, std::abs(c));
    cs.B = [c](double, std::span<const double>, std::span<const double>,
               std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
        out[0] = c;
    };
    cs.F = [c](double, std::span<const double>, std::span<const double>,
               std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
        out[0] = -c;
    };
    cs.Sigma = [](double, std::span<const double>, std::span<const double>,
                  const EmpiricalMeasure&, std::span<double> out) { out[0] = 1.0; };
    cs.G = [](std::span<const double> x, const EmpiricalMeasure&, std::span<double> out) {
        out[0] = x[0];
    };
    p.coeffs = std::move(cs);
    p.horizon = 1.0;
    p.x0 = {0.0};
    p.defaults = ProblemDefaults{100, 101, -6.0, 6.0, 2000, 1.0, 20};
    p.params = {{"c", c}};
    p.reference = ReferenceSolution{[c](double t) { return c * t; },
                                    [c](double t) { return c * t; },
                                    "Y = X exactly; both means follow c t"};
    return p;
}

// ---------------------------------------------------------------------------
// drift toward the population mean; the mean itself never moves

inline Problem mean_reversion_reference() {
    Problem p;
    p.name = "mean-reversion";
    const double cap = 10.0;
    CoefficientSet cs;
    cs.dims = Dims{1, 1, 1};
    cs.declared_L = cap;
    cs.B = [](double, std::span<const double> x, std::span<const double>,
              std::span<const double>, const EmpiricalMeasure& nu, std::span<double> out) {
        out[0] = -(x[0] - nu.mean()[0]);
    };
    cs.F = [](double, std::span<const double>, std::span<const double>,
              std::span<const double>, const EmpiricalMeasure&, std::span<double> out) {
        out[0] = 0.0;
    };
    cs.Sigma = [](double, std::span<const double>, std::span<const double>,
                  const EmpiricalMeasure&, std::span<double> out) { out[0] = 1.0; };
    cs.G = [cap](std::span<const double> x, const EmpiricalMeasure&,
                 std::span<double> out) { out[0] = std::clamp(x[0], -cap, cap); };
    p.coeffs = std::move(cs);
    p.horizon = 1.0;
    p.x0 = {1.0};
    p.defaults = ProblemDefaults{120, 121, -5.0, 7.0, 2000, 0.5, 60};
    p.params = {};
    p.reference = ReferenceSolution{[](double) { return 1.0; },
                                    [](double) { return 1.0; },
                                    "the population mean stays at x0 = 1"};
    return p;
}

// ---------------------------------------------------------------------------
// registry

inline std::vector<std::string> problem_names() {
    return {"counterexample", "decoupled", "mean-reversion"};
}

inline Problem make_problem(const std::string& name,
                            const std::map<std::string, double>& params = {}) {
    auto reject_unknown = [&](std::initializer_list<const char*> allowed) {
        for (const auto& [key, value] : params) {
            bool ok = false;
            for (const char* a : allowed)
                if (key == a) ok = true;
            if (!ok)
                throw domain_error("problem '" + name + "': unknown parameter '" + key +
                                   "'");
        }
    };
    auto get = [&](const char* key, double fallback) {
        auto it = params.find(key);
        return it == params.end() ? fallback : it->second;
    };
    if (name == "counterexample") {
        reject_unknown({"A", "R"});
        return counterexample(get("A", 1.0), get("R", 10.0));
    }
    if (name == "decoupled") {
        reject_unknown({"c"});
        return decoupled_oracle(get("c", 0.5));
    }
    if (name == "mean-reversion") {
        reject_unknown({});
        return mean_reversion_reference();
    }
    std::string known;
    for (const auto& n : problem_names()) known += (known.empty() ? "" : ", ") + n;
    throw domain_error("unknown problem '" + name + "'; available: " + known);
}

} // namespace mfbsde
