// fixed_point.hpp - outer iteration on (decoupling field, measure flow)
// pairs. One application of the map: freeze the joint flow nu = phi <> mu,
// solve the backward PDE for a new field, then push the particle system
// forward under that field and frozen flow to get a new X-flow. Iterate
// with damping until the pre-damping residual is below tolerance.
//
// The forward noise is reused across iterations (common random numbers), so
// the map is deterministic given the config seed and the residual measures
// genuine field/flow movement, not Monte Carlo chatter.
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "coefficients.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "inner_solver.hpp"
#include "measure.hpp"

namespace mfbsde {

struct SolverConfig {
    GridSpec grid;
    std::vector<double> x0;
    std::size_t particles = 1000;
    double theta = 0.5; // damping weight on the new iterate, in (0, 1]
    double tol_u = 1e-3;
    double tol_flow = 1e-3;
    std::size_t max_iters = 100;
    std::uint64_t seed = 0;
    double gamma_cap = 0;     // field sup-norm envelope; 0 = derive from init
    double lipschitz_cap = 0; // field space-slope envelope; 0 = derive
    double gamma_prime = 0;   // flow fourth-moment envelope; 0 = derive
    std::vector<double> truncation_ladder; // radii for continuation_solve
    unsigned threads = 1;
    // shift each step's Brownian increments to zero cross-particle mean;
    // removes the O(1/sqrt(particles)) drift frozen into the common noise,
    // which otherwise feeds any neutral direction of the iteration map
    bool center_noise = true;

    SolverConfig(GridSpec g, std::vector<double> start)
        : grid(std::move(g)), x0(std::move(start)) {}
};

struct InitialState {
    DecouplingField field;
    MeasureFlow flow; // X-marginal flow, one M-point cloud per grid time
};

struct Envelopes {
    double gamma_cap = 0, lipschitz_cap = 0, gamma_prime = 0;
};

namespace detail {

inline double flow_fourth_moment(const MeasureFlow& f) {
    double worst = 0;
    for (std::size_t k = 0; k < f.size(); ++k) {
        const auto& mu = f.at(k);
        double s = 0;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            const double n2 = [&] {
                double q = 0;
                for (double c : mu.atom(i)) q += c * c;
                return q;
            }();
            s += mu.weight(i) * n2 * n2;
        }
        worst = std::max(worst, s);
    }
    return worst;
}

inline void check_envelopes(const DecouplingField& phi, const MeasureFlow& mu,
                            const Envelopes& env, const char* stage) {
    const double sup = phi.sup_norm();
    if (sup > env.gamma_cap)
        throw divergence_error(std::string("fixed point: ") + stage +
                               " field sup-norm " + std::to_string(sup) +
                               " exceeds the boundedness envelope " +
                               std::to_string(env.gamma_cap));
    const double slope = phi.max_space_slope();
    if (slope > env.lipschitz_cap)
        throw divergence_error(std::string("fixed point: ") + stage +
                               " field slope " + std::to_string(slope) +
                               " exceeds the Lipschitz envelope " +
                               std::to_string(env.lipschitz_cap));
    const double m4 = flow_fourth_moment(mu);
    if (m4 > env.gamma_prime)
        throw divergence_error(std::string("fixed point: ") + stage +
                               " flow fourth moment " + std::to_string(m4) +
                               " exceeds the moment envelope " +
                               std::to_string(env.gamma_prime));
}

} // namespace detail

// largest per-time W2 distance between two flows on the same time ladder
inline double flow_distance(const MeasureFlow& a, const MeasureFlow& b,
                            std::size_t assignment_cap = kAssignmentCap,
                            std::size_t n_projections = 64,
                            std::uint64_t seed = 0x5eed) {
    if (a.size() != b.size())
        throw comparison_error("flow_distance: flows have different lengths");
    double worst = 0;
    for (std::size_t k = 0; k < a.size(); ++k)
        worst = std::max(worst,
                         w2_auto(a.at(k), b.at(k), assignment_cap, n_projections, seed));
    return worst;
}

// nodewise convex combination (1-theta) old + theta fresh
inline DecouplingField blend_fields(const DecouplingField& old_f,
                                    const DecouplingField& new_f, double theta) {
    if (!old_f.grid().same_as(new_f.grid()) ||
        old_f.values_per_node() != new_f.values_per_node())
        throw grid_error("blend_fields: fields live on different grids");
    if (!(theta > 0.0 && theta <= 1.0))
        throw domain_error("blend_fields: damping weight must be in (0, 1]");
    DecouplingField out = new_f;
    if (theta == 1.0) return out;
    auto v = out.raw();
    const auto ov = old_f.raw();
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = (1.0 - theta) * ov[i] + theta * v[i];
    return out;
}

// particle-resampling blend: a seeded permutation picks round(theta*M)
// particle indices, and those particles take their entire new trajectory
// (every time slice at once), so the mixture is still a family of paths
inline MeasureFlow blend_flows(const MeasureFlow& old_f, const MeasureFlow& new_f,
                               double theta, std::uint64_t seed) {
    if (old_f.size() != new_f.size() || old_f.dim() != new_f.dim())
        throw comparison_error("blend_flows: flows have different shapes");
    if (!(theta > 0.0 && theta <= 1.0))
        throw domain_error("blend_flows: damping weight must be in (0, 1]");
    const std::size_t M = old_f.at(0).size();
    for (std::size_t k = 0; k < old_f.size(); ++k)
        if (old_f.at(k).size() != M || new_f.at(k).size() != M ||
            !old_f.at(k).uniform_weights() || !new_f.at(k).uniform_weights())
            throw comparison_error(
                "blend_flows: needs uniformly weighted clouds of equal size");
    const std::size_t r = std::min<std::size_t>(
        M, std::size_t(std::llround(theta * double(M))));
    std::vector<std::size_t> idx(M);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::mt19937_64 gen(seed);
    std::shuffle(idx.begin(), idx.end(), gen);

    const std::size_t d = old_f.dim();
    std::vector<EmpiricalMeasure> mixed;
    mixed.reserve(old_f.size());
    for (std::size_t k = 0; k < old_f.size(); ++k) {
        std::vector<double> flat(old_f.at(k).points().begin(),
                                 old_f.at(k).points().end());
        for (std::size_t q = 0; q < r; ++q) {
            const std::size_t i = idx[q];
            const auto fresh = new_f.at(k).atom(i);
            std::copy(fresh.begin(), fresh.end(), flat.begin() + i * d);
        }
        mixed.emplace_back(d, std::move(flat));
    }
    return MeasureFlow(std::vector<double>(old_f.times().begin(), old_f.times().end()),
                       std::move(mixed));
}

// one application of the fixed-point map
struct PhiResult {
    DecouplingField u;       // new decoupling field
    DecouplingField z;       // its gradient-times-volatility candidate
    MeasureFlow law;         // X-marginals of the new particle paths
    MeasureFlow joint_input; // the frozen joint flow the inner solve used
    ParticlePaths paths;
};

inline PhiResult phi_map(const CoefficientSet& c, const DecouplingField& phi,
                         const MeasureFlow& mu, const SolverConfig& cfg,
                         const Envelopes& env) {
    detail::check_envelopes(phi, mu, env, "input");
    if (mu.dim() != c.dims.d)
        throw dimension_error("phi_map: flow dimension != d");

    const std::size_t p = c.dims.p;
    std::vector<EmpiricalMeasure> joints;
    joints.reserve(mu.size());
    for (std::size_t k = 0; k < mu.size(); ++k)
        joints.push_back(diamond(mu.at(k), p, phi.slice(k)));
    MeasureFlow nu(std::vector<double>(mu.times().begin(), mu.times().end()),
                   std::move(joints));

    DecouplingField u = solve_backward(c, nu, nu.at(mu.size() - 1).marginal(c.dims.d),
                                       cfg.grid, env.gamma_cap, cfg.threads);
    DecouplingField z = z_field(u, c, nu, cfg.threads);
    ParticlePaths paths = simulate_forward(c, u, z, nu, cfg.particles, cfg.x0,
                                           cfg.seed, cfg.threads, 0.05,
                                           cfg.center_noise);
    MeasureFlow law = x_marginal_flow(
        paths, std::vector<double>(cfg.grid.times().begin(), cfg.grid.times().end()));
    detail::check_envelopes(u, law, env, "output");
    return PhiResult{std::move(u), std::move(z), std::move(law), std::move(nu),
                     std::move(paths)};
}

struct IterationRecord {
    std::size_t iter = 0;
    double du = 0, dflow = 0;
    double field_sup = 0, field_slope = 0, flow_m4 = 0;
    std::size_t reflected = 0;
};

struct SolveDiagnostics {
    Envelopes envelopes;
    double max_field_sup = 0, max_field_slope = 0, max_flow_m4 = 0;
    double time_increment_ratio = 0; // sup |u(t+dt) - u(t)| / sqrt(dt), final field
    std::size_t max_reflected = 0;
};

struct SolutionBundle {
    DecouplingField u;
    DecouplingField z;
    MeasureFlow flow;              // X-marginal flow of the returned paths
    MeasureFlow frozen_joint_flow; // joint flow the final inner solve used
    ParticlePaths paths;
    bool converged = false;
    std::size_t iterations = 0;
    double final_du = 0, final_dflow = 0;
    std::vector<IterationRecord> history;
    SolveDiagnostics diagnostics;
};

// default opening state: field frozen at the terminal map through a point
// mass at x0, flow from a drift-free simulation with the same noise streams
inline InitialState default_initial_state(const CoefficientSet& c,
                                          const SolverConfig& cfg) {
    const std::size_t d = c.dims.d, p = c.dims.p;
    if (cfg.x0.size() != d) throw dimension_error("solve: x0 dimension != d");
    const auto& g = cfg.grid;
    DecouplingField phi0(g, p);
    const EmpiricalMeasure dirac_x0 = EmpiricalMeasure::dirac(cfg.x0);
    std::vector<double> y0(p);
    for (std::size_t i = 0; i < g.n_space(); ++i) {
        double x[2];
        g.node_coord(i, {x, d});
        auto out = phi0.at(g.n_steps(), i);
        c.G({x, d}, dirac_x0, out);
        if (!all_finite(out))
            throw numeric_error("solve: terminal map non-finite on the grid");
        for (std::size_t k = 0; k < g.n_steps(); ++k) {
            auto dst = phi0.at(k, i);
            std::copy(out.begin(), out.end(), dst.begin());
        }
    }

    CoefficientSet driftless = c;
    driftless.B = [d](double, std::span<const double>, std::span<const double>,
                      std::span<const double>, const EmpiricalMeasure&,
                      std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
    };
    std::vector<double> joint0(d + p);
    std::copy(cfg.x0.begin(), cfg.x0.end(), joint0.begin());
    c.G(cfg.x0, dirac_x0, {joint0.data() + d, p});
    std::vector<EmpiricalMeasure> dirs(g.n_steps() + 1,
                                       EmpiricalMeasure::dirac(joint0));
    MeasureFlow nu0(std::vector<double>(g.times().begin(), g.times().end()),
                    std::move(dirs));
    ParticlePaths p0 = simulate_forward(driftless, phi0, z_field(phi0, driftless, nu0, cfg.threads),
                                        nu0, cfg.particles, cfg.x0, cfg.seed,
                                        cfg.threads, 0.05, cfg.center_noise);
    MeasureFlow mu0 = x_marginal_flow(
        p0, std::vector<double>(g.times().begin(), g.times().end()));
    return InitialState{std::move(phi0), std::move(mu0)};
}

inline Envelopes resolve_envelopes(const CoefficientSet& c, const SolverConfig& cfg,
                                   const InitialState& init) {
    Envelopes env;
    env.gamma_cap = cfg.gamma_cap > 0
                        ? cfg.gamma_cap
                        : std::max(1.0, 10.0 * (init.field.sup_norm() + 1.0));
    env.lipschitz_cap =
        cfg.lipschitz_cap > 0
            ? cfg.lipschitz_cap
            : std::max(1.0, 10.0 * (init.field.max_space_slope() + 1.0));
    if (cfg.gamma_prime > 0) {
        env.gamma_prime = cfg.gamma_prime;
    } else {
        const double L = c.declared_L, T = cfg.grid.horizon();
        const double base = norm2(cfg.x0) + L * T + L * std::sqrt(T);
        env.gamma_prime = 8.0 * base * base * base * base;
    }
    return env;
}

inline SolutionBundle solve(const CoefficientSet& c, const SolverConfig& cfg,
                            std::optional<InitialState> init = std::nullopt) {
    if (cfg.grid.dim() != c.dims.d)
        throw grid_error("solve: grid dimension != coefficient d");
    if (cfg.particles == 0) throw config_error("solve: particles must be >= 1");
    if (cfg.max_iters == 0) throw config_error("solve: max_iters must be >= 1");
    if (!(cfg.theta > 0.0 && cfg.theta <= 1.0))
        throw config_error("solve: theta must lie in (0, 1]");

    InitialState state = init ? std::move(*init) : default_initial_state(c, cfg);
    if (!state.field.grid().same_as(cfg.grid))
        throw grid_error("solve: initial field lives on a different grid");
    detail::require_flow_matches_grid(state.flow, cfg.grid, c.dims.d, "solve init");
    const Envelopes env = resolve_envelopes(c, cfg, state);

    std::vector<IterationRecord> history;
    SolveDiagnostics diag;
    diag.envelopes = env;

    std::optional<PhiResult> last;
    bool converged = false;
    double du = std::numeric_limits<double>::infinity();
    double dflow = std::numeric_limits<double>::infinity();
    std::size_t iters = 0;

    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        PhiResult r = phi_map(c, state.field, state.flow, cfg, env);
        du = weighted_sup_distance(r.u, state.field);
        dflow = flow_distance(r.law, state.flow);
        iters = it;

        IterationRecord rec;
        rec.iter = it;
        rec.du = du;
        rec.dflow = dflow;
        rec.field_sup = r.u.sup_norm();
        rec.field_slope = r.u.max_space_slope();
        rec.flow_m4 = detail::flow_fourth_moment(r.law);
        rec.reflected = r.paths.reflected_particles;
        history.push_back(rec);
        diag.max_field_sup = std::max(diag.max_field_sup, rec.field_sup);
        diag.max_field_slope = std::max(diag.max_field_slope, rec.field_slope);
        diag.max_flow_m4 = std::max(diag.max_flow_m4, rec.flow_m4);
        diag.max_reflected = std::max(diag.max_reflected, rec.reflected);

        if (du <= cfg.tol_u && dflow <= cfg.tol_flow) {
            converged = true;
            last = std::move(r);
            break;
        }
        if (it == cfg.max_iters) {
            last = std::move(r);
            break;
        }
        state.field = blend_fields(state.field, r.u, cfg.theta);
        state.flow =
            blend_flows(state.flow, r.law, cfg.theta, stream_seed(cfg.seed ^ 0xb1e4dULL, it));
        last = std::move(r);
    }

    PhiResult& fin = *last;
    diag.time_increment_ratio = fin.u.max_time_increment_ratio();
    return SolutionBundle{std::move(fin.u),
                          std::move(fin.z),
                          std::move(fin.law),
                          std::move(fin.joint_input),
                          std::move(fin.paths),
                          converged,
                          iters,
                          du,
                          dflow,
                          std::move(history),
                          diag};
}

// ---------------------------------------------------------------------------
// continuation over a ladder of drift/driver truncation radii

struct LevelReport {
    double radius = 0;
    bool converged = false;
    std::size_t iterations = 0;
    double final_du = 0, final_dflow = 0;
};

struct ContinuationResult {
    std::vector<LevelReport> levels;
    SolutionBundle bundle; // last level that produced a solution
    bool completed = false;
    std::string error; // empty unless a later level diverged
};

inline ContinuationResult continuation_solve(const CoefficientSet& c,
                                             const SolverConfig& cfg) {
    const auto& ladder = cfg.truncation_ladder;
    if (ladder.empty()) {
        SolutionBundle b = solve(c, cfg);
        LevelReport rep{std::numeric_limits<double>::infinity(), b.converged,
                        b.iterations, b.final_du, b.final_dflow};
        ContinuationResult out{{rep}, std::move(b), true, ""};
        return out;
    }
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        if (!(ladder[i] > 0))
            throw config_error("continuation: truncation radii must be positive");
        if (i && !(ladder[i] > ladder[i - 1]))
            throw config_error("continuation: truncation radii must increase");
    }

    std::vector<LevelReport> levels;
    std::optional<SolutionBundle> best;
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        const CoefficientSet level_c = truncate(c, ladder[i]);
        std::optional<InitialState> warm;
        if (best)
            warm = InitialState{best->u, best->flow};
        try {
            SolutionBundle b = solve(level_c, cfg, std::move(warm));
            levels.push_back(
                {ladder[i], b.converged, b.iterations, b.final_du, b.final_dflow});
            best = std::move(b);
        } catch (const divergence_error& e) {
            if (!best) throw; // nothing to fall back on at the first level
            ContinuationResult out{std::move(levels), std::move(*best), false,
                                   std::string("level at radius ") +
                                       std::to_string(ladder[i]) +
                                       " diverged: " + e.what()};
            return out;
        }
    }
    ContinuationResult out{std::move(levels), std::move(*best), true, ""};
    return out;
}

// ---------------------------------------------------------------------------
// several starts, one verdict: how many distinct limits were found

struct MultiStartResult {
    std::vector<SolutionBundle> bundles;
    std::vector<std::vector<double>> field_dist; // weighted sup distances
    std::vector<std::vector<double>> flow_dist;  // max-over-time W2 distances
    double threshold = 0;
    std::vector<std::size_t> labels; // cluster id per start
    std::size_t distinct_count = 0;
};

inline MultiStartResult multi_start(const CoefficientSet& c, const SolverConfig& cfg,
                                    std::vector<InitialState> inits) {
    if (inits.size() < 2)
        throw config_error("multi_start: need at least two initial states");
    MultiStartResult out;
    out.bundles.reserve(inits.size());
    for (auto& init : inits)
        out.bundles.push_back(solve(c, cfg, std::move(init)));

    const std::size_t n = out.bundles.size();
    out.field_dist.assign(n, std::vector<double>(n, 0.0));
    out.flow_dist.assign(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double fd = weighted_sup_distance(out.bundles[i].u, out.bundles[j].u);
            const double wd = flow_distance(out.bundles[i].flow, out.bundles[j].flow);
            out.field_dist[i][j] = out.field_dist[j][i] = fd;
            out.flow_dist[i][j] = out.flow_dist[j][i] = wd;
        }
    out.threshold = 10.0 * (cfg.tol_u + cfg.tol_flow);

    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t a) {
        while (parent[a] != a) a = parent[a] = parent[parent[a]];
        return a;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (out.field_dist[i][j] + out.flow_dist[i][j] <= out.threshold)
                parent[find(i)] = find(j);
    out.labels.resize(n);
    std::vector<std::size_t> roots;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = find(i);
        auto it = std::find(roots.begin(), roots.end(), r);
        if (it == roots.end()) {
            roots.push_back(r);
            out.labels[i] = roots.size() - 1;
        } else {
            out.labels[i] = std::size_t(it - roots.begin());
        }
    }
    out.distinct_count = roots.size();
    return out;
}

} // namespace mfbsde
