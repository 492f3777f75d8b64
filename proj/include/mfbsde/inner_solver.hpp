// inner_solver.hpp - the frozen-flow inner problem: one backward PDE sweep
// for the decoupling field, gradient extraction for z, and the forward
// particle system under the frozen measure flow.
//
// Backward scheme: explicit finite differences for the quasilinear system
//   d_t u + 1/2 tr(a D^2 u) + B . D u + F = 0,   a = Sigma Sigma^T,
// coefficients evaluated at (t_k, x, u(t_{k+1},x), v(t_{k+1},x), nu_{t_k}),
// v = D u . Sigma taken from the already-computed later level. Central
// differences inside, clamped-gradient (one-sided first derivative, zero
// second derivative) at the box edge, so affine functions are preserved
// exactly. Stability guard: dt <= cfl_fraction / (a_max sum_i dx_i^-2).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "coefficients.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "measure.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace mfbsde {

namespace detail {

inline void require_flow_matches_grid(const MeasureFlow& flow, const GridSpec& g,
                                      std::size_t expect_dim, const char* who) {
    if (flow.size() != g.n_steps() + 1)
        throw grid_error(std::string(who) + ": flow has " + std::to_string(flow.size()) +
                         " time slices, grid has " + std::to_string(g.n_steps() + 1));
    const double tol = 1e-12 * std::max(1.0, g.horizon());
    for (std::size_t k = 0; k < flow.size(); ++k)
        if (std::abs(flow.times()[k] - g.times()[k]) > tol)
            throw grid_error(std::string(who) + ": flow times differ from grid times");
    if (flow.dim() != expect_dim)
        throw dimension_error(std::string(who) + ": flow dimension " +
                              std::to_string(flow.dim()) + ", expected " +
                              std::to_string(expect_dim));
}

// node gradient of one time level: central inside, one-sided at the edge;
// out is p x d row-major
inline void node_gradient(const DecouplingField& u, std::size_t k, std::size_t flat,
                          std::span<double> out) {
    const auto& g = u.grid();
    const std::size_t d = g.dim(), p = u.values_per_node();
    std::size_t idx[2];
    g.unflatten(flat, {idx, d});
    for (std::size_t a = 0; a < d; ++a) {
        const Axis& ax = g.axis(a);
        const double dx = ax.dx();
        const std::size_t stride = (d == 2 && a == 0) ? g.axis(1).n : 1;
        std::span<const double> lo, hi;
        double scale;
        if (idx[a] == 0) {
            lo = u.at(k, flat);
            hi = u.at(k, flat + stride);
            scale = 1.0 / dx;
        } else if (idx[a] == ax.n - 1) {
            lo = u.at(k, flat - stride);
            hi = u.at(k, flat);
            scale = 1.0 / dx;
        } else {
            lo = u.at(k, flat - stride);
            hi = u.at(k, flat + stride);
            scale = 1.0 / (2 * dx);
        }
        for (std::size_t c = 0; c < p; ++c) out[c * d + a] = (hi[c] - lo[c]) * scale;
    }
}

} // namespace detail

// backward induction for the decoupling field under a frozen joint flow
inline DecouplingField solve_backward(const CoefficientSet& c, const MeasureFlow& flow,
                                      const EmpiricalMeasure& terminal_mu,
                                      const GridSpec& grid,
                                      double gamma_cap =
                                          std::numeric_limits<double>::infinity(),
                                      unsigned threads = 1) {
    const std::size_t d = c.dims.d, p = c.dims.p, m = c.dims.m;
    if (grid.dim() != d)
        throw grid_error("solve_backward: grid dimension != coefficient d");
    detail::require_flow_matches_grid(flow, grid, d + p, "solve_backward");
    if (terminal_mu.dim() != d)
        throw dimension_error("solve_backward: terminal measure dimension != d");

    DecouplingField u(grid, p);
    const std::size_t N = grid.n_steps(), ns = grid.n_space();
    const double dt = grid.dt();

    // terminal condition
    {
        std::vector<std::uint8_t> bad(ns, 0);
        parallel_for(ns, threads, [&](std::size_t i) {
            double x[2];
            grid.node_coord(i, {x, d});
            c.G({x, d}, terminal_mu, u.at(N, i));
            if (!all_finite(u.at(N, i))) bad[i] = 1;
        });
        for (std::size_t i = 0; i < ns; ++i)
            if (bad[i]) {
                double x[2];
                grid.node_coord(i, {x, d});
                throw numeric_error("solve_backward: non-finite terminal value at x=" +
                                    std::to_string(x[0]) +
                                    (d == 2 ? "," + std::to_string(x[1]) : ""));
            }
    }

    const double inv_dx2_sum = [&] {
        double s = 0;
        for (std::size_t a = 0; a < d; ++a)
            s += 1.0 / (grid.axis(a).dx() * grid.axis(a).dx());
        return s;
    }();

    std::vector<double> level_amax(ns);
    std::vector<std::uint8_t> level_bad(ns);

    for (std::size_t k = N; k-- > 0;) {
        const double t_now = grid.times()[k];
        const double t_next = grid.times()[k + 1];
        const EmpiricalMeasure& nu_now = flow.at(k);
        const EmpiricalMeasure& nu_next = flow.at(k + 1);
        std::fill(level_bad.begin(), level_bad.end(), 0);

        parallel_for(ns, threads, [&](std::size_t i) {
            double xbuf[2];
            grid.node_coord(i, {xbuf, d});
            const std::span<const double> x{xbuf, d};
            const std::span<const double> y = u.at(k + 1, i);

            // v(t_{k+1}, x) = D u(t_{k+1}, x) . Sigma(t_{k+1}, x, u, nu_{k+1})
            std::vector<double> grad(p * d), sig_next(d * m), z(p * m);
            detail::node_gradient(u, k + 1, i, grad);
            c.Sigma(t_next, x, y, nu_next, sig_next);
            matmul(grad, sig_next, p, d, m, z);

            std::vector<double> sig(d * m), a(d * d), B(d), F(p), F_next(p);
            c.Sigma(t_now, x, y, nu_now, sig);
            sigma_sigma_t(sig, d, m, a);
            c.B(t_now, x, y, z, nu_now, B);
            // Trapezoidal rule in the driver's explicit (t, nu) dependence;
            // both evaluations keep the level-(k+1) state (y, z).  A one-sided
            // rule leaves an O(dt) bias that accumulates without bound along
            // any neutral direction of the outer fixed-point map.
            c.F(t_now, x, y, z, nu_now, F);
            c.F(t_next, x, y, z, nu_next, F_next);
            for (std::size_t q = 0; q < p; ++q) F[q] = 0.5 * (F[q] + F_next[q]);

            double lo, hi;
            sym_eig_range(a, d, lo, hi);
            level_amax[i] = hi;

            std::size_t idx[2];
            grid.unflatten(i, {idx, d});

            auto upd = u.at(k, i);
            for (std::size_t comp = 0; comp < p; ++comp) {
                // second-order term: sum_ab a_ab d2u/dx_a dx_b, zero at edges
                double diff = 0;
                for (std::size_t aa = 0; aa < d; ++aa) {
                    const Axis& ax = grid.axis(aa);
                    if (idx[aa] == 0 || idx[aa] == ax.n - 1) continue;
                    const std::size_t stride = (d == 2 && aa == 0) ? grid.axis(1).n : 1;
                    const double dxa = ax.dx();
                    diff += a[aa * d + aa] *
                            (u.at(k + 1, i + stride)[comp] - 2 * y[comp] +
                             u.at(k + 1, i - stride)[comp]) /
                            (dxa * dxa);
                }
                if (d == 2 && idx[0] > 0 && idx[0] < grid.axis(0).n - 1 && idx[1] > 0 &&
                    idx[1] < grid.axis(1).n - 1) {
                    const std::size_t s1 = grid.axis(1).n;
                    const double cross =
                        (u.at(k + 1, i + s1 + 1)[comp] - u.at(k + 1, i + s1 - 1)[comp] -
                         u.at(k + 1, i - s1 + 1)[comp] + u.at(k + 1, i - s1 - 1)[comp]) /
                        (4 * grid.axis(0).dx() * grid.axis(1).dx());
                    diff += 2 * a[0 * d + 1] * cross;
                }
                double adv = 0;
                for (std::size_t aa = 0; aa < d; ++aa) adv += B[aa] * grad[comp * d + aa];
                upd[comp] = y[comp] + dt * (0.5 * diff + adv + F[comp]);
            }
            if (!all_finite(upd)) level_bad[i] = 1;
        });

        double amax = 0;
        for (std::size_t i = 0; i < ns; ++i) amax = std::max(amax, level_amax[i]);
        if (amax > 0 && dt > grid.cfl_fraction() / (amax * inv_dx2_sum) * (1 + 1e-12)) {
            const double need = grid.cfl_fraction() / (amax * inv_dx2_sum);
            throw config_error(
                "solve_backward: explicit stability violated at t=" +
                std::to_string(t_now) + ": dt=" + std::to_string(dt) +
                " > " + std::to_string(need) +
                "; increase grid.n_t to at least " +
                std::to_string(std::size_t(std::ceil(grid.horizon() / need))));
        }
        for (std::size_t i = 0; i < ns; ++i)
            if (level_bad[i]) {
                double x[2];
                grid.node_coord(i, {x, d});
                throw numeric_error(
                    "solve_backward: non-finite value at t=" + std::to_string(t_now) +
                    ", x=" + std::to_string(x[0]) +
                    (d == 2 ? "," + std::to_string(x[1]) : ""));
            }

        double sup = 0;
        for (std::size_t i = 0; i < ns; ++i) sup = std::max(sup, norm2(u.at(k, i)));
        if (sup > 10 * gamma_cap)
            throw divergence_error("solve_backward: field sup-norm " +
                                   std::to_string(sup) + " exceeded 10*gamma_cap=" +
                                   std::to_string(10 * gamma_cap) + " at t=" +
                                   std::to_string(t_now));
    }
    return u;
}

// z candidate materialized at grid nodes: v = D u . Sigma with central
// differences inside and one-sided at the edge; evaluable like a field with
// p x m row-major components
inline DecouplingField z_field(const DecouplingField& u, const CoefficientSet& c,
                               const MeasureFlow& flow, unsigned threads = 1) {
    const std::size_t d = c.dims.d, p = c.dims.p, m = c.dims.m;
    if (u.grid().dim() != d || u.values_per_node() != p)
        throw dimension_error("z_field: field/coefficient dimensions disagree");
    detail::require_flow_matches_grid(flow, u.grid(), d + p, "z_field");
    const auto& g = u.grid();
    DecouplingField z(g, p * m);
    for (std::size_t k = 0; k <= g.n_steps(); ++k) {
        const double t = g.times()[k];
        const EmpiricalMeasure& nu = flow.at(k);
        parallel_for(g.n_space(), threads, [&](std::size_t i) {
            double x[2];
            g.node_coord(i, {x, d});
            std::vector<double> grad(p * d), sig(d * m);
            detail::node_gradient(u, k, i, grad);
            c.Sigma(t, {x, d}, u.at(k, i), nu, sig);
            matmul(grad, sig, p, d, m, z.at(k, i));
        });
    }
    return z;
}

struct ParticlePaths {
    std::size_t particles = 0, d = 1, p = 1, m = 1, n_steps = 0;
    std::uint64_t seed = 0;
    std::size_t reflected_particles = 0;
    // row-major: X[(i*(N+1)+k)*d + j], Y likewise, Z[(i*N+k)*(p*m)+j],
    // dW[(i*N+k)*m + j]
    std::vector<double> X, Y, Z, dW;

    std::span<const double> x(std::size_t i, std::size_t k) const {
        return {X.data() + (i * (n_steps + 1) + k) * d, d};
    }
    std::span<const double> y(std::size_t i, std::size_t k) const {
        return {Y.data() + (i * (n_steps + 1) + k) * p, p};
    }
    std::span<const double> z(std::size_t i, std::size_t k) const {
        return {Z.data() + (i * n_steps + k) * (p * m), p * m};
    }
    std::span<const double> dw(std::size_t i, std::size_t k) const {
        return {dW.data() + (i * n_steps + k) * m, m};
    }
};

// Euler-Maruyama under the frozen flow with Y = u(t_k, X_k), Z = v(t_k, X_k).
// The drift's explicit (t, nu) dependence is integrated with the trapezoidal
// rule (state arguments stay at step k), matching the backward sweep's driver
// quadrature.  Per-particle RNG streams keep results independent of thread
// count.  With center_noise the increments of each step are shifted to zero
// cross-particle mean, removing the O(1/sqrt(M)) empirical drift of the
// common-random-number paths.  Box exits are reflected and counted, > 5%
// reflected particles is an error.
inline ParticlePaths simulate_forward(const CoefficientSet& c, const DecouplingField& u,
                                      const DecouplingField& zf, const MeasureFlow& flow,
                                      std::size_t n_particles,
                                      std::span<const double> x0, std::uint64_t seed,
                                      unsigned threads = 1,
                                      double max_reflect_frac = 0.05,
                                      bool center_noise = false) {
    const std::size_t d = c.dims.d, p = c.dims.p, m = c.dims.m;
    const auto& g = u.grid();
    if (g.dim() != d || u.values_per_node() != p || zf.values_per_node() != p * m)
        throw dimension_error("simulate_forward: field/coefficient dimensions disagree");
    detail::require_flow_matches_grid(flow, g, d + p, "simulate_forward");
    if (x0.size() != d) throw dimension_error("simulate_forward: x0 dimension != d");
    for (std::size_t a = 0; a < d; ++a)
        if (x0[a] < g.axis(a).lo || x0[a] > g.axis(a).hi)
            throw domain_error("simulate_forward: x0 outside the spatial box");
    if (n_particles == 0) throw domain_error("simulate_forward: need >= 1 particle");

    const std::size_t N = g.n_steps();
    const double dt = g.dt(), sq_dt = std::sqrt(dt);
    ParticlePaths P;
    P.particles = n_particles;
    P.d = d;
    P.p = p;
    P.m = m;
    P.n_steps = N;
    P.seed = seed;
    P.X.resize(n_particles * (N + 1) * d);
    P.Y.resize(n_particles * (N + 1) * p);
    P.Z.resize(n_particles * N * p * m);
    P.dW.resize(n_particles * N * m);
    std::vector<std::uint8_t> reflected(n_particles, 0), bad(n_particles, 0);

    // draw every increment first (per-particle streams, thread-independent)
    parallel_for(n_particles, threads, [&](std::size_t i) {
        GaussianStream gs(stream_seed(seed, i));
        double* row = P.dW.data() + i * N * m;
        for (std::size_t k = 0; k < N * m; ++k) row[k] = sq_dt * gs.next();
    });
    if (center_noise && n_particles > 1) {
        // serial column means: deterministic regardless of thread count
        for (std::size_t k = 0; k < N; ++k)
            for (std::size_t j = 0; j < m; ++j) {
                double mean = 0;
                for (std::size_t i = 0; i < n_particles; ++i)
                    mean += P.dW[(i * N + k) * m + j];
                mean /= double(n_particles);
                for (std::size_t i = 0; i < n_particles; ++i)
                    P.dW[(i * N + k) * m + j] -= mean;
            }
    }

    parallel_for(n_particles, threads, [&](std::size_t i) {
        std::vector<double> xv(d), yv(p), zv(p * m), B(d), B_next(d), sig(d * m);
        for (std::size_t a = 0; a < d; ++a) xv[a] = x0[a];
        for (std::size_t k = 0; k < N; ++k) {
            double* xrow = P.X.data() + (i * (N + 1) + k) * d;
            std::copy(xv.begin(), xv.end(), xrow);
            u.eval_at_time_index(k, xv, yv);
            zf.eval_at_time_index(k, xv, zv);
            std::copy(yv.begin(), yv.end(), P.Y.data() + (i * (N + 1) + k) * p);
            std::copy(zv.begin(), zv.end(), P.Z.data() + (i * N + k) * p * m);
            const double t = g.times()[k];
            const EmpiricalMeasure& nu = flow.at(k);
            c.B(t, xv, yv, zv, nu, B);
            c.B(g.times()[k + 1], xv, yv, zv, flow.at(k + 1), B_next);
            for (std::size_t a = 0; a < d; ++a) B[a] = 0.5 * (B[a] + B_next[a]);
            c.Sigma(t, xv, yv, nu, sig);
            const double* dw = P.dW.data() + (i * N + k) * m;
            for (std::size_t a = 0; a < d; ++a) {
                double nx = xv[a] + B[a] * dt;
                for (std::size_t j = 0; j < m; ++j) nx += sig[a * m + j] * dw[j];
                const Axis& ax = g.axis(a);
                // reflect into the box (repeat for large overshoots)
                int guard = 0;
                while ((nx < ax.lo || nx > ax.hi) && guard++ < 64) {
                    if (nx < ax.lo) nx = 2 * ax.lo - nx;
                    if (nx > ax.hi) nx = 2 * ax.hi - nx;
                    reflected[i] = 1;
                }
                if (!(nx >= ax.lo && nx <= ax.hi)) {
                    bad[i] = 1;
                    nx = std::clamp(nx, ax.lo, ax.hi);
                }
                xv[a] = nx;
            }
        }
        double* xrow = P.X.data() + (i * (N + 1) + N) * d;
        std::copy(xv.begin(), xv.end(), xrow);
        u.eval_at_time_index(N, xv, yv);
        std::copy(yv.begin(), yv.end(), P.Y.data() + (i * (N + 1) + N) * p);
    });

    for (std::size_t i = 0; i < n_particles; ++i)
        if (bad[i])
            throw numeric_error("simulate_forward: particle " + std::to_string(i) +
                                " left the box beyond repair (non-finite drift?)");
    std::size_t refl = 0;
    for (auto r : reflected) refl += r;
    P.reflected_particles = refl;
    if (double(refl) > max_reflect_frac * double(n_particles))
        throw divergence_error(
            "simulate_forward: " + std::to_string(refl) + "/" +
            std::to_string(n_particles) +
            " particles reflected at the box edge (> " +
            std::to_string(100 * max_reflect_frac) +
            "%); enlarge the spatial box (grid.x_max)");
    return P;
}

inline ParticlePaths simulate_forward(const CoefficientSet& c, const DecouplingField& u,
                                      const MeasureFlow& flow, std::size_t n_particles,
                                      std::span<const double> x0, std::uint64_t seed,
                                      unsigned threads = 1) {
    return simulate_forward(c, u, z_field(u, c, flow, threads), flow, n_particles, x0,
                            seed, threads);
}

// per-time X-marginal clouds of a particle family
inline MeasureFlow x_marginal_flow(const ParticlePaths& P,
                                   const std::vector<double>& times) {
    std::vector<EmpiricalMeasure> ms;
    ms.reserve(P.n_steps + 1);
    for (std::size_t k = 0; k <= P.n_steps; ++k) {
        std::vector<double> flat(P.particles * P.d);
        for (std::size_t i = 0; i < P.particles; ++i) {
            const auto x = P.x(i, k);
            std::copy(x.begin(), x.end(), flat.begin() + i * P.d);
        }
        ms.emplace_back(P.d, std::move(flat));
    }
    return MeasureFlow(times, std::move(ms));
}

// per-time joint (X, Y) clouds of a particle family
inline MeasureFlow joint_flow(const ParticlePaths& P, const std::vector<double>& times) {
    std::vector<EmpiricalMeasure> ms;
    ms.reserve(P.n_steps + 1);
    for (std::size_t k = 0; k <= P.n_steps; ++k) {
        std::vector<double> flat(P.particles * (P.d + P.p));
        for (std::size_t i = 0; i < P.particles; ++i) {
            const auto x = P.x(i, k);
            const auto y = P.y(i, k);
            double* row = flat.data() + i * (P.d + P.p);
            std::copy(x.begin(), x.end(), row);
            std::copy(y.begin(), y.end(), row + P.d);
        }
        ms.emplace_back(P.d + P.p, std::move(flat));
    }
    return MeasureFlow(times, std::move(ms));
}

// RMS over particles and steps of the discrete backward-equation defect
//   Y_{k+1} - Y_k + Fbar_k dt - Z_k dW_k
// where Fbar_k is the same trapezoidal driver quadrature the backward sweep
// uses: the mean of F at (t_k, nu_k) and (t_{k+1}, nu_{k+1}), state arguments
// (X_k, Y_k, Z_k) held at step k.
inline double bsde_residual(const ParticlePaths& P, const DecouplingField& u,
                            const CoefficientSet& c, const MeasureFlow& flow,
                            unsigned threads = 1) {
    const std::size_t d = c.dims.d, p = c.dims.p, m = c.dims.m;
    if (P.d != d || P.p != p || P.m != m)
        throw dimension_error("bsde_residual: paths/coefficient dimensions disagree");
    detail::require_flow_matches_grid(flow, u.grid(), d + p, "bsde_residual");
    if (P.n_steps != u.grid().n_steps())
        throw grid_error("bsde_residual: paths and field step counts differ");
    const double dt = u.grid().dt();
    std::vector<double> acc(P.particles, 0.0);
    parallel_for(P.particles, threads, [&](std::size_t i) {
        std::vector<double> F(p), F_next(p);
        double s = 0;
        for (std::size_t k = 0; k < P.n_steps; ++k) {
            c.F(u.grid().times()[k], P.x(i, k), P.y(i, k), P.z(i, k), flow.at(k), F);
            c.F(u.grid().times()[k + 1], P.x(i, k), P.y(i, k), P.z(i, k),
                flow.at(k + 1), F_next);
            const auto yk = P.y(i, k), yk1 = P.y(i, k + 1), z = P.z(i, k),
                       dw = P.dw(i, k);
            for (std::size_t comp = 0; comp < p; ++comp) {
                double zdw = 0;
                for (std::size_t j = 0; j < m; ++j) zdw += z[comp * m + j] * dw[j];
                const double r = yk1[comp] - yk[comp] +
                                 0.5 * (F[comp] + F_next[comp]) * dt - zdw;
                s += r * r;
            }
        }
        acc[i] = s;
    });
    double total = 0;
    for (double s : acc) total += s;
    return std::sqrt(total / double(P.particles * P.n_steps));
}

// ---------------------------------------------------------------------------
// pathwise stability diagnostic between two frozen-input runs

struct FrozenRun {
    const DecouplingField* phi = nullptr; // inner-solve input field
    const MeasureFlow* mu = nullptr;      // inner-solve input X-flow
    const ParticlePaths* paths = nullptr; // inner-solve output paths
};

struct StabilityGap {
    double lhs = 0, rhs = 0, ratio = 0;
    bool within_cap = true;
};

// lhs = E sup_t |dX|^2 + E sup_t |dY|^2 + E int |dZ|^2 dt   (matched noise)
// rhs = W2(mu_T, mu'_T)^2 + sum_k W2(phi<>mu, phi'<>mu')^2 dt
inline StabilityGap stability_gap(const FrozenRun& r1, const FrozenRun& r2,
                                  double Gamma_cap) {
    const ParticlePaths &a = *r1.paths, &b = *r2.paths;
    if (a.seed != b.seed)
        throw comparison_error("stability_gap: runs use different noise seeds");
    if (a.particles != b.particles || a.n_steps != b.n_steps || a.d != b.d ||
        a.p != b.p || a.m != b.m)
        throw comparison_error("stability_gap: runs have different shapes");
    if (!r1.phi->grid().same_as(r2.phi->grid()))
        throw comparison_error("stability_gap: runs use different grids");

    const std::size_t M = a.particles, N = a.n_steps;
    const auto& g = r1.phi->grid();
    const double dt = g.dt();
    double ex = 0, ey = 0, ez = 0;
    for (std::size_t i = 0; i < M; ++i) {
        double sx = 0, sy = 0, sz = 0;
        for (std::size_t k = 0; k <= N; ++k) {
            sx = std::max(sx, [&] {
                double s = 0;
                for (std::size_t j = 0; j < a.d; ++j) {
                    const double dd = a.x(i, k)[j] - b.x(i, k)[j];
                    s += dd * dd;
                }
                return s;
            }());
            sy = std::max(sy, [&] {
                double s = 0;
                for (std::size_t j = 0; j < a.p; ++j) {
                    const double dd = a.y(i, k)[j] - b.y(i, k)[j];
                    s += dd * dd;
                }
                return s;
            }());
        }
        for (std::size_t k = 0; k < N; ++k) {
            double s = 0;
            for (std::size_t j = 0; j < a.p * a.m; ++j) {
                const double dd = a.z(i, k)[j] - b.z(i, k)[j];
                s += dd * dd;
            }
            sz += s * dt;
        }
        ex += sx;
        ey += sy;
        ez += sz;
    }
    StabilityGap out;
    out.lhs = (ex + ey + ez) / double(M);

    const std::size_t p = r1.phi->values_per_node();
    double rhs = 0;
    {
        const auto& muT1 = r1.mu->at(N);
        const auto& muT2 = r2.mu->at(N);
        const double w = w2_auto(muT1, muT2);
        rhs += w * w;
    }
    for (std::size_t k = 0; k < N; ++k) {
        const auto d1 = diamond(r1.mu->at(k), p, r1.phi->slice(k));
        const auto d2 = diamond(r2.mu->at(k), p, r2.phi->slice(k));
        const double w = w2_auto(d1, d2);
        rhs += w * w * dt;
    }
    out.rhs = rhs;
    if (rhs > 0) {
        out.ratio = out.lhs / rhs;
    } else {
        out.ratio = (out.lhs == 0) ? 0.0 : std::numeric_limits<double>::infinity();
    }
    out.within_cap = out.ratio <= Gamma_cap;
    return out;
}

} // namespace mfbsde
