// applications.hpp - stochastic control front ends. A ControlProblem holds
// dynamics b, running cost f, terminal cost g, a constant volatility, and
// their derivatives; assembly produces the forward-backward system whose
// backward component is the adjoint equation
//   dY = -(dx_f + (dx_b)^T Y) dt + Z dW,   Y_T = dx_g(X_T, mu_T),
// with the control replaced by the Hamiltonian minimizer. Two flavours:
// the competitive-equilibrium assembly uses only x-partials; the
// cooperative-optimum assembly adds averaged measure-derivative terms.
#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "coefficients.hpp"
#include "errors.hpp"
#include "linalg.hpp"
#include "measure.hpp"

namespace mfbsde {

struct ControlProblem {
    std::size_t d = 1; // state dimension
    std::size_t m = 1; // noise dimension
    std::size_t k = 1; // control dimension

    // dynamics and costs; mu is always the state marginal
    std::function<void(double t, std::span<const double> x, const EmpiricalMeasure& mu,
                       std::span<const double> alpha, std::span<double> out_d)>
        b;
    std::function<double(double t, std::span<const double> x, const EmpiricalMeasure& mu,
                         std::span<const double> alpha)>
        f;
    std::function<double(std::span<const double> x, const EmpiricalMeasure& mu)> g;
    std::vector<double> sigma; // constant d x m volatility, row-major

    // x-partials; dx_b is d x d row-major with dx_b[i*d+j] = d b_i / d x_j
    std::function<void(double t, std::span<const double> x, const EmpiricalMeasure& mu,
                       std::span<const double> alpha, std::span<double> out_dxd)>
        dx_b;
    std::function<void(double t, std::span<const double> x, const EmpiricalMeasure& mu,
                       std::span<const double> alpha, std::span<double> out_d)>
        dx_f;
    std::function<void(std::span<const double> x, const EmpiricalMeasure& mu,
                       std::span<double> out_d)>
        dx_g;

    // measure derivatives, evaluated at direction point v; null means zero.
    // dmu_b fills d x d row-major D with D[i*d+j] = (measure derivative of
    // b_i at the base point)(v)_j
    std::function<void(double t, std::span<const double> x, const EmpiricalMeasure& mu,
                       std::span<const double> alpha, std::span<const double> v,
                       std::span<double> out_dxd)>
        dmu_b;
    std::function<void(double t, std::span<const double> x, const EmpiricalMeasure& mu,
                       std::span<const double> alpha, std::span<const double> v,
                       std::span<double> out_d)>
        dmu_f;
    std::function<void(std::span<const double> x, const EmpiricalMeasure& mu,
                       std::span<const double> v, std::span<double> out_d)>
        dmu_g;

    // optional closed-form Hamiltonian minimizer; when absent, the numeric
    // minimizer needs finite box bounds below
    std::function<void(double t, std::span<const double> x, std::span<const double> y,
                       const EmpiricalMeasure& mu, std::span<double> out_k)>
        alpha_hat;
    std::vector<double> alpha_lo, alpha_hi; // size k when used

    double declared_L = 1;
};

inline double hamiltonian(const ControlProblem& cp, double t, std::span<const double> x,
                          std::span<const double> y, const EmpiricalMeasure& mu,
                          std::span<const double> alpha) {
    if (!cp.b || !cp.f) throw config_error("hamiltonian: b and f must be set");
    std::vector<double> bv(cp.d);
    cp.b(t, x, mu, alpha, bv);
    return dot(bv, y) + cp.f(t, x, mu, alpha);
}

namespace detail {

inline double golden_min(double lo, double hi, const std::function<double(double)>& h,
                         double tol) {
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - gr * (hi - lo), e = lo + gr * (hi - lo);
    double fc = h(c), fe = h(e);
    while (hi - lo > tol) {
        if (fc < fe) {
            hi = e;
            e = c;
            fe = fc;
            c = hi - gr * (hi - lo);
            fc = h(c);
        } else {
            lo = c;
            c = e;
            fc = fe;
            e = lo + gr * (hi - lo);
            fe = h(e);
        }
    }
    return 0.5 * (lo + hi);
}

// one coordinate: coarse grid then golden refinement around the best cell
inline double line_min(double lo, double hi, const std::function<double(double)>& h) {
    constexpr int n = 129;
    const double step = (hi - lo) / (n - 1);
    int best = 0;
    double fbest = h(lo);
    for (int i = 1; i < n; ++i) {
        const double v = h(lo + i * step);
        if (v < fbest) {
            fbest = v;
            best = i;
        }
    }
    const double a = lo + std::max(0, best - 1) * step;
    const double b = lo + std::min(n - 1, best + 1) * step;
    return golden_min(a, b, h, 1e-10);
}

} // namespace detail

// Hamiltonian minimizer in alpha: closed form when provided, otherwise grid
// plus golden-section search inside the declared control box (k <= 2)
inline void argmin_hamiltonian(const ControlProblem& cp, double t,
                               std::span<const double> x, std::span<const double> y,
                               const EmpiricalMeasure& mu, std::span<double> alpha_out) {
    if (alpha_out.size() != cp.k)
        throw dimension_error("argmin_hamiltonian: output size != k");
    if (cp.alpha_hat) {
        cp.alpha_hat(t, x, y, mu, alpha_out);
        return;
    }
    if (cp.alpha_lo.size() != cp.k || cp.alpha_hi.size() != cp.k)
        throw config_error(
            "argmin_hamiltonian: no closed-form minimizer and no control bounds");
    for (std::size_t j = 0; j < cp.k; ++j)
        if (!(cp.alpha_lo[j] < cp.alpha_hi[j]))
            throw config_error("argmin_hamiltonian: control bounds must satisfy lo < hi");
    if (cp.k > 2)
        throw unsupported_error(
            "argmin_hamiltonian: numeric search supports k <= 2; provide alpha_hat");

    std::vector<double> a(cp.k);
    if (cp.k == 1) {
        a[0] = detail::line_min(cp.alpha_lo[0], cp.alpha_hi[0], [&](double v) {
            const double av[1] = {v};
            return hamiltonian(cp, t, x, y, mu, {av, 1});
        });
    } else {
        // coarse 2-d grid start, then alternating coordinate refinements
        constexpr int n = 33;
        double fbest = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double av[2] = {
                    cp.alpha_lo[0] + (cp.alpha_hi[0] - cp.alpha_lo[0]) * i / (n - 1),
                    cp.alpha_lo[1] + (cp.alpha_hi[1] - cp.alpha_lo[1]) * j / (n - 1)};
                const double v = hamiltonian(cp, t, x, y, mu, {av, 2});
                if (v < fbest) {
                    fbest = v;
                    a[0] = av[0];
                    a[1] = av[1];
                }
            }
        for (int sweep = 0; sweep < 6; ++sweep)
            for (std::size_t c = 0; c < 2; ++c) {
                a[c] = detail::line_min(cp.alpha_lo[c], cp.alpha_hi[c], [&](double v) {
                    double av[2] = {a[0], a[1]};
                    av[c] = v;
                    return hamiltonian(cp, t, x, y, mu, {av, 2});
                });
            }
    }
    std::copy(a.begin(), a.end(), alpha_out.begin());
}

// averaged measure-derivative contribution to the driver at direction x:
//   sum_j w_j [ dmu_f(t, Xt_j, muX, ah_j)(x) + dmu_b(t, Xt_j, muX, ah_j)(x)^T Yt_j ]
// where (Xt_j, Yt_j) run over the atoms of the joint state-adjoint cloud
inline void mean_field_driver_term(const ControlProblem& cp, double t,
                                   const EmpiricalMeasure& joint,
                                   std::span<const double> x, std::span<double> out) {
    const std::size_t d = cp.d;
    if (joint.dim() != 2 * d)
        throw dimension_error("mean_field_driver_term: joint cloud must have dim 2d");
    if (out.size() != d)
        throw dimension_error("mean_field_driver_term: output size != d");
    std::fill(out.begin(), out.end(), 0.0);
    if (!cp.dmu_f && !cp.dmu_b) return;

    const EmpiricalMeasure muX = joint.marginal(d);
    std::vector<double> alpha(cp.k), term(d), D(d * d);
    for (std::size_t j = 0; j < joint.size(); ++j) {
        const auto atom = joint.atom(j);
        const std::span<const double> xt{atom.data(), d};
        const std::span<const double> yt{atom.data() + d, d};
        const double w = joint.weight(j);
        argmin_hamiltonian(cp, t, xt, yt, muX, alpha);
        if (cp.dmu_f) {
            cp.dmu_f(t, xt, muX, alpha, x, term);
            for (std::size_t i = 0; i < d; ++i) out[i] += w * term[i];
        }
        if (cp.dmu_b) {
            cp.dmu_b(t, xt, muX, alpha, x, D);
            // transpose contraction: out_i += w * sum_r D[r*d+i] * yt_r
            for (std::size_t i = 0; i < d; ++i) {
                double s = 0;
                for (std::size_t r = 0; r < d; ++r) s += D[r * d + i] * yt[r];
                out[i] += w * s;
            }
        }
    }
    if (!all_finite(out))
        throw numeric_error("mean_field_driver_term: non-finite value");
}

// averaged measure derivative of the terminal cost at direction x
inline void mean_field_terminal_term(const ControlProblem& cp,
                                     const EmpiricalMeasure& mu_terminal,
                                     std::span<const double> x, std::span<double> out) {
    const std::size_t d = cp.d;
    if (mu_terminal.dim() != d)
        throw dimension_error("mean_field_terminal_term: terminal cloud must have dim d");
    if (out.size() != d)
        throw dimension_error("mean_field_terminal_term: output size != d");
    std::fill(out.begin(), out.end(), 0.0);
    if (!cp.dmu_g) return;
    std::vector<double> term(d);
    for (std::size_t j = 0; j < mu_terminal.size(); ++j) {
        cp.dmu_g(mu_terminal.atom(j), mu_terminal, x, term);
        const double w = mu_terminal.weight(j);
        for (std::size_t i = 0; i < d; ++i) out[i] += w * term[i];
    }
    if (!all_finite(out))
        throw numeric_error("mean_field_terminal_term: non-finite value");
}

namespace detail {

inline void validate_control_problem(const ControlProblem& cp, const char* who) {
    if (cp.d == 0 || cp.m == 0 || cp.k == 0)
        throw config_error(std::string(who) + ": dimensions must be positive");
    if (!cp.b || !cp.f || !cp.g)
        throw config_error(std::string(who) + ": b, f, g must all be set");
    if (!cp.dx_b || !cp.dx_f || !cp.dx_g)
        throw config_error(std::string(who) + ": x-partials dx_b, dx_f, dx_g must be set");
    if (cp.sigma.size() != cp.d * cp.m)
        throw dimension_error(std::string(who) + ": sigma must be d x m");
    if (!cp.alpha_hat &&
        (cp.alpha_lo.size() != cp.k || cp.alpha_hi.size() != cp.k))
        throw config_error(std::string(who) +
                           ": provide alpha_hat or control bounds of size k");
    std::vector<double> a(cp.d * cp.d);
    sigma_sigma_t(cp.sigma, cp.d, cp.m, a);
    double lo, hi;
    sym_eig_range(a, cp.d, lo, hi);
    if (!(lo > 0))
        throw config_error(std::string(who) +
                           ": sigma sigma^T is degenerate (smallest eigenvalue " +
                           std::to_string(lo) + "); the scheme needs ellipticity");
}

} // namespace detail

// forward-backward system of the competitive equilibrium: each agent takes
// the flow as given, so only x-partials enter the adjoint
inline CoefficientSet assemble_mfg(const ControlProblem& problem) {
    detail::validate_control_problem(problem, "assemble_mfg");
    auto P = std::make_shared<const ControlProblem>(problem);
    const std::size_t d = P->d, m = P->m;

    CoefficientSet c;
    c.dims = Dims{d, d, m};
    c.declared_L = P->declared_L;
    c.Sigma = [P, d, m](double, std::span<const double>, std::span<const double>,
                        const EmpiricalMeasure&, std::span<double> out) {
        std::copy(P->sigma.begin(), P->sigma.end(), out.begin());
    };
    c.B = [P, d](double t, std::span<const double> x, std::span<const double> y,
                 std::span<const double>, const EmpiricalMeasure& nu,
                 std::span<double> out) {
        const EmpiricalMeasure muX = nu.marginal(d);
        std::vector<double> alpha(P->k);
        argmin_hamiltonian(*P, t, x, y, muX, alpha);
        P->b(t, x, muX, alpha, out);
    };
    c.F = [P, d](double t, std::span<const double> x, std::span<const double> y,
                 std::span<const double>, const EmpiricalMeasure& nu,
                 std::span<double> out) {
        const EmpiricalMeasure muX = nu.marginal(d);
        std::vector<double> alpha(P->k), jac(d * d);
        argmin_hamiltonian(*P, t, x, y, muX, alpha);
        P->dx_f(t, x, muX, alpha, out);
        P->dx_b(t, x, muX, alpha, jac);
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0;
            for (std::size_t r = 0; r < d; ++r) s += jac[r * d + i] * y[r];
            out[i] += s;
        }
    };
    c.G = [P](std::span<const double> x, const EmpiricalMeasure& muT,
              std::span<double> out) { P->dx_g(x, muT, out); };
    return c;
}

// forward-backward system of the cooperative optimum: the planner feels the
// measure dependence, so averaged measure-derivative terms join the driver
// and the terminal map
inline CoefficientSet assemble_mkv_control(const ControlProblem& problem) {
    CoefficientSet c = assemble_mfg(problem);
    auto P = std::make_shared<const ControlProblem>(problem);
    const std::size_t d = P->d;

    TerminalFn base_G = c.G;
    DriverFn base_F = c.F;
    c.F = [P, base_F, d](double t, std::span<const double> x, std::span<const double> y,
                         std::span<const double> z, const EmpiricalMeasure& nu,
                         std::span<double> out) {
        base_F(t, x, y, z, nu, out);
        std::vector<double> lions(d);
        mean_field_driver_term(*P, t, nu, x, lions);
        for (std::size_t i = 0; i < d; ++i) out[i] += lions[i];
    };
    c.G = [P, base_G, d](std::span<const double> x, const EmpiricalMeasure& muT,
                         std::span<double> out) {
        base_G(x, muT, out);
        std::vector<double> lions(d);
        mean_field_terminal_term(*P, muT, x, lions);
        for (std::size_t i = 0; i < d; ++i) out[i] += lions[i];
    };
    return c;
}

} // namespace mfbsde
