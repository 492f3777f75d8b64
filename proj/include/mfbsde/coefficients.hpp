// coefficients.hpp - coefficient bundles (B, F, Sigma, G) of a mean-field
// forward-backward system, radial truncation, and an empirical prober for
// the structural assumptions (Lipschitz / growth / ellipticity).
//
// Conventions: X in R^d, Y in R^p, Z in R^(p x m) row-major, the measure
// argument of B, F, Sigma is the joint law of (X, Y) on R^(d+p); the measure
// argument of G is the terminal X-law on R^d. All coefficient callables
// write into caller-provided spans.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "measure.hpp"
#include "parallel.hpp"

namespace mfbsde {

struct Dims {
    std::size_t d = 1, p = 1, m = 1;
};

using DriftFn = std::function<void(double t, std::span<const double> x,
                                   std::span<const double> y, std::span<const double> z,
                                   const EmpiricalMeasure& mu, std::span<double> out)>;
using DriverFn = DriftFn; // same signature, output dimension p
using VolFn = std::function<void(double t, std::span<const double> x,
                                 std::span<const double> y, const EmpiricalMeasure& mu,
                                 std::span<double> out)>; // out d x m row-major
using TerminalFn = std::function<void(std::span<const double> x,
                                      const EmpiricalMeasure& mu_terminal,
                                      std::span<double> out)>; // out p

struct CoefficientSet {
    Dims dims;
    DriftFn B;      // R^d
    DriverFn F;     // R^p
    VolFn Sigma;    // R^(d x m)
    TerminalFn G;   // R^p
    double declared_L = 1.0;
};

// radial projection onto the closed ball of radius r (identity inside);
// 1-Lipschitz for r >= 0
inline void project_ball(std::span<const double> v, double r, std::span<double> out) {
    if (r < 0) throw domain_error("project_ball: negative radius");
    const double n = norm2(v);
    const double s = (n > r && n > 0) ? r / n : 1.0;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = s * v[i];
}

// bundle with B and F radially truncated at radius r; Sigma, G untouched
inline CoefficientSet truncate(const CoefficientSet& c, double r) {
    if (!(r > 0)) throw domain_error("truncate: radius must be positive");
    CoefficientSet out = c;
    const DriftFn b = c.B;
    const DriverFn f = c.F;
    out.B = [b, r](double t, std::span<const double> x, std::span<const double> y,
                   std::span<const double> z, const EmpiricalMeasure& mu,
                   std::span<double> o) {
        b(t, x, y, z, mu, o);
        project_ball({o.data(), o.size()}, r, o);
    };
    out.F = [f, r](double t, std::span<const double> x, std::span<const double> y,
                   std::span<const double> z, const EmpiricalMeasure& mu,
                   std::span<double> o) {
        f(t, x, y, z, mu, o);
        project_ball({o.data(), o.size()}, r, o);
    };
    return out;
}

// ---------------------------------------------------------------------------
// assumption prober

struct ProbeOptions {
    std::size_t n_samples = 64;
    double box_radius = 2.0;
    std::uint64_t seed = 0;
    double t_max = 1.0;
};

struct GrowthViolation {
    std::string coefficient; // "B" | "F" | "Sigma" | "G"
    std::string where;       // human-readable probe point
    double lhs = 0, rhs = 0;
};

struct AssumptionReport {
    std::map<std::string, double> lipschitz_estimates; // per-coefficient max ratio
    std::vector<GrowthViolation> growth_violations;
    double ellipticity_min = 0;       // min eigenvalue of Sigma Sigma^T over probes
    double sigma_time_continuity = 0; // max adjacent-step jump of t -> Sigma(t,0,0,delta)
    double declared_L = 1;

    bool lipschitz_ok() const {
        for (const auto& [k, v] : lipschitz_estimates)
            if (v > declared_L * (1 + 1e-9)) return false;
        return true;
    }
    bool ellipticity_ok() const { return ellipticity_min >= 1.0 / declared_L - 1e-12; }
    bool clean() const {
        return growth_violations.empty() && lipschitz_ok() && ellipticity_ok();
    }
};

namespace detail {

struct ProbePoint {
    double t;
    std::vector<double> x, y, z, x2, y2, z2;
    std::vector<double> joint, joint_shift; // paired Dirac positions in R^(d+p)
    std::vector<double> term, term_shift;   // paired Dirac positions in R^d
};

inline std::vector<ProbePoint> make_probe_points(const Dims& dm,
                                                 const ProbeOptions& opt) {
    std::mt19937_64 gen(opt.seed);
    std::uniform_real_distribution<double> U(-opt.box_radius, opt.box_radius);
    std::uniform_real_distribution<double> Ut(0.0, opt.t_max);
    auto vec = [&](std::size_t n) {
        std::vector<double> v(n);
        for (auto& c : v) c = U(gen);
        return v;
    };
    std::vector<ProbePoint> pts(opt.n_samples);
    for (auto& pp : pts) {
        pp.t = Ut(gen);
        pp.x = vec(dm.d);
        pp.y = vec(dm.p);
        pp.z = vec(dm.p * dm.m);
        pp.x2 = vec(dm.d);
        pp.y2 = vec(dm.p);
        pp.z2 = vec(dm.p * dm.m);
        pp.joint = vec(dm.d + dm.p);
        pp.joint_shift = vec(dm.d + dm.p);
        pp.term = vec(dm.d);
        pp.term_shift = vec(dm.d);
    }
    return pts;
}

} // namespace detail

// empirical check of the structural assumptions on random probe points;
// measure perturbations are paired Dirac clouds differing by a rigid shift,
// whose W2 distance is exactly the shift norm
inline AssumptionReport probe_assumptions(const CoefficientSet& c,
                                          const ProbeOptions& opt = {},
                                          unsigned threads = 1) {
    if (opt.n_samples == 0) throw domain_error("probe: n_samples must be >= 1");
    if (!(opt.box_radius > 0)) throw domain_error("probe: box_radius must be > 0");
    const Dims dm = c.dims;
    const auto pts = detail::make_probe_points(dm, opt);
    const std::size_t n = pts.size();

    struct Local {
        double lipB = 0, lipF = 0, lipS = 0, lipG = 0;
        double ell = std::numeric_limits<double>::infinity();
        std::vector<GrowthViolation> viols;
    };
    std::vector<Local> loc(n);

    parallel_for(n, threads, [&](std::size_t i) {
        const auto& pp = pts[i];
        Local& L = loc[i];
        const EmpiricalMeasure mu = EmpiricalMeasure::dirac(pp.joint);
        std::vector<double> shifted(pp.joint);
        for (std::size_t j = 0; j < shifted.size(); ++j) shifted[j] += pp.joint_shift[j];
        const EmpiricalMeasure mu2 = EmpiricalMeasure::dirac(shifted);
        const double wj = norm2(pp.joint_shift);
        const EmpiricalMeasure nud = EmpiricalMeasure::dirac(pp.term);
        std::vector<double> tshift(pp.term);
        for (std::size_t j = 0; j < tshift.size(); ++j) tshift[j] += pp.term_shift[j];
        const EmpiricalMeasure nud2 = EmpiricalMeasure::dirac(tshift);
        const double wt = norm2(pp.term_shift);

        // combined state distance |(x,y,z)-(x',y',z')| + W2(mu,mu')
        double dstate = 0;
        for (std::size_t j = 0; j < dm.d; ++j)
            dstate += (pp.x[j] - pp.x2[j]) * (pp.x[j] - pp.x2[j]);
        for (std::size_t j = 0; j < dm.p; ++j)
            dstate += (pp.y[j] - pp.y2[j]) * (pp.y[j] - pp.y2[j]);
        for (std::size_t j = 0; j < dm.p * dm.m; ++j)
            dstate += (pp.z[j] - pp.z2[j]) * (pp.z[j] - pp.z2[j]);
        const double den = std::sqrt(dstate) + wj;

        std::vector<double> b1(dm.d), b2(dm.d), f1(dm.p), f2(dm.p);
        std::vector<double> s1(dm.d * dm.m), s2(dm.d * dm.m), g1(dm.p), g2(dm.p);
        c.B(pp.t, pp.x, pp.y, pp.z, mu, b1);
        c.B(pp.t, pp.x2, pp.y2, pp.z2, mu2, b2);
        c.F(pp.t, pp.x, pp.y, pp.z, mu, f1);
        c.F(pp.t, pp.x2, pp.y2, pp.z2, mu2, f2);
        c.Sigma(pp.t, pp.x, pp.y, mu, s1);
        c.Sigma(pp.t, pp.x2, pp.y2, mu2, s2);
        c.G(pp.x, nud, g1);
        c.G(pp.x2, nud2, g2);
        if (!all_finite(b1) || !all_finite(f1) || !all_finite(s1) || !all_finite(g1))
            throw numeric_error("probe: coefficient returned non-finite value");
        if (den > 1e-12) {
            L.lipB = dist2(b1, b2) / den;
            L.lipF = dist2(f1, f2) / den;
            L.lipS = dist2(s1, s2) / den;
        }
        {
            const double deng = dist2(pp.x, pp.x2) + wt;
            if (deng > 1e-12) L.lipG = dist2(g1, g2) / deng;
        }

        // growth bounds exactly as declared, with L = declared_L:
        //   |Sigma| <= L, |G| <= L,
        //   |B| <= L (1 + |x| + |y| + |z| + sqrt(int |(x',y')|^2 dmu)),
        //   |F| <= L (1 + |y| + sqrt(int |y'|^2 dmu))
        const double Lc = c.declared_L;
        auto point_desc = [&](bool with_state) {
            std::string s = "t=" + std::to_string(pp.t);
            if (with_state) s += ", |x|=" + std::to_string(norm2(pp.x)) +
                                 ", |y|=" + std::to_string(norm2(pp.y));
            return s;
        };
        if (frobenius(s1) > Lc + 1e-9)
            L.viols.push_back({"Sigma", point_desc(true), frobenius(s1), Lc});
        if (norm2(g1) > Lc + 1e-9)
            L.viols.push_back({"G", point_desc(false), norm2(g1), Lc});
        const double m2_joint = std::sqrt(mu.squared_norm_moment());
        const double rhsB =
            Lc * (1 + norm2(pp.x) + norm2(pp.y) + norm2(pp.z) + m2_joint);
        if (norm2(b1) > rhsB + 1e-9)
            L.viols.push_back({"B", point_desc(true), norm2(b1), rhsB});
        double m2_y = 0;
        for (std::size_t j = dm.d; j < dm.d + dm.p; ++j)
            m2_y += pp.joint[j] * pp.joint[j];
        const double rhsF = Lc * (1 + norm2(pp.y) + std::sqrt(m2_y));
        if (norm2(f1) > rhsF + 1e-9)
            L.viols.push_back({"F", point_desc(true), norm2(f1), rhsF});

        // ellipticity at the probe point
        std::vector<double> a(dm.d * dm.d);
        sigma_sigma_t(s1, dm.d, dm.m, a);
        double lo, hi;
        sym_eig_range(a, dm.d, lo, hi);
        L.ell = lo;
    });

    AssumptionReport rep;
    rep.declared_L = c.declared_L;
    double lipB = 0, lipF = 0, lipS = 0, lipG = 0,
           ell = std::numeric_limits<double>::infinity();
    for (const auto& L : loc) {
        lipB = std::max(lipB, L.lipB);
        lipF = std::max(lipF, L.lipF);
        lipS = std::max(lipS, L.lipS);
        lipG = std::max(lipG, L.lipG);
        ell = std::min(ell, L.ell);
        for (const auto& v : L.viols) rep.growth_violations.push_back(v);
    }
    rep.lipschitz_estimates = {{"B", lipB}, {"F", lipF}, {"Sigma", lipS}, {"G", lipG}};
    rep.ellipticity_min = ell;

    // continuity of t -> Sigma(t, 0, 0, delta_0) on a uniform time ladder
    {
        const std::size_t nt = std::max<std::size_t>(opt.n_samples, 2);
        std::vector<double> zero_x(dm.d, 0.0), zero_y(dm.p, 0.0);
        std::vector<double> zero_joint(dm.d + dm.p, 0.0);
        const EmpiricalMeasure delta0 = EmpiricalMeasure::dirac(zero_joint);
        std::vector<double> prev(dm.d * dm.m), cur(dm.d * dm.m);
        double worst = 0;
        for (std::size_t k = 0; k < nt; ++k) {
            const double t = opt.t_max * double(k) / double(nt - 1);
            c.Sigma(t, zero_x, zero_y, delta0, cur);
            if (k > 0) {
                double dmax = 0;
                for (std::size_t j = 0; j < cur.size(); ++j)
                    dmax = std::max(dmax, std::abs(cur[j] - prev[j]));
                worst = std::max(worst, dmax);
            }
            std::swap(prev, cur);
        }
        rep.sigma_time_continuity = worst;
    }
    return rep;
}

} // namespace mfbsde
