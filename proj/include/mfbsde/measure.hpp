// measure.hpp - empirical measures on R^k, Wasserstein-2 distances, and the
// diamond pushforward x -> (x, psi(x))
//
// Measures are immutable after construction: atoms are stored flat (row
// major), weights sum to one, and the mean / second moments are cached
// eagerly so coefficient evaluations that only need moments stay O(1).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"
#include "rng.hpp"

namespace mfbsde {

class EmpiricalMeasure {
  public:
    // flat points: size n * dim, row major; empty weights means uniform 1/n
    EmpiricalMeasure(std::size_t dim, std::vector<double> flat_points,
                     std::vector<double> weights = {})
        : dim_(dim), pts_(std::move(flat_points)), w_(std::move(weights)) {
        if (dim_ == 0) throw dimension_error("measure: dimension must be >= 1");
        if (pts_.empty() || pts_.size() % dim_ != 0)
            throw dimension_error("measure: point buffer size " +
                                  std::to_string(pts_.size()) +
                                  " not a positive multiple of dim " +
                                  std::to_string(dim_));
        n_ = pts_.size() / dim_;
        if (!w_.empty()) {
            if (w_.size() != n_)
                throw dimension_error("measure: weight count != atom count");
            double s = 0;
            for (double x : w_) {
                if (!(x >= 0)) throw domain_error("measure: negative weight");
                s += x;
            }
            if (std::abs(s - 1.0) > 1e-12)
                throw domain_error("measure: weights sum to " + std::to_string(s) +
                                   ", expected 1 within 1e-12");
        }
        if (!all_finite(pts_)) throw numeric_error("measure: non-finite atom");
        cache_moments();
    }

    static EmpiricalMeasure dirac(std::span<const double> x) {
        return EmpiricalMeasure(x.size(), std::vector<double>(x.begin(), x.end()));
    }
    static EmpiricalMeasure from_scalars(std::vector<double> xs) {
        return EmpiricalMeasure(1, std::move(xs));
    }

    std::size_t size() const { return n_; }
    std::size_t dim() const { return dim_; }
    bool uniform_weights() const { return w_.empty(); }

    std::span<const double> atom(std::size_t i) const {
        return {pts_.data() + i * dim_, dim_};
    }
    double weight(std::size_t i) const { return w_.empty() ? 1.0 / double(n_) : w_[i]; }
    std::span<const double> points() const { return pts_; }

    // named moment shortcuts (cached)
    std::span<const double> mean() const { return mean_; }
    std::span<const double> second_moments() const { return m2c_; }
    double squared_norm_moment() const { return m2_; } // integral of |x|^2

    template <class Fn>
    std::vector<double> integrate(Fn&& f, std::size_t q) const {
        std::vector<double> acc(q, 0.0), buf(q);
        for (std::size_t i = 0; i < n_; ++i) {
            f(atom(i), std::span<double>(buf));
            if (!all_finite(buf))
                throw numeric_error("integrate: non-finite integrand at atom " +
                                    std::to_string(i));
            const double w = weight(i);
            for (std::size_t j = 0; j < q; ++j) acc[j] += w * buf[j];
        }
        return acc;
    }

    // measure of the first k coordinates, weights preserved
    EmpiricalMeasure marginal(std::size_t first_k) const {
        if (first_k == 0 || first_k > dim_)
            throw dimension_error("marginal: bad coordinate count");
        std::vector<double> flat(n_ * first_k);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < first_k; ++j)
                flat[i * first_k + j] = pts_[i * dim_ + j];
        return EmpiricalMeasure(first_k, std::move(flat), w_);
    }

    EmpiricalMeasure shifted(std::span<const double> delta) const {
        if (delta.size() != dim_) throw dimension_error("shifted: bad shift dim");
        std::vector<double> flat(pts_);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < dim_; ++j) flat[i * dim_ + j] += delta[j];
        return EmpiricalMeasure(dim_, std::move(flat), w_);
    }

    bool identical_atoms(const EmpiricalMeasure& o) const {
        return dim_ == o.dim_ && pts_ == o.pts_ && w_ == o.w_;
    }

  private:
    void cache_moments() {
        mean_.assign(dim_, 0.0);
        m2c_.assign(dim_, 0.0);
        m2_ = 0;
        for (std::size_t i = 0; i < n_; ++i) {
            const double w = weight(i);
            for (std::size_t j = 0; j < dim_; ++j) {
                const double x = pts_[i * dim_ + j];
                mean_[j] += w * x;
                m2c_[j] += w * x * x;
            }
        }
        for (double v : m2c_) m2_ += v;
    }

    std::size_t dim_, n_ = 0;
    std::vector<double> pts_;
    std::vector<double> w_; // empty = uniform
    std::vector<double> mean_, m2c_;
    double m2_ = 0;
};

template <class Fn>
std::vector<double> integrate(const EmpiricalMeasure& mu, Fn&& f, std::size_t q) {
    return mu.integrate(std::forward<Fn>(f), q);
}

// ---------------------------------------------------------------------------
// Wasserstein-2 distances

// exact 1-d W2 via the quantile coupling: sort both clouds, sweep the two
// weight sequences merging quantile segments; handles arbitrary weights
inline double w2_1d(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
    if (a.dim() != 1 || b.dim() != 1)
        throw dimension_error("w2_1d: requires dimension-1 clouds");
    const std::size_t na = a.size(), nb = b.size();
    std::vector<std::size_t> ia(na), ib(nb);
    std::iota(ia.begin(), ia.end(), 0);
    std::iota(ib.begin(), ib.end(), 0);
    std::sort(ia.begin(), ia.end(),
              [&](std::size_t i, std::size_t j) { return a.atom(i)[0] < a.atom(j)[0]; });
    std::sort(ib.begin(), ib.end(),
              [&](std::size_t i, std::size_t j) { return b.atom(i)[0] < b.atom(j)[0]; });
    double cost = 0, ra = a.weight(ia[0]), rb = b.weight(ib[0]);
    std::size_t i = 0, j = 0;
    while (i < na && j < nb) {
        const double m = std::min(ra, rb);
        const double d = a.atom(ia[i])[0] - b.atom(ib[j])[0];
        cost += m * d * d;
        ra -= m;
        rb -= m;
        if (ra <= 1e-15 && i + 1 < na) ra = a.weight(ia[++i]);
        else if (ra <= 1e-15) ++i;
        if (rb <= 1e-15 && j + 1 < nb) rb = b.weight(ib[++j]);
        else if (rb <= 1e-15) ++j;
    }
    return std::sqrt(std::max(0.0, cost));
}

namespace detail {

// min-cost perfect assignment on an n x n cost matrix, shortest augmenting
// paths with dual potentials, O(n^3)
inline double assignment_cost(std::size_t n, const std::vector<double>& cost) {
    const double INF = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0), v(n + 1, 0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), INF);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            std::size_t j1 = 0;
            double delta = INF;
            for (std::size_t j = 1; j <= n; ++j)
                if (!used[j]) {
                    const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    double total = 0;
    for (std::size_t j = 1; j <= n; ++j) total += cost[(p[j] - 1) * n + (j - 1)];
    return total;
}

} // namespace detail

inline constexpr std::size_t kAssignmentCap = 512;

// exact W2 between equal-size uniform clouds via optimal assignment
inline double w2_assignment(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                            std::size_t cap = kAssignmentCap) {
    if (a.dim() != b.dim())
        throw dimension_error("w2_assignment: cloud dimensions differ");
    if (a.size() != b.size() || !a.uniform_weights() || !b.uniform_weights())
        throw unsupported_error(
            "w2_assignment: needs equal-size uniform-weight clouds");
    const std::size_t n = a.size();
    if (n > cap)
        throw capacity_error("w2_assignment: " + std::to_string(n) + " atoms > cap " +
                             std::to_string(cap) + "; use w2_sliced");
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double d = dist2(a.atom(i), b.atom(j));
            cost[i * n + j] = d * d;
        }
    return std::sqrt(std::max(0.0, detail::assignment_cost(n, cost) / double(n)));
}

// sliced surrogate: mean over seeded random unit directions of the exact 1-d
// distance of the projected clouds; reduces to w2_1d in dimension 1
inline double w2_sliced(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                        std::size_t n_projections, std::uint64_t seed) {
    if (a.dim() != b.dim())
        throw dimension_error("w2_sliced: cloud dimensions differ");
    if (n_projections == 0) throw domain_error("w2_sliced: n_projections must be >= 1");
    if (a.dim() == 1) return w2_1d(a, b);
    const std::size_t k = a.dim();
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    double acc = 0;
    std::vector<double> dir(k), pa(a.size()), pb(b.size());
    for (std::size_t r = 0; r < n_projections; ++r) {
        double nrm = 0;
        do {
            for (auto& c : dir) c = gauss(gen);
            nrm = norm2(dir);
        } while (nrm < 1e-12);
        for (auto& c : dir) c /= nrm;
        for (std::size_t i = 0; i < a.size(); ++i) pa[i] = dot(a.atom(i), dir);
        for (std::size_t i = 0; i < b.size(); ++i) pb[i] = dot(b.atom(i), dir);
        EmpiricalMeasure qa(1, pa, a.uniform_weights()
                                       ? std::vector<double>{}
                                       : [&] {
                                             std::vector<double> w(a.size());
                                             for (std::size_t i = 0; i < a.size(); ++i)
                                                 w[i] = a.weight(i);
                                             return w;
                                         }());
        EmpiricalMeasure qb(1, pb, b.uniform_weights()
                                       ? std::vector<double>{}
                                       : [&] {
                                             std::vector<double> w(b.size());
                                             for (std::size_t i = 0; i < b.size(); ++i)
                                                 w[i] = b.weight(i);
                                             return w;
                                         }());
        acc += w2_1d(qa, qb);
    }
    return acc / double(n_projections);
}

// distance with an automatic method choice: exact where affordable
inline double w2_auto(const EmpiricalMeasure& a, const EmpiricalMeasure& b,
                      std::size_t cap = kAssignmentCap,
                      std::size_t n_projections = 64, std::uint64_t seed = 0x5eedu) {
    if (a.dim() != b.dim()) throw dimension_error("w2_auto: cloud dimensions differ");
    if (a.dim() == 1) return w2_1d(a, b);
    if (a.size() == b.size() && a.size() <= cap && a.uniform_weights() &&
        b.uniform_weights())
        return w2_assignment(a, b, cap);
    return w2_sliced(a, b, n_projections, seed);
}

// ---------------------------------------------------------------------------
// diamond pushforward: atoms (x_i, psi(x_i)), weights preserved

template <class Psi>
EmpiricalMeasure diamond(const EmpiricalMeasure& mu, std::size_t p, Psi&& psi) {
    const std::size_t d = mu.dim(), n = mu.size();
    std::vector<double> flat(n * (d + p));
    std::vector<double> buf(p);
    for (std::size_t i = 0; i < n; ++i) {
        const auto x = mu.atom(i);
        psi(x, std::span<double>(buf));
        if (!all_finite(buf)) {
            std::string where = "(";
            for (std::size_t j = 0; j < d; ++j)
                where += (j ? "," : "") + std::to_string(x[j]);
            throw numeric_error("diamond: psi non-finite at atom " + std::to_string(i) +
                                " " + where + ")");
        }
        double* row = flat.data() + i * (d + p);
        for (std::size_t j = 0; j < d; ++j) row[j] = x[j];
        for (std::size_t j = 0; j < p; ++j) row[d + j] = buf[j];
    }
    std::vector<double> w;
    if (!mu.uniform_weights()) {
        w.resize(n);
        for (std::size_t i = 0; i < n; ++i) w[i] = mu.weight(i);
    }
    return EmpiricalMeasure(d + p, std::move(flat), std::move(w));
}

// ---------------------------------------------------------------------------
// flows: time-indexed families of equal-dimension clouds

class MeasureFlow {
  public:
    MeasureFlow(std::vector<double> times, std::vector<EmpiricalMeasure> measures)
        : times_(std::move(times)), ms_(std::move(measures)) {
        if (times_.empty() || times_.size() != ms_.size())
            throw grid_error("flow: times/measures size mismatch");
        for (std::size_t k = 1; k < times_.size(); ++k)
            if (!(times_[k] > times_[k - 1]))
                throw grid_error("flow: times must be strictly increasing");
        for (const auto& m : ms_)
            if (m.dim() != ms_.front().dim())
                throw dimension_error("flow: mixed cloud dimensions");
    }

    std::size_t size() const { return ms_.size(); }
    std::size_t dim() const { return ms_.front().dim(); }
    const std::vector<double>& times() const { return times_; }
    const EmpiricalMeasure& at(std::size_t k) const { return ms_.at(k); }

  private:
    std::vector<double> times_;
    std::vector<EmpiricalMeasure> ms_;
};

// ---------------------------------------------------------------------------
// one-time-slice stability bound check:
//   W2(phiA <> muA, phiB <> muB) <= C * [ W2(muA,muB)
//       + W2(phiA#muA, phiA#muB) + (int |phiA-phiB|^2 dmuB)^(1/2) ]
// Exact distances throughout, so clouds must be small equal-size uniform.

struct PreW2Check {
    double lhs = 0;
    double rhs = 0; // the bracket, without C
    bool holds = false;
};

template <class PhiA, class PhiB>
PreW2Check pre_w2_bound_check(PhiA&& phiA, PhiB&& phiB, std::size_t p,
                              const EmpiricalMeasure& muA, const EmpiricalMeasure& muB,
                              double C) {
    PreW2Check r;
    r.lhs = w2_assignment(diamond(muA, p, phiA), diamond(muB, p, phiB));
    const double t1 = w2_assignment(muA, muB);
    auto push = [&](const EmpiricalMeasure& mu, auto&& phi) {
        std::vector<double> flat(mu.size() * p), buf(p);
        for (std::size_t i = 0; i < mu.size(); ++i) {
            phi(mu.atom(i), std::span<double>(buf));
            for (std::size_t j = 0; j < p; ++j) flat[i * p + j] = buf[j];
        }
        return EmpiricalMeasure(p, std::move(flat));
    };
    const double t2 = w2_assignment(push(muA, phiA), push(muB, phiA));
    double l2 = 0;
    std::vector<double> va(p), vb(p);
    for (std::size_t i = 0; i < muB.size(); ++i) {
        phiA(muB.atom(i), std::span<double>(va));
        phiB(muB.atom(i), std::span<double>(vb));
        double s = 0;
        for (std::size_t j = 0; j < p; ++j) s += (va[j] - vb[j]) * (va[j] - vb[j]);
        l2 += muB.weight(i) * s;
    }
    const double t3 = std::sqrt(std::max(0.0, l2));
    r.rhs = t1 + t2 + t3;
    r.holds = r.lhs <= C * r.rhs + 1e-12;
    return r;
}

} // namespace mfbsde
