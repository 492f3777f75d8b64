// grid.hpp - space-time grids and the discrete decoupling field u(t,x)
//
// Fields live on a uniform time ladder and a uniform box grid in 1 or 2
// space dimensions. Evaluation is multilinear in x (queries clamped to the
// box) and nearest-node in t. The boundary condition everywhere in this
// library is clamped-gradient: second derivatives vanish at the box edge and
// first derivatives are one-sided, i.e. linear extrapolation.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace mfbsde {

struct Axis {
    double lo = -1, hi = 1;
    std::size_t n = 3; // node count, >= 3
    double dx() const { return (hi - lo) / double(n - 1); }
};

class GridSpec {
  public:
    GridSpec(double T, std::size_t n_steps, std::vector<Axis> axes,
             double cfl_fraction = 1.0)
        : axes_(std::move(axes)), cfl_(cfl_fraction) {
        if (!(T > 0)) throw grid_error("grid: horizon must be positive");
        if (n_steps < 1) throw grid_error("grid: need at least one time step");
        if (axes_.empty() || axes_.size() > 2)
            throw grid_error("grid: spatial dimension must be 1 or 2, got " +
                             std::to_string(axes_.size()));
        for (const auto& a : axes_) {
            if (!(a.hi > a.lo)) throw grid_error("grid: axis hi <= lo");
            if (a.n < 3) throw grid_error("grid: need >= 3 nodes per axis");
        }
        if (!(cfl_ > 0) || cfl_ > 1.0)
            throw grid_error("grid: cfl_fraction must lie in (0, 1]");
        t_.resize(n_steps + 1);
        for (std::size_t k = 0; k <= n_steps; ++k)
            t_[k] = T * double(k) / double(n_steps);
        n_space_ = 1;
        for (const auto& a : axes_) n_space_ *= a.n;
    }

    std::size_t dim() const { return axes_.size(); }
    std::size_t n_steps() const { return t_.size() - 1; }
    double horizon() const { return t_.back(); }
    double dt() const { return t_[1] - t_[0]; }
    const std::vector<double>& times() const { return t_; }
    const Axis& axis(std::size_t i) const { return axes_.at(i); }
    std::size_t n_space() const { return n_space_; }
    double cfl_fraction() const { return cfl_; }

    double min_dx() const {
        double m = axes_[0].dx();
        for (const auto& a : axes_) m = std::min(m, a.dx());
        return m;
    }

    // largest stable explicit step for diffusion matrix with max eigenvalue
    // a_max: dt <= cfl_fraction / (a_max * sum_i 1/dx_i^2)
    double max_stable_dt(double a_max) const {
        if (!(a_max > 0)) return std::numeric_limits<double>::infinity();
        double s = 0;
        for (const auto& a : axes_) s += 1.0 / (a.dx() * a.dx());
        return cfl_ / (a_max * s);
    }

    // flat space index <-> per-axis indices (row major)
    std::size_t flatten(std::span<const std::size_t> idx) const {
        std::size_t f = 0;
        for (std::size_t i = 0; i < axes_.size(); ++i) f = f * axes_[i].n + idx[i];
        return f;
    }
    void unflatten(std::size_t flat, std::span<std::size_t> idx) const {
        for (std::size_t i = axes_.size(); i-- > 0;) {
            idx[i] = flat % axes_[i].n;
            flat /= axes_[i].n;
        }
    }
    void node_coord(std::size_t flat, std::span<double> x) const {
        std::size_t idx[2];
        unflatten(flat, {idx, axes_.size()});
        for (std::size_t i = 0; i < axes_.size(); ++i)
            x[i] = axes_[i].lo + double(idx[i]) * axes_[i].dx();
    }

    std::size_t nearest_time_index(double t) const {
        const double pos = (t - t_.front()) / dt();
        const long k = std::lround(pos);
        return std::size_t(std::clamp<long>(k, 0, long(t_.size() - 1)));
    }

    bool same_as(const GridSpec& o, double tol = 1e-12) const {
        if (t_.size() != o.t_.size() || axes_.size() != o.axes_.size()) return false;
        for (std::size_t k = 0; k < t_.size(); ++k)
            if (std::abs(t_[k] - o.t_[k]) > tol) return false;
        for (std::size_t i = 0; i < axes_.size(); ++i)
            if (std::abs(axes_[i].lo - o.axes_[i].lo) > tol ||
                std::abs(axes_[i].hi - o.axes_[i].hi) > tol || axes_[i].n != o.axes_[i].n)
                return false;
        return true;
    }

  private:
    std::vector<double> t_;
    std::vector<Axis> axes_;
    std::size_t n_space_ = 0;
    double cfl_ = 1.0;
};

class DecouplingField {
  public:
    DecouplingField(GridSpec grid, std::size_t values_per_node)
        : grid_(std::move(grid)), p_(values_per_node),
          v_((grid_.n_steps() + 1) * grid_.n_space() * p_, 0.0) {
        if (p_ == 0) throw dimension_error("field: value dimension must be >= 1");
    }

    const GridSpec& grid() const { return grid_; }
    std::size_t values_per_node() const { return p_; }

    std::span<double> at(std::size_t k, std::size_t flat) {
        return {v_.data() + (k * grid_.n_space() + flat) * p_, p_};
    }
    std::span<const double> at(std::size_t k, std::size_t flat) const {
        return {v_.data() + (k * grid_.n_space() + flat) * p_, p_};
    }
    std::span<const double> raw() const { return v_; }
    std::span<double> raw() { return v_; }

    // multilinear in x (clamped to the box), nearest node in t
    void eval(double t, std::span<const double> x, std::span<double> out) const {
        eval_at_time_index(grid_.nearest_time_index(t), x, out);
    }

    void eval_at_time_index(std::size_t k, std::span<const double> x,
                            std::span<double> out) const {
        const std::size_t d = grid_.dim();
        std::size_t i0[2];
        double f[2];
        for (std::size_t a = 0; a < d; ++a) {
            const Axis& ax = grid_.axis(a);
            const double xc = std::clamp(x[a], ax.lo, ax.hi);
            double pos = (xc - ax.lo) / ax.dx();
            std::size_t i = std::min<std::size_t>(std::size_t(pos), ax.n - 2);
            i0[a] = i;
            f[a] = pos - double(i);
        }
        if (d == 1) {
            const auto v0 = at(k, i0[0]);
            const auto v1 = at(k, i0[0] + 1);
            for (std::size_t c = 0; c < p_; ++c)
                out[c] = (1 - f[0]) * v0[c] + f[0] * v1[c];
        } else {
            const std::size_t n1 = grid_.axis(1).n;
            const std::size_t b = i0[0] * n1 + i0[1];
            const auto v00 = at(k, b), v01 = at(k, b + 1);
            const auto v10 = at(k, b + n1), v11 = at(k, b + n1 + 1);
            const double w00 = (1 - f[0]) * (1 - f[1]), w01 = (1 - f[0]) * f[1];
            const double w10 = f[0] * (1 - f[1]), w11 = f[0] * f[1];
            for (std::size_t c = 0; c < p_; ++c)
                out[c] = w00 * v00[c] + w01 * v01[c] + w10 * v10[c] + w11 * v11[c];
        }
    }

    // callable slice u(t_k, .) for pushforwards
    auto slice(std::size_t k) const {
        return [this, k](std::span<const double> x, std::span<double> out) {
            eval_at_time_index(k, x, out);
        };
    }

    double sup_norm() const {
        double s = 0;
        const std::size_t nodes = v_.size() / p_;
        for (std::size_t i = 0; i < nodes; ++i)
            s = std::max(s, norm2({v_.data() + i * p_, p_}));
        return s;
    }

    // max over time levels and adjacent space nodes of |du| / dx
    double max_space_slope() const {
        double s = 0;
        const std::size_t d = grid_.dim();
        for (std::size_t k = 0; k <= grid_.n_steps(); ++k) {
            if (d == 1) {
                const double dx = grid_.axis(0).dx();
                for (std::size_t i = 0; i + 1 < grid_.axis(0).n; ++i)
                    s = std::max(s, dist2(at(k, i), at(k, i + 1)) / dx);
            } else {
                const std::size_t n0 = grid_.axis(0).n, n1 = grid_.axis(1).n;
                const double dx0 = grid_.axis(0).dx(), dx1 = grid_.axis(1).dx();
                for (std::size_t i = 0; i < n0; ++i)
                    for (std::size_t j = 0; j < n1; ++j) {
                        if (i + 1 < n0)
                            s = std::max(s, dist2(at(k, i * n1 + j),
                                                  at(k, (i + 1) * n1 + j)) / dx0);
                        if (j + 1 < n1)
                            s = std::max(s, dist2(at(k, i * n1 + j),
                                                  at(k, i * n1 + j + 1)) / dx1);
                    }
            }
        }
        return s;
    }

    // diagnostic time regularity: max |u(t_{k+1},x) - u(t_k,x)| / sqrt(dt)
    double max_time_increment_ratio() const {
        double s = 0;
        const double r = std::sqrt(grid_.dt());
        for (std::size_t k = 0; k < grid_.n_steps(); ++k)
            for (std::size_t i = 0; i < grid_.n_space(); ++i)
                s = std::max(s, dist2(at(k, i), at(k + 1, i)) / r);
        return s;
    }

  private:
    GridSpec grid_;
    std::size_t p_;
    std::vector<double> v_;
};

// sup over grid nodes of exp(-|x|) |u1 - u2|
inline double weighted_sup_distance(const DecouplingField& a, const DecouplingField& b) {
    if (!a.grid().same_as(b.grid()) || a.values_per_node() != b.values_per_node())
        throw grid_error("weighted_sup_distance: fields live on different grids");
    const auto& g = a.grid();
    double s = 0;
    double x[2];
    std::vector<double> w(g.n_space());
    for (std::size_t i = 0; i < g.n_space(); ++i) {
        g.node_coord(i, {x, g.dim()});
        w[i] = std::exp(-norm2({x, g.dim()}));
    }
    for (std::size_t k = 0; k <= g.n_steps(); ++k)
        for (std::size_t i = 0; i < g.n_space(); ++i)
            s = std::max(s, w[i] * dist2(a.at(k, i), b.at(k, i)));
    return s;
}

} // namespace mfbsde
