// linalg.hpp - small dense helpers (dimensions here are 1..3, occasionally a
// few more in the assumption prober; nothing warrants a matrix library)
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace mfbsde {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double dist2(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

// out(r x c) row-major = A(r x k) * B(k x c)
inline void matmul(std::span<const double> A, std::span<const double> B,
                   std::size_t r, std::size_t k, std::size_t c,
                   std::span<double> out) {
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            double s = 0;
            for (std::size_t l = 0; l < k; ++l) s += A[i * k + l] * B[l * c + j];
            out[i * c + j] = s;
        }
}

// out(d x d) = S S^T for S(d x m) row-major
inline void sigma_sigma_t(std::span<const double> S, std::size_t d, std::size_t m,
                          std::span<double> out) {
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double s = 0;
            for (std::size_t l = 0; l < m; ++l) s += S[i * m + l] * S[j * m + l];
            out[i * d + j] = s;
            out[j * d + i] = s;
        }
}

// eigenvalue range of a symmetric d x d matrix; closed form for d <= 2,
// cyclic Jacobi sweeps otherwise (prober may probe any dimension)
inline void sym_eig_range(std::span<const double> A, std::size_t d,
                          double& lo, double& hi) {
    if (d == 1) {
        lo = hi = A[0];
        return;
    }
    if (d == 2) {
        const double tr = A[0] + A[3];
        const double dt = A[0] * A[3] - A[1] * A[2];
        const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - dt));
        lo = tr / 2.0 - disc;
        hi = tr / 2.0 + disc;
        return;
    }
    std::vector<double> M(A.begin(), A.end());
    for (int sweep = 0; sweep < 50; ++sweep) {
        double off = 0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += M[p * d + q] * M[p * d + q];
        if (off < 1e-28) break;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = M[p * d + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (M[q * d + q] - M[p * d + p]) / (2 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1.0 / std::sqrt(t * t + 1), s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double mkp = M[k * d + p], mkq = M[k * d + q];
                    M[k * d + p] = c * mkp - s * mkq;
                    M[k * d + q] = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double mpk = M[p * d + k], mqk = M[q * d + k];
                    M[p * d + k] = c * mpk - s * mqk;
                    M[q * d + k] = s * mpk + c * mqk;
                }
            }
    }
    lo = hi = M[0];
    for (std::size_t i = 1; i < d; ++i) {
        lo = std::min(lo, M[i * d + i]);
        hi = std::max(hi, M[i * d + i]);
    }
}

inline double frobenius(std::span<const double> A) { return norm2(A); }

} // namespace mfbsde
