// Classic two-sided cyclic Jacobi eigensolver for symmetric matrices, used as
// an independent oracle for singular values (sigma_i = sqrt(eig_i(w^T w))).
#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sft/matrix.hpp"

namespace oracle {

// Eigenvalues of the symmetric matrix g (dense, double), descending.
inline std::vector<double> symmetric_eigenvalues(std::vector<double> g, int n) {
    auto at = [&g, n](int i, int j) -> double& { return g[static_cast<size_t>(i) * n + j]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
        if (off < 1e-26) break;
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                if (std::fabs(at(p, q)) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(1.0 + theta * theta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double gkp = at(k, p), gkq = at(k, q);
                    at(k, p) = c * gkp - s * gkq;
                    at(k, q) = s * gkp + c * gkq;
                }
                for (int k = 0; k < n; ++k) {
                    const double gpk = at(p, k), gqk = at(q, k);
                    at(p, k) = c * gpk - s * gqk;
                    at(q, k) = s * gpk + c * gqk;
                }
            }
        }
    }
    std::vector<double> eig(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) eig[static_cast<size_t>(i)] = at(i, i);
    std::sort(eig.begin(), eig.end(), std::greater<double>());
    return eig;
}

// Singular values of w via the Gram matrix, descending.
inline std::vector<double> singular_values_via_gram(const sft::Matrix& w) {
    const int n = w.cols;
    std::vector<double> gram(static_cast<size_t>(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < w.rows; ++k)
                acc += static_cast<double>(w.at(k, i)) * static_cast<double>(w.at(k, j));
            gram[static_cast<size_t>(i) * n + j] = acc;
        }
    std::vector<double> eig = symmetric_eigenvalues(std::move(gram), n);
    for (double& v : eig) v = std::sqrt(std::max(0.0, v));
    return eig;
}

}  // namespace oracle
