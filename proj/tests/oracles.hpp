#pragma once

// Test-only reference implementations, kept independent of the library code
// paths they are used to check.

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "trajcomplete/rng.hpp"

namespace oracles {

// Clamped uniform knot vector (same layout contract as the library).
inline std::vector<double> knots(int n_basis, int degree, double a, double b) {
    const int n = n_basis + degree + 1;
    const int spans = n_basis - degree;
    std::vector<double> k(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        if (i <= degree)
            k[static_cast<std::size_t>(i)] = a;
        else if (i >= n_basis)
            k[static_cast<std::size_t>(i)] = b;
        else
            k[static_cast<std::size_t>(i)] = a + (b - a) * static_cast<double>(i - degree) /
                                                     static_cast<double>(spans);
    }
    return k;
}

// Textbook recursive Cox-de Boor evaluation. The right endpoint belongs to
// the last non-empty span.
inline double coxdeboor(int j, int degree, double t, const std::vector<double>& kn,
                        double b) {
    const auto ju = static_cast<std::size_t>(j);
    if (degree == 0) {
        const bool rightmost = kn[ju + 1] >= b && kn[ju] < kn[ju + 1];
        if (rightmost) return (t >= kn[ju] && t <= kn[ju + 1]) ? 1.0 : 0.0;
        return (t >= kn[ju] && t < kn[ju + 1]) ? 1.0 : 0.0;
    }
    double left = 0.0;
    const double dl = kn[ju + static_cast<std::size_t>(degree)] - kn[ju];
    if (dl > 0) left = (t - kn[ju]) / dl * coxdeboor(j, degree - 1, t, kn, b);
    double right = 0.0;
    const double dr = kn[ju + static_cast<std::size_t>(degree) + 1] - kn[ju + 1];
    if (dr > 0)
        right = (kn[ju + static_cast<std::size_t>(degree) + 1] - t) / dr *
                coxdeboor(j + 1, degree - 1, t, kn, b);
    return left + right;
}

inline Eigen::VectorXd bspline_row(double t, int n_basis, int degree, double a, double b) {
    const std::vector<double> kn = knots(n_basis, degree, a, b);
    Eigen::VectorXd row(n_basis);
    for (int j = 0; j < n_basis; ++j) row[j] = coxdeboor(j, degree, t, kn, b);
    return row;
}

inline double nuclear_norm(const Eigen::MatrixXd& w) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(w);
    return svd.singularValues().sum();
}

inline double prox_objective(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w,
                             double lambda) {
    return 0.5 * (x - w).squaredNorm() + lambda * nuclear_norm(w);
}

// Projected subgradient descent for min_W 0.5||X-W||^2 + lambda||W||_*,
// several random starts around the prox center, strongly-convex warmup and
// repeated Polyak polishing rounds. Returns the best objective value seen.
inline double subgradient_prox_min(const Eigen::MatrixXd& x, double lambda,
                                   int n_starts, traj::Rng& rng) {
    const auto subgrad = [&](const Eigen::MatrixXd& w) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(w,
                                              Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Eigen::VectorXd& d = svd.singularValues();
        int r = 0;
        for (Eigen::Index i = 0; i < d.size(); ++i)
            if (d[i] > 1e-12 * (d[0] > 0 ? d[0] : 1.0)) r = static_cast<int>(i) + 1;
        Eigen::MatrixXd g = w - x;
        if (r > 0)
            g += lambda * svd.matrixU().leftCols(r) * svd.matrixV().leftCols(r).transpose();
        return g;
    };

    double best = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd w_best;

    // warmup: strongly-convex schedule from every start
    for (int s = 0; s < n_starts; ++s) {
        Eigen::MatrixXd w(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                w(i, j) = x(i, j) + rng.normal() * 0.5;
        for (int k = 1; k <= 400; ++k) {
            w -= (2.0 / (k + 2)) * subgrad(w);
            const double f = prox_objective(x, w, lambda);
            if (f < best) {
                best = f;
                w_best = w;
            }
        }
    }

    // polish: Polyak steps with a halving optimism gap
    double delta = std::max(1e-3, 0.05 * std::abs(best));
    Eigen::MatrixXd w = w_best;
    for (int round = 0; round < 60 && delta > 1e-8; ++round) {
        const double round_start = best;
        w = w_best;
        for (int k = 0; k < 300; ++k) {
            const Eigen::MatrixXd g = subgrad(w);
            const double f = prox_objective(x, w, lambda);
            if (f < best) {
                best = f;
                w_best = w;
            }
            const double gn = g.squaredNorm();
            if (gn < 1e-18) break;
            const double step = (f - (best - delta)) / gn;
            w -= step * g;
        }
        if (round_start - best < 0.5 * delta) delta *= 0.5;
    }
    return best;
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols,
                                     traj::Rng& rng, double scale = 1.0) {
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
}

}  // namespace oracles
