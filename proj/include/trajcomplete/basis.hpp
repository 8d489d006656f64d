#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "trajcomplete/errors.hpp"

namespace traj {

/// Shared discretization of the observation window: T equidistant points
/// spanning [t_min, t_max]. Everything downstream (bases, sparse matrices,
/// fitted curves) is evaluated on one of these.
struct TimeGrid {
    double t_min = 0.0;
    double t_max = 1.0;
    std::vector<double> points;

    static TimeGrid uniform(double t_min, double t_max, std::size_t n_points);

    std::size_t size() const { return points.size(); }
    double spacing() const { return points[1] - points[0]; }

    /// Enforces the type invariants: endpoints match, T >= 2, strictly
    /// increasing and equidistant to 1e-12 relative spacing.
    void validate() const;
};

/// A truncated functional basis evaluated on a grid: T x K matrix whose row j
/// holds the K basis functions at grid point j.
struct BasisMatrix {
    Eigen::MatrixXd values;  // T x K
    TimeGrid grid;
    bool orthonormal = false;

    Eigen::Index n_points() const { return values.rows(); }
    Eigen::Index n_basis() const { return values.cols(); }
};

/// Values of the K clamped B-spline basis functions of the given degree at a
/// single time point. Interior knots are equally spaced over [t_min, t_max].
/// Valid for any t in [t_min, t_max], not just grid points.
Eigen::VectorXd bspline_values_at(double t, int n_basis, int degree, double t_min,
                                  double t_max);

/// B-spline basis evaluated on a grid. Rows sum to one (partition of unity);
/// columns are not orthonormal.
BasisMatrix make_bspline_basis(const TimeGrid& grid, int n_basis, int degree);

/// Orthonormal basis spanning the same column space, via thin QR.
/// Sign convention: the first entry of each column whose magnitude exceeds
/// 1e-10 of the column max is made positive.
BasisMatrix orthonormalize(const BasisMatrix& basis);

/// Nearest-grid-point index for each time; exact midpoints resolve to the
/// lower index. Times must lie inside [t_min, t_max].
std::vector<std::size_t> snap_to_grid(const std::vector<double>& times,
                                      const TimeGrid& grid);

}  // namespace traj
