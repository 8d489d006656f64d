#pragma once

#include <Eigen/Dense>

#include "trajcomplete/errors.hpp"

namespace traj {

/// Result of a singular value thresholding operation: thin factors U d V'
/// with d already thresholded. `rank` counts singular values that remain
/// strictly positive (relative to 1e-10 of the largest pre-threshold value,
/// so numerical noise never inflates the rank).
struct ThresholdedSVD {
    Eigen::MatrixXd U;  // N x r
    Eigen::VectorXd d;  // r, non-increasing, >= 0
    Eigen::MatrixXd V;  // K x r
    int rank = 0;

    Eigen::MatrixXd reconstruct() const {
        if (rank == 0) return Eigen::MatrixXd::Zero(U.rows(), V.rows());
        return U.leftCols(rank) * d.head(rank).asDiagonal() *
               V.leftCols(rank).transpose();
    }

    double nuclear_norm() const { return d.sum(); }
};

/// Soft singular value thresholding: subtract lambda from every singular
/// value and clamp at zero. The reconstruction minimizes
/// (1/2) ||X - W||_F^2 + lambda ||W||_*.
ThresholdedSVD soft_svt(const Eigen::MatrixXd& x, double lambda);

/// Hard singular value thresholding: keep singular values >= lambda
/// unchanged (values exactly equal to lambda are kept), zero the rest.
ThresholdedSVD hard_svt(const Eigen::MatrixXd& x, double lambda);

}  // namespace traj
