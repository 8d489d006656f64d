#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "trajcomplete/multivariate.hpp"

namespace traj {

/// Coefficients of a curve-on-covariates regression: fitted curves are
/// X A B' for a fixed design X or U A B' for latent scores U.
struct RegressionModel {
    Eigen::MatrixXd A;  // d x K
    std::vector<std::string> covariate_labels;
    BasisMatrix basis;
    std::optional<double> lambda;
    double objective = 0.0;
    std::vector<double> objective_trace;
    int iterations = 0;
    bool converged = true;
};

/// Impute-then-least-squares regression of a sparse response on fixed
/// covariates: repeat A <- (X'X)^{-1} X' (P_Omega(Y) + P_Omega_perp(X A B')) B
/// from A = 0 until the relative change drops below epsilon. Fully observed
/// data converges in a single step to (X'X)^{-1} X' Y B.
RegressionModel sparse_regression(const SparseMatrix& y, const Eigen::MatrixXd& x,
                                  const BasisMatrix& basis, double epsilon = 1e-5,
                                  int max_iter = 500,
                                  std::vector<std::string> labels = {});

/// Nuclear-norm-penalized variant for orthogonal score matrices: the same
/// iteration with a soft singular value threshold applied to A each round
/// (reduces to sparse_regression when lambda = 0). Solutions along the path
/// are warm-started in decreasing lambda order.
std::vector<RegressionModel> penalized_score_regression(
    const SparseMatrix& y, const Eigen::MatrixXd& scores, const BasisMatrix& basis,
    const LambdaPath& path, double epsilon = 1e-5, int max_iter = 500);

/// Two-step regression of a sparse response on other sparse processes:
/// embed the covariate blocks at `step1_lambda`, keep the top `d2` score
/// directions (all positive directions by default), then run the penalized
/// regression of the response on those scores along `path`.
struct SparseLongitudinalRegression {
    LatentEmbedding embedding;           // step-1 covariate embedding
    Eigen::MatrixXd scores;              // N x d2 orthogonal scores used
    std::vector<RegressionModel> models; // step-2, one per lambda
};

SparseLongitudinalRegression sparse_longitudinal_regression(
    const SparseMatrix& y, const BasisMatrix& response_basis,
    const StackedDesign& covariates, const LambdaPath& path, double step1_lambda,
    double epsilon = 1e-5, int max_iter = 500,
    std::optional<int> d2_override = std::nullopt);

}  // namespace traj
