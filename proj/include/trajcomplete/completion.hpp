#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "trajcomplete/basis.hpp"
#include "trajcomplete/data_model.hpp"
#include "trajcomplete/svt.hpp"

namespace traj {

/// Per-subject basis coefficients together with the basis they refer to.
/// Fitted curves are W B' (+ mean curve when one was subtracted).
struct CoefficientMatrix {
    Eigen::MatrixXd W;  // N x K
    BasisMatrix basis;
    std::optional<Eigen::VectorXd> mean_curve;  // length T
};

/// Strictly decreasing sequence of regularization levels.
struct LambdaPath {
    std::vector<double> values;

    static LambdaPath from_values(std::vector<double> values);
    static LambdaPath logarithmic(double top, double bottom, std::size_t count);

    std::size_t size() const { return values.size(); }
};

/// Default path: `count` log-spaced values from d1(P_Omega(Y) B) down to
/// d1 / 100.
LambdaPath default_lambda_path(const SparseMatrix& y, const BasisMatrix& basis,
                               std::size_t count = 20);

enum class Thresholding { soft, hard };

/// Solution at one regularization level plus its convergence record.
struct LambdaSolution {
    double lambda = 0.0;
    Eigen::MatrixXd W;
    int rank = 0;
    double objective = 0.0;
    std::vector<double> objective_trace;  // one value per iteration
    int iterations = 0;
    bool converged = true;
};

/// Solutions along a lambda path. The objective trace within each lambda is
/// non-increasing (majorize-minimize descent).
struct FitPath {
    std::vector<LambdaSolution> solutions;
    BasisMatrix basis;
    double epsilon = 1e-5;
    int max_iter = 500;
    Thresholding kind = Thresholding::soft;
    std::optional<Eigen::VectorXd> mean_curve;
    bool empty_pattern = false;  // set when the data had no observed cells

    const LambdaSolution& at_lambda(double lambda) const;
    CoefficientMatrix coefficients(std::size_t index) const;
};

/// f_lambda(W) = (1/2) ||P_Omega(Y) - P_Omega(W B')||_F^2 + lambda ||W||_*.
/// Evaluated on Y exactly as given (any centering is the caller's business).
double objective(const CoefficientMatrix& coef, const SparseMatrix& y, double lambda);

/// Iterative soft-thresholded completion over a warm-started lambda path.
/// The first lambda starts from zero coefficients; each subsequent lambda
/// starts from the previous solution. Stops per lambda when
/// ||W_new - W_old||_F^2 / ||W_old||_F^2 < epsilon or after max_iter rounds.
/// When `mean_curve` is given it is subtracted from the observations before
/// fitting and recorded for imputation.
FitPath soft_impute(const SparseMatrix& y, const BasisMatrix& basis,
                    const LambdaPath& path, double epsilon = 1e-5, int max_iter = 500,
                    const std::optional<Eigen::VectorXd>& mean_curve = std::nullopt);

/// Hard-thresholded variant; each lambda starts from the corresponding
/// solution of a previous soft fit. The recorded objective uses the rank
/// penalty (1/2) lambda^2 rank(W), which the hard operator minimizes
/// stepwise, so traces stay non-increasing.
FitPath hard_impute(const SparseMatrix& y, const BasisMatrix& basis,
                    const LambdaPath& path, const FitPath& warm, double epsilon = 1e-5,
                    int max_iter = 500);

/// Full fitted trajectories W B' (+ mean curve), all rows or a subset.
Eigen::MatrixXd impute(const CoefficientMatrix& coef);
Eigen::MatrixXd impute(const CoefficientMatrix& coef, const std::vector<std::size_t>& rows);

enum class RefitMode { new_observations, new_subjects };

/// Resume iteration from an existing fit after data changed: either new
/// measurements for existing subjects (same row count) or appended subjects
/// (new rows start at zero coefficients and must each carry at least as many
/// observations as the largest rank in the fit).
FitPath refit_with_new_data(const FitPath& fit, const SparseMatrix& y_new, RefitMode mode);

/// Population mean curve by ridge-regularized basis least squares over all
/// observed cells. Zero curve when nothing is observed.
Eigen::VectorXd estimate_mean_curve(const SparseMatrix& y, const BasisMatrix& basis,
                                    double ridge = 1e-6);

/// Copy of `y` with `curve[col]` subtracted from every observed value.
SparseMatrix subtract_curve(const SparseMatrix& y, const Eigen::VectorXd& curve);

namespace detail {

struct PathSolveSpec {
    Thresholding kind = Thresholding::soft;
    double epsilon = 1e-5;
    int max_iter = 500;
    const std::vector<Eigen::MatrixXd>* per_lambda_start = nullptr;
    const Eigen::MatrixXd* initial = nullptr;
};

/// Core path solver shared by the univariate and stacked problems.
/// `basis` must have orthonormal columns; `cells` index into an
/// n_rows x basis.rows() layout.
std::vector<LambdaSolution> solve_path(const std::vector<SparseMatrix::Entry>& cells,
                                       std::size_t n_rows, const Eigen::MatrixXd& basis,
                                       const LambdaPath& path, const PathSolveSpec& spec);

}  // namespace detail

}  // namespace traj
