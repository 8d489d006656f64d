#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "trajcomplete/completion.hpp"
#include "trajcomplete/multivariate.hpp"
#include "trajcomplete/regression.hpp"

namespace traj {

/// Curve-mode mean squared error over a subject subset:
/// (1 / (T |S|)) sum_{i in S} ||predicted_i - truth_i||^2.
double mse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth,
           const std::vector<std::size_t>& rows);

/// Entrywise mean squared error over index pairs.
double mse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth,
           const std::vector<CellIndex>& cells);

/// Entrywise error of predictions against the observed values of `y` at the
/// given cells (the only observable score on real data).
double mse_observed(const Eigen::MatrixXd& predicted, const SparseMatrix& y,
                    const std::vector<CellIndex>& cells);

/// Baseline prediction: per-column mean of the observed values; empty columns
/// are filled by linear interpolation between the nearest non-empty columns
/// (constant extension at the ends).
Eigen::VectorXd null_model(const SparseMatrix& y);

enum class CvMethod { soft, hard, regression, multivariate };

std::string to_string(CvMethod method);

struct CvOptions {
    CvMethod method = CvMethod::soft;
    std::vector<double> lambda_grid;          // candidate regularization levels
    std::vector<int> rank_grid;               // alternative for method hard
    double epsilon = 1e-5;
    int max_iter = 500;
    bool center = false;                      // estimate/subtract the mean curve
    std::optional<StackedDesign> covariates;  // regression / multivariate
    std::vector<double> step1_grid;           // regression: step-1 candidates
    std::optional<int> d2_override;
    double response_scale = 1.0;              // multivariate response block
    int jobs = 1;
};

struct CvCandidate {
    double lambda = 0.0;
    std::optional<double> step1_lambda;
    std::optional<int> requested_rank;  // when driven by a rank grid
    double validation_mse = 0.0;
    int rank = 0;
    bool converged = true;
};

struct CvReport {
    CvMethod method = CvMethod::soft;
    std::vector<CvCandidate> candidates;  // strongest regularization first
    std::size_t selected_index = 0;
    double test_mse = 0.0;                 // entrywise on held-out observed cells
    std::optional<double> truth_mse;       // curve mode vs ground truth, all rows
    std::optional<double> null_test_mse;   // baseline on the same test cells
    std::uint64_t seed = 0;
    Eigen::MatrixXd selected_prediction;   // N x T fitted curves of the refit
    std::vector<std::vector<double>> objective_traces;  // every solver trace

    const CvCandidate& selected() const { return candidates.at(selected_index); }

    /// JSON document with keys grid, validation_mse, selected, test_mse, seed
    /// (plus method / truth_mse / rank extras).
    std::string to_json() const;

    /// Per-candidate scores, one CSV row each.
    std::string candidates_csv() const;
};

/// Fit on the train cells, score candidates entrywise on the validation
/// cells, select the minimizer (ties resolve toward stronger regularization),
/// refit on train + validation, and report the entrywise test error. Never
/// reads test cells before that final scoring. When `truth` is given the
/// curve-mode error of the refit against it is reported as well.
CvReport cross_validate(const SparseMatrix& y, const BasisMatrix& basis,
                        const CvOptions& options, const SplitAssignment& assignment,
                        std::uint64_t seed, const Eigen::MatrixXd* truth = nullptr);

}  // namespace traj
