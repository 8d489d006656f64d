#include "trajcomplete/regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace traj {

namespace {

// Shared iteration for plain (lambda absent) and penalized (lambda present,
// design orthogonal) regression. Residual bookkeeping mirrors the completion
// solver: X A B' only ever materializes on the observed cells.
RegressionModel iterate_regression(const SparseMatrix& y, const Eigen::MatrixXd& x,
                                   const BasisMatrix& basis,
                                   const std::optional<double>& lambda,
                                   const Eigen::MatrixXd* warm_start, double epsilon,
                                   int max_iter, std::vector<std::string> labels) {
    if (!basis.orthonormal) throw ContractError("regression requires an orthonormal basis");
    if (static_cast<std::size_t>(x.rows()) != y.n_rows())
        throw DimensionError("design rows do not match the response rows");
    if (static_cast<std::size_t>(basis.values.rows()) != y.n_cols())
        throw DimensionError("basis grid does not match the response columns");
    if (epsilon <= 0) throw ArgumentError("epsilon must be positive");

    const Eigen::Index d = x.cols();
    const Eigen::Index k = basis.values.cols();
    const Eigen::MatrixXd& b = basis.values;

    const Eigen::MatrixXd xtx = x.transpose() * x;
    Eigen::JacobiSVD<Eigen::MatrixXd> gram_svd(xtx);
    const double smax = gram_svd.singularValues()[0];
    const double smin = gram_svd.singularValues()[d - 1];
    if (!(smin > 0) || smax / smin > 1e12) {
        std::ostringstream os;
        os << "X'X is numerically singular (condition "
           << (smin > 0 ? smax / smin : std::numeric_limits<double>::infinity()) << ")";
        throw RankError(os.str());
    }
    const Eigen::LDLT<Eigen::MatrixXd> gram(xtx);

    RegressionModel model;
    model.basis = basis;
    model.lambda = lambda;
    model.covariate_labels = std::move(labels);
    model.converged = false;

    Eigen::MatrixXd a = warm_start ? *warm_start : Eigen::MatrixXd::Zero(d, k);
    Eigen::MatrixXd fitted_coef;  // X A, N x K

    const auto residual_pass = [&](const Eigen::MatrixXd& coef, Eigen::MatrixXd* grad) {
        // grad (optional) accumulates sum over cells of r * x_row b_col'.
        double ss = 0.0;
        fitted_coef = x * coef;
        if (grad) grad->setZero();
        for (const SparseMatrix::Entry& e : y.entries()) {
            const auto row = static_cast<Eigen::Index>(e.row);
            const auto col = static_cast<Eigen::Index>(e.col);
            const double r = e.value - fitted_coef.row(row).dot(b.row(col));
            ss += r * r;
            if (grad) *grad += r * x.row(row).transpose() * b.row(col);
        }
        return ss;
    };

    Eigen::MatrixXd grad(d, k);
    for (int iter = 1; iter <= max_iter; ++iter) {
        residual_pass(a, &grad);
        // OLS on the imputed matrix: A_ols = A + (X'X)^{-1} X' P_Omega(Y - XAB') B
        Eigen::MatrixXd a_new = a + gram.solve(grad);
        if (lambda && *lambda > 0) a_new = soft_svt(a_new, *lambda).reconstruct();

        model.objective = 0.5 * residual_pass(a_new, nullptr);
        if (lambda && *lambda > 0) {
            Eigen::JacobiSVD<Eigen::MatrixXd> asvd(a_new);
            model.objective += *lambda * asvd.singularValues().sum();
        }
        model.objective_trace.push_back(model.objective);
        model.iterations = iter;

        const double step = (a_new - a).squaredNorm();
        const double base = a.squaredNorm();
        const double rel = base > 0 ? step / base : (step > 0 ? 1.0 : 0.0);
        a = std::move(a_new);
        if (rel < epsilon) {
            model.converged = true;
            break;
        }
    }
    model.A = std::move(a);
    return model;
}

}  // namespace

RegressionModel sparse_regression(const SparseMatrix& y, const Eigen::MatrixXd& x,
                                  const BasisMatrix& basis, double epsilon, int max_iter,
                                  std::vector<std::string> labels) {
    return iterate_regression(y, x, basis, std::nullopt, nullptr, epsilon, max_iter,
                              std::move(labels));
}

std::vector<RegressionModel> penalized_score_regression(const SparseMatrix& y,
                                                        const Eigen::MatrixXd& scores,
                                                        const BasisMatrix& basis,
                                                        const LambdaPath& path,
                                                        double epsilon, int max_iter) {
    const Eigen::MatrixXd gram = scores.transpose() * scores;
    const double gap = (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols()))
                           .cwiseAbs()
                           .maxCoeff();
    if (gap > 1e-8)
        throw ContractError("penalized regression requires orthonormal score columns");

    std::vector<RegressionModel> models;
    models.reserve(path.size());
    const Eigen::MatrixXd* warm = nullptr;
    for (const double lambda : path.values) {
        models.push_back(iterate_regression(y, scores, basis, lambda, warm, epsilon,
                                            max_iter, {}));
        warm = &models.back().A;
    }
    return models;
}

SparseLongitudinalRegression sparse_longitudinal_regression(
    const SparseMatrix& y, const BasisMatrix& response_basis,
    const StackedDesign& covariates, const LambdaPath& path, double step1_lambda,
    double epsilon, int max_iter, std::optional<int> d2_override) {
    if (y.n_rows() != covariates.n_rows())
        throw DimensionError("response and covariates must share subject rows");

    const MultivariateFit step1 = multivariate_impute(
        covariates, LambdaPath::from_values({step1_lambda}), epsilon, max_iter);
    const LatentEmbedding& embedding = step1.embeddings.front();

    int d2 = embedding.rank;
    if (d2_override) d2 = std::min(*d2_override, embedding.rank);
    if (d2 <= 0)
        throw ConfigError("covariate embedding has no usable latent directions");

    SparseLongitudinalRegression out;
    out.embedding = embedding;
    out.scores = embedding.U.leftCols(d2);
    out.models =
        penalized_score_regression(y, out.scores, response_basis, path, epsilon, max_iter);
    return out;
}

}  // namespace traj
