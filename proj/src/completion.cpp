#include "trajcomplete/completion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace traj {

LambdaPath LambdaPath::from_values(std::vector<double> values) {
    if (values.empty()) throw ArgumentError("lambda path must be non-empty");
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (values[i] < 0) throw ArgumentError("lambda values must be non-negative");
        if (i > 0 && !(values[i] < values[i - 1]))
            throw ArgumentError("lambda path must be strictly decreasing");
    }
    LambdaPath p;
    p.values = std::move(values);
    return p;
}

LambdaPath LambdaPath::logarithmic(double top, double bottom, std::size_t count) {
    if (!(top > 0) || !(bottom > 0) || !(bottom < top))
        throw ArgumentError("logarithmic path needs 0 < bottom < top");
    if (count < 2) throw ArgumentError("logarithmic path needs at least 2 values");
    std::vector<double> values(count);
    const double ratio = std::log(bottom / top) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i)
        values[i] = top * std::exp(ratio * static_cast<double>(i));
    return from_values(std::move(values));
}

LambdaPath default_lambda_path(const SparseMatrix& y, const BasisMatrix& basis,
                               std::size_t count) {
    const Eigen::MatrixXd xb = y.to_dense() * basis.values;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(xb);
    const double top = svd.singularValues().size() > 0 ? svd.singularValues()[0] : 0.0;
    if (top <= 0) return LambdaPath::from_values({0.0});
    return LambdaPath::logarithmic(top, top / 100.0, count);
}

const LambdaSolution& FitPath::at_lambda(double lambda) const {
    for (const LambdaSolution& s : solutions)
        if (s.lambda == lambda) return s;
    throw IndexError("no solution for the requested lambda");
}

CoefficientMatrix FitPath::coefficients(std::size_t index) const {
    if (index >= solutions.size()) throw IndexError("lambda index out of range");
    return CoefficientMatrix{solutions[index].W, basis, mean_curve};
}

double objective(const CoefficientMatrix& coef, const SparseMatrix& y, double lambda) {
    const Eigen::MatrixXd& b = coef.basis.values;
    if (coef.W.cols() != b.cols() ||
        static_cast<std::size_t>(coef.W.rows()) != y.n_rows() ||
        static_cast<std::size_t>(b.rows()) != y.n_cols())
        throw DimensionError("coefficients, basis and data shapes disagree");

    double fidelity = 0.0;
    for (const SparseMatrix::Entry& e : y.entries()) {
        const double fitted = coef.W.row(static_cast<Eigen::Index>(e.row))
                                  .dot(b.row(static_cast<Eigen::Index>(e.col)));
        const double r = e.value - fitted;
        fidelity += r * r;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(coef.W);
    return 0.5 * fidelity + lambda * svd.singularValues().sum();
}

namespace detail {

std::vector<LambdaSolution> solve_path(const std::vector<SparseMatrix::Entry>& cells,
                                       std::size_t n_rows, const Eigen::MatrixXd& basis,
                                       const LambdaPath& path, const PathSolveSpec& spec) {
    const auto n = static_cast<Eigen::Index>(n_rows);
    const Eigen::Index k = basis.cols();
    if (spec.epsilon <= 0) throw ArgumentError("epsilon must be positive");
    if (spec.max_iter < 1) throw ArgumentError("max_iter must be at least 1");
    if (spec.per_lambda_start && spec.per_lambda_start->size() != path.size())
        throw ConfigError("per-lambda starts do not match the lambda path");

    Eigen::MatrixXd w_old =
        spec.initial ? *spec.initial : Eigen::MatrixXd::Zero(n, k);

    // One residual pass: r_e = y_e - w_row . b_col for every observed cell.
    const auto residuals = [&](const Eigen::MatrixXd& w, Eigen::VectorXd& out) {
        out.resize(static_cast<Eigen::Index>(cells.size()));
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const SparseMatrix::Entry& e = cells[i];
            out[static_cast<Eigen::Index>(i)] =
                e.value - w.row(static_cast<Eigen::Index>(e.row))
                              .dot(basis.row(static_cast<Eigen::Index>(e.col)));
        }
    };

    std::vector<LambdaSolution> solutions;
    solutions.reserve(path.size());
    Eigen::VectorXd resid;

    for (std::size_t li = 0; li < path.size(); ++li) {
        const double lambda = path.values[li];
        if (spec.per_lambda_start) w_old = (*spec.per_lambda_start)[li];

        LambdaSolution sol;
        sol.lambda = lambda;
        sol.converged = false;

        for (int iter = 1; iter <= spec.max_iter; ++iter) {
            // X = (P_Omega(Y) + P_Omega_perp(W B')) B = W + P_Omega(Y - W B') B
            residuals(w_old, resid);
            Eigen::MatrixXd x = w_old;
            for (std::size_t i = 0; i < cells.size(); ++i)
                x.row(static_cast<Eigen::Index>(cells[i].row)) +=
                    resid[static_cast<Eigen::Index>(i)] *
                    basis.row(static_cast<Eigen::Index>(cells[i].col));

            const ThresholdedSVD tsvd = spec.kind == Thresholding::soft
                                            ? soft_svt(x, lambda)
                                            : hard_svt(x, lambda);
            Eigen::MatrixXd w_new = tsvd.reconstruct();

            residuals(w_new, resid);
            const double penalty = spec.kind == Thresholding::soft
                                       ? lambda * tsvd.d.sum()
                                       : 0.5 * lambda * lambda * tsvd.rank;
            sol.objective = 0.5 * resid.squaredNorm() + penalty;
            sol.objective_trace.push_back(sol.objective);
            sol.rank = tsvd.rank;
            sol.iterations = iter;

            const double step = (w_new - w_old).squaredNorm();
            const double base = w_old.squaredNorm();
            const double rel = base > 0 ? step / base : (step > 0 ? 1.0 : 0.0);
            w_old = std::move(w_new);
            if (rel < spec.epsilon) {
                sol.converged = true;
                break;
            }
        }

        sol.W = w_old;
        solutions.push_back(std::move(sol));
    }
    return solutions;
}

}  // namespace detail

namespace {

void require_orthonormal(const BasisMatrix& basis) {
    if (!basis.orthonormal)
        throw ContractError("solver requires an orthonormalized basis");
}

std::vector<SparseMatrix::Entry> centered_cells(const SparseMatrix& y,
                                                const std::optional<Eigen::VectorXd>& mean) {
    if (!mean) return y.entries();
    if (static_cast<std::size_t>(mean->size()) != y.n_cols())
        throw DimensionError("mean curve length does not match the grid");
    std::vector<SparseMatrix::Entry> cells = y.entries();
    for (SparseMatrix::Entry& e : cells)
        e.value -= (*mean)[static_cast<Eigen::Index>(e.col)];
    return cells;
}

}  // namespace

FitPath soft_impute(const SparseMatrix& y, const BasisMatrix& basis,
                    const LambdaPath& path, double epsilon, int max_iter,
                    const std::optional<Eigen::VectorXd>& mean_curve) {
    require_orthonormal(basis);
    if (static_cast<std::size_t>(basis.values.rows()) != y.n_cols())
        throw DimensionError("basis grid does not match the data columns");

    FitPath fit;
    fit.basis = basis;
    fit.epsilon = epsilon;
    fit.max_iter = max_iter;
    fit.kind = Thresholding::soft;
    fit.mean_curve = mean_curve;
    fit.empty_pattern = y.n_observed() == 0;

    detail::PathSolveSpec spec;
    spec.kind = Thresholding::soft;
    spec.epsilon = epsilon;
    spec.max_iter = max_iter;
    fit.solutions =
        detail::solve_path(centered_cells(y, mean_curve), y.n_rows(), basis.values, path, spec);
    return fit;
}

FitPath hard_impute(const SparseMatrix& y, const BasisMatrix& basis,
                    const LambdaPath& path, const FitPath& warm, double epsilon,
                    int max_iter) {
    require_orthonormal(basis);
    if (warm.solutions.size() != path.size())
        throw ConfigError("warm-start fit does not cover the lambda path");
    std::vector<Eigen::MatrixXd> starts;
    starts.reserve(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (warm.solutions[i].lambda != path.values[i])
            throw ConfigError("warm-start lambda path differs from the requested path");
        starts.push_back(warm.solutions[i].W);
    }

    FitPath fit;
    fit.basis = basis;
    fit.epsilon = epsilon;
    fit.max_iter = max_iter;
    fit.kind = Thresholding::hard;
    fit.mean_curve = warm.mean_curve;
    fit.empty_pattern = y.n_observed() == 0;

    detail::PathSolveSpec spec;
    spec.kind = Thresholding::hard;
    spec.epsilon = epsilon;
    spec.max_iter = max_iter;
    spec.per_lambda_start = &starts;
    fit.solutions = detail::solve_path(centered_cells(y, warm.mean_curve), y.n_rows(),
                                       basis.values, path, spec);
    return fit;
}

Eigen::MatrixXd impute(const CoefficientMatrix& coef) {
    Eigen::MatrixXd curves = coef.W * coef.basis.values.transpose();
    if (coef.mean_curve) {
        if (coef.mean_curve->size() != curves.cols())
            throw DimensionError("mean curve length does not match the grid");
        curves.rowwise() += coef.mean_curve->transpose();
    }
    return curves;
}

Eigen::MatrixXd impute(const CoefficientMatrix& coef, const std::vector<std::size_t>& rows) {
    const Eigen::MatrixXd full = impute(coef);
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), full.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= static_cast<std::size_t>(full.rows())) {
            std::ostringstream os;
            os << "unknown row " << rows[i] << " (have " << full.rows() << ")";
            throw IndexError(os.str());
        }
        out.row(static_cast<Eigen::Index>(i)) = full.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

FitPath refit_with_new_data(const FitPath& fit, const SparseMatrix& y_new, RefitMode mode) {
    if (fit.solutions.empty()) throw ConfigError("cannot refit an empty fit");
    const auto n_old = static_cast<std::size_t>(fit.solutions.front().W.rows());
    const Eigen::Index k = fit.solutions.front().W.cols();

    if (mode == RefitMode::new_observations) {
        if (y_new.n_rows() != n_old)
            throw DimensionError("new_observations mode requires an unchanged subject count");
    } else {
        if (y_new.n_rows() < n_old)
            throw DimensionError("new_subjects mode cannot drop existing subjects");
        int required = 0;
        for (const LambdaSolution& s : fit.solutions) required = std::max(required, s.rank);
        const std::vector<std::size_t> counts = y_new.row_counts();
        for (std::size_t r = n_old; r < y_new.n_rows(); ++r) {
            if (counts[r] < static_cast<std::size_t>(required)) {
                std::ostringstream os;
                os << "new subject row " << r << " has " << counts[r]
                   << " observations; needs at least " << required
                   << " (the rank of the fit)";
                throw PreconditionError(os.str());
            }
        }
    }

    const auto n_new = static_cast<Eigen::Index>(y_new.n_rows());
    std::vector<double> lambdas;
    std::vector<Eigen::MatrixXd> starts;
    for (const LambdaSolution& s : fit.solutions) {
        lambdas.push_back(s.lambda);
        Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n_new, k);
        w.topRows(static_cast<Eigen::Index>(n_old)) = s.W;
        starts.push_back(std::move(w));
    }
    const LambdaPath path = LambdaPath::from_values(std::move(lambdas));

    FitPath out;
    out.basis = fit.basis;
    out.epsilon = fit.epsilon;
    out.max_iter = fit.max_iter;
    out.kind = fit.kind;
    out.mean_curve = fit.mean_curve;
    out.empty_pattern = y_new.n_observed() == 0;

    detail::PathSolveSpec spec;
    spec.kind = fit.kind;
    spec.epsilon = fit.epsilon;
    spec.max_iter = fit.max_iter;
    spec.per_lambda_start = &starts;
    out.solutions = detail::solve_path(centered_cells(y_new, fit.mean_curve), y_new.n_rows(),
                                       fit.basis.values, path, spec);
    return out;
}

Eigen::VectorXd estimate_mean_curve(const SparseMatrix& y, const BasisMatrix& basis,
                                    double ridge) {
    const Eigen::MatrixXd& b = basis.values;
    if (static_cast<std::size_t>(b.rows()) != y.n_cols())
        throw DimensionError("basis grid does not match the data columns");
    const Eigen::Index k = b.cols();
    if (y.n_observed() == 0) return Eigen::VectorXd::Zero(b.rows());

    Eigen::MatrixXd normal = ridge * Eigen::MatrixXd::Identity(k, k);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
    for (const SparseMatrix::Entry& e : y.entries()) {
        const auto row = b.row(static_cast<Eigen::Index>(e.col));
        normal += row.transpose() * row;
        rhs += e.value * row.transpose();
    }
    const Eigen::VectorXd coef = normal.ldlt().solve(rhs);
    return b * coef;
}

SparseMatrix subtract_curve(const SparseMatrix& y, const Eigen::VectorXd& curve) {
    if (static_cast<std::size_t>(curve.size()) != y.n_cols())
        throw DimensionError("curve length does not match the grid");
    std::vector<SparseMatrix::Entry> cells = y.entries();
    for (SparseMatrix::Entry& e : cells)
        e.value -= curve[static_cast<Eigen::Index>(e.col)];
    return SparseMatrix(y.n_rows(), y.n_cols(), std::move(cells), y.grid());
}

}  // namespace traj
