#include "trajcomplete/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "trajcomplete/csv.hpp"

namespace traj {

double mse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth,
           const std::vector<std::size_t>& rows) {
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
        throw DimensionError("prediction and truth shapes disagree");
    if (rows.empty()) throw ArgumentError("row subset must be non-empty");
    double total = 0.0;
    for (const std::size_t r : rows) {
        if (r >= static_cast<std::size_t>(predicted.rows()))
            throw IndexError("row subset exceeds the matrix");
        total += (predicted.row(static_cast<Eigen::Index>(r)) -
                  truth.row(static_cast<Eigen::Index>(r)))
                     .squaredNorm();
    }
    return total / (static_cast<double>(predicted.cols()) * static_cast<double>(rows.size()));
}

double mse(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth,
           const std::vector<CellIndex>& cells) {
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols())
        throw DimensionError("prediction and truth shapes disagree");
    if (cells.empty()) throw ArgumentError("cell subset must be non-empty");
    double total = 0.0;
    for (const CellIndex& c : cells) {
        const auto i = static_cast<Eigen::Index>(c.row);
        const auto j = static_cast<Eigen::Index>(c.col);
        const double d = predicted(i, j) - truth(i, j);
        total += d * d;
    }
    return total / static_cast<double>(cells.size());
}

namespace {

double observed_value(const SparseMatrix& y, const CellIndex& cell) {
    const auto& entries = y.entries();
    auto it = std::lower_bound(entries.begin(), entries.end(), cell,
                               [](const SparseMatrix::Entry& e, const CellIndex& c) {
                                   return e.row != c.row ? e.row < c.row : e.col < c.col;
                               });
    if (it == entries.end() || it->row != cell.row || it->col != cell.col)
        throw IndexError("cell is not observed in the data");
    return it->value;
}

}  // namespace

double mse_observed(const Eigen::MatrixXd& predicted, const SparseMatrix& y,
                    const std::vector<CellIndex>& cells) {
    if (static_cast<std::size_t>(predicted.rows()) != y.n_rows() ||
        static_cast<std::size_t>(predicted.cols()) != y.n_cols())
        throw DimensionError("prediction shape does not match the data");
    if (cells.empty()) throw ArgumentError("cell subset must be non-empty");
    double total = 0.0;
    for (const CellIndex& c : cells) {
        const double d = predicted(static_cast<Eigen::Index>(c.row),
                                   static_cast<Eigen::Index>(c.col)) -
                         observed_value(y, c);
        total += d * d;
    }
    return total / static_cast<double>(cells.size());
}

Eigen::VectorXd null_model(const SparseMatrix& y) {
    if (y.n_observed() == 0) throw DataError("cannot build a null model without observations");
    const auto t = static_cast<Eigen::Index>(y.n_cols());
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(t);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(t);
    for (const SparseMatrix::Entry& e : y.entries()) {
        sums[static_cast<Eigen::Index>(e.col)] += e.value;
        counts[static_cast<Eigen::Index>(e.col)] += 1.0;
    }

    Eigen::VectorXd curve(t);
    std::vector<Eigen::Index> known;
    for (Eigen::Index j = 0; j < t; ++j)
        if (counts[j] > 0) {
            curve[j] = sums[j] / counts[j];
            known.push_back(j);
        }

    for (Eigen::Index j = 0; j < t; ++j) {
        if (counts[j] > 0) continue;
        const auto next = std::lower_bound(known.begin(), known.end(), j);
        if (next == known.begin()) {
            curve[j] = curve[known.front()];  // constant extension left
        } else if (next == known.end()) {
            curve[j] = curve[known.back()];  // constant extension right
        } else {
            const Eigen::Index hi = *next;
            const Eigen::Index lo = *(next - 1);
            const double w = static_cast<double>(j - lo) / static_cast<double>(hi - lo);
            curve[j] = (1.0 - w) * curve[lo] + w * curve[hi];
        }
    }
    return curve;
}

std::string to_string(CvMethod method) {
    switch (method) {
        case CvMethod::soft: return "soft";
        case CvMethod::hard: return "hard";
        case CvMethod::regression: return "regression";
        case CvMethod::multivariate: return "multivariate";
    }
    return "unknown";
}

namespace {

struct Prediction {
    Eigen::MatrixXd curves;
    double lambda = 0.0;
    std::optional<double> step1_lambda;
    std::optional<int> requested_rank;
    int rank = 0;
    bool converged = true;
};

std::vector<double> descending_unique(std::vector<double> values) {
    std::sort(values.begin(), values.end(), std::greater<>());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    return values;
}

// Threshold levels that retain exactly the requested ranks of P_Omega(Y) B.
std::vector<double> ranks_to_lambdas(const std::vector<int>& ranks,
                                     const SparseMatrix& y, const BasisMatrix& basis) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(y.to_dense() * basis.values);
    const Eigen::VectorXd& d = svd.singularValues();
    std::vector<double> lambdas;
    double prev = std::numeric_limits<double>::infinity();
    for (const int r : ranks) {
        if (r < 1 || r > d.size())
            throw ConfigError("requested rank outside 1..K");
        double lambda = r < d.size() ? 0.5 * (d[r - 1] + d[r]) : 0.5 * d[r - 1];
        if (lambda >= prev) lambda = prev * (1.0 - 1e-12);
        lambdas.push_back(lambda);
        prev = lambda;
    }
    return lambdas;
}

struct MethodContext {
    const CvOptions& options;
    const BasisMatrix& basis;
};

// Fit everything the method needs on `data` and return per-candidate
// predictions in strongest-regularization-first order.
std::vector<Prediction> candidate_predictions(const SparseMatrix& data,
                                              const MethodContext& ctx,
                                              std::vector<std::vector<double>>* traces) {
    const CvOptions& opt = ctx.options;
    const BasisMatrix& basis = ctx.basis;
    std::optional<Eigen::VectorXd> mean;
    if (opt.center) mean = estimate_mean_curve(data, basis);

    const auto collect = [&](const std::vector<LambdaSolution>& sols) {
        if (!traces) return;
        for (const LambdaSolution& s : sols) traces->push_back(s.objective_trace);
    };

    std::vector<Prediction> preds;

    if (opt.method == CvMethod::soft || opt.method == CvMethod::hard) {
        std::vector<double> lambdas;
        std::vector<std::optional<int>> ranks;
        if (opt.method == CvMethod::hard && !opt.rank_grid.empty()) {
            std::vector<int> requested = opt.rank_grid;
            std::sort(requested.begin(), requested.end());
            requested.erase(std::unique(requested.begin(), requested.end()),
                            requested.end());
            lambdas = ranks_to_lambdas(requested, data, basis);
            for (const int r : requested) ranks.emplace_back(r);
        } else {
            lambdas = descending_unique(opt.lambda_grid);
            ranks.assign(lambdas.size(), std::nullopt);
        }
        if (lambdas.empty()) throw ConfigError("empty candidate grid");

        const LambdaPath path = LambdaPath::from_values(lambdas);
        const FitPath soft = soft_impute(data, basis, path, opt.epsilon, opt.max_iter, mean);
        collect(soft.solutions);
        const FitPath* fit = &soft;
        std::optional<FitPath> hard;
        if (opt.method == CvMethod::hard) {
            hard = hard_impute(data, basis, path, soft, opt.epsilon, opt.max_iter);
            collect(hard->solutions);
            fit = &*hard;
        }
        for (std::size_t i = 0; i < fit->solutions.size(); ++i) {
            Prediction p;
            p.curves = impute(fit->coefficients(i));
            p.lambda = fit->solutions[i].lambda;
            p.requested_rank = ranks[i];
            p.rank = fit->solutions[i].rank;
            p.converged = fit->solutions[i].converged;
            preds.push_back(std::move(p));
        }
        return preds;
    }

    if (opt.method == CvMethod::regression) {
        if (!opt.covariates) throw ConfigError("regression method needs covariates");
        std::vector<double> step2 = descending_unique(opt.lambda_grid);
        if (step2.empty()) throw ConfigError("empty candidate grid");
        std::vector<double> step1 = descending_unique(opt.step1_grid);
        if (step1.empty())
            step1 = {step2[step2.size() / 2]};  // single default step-1 level

        const LambdaPath path = LambdaPath::from_values(step2);
        const SparseMatrix fit_data = mean ? subtract_curve(data, *mean) : data;

        const auto run_step1 = [&](double s1) {
            return sparse_longitudinal_regression(fit_data, basis, *opt.covariates, path,
                                                  s1, opt.epsilon, opt.max_iter,
                                                  opt.d2_override);
        };

        std::vector<SparseLongitudinalRegression> fits(step1.size());
        if (opt.jobs > 1 && step1.size() > 1) {
            std::vector<std::future<SparseLongitudinalRegression>> futures;
            futures.reserve(step1.size());
            for (const double s1 : step1)
                futures.push_back(std::async(std::launch::async, run_step1, s1));
            for (std::size_t i = 0; i < futures.size(); ++i) fits[i] = futures[i].get();
        } else {
            for (std::size_t i = 0; i < step1.size(); ++i) fits[i] = run_step1(step1[i]);
        }

        for (std::size_t si = 0; si < step1.size(); ++si) {
            const SparseLongitudinalRegression& slr = fits[si];
            for (const RegressionModel& m : slr.models) {
                if (traces) traces->push_back(m.objective_trace);
                Prediction p;
                p.curves = slr.scores * m.A * basis.values.transpose();
                if (mean) p.curves.rowwise() += mean->transpose();
                p.lambda = *m.lambda;
                p.step1_lambda = step1[si];
                Eigen::JacobiSVD<Eigen::MatrixXd> asvd(m.A);
                const Eigen::VectorXd& d = asvd.singularValues();
                const double floor = d.size() > 0 ? d[0] * 1e-10 : 0.0;
                p.rank = 0;
                for (Eigen::Index i = 0; i < d.size(); ++i)
                    if (d[i] > floor && d[i] > 0.0) p.rank = static_cast<int>(i) + 1;
                p.converged = m.converged;
                preds.push_back(std::move(p));
            }
        }
        return preds;
    }

    // multivariate: covariate blocks plus the response as the last block
    if (!opt.covariates) throw ConfigError("multivariate method needs covariates");
    std::vector<double> lambdas = descending_unique(opt.lambda_grid);
    if (lambdas.empty()) throw ConfigError("empty candidate grid");

    std::vector<DesignBlock> blocks = opt.covariates->blocks();
    DesignBlock response;
    response.data = mean ? subtract_curve(data, *mean) : data;
    response.basis = basis;
    response.scale = opt.response_scale;
    response.label = "response";
    blocks.push_back(std::move(response));
    const StackedDesign design(std::move(blocks));
    const std::size_t response_index = design.blocks().size() - 1;

    const LambdaPath path = LambdaPath::from_values(lambdas);
    const MultivariateFit fit = multivariate_impute(design, path, opt.epsilon, opt.max_iter);
    collect(fit.solutions);
    for (std::size_t i = 0; i < fit.solutions.size(); ++i) {
        Prediction p;
        p.curves = fit.block_curves(design, i, response_index);
        if (mean) p.curves.rowwise() += mean->transpose();
        p.lambda = fit.solutions[i].lambda;
        p.rank = fit.embeddings[i].rank;
        p.converged = fit.solutions[i].converged;
        preds.push_back(std::move(p));
    }
    return preds;
}

}  // namespace

CvReport cross_validate(const SparseMatrix& y, const BasisMatrix& basis,
                        const CvOptions& options, const SplitAssignment& assignment,
                        std::uint64_t seed, const Eigen::MatrixXd* truth) {
    CvReport report;
    report.method = options.method;
    report.seed = seed;

    const SparseMatrix y_train = y.restrict_to(assignment.train);
    std::vector<CellIndex> train_val = assignment.train;
    train_val.insert(train_val.end(), assignment.validation.begin(),
                     assignment.validation.end());
    const SparseMatrix y_trainval = y.restrict_to(train_val);

    const MethodContext ctx{options, basis};
    const std::vector<Prediction> preds =
        candidate_predictions(y_train, ctx, &report.objective_traces);

    for (const Prediction& p : preds) {
        CvCandidate c;
        c.lambda = p.lambda;
        c.step1_lambda = p.step1_lambda;
        c.requested_rank = p.requested_rank;
        c.rank = p.rank;
        c.converged = p.converged;
        c.validation_mse = assignment.validation.empty()
                               ? std::numeric_limits<double>::quiet_NaN()
                               : mse_observed(p.curves, y, assignment.validation);
        report.candidates.push_back(c);
    }

    // Strongest regularization appears first, so strict < keeps it on ties.
    std::size_t best = 0;
    for (std::size_t i = 1; i < report.candidates.size(); ++i)
        if (report.candidates[i].validation_mse < report.candidates[best].validation_mse)
            best = i;
    report.selected_index = best;

    const std::vector<Prediction> refit =
        candidate_predictions(y_trainval, ctx, &report.objective_traces);
    const Prediction& final_pred = refit.at(best);
    report.selected_prediction = final_pred.curves;

    if (!assignment.test.empty()) {
        report.test_mse = mse_observed(final_pred.curves, y, assignment.test);
        const Eigen::VectorXd base = null_model(y_trainval);
        const Eigen::MatrixXd base_curves =
            base.transpose().replicate(final_pred.curves.rows(), 1);
        report.null_test_mse = mse_observed(base_curves, y, assignment.test);
    } else {
        report.test_mse = std::numeric_limits<double>::quiet_NaN();
    }

    if (truth) {
        std::vector<std::size_t> all_rows(y.n_rows());
        for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = i;
        report.truth_mse = mse(final_pred.curves, *truth, all_rows);
    }
    return report;
}

std::string CvReport::to_json() const {
    nlohmann::json j;
    j["method"] = to_string(method);
    j["seed"] = seed;
    nlohmann::json grid = nlohmann::json::array();
    nlohmann::json val = nlohmann::json::array();
    for (const CvCandidate& c : candidates) {
        grid.push_back(c.lambda);
        val.push_back(c.validation_mse);
    }
    j["grid"] = grid;
    j["validation_mse"] = val;
    j["selected"] = selected().lambda;
    if (selected().step1_lambda) j["selected_step1"] = *selected().step1_lambda;
    if (selected().requested_rank) j["selected_requested_rank"] = *selected().requested_rank;
    j["selected_rank"] = selected().rank;
    j["test_mse"] = test_mse;
    if (truth_mse) j["truth_mse"] = *truth_mse;
    if (null_test_mse) j["null_test_mse"] = *null_test_mse;
    return j.dump(2);
}

std::string CvReport::candidates_csv() const {
    std::ostringstream os;
    os << "lambda,step1_lambda,requested_rank,validation_mse,rank,converged\n";
    for (const CvCandidate& c : candidates) {
        os << format_double(c.lambda) << ',';
        if (c.step1_lambda) os << format_double(*c.step1_lambda);
        os << ',';
        if (c.requested_rank) os << *c.requested_rank;
        os << ',' << format_double(c.validation_mse) << ',' << c.rank << ','
           << (c.converged ? "true" : "false") << '\n';
    }
    return os.str();
}

}  // namespace traj
