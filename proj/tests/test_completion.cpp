#include <doctest.h>

#include "oracles.hpp"
#include "trajcomplete/completion.hpp"

using namespace traj;

namespace {

BasisMatrix orthonormal_basis(std::size_t t, int k, Rng& rng) {
    BasisMatrix b;
    b.grid = TimeGrid::uniform(0.0, 1.0, t);
    b.values = oracles::random_matrix(static_cast<Eigen::Index>(t), k, rng);
    return orthonormalize(b);
}

SparseMatrix dense_as_sparse(const Eigen::MatrixXd& y, const TimeGrid& grid) {
    std::vector<SparseMatrix::Entry> cells;
    for (Eigen::Index i = 0; i < y.rows(); ++i)
        for (Eigen::Index j = 0; j < y.cols(); ++j)
            cells.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                             y(i, j)});
    return SparseMatrix(static_cast<std::size_t>(y.rows()),
                        static_cast<std::size_t>(y.cols()), std::move(cells), grid);
}

SparseMatrix masked_sparse(const Eigen::MatrixXd& y, const TimeGrid& grid, double density,
                           Rng& rng) {
    std::vector<SparseMatrix::Entry> cells;
    for (Eigen::Index i = 0; i < y.rows(); ++i)
        for (Eigen::Index j = 0; j < y.cols(); ++j)
            if (rng.bernoulli(density))
                cells.push_back({static_cast<std::size_t>(i),
                                 static_cast<std::size_t>(j), y(i, j)});
    return SparseMatrix(static_cast<std::size_t>(y.rows()),
                        static_cast<std::size_t>(y.cols()), std::move(cells), grid);
}

}  // namespace

TEST_CASE("objective: zero coefficients give half the observed sum of squares") {
    Rng rng(20);
    const BasisMatrix b = orthonormal_basis(9, 3, rng);
    const SparseMatrix y = masked_sparse(oracles::random_matrix(6, 9, rng), b.grid, 0.5, rng);
    double ss = 0.0;
    for (const auto& e : y.entries()) ss += e.value * e.value;
    const CoefficientMatrix w0{Eigen::MatrixXd::Zero(6, 3), b, std::nullopt};
    CHECK(objective(w0, y, 2.0) == doctest::Approx(0.5 * ss));
}

TEST_CASE("objective: matches an independent recomputation") {
    Rng rng(21);
    const BasisMatrix b = orthonormal_basis(8, 3, rng);
    const SparseMatrix y = masked_sparse(oracles::random_matrix(5, 8, rng), b.grid, 0.6, rng);
    const Eigen::MatrixXd w = oracles::random_matrix(5, 3, rng);
    const double lambda = 0.7;

    const Eigen::MatrixXd resid = y.project(y.to_dense() - w * b.values.transpose());
    const double expected = 0.5 * resid.squaredNorm() + lambda * oracles::nuclear_norm(w);
    CHECK(objective({w, b, std::nullopt}, y, lambda) == doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("soft_impute: fully observed data hits the closed form in one step") {
    Rng rng(22);
    const BasisMatrix b = orthonormal_basis(51, 7, rng);
    const Eigen::MatrixXd y_dense = oracles::random_matrix(20, 51, rng);
    const SparseMatrix y = dense_as_sparse(y_dense, b.grid);
    const Eigen::MatrixXd yb = y_dense * b.values;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(yb);
    const double lambda = svd.singularValues()[2];

    const FitPath fit = soft_impute(y, b, LambdaPath::from_values({lambda}), 1e-9, 100);
    const Eigen::MatrixXd closed = soft_svt(yb, lambda).reconstruct();
    CHECK((fit.solutions[0].W - closed).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(fit.solutions[0].iterations <= 2);  // fixed point after the first update
}

TEST_CASE("soft_impute: empty pattern returns zeros with a warning flag") {
    Rng rng(23);
    const BasisMatrix b = orthonormal_basis(10, 3, rng);
    const SparseMatrix y(4, 10, {}, b.grid);
    const FitPath fit = soft_impute(y, b, LambdaPath::from_values({1.0, 0.5}), 1e-6, 50);
    CHECK(fit.empty_pattern);
    for (const auto& s : fit.solutions) CHECK(s.W.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("soft_impute: contract and argument errors") {
    Rng rng(24);
    BasisMatrix raw;
    raw.grid = TimeGrid::uniform(0.0, 1.0, 10);
    raw.values = oracles::random_matrix(10, 3, rng);
    const SparseMatrix y = masked_sparse(oracles::random_matrix(4, 10, rng), raw.grid, 0.5, rng);
    CHECK_THROWS_AS(soft_impute(y, raw, LambdaPath::from_values({1.0}), 1e-6, 50),
                    ContractError);
    const BasisMatrix b = orthonormalize(raw);
    CHECK_THROWS_AS(soft_impute(y, b, LambdaPath::from_values({1.0}), 0.0, 50),
                    ArgumentError);
    CHECK_THROWS_AS(LambdaPath::from_values({1.0, 2.0}), ArgumentError);
    CHECK_THROWS_AS(LambdaPath::from_values({}), ArgumentError);
}

TEST_CASE("soft_impute: objective trace is non-increasing on random sparse instances") {
    Rng rng(25);
    for (int c = 0; c < 25; ++c) {
        const BasisMatrix b = orthonormal_basis(12, 4, rng);
        const Eigen::MatrixXd truth =
            oracles::random_matrix(8, 4, rng) * b.values.transpose();
        const SparseMatrix y = masked_sparse(truth, b.grid, 0.4, rng);
        if (y.n_observed() == 0) continue;
        const LambdaPath path = default_lambda_path(y, b, 5);
        const FitPath fit = soft_impute(y, b, path, 1e-6, 200);
        for (const auto& sol : fit.solutions) {
            for (std::size_t i = 1; i < sol.objective_trace.size(); ++i)
                CHECK(sol.objective_trace[i] <= sol.objective_trace[i - 1] + 1e-9);
            CHECK(sol.rank <= 4);
        }
    }
}

TEST_CASE("soft_impute: rank non-increasing along increasing lambda, fully observed") {
    Rng rng(26);
    const BasisMatrix b = orthonormal_basis(15, 5, rng);
    const Eigen::MatrixXd y_dense = oracles::random_matrix(10, 15, rng);
    const SparseMatrix y = dense_as_sparse(y_dense, b.grid);
    const LambdaPath path = default_lambda_path(y, b, 8);
    const FitPath fit = soft_impute(y, b, path, 1e-8, 200);
    // path is decreasing, so rank must be non-decreasing along it
    for (std::size_t i = 1; i < fit.solutions.size(); ++i)
        CHECK(fit.solutions[i].rank >= fit.solutions[i - 1].rank);
}

TEST_CASE("hard_impute: fully observed converges to the truncated SVD fit") {
    Rng rng(27);
    const BasisMatrix b = orthonormal_basis(20, 5, rng);
    const Eigen::MatrixXd y_dense = oracles::random_matrix(12, 20, rng);
    const SparseMatrix y = dense_as_sparse(y_dense, b.grid);
    const Eigen::MatrixXd yb = y_dense * b.values;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(yb, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd d = svd.singularValues();
    const double lambda = 0.5 * (d[2] + d[3]);  // keep rank 3

    const LambdaPath path = LambdaPath::from_values({lambda});
    const FitPath warm = soft_impute(y, b, path, 1e-9, 200);
    const FitPath fit = hard_impute(y, b, path, warm, 1e-9, 200);
    const Eigen::MatrixXd expected = svd.matrixU().leftCols(3) * d.head(3).asDiagonal() *
                                     svd.matrixV().leftCols(3).transpose();
    CHECK(fit.solutions[0].rank == 3);
    CHECK((fit.solutions[0].W - expected).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("hard_impute: threshold above the top singular value zeroes everything") {
    Rng rng(28);
    const BasisMatrix b = orthonormal_basis(10, 3, rng);
    const Eigen::MatrixXd y_dense = oracles::random_matrix(6, 10, rng);
    const SparseMatrix y = dense_as_sparse(y_dense, b.grid);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(y_dense * b.values);
    const double lambda = svd.singularValues()[0] * 1.01;
    const LambdaPath path = LambdaPath::from_values({lambda});
    const FitPath warm = soft_impute(y, b, path, 1e-8, 100);
    const FitPath fit = hard_impute(y, b, path, warm, 1e-8, 100);
    CHECK(fit.solutions[0].W.cwiseAbs().maxCoeff() == 0.0);
    CHECK(fit.solutions[0].rank == 0);
}

TEST_CASE("hard_impute: a fixed-point warm start exits after one iteration") {
    Rng rng(29);
    const BasisMatrix b = orthonormal_basis(14, 4, rng);
    const Eigen::MatrixXd truth = oracles::random_matrix(9, 4, rng) * b.values.transpose();
    const SparseMatrix y = masked_sparse(truth, b.grid, 0.6, rng);
    const LambdaPath path = default_lambda_path(y, b, 3);
    const FitPath warm = soft_impute(y, b, path, 1e-10, 500);
    const FitPath pass1 = hard_impute(y, b, path, warm, 1e-10, 500);
    const FitPath pass2 = hard_impute(y, b, path, pass1, 1e-10, 500);
    for (std::size_t i = 0; i < pass2.solutions.size(); ++i) {
        CHECK(pass2.solutions[i].iterations == 1);
        // epsilon bounds the squared relative step, so one extra iteration can
        // still move W by sqrt(epsilon) * ||W||
        const double budget =
            2e-5 * std::max(pass1.solutions[i].W.norm(), 1.0);
        CHECK((pass2.solutions[i].W - pass1.solutions[i].W).norm() < budget);
    }
}

TEST_CASE("hard_impute: path/warm mismatch is a configuration error") {
    Rng rng(30);
    const BasisMatrix b = orthonormal_basis(10, 3, rng);
    const SparseMatrix y = masked_sparse(oracles::random_matrix(5, 10, rng), b.grid, 0.5, rng);
    const FitPath warm = soft_impute(y, b, LambdaPath::from_values({2.0, 1.0}), 1e-6, 50);
    CHECK_THROWS_AS(hard_impute(y, b, LambdaPath::from_values({2.0}), warm, 1e-6, 50),
                    ConfigError);
    CHECK_THROWS_AS(hard_impute(y, b, LambdaPath::from_values({2.0, 0.5}), warm, 1e-6, 50),
                    ConfigError);
}

TEST_CASE("impute: zero coefficients give the zero (or mean) surface") {
    Rng rng(31);
    const BasisMatrix b = orthonormal_basis(10, 3, rng);
    CoefficientMatrix coef{Eigen::MatrixXd::Zero(4, 3), b, std::nullopt};
    CHECK(impute(coef).cwiseAbs().maxCoeff() == 0.0);
    coef.mean_curve = Eigen::VectorXd::Ones(10) * 2.5;
    CHECK((impute(coef).array() - 2.5).abs().maxCoeff() < 1e-12);
}

TEST_CASE("impute: square orthonormal basis is a rotation, lambda 0 reproduces data") {
    Rng rng(32);
    const BasisMatrix b = orthonormal_basis(6, 6, rng);
    const Eigen::MatrixXd y_dense = oracles::random_matrix(5, 6, rng);
    const CoefficientMatrix coef{y_dense * b.values, b, std::nullopt};
    CHECK((impute(coef) - y_dense).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("impute: row subsets and unknown rows") {
    Rng rng(33);
    const BasisMatrix b = orthonormal_basis(8, 3, rng);
    const CoefficientMatrix coef{oracles::random_matrix(4, 3, rng), b, std::nullopt};
    const Eigen::MatrixXd full = impute(coef);
    const Eigen::MatrixXd some = impute(coef, {3, 1});
    CHECK((some.row(0) - full.row(3)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((some.row(1) - full.row(1)).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(impute(coef, {4}), IndexError);
}

TEST_CASE("refit_with_new_data: unchanged data keeps the fit") {
    Rng rng(34);
    const BasisMatrix b = orthonormal_basis(12, 4, rng);
    const Eigen::MatrixXd truth = oracles::random_matrix(8, 4, rng) * b.values.transpose();
    const SparseMatrix y = masked_sparse(truth, b.grid, 0.5, rng);
    const LambdaPath path = default_lambda_path(y, b, 4);
    const FitPath fit = soft_impute(y, b, path, 1e-12, 1000);
    const FitPath refit = refit_with_new_data(fit, y, RefitMode::new_observations);
    for (std::size_t i = 0; i < fit.solutions.size(); ++i)
        CHECK((refit.solutions[i].W - fit.solutions[i].W).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("refit_with_new_data: extra observations do not hurt on average") {
    Rng rng(35);
    double delta_sum = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const BasisMatrix b = orthonormal_basis(15, 4, rng);
        const Eigen::MatrixXd w_true = oracles::random_matrix(10, 4, rng);
        const Eigen::MatrixXd truth = w_true * b.values.transpose();
        Eigen::MatrixXd noisy = truth;
        for (Eigen::Index i = 0; i < noisy.rows(); ++i)
            for (Eigen::Index j = 0; j < noisy.cols(); ++j) noisy(i, j) += 0.1 * rng.normal();

        // base data: 40%; extra data adds another disjoint 20%
        std::vector<SparseMatrix::Entry> base, extra;
        for (Eigen::Index i = 0; i < noisy.rows(); ++i)
            for (Eigen::Index j = 0; j < noisy.cols(); ++j) {
                const double u = rng.uniform01();
                const SparseMatrix::Entry e{static_cast<std::size_t>(i),
                                            static_cast<std::size_t>(j), noisy(i, j)};
                if (u < 0.4) base.push_back(e);
                else if (u < 0.6) extra.push_back(e);
            }
        const SparseMatrix y_base(10, 15, base, b.grid);
        std::vector<SparseMatrix::Entry> merged = base;
        merged.insert(merged.end(), extra.begin(), extra.end());
        const SparseMatrix y_more(10, 15, merged, b.grid);

        const LambdaPath path = default_lambda_path(y_base, b, 5);
        const FitPath fit = soft_impute(y_base, b, path, 1e-7, 300);
        const FitPath refit = refit_with_new_data(fit, y_more, RefitMode::new_observations);

        const std::size_t mid = path.size() / 2;
        const double before =
            (fit.solutions[mid].W * b.values.transpose() - truth).squaredNorm();
        const double after =
            (refit.solutions[mid].W * b.values.transpose() - truth).squaredNorm();
        delta_sum += before - after;
    }
    CHECK(delta_sum > 0.0);  // on average the richer data improves the fit
}

TEST_CASE("refit_with_new_data: duplicated subject converges to matching curves") {
    Rng rng(36);
    const BasisMatrix b = orthonormal_basis(14, 4, rng);
    const Eigen::MatrixXd truth = oracles::random_matrix(9, 4, rng) * b.values.transpose();
    const SparseMatrix y = masked_sparse(truth, b.grid, 0.7, rng);
    const LambdaPath path = default_lambda_path(y, b, 4);
    const FitPath fit = soft_impute(y, b, path, 1e-12, 2000);

    // new subject row 9 duplicates row 0's observations
    std::vector<SparseMatrix::Entry> cells = y.entries();
    for (const auto& e : y.entries())
        if (e.row == 0) cells.push_back({9, e.col, e.value});
    const SparseMatrix y_new(10, 14, std::move(cells), b.grid);

    const FitPath refit = refit_with_new_data(fit, y_new, RefitMode::new_subjects);
    for (const auto& sol : refit.solutions) {
        const Eigen::MatrixXd curves = sol.W * b.values.transpose();
        CHECK((curves.row(0) - curves.row(9)).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("refit_with_new_data: under-observed new subject names the requirement") {
    Rng rng(37);
    const BasisMatrix b = orthonormal_basis(12, 4, rng);
    const Eigen::MatrixXd truth = oracles::random_matrix(6, 4, rng) * b.values.transpose();
    const SparseMatrix y = dense_as_sparse(truth, b.grid);
    const LambdaPath path = LambdaPath::from_values({1e-6});
    const FitPath fit = soft_impute(y, b, path, 1e-8, 200);
    REQUIRE(fit.solutions[0].rank == 4);

    std::vector<SparseMatrix::Entry> cells = y.entries();
    cells.push_back({6, 0, 1.0});
    cells.push_back({6, 5, -1.0});  // two observations < rank 4
    const SparseMatrix y_new(7, 12, std::move(cells), b.grid);
    CHECK_THROWS_WITH_AS(refit_with_new_data(fit, y_new, RefitMode::new_subjects),
                         doctest::Contains("at least 4"), PreconditionError);
}

TEST_CASE("mean curve estimation and subtraction round trip") {
    Rng rng(38);
    const BasisMatrix b = orthonormal_basis(16, 4, rng);
    const Eigen::VectorXd coef = oracles::random_matrix(4, 1, rng);
    const Eigen::VectorXd mean_curve = b.values * coef;
    // every subject observes the same mean curve exactly
    std::vector<SparseMatrix::Entry> cells;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 16; ++j)
            if ((i + j) % 2 == 0)
                cells.push_back({i, j, mean_curve[static_cast<Eigen::Index>(j)]});
    const SparseMatrix y(5, 16, std::move(cells), b.grid);
    const Eigen::VectorXd estimated = estimate_mean_curve(y, b);
    CHECK((estimated - mean_curve).cwiseAbs().maxCoeff() < 1e-4);

    const SparseMatrix centered = subtract_curve(y, estimated);
    for (const auto& e : centered.entries()) CHECK(std::abs(e.value) < 1e-4);
}

TEST_CASE("default lambda path starts at the top singular value") {
    Rng rng(39);
    const BasisMatrix b = orthonormal_basis(12, 4, rng);
    const SparseMatrix y = masked_sparse(oracles::random_matrix(7, 12, rng), b.grid, 0.5, rng);
    const LambdaPath path = default_lambda_path(y, b, 10);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(y.to_dense() * b.values);
    CHECK(path.values.front() == doctest::Approx(svd.singularValues()[0]));
    CHECK(path.values.back() == doctest::Approx(svd.singularValues()[0] / 100.0));
    CHECK(path.size() == 10);
}

TEST_CASE("hard_impute: objective trace is non-increasing on random sparse instances") {
    Rng rng(40);
    for (int c = 0; c < 15; ++c) {
        const BasisMatrix b = orthonormal_basis(12, 4, rng);
        const Eigen::MatrixXd truth =
            oracles::random_matrix(8, 4, rng) * b.values.transpose();
        const SparseMatrix y = masked_sparse(truth, b.grid, 0.5, rng);
        if (y.n_observed() == 0) continue;
        const LambdaPath path = default_lambda_path(y, b, 4);
        const FitPath warm = soft_impute(y, b, path, 1e-6, 200);
        const FitPath fit = hard_impute(y, b, path, warm, 1e-6, 200);
        for (const auto& sol : fit.solutions)
            for (std::size_t i = 1; i < sol.objective_trace.size(); ++i)
                CHECK(sol.objective_trace[i] <= sol.objective_trace[i - 1] + 1e-9);
    }
}
