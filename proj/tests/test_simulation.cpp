#include <doctest.h>

#include "oracles.hpp"
#include "trajcomplete/simulation.hpp"

using namespace traj;

TEST_CASE("gen_covariance: spectrum is reproduced exactly") {
    Rng rng(90);

    SUBCASE("rank-1 spectrum") {
        Eigen::VectorXd r = Eigen::VectorXd::Zero(5);
        r[0] = 1.0;
        const Eigen::MatrixXd q = gen_covariance(r, rng);
        CHECK(q.trace() == doctest::Approx(1.0).epsilon(1e-12));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q);
        CHECK(eig.eigenvalues().maxCoeff() == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(std::abs(eig.eigenvalues()[3]) < 1e-10);
    }

    SUBCASE("all-ones spectrum gives the identity") {
        const Eigen::MatrixXd q = gen_covariance(Eigen::VectorXd::Ones(4), rng);
        CHECK((q - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
    }

    SUBCASE("default spectrum eigenvalues match the published sequence") {
        const Eigen::VectorXd r = default_spectrum_a(7);
        CHECK(r[0] == doctest::Approx(1.0));
        CHECK(r[1] == doctest::Approx(0.4));
        CHECK(r[2] == doctest::Approx(0.005));
        for (int j = 3; j < 7; ++j) CHECK(r[j] == doctest::Approx(0.1 * std::exp(-j)));
        const Eigen::MatrixXd q = gen_covariance(r, rng);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q);
        Eigen::VectorXd sorted = eig.eigenvalues().reverse();
        for (int j = 0; j < 7; ++j) CHECK(std::abs(sorted[j] - r[j]) < 1e-10);
    }

    SUBCASE("negative entries are rejected") {
        Eigen::VectorXd r = Eigen::VectorXd::Ones(3);
        r[1] = -0.1;
        CHECK_THROWS_AS(gen_covariance(r, rng), ArgumentError);
    }
}

TEST_CASE("gen_covariance output is symmetric PSD") {
    Rng rng(91);
    for (int c = 0; c < 50; ++c) {
        Eigen::VectorXd r(6);
        for (int i = 0; i < 6; ++i) r[i] = rng.uniform(0.0, 2.0);
        const Eigen::MatrixXd q = gen_covariance(r, rng);
        CHECK((q - q.transpose()).cwiseAbs().maxCoeff() < 1e-12);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(q);
        CHECK(eig.eigenvalues().minCoeff() > -1e-10);
    }
}

TEST_CASE("gen_cohort: degenerate covariance pins the group means") {
    Rng rng(92);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
    const Eigen::MatrixXd cohort = gen_cohort(zero, zero, 4, 9, rng);
    // first 3 rows equal 2 mu, rest equal -mu; difference exactly 3 mu
    for (int i = 1; i < 3; ++i)
        CHECK((cohort.row(i) - cohort.row(0)).cwiseAbs().maxCoeff() == 0.0);
    for (int i = 4; i < 9; ++i)
        CHECK((cohort.row(i) - cohort.row(3)).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::VectorXd mu = -cohort.row(3).transpose();
    CHECK((cohort.row(0).transpose() - 2.0 * mu).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("gen_cohort: floor rule for the group boundary") {
    Rng rng(93);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(3);
    const Eigen::MatrixXd cohort = gen_cohort(zero, zero, 3, 3, rng);
    // exactly one row in group one
    CHECK((cohort.row(1) - cohort.row(2)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((cohort.row(0) + 2.0 * cohort.row(1)).cwiseAbs().maxCoeff() < 1e-15);
    CHECK_THROWS_AS(gen_cohort(zero, zero, 3, 2, rng), ArgumentError);
}

TEST_CASE("gen_cohort: both group means estimate the shared direction (LLN)") {
    Rng rng(94);
    const int n = 30000;
    const Eigen::VectorXd ra = default_spectrum_a(5);
    const Eigen::VectorXd rb = default_spectrum_b(5);
    const Eigen::MatrixXd cohort = gen_cohort(ra, rb, 5, n, rng);
    const int n1 = n / 3;
    const Eigen::VectorXd mean1 =
        cohort.topRows(n1).colwise().mean().transpose();  // estimates 2 mu
    const Eigen::VectorXd mean2 =
        cohort.bottomRows(n - n1).colwise().mean().transpose();  // estimates -mu
    const Eigen::VectorXd diff = mean1 - (-2.0 * mean2);  // both estimate 2 mu
    const double se = std::sqrt(ra.sum() / n1 + 4.0 * rb.sum() / (n - n1));
    CHECK(diff.cwiseAbs().maxCoeff() < 5.0 * se);
}

TEST_CASE("simulate_study: no noise and full observation reproduce the truth") {
    SimulationSpec spec;
    spec.n_subjects = 12;
    spec.noise_sd = 0.0;
    spec.obs_fraction = 1.0;
    spec.seed = 3;
    const SimulatedStudy study = simulate_study(spec);
    for (const std::string& var : study.variable_names) {
        const Eigen::MatrixXd dense = study.sparse.at(var).to_dense();
        CHECK((dense - study.truth.at(var)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("simulate_study: observed counts sit in the binomial range") {
    SimulationSpec base;
    base.n_subjects = 20;
    const double p = base.obs_fraction;
    const double cells = 20.0 * base.t_fit;
    const double mean = cells * p;
    const double sd = std::sqrt(cells * p * (1 - p));
    for (const std::string var : {"x1", "x2", "y"}) {
        double total = 0.0;
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            SimulationSpec spec = base;
            spec.seed = seed;
            total += static_cast<double>(simulate_study(spec).sparse.at(var).n_observed());
        }
        const double avg = total / 20.0;
        CHECK(std::abs(avg - mean) < 2.58 * sd / std::sqrt(20.0));
    }
}

TEST_CASE("simulate_study is bit-reproducible") {
    SimulationSpec spec;
    spec.n_subjects = 15;
    spec.seed = 77;
    const SimulatedStudy a = simulate_study(spec);
    const SimulatedStudy b = simulate_study(spec);
    REQUIRE(a.records.size() == b.records.size());
    for (std::size_t i = 0; i < a.records.size(); ++i) {
        CHECK(a.records[i].subject_id == b.records[i].subject_id);
        CHECK(a.records[i].variable == b.records[i].variable);
        CHECK(a.records[i].time == b.records[i].time);
        CHECK(a.records[i].value == b.records[i].value);  // exact
    }
    for (const std::string& var : a.variable_names)
        CHECK((a.coefficients.at(var) - b.coefficients.at(var)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("simulate_study: truth curves lie in the span of the basis") {
    SimulationSpec spec;
    spec.n_subjects = 10;
    spec.seed = 5;
    const SimulatedStudy study = simulate_study(spec);
    const BasisMatrix on = study.fit_basis.orthonormal
                               ? study.fit_basis
                               : orthonormalize(study.fit_basis);
    const Eigen::MatrixXd projector =
        Eigen::MatrixXd::Identity(spec.t_fit, spec.t_fit) -
        on.values * on.values.transpose();
    for (const std::string& var : study.variable_names)
        CHECK((study.truth.at(var) * projector).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("simulate_study: shared mask makes observation patterns coincide") {
    SimulationSpec spec;
    spec.n_subjects = 10;
    spec.shared_mask = true;
    spec.seed = 9;
    const SimulatedStudy study = simulate_study(spec);
    const auto pattern = [](const SparseMatrix& m) {
        std::vector<std::pair<std::size_t, std::size_t>> cells;
        for (const auto& e : m.entries()) cells.emplace_back(e.row, e.col);
        return cells;
    };
    CHECK(pattern(study.sparse.at("x1")) == pattern(study.sparse.at("x2")));
    CHECK(pattern(study.sparse.at("x1")) == pattern(study.sparse.at("y")));
}

TEST_CASE("simulate_study: y coefficients are the sum of the three processes") {
    SimulationSpec spec;
    spec.n_subjects = 9;
    spec.seed = 13;
    spec.shared_structure = false;  // also exercise the independent variant
    const SimulatedStudy study = simulate_study(spec);
    // y = z + x1 + x2, so y - x1 - x2 must be a valid cohort draw (finite)
    const Eigen::MatrixXd z =
        study.coefficients.at("y") - study.coefficients.at("x1") - study.coefficients.at("x2");
    CHECK(z.allFinite());
    CHECK(z.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("simulation spec validation") {
    SimulationSpec spec;
    spec.n_subjects = 2;
    CHECK_THROWS_AS(simulate_study(spec), ArgumentError);
    spec.n_subjects = 10;
    spec.obs_fraction = 0.0;
    CHECK_THROWS_AS(simulate_study(spec), ArgumentError);
    spec.obs_fraction = 0.5;
    spec.noise_sd = -1.0;
    CHECK_THROWS_AS(simulate_study(spec), ArgumentError);
}
