#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "trajcomplete/basis.hpp"
#include "trajcomplete/csv.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kWorkRoot = fs::temp_directory_path() / "trajc_cli_tests";

struct Workspace {
    fs::path dir;
    explicit Workspace(const std::string& name) : dir(kWorkRoot / name) {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    std::string operator/(const std::string& leaf) const { return (dir / leaf).string(); }
};

int run(const std::string& args, const std::string& log = "/dev/null") {
    const std::string cmd = std::string(TRAJC_BIN) + " " + args + " >" + log + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("simulate writes data, truth and manifest; identical across runs") {
    Workspace ws("simulate");
    REQUIRE(run("simulate --seed 4 --n 12 --out " + (ws / "a")) == 0);
    REQUIRE(run("simulate --seed 4 --n 12 --out " + (ws / "b")) == 0);
    CHECK(fs::exists(ws.dir / "a" / "data.csv"));
    CHECK(fs::exists(ws.dir / "a" / "truth.csv"));
    CHECK(fs::exists(ws.dir / "a" / "manifest.json"));
    CHECK(read_file(ws / "a/data.csv") == read_file(ws / "b/data.csv"));
    CHECK(read_file(ws / "a/truth.csv") == read_file(ws / "b/truth.csv"));

    // a different seed changes the data
    REQUIRE(run("simulate --seed 5 --n 12 --out " + (ws / "c")) == 0);
    CHECK(read_file(ws / "a/data.csv") != read_file(ws / "c/data.csv"));
}

TEST_CASE("rerun replays a manifest bit-identically") {
    Workspace ws("rerun");
    REQUIRE(run("simulate --seed 11 --n 10 --out " + (ws / "orig")) == 0);
    REQUIRE(run("rerun --manifest " + (ws / "orig/manifest.json") + " --out " +
                (ws / "replay")) == 0);
    CHECK(read_file(ws / "orig/data.csv") == read_file(ws / "replay/data.csv"));
    CHECK(read_file(ws / "orig/truth.csv") == read_file(ws / "replay/truth.csv"));
}

TEST_CASE("manifest with an unknown key is rejected") {
    Workspace ws("badmanifest");
    REQUIRE(run("simulate --seed 2 --n 10 --out " + (ws / "orig")) == 0);
    std::string manifest = read_file(ws / "orig/manifest.json");
    manifest.insert(manifest.find("\"seed\""), "\"bogus_key\": 1, ");
    {
        std::ofstream out(ws / "tampered.json");
        out << manifest;
    }
    CHECK(run("rerun --manifest " + (ws / "tampered.json")) == 1);
}

TEST_CASE("fit with lambda 0 on fully observed data equals the basis least squares") {
    Workspace ws("fitexact");

    // fully observed tiny dataset exactly on a uniform grid
    traj::Rng rng(42);
    const traj::TimeGrid grid = traj::TimeGrid::uniform(0.0, 1.0, 9);
    const Eigen::MatrixXd y_dense = oracles::random_matrix(4, 9, rng);
    std::vector<traj::ObservationRecord> records;
    const std::vector<std::string> ids = {"p1", "p2", "p3", "p4"};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 9; ++j)
            records.push_back({ids[i], "y", grid.points[j],
                               y_dense(static_cast<Eigen::Index>(i),
                                       static_cast<Eigen::Index>(j))});
    traj::write_long_csv(ws / "data.csv", records);

    REQUIRE(run("fit --in " + (ws / "data.csv") + " --out " + (ws / "fit") +
                " --var y --t 9 --k 4 --degree 3 --lambda-grid 0 --no-center") == 0);

    const traj::WideTable fitted = traj::read_wide_csv(ws / "fit/fitted_0.csv");
    const traj::BasisMatrix b =
        traj::orthonormalize(traj::make_bspline_basis(grid, 4, 3));
    const Eigen::MatrixXd expected = y_dense * b.values * b.values.transpose();
    CHECK((fitted.values - expected).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("fit then impute round trip") {
    Workspace ws("impute");
    REQUIRE(run("simulate --seed 6 --n 10 --out " + (ws / "d")) == 0);
    REQUIRE(run("fit --in " + (ws / "d/data.csv") + " --out " + (ws / "f") +
                " --var y --t-min 0 --t-max 1 --lambda-grid auto") == 0);
    REQUIRE(run("impute --fit " + (ws / "f") + " --out " + (ws / "i") +
                " --subjects s1,s3") == 0);
    const traj::WideTable wide = traj::read_wide_csv(ws / "i/imputed_wide.csv");
    REQUIRE(wide.subject_ids.size() == 2);
    CHECK(wide.subject_ids[0] == "s1");
    CHECK(wide.subject_ids[1] == "s3");
    CHECK(wide.values.allFinite());

    CHECK(run("impute --fit " + (ws / "f") + " --out " + (ws / "i2") +
              " --subjects nosuch") == 1);
}

TEST_CASE("cv runs are byte-identical and leave inputs untouched") {
    Workspace ws("cv");
    REQUIRE(run("simulate --seed 7 --n 16 --out " + (ws / "d")) == 0);
    const std::string before = read_file(ws / "d/data.csv");
    REQUIRE(run("cv --in " + (ws / "d/data.csv") + " --out " + (ws / "c1") +
                " --var y --method soft --grid 1.5,1.0,0.5 --t-min 0 --t-max 1"
                " --fractions 0.81,0.09,0.10 --seed 7") == 0);
    REQUIRE(run("cv --in " + (ws / "d/data.csv") + " --out " + (ws / "c2") +
                " --var y --method soft --grid 1.5,1.0,0.5 --t-min 0 --t-max 1"
                " --fractions 0.81,0.09,0.10 --seed 7") == 0);
    CHECK(read_file(ws / "c1/cv_report.json") == read_file(ws / "c2/cv_report.json"));
    CHECK(read_file(ws / "c1/cv_candidates.csv") == read_file(ws / "c2/cv_candidates.csv"));
    CHECK(read_file(ws / "d/data.csv") == before);
}

TEST_CASE("cv with truth reports the curve-mode score") {
    Workspace ws("cvtruth");
    REQUIRE(run("simulate --seed 8 --n 14 --out " + (ws / "d")) == 0);
    REQUIRE(run("cv --in " + (ws / "d/data.csv") + " --out " + (ws / "c") +
                " --var y --method soft --grid auto --t-min 0 --t-max 1 --seed 3 --truth " +
                (ws / "d/truth.csv")) == 0);
    const std::string report = read_file(ws / "c/cv_report.json");
    CHECK(report.find("\"truth_mse\"") != std::string::npos);
}

TEST_CASE("regress and embed produce their artifacts") {
    Workspace ws("regress");
    REQUIRE(run("simulate --seed 9 --n 14 --out " + (ws / "d")) == 0);
    REQUIRE(run("regress --in " + (ws / "d/data.csv") + " --out " + (ws / "r") +
                " --response y --covariates x1,x2 --t-min 0 --t-max 1"
                " --lambda-grid 1.0,0.5 --step1-lambda 1.0") == 0);
    CHECK(fs::exists(ws.dir / "r" / "scores.csv"));
    CHECK(fs::exists(ws.dir / "r" / "a_0.csv"));
    CHECK(fs::exists(ws.dir / "r" / "fitted_1.csv"));
    CHECK(fs::exists(ws.dir / "r" / "path.csv"));

    REQUIRE(run("embed --in " + (ws / "d/data.csv") + " --out " + (ws / "e") +
                " --vars x1,x2,y --t-min 0 --t-max 1 --lambda-grid 1.0") == 0);
    CHECK(fs::exists(ws.dir / "e" / "scores_0.csv"));
    CHECK(fs::exists(ws.dir / "e" / "values_0.csv"));
    CHECK(fs::exists(ws.dir / "e" / "loadings_0.csv"));
}

TEST_CASE("eval scores a prediction file against truth") {
    Workspace ws("eval");
    REQUIRE(run("simulate --seed 10 --n 10 --out " + (ws / "d")) == 0);
    // evaluating the truth against itself gives zero error
    REQUIRE(run("eval --pred " + (ws / "d/truth.csv") + " --truth " + (ws / "d/truth.csv") +
                " --var y --out " + (ws / "score"), ws / "eval.log") == 0);
    const std::string score = read_file(ws / "score/result.json");
    CHECK(score.find("\"mse\": 0.0") != std::string::npos);
    CHECK(fs::exists(ws.dir / "score" / "manifest.json"));
}

TEST_CASE("exit codes: numerical failures return 2") {
    Workspace ws("numfail");
    REQUIRE(run("simulate --seed 3 --n 6 --out " + (ws / "d")) == 0);
    // constant design with two identical columns makes X'X singular
    {
        std::ofstream out(ws / "design.csv");
        out << "subject_id,variable,0,1\n";
        for (int i = 1; i <= 6; ++i)
            out << "s" << i << ",cov," << i << "," << i << "\n";
    }
    CHECK(run("regress --in " + (ws / "d/data.csv") + " --out " + (ws / "r") +
              " --response y --fixed-design " + (ws / "design.csv") +
              " --t-min 0 --t-max 1") == 2);
}

TEST_CASE("exit codes: validation failures return 1") {
    Workspace ws("errors");
    {
        std::ofstream out(ws / "garbage.csv");
        out << "not,a,valid,header\n";
    }
    CHECK(run("fit --in " + (ws / "garbage.csv") + " --out " + (ws / "f") + " --var y") == 1);
    CHECK(run("fit --in " + (ws / "missing.csv") + " --out " + (ws / "f") + " --var y") == 1);
    CHECK(run("nonsense-subcommand") == 1);
    CHECK(run("simulate --seed 1 --out " + (ws / "x") + " --unknown-flag") == 1);
}

TEST_CASE("pipeline: simulate, cv with truth, eval reproduce the benchmark regime") {
    Workspace ws("pipeline");
    REQUIRE(run("simulate --seed 1 --out " + (ws / "d")) == 0);
    // grid values are in noise-variance units (sd 0.25 -> 0.0625)
    REQUIRE(run("cv --in " + (ws / "d/data.csv") + " --out " + (ws / "c") +
                " --var y --method soft --grid 0.625:3.125:0.3125 --t-min 0 --t-max 1"
                " --seed 106 --no-center --truth " + (ws / "d/truth.csv")) == 0);
    const std::string report = read_file(ws / "c/cv_report.json");
    const auto pos = report.find("\"truth_mse\": ");
    REQUIRE(pos != std::string::npos);
    const double truth_mse = std::stod(report.substr(pos + 13));
    CHECK(truth_mse > 0.0);
    CHECK(truth_mse < 1.0);  // well below the data variance (~3 here)

    REQUIRE(run("eval --pred " + (ws / "c/selected_fitted.csv") + " --truth " +
                (ws / "d/truth.csv") + " --var y --out " + (ws / "score")) == 0);
    const std::string score = read_file(ws / "score/result.json");
    const auto mpos = score.find("\"mse\": ");
    REQUIRE(mpos != std::string::npos);
    CHECK(std::stod(score.substr(mpos + 7)) == doctest::Approx(truth_mse).epsilon(1e-9));
}

TEST_CASE("non-convergence is a warning, not a failure") {
    Workspace ws("noconv");
    REQUIRE(run("simulate --seed 12 --n 20 --out " + (ws / "d")) == 0);
    REQUIRE(run("fit --in " + (ws / "d/data.csv") + " --out " + (ws / "f") +
                " --var y --t-min 0 --t-max 1 --lambda-grid 0.05 --eps 1e-14 --max-iter 2",
                ws / "fit.log") == 0);
    CHECK(read_file(ws / "fit.log").find("did not converge") != std::string::npos);
    CHECK(read_file(ws / "f/path.csv").find("false") != std::string::npos);
}
