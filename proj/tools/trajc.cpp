// trajc — batch front end for sparse longitudinal trajectory completion.
//
// Subcommands: simulate, fit, impute, regress, embed, cv, eval, rerun.
// Exit codes: 0 success, 1 validation error, 2 numerical failure.
// Every run writes a manifest.json with the full configuration; `rerun`
// replays a manifest bit-identically.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "trajcomplete/basis.hpp"
#include "trajcomplete/completion.hpp"
#include "trajcomplete/csv.hpp"
#include "trajcomplete/data_model.hpp"
#include "trajcomplete/evaluation.hpp"
#include "trajcomplete/multivariate.hpp"
#include "trajcomplete/regression.hpp"
#include "trajcomplete/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// small helpers

[[noreturn]] void fail_validation(const std::string& message) {
    throw traj::ConfigError(message);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(text);
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    for (const std::string& item : split_list(text))
        out.push_back(traj::parse_double(item, 0));
    return out;
}

// Grid syntax: "auto", "a:b:step", or a comma list.
std::vector<double> parse_grid(const std::string& text) {
    if (text == "auto" || text.empty()) return {};
    const auto colon = text.find(':');
    if (colon != std::string::npos) {
        const auto colon2 = text.find(':', colon + 1);
        if (colon2 == std::string::npos)
            fail_validation("grid range needs the form a:b:step");
        const double a = traj::parse_double(text.substr(0, colon), 0);
        const double b = traj::parse_double(text.substr(colon + 1, colon2 - colon - 1), 0);
        const double step = traj::parse_double(text.substr(colon2 + 1), 0);
        if (!(step > 0) || b < a) fail_validation("grid range needs a <= b and step > 0");
        std::vector<double> out;
        for (double v = a; v <= b + 1e-12 * step; v += step) out.push_back(v);
        return out;
    }
    return parse_double_list(text);
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) fail_validation("cannot write " + path.string());
    out << content;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail_validation("cannot create directory " + dir.string());
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail_validation("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw traj::ParseError(std::string("invalid JSON in ") + path + ": " + e.what());
    }
    return j;
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& known,
                         const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end())
            fail_validation("unknown key '" + key + "' in " + where);
    }
}

// Matrix CSV with a leading label column.
void write_matrix_csv(const fs::path& path, const std::vector<std::string>& row_labels,
                      const std::string& label_header, const std::string& value_prefix,
                      const Eigen::MatrixXd& m) {
    std::ostringstream os;
    os << label_header;
    for (Eigen::Index j = 0; j < m.cols(); ++j) os << ',' << value_prefix << (j + 1);
    os << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        os << row_labels[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < m.cols(); ++j) os << ',' << traj::format_double(m(i, j));
        os << '\n';
    }
    write_file(path, os.str());
}

traj::WideTable wide_from_matrix(const Eigen::MatrixXd& m,
                                 const std::vector<std::string>& subjects,
                                 const std::string& variable, const traj::TimeGrid& grid) {
    traj::WideTable t;
    t.subject_ids = subjects;
    t.variables.assign(subjects.size(), variable);
    t.times = grid.points;
    t.values = m;
    return t;
}

// ---------------------------------------------------------------------------
// shared dataset loading

struct Dataset {
    traj::DiscretizedData data;
    traj::TimeGrid grid;
    traj::BasisMatrix basis_raw;
    traj::BasisMatrix basis;  // orthonormalized
};

struct GridOptions {
    double t_min = std::numeric_limits<double>::quiet_NaN();  // NaN: from data
    double t_max = std::numeric_limits<double>::quiet_NaN();
    int t = 51;
    int k = 7;
    int degree = 3;

    json to_json() const {
        return json{{"t_min", t_min}, {"t_max", t_max}, {"t", t}, {"k", k},
                    {"degree", degree}};
    }
    static GridOptions from_json(const json& j) {
        reject_unknown_keys(j, {"t_min", "t_max", "t", "k", "degree"}, "grid options");
        GridOptions g;
        g.t_min = j.at("t_min").get<double>();
        g.t_max = j.at("t_max").get<double>();
        g.t = j.at("t").get<int>();
        g.k = j.at("k").get<int>();
        g.degree = j.at("degree").get<int>();
        return g;
    }
};

Dataset load_dataset(const std::string& path, const GridOptions& opt) {
    const std::vector<traj::ObservationRecord> records = traj::read_long_csv(path);
    if (records.empty()) throw traj::DataError("no records in " + path);
    double lo = opt.t_min;
    double hi = opt.t_max;
    if (std::isnan(lo) || std::isnan(hi)) {
        lo = records.front().time;
        hi = records.front().time;
        for (const auto& r : records) {
            lo = std::min(lo, r.time);
            hi = std::max(hi, r.time);
        }
    }
    Dataset d;
    d.grid = traj::TimeGrid::uniform(lo, hi, static_cast<std::size_t>(opt.t));
    d.data = traj::discretize(records, d.grid);
    d.basis_raw = traj::make_bspline_basis(d.grid, opt.k, opt.degree);
    d.basis = traj::orthonormalize(d.basis_raw);
    return d;
}

void write_manifest(const fs::path& dir, const std::string& subcommand, json options) {
    json manifest;
    manifest["version"] = kVersion;
    manifest["subcommand"] = subcommand;
    manifest["options"] = std::move(options);
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOptions {
    std::string out;
    std::uint64_t seed = 1;
    int n = 100;
    int t_gen = 31;
    int t_fit = 51;
    int k = 7;
    int degree = 3;
    double obs_fraction = 0.10;
    double noise_sd = 0.25;
    double t_min = 0.0;
    double t_max = 1.0;
    bool shared_mask = false;
    bool independent_structure = false;  // redraw (Sigma, mu) per process
    bool raw_basis = false;              // generate with the raw B-spline basis
    bool mask_on_gen_grid = false;       // sample the mask on the coarse grid

    json to_json() const {
        return json{{"out", out},       {"seed", seed},
                    {"n", n},           {"t_gen", t_gen},
                    {"t_fit", t_fit},   {"k", k},
                    {"degree", degree}, {"obs_fraction", obs_fraction},
                    {"noise_sd", noise_sd}, {"t_min", t_min},
                    {"t_max", t_max},   {"shared_mask", shared_mask},
                    {"independent_structure", independent_structure},
                    {"raw_basis", raw_basis},
                    {"mask_on_gen_grid", mask_on_gen_grid}};
    }
    static SimulateOptions from_json(const json& j) {
        reject_unknown_keys(j,
                            {"out", "seed", "n", "t_gen", "t_fit", "k", "degree",
                             "obs_fraction", "noise_sd", "t_min", "t_max", "shared_mask",
                             "independent_structure", "raw_basis", "mask_on_gen_grid"},
                            "simulate options");
        SimulateOptions o;
        o.out = j.at("out").get<std::string>();
        o.seed = j.at("seed").get<std::uint64_t>();
        o.n = j.at("n").get<int>();
        o.t_gen = j.at("t_gen").get<int>();
        o.t_fit = j.at("t_fit").get<int>();
        o.k = j.at("k").get<int>();
        o.degree = j.at("degree").get<int>();
        o.obs_fraction = j.at("obs_fraction").get<double>();
        o.noise_sd = j.at("noise_sd").get<double>();
        o.t_min = j.at("t_min").get<double>();
        o.t_max = j.at("t_max").get<double>();
        o.shared_mask = j.at("shared_mask").get<bool>();
        o.independent_structure = j.at("independent_structure").get<bool>();
        o.raw_basis = j.at("raw_basis").get<bool>();
        o.mask_on_gen_grid = j.at("mask_on_gen_grid").get<bool>();
        return o;
    }
};

int run_simulate(const SimulateOptions& opt) {
    traj::SimulationSpec spec;
    spec.n_subjects = opt.n;
    spec.t_gen = opt.t_gen;
    spec.t_fit = opt.t_fit;
    spec.n_basis = opt.k;
    spec.degree = opt.degree;
    spec.obs_fraction = opt.obs_fraction;
    spec.noise_sd = opt.noise_sd;
    spec.seed = opt.seed;
    spec.shared_mask = opt.shared_mask;
    spec.shared_structure = !opt.independent_structure;
    spec.orthonormal_gen_basis = !opt.raw_basis;
    spec.mask_on_fit_grid = !opt.mask_on_gen_grid;
    spec.t_min = opt.t_min;
    spec.t_max = opt.t_max;

    const traj::SimulatedStudy study = traj::simulate_study(spec);
    const fs::path dir(opt.out);
    ensure_dir(dir);
    traj::write_long_csv((dir / "data.csv").string(), study.records);

    traj::WideTable truth;
    truth.times = study.fit_grid.points;
    const auto n = static_cast<Eigen::Index>(study.subject_ids.size());
    truth.values.resize(n * static_cast<Eigen::Index>(study.variable_names.size()),
                        static_cast<Eigen::Index>(truth.times.size()));
    Eigen::Index row = 0;
    for (const std::string& var : study.variable_names) {
        const Eigen::MatrixXd& m = study.truth.at(var);
        for (Eigen::Index i = 0; i < n; ++i, ++row) {
            truth.subject_ids.push_back(study.subject_ids[static_cast<std::size_t>(i)]);
            truth.variables.push_back(var);
            truth.values.row(row) = m.row(i);
        }
    }
    traj::write_wide_csv((dir / "truth.csv").string(), truth);
    write_manifest(dir, "simulate", opt.to_json());
    std::cout << "wrote " << study.records.size() << " records for " << opt.n
              << " subjects to " << (dir / "data.csv").string() << std::endl;
    return 0;
}

// ---------------------------------------------------------------------------
// fit

struct FitOptions {
    std::string in;
    std::string out;
    std::string var = "y";
    GridOptions grid;
    std::string method = "soft";
    std::string lambda_grid = "auto";
    double eps = 1e-5;
    int max_iter = 500;
    bool no_center = false;

    json to_json() const {
        return json{{"in", in},
                    {"out", out},
                    {"var", var},
                    {"grid", grid.to_json()},
                    {"method", method},
                    {"lambda_grid", lambda_grid},
                    {"eps", eps},
                    {"max_iter", max_iter},
                    {"no_center", no_center}};
    }
    static FitOptions from_json(const json& j) {
        reject_unknown_keys(j,
                            {"in", "out", "var", "grid", "method", "lambda_grid", "eps",
                             "max_iter", "no_center"},
                            "fit options");
        FitOptions o;
        o.in = j.at("in").get<std::string>();
        o.out = j.at("out").get<std::string>();
        o.var = j.at("var").get<std::string>();
        o.grid = GridOptions::from_json(j.at("grid"));
        o.method = j.at("method").get<std::string>();
        o.lambda_grid = j.at("lambda_grid").get<std::string>();
        o.eps = j.at("eps").get<double>();
        o.max_iter = j.at("max_iter").get<int>();
        o.no_center = j.at("no_center").get<bool>();
        return o;
    }
};

void report_convergence(const traj::FitPath& fit) {
    for (std::size_t i = 0; i < fit.solutions.size(); ++i)
        if (!fit.solutions[i].converged)
            std::cerr << "warning: lambda " << traj::format_double(fit.solutions[i].lambda)
                      << " did not converge within " << fit.max_iter << " iterations"
                      << std::endl;
}

void write_fit_outputs(const fs::path& dir, const Dataset& ds, const std::string& var,
                       const traj::FitPath& fit) {
    // path summary
    std::ostringstream path_csv;
    path_csv << "index,lambda,rank,objective,iterations,converged\n";
    for (std::size_t i = 0; i < fit.solutions.size(); ++i) {
        const traj::LambdaSolution& s = fit.solutions[i];
        path_csv << i << ',' << traj::format_double(s.lambda) << ',' << s.rank << ','
                 << traj::format_double(s.objective) << ',' << s.iterations << ','
                 << (s.converged ? "true" : "false") << '\n';
    }
    write_file(dir / "path.csv", path_csv.str());

    if (fit.mean_curve) {
        traj::WideTable mean = wide_from_matrix(fit.mean_curve->transpose(), {"mean"},
                                                var, ds.grid);
        traj::write_wide_csv((dir / "mean.csv").string(), mean);
    }

    for (std::size_t i = 0; i < fit.solutions.size(); ++i) {
        const traj::LambdaSolution& s = fit.solutions[i];
        const std::string tag = std::to_string(i);
        write_matrix_csv(dir / ("w_" + tag + ".csv"), ds.data.subject_ids, "subject_id",
                         "w", s.W);
        const Eigen::MatrixXd curves = traj::impute(fit.coefficients(i));
        traj::write_wide_csv((dir / ("fitted_" + tag + ".csv")).string(),
                             wide_from_matrix(curves, ds.data.subject_ids, var, ds.grid));

        // principal direction curves and subject scores of this solution
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(s.W, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const int rank = std::max(s.rank, 1);
        const Eigen::MatrixXd components =
            (ds.basis.values * svd.matrixV().leftCols(rank)).transpose();  // rank x T
        std::vector<std::string> comp_labels;
        for (int c = 0; c < rank; ++c) comp_labels.push_back("component_" + std::to_string(c + 1));
        traj::WideTable comp_table;
        comp_table.subject_ids = comp_labels;
        comp_table.variables.assign(comp_labels.size(), var);
        comp_table.times = ds.grid.points;
        comp_table.values = components;
        traj::write_wide_csv((dir / ("components_" + tag + ".csv")).string(), comp_table);

        const Eigen::MatrixXd scores =
            svd.matrixU().leftCols(rank) *
            svd.singularValues().head(rank).asDiagonal();
        write_matrix_csv(dir / ("scores_" + tag + ".csv"), ds.data.subject_ids,
                         "subject_id", "score", scores);
    }
}

json fit_model_json(const FitOptions& opt, const Dataset& ds, const traj::FitPath& fit) {
    json model;
    model["version"] = kVersion;
    model["variable"] = opt.var;
    model["t_min"] = ds.grid.t_min;
    model["t_max"] = ds.grid.t_max;
    model["t"] = ds.grid.points.size();
    model["k"] = ds.basis.values.cols();
    model["degree"] = opt.grid.degree;
    model["method"] = opt.method;
    json lambdas = json::array();
    for (const auto& s : fit.solutions) lambdas.push_back(s.lambda);
    model["lambdas"] = lambdas;
    model["centered"] = fit.mean_curve.has_value();
    json subjects = json::array();
    for (const auto& id : ds.data.subject_ids) subjects.push_back(id);
    model["subjects"] = subjects;
    return model;
}

int run_fit(const FitOptions& opt) {
    if (opt.method != "soft" && opt.method != "hard")
        fail_validation("fit method must be soft or hard");
    const Dataset ds = load_dataset(opt.in, opt.grid);
    const traj::SparseMatrix& y = ds.data.variable(opt.var);

    std::vector<double> grid_values = parse_grid(opt.lambda_grid);
    traj::LambdaPath path = grid_values.empty()
                                ? traj::default_lambda_path(y, ds.basis)
                                : traj::LambdaPath::from_values([&] {
                                      std::sort(grid_values.begin(), grid_values.end(),
                                                std::greater<>());
                                      grid_values.erase(std::unique(grid_values.begin(),
                                                                    grid_values.end()),
                                                        grid_values.end());
                                      return grid_values;
                                  }());

    std::optional<Eigen::VectorXd> mean;
    if (!opt.no_center) mean = traj::estimate_mean_curve(y, ds.basis);

    const traj::FitPath soft =
        traj::soft_impute(y, ds.basis, path, opt.eps, opt.max_iter, mean);
    const traj::FitPath* fit = &soft;
    std::optional<traj::FitPath> hard;
    if (opt.method == "hard") {
        hard = traj::hard_impute(y, ds.basis, path, soft, opt.eps, opt.max_iter);
        fit = &*hard;
    }
    if (fit->empty_pattern)
        std::cerr << "warning: no observed cells; returning zero coefficients" << std::endl;
    report_convergence(*fit);

    const fs::path dir(opt.out);
    ensure_dir(dir);
    write_fit_outputs(dir, ds, opt.var, *fit);
    write_file(dir / "model.json", fit_model_json(opt, ds, *fit).dump(2) + "\n");
    write_manifest(dir, "fit", opt.to_json());
    std::cout << "fit " << fit->solutions.size() << " lambda values for variable '"
              << opt.var << "' -> " << dir.string() << std::endl;
    return 0;
}

// ---------------------------------------------------------------------------
// impute (from a stored fit)

struct ImputeOptions {
    std::string fit_dir;
    std::string out;
    std::string subjects;  // comma list, empty = all
    int lambda_index = -1; // -1 = last (smallest lambda)

    json to_json() const {
        return json{{"fit_dir", fit_dir},
                    {"out", out},
                    {"subjects", subjects},
                    {"lambda_index", lambda_index}};
    }
    static ImputeOptions from_json(const json& j) {
        reject_unknown_keys(j, {"fit_dir", "out", "subjects", "lambda_index"},
                            "impute options");
        ImputeOptions o;
        o.fit_dir = j.at("fit_dir").get<std::string>();
        o.out = j.at("out").get<std::string>();
        o.subjects = j.at("subjects").get<std::string>();
        o.lambda_index = j.at("lambda_index").get<int>();
        return o;
    }
};

int run_impute(const ImputeOptions& opt) {
    const fs::path dir(opt.fit_dir);
    const json model = load_json((dir / "model.json").string());
    const auto n_lambda = model.at("lambdas").size();
    std::size_t index = opt.lambda_index < 0 ? n_lambda - 1
                                             : static_cast<std::size_t>(opt.lambda_index);
    if (index >= n_lambda) fail_validation("lambda_index out of range");

    const std::string var = model.at("variable").get<std::string>();
    std::vector<std::string> subjects;
    for (const auto& s : model.at("subjects")) subjects.push_back(s.get<std::string>());

    // reconstruct grid/basis and read W back
    const traj::TimeGrid grid = traj::TimeGrid::uniform(
        model.at("t_min").get<double>(), model.at("t_max").get<double>(),
        model.at("t").get<std::size_t>());

    std::ifstream win(dir / ("w_" + std::to_string(index) + ".csv"));
    if (!win) fail_validation("cannot open stored coefficients");
    std::string line;
    std::getline(win, line);  // header
    std::vector<std::vector<double>> w_rows;
    std::vector<std::string> w_subjects;
    std::size_t line_no = 1;
    while (std::getline(win, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields = split_list(line);
        w_subjects.push_back(fields[0]);
        std::vector<double> row;
        for (std::size_t i = 1; i < fields.size(); ++i)
            row.push_back(traj::parse_double(fields[i], line_no));
        w_rows.push_back(std::move(row));
    }
    Eigen::MatrixXd w(static_cast<Eigen::Index>(w_rows.size()),
                      static_cast<Eigen::Index>(w_rows.empty() ? 0 : w_rows[0].size()));
    for (std::size_t i = 0; i < w_rows.size(); ++i)
        for (std::size_t j = 0; j < w_rows[i].size(); ++j)
            w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = w_rows[i][j];

    traj::CoefficientMatrix coef;
    coef.W = w;
    coef.basis = traj::orthonormalize(
        traj::make_bspline_basis(grid, static_cast<int>(w.cols()),
                                 model.at("degree").get<int>()));
    if (model.at("centered").get<bool>()) {
        const traj::WideTable mean = traj::read_wide_csv((dir / "mean.csv").string());
        coef.mean_curve = mean.values.row(0).transpose();
    }

    std::vector<std::size_t> rows;
    if (opt.subjects.empty()) {
        rows.resize(w_subjects.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
    } else {
        for (const std::string& want : split_list(opt.subjects)) {
            const auto it = std::find(w_subjects.begin(), w_subjects.end(), want);
            if (it == w_subjects.end())
                throw traj::IndexError("unknown subject: " + want);
            rows.push_back(static_cast<std::size_t>(it - w_subjects.begin()));
        }
    }

    const Eigen::MatrixXd curves = traj::impute(coef, rows);
    std::vector<std::string> row_ids;
    for (const std::size_t r : rows) row_ids.push_back(w_subjects[r]);

    const fs::path out_dir(opt.out);
    ensure_dir(out_dir);
    traj::write_wide_csv((out_dir / "imputed_wide.csv").string(),
                         wide_from_matrix(curves, row_ids, var, grid));
    std::vector<traj::ObservationRecord> long_records;
    for (Eigen::Index i = 0; i < curves.rows(); ++i)
        for (Eigen::Index j = 0; j < curves.cols(); ++j)
            long_records.push_back({row_ids[static_cast<std::size_t>(i)], var,
                                    grid.points[static_cast<std::size_t>(j)], curves(i, j)});
    traj::write_long_csv((out_dir / "imputed.csv").string(), long_records);
    write_manifest(out_dir, "impute", opt.to_json());
    std::cout << "imputed " << rows.size() << " trajectories -> " << out_dir.string()
              << std::endl;
    return 0;
}

// ---------------------------------------------------------------------------
// regress

struct RegressOptions {
    std::string in;
    std::string out;
    std::string response = "y";
    std::string covariates;     // comma list of longitudinal variables
    std::string fixed_design;   // CSV path for a constant design matrix
    GridOptions grid;
    std::string lambda_grid = "auto";
    double step1_lambda = -1.0;  // <0: auto
    int d2 = -1;                 // <0: rank of the step-1 solution
    double eps = 1e-5;
    int max_iter = 500;
    bool no_center = false;

    json to_json() const {
        return json{{"in", in},
                    {"out", out},
                    {"response", response},
                    {"covariates", covariates},
                    {"fixed_design", fixed_design},
                    {"grid", grid.to_json()},
                    {"lambda_grid", lambda_grid},
                    {"step1_lambda", step1_lambda},
                    {"d2", d2},
                    {"eps", eps},
                    {"max_iter", max_iter},
                    {"no_center", no_center}};
    }
    static RegressOptions from_json(const json& j) {
        reject_unknown_keys(j,
                            {"in", "out", "response", "covariates", "fixed_design", "grid",
                             "lambda_grid", "step1_lambda", "d2", "eps", "max_iter",
                             "no_center"},
                            "regress options");
        RegressOptions o;
        o.in = j.at("in").get<std::string>();
        o.out = j.at("out").get<std::string>();
        o.response = j.at("response").get<std::string>();
        o.covariates = j.at("covariates").get<std::string>();
        o.fixed_design = j.at("fixed_design").get<std::string>();
        o.grid = GridOptions::from_json(j.at("grid"));
        o.lambda_grid = j.at("lambda_grid").get<std::string>();
        o.step1_lambda = j.at("step1_lambda").get<double>();
        o.d2 = j.at("d2").get<int>();
        o.eps = j.at("eps").get<double>();
        o.max_iter = j.at("max_iter").get<int>();
        o.no_center = j.at("no_center").get<bool>();
        return o;
    }
};

traj::StackedDesign build_covariate_design(const Dataset& ds,
                                           const std::vector<std::string>& names) {
    std::vector<traj::DesignBlock> blocks;
    for (const std::string& name : names) {
        traj::DesignBlock b;
        b.data = ds.data.variable(name);
        b.basis = ds.basis;
        b.scale = traj::default_scale(b.data);
        b.label = name;
        blocks.push_back(std::move(b));
    }
    return traj::StackedDesign(std::move(blocks));
}

int run_regress(const RegressOptions& opt) {
    const Dataset ds = load_dataset(opt.in, opt.grid);
    const traj::SparseMatrix& y_raw = ds.data.variable(opt.response);

    std::optional<Eigen::VectorXd> mean;
    if (!opt.no_center) mean = traj::estimate_mean_curve(y_raw, ds.basis);
    const traj::SparseMatrix y = mean ? traj::subtract_curve(y_raw, *mean) : y_raw;

    const fs::path dir(opt.out);
    ensure_dir(dir);

    std::ostringstream path_csv;
    path_csv << "index,lambda,objective,iterations,converged\n";

    if (!opt.fixed_design.empty()) {
        // Constant covariates: one least-squares regression, no lambda path.
        const traj::WideTable design_table = traj::read_wide_csv(opt.fixed_design);
        if (design_table.subject_ids != ds.data.subject_ids)
            fail_validation("fixed design subjects must match the dataset order");
        const traj::RegressionModel model = traj::sparse_regression(
            y, design_table.values, ds.basis, opt.eps, opt.max_iter);
        if (!model.converged)
            std::cerr << "warning: regression did not converge within " << opt.max_iter
                      << " iterations" << std::endl;
        std::vector<std::string> labels;
        for (std::size_t i = 0; i < static_cast<std::size_t>(model.A.rows()); ++i)
            labels.push_back("cov" + std::to_string(i + 1));
        write_matrix_csv(dir / "a_0.csv", labels, "covariate", "k", model.A);
        Eigen::MatrixXd curves = design_table.values * model.A * ds.basis.values.transpose();
        if (mean) curves.rowwise() += mean->transpose();
        traj::write_wide_csv((dir / "fitted_0.csv").string(),
                             wide_from_matrix(curves, ds.data.subject_ids, opt.response,
                                              ds.grid));
        path_csv << 0 << ",0," << traj::format_double(model.objective) << ','
                 << model.iterations << ',' << (model.converged ? "true" : "false") << '\n';
    } else {
        const std::vector<std::string> names = split_list(opt.covariates);
        if (names.empty()) fail_validation("regress needs --covariates or --fixed-design");
        const traj::StackedDesign design = build_covariate_design(ds, names);

        std::vector<double> grid_values = parse_grid(opt.lambda_grid);
        if (grid_values.empty())
            grid_values = traj::default_lambda_path(y, ds.basis).values;
        std::sort(grid_values.begin(), grid_values.end(), std::greater<>());
        grid_values.erase(std::unique(grid_values.begin(), grid_values.end()),
                          grid_values.end());
        const traj::LambdaPath path = traj::LambdaPath::from_values(grid_values);

        double step1 = opt.step1_lambda;
        if (step1 < 0) {
            // default: middle of the covariate stack's own path
            Eigen::MatrixXd stacked = Eigen::MatrixXd::Zero(
                static_cast<Eigen::Index>(design.n_rows()),
                static_cast<Eigen::Index>(design.total_cols()));
            for (const auto& cell : design.stacked_cells())
                stacked(static_cast<Eigen::Index>(cell.row),
                        static_cast<Eigen::Index>(cell.col)) = cell.value;
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked * design.stacked_basis());
            step1 = svd.singularValues()[0] / 10.0;
        }

        const traj::SparseLongitudinalRegression slr = traj::sparse_longitudinal_regression(
            y, ds.basis, design, path, step1, opt.eps, opt.max_iter,
            opt.d2 < 0 ? std::nullopt : std::optional<int>(opt.d2));

        write_matrix_csv(dir / "scores.csv", ds.data.subject_ids, "subject_id", "u",
                         slr.scores);
        for (std::size_t i = 0; i < slr.models.size(); ++i) {
            const traj::RegressionModel& m = slr.models[i];
            if (!m.converged)
                std::cerr << "warning: lambda " << traj::format_double(*m.lambda)
                          << " did not converge within " << opt.max_iter << " iterations"
                          << std::endl;
            std::vector<std::string> labels;
            for (Eigen::Index r = 0; r < m.A.rows(); ++r)
                labels.push_back("u" + std::to_string(r + 1));
            write_matrix_csv(dir / ("a_" + std::to_string(i) + ".csv"), labels, "score",
                             "k", m.A);
            Eigen::MatrixXd curves = slr.scores * m.A * ds.basis.values.transpose();
            if (mean) curves.rowwise() += mean->transpose();
            traj::write_wide_csv((dir / ("fitted_" + std::to_string(i) + ".csv")).string(),
                                 wide_from_matrix(curves, ds.data.subject_ids,
                                                  opt.response, ds.grid));
            path_csv << i << ',' << traj::format_double(*m.lambda) << ','
                     << traj::format_double(m.objective) << ',' << m.iterations << ','
                     << (m.converged ? "true" : "false") << '\n';
        }
    }

    write_file(dir / "path.csv", path_csv.str());
    write_manifest(dir, "regress", opt.to_json());
    std::cout << "regression of '" << opt.response << "' -> " << dir.string() << std::endl;
    return 0;
}

// ---------------------------------------------------------------------------
// embed

struct EmbedOptions {
    std::string in;
    std::string out;
    std::string vars;
    GridOptions grid;
    std::string lambda_grid = "auto";
    std::string scales = "auto";  // "auto" or comma list matching vars
    double eps = 1e-5;
    int max_iter = 500;

    json to_json() const {
        return json{{"in", in},          {"out", out},
                    {"vars", vars},      {"grid", grid.to_json()},
                    {"lambda_grid", lambda_grid}, {"scales", scales},
                    {"eps", eps},        {"max_iter", max_iter}};
    }
    static EmbedOptions from_json(const json& j) {
        reject_unknown_keys(
            j, {"in", "out", "vars", "grid", "lambda_grid", "scales", "eps", "max_iter"},
            "embed options");
        EmbedOptions o;
        o.in = j.at("in").get<std::string>();
        o.out = j.at("out").get<std::string>();
        o.vars = j.at("vars").get<std::string>();
        o.grid = GridOptions::from_json(j.at("grid"));
        o.lambda_grid = j.at("lambda_grid").get<std::string>();
        o.scales = j.at("scales").get<std::string>();
        o.eps = j.at("eps").get<double>();
        o.max_iter = j.at("max_iter").get<int>();
        return o;
    }
};

int run_embed(const EmbedOptions& opt) {
    const Dataset ds = load_dataset(opt.in, opt.grid);
    const std::vector<std::string> names = split_list(opt.vars);
    if (names.empty()) fail_validation("embed needs --vars");

    std::vector<traj::DesignBlock> blocks;
    std::vector<double> scales;
    if (opt.scales != "auto") {
        scales = parse_double_list(opt.scales);
        if (scales.size() != names.size())
            fail_validation("--scales must match the number of variables");
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
        traj::DesignBlock b;
        b.data = ds.data.variable(names[i]);
        b.basis = ds.basis;
        b.scale = scales.empty() ? traj::default_scale(b.data) : scales[i];
        b.label = names[i];
        blocks.push_back(std::move(b));
    }
    const traj::StackedDesign design(std::move(blocks));

    std::vector<double> grid_values = parse_grid(opt.lambda_grid);
    traj::LambdaPath path = [&] {
        if (!grid_values.empty()) {
            std::sort(grid_values.begin(), grid_values.end(), std::greater<>());
            grid_values.erase(std::unique(grid_values.begin(), grid_values.end()),
                              grid_values.end());
            return traj::LambdaPath::from_values(grid_values);
        }
        // default: path from the stacked system
        Eigen::MatrixXd stacked_dense =
            Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(design.n_rows()),
                                  static_cast<Eigen::Index>(design.total_cols()));
        for (const auto& cell : design.stacked_cells())
            stacked_dense(static_cast<Eigen::Index>(cell.row),
                          static_cast<Eigen::Index>(cell.col)) = cell.value;
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked_dense * design.stacked_basis());
        const double top = svd.singularValues()[0];
        if (top <= 0) return traj::LambdaPath::from_values({0.0});
        return traj::LambdaPath::logarithmic(top, top / 100.0, 20);
    }();

    const traj::MultivariateFit fit =
        traj::multivariate_impute(design, path, opt.eps, opt.max_iter);

    const fs::path dir(opt.out);
    ensure_dir(dir);
    std::ostringstream path_csv;
    path_csv << "index,lambda,rank,objective,iterations,converged\n";
    for (std::size_t i = 0; i < fit.solutions.size(); ++i) {
        const traj::LambdaSolution& s = fit.solutions[i];
        if (!s.converged)
            std::cerr << "warning: lambda " << traj::format_double(s.lambda)
                      << " did not converge within " << opt.max_iter << " iterations"
                      << std::endl;
        path_csv << i << ',' << traj::format_double(s.lambda) << ',' << s.rank << ','
                 << traj::format_double(s.objective) << ',' << s.iterations << ','
                 << (s.converged ? "true" : "false") << '\n';

        const traj::LatentEmbedding& e = fit.embeddings[i];
        const std::string tag = std::to_string(i);
        write_matrix_csv(dir / ("scores_" + tag + ".csv"), ds.data.subject_ids,
                         "subject_id", "u", e.U);

        std::ostringstream values_csv;
        values_csv << "component,value\n";
        for (Eigen::Index c = 0; c < e.S.size(); ++c)
            values_csv << (c + 1) << ',' << traj::format_double(e.S[c]) << '\n';
        write_file(dir / ("values_" + tag + ".csv"), values_csv.str());

        std::ostringstream loadings_csv;
        loadings_csv << "block,basis_index";
        for (Eigen::Index c = 0; c < e.V.cols(); ++c) loadings_csv << ",v" << (c + 1);
        loadings_csv << '\n';
        for (std::size_t bi = 0; bi < design.blocks().size(); ++bi) {
            const Eigen::MatrixXd slice = fit.block_loadings(design, i, bi);
            for (Eigen::Index r = 0; r < slice.rows(); ++r) {
                loadings_csv << design.blocks()[bi].label << ',' << (r + 1);
                for (Eigen::Index c = 0; c < slice.cols(); ++c)
                    loadings_csv << ',' << traj::format_double(slice(r, c));
                loadings_csv << '\n';
            }
        }
        write_file(dir / ("loadings_" + tag + ".csv"), loadings_csv.str());
    }
    write_file(dir / "path.csv", path_csv.str());
    write_manifest(dir, "embed", opt.to_json());
    std::cout << "embedded " << names.size() << " variables -> " << dir.string()
              << std::endl;
    return 0;
}

// ---------------------------------------------------------------------------
// cv

struct CvCliOptions {
    std::string in;
    std::string out;
    std::string var = "y";
    std::string method = "soft";
    std::string grid_spec;
    std::string rank_grid;
    std::string covariates;
    std::string step1_grid;
    std::string truth;  // optional wide truth file
    GridOptions grid;
    std::string fractions = "0.81,0.09,0.10";
    std::uint64_t seed = 1;
    std::size_t min_visits = 1;
    double eps = 1e-5;
    int max_iter = 500;
    bool no_center = false;
    int jobs = 1;

    json to_json() const {
        return json{{"in", in},
                    {"out", out},
                    {"var", var},
                    {"method", method},
                    {"grid_spec", grid_spec},
                    {"rank_grid", rank_grid},
                    {"covariates", covariates},
                    {"step1_grid", step1_grid},
                    {"truth", truth},
                    {"grid", grid.to_json()},
                    {"fractions", fractions},
                    {"seed", seed},
                    {"min_visits", min_visits},
                    {"eps", eps},
                    {"max_iter", max_iter},
                    {"no_center", no_center},
                    {"jobs", jobs}};
    }
    static CvCliOptions from_json(const json& j) {
        reject_unknown_keys(j,
                            {"in", "out", "var", "method", "grid_spec", "rank_grid",
                             "covariates", "step1_grid", "truth", "grid", "fractions",
                             "seed", "min_visits", "eps", "max_iter", "no_center", "jobs"},
                            "cv options");
        CvCliOptions o;
        o.in = j.at("in").get<std::string>();
        o.out = j.at("out").get<std::string>();
        o.var = j.at("var").get<std::string>();
        o.method = j.at("method").get<std::string>();
        o.grid_spec = j.at("grid_spec").get<std::string>();
        o.rank_grid = j.at("rank_grid").get<std::string>();
        o.covariates = j.at("covariates").get<std::string>();
        o.step1_grid = j.at("step1_grid").get<std::string>();
        o.truth = j.at("truth").get<std::string>();
        o.grid = GridOptions::from_json(j.at("grid"));
        o.fractions = j.at("fractions").get<std::string>();
        o.seed = j.at("seed").get<std::uint64_t>();
        o.min_visits = j.at("min_visits").get<std::size_t>();
        o.eps = j.at("eps").get<double>();
        o.max_iter = j.at("max_iter").get<int>();
        o.no_center = j.at("no_center").get<bool>();
        o.jobs = j.at("jobs").get<int>();
        return o;
    }
};

int run_cv(const CvCliOptions& opt) {
    const Dataset ds = load_dataset(opt.in, opt.grid);
    const traj::SparseMatrix& y = ds.data.variable(opt.var);

    traj::CvOptions cv;
    if (opt.method == "soft") cv.method = traj::CvMethod::soft;
    else if (opt.method == "hard") cv.method = traj::CvMethod::hard;
    else if (opt.method == "regression") cv.method = traj::CvMethod::regression;
    else if (opt.method == "multivariate") cv.method = traj::CvMethod::multivariate;
    else fail_validation("unknown cv method: " + opt.method);

    cv.lambda_grid = parse_grid(opt.grid_spec);
    if (!opt.rank_grid.empty())
        for (const double v : parse_double_list(opt.rank_grid))
            cv.rank_grid.push_back(static_cast<int>(v));
    cv.epsilon = opt.eps;
    cv.max_iter = opt.max_iter;
    cv.center = !opt.no_center;
    cv.jobs = opt.jobs;
    if (!opt.step1_grid.empty()) cv.step1_grid = parse_grid(opt.step1_grid);
    if (!opt.covariates.empty())
        cv.covariates = build_covariate_design(ds, split_list(opt.covariates));

    const std::vector<double> fracs = parse_double_list(opt.fractions);
    if (fracs.size() != 3) fail_validation("--fractions needs three values");
    const traj::SplitAssignment assignment =
        traj::split(y, {fracs[0], fracs[1], fracs[2]}, opt.seed, opt.min_visits);

    // auto grid comes from the training cells only, so held-out data never
    // influences the candidate set
    if (cv.lambda_grid.empty() && cv.rank_grid.empty())
        cv.lambda_grid =
            traj::default_lambda_path(y.restrict_to(assignment.train), ds.basis).values;

    std::optional<Eigen::MatrixXd> truth;
    if (!opt.truth.empty()) {
        const traj::WideTable table = traj::read_wide_csv(opt.truth);
        Eigen::MatrixXd m(static_cast<Eigen::Index>(ds.data.subject_ids.size()),
                          static_cast<Eigen::Index>(ds.grid.points.size()));
        for (std::size_t i = 0; i < ds.data.subject_ids.size(); ++i) {
            bool found = false;
            for (std::size_t r = 0; r < table.subject_ids.size(); ++r) {
                if (table.subject_ids[r] == ds.data.subject_ids[i] &&
                    table.variables[r] == opt.var) {
                    m.row(static_cast<Eigen::Index>(i)) =
                        table.values.row(static_cast<Eigen::Index>(r));
                    found = true;
                    break;
                }
            }
            if (!found)
                fail_validation("truth file lacks subject " + ds.data.subject_ids[i] +
                                " variable " + opt.var);
        }
        truth = std::move(m);
    }

    const traj::CvReport report = traj::cross_validate(
        y, ds.basis, cv, assignment, opt.seed, truth ? &*truth : nullptr);

    for (const auto& c : report.candidates)
        if (!c.converged)
            std::cerr << "warning: candidate lambda " << traj::format_double(c.lambda)
                      << " did not converge" << std::endl;

    const fs::path dir(opt.out);
    ensure_dir(dir);
    write_file(dir / "cv_report.json", report.to_json() + "\n");
    write_file(dir / "cv_candidates.csv", report.candidates_csv());
    traj::write_wide_csv(
        (dir / "selected_fitted.csv").string(),
        wide_from_matrix(report.selected_prediction, ds.data.subject_ids, opt.var, ds.grid));
    write_manifest(dir, "cv", opt.to_json());
    std::cout << report.to_json() << std::endl;
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    std::string pred;
    std::string truth;
    std::string var;       // empty = every shared (subject, variable) pair
    std::string subjects;  // optional comma list
    std::string out;       // optional output directory (result.json + manifest)

    json to_json() const {
        return json{{"pred", pred},
                    {"truth", truth},
                    {"var", var},
                    {"subjects", subjects},
                    {"out", out}};
    }
    static EvalOptions from_json(const json& j) {
        reject_unknown_keys(j, {"pred", "truth", "var", "subjects", "out"},
                            "eval options");
        EvalOptions o;
        o.pred = j.at("pred").get<std::string>();
        o.truth = j.at("truth").get<std::string>();
        o.var = j.at("var").get<std::string>();
        o.subjects = j.at("subjects").get<std::string>();
        o.out = j.at("out").get<std::string>();
        return o;
    }
};

int run_eval(const EvalOptions& opt) {
    const traj::WideTable pred = traj::read_wide_csv(opt.pred);
    const traj::WideTable truth = traj::read_wide_csv(opt.truth);
    if (pred.times != truth.times)
        fail_validation("prediction and truth grids differ");

    std::vector<std::string> wanted_subjects = split_list(opt.subjects);

    double total = 0.0;
    std::size_t matched = 0;
    for (std::size_t i = 0; i < pred.subject_ids.size(); ++i) {
        if (!opt.var.empty() && pred.variables[i] != opt.var) continue;
        if (!wanted_subjects.empty() &&
            std::find(wanted_subjects.begin(), wanted_subjects.end(),
                      pred.subject_ids[i]) == wanted_subjects.end())
            continue;
        for (std::size_t r = 0; r < truth.subject_ids.size(); ++r) {
            if (truth.subject_ids[r] != pred.subject_ids[i] ||
                truth.variables[r] != pred.variables[i])
                continue;
            total += (pred.values.row(static_cast<Eigen::Index>(i)) -
                      truth.values.row(static_cast<Eigen::Index>(r)))
                         .squaredNorm();
            ++matched;
            break;
        }
    }
    if (matched == 0) fail_validation("no (subject, variable) rows matched");

    const double mse_value =
        total / (static_cast<double>(matched) * static_cast<double>(pred.times.size()));
    json result;
    result["mse"] = mse_value;
    result["curves"] = matched;
    std::cout << result.dump(2) << std::endl;
    if (!opt.out.empty()) {
        const fs::path dir(opt.out);
        ensure_dir(dir);
        write_file(dir / "result.json", result.dump(2) + "\n");
        write_manifest(dir, "eval", opt.to_json());
    }
    return 0;
}

// ---------------------------------------------------------------------------
// rerun

int dispatch(const std::string& subcommand, const json& options);

int run_rerun(const std::string& manifest_path, const std::string& out_override) {
    const json manifest = load_json(manifest_path);
    reject_unknown_keys(manifest, {"version", "subcommand", "options"}, "manifest");
    json options = manifest.at("options");
    if (!out_override.empty()) {
        if (options.contains("out")) options["out"] = out_override;
        else fail_validation("this manifest has no 'out' to override");
    }
    return dispatch(manifest.at("subcommand").get<std::string>(), options);
}

int dispatch(const std::string& subcommand, const json& options) {
    if (subcommand == "simulate") return run_simulate(SimulateOptions::from_json(options));
    if (subcommand == "fit") return run_fit(FitOptions::from_json(options));
    if (subcommand == "impute") return run_impute(ImputeOptions::from_json(options));
    if (subcommand == "regress") return run_regress(RegressOptions::from_json(options));
    if (subcommand == "embed") return run_embed(EmbedOptions::from_json(options));
    if (subcommand == "cv") return run_cv(CvCliOptions::from_json(options));
    if (subcommand == "eval") return run_eval(EvalOptions::from_json(options));
    fail_validation("unknown subcommand in manifest: " + subcommand);
    return 1;
}

void add_grid_options(CLI::App* app, GridOptions& grid) {
    app->add_option("--t-min", grid.t_min, "grid start (default: data minimum)");
    app->add_option("--t-max", grid.t_max, "grid end (default: data maximum)");
    app->add_option("--t", grid.t, "grid size")->capture_default_str();
    app->add_option("--k", grid.k, "number of basis functions")->capture_default_str();
    app->add_option("--degree", grid.degree, "spline degree")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sparse longitudinal trajectory completion"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    SimulateOptions sim;
    CLI::App* c_sim = app.add_subcommand("simulate", "generate a synthetic study");
    c_sim->add_option("--out", sim.out, "output directory")->required();
    c_sim->add_option("--seed", sim.seed, "random seed")->capture_default_str();
    c_sim->add_option("--n", sim.n, "number of subjects")->capture_default_str();
    c_sim->add_option("--t-gen", sim.t_gen, "generation grid size")->capture_default_str();
    c_sim->add_option("--t-fit", sim.t_fit, "fitting grid size")->capture_default_str();
    c_sim->add_option("--k", sim.k, "number of basis functions")->capture_default_str();
    c_sim->add_option("--degree", sim.degree, "spline degree")->capture_default_str();
    c_sim->add_option("--obs-fraction", sim.obs_fraction, "observation probability")
        ->capture_default_str();
    c_sim->add_option("--noise-sd", sim.noise_sd, "observation noise sd")
        ->capture_default_str();
    c_sim->add_option("--t-min", sim.t_min, "time window start")->capture_default_str();
    c_sim->add_option("--t-max", sim.t_max, "time window end")->capture_default_str();
    c_sim->add_flag("--shared-mask", sim.shared_mask,
                    "use one observation mask for all variables");
    c_sim->add_flag("--independent-structure", sim.independent_structure,
                    "redraw the cohort covariances and mean per process");
    c_sim->add_flag("--raw-basis", sim.raw_basis,
                    "generate curves with the raw (non-orthonormal) B-splines");
    c_sim->add_flag("--mask-on-gen-grid", sim.mask_on_gen_grid,
                    "sample observations on the generation grid");

    FitOptions fit;
    CLI::App* c_fit = app.add_subcommand("fit", "fit completion models over a lambda path");
    c_fit->add_option("--in", fit.in, "long-format input CSV")->required();
    c_fit->add_option("--out", fit.out, "output directory")->required();
    c_fit->add_option("--var", fit.var, "variable to fit")->capture_default_str();
    add_grid_options(c_fit, fit.grid);
    c_fit->add_option("--method", fit.method, "soft or hard")->capture_default_str();
    c_fit->add_option("--lambda-grid", fit.lambda_grid, "a:b:step, comma list, or auto")
        ->capture_default_str();
    c_fit->add_option("--eps", fit.eps, "convergence threshold")->capture_default_str();
    c_fit->add_option("--max-iter", fit.max_iter, "iteration cap per lambda")
        ->capture_default_str();
    c_fit->add_flag("--no-center", fit.no_center, "skip mean-curve centering");

    ImputeOptions imp;
    CLI::App* c_imp = app.add_subcommand("impute", "write trajectories from a stored fit");
    c_imp->add_option("--fit", imp.fit_dir, "fit output directory")->required();
    c_imp->add_option("--out", imp.out, "output directory")->required();
    c_imp->add_option("--subjects", imp.subjects, "comma list (default: all)");
    c_imp->add_option("--lambda-index", imp.lambda_index,
                      "path index (default: last, the weakest regularization)");

    RegressOptions reg;
    CLI::App* c_reg = app.add_subcommand("regress", "regress a sparse response");
    c_reg->add_option("--in", reg.in, "long-format input CSV")->required();
    c_reg->add_option("--out", reg.out, "output directory")->required();
    c_reg->add_option("--response", reg.response, "response variable")
        ->capture_default_str();
    c_reg->add_option("--covariates", reg.covariates,
                      "comma list of longitudinal covariates");
    c_reg->add_option("--fixed-design", reg.fixed_design,
                      "CSV with a constant design matrix");
    add_grid_options(c_reg, reg.grid);
    c_reg->add_option("--lambda-grid", reg.lambda_grid, "step-2 grid")->capture_default_str();
    c_reg->add_option("--step1-lambda", reg.step1_lambda,
                      "covariate embedding level (default: auto)");
    c_reg->add_option("--d2", reg.d2, "latent dimensions kept (default: step-1 rank)");
    c_reg->add_option("--eps", reg.eps, "convergence threshold")->capture_default_str();
    c_reg->add_option("--max-iter", reg.max_iter, "iteration cap")->capture_default_str();
    c_reg->add_flag("--no-center", reg.no_center, "skip mean-curve centering");

    EmbedOptions emb;
    CLI::App* c_emb = app.add_subcommand("embed", "joint low-rank embedding");
    c_emb->add_option("--in", emb.in, "long-format input CSV")->required();
    c_emb->add_option("--out", emb.out, "output directory")->required();
    c_emb->add_option("--vars", emb.vars, "comma list of variables")->required();
    add_grid_options(c_emb, emb.grid);
    c_emb->add_option("--lambda-grid", emb.lambda_grid, "grid or auto")
        ->capture_default_str();
    c_emb->add_option("--scales", emb.scales, "auto or comma list of block scales")
        ->capture_default_str();
    c_emb->add_option("--eps", emb.eps, "convergence threshold")->capture_default_str();
    c_emb->add_option("--max-iter", emb.max_iter, "iteration cap")->capture_default_str();

    CvCliOptions cvo;
    CLI::App* c_cv = app.add_subcommand("cv", "cross-validated selection");
    c_cv->add_option("--in", cvo.in, "long-format input CSV")->required();
    c_cv->add_option("--out", cvo.out, "output directory")->required();
    c_cv->add_option("--var", cvo.var, "target variable")->capture_default_str();
    c_cv->add_option("--method", cvo.method, "soft, hard, regression or multivariate")
        ->capture_default_str();
    c_cv->add_option("--grid", cvo.grid_spec, "lambda grid (a:b:step, list, or auto)");
    c_cv->add_option("--rank-grid", cvo.rank_grid, "integer ranks (method hard)");
    c_cv->add_option("--covariates", cvo.covariates,
                     "comma list (regression / multivariate)");
    c_cv->add_option("--step1-grid", cvo.step1_grid, "step-1 candidates (regression)");
    c_cv->add_option("--truth", cvo.truth, "wide truth CSV for curve-mode scoring");
    add_grid_options(c_cv, cvo.grid);
    c_cv->add_option("--fractions", cvo.fractions, "train,validation,test")
        ->capture_default_str();
    c_cv->add_option("--seed", cvo.seed, "split seed")->capture_default_str();
    c_cv->add_option("--min-visits", cvo.min_visits,
                     "test cells only from rows with at least this many observations")
        ->capture_default_str();
    c_cv->add_option("--eps", cvo.eps, "convergence threshold")->capture_default_str();
    c_cv->add_option("--max-iter", cvo.max_iter, "iteration cap")->capture_default_str();
    c_cv->add_flag("--no-center", cvo.no_center, "skip mean-curve centering");
    c_cv->add_option("--jobs", cvo.jobs, "parallel candidate fits")->capture_default_str();

    EvalOptions evo;
    CLI::App* c_ev = app.add_subcommand("eval", "score predictions against truth curves");
    c_ev->add_option("--pred", evo.pred, "wide prediction CSV")->required();
    c_ev->add_option("--truth", evo.truth, "wide truth CSV")->required();
    c_ev->add_option("--var", evo.var, "restrict to one variable");
    c_ev->add_option("--subjects", evo.subjects, "restrict to a subject list");
    c_ev->add_option("--out", evo.out, "directory for result.json and the manifest");

    std::string rerun_manifest;
    std::string rerun_out;
    CLI::App* c_rr = app.add_subcommand("rerun", "replay a manifest");
    c_rr->add_option("--manifest", rerun_manifest, "manifest.json path")->required();
    c_rr->add_option("--out", rerun_out, "override the output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (c_sim->parsed()) return run_simulate(sim);
        if (c_fit->parsed()) return run_fit(fit);
        if (c_imp->parsed()) return run_impute(imp);
        if (c_reg->parsed()) return run_regress(reg);
        if (c_emb->parsed()) return run_embed(emb);
        if (c_cv->parsed()) return run_cv(cvo);
        if (c_ev->parsed()) return run_eval(evo);
        if (c_rr->parsed()) return run_rerun(rerun_manifest, rerun_out);
    } catch (const traj::DegeneracyError& e) {
        std::cerr << "numerical error: " << e.what() << std::endl;
        return 2;
    } catch (const traj::RankError& e) {
        std::cerr << "numerical error: " << e.what() << std::endl;
        return 2;
    } catch (const traj::SingularityError& e) {
        std::cerr << "numerical error: " << e.what() << std::endl;
        return 2;
    } catch (const traj::Error& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 1;
}
