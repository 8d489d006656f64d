#include "trajcomplete/simulation.hpp"

#include <cmath>
#include <map>
#include <sstream>
#include <utility>

namespace traj {

void SimulationSpec::validate() const {
    if (n_subjects < 3) throw ArgumentError("simulation needs at least 3 subjects");
    if (t_gen < 2 || t_fit < 2) throw ArgumentError("grids need at least 2 points");
    if (n_basis < degree + 1 || n_basis > t_gen || n_basis > t_fit)
        throw ArgumentError("invalid basis size for the grids");
    if (!(obs_fraction > 0) || obs_fraction > 1)
        throw ArgumentError("obs_fraction must be in (0, 1]");
    if (noise_sd < 0) throw ArgumentError("noise_sd must be non-negative");
    if (!(t_min < t_max)) throw ArgumentError("t_min must be below t_max");
}

Eigen::MatrixXd gen_covariance(const Eigen::VectorXd& eigenvalues, Rng& rng) {
    const Eigen::Index k = eigenvalues.size();
    for (Eigen::Index i = 0; i < k; ++i)
        if (eigenvalues[i] < 0)
            throw ArgumentError("covariance eigenvalues must be non-negative");

    Eigen::MatrixXd random(k, k);
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) random(i, j) = rng.normal();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(random, Eigen::ComputeFullV);
    const Eigen::MatrixXd v = svd.matrixV();
    return v * eigenvalues.asDiagonal() * v.transpose();
}

namespace {

// Symmetric PSD square root via eigendecomposition, tiny negatives clamped.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    Eigen::VectorXd vals = eig.eigenvalues();
    for (Eigen::Index i = 0; i < vals.size(); ++i)
        vals[i] = vals[i] > 0 ? std::sqrt(vals[i]) : 0.0;
    return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

}  // namespace

Eigen::MatrixXd gen_cohort(const Eigen::VectorXd& spectrum_a,
                           const Eigen::VectorXd& spectrum_b, int n_basis, int n_subjects,
                           Rng& rng) {
    if (n_subjects < 3) throw ArgumentError("cohort needs at least 3 subjects");
    if (spectrum_a.size() != n_basis || spectrum_b.size() != n_basis)
        throw DimensionError("spectra must have one entry per basis function");

    const Eigen::MatrixXd sqrt_a = psd_sqrt(gen_covariance(spectrum_a, rng));
    const Eigen::MatrixXd sqrt_b = psd_sqrt(gen_covariance(spectrum_b, rng));

    Eigen::VectorXd mu(n_basis);
    for (Eigen::Index i = 0; i < n_basis; ++i) mu[i] = rng.normal();

    const int n_first = n_subjects / 3;
    Eigen::MatrixXd cohort(n_subjects, n_basis);
    Eigen::VectorXd z(n_basis);
    for (int i = 0; i < n_subjects; ++i) {
        for (Eigen::Index j = 0; j < n_basis; ++j) z[j] = rng.normal();
        if (i < n_first)
            cohort.row(i) = (2.0 * mu + sqrt_a * z).transpose();
        else
            cohort.row(i) = (-mu + sqrt_b * z).transpose();
    }
    return cohort;
}

Eigen::VectorXd default_spectrum_a(int n_basis) {
    if (n_basis < 3) throw ArgumentError("spectrum needs at least 3 entries");
    Eigen::VectorXd r(n_basis);
    r[0] = 1.0;
    r[1] = 0.4;
    r[2] = 0.005;
    for (int j = 3; j < n_basis; ++j) r[j] = 0.1 * std::exp(-static_cast<double>(j));
    return r;
}

Eigen::VectorXd default_spectrum_b(int n_basis) {
    Eigen::VectorXd r = default_spectrum_a(n_basis);
    r[0] = 1.3;
    r[1] = 0.2;
    return r;
}

namespace {

// Rows of a two-group cohort given fixed group parameters.
Eigen::MatrixXd sample_cohort_rows(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sqrt_a,
                                   const Eigen::MatrixXd& sqrt_b, int n_subjects,
                                   Rng& rng) {
    const Eigen::Index k = mu.size();
    const int n_first = n_subjects / 3;
    Eigen::MatrixXd cohort(n_subjects, k);
    Eigen::VectorXd z(k);
    for (int i = 0; i < n_subjects; ++i) {
        for (Eigen::Index j = 0; j < k; ++j) z[j] = rng.normal();
        if (i < n_first)
            cohort.row(i) = (2.0 * mu + sqrt_a * z).transpose();
        else
            cohort.row(i) = (-mu + sqrt_b * z).transpose();
    }
    return cohort;
}

}  // namespace

SimulatedStudy simulate_study(const SimulationSpec& spec) {
    spec.validate();
    const Rng root(spec.seed);

    SimulatedStudy study;
    study.variable_names = {"x1", "x2", "y"};
    study.fit_grid = TimeGrid::uniform(spec.t_min, spec.t_max,
                                       static_cast<std::size_t>(spec.t_fit));
    const BasisMatrix fit_raw =
        make_bspline_basis(study.fit_grid, spec.n_basis, spec.degree);
    study.fit_basis = spec.orthonormal_gen_basis ? orthonormalize(fit_raw) : fit_raw;
    const TimeGrid gen_grid =
        TimeGrid::uniform(spec.t_min, spec.t_max, static_cast<std::size_t>(spec.t_gen));
    const BasisMatrix gen_raw = make_bspline_basis(gen_grid, spec.n_basis, spec.degree);
    const BasisMatrix gen_basis =
        spec.orthonormal_gen_basis ? orthonormalize(gen_raw) : gen_raw;

    for (int i = 0; i < spec.n_subjects; ++i) {
        std::ostringstream os;
        os << "s" << (i + 1);
        study.subject_ids.push_back(os.str());
    }

    const Eigen::VectorXd ra = default_spectrum_a(spec.n_basis);
    const Eigen::VectorXd rb = default_spectrum_b(spec.n_basis);

    Rng rng_x1 = root.child(1);
    Rng rng_x2 = root.child(2);
    Rng rng_z = root.child(3);
    Eigen::MatrixXd x1, x2, z;
    if (spec.shared_structure) {
        Rng rng_shape = root.child(0);
        const Eigen::MatrixXd sqrt_a = psd_sqrt(gen_covariance(ra, rng_shape));
        const Eigen::MatrixXd sqrt_b = psd_sqrt(gen_covariance(rb, rng_shape));
        Eigen::VectorXd mu(spec.n_basis);
        for (Eigen::Index i = 0; i < mu.size(); ++i) mu[i] = rng_shape.normal();
        x1 = sample_cohort_rows(mu, sqrt_a, sqrt_b, spec.n_subjects, rng_x1);
        x2 = sample_cohort_rows(mu, sqrt_a, sqrt_b, spec.n_subjects, rng_x2);
        z = sample_cohort_rows(mu, sqrt_a, sqrt_b, spec.n_subjects, rng_z);
    } else {
        x1 = gen_cohort(ra, rb, spec.n_basis, spec.n_subjects, rng_x1);
        x2 = gen_cohort(ra, rb, spec.n_basis, spec.n_subjects, rng_x2);
        z = gen_cohort(ra, rb, spec.n_basis, spec.n_subjects, rng_z);
    }

    study.coefficients["x1"] = x1;
    study.coefficients["x2"] = x2;
    study.coefficients["y"] = z + x1 + x2;

    for (const std::string& var : study.variable_names)
        study.truth[var] = study.coefficients[var] * study.fit_basis.values.transpose();

    // Observations live either on the fit grid directly or on the coarser
    // generation grid (snapped onto the fit grid afterwards).
    const TimeGrid& obs_grid = spec.mask_on_fit_grid ? study.fit_grid : gen_grid;
    const BasisMatrix& obs_basis = spec.mask_on_fit_grid ? study.fit_basis : gen_basis;
    const int obs_t = static_cast<int>(obs_grid.size());
    const std::vector<std::size_t> snapped = snap_to_grid(obs_grid.points, study.fit_grid);

    // Masks and noise per variable; the shared-mask flag reuses one stream so
    // every variable sees the identical observation pattern.
    std::map<std::string, Eigen::MatrixXd> noisy;   // values on the observation grid
    std::map<std::string, Eigen::MatrixXd> masked;  // 1 = observed
    for (std::size_t vi = 0; vi < study.variable_names.size(); ++vi) {
        const std::string& var = study.variable_names[vi];
        const Eigen::MatrixXd curves_obs =
            study.coefficients[var] * obs_basis.values.transpose();

        Rng rng_mask = root.child(spec.shared_mask ? 10 : 10 + vi);
        Rng rng_noise = root.child(20 + vi);

        Eigen::MatrixXd values = curves_obs;
        Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(spec.n_subjects, obs_t);
        for (int i = 0; i < spec.n_subjects; ++i) {
            for (int j = 0; j < obs_t; ++j) {
                if (!rng_mask.bernoulli(spec.obs_fraction)) continue;
                mask(i, j) = 1.0;
                values(i, j) += spec.noise_sd * rng_noise.normal();
            }
        }
        noisy.emplace(var, std::move(values));
        masked.emplace(var, std::move(mask));
    }

    // Records subject-major so CSV round trips preserve the row order.
    for (int i = 0; i < spec.n_subjects; ++i)
        for (const std::string& var : study.variable_names)
            for (int j = 0; j < obs_t; ++j)
                if (masked.at(var)(i, j) > 0)
                    study.records.push_back(
                        {study.subject_ids[static_cast<std::size_t>(i)], var,
                         obs_grid.points[static_cast<std::size_t>(j)],
                         noisy.at(var)(i, j)});

    // Sparse matrices on the fit grid; snap collisions average.
    for (const std::string& var : study.variable_names) {
        std::map<std::pair<std::size_t, std::size_t>, std::pair<double, std::size_t>> acc;
        for (int i = 0; i < spec.n_subjects; ++i) {
            for (int j = 0; j < obs_t; ++j) {
                if (masked.at(var)(i, j) <= 0) continue;
                auto& slot = acc[{static_cast<std::size_t>(i),
                                  snapped[static_cast<std::size_t>(j)]}];
                slot.first += noisy.at(var)(i, j);
                slot.second += 1;
            }
        }
        std::vector<SparseMatrix::Entry> fit_cells;
        fit_cells.reserve(acc.size());
        for (const auto& [cell, sum_count] : acc)
            fit_cells.push_back({cell.first, cell.second,
                                 sum_count.first / static_cast<double>(sum_count.second)});
        study.sparse.emplace(
            var, SparseMatrix(static_cast<std::size_t>(spec.n_subjects),
                              static_cast<std::size_t>(spec.t_fit), std::move(fit_cells),
                              study.fit_grid));
    }
    return study;
}

}  // namespace traj
