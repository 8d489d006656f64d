#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trajcomplete/basis.hpp"
#include "trajcomplete/data_model.hpp"
#include "trajcomplete/rng.hpp"

namespace traj {

/// Configuration of the synthetic benchmark cohort: three coupled processes
/// (x1, x2 and y = z + x1 + x2) generated in a K-dimensional spline space on
/// a coarse grid, observed sparsely with noise, fitted on a finer grid.
struct SimulationSpec {
    int n_subjects = 100;
    int t_gen = 31;  // generation grid
    int t_fit = 51;  // fitting / truth grid
    int n_basis = 7;
    int degree = 3;
    double obs_fraction = 0.10;
    double noise_sd = 0.25;
    std::uint64_t seed = 1;
    bool shared_mask = false;  // one observation mask for all variables
    // One (Sigma_a, Sigma_b, mu) draw shared by x1, x2 and z; false redraws
    // them per matrix (fully independent processes).
    bool shared_structure = true;
    // Evaluate generated curves with the orthonormalized basis (the basis the
    // solvers use); false keeps the raw partition-of-unity B-splines.
    bool orthonormal_gen_basis = true;
    // Sample the observation mask on the fit grid; false samples it on the
    // generation grid and snaps the observation times onto the fit grid.
    bool mask_on_fit_grid = true;
    double t_min = 0.0;
    double t_max = 1.0;

    void validate() const;
};

/// Symmetric PSD matrix with the entries of `eigenvalues` as its exact
/// spectrum, oriented by a random orthogonal factor (from the SVD of an
/// i.i.d. standard normal matrix).
Eigen::MatrixXd gen_covariance(const Eigen::VectorXd& eigenvalues, Rng& rng);

/// Two-group coefficient cohort: one shared mean direction mu ~ N(0, I_K);
/// the first floor(N/3) rows draw from N(2 mu, Sigma_a), the rest from
/// N(-mu, Sigma_b), with Sigma_* built by gen_covariance.
Eigen::MatrixXd gen_cohort(const Eigen::VectorXd& spectrum_a,
                           const Eigen::VectorXd& spectrum_b, int n_basis, int n_subjects,
                           Rng& rng);

/// Default spectra for the two cohort groups: a fast-decaying sequence with
/// two strong directions and an exponential tail.
Eigen::VectorXd default_spectrum_a(int n_basis);
Eigen::VectorXd default_spectrum_b(int n_basis);

/// All artifacts of one simulated study.
struct SimulatedStudy {
    std::vector<std::string> subject_ids;
    std::vector<std::string> variable_names;          // {"x1", "x2", "y"}
    std::vector<ObservationRecord> records;           // noisy, times on the gen grid
    std::map<std::string, SparseMatrix> sparse;       // snapped onto the fit grid
    std::map<std::string, Eigen::MatrixXd> truth;     // noiseless curves, N x T_fit
    std::map<std::string, Eigen::MatrixXd> coefficients;  // N x K
    TimeGrid fit_grid;
    BasisMatrix fit_basis;  // basis the truth curves live in, on the fit grid
};

/// Deterministic end-to-end generator: coefficients, curves, masks, noise.
/// Identical spec (including seed) produces bit-identical output.
SimulatedStudy simulate_study(const SimulationSpec& spec);

}  // namespace traj
