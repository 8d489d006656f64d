#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "trajcomplete/completion.hpp"

namespace traj {

/// One process in a stacked design: its sparse data, basis and scale factor.
/// The solver fits scale * data, so block curves are recovered as
/// W_i B_i' / scale.
struct DesignBlock {
    SparseMatrix data;
    BasisMatrix basis;
    double scale = 1.0;
    std::string label;
};

/// Several sparse processes over the same subjects, stacked column-wise.
/// The combined basis is block-diagonal and stays orthonormal when every
/// block basis is.
class StackedDesign {
public:
    explicit StackedDesign(std::vector<DesignBlock> blocks);

    const std::vector<DesignBlock>& blocks() const { return blocks_; }
    std::size_t n_rows() const { return n_rows_; }
    std::size_t total_cols() const { return total_cols_; }      // sum of T_i
    std::size_t total_basis() const { return total_basis_; }    // sum of K_i
    std::size_t col_offset(std::size_t block) const { return col_offsets_[block]; }
    std::size_t basis_offset(std::size_t block) const { return basis_offsets_[block]; }

    /// Observed cells of the stacked N x (sum T_i) matrix, values scaled.
    std::vector<SparseMatrix::Entry> stacked_cells() const;

    /// Block-diagonal basis, (sum T_i) x (sum K_i).
    Eigen::MatrixXd stacked_basis() const;

private:
    std::vector<DesignBlock> blocks_;
    std::size_t n_rows_ = 0;
    std::size_t total_cols_ = 0;
    std::size_t total_basis_ = 0;
    std::vector<std::size_t> col_offsets_;
    std::vector<std::size_t> basis_offsets_;
};

/// Constant-in-time covariate as a degenerate one-column block with basis
/// [1]; missing values are simply absent cells.
DesignBlock constant_covariate_block(const std::vector<std::optional<double>>& values,
                                     double scale, std::string label);

/// SVD-decomposed joint solution: scores U (N x r), singular values S and
/// loadings V ((sum K_i) x r), restricted to the strictly positive rank.
struct LatentEmbedding {
    Eigen::MatrixXd U;
    Eigen::VectorXd S;
    Eigen::MatrixXd V;
    double lambda = 0.0;
    int rank = 0;

    Eigen::MatrixXd coefficients() const {
        if (rank == 0) return Eigen::MatrixXd::Zero(U.rows(), V.rows());
        return U * S.asDiagonal() * V.transpose();
    }
};

/// Joint fit of a stacked design along a lambda path.
struct MultivariateFit {
    std::vector<LambdaSolution> solutions;   // stacked coefficient solutions
    std::vector<LatentEmbedding> embeddings; // same order as solutions

    /// Fitted curves of one block at one lambda, scale divided out.
    Eigen::MatrixXd block_curves(const StackedDesign& design, std::size_t solution_index,
                                 std::size_t block_index) const;

    /// Loading rows belonging to one block at one lambda.
    Eigen::MatrixXd block_loadings(const StackedDesign& design, std::size_t solution_index,
                                   std::size_t block_index) const;
};

/// Soft-thresholded completion of the stacked system; reduces to soft_impute
/// when the design holds a single block with scale 1.
MultivariateFit multivariate_impute(const StackedDesign& design, const LambdaPath& path,
                                    double epsilon = 1e-5, int max_iter = 500);

/// Robust default scale: 1 / (1.4826 * median absolute deviation) of the
/// observed values; 1 when the deviation vanishes.
double default_scale(const SparseMatrix& data);

/// Joint latent representation W plus the basis-space relation A linking two
/// fully observed processes (Y curves = W A B'). Obtained from the SVD of
/// (X B : gamma Y B) truncated to the basis dimension.
struct BivariateEiv {
    Eigen::MatrixXd W;  // N x K
    Eigen::MatrixXd A;  // K x K
};

BivariateEiv bivariate_eiv(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                           const BasisMatrix& basis, double gamma);

/// Sparse-data variant: complete the stacked system at one lambda first, then
/// apply the same decomposition to the completed stacked coefficients.
BivariateEiv bivariate_eiv_sparse(const SparseMatrix& x, const SparseMatrix& y,
                                  const BasisMatrix& basis, double gamma, double lambda,
                                  double epsilon = 1e-5, int max_iter = 500);

}  // namespace traj
