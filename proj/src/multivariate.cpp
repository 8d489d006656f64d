#include "trajcomplete/multivariate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace traj {

StackedDesign::StackedDesign(std::vector<DesignBlock> blocks) : blocks_(std::move(blocks)) {
    if (blocks_.empty()) throw ArgumentError("stacked design needs at least one block");
    n_rows_ = blocks_.front().data.n_rows();
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const DesignBlock& b = blocks_[i];
        if (b.data.n_rows() != n_rows_)
            throw DimensionError("all blocks must share the subject rows");
        if (!(b.scale > 0)) throw ArgumentError("block scale must be positive");
        if (b.data.n_cols() != static_cast<std::size_t>(b.basis.values.rows()))
            throw DimensionError("block basis grid does not match its data columns");
        col_offsets_.push_back(total_cols_);
        basis_offsets_.push_back(total_basis_);
        total_cols_ += b.data.n_cols();
        total_basis_ += static_cast<std::size_t>(b.basis.values.cols());
    }
}

std::vector<SparseMatrix::Entry> StackedDesign::stacked_cells() const {
    std::vector<SparseMatrix::Entry> cells;
    std::size_t total = 0;
    for (const DesignBlock& b : blocks_) total += b.data.n_observed();
    cells.reserve(total);
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const DesignBlock& b = blocks_[i];
        const std::size_t off = col_offsets_[i];
        for (const SparseMatrix::Entry& e : b.data.entries())
            cells.push_back({e.row, e.col + off, b.scale * e.value});
    }
    return cells;
}

Eigen::MatrixXd StackedDesign::stacked_basis() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(total_cols_),
                                                static_cast<Eigen::Index>(total_basis_));
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const Eigen::MatrixXd& b = blocks_[i].basis.values;
        out.block(static_cast<Eigen::Index>(col_offsets_[i]),
                  static_cast<Eigen::Index>(basis_offsets_[i]), b.rows(), b.cols()) = b;
    }
    return out;
}

DesignBlock constant_covariate_block(const std::vector<std::optional<double>>& values,
                                     double scale, std::string label) {
    std::vector<SparseMatrix::Entry> cells;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (values[i]) cells.push_back({i, 0, *values[i]});
    TimeGrid degenerate;
    degenerate.t_min = 0.0;
    degenerate.t_max = 0.0;
    degenerate.points = {0.0};
    DesignBlock block;
    block.data = SparseMatrix(values.size(), 1, std::move(cells), degenerate);
    block.basis.values = Eigen::MatrixXd::Ones(1, 1);
    block.basis.grid = degenerate;
    block.basis.orthonormal = true;
    block.scale = scale;
    block.label = std::move(label);
    return block;
}

namespace {

LatentEmbedding embed(const Eigen::MatrixXd& w, double lambda) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(w, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& d = svd.singularValues();
    const double floor = d.size() > 0 ? d[0] * 1e-10 : 0.0;
    int rank = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i)
        if (d[i] > floor && d[i] > 0.0) rank = static_cast<int>(i) + 1;

    LatentEmbedding e;
    e.lambda = lambda;
    e.rank = rank;
    e.U = svd.matrixU().leftCols(rank);
    e.S = d.head(rank);
    e.V = svd.matrixV().leftCols(rank);
    return e;
}

}  // namespace

Eigen::MatrixXd MultivariateFit::block_curves(const StackedDesign& design,
                                              std::size_t solution_index,
                                              std::size_t block_index) const {
    const LambdaSolution& sol = solutions.at(solution_index);
    const DesignBlock& block = design.blocks().at(block_index);
    const auto koff = static_cast<Eigen::Index>(design.basis_offset(block_index));
    const Eigen::Index kw = block.basis.values.cols();
    return sol.W.middleCols(koff, kw) * block.basis.values.transpose() / block.scale;
}

Eigen::MatrixXd MultivariateFit::block_loadings(const StackedDesign& design,
                                                std::size_t solution_index,
                                                std::size_t block_index) const {
    const LatentEmbedding& e = embeddings.at(solution_index);
    const DesignBlock& block = design.blocks().at(block_index);
    const auto koff = static_cast<Eigen::Index>(design.basis_offset(block_index));
    return e.V.middleRows(koff, block.basis.values.cols());
}

MultivariateFit multivariate_impute(const StackedDesign& design, const LambdaPath& path,
                                    double epsilon, int max_iter) {
    for (const DesignBlock& b : design.blocks())
        if (!b.basis.orthonormal)
            throw ContractError("every block basis must be orthonormal (block '" +
                                b.label + "')");

    detail::PathSolveSpec spec;
    spec.kind = Thresholding::soft;
    spec.epsilon = epsilon;
    spec.max_iter = max_iter;

    MultivariateFit fit;
    fit.solutions = detail::solve_path(design.stacked_cells(), design.n_rows(),
                                       design.stacked_basis(), path, spec);
    fit.embeddings.reserve(fit.solutions.size());
    for (const LambdaSolution& sol : fit.solutions)
        fit.embeddings.push_back(embed(sol.W, sol.lambda));
    return fit;
}

double default_scale(const SparseMatrix& data) {
    if (data.n_observed() == 0) return 1.0;
    std::vector<double> values;
    values.reserve(data.n_observed());
    for (const SparseMatrix::Entry& e : data.entries()) values.push_back(e.value);

    const auto median_of = [](std::vector<double> v) {
        const std::size_t mid = v.size() / 2;
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
        double m = v[mid];
        if (v.size() % 2 == 0) {
            std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid) - 1,
                             v.end());
            m = 0.5 * (m + v[mid - 1]);
        }
        return m;
    };

    const double center = median_of(values);
    for (double& v : values) v = std::abs(v - center);
    const double mad = median_of(values);
    const double robust_sd = 1.4826 * mad;
    return robust_sd > 0 ? 1.0 / robust_sd : 1.0;
}

namespace {

BivariateEiv decompose_stacked(const Eigen::MatrixXd& stacked, Eigen::Index k, double gamma) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(stacked,
                                          Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.matrixV().cols() < k)
        throw DimensionError("need at least K subjects for the K-truncated SVD");

    const Eigen::MatrixXd u1 = svd.matrixU().leftCols(k);
    const Eigen::VectorXd s11 = svd.singularValues().head(k);
    const Eigen::MatrixXd v_top = svd.matrixV().topRows(k).leftCols(k);     // V11
    const Eigen::MatrixXd v_bottom = svd.matrixV().bottomRows(k).leftCols(k);  // V21

    Eigen::JacobiSVD<Eigen::MatrixXd> cond_svd(v_top);
    const double smax = cond_svd.singularValues()[0];
    const double smin = cond_svd.singularValues()[k - 1];
    if (!(smin > 0) || smax / smin > 1e10) {
        std::ostringstream os;
        os << "V11 block is numerically singular (condition "
           << (smin > 0 ? smax / smin : std::numeric_limits<double>::infinity()) << ")";
        throw SingularityError(os.str());
    }

    // (I : gamma A) = (V11')^{-1} [V11' V21']  =>  gamma A = (V11')^{-1} V21'
    BivariateEiv out;
    out.A = v_top.transpose().partialPivLu().solve(v_bottom.transpose()) / gamma;
    out.W = u1 * s11.asDiagonal() * v_top.transpose();
    return out;
}

}  // namespace

BivariateEiv bivariate_eiv(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                           const BasisMatrix& basis, double gamma) {
    if (!(gamma > 0)) throw ArgumentError("gamma must be positive");
    if (!basis.orthonormal) throw ContractError("basis must be orthonormal");
    if (x.rows() != y.rows()) throw DimensionError("X and Y must share subject rows");
    if (x.cols() != basis.values.rows() || y.cols() != basis.values.rows())
        throw DimensionError("X and Y must live on the basis grid");

    const Eigen::Index k = basis.values.cols();
    Eigen::MatrixXd stacked(x.rows(), 2 * k);
    stacked.leftCols(k) = x * basis.values;
    stacked.rightCols(k) = gamma * (y * basis.values);
    return decompose_stacked(stacked, k, gamma);
}

BivariateEiv bivariate_eiv_sparse(const SparseMatrix& x, const SparseMatrix& y,
                                  const BasisMatrix& basis, double gamma, double lambda,
                                  double epsilon, int max_iter) {
    if (!(gamma > 0)) throw ArgumentError("gamma must be positive");
    std::vector<DesignBlock> blocks;
    blocks.push_back({x, basis, 1.0, "x"});
    blocks.push_back({y, basis, gamma, "y"});
    const StackedDesign design(std::move(blocks));
    const MultivariateFit fit =
        multivariate_impute(design, LambdaPath::from_values({lambda}), epsilon, max_iter);
    return decompose_stacked(fit.solutions.front().W, basis.values.cols(), gamma);
}

}  // namespace traj
