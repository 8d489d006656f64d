#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trajcomplete/basis.hpp"

namespace traj {

/// One raw measurement: subject, variable, time, value.
struct ObservationRecord {
    std::string subject_id;
    std::string variable;
    double time = 0.0;
    double value = 0.0;
};

/// Index pair into an N x T matrix.
struct CellIndex {
    std::size_t row = 0;
    std::size_t col = 0;

    friend bool operator==(const CellIndex&, const CellIndex&) = default;
    friend auto operator<=>(const CellIndex&, const CellIndex&) = default;
};

/// Partially observed N x T matrix on a shared time grid. Immutable after
/// construction; entries are unique and sorted by (row, col).
class SparseMatrix {
public:
    struct Entry {
        std::size_t row = 0;
        std::size_t col = 0;
        double value = 0.0;
    };

    SparseMatrix() = default;
    SparseMatrix(std::size_t n_rows, std::size_t n_cols, std::vector<Entry> entries,
                 TimeGrid grid);

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_cols() const { return n_cols_; }
    std::size_t n_observed() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }
    const TimeGrid& grid() const { return grid_; }

    /// Observed values in place, zero elsewhere (the projection of the data
    /// matrix itself).
    Eigen::MatrixXd to_dense() const;

    /// `dense` restricted to the observed cells, zero elsewhere.
    Eigen::MatrixXd project(const Eigen::MatrixXd& dense) const;

    /// `dense` minus its projection: values only on unobserved cells.
    Eigen::MatrixXd project_complement(const Eigen::MatrixXd& dense) const;

    /// Number of observed cells per row.
    std::vector<std::size_t> row_counts() const;

    /// Copy containing only the cells listed in `keep`.
    SparseMatrix restrict_to(const std::vector<CellIndex>& keep) const;

    /// Copy with extra all-missing rows appended (or rows dropped is not
    /// allowed; n_rows must grow or stay).
    SparseMatrix with_rows(std::size_t new_n_rows) const;

private:
    std::size_t n_rows_ = 0;
    std::size_t n_cols_ = 0;
    std::vector<Entry> entries_;
    TimeGrid grid_;
};

/// Output of discretization: one sparse matrix per variable, all sharing the
/// same subject-row indexing, plus the subject order.
struct DiscretizedData {
    std::map<std::string, SparseMatrix> variables;
    std::vector<std::string> subject_ids;  // row index -> subject id

    const SparseMatrix& variable(const std::string& name) const;
};

/// Snap raw records onto the grid. Subjects get consecutive row indices in
/// order of first appearance across the whole record stream (so all variables
/// share row indexing); multiple records from one subject landing in one cell
/// are averaged.
DiscretizedData discretize(const std::vector<ObservationRecord>& records,
                           const TimeGrid& grid);

/// Emit records for every observed cell of a matrix (inverse of discretize
/// for on-grid data).
std::vector<ObservationRecord> to_records(const SparseMatrix& matrix,
                                          const std::vector<std::string>& subject_ids,
                                          const std::string& variable);

/// Disjoint partition of the observed cells.
struct SplitAssignment {
    std::vector<CellIndex> train;
    std::vector<CellIndex> validation;
    std::vector<CellIndex> test;
};

/// Random partition of the observed cells into train/validation/test with the
/// given fractions (largest-remainder rounding), reproducible from the seed.
/// Test cells are drawn only from rows with at least `min_visits` observed
/// cells; min_visits = 1 disables the constraint.
SplitAssignment split(const SparseMatrix& matrix, std::array<double, 3> fractions,
                      std::uint64_t seed, std::size_t min_visits = 1);

}  // namespace traj
