#include "trajcomplete/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>

#include "trajcomplete/rng.hpp"

namespace traj {

SparseMatrix::SparseMatrix(std::size_t n_rows, std::size_t n_cols,
                           std::vector<Entry> entries, TimeGrid grid)
    : n_rows_(n_rows), n_cols_(n_cols), entries_(std::move(entries)), grid_(std::move(grid)) {
    std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const Entry& e = entries_[i];
        if (e.row >= n_rows_ || e.col >= n_cols_)
            throw DimensionError("sparse entry index out of bounds");
        if (!std::isfinite(e.value))
            throw DataError("sparse entry value is not finite");
        if (i > 0 && entries_[i - 1].row == e.row && entries_[i - 1].col == e.col)
            throw DataError("duplicate sparse entry; resolve collisions at ingestion");
    }
}

Eigen::MatrixXd SparseMatrix::to_dense() const {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_rows_),
                                                static_cast<Eigen::Index>(n_cols_));
    for (const Entry& e : entries_)
        out(static_cast<Eigen::Index>(e.row), static_cast<Eigen::Index>(e.col)) = e.value;
    return out;
}

Eigen::MatrixXd SparseMatrix::project(const Eigen::MatrixXd& dense) const {
    if (dense.rows() != static_cast<Eigen::Index>(n_rows_) ||
        dense.cols() != static_cast<Eigen::Index>(n_cols_))
        throw DimensionError("matrix shape does not match the observation pattern");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dense.rows(), dense.cols());
    for (const Entry& e : entries_) {
        const auto r = static_cast<Eigen::Index>(e.row);
        const auto c = static_cast<Eigen::Index>(e.col);
        out(r, c) = dense(r, c);
    }
    return out;
}

Eigen::MatrixXd SparseMatrix::project_complement(const Eigen::MatrixXd& dense) const {
    return dense - project(dense);
}

std::vector<std::size_t> SparseMatrix::row_counts() const {
    std::vector<std::size_t> counts(n_rows_, 0);
    for (const Entry& e : entries_) ++counts[e.row];
    return counts;
}

SparseMatrix SparseMatrix::restrict_to(const std::vector<CellIndex>& keep) const {
    std::vector<CellIndex> sorted = keep;
    std::sort(sorted.begin(), sorted.end());
    std::vector<Entry> kept;
    kept.reserve(sorted.size());
    for (const Entry& e : entries_) {
        if (std::binary_search(sorted.begin(), sorted.end(), CellIndex{e.row, e.col}))
            kept.push_back(e);
    }
    return SparseMatrix(n_rows_, n_cols_, std::move(kept), grid_);
}

SparseMatrix SparseMatrix::with_rows(std::size_t new_n_rows) const {
    if (new_n_rows < n_rows_)
        throw DimensionError("cannot shrink a sparse matrix row count");
    return SparseMatrix(new_n_rows, n_cols_, entries_, grid_);
}

const SparseMatrix& DiscretizedData::variable(const std::string& name) const {
    const auto it = variables.find(name);
    if (it == variables.end()) throw IndexError("unknown variable: " + name);
    return it->second;
}

DiscretizedData discretize(const std::vector<ObservationRecord>& records,
                           const TimeGrid& grid) {
    if (records.empty()) throw DataError("no records to discretize");
    grid.validate();

    for (const ObservationRecord& r : records) {
        if (!std::isfinite(r.time) || !std::isfinite(r.value)) {
            std::ostringstream os;
            os << "non-finite record for subject " << r.subject_id << " variable "
               << r.variable;
            throw DataError(os.str());
        }
        if (r.time < grid.t_min || r.time > grid.t_max) {
            std::ostringstream os;
            os << "record out of grid range: subject " << r.subject_id << " variable "
               << r.variable << " time " << r.time << " not in [" << grid.t_min << ", "
               << grid.t_max << "]";
            throw RangeError(os.str());
        }
    }

    // Row order: first appearance across the whole stream.
    std::unordered_map<std::string, std::size_t> subject_row;
    std::vector<std::string> subject_ids;
    for (const ObservationRecord& r : records) {
        if (subject_row.emplace(r.subject_id, subject_ids.size()).second)
            subject_ids.push_back(r.subject_id);
    }
    const std::size_t n = subject_ids.size();
    const std::size_t t = grid.size();

    // Accumulate sums and counts per (variable, cell); collisions average.
    struct Acc {
        double sum = 0.0;
        std::size_t count = 0;
    };
    std::map<std::string, std::map<CellIndex, Acc>> cells;
    for (const ObservationRecord& r : records) {
        const std::size_t row = subject_row.at(r.subject_id);
        const std::size_t col = snap_to_grid({r.time}, grid).front();
        Acc& acc = cells[r.variable][CellIndex{row, col}];
        acc.sum += r.value;
        acc.count += 1;
    }

    DiscretizedData out;
    out.subject_ids = std::move(subject_ids);
    for (auto& [name, per_cell] : cells) {
        std::vector<SparseMatrix::Entry> entries;
        entries.reserve(per_cell.size());
        for (const auto& [cell, acc] : per_cell)
            entries.push_back({cell.row, cell.col, acc.sum / static_cast<double>(acc.count)});
        out.variables.emplace(name, SparseMatrix(n, t, std::move(entries), grid));
    }
    return out;
}

std::vector<ObservationRecord> to_records(const SparseMatrix& matrix,
                                          const std::vector<std::string>& subject_ids,
                                          const std::string& variable) {
    if (subject_ids.size() != matrix.n_rows())
        throw DimensionError("subject id list does not match row count");
    std::vector<ObservationRecord> records;
    records.reserve(matrix.n_observed());
    for (const SparseMatrix::Entry& e : matrix.entries())
        records.push_back({subject_ids[e.row], variable, matrix.grid().points[e.col], e.value});
    return records;
}

SplitAssignment split(const SparseMatrix& matrix, std::array<double, 3> fractions,
                      std::uint64_t seed, std::size_t min_visits) {
    double total = 0.0;
    for (const double f : fractions) {
        if (f < 0) throw ArgumentError("split fractions must be non-negative");
        total += f;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw ArgumentError("split fractions must sum to 1");

    const std::size_t m = matrix.n_observed();

    // Largest-remainder apportionment of m cells over the three parts.
    std::array<std::size_t, 3> sizes{};
    std::array<double, 3> remainders{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double exact = fractions[i] * static_cast<double>(m);
        sizes[i] = static_cast<std::size_t>(std::floor(exact));
        remainders[i] = exact - std::floor(exact);
        assigned += sizes[i];
    }
    while (assigned < m) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < 3; ++i)
            if (remainders[i] > remainders[best]) best = i;
        ++sizes[best];
        remainders[best] = -1.0;
        ++assigned;
    }

    const std::vector<std::size_t> counts = matrix.row_counts();
    std::vector<CellIndex> cells;
    cells.reserve(m);
    for (const SparseMatrix::Entry& e : matrix.entries())
        cells.push_back({e.row, e.col});
    Rng rng(seed);
    rng.shuffle(cells);

    // Test cells come only from qualifying rows; everything else goes to the
    // train/validation pool in shuffled order.
    SplitAssignment out;
    std::vector<CellIndex> pool;
    pool.reserve(m);
    for (const CellIndex& c : cells) {
        if (out.test.size() < sizes[2] && counts[c.row] >= min_visits)
            out.test.push_back(c);
        else
            pool.push_back(c);
    }
    if (out.test.size() < sizes[2])
        throw ConfigError("not enough observations in rows with min_visits to fill the test set");
    for (const CellIndex& c : pool) {
        if (out.train.size() < sizes[0])
            out.train.push_back(c);
        else
            out.validation.push_back(c);
    }
    return out;
}

}  // namespace traj
