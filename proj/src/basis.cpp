#include "trajcomplete/basis.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace traj {

TimeGrid TimeGrid::uniform(double t_min, double t_max, std::size_t n_points) {
    if (n_points < 2) throw ArgumentError("TimeGrid needs at least 2 points");
    if (!(t_min < t_max)) throw ArgumentError("TimeGrid requires t_min < t_max");
    TimeGrid g;
    g.t_min = t_min;
    g.t_max = t_max;
    g.points.resize(n_points);
    const double step = (t_max - t_min) / static_cast<double>(n_points - 1);
    for (std::size_t i = 0; i < n_points; ++i)
        g.points[i] = t_min + static_cast<double>(i) * step;
    g.points.back() = t_max;
    return g;
}

void TimeGrid::validate() const {
    if (points.size() < 2) throw ArgumentError("TimeGrid needs at least 2 points");
    if (points.front() != t_min || points.back() != t_max)
        throw ArgumentError("TimeGrid endpoints do not match t_min/t_max");
    const double step = spacing();
    if (!(step > 0)) throw ArgumentError("TimeGrid must be strictly increasing");
    const double span = t_max - t_min;
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double d = points[i] - points[i - 1];
        if (!(d > 0)) throw ArgumentError("TimeGrid must be strictly increasing");
        if (std::abs(d - step) > 1e-12 * span)
            throw ArgumentError("TimeGrid points are not equidistant");
    }
}

namespace {

// Clamped knot vector: degree+1 copies of each endpoint, n_basis-degree-1
// equally spaced interior knots.
std::vector<double> clamped_knots(int n_basis, int degree, double t_min, double t_max) {
    const int n_knots = n_basis + degree + 1;
    const int n_spans = n_basis - degree;  // interior spans
    std::vector<double> knots(static_cast<std::size_t>(n_knots));
    const double step = (t_max - t_min) / static_cast<double>(n_spans);
    for (int i = 0; i < n_knots; ++i) {
        if (i <= degree) {
            knots[static_cast<std::size_t>(i)] = t_min;
        } else if (i >= n_basis) {
            knots[static_cast<std::size_t>(i)] = t_max;
        } else {
            knots[static_cast<std::size_t>(i)] = t_min + step * static_cast<double>(i - degree);
        }
    }
    return knots;
}

// Index of the knot span containing t; the right endpoint belongs to the
// last non-degenerate span.
int find_span(const std::vector<double>& knots, int n_basis, int degree, double t) {
    if (t >= knots[static_cast<std::size_t>(n_basis)]) return n_basis - 1;
    int lo = degree;
    int hi = n_basis;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        if (t < knots[static_cast<std::size_t>(mid)])
            hi = mid;
        else
            lo = mid;
    }
    return lo;
}

}  // namespace

Eigen::VectorXd bspline_values_at(double t, int n_basis, int degree, double t_min,
                                  double t_max) {
    if (degree < 0) throw ArgumentError("spline degree must be non-negative");
    if (n_basis < degree + 1)
        throw ArgumentError("need at least degree+1 basis functions");
    if (t < t_min || t > t_max) {
        std::ostringstream os;
        os << "time " << t << " outside [" << t_min << ", " << t_max << "]";
        throw RangeError(os.str());
    }

    const std::vector<double> knots = clamped_knots(n_basis, degree, t_min, t_max);
    const int span = find_span(knots, n_basis, degree, t);

    // Iterative triangle: values of the degree+1 functions supported on the
    // span, i.e. basis indices span-degree .. span.
    std::vector<double> local(static_cast<std::size_t>(degree) + 1, 0.0);
    std::vector<double> left(static_cast<std::size_t>(degree) + 1, 0.0);
    std::vector<double> right(static_cast<std::size_t>(degree) + 1, 0.0);
    local[0] = 1.0;
    for (int j = 1; j <= degree; ++j) {
        left[static_cast<std::size_t>(j)] = t - knots[static_cast<std::size_t>(span + 1 - j)];
        right[static_cast<std::size_t>(j)] = knots[static_cast<std::size_t>(span + j)] - t;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double denom = right[static_cast<std::size_t>(r + 1)] +
                                 left[static_cast<std::size_t>(j - r)];
            const double temp = denom != 0.0 ? local[static_cast<std::size_t>(r)] / denom : 0.0;
            local[static_cast<std::size_t>(r)] =
                saved + right[static_cast<std::size_t>(r + 1)] * temp;
            saved = left[static_cast<std::size_t>(j - r)] * temp;
        }
        local[static_cast<std::size_t>(j)] = saved;
    }

    Eigen::VectorXd row = Eigen::VectorXd::Zero(n_basis);
    for (int r = 0; r <= degree; ++r)
        row[span - degree + r] = local[static_cast<std::size_t>(r)];
    return row;
}

BasisMatrix make_bspline_basis(const TimeGrid& grid, int n_basis, int degree) {
    grid.validate();
    if (degree < 0) throw ArgumentError("spline degree must be non-negative");
    if (n_basis < degree + 1)
        throw ArgumentError("need at least degree+1 basis functions");
    if (static_cast<std::size_t>(n_basis) > grid.size())
        throw DimensionError("more basis functions than grid points");

    BasisMatrix b;
    b.grid = grid;
    b.orthonormal = false;
    b.values.resize(static_cast<Eigen::Index>(grid.size()), n_basis);
    for (std::size_t j = 0; j < grid.size(); ++j)
        b.values.row(static_cast<Eigen::Index>(j)) =
            bspline_values_at(grid.points[j], n_basis, degree, grid.t_min, grid.t_max)
                .transpose();
    return b;
}

BasisMatrix orthonormalize(const BasisMatrix& basis) {
    const Eigen::Index t = basis.values.rows();
    const Eigen::Index k = basis.values.cols();
    if (k > t) throw DimensionError("more basis functions than grid points");

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(basis.values);
    rank_check.setThreshold(1e-10);
    const Eigen::Index rank = rank_check.rank();
    if (rank < k) {
        std::ostringstream os;
        os << "basis is rank deficient: " << (k - rank) << " of " << k
           << " columns are linearly dependent";
        throw DegeneracyError(os.str());
    }

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(basis.values);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(t, k);

    // Deterministic sign: first non-negligible entry of each column positive.
    for (Eigen::Index j = 0; j < k; ++j) {
        const double scale = q.col(j).cwiseAbs().maxCoeff();
        for (Eigen::Index i = 0; i < t; ++i) {
            if (std::abs(q(i, j)) > 1e-10 * scale) {
                if (q(i, j) < 0) q.col(j) = -q.col(j);
                break;
            }
        }
    }

    BasisMatrix out;
    out.values = std::move(q);
    out.grid = basis.grid;
    out.orthonormal = true;
    return out;
}

std::vector<std::size_t> snap_to_grid(const std::vector<double>& times,
                                      const TimeGrid& grid) {
    grid.validate();
    const std::size_t t_count = grid.size();
    const double step = grid.spacing();

    std::vector<std::size_t> indices;
    indices.reserve(times.size());
    for (const double t : times) {
        if (t < grid.t_min || t > grid.t_max) {
            std::ostringstream os;
            os << "time " << t << " outside grid range [" << grid.t_min << ", "
               << grid.t_max << "]";
            throw RangeError(os.str());
        }
        const double u = (t - grid.t_min) / step;
        const auto base = static_cast<long long>(std::floor(u));
        std::size_t best = 0;
        double best_dist = std::numeric_limits<double>::infinity();
        for (long long c = base - 1; c <= base + 1; ++c) {
            if (c < 0 || c >= static_cast<long long>(t_count)) continue;
            const auto idx = static_cast<std::size_t>(c);
            const double dist = std::abs(grid.points[idx] - t);
            if (dist < best_dist) {  // strict: ties keep the lower index
                best_dist = dist;
                best = idx;
            }
        }
        indices.push_back(best);
    }
    return indices;
}

}  // namespace traj
