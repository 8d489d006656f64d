#include "trajcomplete/svt.hpp"

#include <algorithm>

namespace traj {

namespace {

constexpr double kRankCutoff = 1e-10;  // relative to the largest singular value

ThresholdedSVD threshold(const Eigen::MatrixXd& x, double lambda, bool hard) {
    if (lambda < 0) throw ArgumentError("threshold level must be non-negative");
    if (!x.allFinite()) throw DataError("matrix contains non-finite entries");

    Eigen::JacobiSVD<Eigen::MatrixXd> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    ThresholdedSVD out;
    out.U = svd.matrixU();
    out.V = svd.matrixV();
    out.d = svd.singularValues();

    const double top = out.d.size() > 0 ? out.d[0] : 0.0;
    const double floor = top * kRankCutoff;
    int rank = 0;
    for (Eigen::Index i = 0; i < out.d.size(); ++i) {
        double v = out.d[i];
        if (hard) {
            v = v >= lambda ? v : 0.0;
        } else {
            v = std::max(v - lambda, 0.0);
        }
        out.d[i] = v;
        if (v > floor) rank = static_cast<int>(i) + 1;
    }
    out.rank = rank;
    return out;
}

}  // namespace

ThresholdedSVD soft_svt(const Eigen::MatrixXd& x, double lambda) {
    return threshold(x, lambda, false);
}

ThresholdedSVD hard_svt(const Eigen::MatrixXd& x, double lambda) {
    return threshold(x, lambda, true);
}

}  // namespace traj
