#pragma once

#include <algorithm>
#include <stdexcept>

#include <Eigen/Dense>

#include "catseq/numcore.hpp"

namespace catseq {

struct PcaResult {
    Tensor coords;           ///< n x 2
    double explained[2]{};   ///< variances along the two components
};

/// Projection onto the top two principal components of mean-centred data.
/// A missing second component (rank-1 data) yields a zero column.
inline PcaResult pca2d(const Tensor& points) {
    const auto n = points.rows(), d = points.cols();
    if (n < 2 || d < 2) throw std::invalid_argument("pca2d: need n >= 2 points with d >= 2");
    if (!points.all_finite()) throw NumericError("pca2d: non-finite input");
    Eigen::MatrixXd x = detail::view(points);
    x.rowwise() -= x.colwise().mean();
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericError("pca2d: eigendecomposition failed");
    // eigenvalues come out ascending
    const auto& vals = eig.eigenvalues();
    const auto last = static_cast<Eigen::Index>(d) - 1;
    const double top = std::max(vals(last), 0.0);
    const double tol = 1e-12 * std::max(top, 1e-300);
    PcaResult r;
    r.coords = Tensor(n, 2);
    auto out = detail::view(r.coords);
    out.col(0) = x * eig.eigenvectors().col(last);
    r.explained[0] = top;
    if (vals(last - 1) > tol) {
        out.col(1) = x * eig.eigenvectors().col(last - 1);
        r.explained[1] = vals(last - 1);
    } else {
        out.col(1).setZero();
    }
    return r;
}

}  // namespace catseq
