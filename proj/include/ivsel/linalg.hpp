#ifndef IVSEL_LINALG_HPP
#define IVSEL_LINALG_HPP

#include <optional>
#include <string>
#include <vector>

#include "ivsel/common.hpp"

namespace ivsel {

struct LeastSquaresResult {
    VectorXd coef;
    MatrixXd cov_classical;
    MatrixXd cov_sandwich;  // HC0
    VectorXd residuals;
    VectorXd fitted;
    double sigma2 = 0.0;  // residual variance behind the classical covariance
};

namespace detail {

inline void check_full_rank(const Eigen::ColPivHouseholderQR<MatrixXd>& qr, int p,
                            const std::vector<std::string>* names) {
    if (qr.rank() >= p) return;
    const auto perm = qr.colsPermutation().indices();
    const int offending = perm[qr.rank()];
    std::string label = names && offending < static_cast<int>(names->size())
                            ? (*names)[offending]
                            : ("column " + std::to_string(offending));
    throw SingularDesignError("singular design: " + label + " is collinear with earlier columns");
}

}  // namespace detail

/// Weighted least squares with classical and HC0 sandwich covariances.
/// The design must have full column rank; the offending column is named
/// otherwise.
inline LeastSquaresResult least_squares(const MatrixXd& design, const VectorXd& response,
                                        const std::optional<VectorXd>& weights = std::nullopt,
                                        const std::vector<std::string>* names = nullptr) {
    const int n = static_cast<int>(design.rows());
    const int p = static_cast<int>(design.cols());
    if (response.size() != n) throw DataError("least_squares: design/response size mismatch");
    if (n <= p) throw SingularDesignError("least_squares: need more rows than columns");

    VectorXd w = weights.value_or(VectorXd::Ones(n));
    if (w.size() != n) throw DataError("least_squares: weight length mismatch");
    if ((w.array() <= 0.0).any()) throw DataError("least_squares: weights must be positive");

    const VectorXd sw = w.array().sqrt();
    MatrixXd wx = sw.asDiagonal() * design;
    Eigen::ColPivHouseholderQR<MatrixXd> qr(wx);
    qr.setThreshold(1e-10);
    detail::check_full_rank(qr, p, names);

    LeastSquaresResult out;
    out.coef = qr.solve(sw.asDiagonal() * response);
    out.fitted = design * out.coef;
    out.residuals = response - out.fitted;

    const MatrixXd xtwx_inv = (design.transpose() * w.asDiagonal() * design).inverse();
    out.sigma2 = (w.array() * out.residuals.array().square()).sum() / (n - p);
    out.cov_classical = out.sigma2 * xtwx_inv;

    const VectorXd we2 = (w.array() * out.residuals.array()).square();
    const MatrixXd meat = design.transpose() * we2.asDiagonal() * design;
    out.cov_sandwich = xtwx_inv * meat * xtwx_inv;
    return out;
}

}  // namespace ivsel

#endif
