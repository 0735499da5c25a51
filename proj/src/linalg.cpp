#include "misbayes/linalg.hpp"

#include <cmath>
#include <string>

#include "misbayes/errors.hpp"

namespace misbayes::linalg {

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig_checked(const Eigen::MatrixXd& m,
                                                           double rel_floor) {
    if (m.rows() != m.cols()) throw ContractError("matrix must be square");
    const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw DegeneracyError("eigendecomposition failed");
    const double max_eig = es.eigenvalues().maxCoeff();
    int min_idx = 0;
    const double min_eig = es.eigenvalues().minCoeff(&min_idx);
    if (!(min_eig > rel_floor * max_eig) || !(max_eig > 0.0)) {
        throw DegeneracyError("matrix is not SPD within tolerance (min eigenvalue " +
                                  std::to_string(min_eig) + ")",
                              min_eig, min_idx);
    }
    return es;
}

}  // namespace

void check_spd(const Eigen::MatrixXd& m, double rel_floor) { eig_checked(m, rel_floor); }

Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& m, double rel_floor) {
    const auto es = eig_checked(m, rel_floor);
    return es.eigenvectors() * es.eigenvalues().cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

Eigen::MatrixXd chol_lower(const Eigen::MatrixXd& m) {
    Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (m + m.transpose()));
    if (llt.info() != Eigen::Success)
        throw DegeneracyError("Cholesky factorization failed: matrix not positive definite");
    return llt.matrixL();
}

double log_det_spd(const Eigen::MatrixXd& m) {
    const Eigen::MatrixXd l = chol_lower(m);
    return 2.0 * l.diagonal().array().log().sum();
}

Eigen::VectorXd col_mean(const Eigen::MatrixXd& rows) {
    if (rows.rows() == 0) throw ContractError("col_mean of empty matrix");
    return rows.colwise().mean();
}

Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& rows, bool ml) {
    const auto t = rows.rows();
    if (t < 2) throw ContractError("sample_cov needs at least two rows");
    const Eigen::MatrixXd centered = rows.rowwise() - rows.colwise().mean();
    return centered.transpose() * centered / static_cast<double>(ml ? t : t - 1);
}

}  // namespace misbayes::linalg
