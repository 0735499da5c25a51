#pragma once

#include <Eigen/Dense>

namespace misbayes::linalg {

// Relative eigenvalue floor below which an SPD matrix is treated as degenerate.
inline constexpr double kSpdRelFloor = 1e-12;

// Throws DegeneracyError (with the offending eigenvalue) unless min eig > floor * max eig.
void check_spd(const Eigen::MatrixXd& m, double rel_floor = kSpdRelFloor);

// Symmetric square root via eigendecomposition; input checked as in check_spd.
Eigen::MatrixXd spd_sqrt(const Eigen::MatrixXd& m, double rel_floor = kSpdRelFloor);

// Lower Cholesky factor; throws DegeneracyError on failure.
Eigen::MatrixXd chol_lower(const Eigen::MatrixXd& m);

double log_det_spd(const Eigen::MatrixXd& m);

Eigen::VectorXd col_mean(const Eigen::MatrixXd& rows);

// Sample covariance of row vectors; divides by T-1 unless ml (then by T).
Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& rows, bool ml = false);

}  // namespace misbayes::linalg
