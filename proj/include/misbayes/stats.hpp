#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace misbayes::stats {

double mean(const Eigen::VectorXd& x);
double variance(const Eigen::VectorXd& x);  // divides by n-1
double sd(const Eigen::VectorXd& x);

// Inclusive linear-interpolation quantile (R type 7 / numpy "linear").
double quantile(Eigen::VectorXd x, double q);

struct Quartiles {
    double q25, q50, q75;
};
Quartiles quartiles(const Eigen::VectorXd& x);

// Two-sample Kolmogorov-Smirnov statistic.
double ks_two_sample(Eigen::VectorXd a, Eigen::VectorXd b);

// KS statistic of a sample against a cdf.
double ks_vs_cdf(Eigen::VectorXd x, const std::function<double(double)>& cdf);

// Pearson correlation.
double correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Effective sample size via Geyer's initial-positive-sequence truncation.
double ess(const Eigen::VectorXd& x);

// Gaussian kernel density estimate on a grid; Silverman bandwidth.
struct Kde {
    Eigen::VectorXd grid;
    Eigen::VectorXd density;
    double bandwidth;
};
Kde kde_silverman(const Eigen::VectorXd& x, int grid_points = 256);

}  // namespace misbayes::stats
