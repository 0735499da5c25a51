#pragma once

#include <Eigen/Dense>

#include "misbayes/rng.hpp"

namespace misbayes {

enum class DistKind {
    normal,           // (mean, variance)
    mvnormal,         // mean vector + covariance matrix
    gamma_shape_rate, // (shape, rate)
    inverse_gamma,    // (shape, scale); x ~ IG(a,b) iff 1/x ~ Gamma(a, rate=b)
    binomial,         // (trials, success probability)
    laplace,          // (location, scale)
    dirichlet,        // concentration vector
    student_t,        // (df, location, scale)
};

// One parametric distribution on its natural parameter scale. Parameters are
// validated at construction; invalid values raise ParamError.
struct DistSpec {
    DistKind kind;
    Eigen::VectorXd par;   // kind-specific parameter block (see factories)
    Eigen::MatrixXd cov;   // mvnormal only

    static DistSpec normal(double mean, double variance);
    static DistSpec mvnormal(Eigen::VectorXd mean, Eigen::MatrixXd covariance);
    static DistSpec gamma(double shape, double rate);
    static DistSpec inverse_gamma(double shape, double scale);
    static DistSpec binomial(long trials, double prob);
    static DistSpec laplace(double location, double scale);
    static DistSpec dirichlet(Eigen::VectorXd concentration);
    static DistSpec student_t(double df, double location = 0.0, double scale = 1.0);

    int dim() const;  // 1 for scalar kinds
};

// Natural-log density. Scalar overload for 1-d kinds, vector overload for all.
double logpdf(const DistSpec& spec, double x);
double logpdf(const DistSpec& spec, const Eigen::VectorXd& x);

// n iid draws (rows). Deterministic given the stream state.
Eigen::MatrixXd sample(const DistSpec& spec, RngStream& rng, long n);
double sample1(const DistSpec& spec, RngStream& rng);  // scalar kinds only

}  // namespace misbayes
