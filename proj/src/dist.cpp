#include "misbayes/dist.hpp"

#include <cmath>
#include <limits>

#include "misbayes/errors.hpp"
#include "misbayes/linalg.hpp"

namespace misbayes {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void require(bool cond, const char* msg) {
    if (!cond) throw ParamError(msg);
}

double lchoose(double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

bool near_integer(double x) { return std::abs(x - std::round(x)) < 1e-9; }

}  // namespace

DistSpec DistSpec::normal(double mean, double variance) {
    require(variance > 0.0, "normal: variance must be positive");
    return {DistKind::normal, Eigen::Vector2d(mean, variance), {}};
}

DistSpec DistSpec::mvnormal(Eigen::VectorXd mean, Eigen::MatrixXd covariance) {
    require(covariance.rows() == mean.size() && covariance.cols() == mean.size(),
            "mvnormal: covariance dimension mismatch");
    linalg::check_spd(covariance);
    return {DistKind::mvnormal, std::move(mean), std::move(covariance)};
}

DistSpec DistSpec::gamma(double shape, double rate) {
    require(shape > 0.0 && rate > 0.0, "gamma: shape and rate must be positive");
    return {DistKind::gamma_shape_rate, Eigen::Vector2d(shape, rate), {}};
}

DistSpec DistSpec::inverse_gamma(double shape, double scale) {
    require(shape > 0.0 && scale > 0.0, "inverse_gamma: shape and scale must be positive");
    return {DistKind::inverse_gamma, Eigen::Vector2d(shape, scale), {}};
}

DistSpec DistSpec::binomial(long trials, double prob) {
    require(trials >= 0, "binomial: trials must be a nonnegative integer");
    require(prob >= 0.0 && prob <= 1.0, "binomial: probability must lie in [0,1]");
    return {DistKind::binomial, Eigen::Vector2d(static_cast<double>(trials), prob), {}};
}

DistSpec DistSpec::laplace(double location, double scale) {
    require(scale > 0.0, "laplace: scale must be positive");
    return {DistKind::laplace, Eigen::Vector2d(location, scale), {}};
}

DistSpec DistSpec::dirichlet(Eigen::VectorXd concentration) {
    require(concentration.size() >= 2, "dirichlet: needs at least two components");
    require((concentration.array() > 0.0).all(),
            "dirichlet: concentration entries must be positive");
    return {DistKind::dirichlet, std::move(concentration), {}};
}

DistSpec DistSpec::student_t(double df, double location, double scale) {
    require(df > 0.0 && scale > 0.0, "student_t: df and scale must be positive");
    return {DistKind::student_t, Eigen::Vector3d(df, location, scale), {}};
}

int DistSpec::dim() const {
    switch (kind) {
        case DistKind::mvnormal: return static_cast<int>(par.size());
        case DistKind::dirichlet: return static_cast<int>(par.size());
        default: return 1;
    }
}

double logpdf(const DistSpec& spec, double x) {
    switch (spec.kind) {
        case DistKind::normal: {
            const double mu = spec.par[0], var = spec.par[1];
            return -0.5 * (kLog2Pi + std::log(var)) - 0.5 * (x - mu) * (x - mu) / var;
        }
        case DistKind::gamma_shape_rate: {
            const double a = spec.par[0], b = spec.par[1];
            if (x <= 0.0) return kNegInf;
            return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(x) - b * x;
        }
        case DistKind::inverse_gamma: {
            const double a = spec.par[0], b = spec.par[1];
            if (x <= 0.0) return kNegInf;
            return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(x) - b / x;
        }
        case DistKind::binomial: {
            const double n = spec.par[0], p = spec.par[1];
            if (x < 0.0 || x > n || !near_integer(x)) return kNegInf;
            if (p == 0.0) return x == 0.0 ? 0.0 : kNegInf;
            if (p == 1.0) return x == n ? 0.0 : kNegInf;
            return lchoose(n, x) + x * std::log(p) + (n - x) * std::log1p(-p);
        }
        case DistKind::laplace: {
            const double mu = spec.par[0], b = spec.par[1];
            return -std::log(2.0 * b) - std::abs(x - mu) / b;
        }
        case DistKind::student_t: {
            const double v = spec.par[0], mu = spec.par[1], s = spec.par[2];
            const double z = (x - mu) / s;
            return std::lgamma(0.5 * (v + 1.0)) - std::lgamma(0.5 * v) -
                   0.5 * std::log(v * M_PI) - std::log(s) -
                   0.5 * (v + 1.0) * std::log1p(z * z / v);
        }
        default:
            throw ContractError("scalar logpdf called on a vector distribution");
    }
}

double logpdf(const DistSpec& spec, const Eigen::VectorXd& x) {
    switch (spec.kind) {
        case DistKind::mvnormal: {
            if (x.size() != spec.par.size())
                throw ContractError("mvnormal logpdf: dimension mismatch");
            Eigen::LLT<Eigen::MatrixXd> llt(spec.cov);
            if (llt.info() != Eigen::Success)
                throw ParamError("mvnormal: covariance not SPD");
            const Eigen::VectorXd d = x - spec.par;
            const Eigen::VectorXd w = llt.matrixL().solve(d);
            const double logdet =
                2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
            return -0.5 * (x.size() * kLog2Pi + logdet + w.squaredNorm());
        }
        case DistKind::dirichlet: {
            if (x.size() != spec.par.size())
                throw ContractError("dirichlet logpdf: dimension mismatch");
            if ((x.array() <= 0.0).any() || std::abs(x.sum() - 1.0) > 1e-8) return kNegInf;
            const auto& a = spec.par;
            double lp = std::lgamma(a.sum());
            for (int i = 0; i < a.size(); ++i)
                lp += (a[i] - 1.0) * std::log(x[i]) - std::lgamma(a[i]);
            return lp;
        }
        default:
            if (x.size() != 1) throw ContractError("vector logpdf on scalar distribution");
            return logpdf(spec, x[0]);
    }
}

double sample1(const DistSpec& spec, RngStream& rng) {
    switch (spec.kind) {
        case DistKind::normal:
            return spec.par[0] + std::sqrt(spec.par[1]) * rng.normal();
        case DistKind::gamma_shape_rate:
            return rng.gamma(spec.par[0]) / spec.par[1];
        case DistKind::inverse_gamma:
            return spec.par[1] / rng.gamma(spec.par[0]);
        case DistKind::binomial: {
            const long n = static_cast<long>(spec.par[0]);
            const double p = spec.par[1];
            long k = 0;
            for (long i = 0; i < n; ++i) k += rng.uniform() < p ? 1 : 0;
            return static_cast<double>(k);
        }
        case DistKind::laplace: {
            const double t = rng.uniform() - 0.5;
            const double sign = t >= 0.0 ? 1.0 : -1.0;
            return spec.par[0] - spec.par[1] * sign * std::log1p(-2.0 * std::abs(t));
        }
        case DistKind::student_t: {
            const double v = spec.par[0];
            const double z = rng.normal();
            const double chi2 = 2.0 * rng.gamma(0.5 * v);
            return spec.par[1] + spec.par[2] * z / std::sqrt(chi2 / v);
        }
        default:
            throw ContractError("sample1 called on a vector distribution");
    }
}

Eigen::MatrixXd sample(const DistSpec& spec, RngStream& rng, long n) {
    if (n < 1) throw ContractError("sample: n must be >= 1");
    switch (spec.kind) {
        case DistKind::mvnormal: {
            const Eigen::MatrixXd l = linalg::chol_lower(spec.cov);
            const int d = spec.dim();
            Eigen::MatrixXd out(n, d);
            Eigen::VectorXd z(d);
            for (long i = 0; i < n; ++i) {
                for (int j = 0; j < d; ++j) z[j] = rng.normal();
                out.row(i) = (spec.par + l * z).transpose();
            }
            return out;
        }
        case DistKind::dirichlet: {
            const int d = spec.dim();
            Eigen::MatrixXd out(n, d);
            for (long i = 0; i < n; ++i) {
                double total = 0.0;
                for (int j = 0; j < d; ++j) {
                    out(i, j) = rng.gamma(spec.par[j]);
                    total += out(i, j);
                }
                out.row(i) /= total;
            }
            return out;
        }
        default: {
            Eigen::MatrixXd out(n, 1);
            for (long i = 0; i < n; ++i) out(i, 0) = sample1(spec, rng);
            return out;
        }
    }
}

}  // namespace misbayes
