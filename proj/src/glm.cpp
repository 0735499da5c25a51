#include "misbayes/glm.hpp"

#include <cmath>
#include <limits>

#include "misbayes/errors.hpp"
#include "misbayes/linalg.hpp"

namespace misbayes::glm {

namespace {

constexpr double kEtaClip = 30.0;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kScoreTol = 1e-8;
constexpr double kSeparationNorm = 1e3;

double lchoose(double n, double k) {
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

Eigen::VectorXd clipped_eta(const GlmData& data, const Eigen::VectorXd& beta,
                            bool* saturated) {
    Eigen::VectorXd eta = data.Z * beta;
    bool sat = false;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        if (eta[i] > kEtaClip) { eta[i] = kEtaClip; sat = true; }
        if (eta[i] < -kEtaClip) { eta[i] = -kEtaClip; sat = true; }
    }
    if (saturated) *saturated = sat;
    return eta;
}

// mean, variance of y_i and dmu/deta at a clipped linear predictor
struct LinkRow {
    double mu, var, muprime;
};

LinkRow link_row(const GlmFamily& family, double eta, double trials) {
    switch (family.kind) {
        case Family::binomial_logit: {
            const double p = 1.0 / (1.0 + std::exp(-eta));
            const double v = trials * p * (1.0 - p);
            return {trials * p, v, v};
        }
        case Family::poisson_log: {
            const double m = std::exp(eta);
            return {m, m, m};
        }
        case Family::gaussian_identity:
            return {eta, family.dispersion, 1.0};
    }
    throw ContractError("unknown family");
}

double obs_loglik(const GlmFamily& family, double y, double trials, double eta) {
    switch (family.kind) {
        case Family::binomial_logit: {
            // continuous in y so that working responses are legal
            const double a = std::log1p(std::exp(-std::abs(eta)));
            const double log_p = eta < 0.0 ? eta - a : -a;
            const double log_q = eta < 0.0 ? -a : -eta - a;
            return lchoose(trials, y) + y * log_p + (trials - y) * log_q;
        }
        case Family::poisson_log:
            return y * eta - std::exp(eta) - std::lgamma(y + 1.0);
        case Family::gaussian_identity: {
            const double r = y - eta;
            return -0.5 * (kLog2Pi + std::log(family.dispersion)) -
                   0.5 * r * r / family.dispersion;
        }
    }
    throw ContractError("unknown family");
}

void check_dims(const GlmFamily& family, const GlmData& data, const Eigen::VectorXd& beta) {
    if (data.y.size() != data.n()) throw ContractError("glm: response length != design rows");
    if (beta.size() != data.p()) throw ContractError("glm: coefficient dimension mismatch");
    if (family.kind == Family::binomial_logit && data.trials.size() != data.n())
        throw ContractError("glm: binomial family requires per-row trial counts");
}

void check_rank(const GlmData& data) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(data.Z);
    qr.setThreshold(1e-10);
    if (qr.rank() < data.p())
        throw DesignError("design matrix is rank deficient");
}

double trials_at(const GlmFamily& family, const GlmData& data, Eigen::Index i) {
    return family.kind == Family::binomial_logit ? data.trials[i] : 1.0;
}

}  // namespace

void GlmData::validate(const GlmFamily& family) const {
    if (y.size() != n()) throw DataError("response length does not match design rows");
    if (family.kind == Family::binomial_logit) {
        if (trials.size() != n()) throw DataError("binomial data needs a trials column");
        for (Eigen::Index i = 0; i < n(); ++i) {
            if (trials[i] < 0 || std::abs(trials[i] - std::round(trials[i])) > 1e-9)
                throw DataError("trials must be nonnegative integers (row " +
                                std::to_string(i + 1) + ")");
            if (y[i] < 0.0 || y[i] > trials[i])
                throw DataError("response outside [0, trials] (row " +
                                std::to_string(i + 1) + ")");
        }
    }
    if (n() < p()) throw DataError("need at least as many rows as covariates");
}

double loglik(const GlmFamily& family, const GlmData& data, const Eigen::VectorXd& beta,
              bool* saturated) {
    check_dims(family, data, beta);
    const Eigen::VectorXd eta = clipped_eta(data, beta, saturated);
    double total = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i)
        total += obs_loglik(family, data.y[i], trials_at(family, data, i), eta[i]);
    return total;
}

Eigen::MatrixXd score_contributions(const GlmFamily& family, const GlmData& data,
                                    const Eigen::VectorXd& beta) {
    check_dims(family, data, beta);
    const Eigen::VectorXd eta = clipped_eta(data, beta, nullptr);
    const double a = family.kind == Family::gaussian_identity ? family.dispersion : 1.0;
    Eigen::MatrixXd s(data.n(), data.p());
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const LinkRow lr = link_row(family, eta[i], trials_at(family, data, i));
        s.row(i) = (data.y[i] - lr.mu) / a * data.Z.row(i);
    }
    return s;
}

Eigen::VectorXd score(const GlmFamily& family, const GlmData& data,
                      const Eigen::VectorXd& beta) {
    return score_contributions(family, data, beta).colwise().sum();
}

Eigen::MatrixXd information(const GlmFamily& family, const GlmData& data,
                            const Eigen::VectorXd& beta) {
    check_dims(family, data, beta);
    const Eigen::VectorXd eta = clipped_eta(data, beta, nullptr);
    const double a = family.kind == Family::gaussian_identity ? family.dispersion : 1.0;
    Eigen::MatrixXd info = Eigen::MatrixXd::Zero(data.p(), data.p());
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        const LinkRow lr = link_row(family, eta[i], trials_at(family, data, i));
        const double w = lr.var / (a * a);  // canonical link
        info.noalias() += w * data.Z.row(i).transpose() * data.Z.row(i);
    }
    return info;
}

Eigen::VectorXd fitted_means(const GlmFamily& family, const GlmData& data,
                             const Eigen::VectorXd& beta) {
    check_dims(family, data, beta);
    const Eigen::VectorXd eta = clipped_eta(data, beta, nullptr);
    Eigen::VectorXd mu(data.n());
    for (Eigen::Index i = 0; i < data.n(); ++i)
        mu[i] = link_row(family, eta[i], trials_at(family, data, i)).mu;
    return mu;
}

namespace {

GlmFit irls_core(const GlmFamily& family, const GlmData& data,
                 const Eigen::VectorXd& obs_weights) {
    check_rank(data);
    if (data.n() < data.p()) throw DesignError("need n >= p for maximum likelihood");
    const long n = data.n();
    const int p = data.p();

    GlmFit fit;
    fit.dispersion = family.dispersion;

    if (family.kind == Family::gaussian_identity) {
        const Eigen::MatrixXd zw = data.Z.array().colwise() * obs_weights.array();
        const Eigen::MatrixXd xtx = zw.transpose() * data.Z;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(xtx);
        fit.coef = ldlt.solve(zw.transpose() * data.y);
        const Eigen::VectorXd resid = data.y - data.Z * fit.coef;
        if (!family.dispersion_fixed) {
            fit.dispersion = (obs_weights.array() * resid.array().square()).sum() /
                             obs_weights.sum();
            if (fit.dispersion <= 0.0) fit.dispersion = 1e-300;
        }
        fit.cov = ldlt.solve(Eigen::MatrixXd::Identity(p, p)) * fit.dispersion;
        fit.converged = true;
        fit.iterations = 1;
        return fit;
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    for (int it = 1; it <= 100; ++it) {
        bool saturated = false;
        const Eigen::VectorXd eta = clipped_eta(data, beta, &saturated);
        Eigen::VectorXd w(n), wz(n);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(p);
        for (Eigen::Index i = 0; i < n; ++i) {
            const LinkRow lr = link_row(family, eta[i], trials_at(family, data, i));
            const double vw = std::max(lr.var, 1e-12);
            w[i] = obs_weights[i] * vw;  // canonical link: weight = V
            wz[i] = w[i] * (eta[i] + (data.y[i] - lr.mu) / vw);
            grad.noalias() += obs_weights[i] * (data.y[i] - lr.mu) * data.Z.row(i).transpose();
        }
        if (grad.lpNorm<Eigen::Infinity>() < kScoreTol) {
            // separated binomial data "converges" only because the likelihood
            // flattens; fitted odds beyond exp(15) mark that regime
            if (family.kind == Family::binomial_logit &&
                (saturated || eta.cwiseAbs().maxCoeff() >= 15.0))
                throw SeparationError("binomial fit separated: fitted probabilities "
                                      "numerically at 0 or 1",
                                      {beta.data(), beta.data() + beta.size()});
            fit.coef = beta;
            const Eigen::MatrixXd zw = data.Z.array().colwise() * w.array();
            fit.cov = Eigen::LDLT<Eigen::MatrixXd>(zw.transpose() * data.Z)
                          .solve(Eigen::MatrixXd::Identity(p, p));
            fit.converged = true;
            fit.iterations = it;
            return fit;
        }
        const Eigen::MatrixXd zw = data.Z.array().colwise() * w.array();
        const Eigen::MatrixXd xtwx = zw.transpose() * data.Z;
        const Eigen::VectorXd rhs = data.Z.transpose() * wz;
        beta = Eigen::LDLT<Eigen::MatrixXd>(xtwx).solve(rhs);
        if (!beta.allFinite() || beta.norm() > kSeparationNorm) {
            if (family.kind == Family::binomial_logit)
                throw SeparationError("binomial fit diverged: separated data",
                                      {beta.data(), beta.data() + beta.size()});
            throw ConvergenceError("IRLS diverged",
                                   {beta.data(), beta.data() + beta.size()});
        }
    }
    throw ConvergenceError("IRLS failed to converge within 100 iterations",
                           {});
}

}  // namespace

GlmFit irls_mle(const GlmFamily& family, const GlmData& data) {
    check_dims(family, data, Eigen::VectorXd::Zero(data.p()));
    return irls_core(family, data, Eigen::VectorXd::Ones(data.n()));
}

GlmFit weighted_irls(const GlmFamily& family, const GlmData& data,
                     const Eigen::VectorXd& weights) {
    check_dims(family, data, Eigen::VectorXd::Zero(data.p()));
    if (weights.size() != data.n()) throw ContractError("weighted_irls: weight length");
    if ((weights.array() < 0.0).any()) throw ContractError("weighted_irls: negative weight");
    return irls_core(family, data, weights);
}

double huber_psi(double r, double c) {
    if (r > c) return c;
    if (r < -c) return -c;
    return r;
}

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }

// E[psi_c(r)], E[psi_c(r)^2], E[psi_c'(r)] for the Pearson residual of one
// observation under the fitted model. Discrete families are summed exactly,
// the gaussian case uses closed forms.
struct PsiMoments {
    double e_psi, e_psi2, e_dpsi;
};

PsiMoments psi_moments(const GlmFamily& family, double trials, double eta, double c) {
    const LinkRow lr = link_row(family, eta, trials);
    const double sv = std::sqrt(std::max(lr.var, 1e-300));
    PsiMoments m{0.0, 0.0, 0.0};
    auto accumulate = [&](double y, double logp) {
        const double pr = std::exp(logp);
        const double r = (y - lr.mu) / sv;
        const double psi = huber_psi(r, c);
        m.e_psi += pr * psi;
        m.e_psi2 += pr * psi * psi;
        m.e_dpsi += pr * (std::abs(r) <= c ? 1.0 : 0.0);
    };
    switch (family.kind) {
        case Family::binomial_logit: {
            const double p = lr.mu / trials;
            for (long y = 0; y <= static_cast<long>(trials); ++y) {
                const double logp = lchoose(trials, y) +
                                    (p > 0.0 ? y * std::log(p) : (y == 0 ? 0.0 : -kInf)) +
                                    (p < 1.0 ? (trials - y) * std::log1p(-p)
                                             : (y == trials ? 0.0 : -kInf));
                if (std::isfinite(logp)) accumulate(static_cast<double>(y), logp);
            }
            return m;
        }
        case Family::poisson_log: {
            const double mu = lr.mu;
            const long lo = std::max(0L, static_cast<long>(mu - 10.0 * std::sqrt(mu) - 20.0));
            const long hi = static_cast<long>(mu + 10.0 * std::sqrt(mu) + 20.0);
            for (long y = lo; y <= hi; ++y)
                accumulate(static_cast<double>(y),
                           y * std::log(mu) - mu - std::lgamma(y + 1.0));
            return m;
        }
        case Family::gaussian_identity: {
            m.e_psi = 0.0;
            const double in = 2.0 * norm_cdf(c) - 1.0;
            m.e_dpsi = in;
            m.e_psi2 = in - 2.0 * c * norm_pdf(c) + 2.0 * c * c * (1.0 - norm_cdf(c));
            return m;
        }
    }
    throw ContractError("unknown family");
}

}  // namespace

GlmFit robust_mest(const GlmFamily& family, const GlmData& data, double huber_c) {
    check_dims(family, data, Eigen::VectorXd::Zero(data.p()));
    if (!(huber_c > 0.0)) throw ContractError("robust_mest: Huber constant must be positive");
    check_rank(data);
    const long n = data.n();
    const int p = data.p();

    Eigen::VectorXd beta;
    try {
        beta = irls_mle(family, data).coef;
    } catch (const std::runtime_error&) {
        beta = Eigen::VectorXd::Zero(p);
    }

    GlmFamily fam = family;  // gaussian scale is re-estimated below
    auto update_scale = [&](const Eigen::VectorXd& b) {
        if (family.kind != Family::gaussian_identity || family.dispersion_fixed) return;
        Eigen::VectorXd r = (data.y - data.Z * b).cwiseAbs();
        std::sort(r.data(), r.data() + r.size());
        const double mad = r[r.size() / 2] / 0.6744897501960817;
        fam.dispersion = std::max(mad * mad, 1e-12);
    };
    update_scale(beta);

    auto robust_score = [&](const Eigen::VectorXd& b) {
        const Eigen::VectorXd eta = clipped_eta(data, b, nullptr);
        Eigen::VectorXd s = Eigen::VectorXd::Zero(p);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double tr = trials_at(fam, data, i);
            const LinkRow lr = link_row(fam, eta[i], tr);
            const double sv = std::sqrt(std::max(lr.var, 1e-300));
            const double r = (data.y[i] - lr.mu) / sv;
            const PsiMoments mo = psi_moments(fam, tr, eta[i], huber_c);
            // canonical link: mu'/sqrt(V) = sqrt(V)
            s.noalias() +=
                (huber_psi(r, huber_c) - mo.e_psi) * sv * data.Z.row(i).transpose();
        }
        return s;
    };
    auto scoring_matrix = [&](const Eigen::VectorXd& b) {
        const Eigen::VectorXd eta = clipped_eta(data, b, nullptr);
        Eigen::MatrixXd mmat = Eigen::MatrixXd::Zero(p, p);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double tr = trials_at(fam, data, i);
            const LinkRow lr = link_row(fam, eta[i], tr);
            const PsiMoments mo = psi_moments(fam, tr, eta[i], huber_c);
            mmat.noalias() +=
                mo.e_dpsi * lr.var * data.Z.row(i).transpose() * data.Z.row(i);
        }
        return mmat;
    };

    Eigen::VectorXd s = robust_score(beta);
    bool ok = false;
    int iterations = 0;
    for (int it = 1; it <= 200; ++it) {
        iterations = it;
        if (s.lpNorm<Eigen::Infinity>() < kScoreTol * std::max(1.0, data.y.cwiseAbs().maxCoeff())) {
            ok = true;
            break;
        }
        const Eigen::MatrixXd mmat = scoring_matrix(beta);
        Eigen::VectorXd step = Eigen::LDLT<Eigen::MatrixXd>(mmat).solve(s);
        double lambda = 1.0;
        for (int h = 0; h < 30; ++h) {
            const Eigen::VectorXd cand = beta + lambda * step;
            const Eigen::VectorXd sc = robust_score(cand);
            if (sc.allFinite() && sc.norm() < s.norm()) {
                beta = cand;
                update_scale(beta);
                s = robust_score(beta);
                break;
            }
            lambda *= 0.5;
            if (h == 29)
                throw ConvergenceError("robust_mest: step search failed",
                                       {beta.data(), beta.data() + beta.size()});
        }
    }
    if (!ok && s.lpNorm<Eigen::Infinity>() >=
                   kScoreTol * std::max(1.0, data.y.cwiseAbs().maxCoeff()))
        throw ConvergenceError("robust_mest failed to converge",
                               {beta.data(), beta.data() + beta.size()});

    // sandwich covariance M^-1 Q M^-1
    const Eigen::VectorXd eta = clipped_eta(data, beta, nullptr);
    Eigen::MatrixXd q = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double tr = trials_at(fam, data, i);
        const LinkRow lr = link_row(fam, eta[i], tr);
        const PsiMoments mo = psi_moments(fam, tr, eta[i], huber_c);
        q.noalias() += (mo.e_psi2 - mo.e_psi * mo.e_psi) * lr.var *
                       data.Z.row(i).transpose() * data.Z.row(i);
    }
    const Eigen::MatrixXd mmat = scoring_matrix(beta);
    const Eigen::MatrixXd minv =
        Eigen::LDLT<Eigen::MatrixXd>(mmat).solve(Eigen::MatrixXd::Identity(p, p));

    GlmFit fit;
    fit.coef = beta;
    fit.cov = minv * q * minv.transpose();
    fit.converged = true;
    fit.iterations = iterations;
    fit.dispersion = fam.dispersion;
    return fit;
}

Eigen::VectorXd lasso_fit(const GlmFamily& family, const GlmData& data,
                          const Eigen::VectorXd& working_response, double lambda) {
    if (working_response.size() != data.n())
        throw ContractError("lasso_fit: working response length mismatch");
    if (lambda < 0.0) throw ContractError("lasso_fit: lambda must be >= 0");
    GlmData wdata = data;
    wdata.y = working_response;
    check_dims(family, wdata, Eigen::VectorXd::Zero(data.p()));

    const long n = data.n();
    const int p = data.p();
    const double a = family.kind == Family::gaussian_identity ? family.dispersion : 1.0;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);

    auto soft = [](double x, double t) {
        if (x > t) return x - t;
        if (x < -t) return x + t;
        return 0.0;
    };

    for (int outer = 1; outer <= 200; ++outer) {
        const Eigen::VectorXd beta_prev = beta;
        const Eigen::VectorXd eta = clipped_eta(wdata, beta, nullptr);
        Eigen::VectorXd w(n), z(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const LinkRow lr = link_row(family, eta[i], trials_at(family, wdata, i));
            const double vw = std::max(lr.var, 1e-10);
            w[i] = vw / a;
            z[i] = eta[i] + (wdata.y[i] - lr.mu) / vw;
        }
        // coordinate descent on the penalized weighted least squares problem
        Eigen::VectorXd resid = z - wdata.Z * beta;
        for (int sweep = 0; sweep < 1000; ++sweep) {
            double max_delta = 0.0;
            for (int j = 0; j < p; ++j) {
                const Eigen::VectorXd& xj = wdata.Z.col(j);
                const double den = (w.array() * xj.array().square()).sum();
                if (den <= 0.0) continue;
                const double num =
                    (w.array() * xj.array() * resid.array()).sum() + den * beta[j];
                const double bj_new = j == 0 ? num / den : soft(num, lambda) / den;
                const double delta = bj_new - beta[j];
                if (delta != 0.0) {
                    resid -= delta * xj;
                    beta[j] = bj_new;
                    max_delta = std::max(max_delta, std::abs(delta));
                }
            }
            if (max_delta < 1e-11) break;
        }
        if ((beta - beta_prev).lpNorm<Eigen::Infinity>() < 1e-10 && outer > 1) break;
        if (family.kind == Family::gaussian_identity) break;  // single reweight is exact
        if (outer == 200)
            throw ConvergenceError("lasso_fit: outer loop failed to converge",
                                   {beta.data(), beta.data() + beta.size()});
    }

    // KKT verification on the penalized negative log-likelihood
    const Eigen::VectorXd g = -score(family, wdata, beta);
    for (int j = 1; j < p; ++j) {
        const double viol = beta[j] != 0.0 ? std::abs(g[j] + lambda * (beta[j] > 0 ? 1.0 : -1.0))
                                           : std::max(0.0, std::abs(g[j]) - lambda);
        if (viol > 1e-6 * std::max(1.0, lambda))
            throw ConvergenceError("lasso_fit: KKT violation " + std::to_string(viol),
                                   {beta.data(), beta.data() + beta.size()});
    }
    return beta;
}

double kl_glm(const GlmFamily& family, const GlmData& data,
              const Eigen::VectorXd& theta_from, const Eigen::VectorXd& theta_to) {
    check_dims(family, data, theta_from);
    check_dims(family, data, theta_to);
    const Eigen::VectorXd eta_f = clipped_eta(data, theta_from, nullptr);
    const Eigen::VectorXd eta_t = clipped_eta(data, theta_to, nullptr);
    double total = 0.0;
    switch (family.kind) {
        case Family::binomial_logit: {
            for (Eigen::Index i = 0; i < data.n(); ++i) {
                const double p = 1.0 / (1.0 + std::exp(-eta_f[i]));
                const double q = 1.0 / (1.0 + std::exp(-eta_t[i]));
                if ((q == 0.0 && p > 0.0) || (q == 1.0 && p < 1.0)) return kInf;
                double term = 0.0;
                if (p > 0.0) term += p * std::log(p / q);
                if (p < 1.0) term += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
                total += data.trials[i] * term;
            }
            break;
        }
        case Family::gaussian_identity:
            total = (eta_f - eta_t).squaredNorm() / (2.0 * family.dispersion);
            break;
        case Family::poisson_log: {
            for (Eigen::Index i = 0; i < data.n(); ++i) {
                const double mu = std::exp(eta_f[i]);
                const double nu = std::exp(eta_t[i]);
                total += mu * (eta_f[i] - eta_t[i]) - mu + nu;
            }
            break;
        }
    }
    return std::max(total, 0.0);
}

Eigen::MatrixXd sandwich_cov(const GlmFamily& family, const GlmData& data,
                             const Eigen::VectorXd& beta) {
    const Eigen::MatrixXd s = score_contributions(family, data, beta);
    const Eigen::MatrixXd a = information(family, data, beta);
    const Eigen::MatrixXd b = s.transpose() * s;
    const Eigen::MatrixXd ainv =
        Eigen::LDLT<Eigen::MatrixXd>(a).solve(Eigen::MatrixXd::Identity(data.p(), data.p()));
    return ainv * b * ainv.transpose();
}

}  // namespace misbayes::glm
