#include "misbayes/registry.hpp"

#include <cmath>
#include <memory>

#include "misbayes/errors.hpp"
#include "misbayes/modular.hpp"

namespace misbayes::registry {

restricted::GenerativeModel gaussian_toy(const Eigen::VectorXd& sigmas) {
    if ((sigmas.array() <= 0.0).any()) throw ParamError("gaussian_toy: sigmas must be positive");
    restricted::GenerativeModel m;
    m.theta_dim = static_cast<int>(sigmas.size());
    m.simulate = [sigmas](const Eigen::VectorXd& theta, RngStream& rng) {
        Eigen::VectorXd x(sigmas.size());
        for (Eigen::Index j = 0; j < sigmas.size(); ++j)
            x[j] = theta[j] + sigmas[j] * rng.normal();
        return x;
    };
    m.summary = summary_identity();
    return m;
}

restricted::GenerativeModel glm_binomial(const glm::GlmData& design) {
    auto d = std::make_shared<glm::GlmData>(design);
    restricted::GenerativeModel m;
    m.theta_dim = design.p();
    m.simulate = [d](const Eigen::VectorXd& theta, RngStream& rng) {
        const Eigen::VectorXd mu = glm::fitted_means(glm::GlmFamily::binomial(), *d, theta);
        Eigen::VectorXd y(d->n());
        for (Eigen::Index i = 0; i < d->n(); ++i) {
            const double p = mu[i] / d->trials[i];
            long k = 0;
            for (long t = 0; t < static_cast<long>(d->trials[i]); ++t)
                k += rng.uniform() < p ? 1 : 0;
            y[i] = static_cast<double>(k);
        }
        return y;
    };
    m.summary = summary_identity();
    return m;
}

restricted::GenerativeModel random_effects(long n_groups, long j_per_group) {
    if (n_groups < 1 || j_per_group < 2)
        throw ParamError("random_effects: need N >= 1 and J >= 2");
    restricted::GenerativeModel m;
    m.theta_dim = 2;
    m.simulate = [n_groups, j_per_group](const Eigen::VectorXd& theta, RngStream& rng) {
        if (theta[0] <= 0.0 || theta[1] <= 0.0)
            throw ParamError("random_effects: theta = (psi^2, phi^2) must be positive");
        modular::ReSimSpec spec;
        spec.N = n_groups;
        spec.J = j_per_group;
        spec.psi2 = theta[0];
        spec.phi2 = theta[1];
        spec.override_beta1 = false;
        const Eigen::MatrixXd z = modular::simulate_re_data(spec, rng);
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(z.data(), z.size()));
    };
    m.summary = [n_groups, j_per_group](const Eigen::VectorXd& flat) {
        const Eigen::Map<const Eigen::MatrixXd> z(flat.data(), n_groups, j_per_group);
        const modular::ReData d = modular::sufficient_stats(z);
        const double mean_zbar = d.zbar.mean();
        const double var_zbar =
            (d.zbar.array() - mean_zbar).square().sum() / std::max<long>(1, n_groups - 1);
        const double mean_within =
            d.s2.sum() / static_cast<double>(n_groups * (j_per_group - 1));
        return Eigen::Vector2d(var_zbar, mean_within);
    };
    return m;
}

SummaryFn summary_identity() {
    return [](const Eigen::VectorXd& x) { return x; };
}

SummaryFn summary_censor(double t1, double t2) {
    if (!(t1 < t2)) throw ContractError("summary_censor: need t1 < t2");
    return [t1, t2](const Eigen::VectorXd& x) {
        return restricted::censor_summary(x, t1, t2);
    };
}

SummaryFn summary_moments() {
    return [](const Eigen::VectorXd& x) {
        const double m = x.mean();
        const double v = (x.array() - m).square().sum() /
                         std::max<double>(1.0, static_cast<double>(x.size()) - 1.0);
        return Eigen::Vector2d(m, v);
    };
}

SummaryFn summary_robust_mest(const glm::GlmFamily& family, const glm::GlmData& design,
                              double huber_c) {
    auto d = std::make_shared<glm::GlmData>(design);
    return [family, d, huber_c](const Eigen::VectorXd& y) {
        glm::GlmData data = *d;
        data.y = y;
        return glm::robust_mest(family, data, huber_c).coef;
    };
}

SummaryFn make_summary(const std::string& key, const glm::GlmFamily& family,
                       const glm::GlmData& design, double huber_c, double censor_t1,
                       double censor_t2) {
    if (key == "identity") return summary_identity();
    if (key == "moments") return summary_moments();
    if (key == "censor") return summary_censor(censor_t1, censor_t2);
    if (key == "robust-mest") return summary_robust_mest(family, design, huber_c);
    throw ConfigError("unknown summary key '" + key + "'");
}

}  // namespace misbayes::registry
