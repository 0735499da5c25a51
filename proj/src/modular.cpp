#include "misbayes/modular.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "misbayes/errors.hpp"
#include "misbayes/linalg.hpp"
#include "misbayes/stats.hpp"

namespace misbayes::modular {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

Eigen::VectorXd concat(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd out(a.size() + b.size());
    out << a, b;
    return out;
}

// One damped diagonal-Newton step uphill on the inner target, used to start
// nested chains when no conditional-mode hook is supplied.
Eigen::VectorXd diag_newton_step(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& z, const Eigen::MatrixXd& prop) {
    Eigen::VectorXd out = z;
    const double f0 = f(z);
    if (!std::isfinite(f0)) return z;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
        const double scale = std::sqrt(std::max(prop(j, j), 1e-12));
        const double h = std::max(1e-6, 1e-3 * scale);
        Eigen::VectorXd zp = out, zm = out;
        zp[j] += h;
        zm[j] -= h;
        const double fp = f(zp), fm = f(zm);
        if (!std::isfinite(fp) || !std::isfinite(fm)) continue;
        const double g = (fp - fm) / (2.0 * h);
        const double hess = (fp - 2.0 * f0 + fm) / (h * h);
        if (hess < -1e-12) {
            double step = -g / hess;
            const double cap = 10.0 * scale;
            step = std::clamp(step, -cap, cap);
            out[j] += step;
        }
    }
    return std::isfinite(f(out)) ? out : z;
}

}  // namespace

double TwoModuleModel::log_joint(const Eigen::VectorXd& zeta,
                                 const Eigen::VectorXd& phi) const {
    return logf1(phi) + logf2(zeta, phi) + logprior_phi(phi) +
           logprior_zeta_given_phi(zeta, phi);
}

mcmc::Chain exact_posterior(const TwoModuleModel& model, const mcmc::MhConfig& cfg,
                            const Eigen::VectorXd& zeta_init,
                            const Eigen::VectorXd& phi_init, RngStream rng,
                            std::vector<std::string> names) {
    const int dz = model.dim_zeta, dp = model.dim_phi;
    auto target = [&model, dz, dp](const Eigen::VectorXd& x) {
        return model.log_joint(x.head(dz), x.tail(dp));
    };
    return mcmc::rw_metropolis(target, concat(zeta_init, phi_init), cfg, rng,
                               std::move(names));
}

CutResult cut_posterior(const TwoModuleModel& model, const CutConfig& cfg,
                        const Eigen::VectorXd& phi_init, const Eigen::VectorXd& zeta_init,
                        RngStream rng, std::vector<std::string> names) {
    if (cfg.outer_draws < 1) throw ContractError("cut_posterior: outer_draws must be >= 1");
    if (cfg.stage1_proposal_cov.rows() != model.dim_phi)
        throw ContractError("cut_posterior: stage-1 proposal dimension mismatch");
    if (cfg.inner_proposal_cov.rows() != model.dim_zeta)
        throw ContractError("cut_posterior: inner proposal dimension mismatch");

    // stage 1: phi ~ f1(X|phi) pi(phi); Y is never read here
    mcmc::MhConfig s1;
    s1.iterations = cfg.stage1_burn_in + cfg.outer_draws * cfg.stage1_thin;
    s1.thin = cfg.stage1_thin;
    s1.burn_in = cfg.stage1_burn_in;
    s1.proposal_cov = cfg.stage1_proposal_cov;
    auto stage1_target = [&model](const Eigen::VectorXd& phi) {
        return model.logf1(phi) + model.logprior_phi(phi);
    };
    const mcmc::Chain phi_chain =
        mcmc::rw_metropolis(stage1_target, phi_init, s1, rng.child(0));

    // stage 2: one independent inner chain per phi draw, final state kept
    mcmc::MhConfig inner_cfg;
    inner_cfg.iterations = cfg.inner_iterations;
    inner_cfg.thin = cfg.inner_iterations;  // store the final state only
    inner_cfg.burn_in = 0;
    inner_cfg.proposal_cov = cfg.inner_proposal_cov;

    const long kept = phi_chain.size();
    Eigen::MatrixXd draws(kept, model.dim_zeta + model.dim_phi);
    Eigen::VectorXd log_target(kept);
    long stored = 0, skipped = 0;
    Eigen::VectorXd zeta_prev = zeta_init;
    RngStream inner_root = rng.child(1);
    for (long i = 0; i < kept; ++i) {
        const Eigen::VectorXd phi = phi_chain.draws.row(i).transpose();
        auto inner_target = [&model, &phi](const Eigen::VectorXd& zeta) {
            return model.logf2(zeta, phi) + model.logprior_zeta_given_phi(zeta, phi);
        };
        Eigen::VectorXd start = model.zeta_mode
                                    ? model.zeta_mode(phi)
                                    : diag_newton_step(inner_target, zeta_prev,
                                                       cfg.inner_proposal_cov);
        if (!std::isfinite(inner_target(start))) start = zeta_prev;
        try {
            const mcmc::Chain zc =
                mcmc::rw_metropolis(inner_target, start, inner_cfg,
                                    inner_root.child(static_cast<std::uint64_t>(i)));
            const Eigen::VectorXd zeta = zc.draws.row(zc.size() - 1).transpose();
            draws.row(stored) << zeta.transpose(), phi.transpose();
            log_target[stored] = phi_chain.log_target[i] + zc.log_target[zc.size() - 1];
            zeta_prev = zeta;
            ++stored;
        } catch (const InitError&) {
            ++skipped;
        }
    }

    CutResult out;
    out.skipped = skipped;
    out.chain.draws = draws.topRows(stored);
    out.chain.log_target = log_target.head(stored);
    out.chain.acceptance_rate = phi_chain.acceptance_rate;
    out.chain.config = s1;
    if (names.empty()) {
        for (int j = 0; j < model.dim_zeta; ++j) names.push_back("zeta_" + std::to_string(j + 1));
        for (int j = 0; j < model.dim_phi; ++j) names.push_back("phi_" + std::to_string(j + 1));
    }
    out.chain.names = std::move(names);
    return out;
}

mcmc::Chain smp_power(const TwoModuleModel& model, const SmpConfig& cfg,
                      const Eigen::VectorXd& zeta_init, const Eigen::VectorXd& phi_init,
                      RngStream rng, std::vector<std::string> names) {
    if (cfg.gamma < 0.0 || cfg.gamma > 1.0)
        throw ContractError("smp_power: gamma must lie in [0,1]");
    const int dz = model.dim_zeta, dp = model.dim_phi;

    if (cfg.gamma == 0.0) {
        CutConfig cc;
        cc.outer_draws = (cfg.outer_iterations - cfg.outer_burn_in) / cfg.outer_thin;
        cc.stage1_thin = cfg.outer_thin;
        cc.stage1_burn_in = cfg.outer_burn_in;
        cc.stage1_proposal_cov = cfg.outer_proposal_cov.bottomRightCorner(dp, dp);
        cc.inner_iterations = cfg.inner_iterations;
        cc.inner_proposal_cov = cfg.inner_proposal_cov;
        return cut_posterior(model, cc, phi_init, zeta_init, rng, std::move(names)).chain;
    }

    const double gamma = cfg.gamma;
    auto target = [&model, gamma, dz, dp](const Eigen::VectorXd& x) {
        const Eigen::VectorXd zt = x.head(dz);
        const Eigen::VectorXd phi = x.tail(dp);
        const double l2 = model.logf2(zt, phi);
        if (!std::isfinite(l2)) return kNegInf;
        return model.logf1(phi) + gamma * l2 + model.logprior_phi(phi) +
               model.logprior_zeta_given_phi(zt, phi);
    };
    mcmc::MhConfig outer;
    outer.iterations = cfg.outer_iterations;
    outer.thin = cfg.outer_thin;
    outer.burn_in = cfg.outer_burn_in;
    outer.proposal_cov = cfg.outer_proposal_cov;
    const mcmc::Chain power_chain =
        mcmc::rw_metropolis(target, concat(zeta_init, phi_init), outer, rng.child(0));

    // redraw zeta from pi(zeta|phi,Y) per kept phi; zeta_tilde is discarded
    mcmc::MhConfig inner_cfg;
    inner_cfg.iterations = cfg.inner_iterations;
    inner_cfg.thin = cfg.inner_iterations;
    inner_cfg.burn_in = 0;
    inner_cfg.proposal_cov = cfg.inner_proposal_cov;

    const long kept = power_chain.size();
    mcmc::Chain out;
    out.draws.resize(kept, dz + dp);
    out.log_target.resize(kept);
    out.acceptance_rate = power_chain.acceptance_rate;
    out.config = outer;
    RngStream inner_root = rng.child(1);
    Eigen::VectorXd zeta_prev = zeta_init;
    for (long i = 0; i < kept; ++i) {
        const Eigen::VectorXd phi = power_chain.draws.row(i).tail(dp).transpose();
        Eigen::VectorXd zeta;
        RngStream zrng = inner_root.child(static_cast<std::uint64_t>(i));
        if (model.zeta_exact_draw) {
            zeta = model.zeta_exact_draw(phi, zrng);
        } else {
            auto inner_target = [&model, &phi](const Eigen::VectorXd& z) {
                return model.logf2(z, phi) + model.logprior_zeta_given_phi(z, phi);
            };
            Eigen::VectorXd start =
                model.zeta_mode ? model.zeta_mode(phi)
                                : diag_newton_step(inner_target, zeta_prev,
                                                   cfg.inner_proposal_cov);
            if (!std::isfinite(inner_target(start))) start = zeta_prev;
            const mcmc::Chain zc = mcmc::rw_metropolis(inner_target, start, inner_cfg, zrng);
            zeta = zc.draws.row(zc.size() - 1).transpose();
        }
        out.draws.row(i) << zeta.transpose(), phi.transpose();
        out.log_target[i] = model.log_joint(zeta, phi);
        zeta_prev = zeta;
    }
    if (names.empty()) {
        for (int j = 0; j < dz; ++j) names.push_back("zeta_" + std::to_string(j + 1));
        for (int j = 0; j < dp; ++j) names.push_back("phi_" + std::to_string(j + 1));
    }
    out.names = std::move(names);
    return out;
}

mcmc::Chain smp_linear(const TwoModuleModel& model, const mcmc::Chain& cut_chain,
                       const mcmc::Chain& exact_chain, double gamma, long draws,
                       long inner_iterations, const Eigen::MatrixXd& inner_proposal_cov,
                       RngStream rng, std::vector<std::string> names) {
    if (gamma < 0.0 || gamma > 1.0) throw ContractError("smp_linear: gamma must lie in [0,1]");
    if (draws < 1) throw ContractError("smp_linear: draws must be >= 1");
    const int dz = model.dim_zeta, dp = model.dim_phi;
    if (cut_chain.dim() != dz + dp || exact_chain.dim() != dz + dp)
        throw ContractError("smp_linear: chain dimension mismatch");

    mcmc::MhConfig inner_cfg;
    inner_cfg.iterations = inner_iterations;
    inner_cfg.thin = inner_iterations;
    inner_cfg.burn_in = 0;
    inner_cfg.proposal_cov = inner_proposal_cov;

    mcmc::Chain out;
    out.draws.resize(draws, dz + dp);
    out.log_target.resize(draws);
    out.acceptance_rate = 1.0;
    RngStream pick_rng = rng.child(0);
    RngStream inner_root = rng.child(1);
    for (long b = 0; b < draws; ++b) {
        // gamma weights the cut component, as printed
        const bool from_cut = pick_rng.uniform() < gamma;
        const mcmc::Chain& src = from_cut ? cut_chain : exact_chain;
        const long row = static_cast<long>(pick_rng.uniform() * static_cast<double>(src.size()));
        const Eigen::VectorXd phi = src.draws.row(std::min(row, src.size() - 1)).tail(dp);
        Eigen::VectorXd zeta;
        RngStream zrng = inner_root.child(static_cast<std::uint64_t>(b));
        if (model.zeta_exact_draw) {
            zeta = model.zeta_exact_draw(phi, zrng);
        } else {
            auto inner_target = [&model, &phi](const Eigen::VectorXd& z) {
                return model.logf2(z, phi) + model.logprior_zeta_given_phi(z, phi);
            };
            Eigen::VectorXd start =
                src.draws.row(std::min(row, src.size() - 1)).head(dz).transpose();
            if (!std::isfinite(inner_target(start)) && model.zeta_mode)
                start = model.zeta_mode(phi);
            const mcmc::Chain zc = mcmc::rw_metropolis(inner_target, start, inner_cfg, zrng);
            zeta = zc.draws.row(zc.size() - 1).transpose();
        }
        out.draws.row(b) << zeta.transpose(), phi.transpose();
        out.log_target[b] = model.log_joint(zeta, phi);
    }
    if (names.empty()) names = cut_chain.names;
    out.names = std::move(names);
    return out;
}

// ---------------------------------------------------------------------------
// Random effects testbed
// ---------------------------------------------------------------------------

ReData sufficient_stats(const Eigen::MatrixXd& z) {
    if (z.rows() < 1 || z.cols() < 1) throw ContractError("sufficient_stats: empty matrix");
    ReData d;
    d.zbar = z.rowwise().mean();
    d.s2.resize(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i)
        d.s2[i] = (z.row(i).array() - d.zbar[i]).square().sum();
    return d;
}

Eigen::MatrixXd simulate_re_data(const ReSimSpec& spec, RngStream& rng) {
    if (spec.N < 1 || spec.J < 2) throw ContractError("simulate_re_data: need N >= 1, J >= 2");
    Eigen::MatrixXd z(spec.N, spec.J);
    const double phi = std::sqrt(spec.phi2);
    const double psi = std::sqrt(spec.psi2);
    for (long i = 0; i < spec.N; ++i) {
        double beta = psi * rng.normal();
        if (i == 0 && spec.override_beta1) beta = spec.beta1;
        for (long j = 0; j < spec.J; ++j) z(i, j) = beta + phi * rng.normal();
    }
    return z;
}

std::vector<std::string> re_chain_names(long n_groups) {
    std::vector<std::string> names{"psi2"};
    for (long i = 1; i <= n_groups; ++i) names.push_back("beta_" + std::to_string(i));
    for (long i = 1; i <= n_groups; ++i) names.push_back("phi2_" + std::to_string(i));
    return names;
}

namespace {

struct ReDensities {
    const RandomEffectsModel* model;
    const ReData* data;
    double k() const { return model->factor_j ? static_cast<double>(model->J) : 1.0; }

    // log f1(s^2 | phi^2) * pi(phi^2) * Jacobian, on u = log phi^2 (flat prior in u)
    double logf1_u(const Eigen::VectorXd& u) const {
        const double a = 0.5 * (static_cast<double>(model->J) - 1.0);
        const double kk = k();
        double lp = 0.0;
        for (Eigen::Index i = 0; i < u.size(); ++i)
            lp += -a * u[i] - 0.5 * kk * data->s2[i] * std::exp(-u[i]);
        return lp;
    }

    // integrated-beta likelihood terms and the psi^2 | phi prior as a function
    // of psi^2 on its natural scale
    double log_psi2_conditional(double psi2, const Eigen::VectorXd& phi2) const {
        const double jj = static_cast<double>(model->J);
        const double phibar2 = phi2.mean();
        if (psi2 <= 0.0) return kNegInf;
        const Eigen::ArrayXd tau = psi2 + phi2.array() / jj;
        return -std::log(psi2 + phibar2 / jj) - 0.5 * tau.log().sum() -
               0.5 * (data->zbar.array().square() / tau).sum();
    }

    // exact marginal in (t, u) = (log psi^2, log phi^2)
    double log_marginal(const Eigen::VectorXd& x) const {
        const double t = x[0];
        const Eigen::VectorXd u = x.tail(x.size() - 1);
        const Eigen::VectorXd phi2 = u.array().exp();
        return logf1_u(u) + log_psi2_conditional(std::exp(t), phi2) + t;
    }
};

// Adaptive-grid inverse-CDF sampler for psi^2 on log scale over [1e-6, 1e6].
class PsiGrid {
public:
    PsiGrid(const ReDensities& dens, const Eigen::VectorXd& phi2) {
        constexpr int n = 2048;
        const double lo0 = std::log(1e-6), hi0 = std::log(1e6);
        Eigen::VectorXd t = Eigen::VectorXd::LinSpaced(n, lo0, hi0);
        Eigen::VectorXd ld(n);
        for (int i = 0; i < n; ++i)
            ld[i] = dens.log_psi2_conditional(std::exp(t[i]), phi2) + t[i];
        int imax = 0;
        const double mx = ld.maxCoeff(&imax);
        // refine on the window carrying the mass
        int lo = imax, hi = imax;
        while (lo > 0 && ld[lo] > mx - 40.0) --lo;
        while (hi < n - 1 && ld[hi] > mx - 40.0) ++hi;
        t_ = Eigen::VectorXd::LinSpaced(n, t[lo], t[hi]);
        ld.resize(n);
        for (int i = 0; i < n; ++i)
            ld[i] = dens.log_psi2_conditional(std::exp(t_[i]), phi2) + t_[i];
        const double m2 = ld.maxCoeff();
        cdf_.resize(n);
        cdf_[0] = 0.0;
        const double dt = t_[1] - t_[0];
        for (int i = 1; i < n; ++i)
            cdf_[i] = cdf_[i - 1] +
                      0.5 * dt * (std::exp(ld[i - 1] - m2) + std::exp(ld[i] - m2));
        if (!(cdf_[n - 1] > 0.0))
            throw DegeneracyError("psi^2 conditional density integrates to zero on the grid");
        cdf_ /= cdf_[n - 1];
        mode_t_ = t_[imax];
    }

    double draw(RngStream& rng) const {
        const double uu = rng.uniform();
        const auto* begin = cdf_.data();
        const auto* it = std::upper_bound(begin, begin + cdf_.size(), uu);
        Eigen::Index j = std::max<Eigen::Index>(1, it - begin);
        j = std::min<Eigen::Index>(j, cdf_.size() - 1);
        const double c0 = cdf_[j - 1], c1 = cdf_[j];
        const double frac = c1 > c0 ? (uu - c0) / (c1 - c0) : 0.5;
        return std::exp(t_[j - 1] + frac * (t_[j] - t_[j - 1]));
    }

    double mode_log_psi2() const { return mode_t_; }

private:
    Eigen::VectorXd t_, cdf_;
    double mode_t_ = 0.0;
};

// beta_i | zbar_i, psi^2, phi_i^2 is gaussian with shrinkage toward zero
void draw_betas(const ReData& data, long j_per_group, double psi2,
                const Eigen::VectorXd& phi2, RngStream& rng, Eigen::VectorXd& beta) {
    const double jj = static_cast<double>(j_per_group);
    beta.resize(phi2.size());
    for (Eigen::Index i = 0; i < phi2.size(); ++i) {
        const double prec = jj / phi2[i] + 1.0 / psi2;
        const double mean = (jj / phi2[i]) * data.zbar[i] / prec;
        beta[i] = mean + rng.normal() / std::sqrt(prec);
    }
}

}  // namespace

TwoModuleModel re_two_module(const RandomEffectsModel& model, const ReData& data) {
    if (data.zbar.size() != model.N || data.s2.size() != model.N)
        throw ContractError("re_two_module: data size does not match N");
    // shared copies so the view owns its inputs
    auto model_copy = std::make_shared<RandomEffectsModel>(model);
    auto data_copy = std::make_shared<ReData>(data);
    auto dens = std::make_shared<ReDensities>(ReDensities{model_copy.get(), data_copy.get()});

    const long n = model.N;
    const long j_per_group = model.J;
    TwoModuleModel tm;
    tm.dim_phi = static_cast<int>(n);
    tm.dim_zeta = static_cast<int>(n) + 1;  // (log psi^2, beta_1..beta_N)

    tm.logf1 = [dens, model_copy, data_copy](const Eigen::VectorXd& u) {
        return dens->logf1_u(u);
    };
    tm.logprior_phi = [](const Eigen::VectorXd&) { return 0.0; };  // flat in log phi^2
    tm.logf2 = [j_per_group, data_copy](const Eigen::VectorXd& zeta,
                                        const Eigen::VectorXd& u) {
        const double jj = static_cast<double>(j_per_group);
        double lp = 0.0;
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            const double v = std::exp(u[i]) / jj;
            const double r = data_copy->zbar[i] - zeta[i + 1];
            lp += -0.5 * std::log(v) - 0.5 * r * r / v;
        }
        return lp;
    };
    tm.logprior_zeta_given_phi = [j_per_group](const Eigen::VectorXd& zeta,
                                               const Eigen::VectorXd& u) {
        const double t = zeta[0];
        const double psi2 = std::exp(t);
        const double phibar2 = u.array().exp().mean();
        double lp = -std::log(psi2 + phibar2 / static_cast<double>(j_per_group)) + t;
        for (Eigen::Index i = 1; i < zeta.size(); ++i)
            lp += -0.5 * std::log(psi2) - 0.5 * zeta[i] * zeta[i] / psi2;
        return lp;
    };
    tm.zeta_mode = [dens, model_copy, data_copy, j_per_group](const Eigen::VectorXd& u) {
        const Eigen::VectorXd phi2 = u.array().exp();
        PsiGrid grid(*dens, phi2);
        const double psi2 = std::exp(grid.mode_log_psi2());
        Eigen::VectorXd zeta(u.size() + 1);
        zeta[0] = grid.mode_log_psi2();
        const double jj = static_cast<double>(j_per_group);
        for (Eigen::Index i = 0; i < u.size(); ++i) {
            const double prec = jj / phi2[i] + 1.0 / psi2;
            zeta[i + 1] = (jj / phi2[i]) * data_copy->zbar[i] / prec;
        }
        return zeta;
    };
    tm.zeta_exact_draw = [dens, model_copy, data_copy, j_per_group](
                             const Eigen::VectorXd& u, RngStream& rng) {
        const Eigen::VectorXd phi2 = u.array().exp();
        PsiGrid grid(*dens, phi2);
        const double psi2 = grid.draw(rng);
        Eigen::VectorXd beta;
        draw_betas(*data_copy, j_per_group, psi2, phi2, rng, beta);
        Eigen::VectorXd zeta(u.size() + 1);
        zeta[0] = std::log(psi2);
        zeta.tail(u.size()) = beta;
        return zeta;
    };
    return tm;
}

Eigen::MatrixXd re_default_exact_proposal(const RandomEffectsModel& model) {
    const long d = model.N + 1;
    Eigen::VectorXd scale(d);
    scale[0] = std::max(0.02, 2.0 / static_cast<double>(model.N));  // log psi^2
    scale.tail(model.N).setConstant(2.0 / (static_cast<double>(model.J) - 1.0));
    return mcmc::default_proposal(Eigen::MatrixXd(scale.asDiagonal()));
}

mcmc::Chain re_exact_posterior(const RandomEffectsModel& model, const ReData& data,
                               const mcmc::MhConfig& cfg, RngStream rng) {
    if (data.zbar.size() != model.N || data.s2.size() != model.N)
        throw ContractError("re_exact_posterior: data size mismatch");
    ReDensities dens{&model, &data};
    auto target = [&dens](const Eigen::VectorXd& x) { return dens.log_marginal(x); };

    // start at the module-1 likelihood mode, psi^2 at the zbar variance
    Eigen::VectorXd init(model.N + 1);
    const double kk = dens.k();
    for (long i = 0; i < model.N; ++i)
        init[i + 1] = std::log(std::max(1e-8, kk * data.s2[i] /
                                                  (static_cast<double>(model.J) - 1.0)));
    const double zbar_var =
        (data.zbar.array() - data.zbar.mean()).square().sum() /
        std::max<double>(1, model.N - 1);
    init[0] = std::log(std::max(0.1, zbar_var));

    const mcmc::Chain marg = mcmc::rw_metropolis(target, init, cfg, rng.child(0));

    // augment with exact beta conditionals
    const long kept = marg.size();
    mcmc::Chain out;
    out.draws.resize(kept, 1 + 2 * model.N);
    out.log_target = marg.log_target;
    out.acceptance_rate = marg.acceptance_rate;
    out.config = cfg;
    out.names = re_chain_names(model.N);
    RngStream beta_rng = rng.child(1);
    Eigen::VectorXd beta;
    for (long i = 0; i < kept; ++i) {
        const double psi2 = std::exp(marg.draws(i, 0));
        const Eigen::VectorXd phi2 = marg.draws.row(i).tail(model.N).array().exp();
        draw_betas(data, model.J, psi2, phi2, beta_rng, beta);
        out.draws(i, 0) = psi2;
        out.draws.row(i).segment(1, model.N) = beta.transpose();
        out.draws.row(i).tail(model.N) = phi2.transpose();
    }
    return out;
}

mcmc::Chain re_cut_exact_sampler(const RandomEffectsModel& model, const ReData& data,
                                 long draws, RngStream rng) {
    if (draws < 1) throw ContractError("re_cut_exact_sampler: draws must be >= 1");
    if (data.zbar.size() != model.N || data.s2.size() != model.N)
        throw ContractError("re_cut_exact_sampler: data size mismatch");
    for (long i = 0; i < model.N; ++i)
        if (!(data.s2[i] > 0.0))
            throw DegeneracyError("degenerate group " + std::to_string(i + 1) +
                                  ": zero within-group sum of squares");
    ReDensities dens{&model, &data};
    const double a = 0.5 * (static_cast<double>(model.J) - 1.0);
    const double kk = dens.k();

    mcmc::Chain out;
    out.draws.resize(draws, 1 + 2 * model.N);
    out.log_target.resize(draws);
    out.acceptance_rate = 1.0;
    out.names = re_chain_names(model.N);
    out.config.iterations = draws;

    Eigen::VectorXd phi2(model.N), beta;
    for (long t = 0; t < draws; ++t) {
        for (long i = 0; i < model.N; ++i)
            phi2[i] = 0.5 * kk * data.s2[i] / rng.gamma(a);  // inverse-gamma(a, k s^2/2)
        PsiGrid grid(dens, phi2);
        const double psi2 = grid.draw(rng);
        draw_betas(data, model.J, psi2, phi2, rng, beta);
        out.draws(t, 0) = psi2;
        out.draws.row(t).segment(1, model.N) = beta.transpose();
        out.draws.row(t).tail(model.N) = phi2.transpose();
        Eigen::VectorXd x(model.N + 1);
        x[0] = std::log(psi2);
        x.tail(model.N) = phi2.array().log();
        out.log_target[t] = dens.log_marginal(x);
    }
    return out;
}

namespace {

// convert a chain over ((log psi^2, beta), log phi^2) view coordinates into the
// natural-scale layout [psi2, beta..., phi2...]
mcmc::Chain re_naturalize(const mcmc::Chain& view_chain, long n_groups) {
    mcmc::Chain out = view_chain;
    out.names = re_chain_names(n_groups);
    for (long i = 0; i < out.size(); ++i) {
        out.draws(i, 0) = std::exp(out.draws(i, 0));
        out.draws.row(i).tail(n_groups) =
            out.draws.row(i).tail(n_groups).array().exp();
    }
    return out;
}

Eigen::MatrixXd re_stage1_proposal(const RandomEffectsModel& model) {
    const Eigen::MatrixXd scale =
        (2.0 / (static_cast<double>(model.J) - 1.0)) *
        Eigen::MatrixXd::Identity(model.N, model.N);
    return mcmc::default_proposal(scale);
}

Eigen::MatrixXd re_inner_proposal(const RandomEffectsModel& model, const ReData& data) {
    Eigen::VectorXd scale(model.N + 1);
    scale[0] = std::max(0.02, 2.0 / static_cast<double>(model.N));
    for (long i = 0; i < model.N; ++i)
        scale[i + 1] = std::max(1e-4, data.s2[i] / (static_cast<double>(model.J) - 1.0) /
                                          static_cast<double>(model.J));
    return mcmc::default_proposal(Eigen::MatrixXd(scale.asDiagonal()));
}

}  // namespace

CutResult re_cut_nested(const RandomEffectsModel& model, const ReData& data,
                        const CutConfig& cfg, RngStream rng) {
    const TwoModuleModel tm = re_two_module(model, data);
    CutConfig full = cfg;
    if (full.stage1_proposal_cov.size() == 0) full.stage1_proposal_cov = re_stage1_proposal(model);
    if (full.inner_proposal_cov.size() == 0) full.inner_proposal_cov = re_inner_proposal(model, data);

    Eigen::VectorXd phi_init(model.N);
    const double kk = model.factor_j ? static_cast<double>(model.J) : 1.0;
    for (long i = 0; i < model.N; ++i)
        phi_init[i] = std::log(std::max(1e-8, kk * data.s2[i] /
                                                  (static_cast<double>(model.J) - 1.0)));
    const Eigen::VectorXd zeta_init = tm.zeta_mode(phi_init);

    CutResult res = cut_posterior(tm, full, phi_init, zeta_init, rng);
    res.chain = re_naturalize(res.chain, model.N);
    return res;
}

mcmc::Chain re_smp_power(const RandomEffectsModel& model, const ReData& data,
                         const SmpConfig& cfg, RngStream rng) {
    if (cfg.gamma == 0.0) {
        // definitional no-feedback endpoint: the cut posterior itself
        const long draws = (cfg.outer_iterations - cfg.outer_burn_in) / cfg.outer_thin;
        return re_cut_exact_sampler(model, data, draws, rng);
    }
    const TwoModuleModel tm = re_two_module(model, data);
    SmpConfig full = cfg;
    if (full.outer_proposal_cov.size() == 0) {
        Eigen::VectorXd scale(2 * model.N + 1);
        scale[0] = std::max(0.02, 2.0 / static_cast<double>(model.N));
        for (long i = 0; i < model.N; ++i)
            scale[i + 1] = std::max(1e-4, data.s2[i] / (static_cast<double>(model.J) - 1.0) /
                                              (std::max(cfg.gamma, 0.05) *
                                               static_cast<double>(model.J)));
        scale.tail(model.N).setConstant(2.0 / (static_cast<double>(model.J) - 1.0));
        full.outer_proposal_cov = mcmc::default_proposal(Eigen::MatrixXd(scale.asDiagonal()));
    }
    if (full.inner_proposal_cov.size() == 0) full.inner_proposal_cov = re_inner_proposal(model, data);

    Eigen::VectorXd phi_init(model.N);
    const double kk = model.factor_j ? static_cast<double>(model.J) : 1.0;
    for (long i = 0; i < model.N; ++i)
        phi_init[i] = std::log(std::max(1e-8, kk * data.s2[i] /
                                                  (static_cast<double>(model.J) - 1.0)));
    const Eigen::VectorXd zeta_init = tm.zeta_mode(phi_init);
    const mcmc::Chain view = smp_power(tm, full, zeta_init, phi_init, rng);
    return re_naturalize(view, model.N);
}

mcmc::Chain re_smp_linear(const RandomEffectsModel& model, const ReData& data,
                          const mcmc::Chain& cut_chain, const mcmc::Chain& exact_chain,
                          double gamma, long draws, RngStream rng) {
    if (gamma < 0.0 || gamma > 1.0) throw ContractError("re_smp_linear: gamma in [0,1]");
    ReDensities dens{&model, &data};
    mcmc::Chain out;
    out.draws.resize(draws, 1 + 2 * model.N);
    out.log_target.resize(draws);
    out.acceptance_rate = 1.0;
    out.names = re_chain_names(model.N);
    out.config.iterations = draws;
    RngStream pick = rng.child(0);
    RngStream redraw = rng.child(1);
    Eigen::VectorXd beta;
    for (long b = 0; b < draws; ++b) {
        const mcmc::Chain& src = pick.uniform() < gamma ? cut_chain : exact_chain;
        const long row = std::min<long>(
            static_cast<long>(pick.uniform() * static_cast<double>(src.size())),
            src.size() - 1);
        const Eigen::VectorXd phi2 = src.draws.row(row).tail(model.N);
        RngStream zrng = redraw.child(static_cast<std::uint64_t>(b));
        PsiGrid grid(dens, phi2);
        const double psi2 = grid.draw(zrng);
        draw_betas(data, model.J, psi2, phi2, zrng, beta);
        out.draws(b, 0) = psi2;
        out.draws.row(b).segment(1, model.N) = beta.transpose();
        out.draws.row(b).tail(model.N) = phi2.transpose();
        Eigen::VectorXd x(model.N + 1);
        x[0] = std::log(psi2);
        x.tail(model.N) = phi2.array().log();
        out.log_target[b] = dens.log_marginal(x);
    }
    return out;
}

CutDiagnostic re_cut_diagnostic(const RandomEffectsModel& model, const ReData& data,
                                const mcmc::MhConfig& exact_cfg, long cut_draws,
                                RngStream rng) {
    const mcmc::Chain exact = re_exact_posterior(model, data, exact_cfg, rng.child(0));
    const mcmc::Chain cut = re_cut_exact_sampler(model, data, cut_draws, rng.child(1));
    const Eigen::MatrixXd phi_exact = exact.draws.rightCols(model.N);
    const Eigen::MatrixXd phi_cut = cut.draws.rightCols(model.N);
    CutDiagnostic d;
    d.T = mcmc::kl_gauss_moment(phi_exact, phi_cut);
    d.mean_exact = phi_exact.colwise().mean();
    d.mean_cut = phi_cut.colwise().mean();
    d.sd_exact.resize(model.N);
    d.sd_cut.resize(model.N);
    for (long i = 0; i < model.N; ++i) {
        d.sd_exact[i] = stats::sd(phi_exact.col(i));
        d.sd_cut[i] = stats::sd(phi_cut.col(i));
    }
    return d;
}

// ---------------------------------------------------------------------------
// Repeated-sampling experiment
// ---------------------------------------------------------------------------

ExperimentResult repeated_sampling_experiment(const ExperimentSpec& spec, RngStream rng) {
    if (spec.replicates < 1) throw ContractError("experiment: replicates must be >= 1");
    for (const auto& m : spec.methods)
        if (m != "exact" && m != "cut" && m != "smp" && m != "lin-smp")
            throw ContractError("experiment: unknown method '" + m + "'");
    const bool wants_gamma =
        std::count(spec.methods.begin(), spec.methods.end(), "smp") +
            std::count(spec.methods.begin(), spec.methods.end(), "lin-smp") >
        0;
    if (wants_gamma && spec.gamma_grid.empty())
        throw ContractError("experiment: smp/lin-smp methods require a gamma grid");
    for (double g : spec.gamma_grid)
        if (g < 0.0 || g > 1.0) throw ContractError("experiment: gamma outside [0,1]");

    const RandomEffectsModel model{spec.sim.N, spec.sim.J, false};
    const double true_phi1 = std::sqrt(spec.sim.phi2);

    auto phi1_mean = [](const mcmc::Chain& chain) {
        return chain.col("phi2_1").array().sqrt().mean();
    };

    std::vector<std::vector<ExperimentRow>> per_rep(spec.replicates);
    std::atomic<long> next{0};
    auto run_replicate = [&](long r) {
        std::vector<ExperimentRow>& rows = per_rep[r];
        RngStream rep_rng = rng.child(static_cast<std::uint64_t>(r));
        RngStream sim_rng = rep_rng.child(0);
        const Eigen::MatrixXd z = simulate_re_data(spec.sim, sim_rng);
        const ReData data = sufficient_stats(z);

        bool have_cut = false, have_exact = false;
        double mean_cut = 0.0, mean_exact = 0.0;
        auto ensure_cut = [&]() {
            if (!have_cut) {
                mean_cut = phi1_mean(
                    re_cut_exact_sampler(model, data, spec.cut_draws, rep_rng.child(1)));
                have_cut = true;
            }
            return mean_cut;
        };
        auto ensure_exact = [&]() {
            if (!have_exact) {
                mcmc::MhConfig cfg;
                cfg.iterations = spec.exact_iterations;
                cfg.thin = spec.exact_thin;
                cfg.proposal_cov = re_default_exact_proposal(model);
                mean_exact =
                    phi1_mean(re_exact_posterior(model, data, cfg, rep_rng.child(2)));
                have_exact = true;
            }
            return mean_exact;
        };

        for (const auto& method : spec.methods) {
            const std::vector<double> gammas =
                (method == "smp" || method == "lin-smp") ? spec.gamma_grid
                                                         : std::vector<double>{-1.0};
            for (std::size_t gi = 0; gi < gammas.size(); ++gi) {
                ExperimentRow row;
                row.replicate = r;
                row.method = method;
                row.gamma = gammas[gi];
                try {
                    double est = 0.0;
                    if (method == "cut") {
                        est = ensure_cut();
                    } else if (method == "exact") {
                        est = ensure_exact();
                    } else if (method == "lin-smp") {
                        // mixture mean is the gamma-weighted mean (gamma on cut)
                        est = gammas[gi] * ensure_cut() + (1.0 - gammas[gi]) * ensure_exact();
                    } else {  // smp
                        SmpConfig sc;
                        sc.gamma = gammas[gi];
                        sc.outer_iterations = spec.smp_iterations;
                        sc.outer_thin = spec.smp_thin;
                        est = phi1_mean(re_smp_power(model, data, sc,
                                                      rep_rng.child(10 + gi)));
                    }
                    row.post_mean_phi1 = est;
                    row.abs_error = std::abs(est - true_phi1);
                } catch (const std::exception& e) {
                    row.failed = true;
                    row.error = e.what();
                }
                rows.push_back(std::move(row));
            }
        }
    };

    const int workers = std::max(1, spec.workers);
    if (workers == 1) {
        for (long r = 0; r < spec.replicates; ++r) run_replicate(r);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&]() {
                for (;;) {
                    const long r = next.fetch_add(1);
                    if (r >= spec.replicates) return;
                    run_replicate(r);
                }
            });
        for (auto& th : pool) th.join();
    }

    ExperimentResult result;
    result.true_phi1 = true_phi1;
    for (auto& rows : per_rep)
        for (auto& row : rows) {
            if (row.failed) ++result.failures;
            result.rows.push_back(std::move(row));
        }

    // quartile summary per (method, gamma)
    std::map<std::pair<std::string, double>, std::vector<double>> groups;
    for (const auto& row : result.rows)
        if (!row.failed) groups[{row.method, row.gamma}].push_back(row.post_mean_phi1);
    for (const auto& method : spec.methods) {
        for (auto& [key, vals] : groups) {
            if (key.first != method) continue;
            Eigen::VectorXd v =
                Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<long>(vals.size()));
            const auto q = stats::quartiles(v);
            result.summary.push_back(
                {key.first, key.second, q.q25, q.q50, q.q75, static_cast<long>(vals.size())});
        }
    }
    return result;
}

}  // namespace misbayes::modular
