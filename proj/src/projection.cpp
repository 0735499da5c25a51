#include "misbayes/projection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "misbayes/errors.hpp"

namespace misbayes::projection {

namespace {

constexpr double kSlackTol = 1e-6;

SubmodelSpec make_subset(std::vector<int> active, bool baseline) {
    SubmodelSpec s;
    s.kind = SubmodelSpec::Kind::active_subset;
    s.active = std::move(active);
    std::sort(s.active.begin(), s.active.end());
    s.baseline = baseline;
    return s;
}

glm::GlmData subdesign(const glm::GlmData& data, const std::vector<int>& active,
                       const Eigen::VectorXd& working_y) {
    glm::GlmData sub;
    sub.y = working_y;
    sub.trials = data.trials;
    sub.Z.resize(data.n(), static_cast<int>(active.size()));
    for (std::size_t j = 0; j < active.size(); ++j) sub.Z.col(j) = data.Z.col(active[j]);
    return sub;
}

Eigen::VectorXd embed(const Eigen::VectorXd& sub_coef, const std::vector<int>& active,
                      int p) {
    Eigen::VectorXd full = Eigen::VectorXd::Zero(p);
    for (std::size_t j = 0; j < active.size(); ++j) full[active[j]] = sub_coef[j];
    return full;
}

// Project working means onto the submodel (the shared core of draw-by-draw,
// point and clustered projections).
Eigen::VectorXd project_means(const Eigen::VectorXd& working_means,
                              const SubmodelSpec& submodel, const glm::GlmFamily& family,
                              const glm::GlmData& data) {
    const int p = data.p();
    if (submodel.kind == SubmodelSpec::Kind::active_subset) {
        const glm::GlmData sub = subdesign(data, submodel.active, working_means);
        const glm::GlmFit fit = glm::weighted_irls(family, sub, Eigen::VectorXd::Ones(sub.n()));
        return embed(fit.coef, submodel.active, p);
    }

    // l1 ball: bisection on the lasso penalty until the slope norm meets lambda
    glm::GlmData wdata = data;
    wdata.y = working_means;
    const Eigen::VectorXd unpenalized = glm::lasso_fit(family, data, working_means, 0.0);
    const double radius = submodel.lambda;
    auto slope_norm = [](const Eigen::VectorXd& b) {
        return b.tail(b.size() - 1).cwiseAbs().sum();
    };
    if (slope_norm(unpenalized) <= radius + kSlackTol) return unpenalized;

    // bracket: all slopes vanish once the penalty dominates the null gradient
    const SubmodelSpec null_spec = SubmodelSpec::null_model();
    const glm::GlmData nulldata = subdesign(data, null_spec.active, working_means);
    const glm::GlmFit nullfit =
        glm::weighted_irls(family, nulldata, Eigen::VectorXd::Ones(nulldata.n()));
    const Eigen::VectorXd beta0 = embed(nullfit.coef, null_spec.active, p);
    const Eigen::VectorXd g0 = -glm::score(family, wdata, beta0);
    double hi = 1.1 * g0.tail(p - 1).cwiseAbs().maxCoeff() + 1e-8;
    double lo = 0.0;
    Eigen::VectorXd best = glm::lasso_fit(family, data, working_means, hi);
    for (int it = 0; it < 70; ++it) {
        const double mid = 0.5 * (lo + hi);
        const Eigen::VectorXd beta = glm::lasso_fit(family, data, working_means, mid);
        const double norm = slope_norm(beta);
        if (norm <= radius) {
            hi = mid;
            best = beta;
            if (radius - norm <= kSlackTol) break;
        } else {
            lo = mid;
        }
    }
    if (slope_norm(best) > radius + kSlackTol)
        throw ConvergenceError("l1 projection: bisection failed to satisfy the radius");
    return best;
}

}  // namespace

SubmodelSpec SubmodelSpec::subset(std::vector<int> active_columns) {
    return make_subset(std::move(active_columns), false);
}

SubmodelSpec SubmodelSpec::null_model() { return make_subset({0}, true); }

SubmodelSpec SubmodelSpec::full(int p) {
    std::vector<int> all(p);
    for (int j = 0; j < p; ++j) all[j] = j;
    return make_subset(std::move(all), false);
}

SubmodelSpec SubmodelSpec::l1_ball(double radius) {
    SubmodelSpec s;
    s.kind = Kind::l1_ball;
    s.lambda = radius;
    return s;
}

void SubmodelSpec::validate(int p) const {
    if (kind == Kind::active_subset) {
        if (active.empty() || active.front() != 0)
            throw ContractError("submodel active set must include the intercept column 0");
        std::set<int> seen;
        for (int j : active) {
            if (j < 0 || j >= p) throw ContractError("submodel column index out of range");
            if (!seen.insert(j).second) throw ContractError("duplicate submodel column");
        }
    } else {
        if (!(lambda > 0.0)) throw ContractError("l1 submodel radius must be positive");
    }
}

long SubmodelSpec::complexity(int p) const {
    return kind == Kind::active_subset ? static_cast<long>(active.size())
                                       : static_cast<long>(p) + 1;
}

bool SubmodelSpec::is_full(int p) const {
    return kind == Kind::active_subset && static_cast<int>(active.size()) == p;
}

Eigen::VectorXd project_draw(const Eigen::VectorXd& theta, const SubmodelSpec& submodel,
                             const glm::GlmFamily& family, const glm::GlmData& data) {
    submodel.validate(data.p());
    if (theta.size() != data.p()) throw ContractError("project_draw: theta dimension");
    return project_means(glm::fitted_means(family, data, theta), submodel, family, data);
}

ProjectionReport project_posterior(const ReferencePosterior& ref,
                                   const SubmodelSpec& submodel) {
    if (ref.draws.rows() < 1) throw ContractError("project_posterior: empty posterior");
    submodel.validate(ref.data.p());
    const long t = ref.draws.rows();
    ProjectionReport report;
    report.projected.resize(t, ref.data.p());
    report.distances.resize(t);
    long ok = 0;
    for (long i = 0; i < t; ++i) {
        try {
            const Eigen::VectorXd theta = ref.draws.row(i).transpose();
            const Eigen::VectorXd proj = project_draw(theta, submodel, ref.family, ref.data);
            report.projected.row(ok) = proj.transpose();
            report.distances[ok] = glm::kl_glm(ref.family, ref.data, theta, proj);
            ++ok;
        } catch (const std::runtime_error&) {
            ++report.failures;
        }
    }
    if (report.failures * 20 > t)
        throw ConvergenceError("project_posterior: more than 5% of draws failed (" +
                               std::to_string(report.failures) + "/" + std::to_string(t) + ")");
    report.projected.conservativeResize(ok, Eigen::NoChange);
    report.distances.conservativeResize(ok);
    report.delta = ok > 0 ? report.distances.mean() : 0.0;
    return report;
}

double relative_loss(const ProjectionReport& report_s, const ProjectionReport& report_n,
                     bool* warned) {
    if (!(report_n.delta > 0.0))
        throw DegeneracyError("relative_loss: null-model delta is zero");
    const double raw = report_s.delta / report_n.delta;
    if (warned) *warned = raw > 1.0 + kSlackTol;
    return std::clamp(raw, 0.0, 1.0);
}

SelectionResult select_submodel(const ReferencePosterior& ref,
                                const std::vector<SubmodelSpec>& candidates,
                                double threshold) {
    if (candidates.empty()) throw ContractError("select_submodel: no candidates");
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ContractError("select_submodel: threshold must lie in (0,1]");
    const int p = ref.data.p();
    const ProjectionReport null_report =
        project_posterior(ref, SubmodelSpec::null_model());

    SelectionResult result;
    long best_complexity = std::numeric_limits<long>::max();
    double best_loss = std::numeric_limits<double>::infinity();
    for (const auto& cand : candidates) {
        const ProjectionReport rep = project_posterior(ref, cand);
        const double loss = relative_loss(rep, null_report);
        result.losses.push_back(loss);
        if (loss < threshold) {
            const long cx = cand.complexity(p);
            if (cx < best_complexity || (cx == best_complexity && loss < best_loss)) {
                best_complexity = cx;
                best_loss = loss;
                result.chosen = cand;
                result.selected = true;
            }
        }
    }
    if (!result.selected) result.chosen = SubmodelSpec::full(p);
    return result;
}

Eigen::VectorXd point_projection(const ReferencePosterior& ref, const SubmodelSpec& submodel,
                                 const Eigen::MatrixXd* prediction_design) {
    if (ref.draws.rows() < 1) throw ContractError("point_projection: empty posterior");
    submodel.validate(ref.data.p());
    glm::GlmData target = ref.data;
    if (prediction_design) {
        if (prediction_design->cols() != ref.data.p())
            throw ContractError("point_projection: prediction design width mismatch");
        if (ref.family.kind == glm::Family::binomial_logit &&
            prediction_design->rows() != ref.data.n())
            throw ContractError("point_projection: binomial prediction design must match "
                                "the observed rows (trials are reused)");
        target.Z = *prediction_design;
        if (ref.family.kind != glm::Family::binomial_logit)
            target.trials = Eigen::VectorXd::Ones(target.Z.rows());
        target.y = Eigen::VectorXd::Zero(target.Z.rows());
    }
    // posterior-predictive mean response per row
    Eigen::VectorXd means = Eigen::VectorXd::Zero(target.n());
    for (long i = 0; i < ref.draws.rows(); ++i)
        means += glm::fitted_means(ref.family, target, ref.draws.row(i).transpose());
    means /= static_cast<double>(ref.draws.rows());
    return project_means(means, submodel, ref.family, target);
}

ClusteredProjection clustered_projection(const ReferencePosterior& ref,
                                         const SubmodelSpec& submodel, long k,
                                         RngStream& rng) {
    const long t = ref.draws.rows();
    if (k < 1 || k > t) throw ContractError("clustered_projection: need 1 <= k <= T");
    submodel.validate(ref.data.p());

    auto seed_and_run = [&](RngStream& r) -> std::pair<std::vector<int>, bool> {
        // k-means++ seeding
        Eigen::MatrixXd centers(k, ref.draws.cols());
        centers.row(0) = ref.draws.row(static_cast<long>(r.uniform() * t) % t);
        Eigen::VectorXd d2(t);
        for (long i = 0; i < t; ++i)
            d2[i] = (ref.draws.row(i) - centers.row(0)).squaredNorm();
        for (long c = 1; c < k; ++c) {
            const double total = d2.sum();
            long pick = t - 1;
            if (total > 0.0) {
                double u = r.uniform() * total;
                for (long i = 0; i < t; ++i) {
                    u -= d2[i];
                    if (u <= 0.0) { pick = i; break; }
                }
            } else {
                pick = static_cast<long>(r.uniform() * t) % t;
            }
            centers.row(c) = ref.draws.row(pick);
            for (long i = 0; i < t; ++i)
                d2[i] = std::min(d2[i], (ref.draws.row(i) - centers.row(c)).squaredNorm());
        }
        // Lloyd iterations
        std::vector<int> assign(t, 0);
        for (int it = 0; it < 50; ++it) {
            bool changed = false;
            for (long i = 0; i < t; ++i) {
                long best = 0;
                double bd = std::numeric_limits<double>::infinity();
                for (long c = 0; c < k; ++c) {
                    const double dd = (ref.draws.row(i) - centers.row(c)).squaredNorm();
                    if (dd < bd) { bd = dd; best = c; }
                }
                if (assign[i] != best) { assign[i] = static_cast<int>(best); changed = true; }
            }
            Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, ref.draws.cols());
            Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
            for (long i = 0; i < t; ++i) {
                sums.row(assign[i]) += ref.draws.row(i);
                counts[assign[i]] += 1.0;
            }
            if ((counts.array() == 0.0).any()) return {assign, false};
            for (long c = 0; c < k; ++c) centers.row(c) = sums.row(c) / counts[c];
            if (!changed) break;
        }
        return {assign, true};
    };

    RngStream r1 = rng.child(0);
    auto [assign, ok] = seed_and_run(r1);
    if (!ok) {
        RngStream r2 = rng.child(1);  // reseed once
        std::tie(assign, ok) = seed_and_run(r2);
        if (!ok) throw DegeneracyError("clustered_projection: empty cluster after reseed");
    }

    ClusteredProjection out;
    out.assignment = assign;
    out.projected.resize(k, ref.data.p());
    out.weights.resize(k);
    // project the mean fitted values of each cluster's members
    for (long c = 0; c < k; ++c) {
        Eigen::VectorXd means = Eigen::VectorXd::Zero(ref.data.n());
        long count = 0;
        for (long i = 0; i < t; ++i) {
            if (assign[i] != c) continue;
            means += glm::fitted_means(ref.family, ref.data, ref.draws.row(i).transpose());
            ++count;
        }
        means /= static_cast<double>(count);
        out.projected.row(c) =
            project_means(means, submodel, ref.family, ref.data).transpose();
        out.weights[c] = static_cast<double>(count) / static_cast<double>(t);
    }
    return out;
}

BootstrapProjection bayesian_bootstrap_project(const glm::GlmFamily& family,
                                               const glm::GlmData& data, long b,
                                               RngStream& rng) {
    if (b < 1) throw ContractError("bayesian_bootstrap_project: need B >= 1");
    data.validate(family);
    const long n = data.n();
    BootstrapProjection out;
    out.draws.resize(b, data.p());
    long ok = 0;
    Eigen::VectorXd w(n);
    for (long t = 0; t < b; ++t) {
        double total = 0.0;
        for (long i = 0; i < n; ++i) {
            w[i] = rng.exponential();
            total += w[i];
        }
        // Dir(1_n) scaled by n so weights average one
        w *= static_cast<double>(n) / total;
        try {
            out.draws.row(ok) = glm::weighted_irls(family, data, w).coef.transpose();
            ++ok;
        } catch (const std::runtime_error&) {
            ++out.failures;
        }
    }
    out.draws.conservativeResize(ok, Eigen::NoChange);
    return out;
}

}  // namespace misbayes::projection
