// Config-driven front end: posterior fitting, cut/SMP samplers, projections and
// the repeated-sampling experiment, with CSV outputs and a manifest that can
// reproduce every run.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "misbayes/config.hpp"
#include "misbayes/csv.hpp"
#include "misbayes/errors.hpp"
#include "misbayes/glm.hpp"
#include "misbayes/mcmc.hpp"
#include "misbayes/modular.hpp"
#include "misbayes/projection.hpp"
#include "misbayes/registry.hpp"
#include "misbayes/restricted.hpp"
#include "misbayes/rng.hpp"
#include "misbayes/stats.hpp"
#include "misbayes/svg.hpp"

namespace fs = std::filesystem;
using namespace misbayes;

namespace {

// Reads a key and writes the resolved value back so the manifest carries every
// default that was in effect.
struct Resolver {
    config::Ini& ini;

    std::string str(const std::string& sec, const std::string& key, const std::string& def) {
        const std::string v = ini.get_str(sec, key, def);
        ini.set(sec, key, v);
        return v;
    }
    std::string str_req(const std::string& sec, const std::string& key) {
        const std::string v = ini.get_str(sec, key);
        ini.set(sec, key, v);
        return v;
    }
    double num(const std::string& sec, const std::string& key, double def) {
        const double v = ini.get_double(sec, key, def);
        ini.set(sec, key, io::format_double(v));
        return v;
    }
    long integer(const std::string& sec, const std::string& key, long def) {
        const long v = ini.get_long(sec, key, def);
        ini.set(sec, key, std::to_string(v));
        return v;
    }
    bool boolean(const std::string& sec, const std::string& key, bool def) {
        const bool v = ini.get_bool(sec, key, def);
        ini.set(sec, key, v ? "true" : "false");
        return v;
    }
};

struct RunContext {
    std::string command;
    config::Ini ini;
    std::uint64_t seed = 0;
    std::string output_dir;
    int workers = 1;
    bool plots = false;

    RngStream rng() const { return RngStream(seed); }

    fs::path out(const std::string& name) const { return fs::path(output_dir) / name; }

    void write_manifest() const {
        std::ofstream m(out("manifest.txt"));
        if (!m) throw DataError("cannot write manifest");
        m << ini.canonical();
    }
};

struct LoadedGlm {
    glm::GlmFamily family;
    glm::GlmData data;
    std::vector<std::string> coef_names;
    double prior_sd = 10.0;
};

LoadedGlm load_glm(Resolver& r, config::Ini& ini) {
    io::ColumnRoles roles;
    const std::string path = r.str_req("data", "path");
    roles.response = r.str_req("data", "response");
    roles.trials = r.str("data", "trials", "");
    roles.covariates = ini.get_list("data", "covariates");
    ini.set("data", "covariates", [&] {
        std::string joined;
        for (const auto& c : roles.covariates) joined += (joined.empty() ? "" : ", ") + c;
        return joined;
    }());
    roles.add_intercept = r.boolean("data", "intercept", true);

    LoadedGlm out;
    const std::string fam = r.str("model", "family", "binomial");
    if (fam == "binomial") out.family = glm::GlmFamily::binomial();
    else if (fam == "poisson") out.family = glm::GlmFamily::poisson();
    else if (fam == "gaussian") out.family = glm::GlmFamily::gaussian();
    else throw ConfigError("unknown family '" + fam + "'");
    if (fam == "binomial" && roles.trials.empty())
        throw ConfigError("binomial family requires a trials column role");

    out.prior_sd = r.num("model", "prior_sd", 10.0);
    if (!(out.prior_sd > 0.0)) throw ConfigError("prior_sd must be positive");
    out.data = io::load_glm_csv(path, roles);
    out.data.validate(out.family);
    if (roles.add_intercept) out.coef_names.push_back("intercept");
    for (const auto& c : roles.covariates) out.coef_names.push_back(c);
    return out;
}

mcmc::LogTargetFn normal_prior(double sd) {
    const double var = sd * sd;
    return [var](const Eigen::VectorXd& b) { return -0.5 * b.squaredNorm() / var; };
}

mcmc::MhConfig load_mh(Resolver& r, int dim, const Eigen::MatrixXd& scale) {
    mcmc::MhConfig cfg;
    cfg.iterations = r.integer("mcmc", "iterations", 50000);
    cfg.thin = r.integer("mcmc", "thin", 10);
    cfg.burn_in = r.integer("mcmc", "burn_in", 0);
    cfg.proposal_cov = mcmc::default_proposal(scale);
    if (cfg.proposal_cov.rows() != dim) throw ConfigError("proposal scale dimension mismatch");
    return cfg;
}

void maybe_density_plots(const RunContext& ctx, const mcmc::Chain& chain) {
    if (!ctx.plots) return;
    for (int j = 0; j < chain.dim(); ++j)
        svg::write_density_overlay(
            ctx.out("density_" + chain.names[j] + ".svg").string(),
            {{chain.names[j], chain.col(j)}}, chain.names[j]);
}

// --------------------------------------------------------------------------
// subcommands
// --------------------------------------------------------------------------

void cmd_fit_posterior(RunContext& ctx) {
    Resolver r{ctx.ini};
    LoadedGlm g = load_glm(r, ctx.ini);
    const glm::GlmFit fit = glm::irls_mle(g.family, g.data);
    if (g.family.kind == glm::Family::gaussian_identity) {
        const double disp = r.num("model", "dispersion", fit.dispersion);
        g.family.dispersion = disp;
        g.family.dispersion_fixed = true;
    }
    const auto prior = normal_prior(g.prior_sd);
    const glm::GlmFamily family = g.family;
    const glm::GlmData data = g.data;
    auto target = [family, data, prior](const Eigen::VectorXd& b) {
        return glm::loglik(family, data, b) + prior(b);
    };
    const mcmc::MhConfig cfg = load_mh(r, data.p(), fit.cov);
    const mcmc::Chain chain = mcmc::rw_metropolis(target, fit.coef, cfg, ctx.rng(), g.coef_names);
    fs::create_directories(ctx.output_dir);
    io::write_chain_csv(ctx.out("chain.csv").string(), chain);
    maybe_density_plots(ctx, chain);
    ctx.write_manifest();
}

void cmd_fit_qposterior(RunContext& ctx) {
    Resolver r{ctx.ini};
    LoadedGlm g = load_glm(r, ctx.ini);
    const glm::GlmFit fit = glm::irls_mle(g.family, g.data);
    if (g.family.kind == glm::Family::gaussian_identity) {
        const double disp = r.num("model", "dispersion", fit.dispersion);
        g.family.dispersion = disp;
        g.family.dispersion_fixed = true;
    }
    const auto prior = normal_prior(g.prior_sd);
    const glm::GlmFamily family = g.family;
    const glm::GlmData data = g.data;
    auto target = [family, data, prior](const Eigen::VectorXd& b) {
        return restricted::q_posterior_logpdf(b, data, family, prior);
    };
    const mcmc::MhConfig cfg = load_mh(r, data.p(), fit.cov);
    const mcmc::Chain chain = mcmc::rw_metropolis(target, fit.coef, cfg, ctx.rng(), g.coef_names);
    fs::create_directories(ctx.output_dir);
    io::write_chain_csv(ctx.out("chain.csv").string(), chain);
    maybe_density_plots(ctx, chain);
    ctx.write_manifest();
}

void cmd_fit_brsl(RunContext& ctx) {
    Resolver r{ctx.ini};
    LoadedGlm g = load_glm(r, ctx.ini);
    if (g.family.kind != glm::Family::binomial_logit)
        throw ConfigError("fit-brsl expects the binomial family");
    const long m = r.integer("brsl", "m", 20);
    const std::string variant_key = r.str("brsl", "variant", "mean-adjust");
    const double scale = r.num("brsl", "gamma_prior_scale", 0.5);
    const double huber_c = r.num("brsl", "huber_c", 1.2);

    restricted::BslConfig bsl;
    bsl.m = m;
    bsl.gamma_prior_scale = scale;
    if (variant_key == "standard") bsl.variant = restricted::BslVariant::standard;
    else if (variant_key == "mean-adjust") bsl.variant = restricted::BslVariant::mean_adjust;
    else if (variant_key == "variance-inflate")
        bsl.variant = restricted::BslVariant::variance_inflate;
    else throw ConfigError("unknown BSL variant '" + variant_key + "'");
    bsl.validate(g.data.p());

    // summaries are the robust estimates; chain starts at them with the robust
    // covariance as the proposal scale
    const glm::GlmFit robust = glm::robust_mest(g.family, g.data, huber_c);
    restricted::GenerativeModel model = registry::glm_binomial(g.data);
    model.summary = registry::summary_robust_mest(g.family, g.data, huber_c);
    const Eigen::VectorXd s_obs = robust.coef;

    const int d = static_cast<int>(s_obs.size());
    const bool with_gamma = bsl.variant != restricted::BslVariant::standard;
    const int dim = g.data.p() + (with_gamma ? d : 0);
    Eigen::MatrixXd scale_mat = Eigen::MatrixXd::Zero(dim, dim);
    scale_mat.topLeftCorner(g.data.p(), g.data.p()) = robust.cov;
    if (with_gamma)
        scale_mat.bottomRightCorner(d, d) = scale * scale * Eigen::MatrixXd::Identity(d, d);
    const mcmc::MhConfig cfg = load_mh(r, dim, scale_mat);

    const mcmc::Chain chain = restricted::brsl_posterior(
        model, s_obs, normal_prior(g.prior_sd), bsl, cfg, robust.coef, ctx.rng());
    fs::create_directories(ctx.output_dir);
    io::write_chain_csv(ctx.out("chain.csv").string(), chain);
    maybe_density_plots(ctx, chain);
    ctx.write_manifest();
}

modular::ReData load_or_generate_re(RunContext& ctx, Resolver& r, modular::RandomEffectsModel& model) {
    model.factor_j = r.boolean("model", "factor_j", false);
    if (ctx.ini.has("data", "path")) {
        const std::string path = r.str_req("data", "path");
        const Eigen::MatrixXd z = io::load_matrix_csv(path);
        model.N = z.rows();
        model.J = z.cols();
        return modular::sufficient_stats(z);
    }
    modular::ReSimSpec sim;
    sim.N = r.integer("generate", "N", 100);
    sim.J = r.integer("generate", "J", 10);
    sim.phi2 = r.num("generate", "phi2", 0.5);
    sim.psi2 = r.num("generate", "psi2", 2.0);
    sim.override_beta1 = r.boolean("generate", "override_beta1", true);
    sim.beta1 = r.num("generate", "beta1", 10.0);
    if (sim.phi2 <= 0.0 || sim.psi2 <= 0.0) throw ConfigError("variances must be positive");
    model.N = sim.N;
    model.J = sim.J;
    RngStream gen = ctx.rng().child(1000);
    return modular::sufficient_stats(modular::simulate_re_data(sim, gen));
}

void cmd_cut(RunContext& ctx) {
    Resolver r{ctx.ini};
    modular::RandomEffectsModel model;
    const modular::ReData data = load_or_generate_re(ctx, r, model);
    const std::string route = r.str("model", "route", "closed-form");
    const long draws = r.integer("model", "draws", 5000);
    mcmc::Chain chain;
    if (route == "closed-form") {
        chain = modular::re_cut_exact_sampler(model, data, draws, ctx.rng().child(0));
    } else if (route == "nested") {
        modular::CutConfig cc;
        cc.outer_draws = draws;
        cc.stage1_thin = r.integer("model", "stage1_thin", 25);
        cc.stage1_burn_in = r.integer("model", "stage1_burn_in", 2000);
        cc.inner_iterations = r.integer("model", "inner_iterations", 200);
        const modular::CutResult res = modular::re_cut_nested(model, data, cc, ctx.rng().child(0));
        if (res.skipped > 0)
            std::cerr << "note: " << res.skipped << " inner draws skipped\n";
        chain = res.chain;
    } else {
        throw ConfigError("unknown cut route '" + route + "'");
    }
    fs::create_directories(ctx.output_dir);
    io::write_chain_csv(ctx.out("chain.csv").string(), chain);
    maybe_density_plots(ctx, chain);
    ctx.write_manifest();
}

void cmd_smp(RunContext& ctx) {
    Resolver r{ctx.ini};
    modular::RandomEffectsModel model;
    const modular::ReData data = load_or_generate_re(ctx, r, model);
    modular::SmpConfig sc;
    sc.gamma = r.num("smp", "gamma", 0.5);
    if (sc.gamma < 0.0 || sc.gamma > 1.0) throw ConfigError("gamma must lie in [0,1]");
    sc.outer_iterations = r.integer("smp", "iterations", 200000);
    sc.outer_thin = r.integer("smp", "thin", 20);
    sc.outer_burn_in = r.integer("smp", "burn_in", 0);
    const mcmc::Chain chain = modular::re_smp_power(model, data, sc, ctx.rng().child(0));
    fs::create_directories(ctx.output_dir);
    io::write_chain_csv(ctx.out("chain.csv").string(), chain);
    maybe_density_plots(ctx, chain);
    ctx.write_manifest();
}

void cmd_lin_smp(RunContext& ctx) {
    Resolver r{ctx.ini};
    modular::RandomEffectsModel model;
    const modular::ReData data = load_or_generate_re(ctx, r, model);
    const double gamma = r.num("smp", "gamma", 0.5);
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must lie in [0,1]");
    const long draws = r.integer("smp", "draws", 5000);
    mcmc::MhConfig exact_cfg;
    exact_cfg.iterations = r.integer("exact", "iterations", 30000);
    exact_cfg.thin = r.integer("exact", "thin", 10);
    exact_cfg.proposal_cov = modular::re_default_exact_proposal(model);
    RngStream rng = ctx.rng();
    const mcmc::Chain cut = modular::re_cut_exact_sampler(model, data, draws, rng.child(0));
    const mcmc::Chain exact = modular::re_exact_posterior(model, data, exact_cfg, rng.child(1));
    const mcmc::Chain chain =
        modular::re_smp_linear(model, data, cut, exact, gamma, draws, rng.child(2));
    fs::create_directories(ctx.output_dir);
    io::write_chain_csv(ctx.out("chain.csv").string(), chain);
    maybe_density_plots(ctx, chain);
    ctx.write_manifest();
}

void cmd_diagnose_cut(RunContext& ctx) {
    Resolver r{ctx.ini};
    modular::RandomEffectsModel model;
    const modular::ReData data = load_or_generate_re(ctx, r, model);
    mcmc::MhConfig exact_cfg;
    exact_cfg.iterations = r.integer("diagnose", "exact_iterations", 30000);
    exact_cfg.thin = r.integer("diagnose", "exact_thin", 10);
    exact_cfg.proposal_cov = modular::re_default_exact_proposal(model);
    const long cut_draws = r.integer("diagnose", "cut_draws", 5000);
    const modular::CutDiagnostic diag =
        modular::re_cut_diagnostic(model, data, exact_cfg, cut_draws, ctx.rng().child(0));

    fs::create_directories(ctx.output_dir);
    {
        std::ofstream out(ctx.out("diagnostic.txt"));
        out << "T = " << io::format_double(diag.T) << "\n";
    }
    Eigen::MatrixXd table(model.N, 4);
    table.col(0) = diag.mean_exact;
    table.col(1) = diag.mean_cut;
    table.col(2) = diag.sd_exact;
    table.col(3) = diag.sd_cut;
    io::write_matrix_csv(ctx.out("diagnostic.csv").string(), table,
                         {"mean_exact", "mean_cut", "sd_exact", "sd_cut"});
    ctx.write_manifest();
}

projection::SubmodelSpec parse_submodel(const std::string& text, int p) {
    if (text.rfind("l1:", 0) == 0) {
        const double radius = std::stod(text.substr(3));
        return projection::SubmodelSpec::l1_ball(radius);
    }
    if (text == "null") return projection::SubmodelSpec::null_model();
    if (text == "full") return projection::SubmodelSpec::full(p);
    std::vector<int> active;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        active.push_back(std::stoi(item));
    }
    return projection::SubmodelSpec::subset(std::move(active));
}

projection::ReferencePosterior build_reference(RunContext& ctx, Resolver& r) {
    LoadedGlm g = load_glm(r, ctx.ini);
    const glm::GlmFit fit = glm::irls_mle(g.family, g.data);
    if (g.family.kind == glm::Family::gaussian_identity) {
        const double disp = r.num("model", "dispersion", fit.dispersion);
        g.family.dispersion = disp;
        g.family.dispersion_fixed = true;
    }
    const auto prior = normal_prior(g.prior_sd);
    const glm::GlmFamily family = g.family;
    const glm::GlmData data = g.data;
    auto target = [family, data, prior](const Eigen::VectorXd& b) {
        return glm::loglik(family, data, b) + prior(b);
    };
    mcmc::MhConfig cfg;
    cfg.iterations = r.integer("reference", "iterations", 20000);
    cfg.thin = r.integer("reference", "thin", 20);
    cfg.burn_in = r.integer("reference", "burn_in", 0);
    cfg.proposal_cov = mcmc::default_proposal(fit.cov);
    const mcmc::Chain chain =
        mcmc::rw_metropolis(target, fit.coef, cfg, ctx.rng(), g.coef_names);
    return {family, data, chain.draws};
}

void cmd_project(RunContext& ctx) {
    Resolver r{ctx.ini};
    projection::ReferencePosterior ref = build_reference(ctx, r);
    const std::string spec_text = r.str_req("projection", "submodel");
    const std::string kind = r.str("projection", "kind", "draw");
    const projection::SubmodelSpec submodel = parse_submodel(spec_text, ref.data.p());

    const projection::ProjectionReport null_report =
        projection::project_posterior(ref, projection::SubmodelSpec::null_model());

    fs::create_directories(ctx.output_dir);
    std::vector<std::string> header;
    for (int j = 0; j < ref.data.p(); ++j) header.push_back("coef_" + std::to_string(j));

    double delta = 0.0;
    if (kind == "draw") {
        const projection::ProjectionReport rep = projection::project_posterior(ref, submodel);
        Eigen::MatrixXd table(rep.projected.rows(), ref.data.p() + 1);
        table.leftCols(ref.data.p()) = rep.projected;
        table.col(ref.data.p()) = rep.distances;
        header.push_back("distance");
        io::write_matrix_csv(ctx.out("projection.csv").string(), table, header);
        delta = rep.delta;
    } else if (kind == "point") {
        const Eigen::VectorXd proj = projection::point_projection(ref, submodel);
        io::write_matrix_csv(ctx.out("projection.csv").string(), proj.transpose(), header);
        const Eigen::VectorXd mean_draw = ref.draws.colwise().mean();
        delta = glm::kl_glm(ref.family, ref.data, mean_draw, proj);
    } else if (kind == "cluster") {
        const long k = r.integer("projection", "clusters", 10);
        RngStream rng = ctx.rng().child(7);
        const projection::ClusteredProjection cp =
            projection::clustered_projection(ref, submodel, k, rng);
        Eigen::MatrixXd table(cp.projected.rows(), ref.data.p() + 1);
        table.leftCols(ref.data.p()) = cp.projected;
        table.col(ref.data.p()) = cp.weights;
        header.push_back("weight");
        io::write_matrix_csv(ctx.out("projection.csv").string(), table, header);
    } else {
        throw ConfigError("unknown projection kind '" + kind + "'");
    }

    {
        std::ofstream out(ctx.out("summary.txt"));
        out << "delta_null = " << io::format_double(null_report.delta) << "\n";
        if (kind == "draw") {
            out << "delta = " << io::format_double(delta) << "\n";
            out << "relative_loss = "
                << io::format_double(std::clamp(delta / null_report.delta, 0.0, 1.0)) << "\n";
        }
    }
    ctx.write_manifest();
}

void cmd_select(RunContext& ctx) {
    Resolver r{ctx.ini};
    projection::ReferencePosterior ref = build_reference(ctx, r);
    const std::string cand_text = r.str_req("projection", "candidates");
    const double threshold = r.num("projection", "threshold", 0.1);

    std::vector<projection::SubmodelSpec> candidates;
    std::vector<std::string> names;
    std::stringstream ss(cand_text);
    std::string item;
    while (std::getline(ss, item, ';')) {
        std::string trimmed;
        for (char c : item)
            if (c != ' ' && c != '\t') trimmed += c;
        if (trimmed.empty()) continue;
        candidates.push_back(parse_submodel(trimmed, ref.data.p()));
        names.push_back(trimmed);
    }
    const projection::SelectionResult sel =
        projection::select_submodel(ref, candidates, threshold);

    fs::create_directories(ctx.output_dir);
    {
        std::ofstream out(ctx.out("losses.csv"));
        out << "candidate,loss,complexity\n";
        for (std::size_t i = 0; i < candidates.size(); ++i)
            out << names[i] << "," << io::format_double(sel.losses[i]) << ","
                << candidates[i].complexity(ref.data.p()) << "\n";
    }
    {
        std::ofstream out(ctx.out("selected.txt"));
        out << "selected = " << (sel.selected ? "yes" : "no (full model returned)") << "\n";
        out << "model = ";
        if (sel.chosen.kind == projection::SubmodelSpec::Kind::l1_ball) {
            out << "l1:" << io::format_double(sel.chosen.lambda) << "\n";
        } else {
            for (std::size_t j = 0; j < sel.chosen.active.size(); ++j)
                out << sel.chosen.active[j]
                    << (j + 1 < sel.chosen.active.size() ? "," : "\n");
        }
    }
    ctx.write_manifest();
}

void cmd_experiment(RunContext& ctx) {
    Resolver r{ctx.ini};
    modular::ExperimentSpec spec;
    spec.replicates = r.integer("experiment", "replicates", 100);
    spec.sim.N = r.integer("experiment", "N", 100);
    spec.sim.J = r.integer("experiment", "J", 10);
    spec.sim.phi2 = r.num("experiment", "phi2", 0.5);
    spec.sim.psi2 = r.num("experiment", "psi2", 2.0);
    spec.sim.override_beta1 = r.boolean("experiment", "override_beta1", true);
    spec.sim.beta1 = r.num("experiment", "beta1", 10.0);
    if (spec.sim.phi2 <= 0.0 || spec.sim.psi2 <= 0.0)
        throw ConfigError("variances must be positive");
    spec.methods = ctx.ini.get_list("experiment", "methods");
    if (spec.methods.empty()) spec.methods = {"exact", "cut"};
    ctx.ini.set("experiment", "methods", [&] {
        std::string joined;
        for (const auto& m : spec.methods) joined += (joined.empty() ? "" : ", ") + m;
        return joined;
    }());
    if (ctx.ini.has("experiment", "gamma_grid")) {
        spec.gamma_grid = ctx.ini.get_double_list("experiment", "gamma_grid");
        std::string joined;
        for (double g : spec.gamma_grid)
            joined += (joined.empty() ? "" : ", ") + io::format_double(g);
        ctx.ini.set("experiment", "gamma_grid", joined);
    }
    spec.exact_iterations = r.integer("experiment", "exact_iterations", 30000);
    spec.exact_thin = r.integer("experiment", "exact_thin", 10);
    spec.cut_draws = r.integer("experiment", "cut_draws", 5000);
    spec.smp_iterations = r.integer("experiment", "smp_iterations", 100000);
    spec.smp_thin = r.integer("experiment", "smp_thin", 20);
    spec.workers = ctx.workers;

    const modular::ExperimentResult result =
        modular::repeated_sampling_experiment(spec, ctx.rng().child(0));

    fs::create_directories(ctx.output_dir);
    io::write_experiment_csv(ctx.out("experiment.csv").string(), result);
    io::write_experiment_summary_csv(ctx.out("summary.csv").string(), result);
    if (ctx.plots) {
        svg::NamedSamples groups;
        for (const auto& s : result.summary) {
            std::vector<double> vals;
            for (const auto& row : result.rows)
                if (!row.failed && row.method == s.method && row.gamma == s.gamma)
                    vals.push_back(row.post_mean_phi1);
            Eigen::VectorXd v =
                Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<long>(vals.size()));
            std::string label = s.method;
            if (s.gamma >= 0.0) label += " (gamma=" + io::format_double(s.gamma) + ")";
            groups.emplace_back(label, v);
        }
        svg::write_violin(ctx.out("violin.svg").string(), groups,
                          "posterior means of phi_1");
    }
    ctx.write_manifest();
}

int dispatch(RunContext& ctx) {
    if (ctx.command == "fit-posterior") cmd_fit_posterior(ctx);
    else if (ctx.command == "fit-brsl") cmd_fit_brsl(ctx);
    else if (ctx.command == "fit-qposterior") cmd_fit_qposterior(ctx);
    else if (ctx.command == "cut") cmd_cut(ctx);
    else if (ctx.command == "smp") cmd_smp(ctx);
    else if (ctx.command == "lin-smp") cmd_lin_smp(ctx);
    else if (ctx.command == "diagnose-cut") cmd_diagnose_cut(ctx);
    else if (ctx.command == "project") cmd_project(ctx);
    else if (ctx.command == "select") cmd_select(ctx);
    else if (ctx.command == "experiment") cmd_experiment(ctx);
    else throw ConfigError("unknown subcommand '" + ctx.command + "'");
    ctx.ini.require_all_consumed();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian inference toolkit for misspecified generative models"};
    std::string command, config_path, output_dir;
    std::uint64_t seed = 0;
    int workers = 0;
    app.add_option("command", command, "subcommand to run")->required();
    app.add_option("--config", config_path, "path to the run configuration")->required();
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_option("--workers", workers, "worker threads (overrides the config)");
    app.add_option("--output", output_dir, "output directory (overrides the config)");
    CLI11_PARSE(app, argc, argv);

    try {
        RunContext ctx;
        ctx.command = command;
        ctx.ini = config::Ini::parse_file(config_path);
        Resolver r{ctx.ini};
        ctx.seed = app.count("--seed") ? seed
                                       : ctx.ini.get_u64("run", "seed", 20240601ull);
        ctx.ini.set("run", "seed", std::to_string(ctx.seed));
        ctx.workers = app.count("--workers")
                          ? workers
                          : static_cast<int>(r.integer("run", "workers", 1));
        ctx.ini.set("run", "workers", std::to_string(ctx.workers));
        ctx.output_dir = app.count("--output") ? output_dir : r.str("run", "output_dir", "out");
        ctx.ini.set("run", "output_dir", ctx.output_dir);
        ctx.plots = r.boolean("run", "plots", false);
        ctx.ini.set("run", "command", command);
        if (ctx.workers < 1) throw ConfigError("workers must be >= 1");
        return dispatch(ctx);
    } catch (const ConfigError& e) {
        std::cerr << "error: kind=config message=\"" << e.what() << "\"\n";
        return 2;
    } catch (const ContractError& e) {
        std::cerr << "error: kind=config message=\"" << e.what() << "\"\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: kind=data message=\"" << e.what() << "\"\n";
        return 3;
    } catch (const DegeneracyError& e) {
        std::cerr << "error: kind=degeneracy message=\"" << e.what() << "\"\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: kind=internal message=\"" << e.what() << "\"\n";
        return 1;
    }
}
