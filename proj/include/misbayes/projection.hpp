#pragma once

#include <Eigen/Dense>
#include <vector>

#include "misbayes/glm.hpp"
#include "misbayes/rng.hpp"

namespace misbayes::projection {

// Posterior draws of the full-model coefficients together with the data and
// family they were fitted under (covariates fixed at the observed design).
struct ReferencePosterior {
    glm::GlmFamily family;
    glm::GlmData data;
    Eigen::MatrixXd draws;  // T x p
};

struct SubmodelSpec {
    enum class Kind { active_subset, l1_ball };
    Kind kind = Kind::active_subset;
    std::vector<int> active;  // column indices, must include the intercept (0)
    double lambda = 0.0;      // L1 radius for the l1_ball kind
    bool baseline = false;    // marks the null model N

    static SubmodelSpec subset(std::vector<int> active_columns);
    static SubmodelSpec l1_ball(double radius);
    static SubmodelSpec null_model();
    static SubmodelSpec full(int p);

    void validate(int p) const;
    long complexity(int p) const;  // covariate count used for "simplest" ordering
    bool is_full(int p) const;
};

struct ProjectionReport {
    Eigen::MatrixXd projected;  // T x p, zeros on excluded coordinates
    Eigen::VectorXd distances;  // KL d(theta, theta_S-perp) >= 0 per draw
    double delta = 0.0;         // posterior-mean distance
    long failures = 0;          // excluded draws (solver failures)
};

// Constrained MLE with the response replaced by the fitted means under theta:
// active subsets solve IRLS on the subdesign, l1 balls bisect a lasso penalty
// until the slope L1 norm meets the radius.
Eigen::VectorXd project_draw(const Eigen::VectorXd& theta, const SubmodelSpec& submodel,
                             const glm::GlmFamily& family, const glm::GlmData& data);

// Draw-by-draw projection of the reference posterior; aborts if more than 5%
// of draws fail to project.
ProjectionReport project_posterior(const ReferencePosterior& ref,
                                   const SubmodelSpec& submodel);

// delta(F,S) / delta(F,N), clamped to [0,1]; *warned flags a raw ratio beyond
// 1 + solver tolerance.
double relative_loss(const ProjectionReport& report_s, const ProjectionReport& report_n,
                     bool* warned = nullptr);

struct SelectionResult {
    SubmodelSpec chosen;
    bool selected = false;             // false: nothing beat the threshold, full model returned
    std::vector<double> losses;        // L per candidate, in input order
};

// Simplest candidate with L < threshold; ties broken by smallest loss.
SelectionResult select_submodel(const ReferencePosterior& ref,
                                const std::vector<SubmodelSpec>& candidates,
                                double threshold);

// Single projection of the posterior-predictive means (optionally on a custom
// prediction design with the same row count for binomial families).
Eigen::VectorXd point_projection(const ReferencePosterior& ref, const SubmodelSpec& submodel,
                                 const Eigen::MatrixXd* prediction_design = nullptr);

struct ClusteredProjection {
    Eigen::MatrixXd projected;    // k x p
    Eigen::VectorXd weights;      // cluster size / T, sums to 1
    std::vector<int> assignment;  // draw -> cluster
};

// k-means (k-means++ seeding, Euclidean on the draws, 50 iterations) with one
// projection per cluster of the mean fitted values of its members.
ClusteredProjection clustered_projection(const ReferencePosterior& ref,
                                         const SubmodelSpec& submodel, long k,
                                         RngStream& rng);

struct BootstrapProjection {
    Eigen::MatrixXd draws;  // successful rows, <= B x p
    long failures = 0;
};

// Weighted-likelihood bootstrap: per Dirichlet(1_n) weight draw, the weighted
// MLE of the model (weighted IRLS).
BootstrapProjection bayesian_bootstrap_project(const glm::GlmFamily& family,
                                               const glm::GlmData& data, long b,
                                               RngStream& rng);

}  // namespace misbayes::projection
