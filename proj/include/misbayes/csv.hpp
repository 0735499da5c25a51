#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "misbayes/glm.hpp"
#include "misbayes/mcmc.hpp"
#include "misbayes/modular.hpp"

namespace misbayes::io {

// Shortest round-trip formatting so that identical doubles serialize to
// identical bytes.
std::string format_double(double x);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);  // throws DataError

// One row per stored draw, columns = parameter names + log_target.
void write_chain_csv(const std::string& path, const mcmc::Chain& chain);

struct ColumnRoles {
    std::string response;
    std::string trials;                  // empty unless binomial
    std::vector<std::string> covariates; // design columns in order
    bool add_intercept = true;
};

glm::GlmData load_glm_csv(const std::string& path, const ColumnRoles& roles);

// Numeric matrix with a header row (one row per group for the random-effects
// testbed).
Eigen::MatrixXd load_matrix_csv(const std::string& path);

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header);

void write_experiment_csv(const std::string& path, const modular::ExperimentResult& result);
void write_experiment_summary_csv(const std::string& path,
                                  const modular::ExperimentResult& result);

}  // namespace misbayes::io
