#include "misbayes/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "misbayes/errors.hpp"

namespace misbayes::io {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        while (!field.empty() && (field.back() == '\r' || field.back() == ' '))
            field.pop_back();
        while (!field.empty() && field.front() == ' ') field.erase(field.begin());
        fields.push_back(field);
    }
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw DataError("row " + std::to_string(row) + ", column '" + col +
                        "': cannot parse '" + cell + "' as a number");
    }
}

}  // namespace

std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

int CsvTable::column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == name) return static_cast<int>(j);
    return -1;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_line(line);
        if (table.header.empty()) {
            table.header = fields;
        } else {
            if (fields.size() != table.header.size())
                throw DataError("line " + std::to_string(lineno) + ": expected " +
                                std::to_string(table.header.size()) + " fields, got " +
                                std::to_string(fields.size()));
            table.rows.push_back(fields);
        }
    }
    if (table.header.empty()) throw DataError("empty file: " + path);
    return table;
}

void write_chain_csv(const std::string& path, const mcmc::Chain& chain) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (std::size_t j = 0; j < chain.names.size(); ++j) out << chain.names[j] << ",";
    out << "log_target\n";
    for (long i = 0; i < chain.size(); ++i) {
        for (int j = 0; j < chain.dim(); ++j) out << format_double(chain.draws(i, j)) << ",";
        out << format_double(chain.log_target[i]) << "\n";
    }
}

glm::GlmData load_glm_csv(const std::string& path, const ColumnRoles& roles) {
    const CsvTable table = read_csv(path);
    if (table.rows.empty()) throw DataError("no data rows in " + path);
    const int yc = table.column(roles.response);
    if (yc < 0) throw DataError("response column '" + roles.response + "' not found");
    int tc = -1;
    if (!roles.trials.empty()) {
        tc = table.column(roles.trials);
        if (tc < 0) throw DataError("trials column '" + roles.trials + "' not found");
    }
    std::vector<int> cc;
    for (const auto& name : roles.covariates) {
        const int c = table.column(name);
        if (c < 0) throw DataError("covariate column '" + name + "' not found");
        cc.push_back(c);
    }

    const long n = static_cast<long>(table.rows.size());
    const int p = static_cast<int>(cc.size()) + (roles.add_intercept ? 1 : 0);
    glm::GlmData data;
    data.y.resize(n);
    data.Z.resize(n, p);
    if (tc >= 0) data.trials.resize(n);
    for (long i = 0; i < n; ++i) {
        const auto& row = table.rows[i];
        data.y[i] = parse_cell(row[yc], i + 1, roles.response);
        if (tc >= 0) {
            data.trials[i] = parse_cell(row[tc], i + 1, roles.trials);
            if (data.y[i] > data.trials[i])
                throw DataError("row " + std::to_string(i + 1) +
                                ": response exceeds trials");
        }
        int col = 0;
        if (roles.add_intercept) data.Z(i, col++) = 1.0;
        for (std::size_t j = 0; j < cc.size(); ++j)
            data.Z(i, col++) = parse_cell(row[cc[j]], i + 1, roles.covariates[j]);
        data.row_names.push_back(std::to_string(i + 1));
    }
    return data;
}

Eigen::MatrixXd load_matrix_csv(const std::string& path) {
    const CsvTable table = read_csv(path);
    if (table.rows.empty()) throw DataError("no data rows in " + path);
    const long n = static_cast<long>(table.rows.size());
    const long m = static_cast<long>(table.header.size());
    Eigen::MatrixXd out(n, m);
    for (long i = 0; i < n; ++i)
        for (long j = 0; j < m; ++j)
            out(i, j) = parse_cell(table.rows[i][j], i + 1, table.header[j]);
    return out;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& header) {
    if (static_cast<long>(header.size()) != m.cols())
        throw ContractError("write_matrix_csv: header size mismatch");
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    for (std::size_t j = 0; j < header.size(); ++j)
        out << header[j] << (j + 1 < header.size() ? "," : "\n");
    for (long i = 0; i < m.rows(); ++i)
        for (long j = 0; j < m.cols(); ++j)
            out << format_double(m(i, j)) << (j + 1 < m.cols() ? "," : "\n");
}

void write_experiment_csv(const std::string& path, const modular::ExperimentResult& result) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << "replicate,method,gamma,posterior_mean_phi1,abs_error,failed,error\n";
    for (const auto& row : result.rows) {
        out << row.replicate << "," << row.method << ","
            << (row.gamma < 0.0 ? "" : format_double(row.gamma)) << ","
            << (row.failed ? "" : format_double(row.post_mean_phi1)) << ","
            << (row.failed ? "" : format_double(row.abs_error)) << ","
            << (row.failed ? "1" : "0") << "," << row.error << "\n";
    }
}

void write_experiment_summary_csv(const std::string& path,
                                  const modular::ExperimentResult& result) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << "method,gamma,q25,median,q75,n\n";
    for (const auto& s : result.summary) {
        out << s.method << "," << (s.gamma < 0.0 ? "" : format_double(s.gamma)) << ","
            << format_double(s.q25) << "," << format_double(s.q50) << ","
            << format_double(s.q75) << "," << s.n << "\n";
    }
}

}  // namespace misbayes::io
