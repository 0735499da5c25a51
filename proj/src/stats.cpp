#include "misbayes/stats.hpp"

#include <algorithm>
#include <cmath>

#include "misbayes/errors.hpp"

namespace misbayes::stats {

double mean(const Eigen::VectorXd& x) {
    if (x.size() == 0) throw ContractError("mean of empty vector");
    return x.mean();
}

double variance(const Eigen::VectorXd& x) {
    if (x.size() < 2) throw ContractError("variance needs at least two points");
    const double m = x.mean();
    return (x.array() - m).square().sum() / static_cast<double>(x.size() - 1);
}

double sd(const Eigen::VectorXd& x) { return std::sqrt(variance(x)); }

double quantile(Eigen::VectorXd x, double q) {
    if (x.size() == 0) throw ContractError("quantile of empty vector");
    if (q < 0.0 || q > 1.0) throw ContractError("quantile level outside [0,1]");
    std::sort(x.data(), x.data() + x.size());
    const double h = (static_cast<double>(x.size()) - 1.0) * q;
    const auto lo = static_cast<Eigen::Index>(std::floor(h));
    if (lo + 1 >= x.size()) return x[x.size() - 1];
    return x[lo] + (h - static_cast<double>(lo)) * (x[lo + 1] - x[lo]);
}

Quartiles quartiles(const Eigen::VectorXd& x) {
    return {quantile(x, 0.25), quantile(x, 0.50), quantile(x, 0.75)};
}

double ks_two_sample(Eigen::VectorXd a, Eigen::VectorXd b) {
    if (a.size() == 0 || b.size() == 0) throw ContractError("ks_two_sample: empty sample");
    std::sort(a.data(), a.data() + a.size());
    std::sort(b.data(), b.data() + b.size());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    Eigen::Index i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double v = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= v) ++i;
        while (j < b.size() && b[j] <= v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

double ks_vs_cdf(Eigen::VectorXd x, const std::function<double(double)>& cdf) {
    if (x.size() == 0) throw ContractError("ks_vs_cdf: empty sample");
    std::sort(x.data(), x.data() + x.size());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
        d = std::max(d, std::abs(static_cast<double>(i) / n - f));
    }
    return d;
}

double correlation(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size() || x.size() < 2) throw ContractError("correlation: bad sizes");
    const Eigen::ArrayXd cx = x.array() - x.mean();
    const Eigen::ArrayXd cy = y.array() - y.mean();
    return (cx * cy).sum() / std::sqrt(cx.square().sum() * cy.square().sum());
}

double ess(const Eigen::VectorXd& x) {
    const auto t = x.size();
    if (t < 10) throw ContractError("ess needs at least 10 points");
    const double m = x.mean();
    const Eigen::ArrayXd c = x.array() - m;
    const double c0 = c.square().sum() / static_cast<double>(t);
    if (c0 <= 0.0) return static_cast<double>(t);  // constant chain
    // accumulate paired autocorrelations while the pair sums stay positive
    double tau = 1.0;
    for (Eigen::Index k = 1; k + 1 < t; k += 2) {
        const double r1 =
            (c.head(t - k) * c.tail(t - k)).sum() / (static_cast<double>(t) * c0);
        const double r2 =
            (c.head(t - k - 1) * c.tail(t - k - 1)).sum() / (static_cast<double>(t) * c0);
        const double pair = r1 + r2;
        if (pair <= 0.0) break;
        tau += 2.0 * pair;
        if (k > t / 2) break;
    }
    return static_cast<double>(t) / tau;
}

Kde kde_silverman(const Eigen::VectorXd& x, int grid_points) {
    if (x.size() < 2) throw ContractError("kde needs at least two points");
    const double s = sd(x);
    const double iqr = quantile(x, 0.75) - quantile(x, 0.25);
    double spread = std::min(s, iqr / 1.34);
    if (spread <= 0.0) spread = s > 0.0 ? s : 1.0;
    const double h =
        0.9 * spread * std::pow(static_cast<double>(x.size()), -0.2);
    const double lo = x.minCoeff() - 3.0 * h;
    const double hi = x.maxCoeff() + 3.0 * h;
    Kde out;
    out.bandwidth = h;
    out.grid = Eigen::VectorXd::LinSpaced(grid_points, lo, hi);
    out.density = Eigen::VectorXd::Zero(grid_points);
    const double norm = 1.0 / (static_cast<double>(x.size()) * h * std::sqrt(2.0 * M_PI));
    for (int g = 0; g < grid_points; ++g) {
        const Eigen::ArrayXd z = (x.array() - out.grid[g]) / h;
        out.density[g] = norm * (-0.5 * z.square()).exp().sum();
    }
    return out;
}

}  // namespace misbayes::stats
