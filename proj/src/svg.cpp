#include "misbayes/svg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "misbayes/errors.hpp"
#include "misbayes/stats.hpp"

namespace misbayes::svg {

namespace {

constexpr double kWidth = 640.0, kHeight = 420.0;
constexpr double kMarginLeft = 60.0, kMarginRight = 20.0;
constexpr double kMarginTop = 40.0, kMarginBottom = 40.0;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf"};

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double x) {
    std::ostringstream ss;
    ss.precision(2);
    ss << std::fixed << x;
    return ss.str();
}

struct Canvas {
    std::ostringstream body;

    std::string finish(const std::string& title) const {
        std::ostringstream out;
        out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
            << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
            << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << " " << kHeight
            << "\">\n"
            << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
            << "\" fill=\"white\"/>\n"
            << "<text x=\"" << kWidth / 2
            << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
               "font-size=\"15\">"
            << escape(title) << "</text>\n"
            << body.str() << "</svg>\n";
        return out.str();
    }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out << content;
}

}  // namespace

void write_density_overlay(const std::string& path, const NamedSamples& groups,
                           const std::string& title) {
    if (groups.empty()) throw ContractError("write_density_overlay: no samples");
    Canvas canvas;
    const double x0 = kMarginLeft, x1 = kWidth - kMarginRight;
    const double y0 = kHeight - kMarginBottom, y1 = kMarginTop;

    double lo = 1e300, hi = -1e300, dmax = 0.0;
    std::vector<stats::Kde> kdes(groups.size());
    std::vector<bool> degenerate(groups.size(), false);
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const Eigen::VectorXd& x = groups[g].second;
        if (x.size() == 0) throw ContractError("write_density_overlay: empty sample");
        if (x.size() < 2 || stats::sd(x) == 0.0) {
            degenerate[g] = true;
            lo = std::min(lo, x[0] - 1.0);
            hi = std::max(hi, x[0] + 1.0);
            continue;
        }
        kdes[g] = stats::kde_silverman(x);
        lo = std::min(lo, kdes[g].grid.minCoeff());
        hi = std::max(hi, kdes[g].grid.maxCoeff());
        dmax = std::max(dmax, kdes[g].density.maxCoeff());
    }
    if (dmax <= 0.0) dmax = 1.0;
    auto sx = [&](double v) { return x0 + (v - lo) / (hi - lo) * (x1 - x0); };
    auto sy = [&](double d) { return y0 - d / dmax * (y0 - y1); };

    canvas.body << "<line x1=\"" << num(x0) << "\" y1=\"" << num(y0) << "\" x2=\"" << num(x1)
                << "\" y2=\"" << num(y0) << "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double v = lo + (hi - lo) * tick / 4.0;
        canvas.body << "<text x=\"" << num(sx(v)) << "\" y=\"" << num(y0 + 16)
                    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                       "font-size=\"11\">"
                    << num(v) << "</text>\n";
    }
    for (std::size_t g = 0; g < groups.size(); ++g) {
        const char* color = kPalette[g % 7];
        if (degenerate[g]) {
            canvas.body << "<circle cx=\"" << num(sx(groups[g].second[0])) << "\" cy=\""
                        << num(sy(dmax)) << "\" r=\"4\" fill=\"" << color << "\"/>\n";
        } else {
            canvas.body << "<polyline fill=\"none\" stroke=\"" << color
                        << "\" stroke-width=\"1.5\" points=\"";
            for (int i = 0; i < kdes[g].grid.size(); ++i)
                canvas.body << num(sx(kdes[g].grid[i])) << "," << num(sy(kdes[g].density[i]))
                            << " ";
            canvas.body << "\"/>\n";
        }
        canvas.body << "<text x=\"" << num(x1 - 150) << "\" y=\""
                    << num(y1 + 16.0 * static_cast<double>(g)) << "\" fill=\"" << color
                    << "\" font-family=\"sans-serif\" font-size=\"12\">"
                    << escape(groups[g].first) << "</text>\n";
    }
    write_file(path, canvas.finish(title));
}

void write_violin(const std::string& path, const NamedSamples& groups,
                  const std::string& title) {
    if (groups.empty()) throw ContractError("write_violin: no samples");
    Canvas canvas;
    const double y0 = kHeight - kMarginBottom, y1 = kMarginTop;
    double lo = 1e300, hi = -1e300;
    for (const auto& [name, x] : groups) {
        if (x.size() == 0) throw ContractError("write_violin: empty sample");
        lo = std::min(lo, x.minCoeff());
        hi = std::max(hi, x.maxCoeff());
    }
    if (hi <= lo) { hi = lo + 1.0; lo -= 1.0; }
    const double pad = 0.05 * (hi - lo);
    lo -= pad;
    hi += pad;
    auto sy = [&](double v) { return y0 - (v - lo) / (hi - lo) * (y0 - y1); };
    const double slot_w =
        (kWidth - kMarginLeft - kMarginRight) / static_cast<double>(groups.size());

    canvas.body << "<line x1=\"" << num(kMarginLeft - 10) << "\" y1=\"" << num(y0)
                << "\" x2=\"" << num(kMarginLeft - 10) << "\" y2=\"" << num(y1)
                << "\" stroke=\"black\"/>\n";
    for (int tick = 0; tick <= 4; ++tick) {
        const double v = lo + (hi - lo) * tick / 4.0;
        canvas.body << "<text x=\"" << num(kMarginLeft - 14) << "\" y=\"" << num(sy(v) + 4)
                    << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
                    << num(v) << "</text>\n";
    }

    for (std::size_t g = 0; g < groups.size(); ++g) {
        const Eigen::VectorXd& x = groups[g].second;
        const char* color = kPalette[g % 7];
        const double cx = kMarginLeft + slot_w * (static_cast<double>(g) + 0.5);
        if (x.size() < 2 || stats::sd(x) == 0.0) {
            canvas.body << "<circle cx=\"" << num(cx) << "\" cy=\"" << num(sy(x[0]))
                        << "\" r=\"4\" fill=\"" << color << "\"/>\n";
        } else {
            const stats::Kde kde = stats::kde_silverman(x, 128);
            const double dmax = kde.density.maxCoeff();
            const double half = 0.42 * slot_w;
            canvas.body << "<polygon fill=\"" << color << "\" fill-opacity=\"0.35\" stroke=\""
                        << color << "\" points=\"";
            for (int i = 0; i < kde.grid.size(); ++i)
                canvas.body << num(cx + half * kde.density[i] / dmax) << ","
                            << num(sy(kde.grid[i])) << " ";
            for (int i = static_cast<int>(kde.grid.size()) - 1; i >= 0; --i)
                canvas.body << num(cx - half * kde.density[i] / dmax) << ","
                            << num(sy(kde.grid[i])) << " ";
            canvas.body << "\"/>\n";
            const auto q = stats::quartiles(x);
            for (double qv : {q.q25, q.q50, q.q75})
                canvas.body << "<line x1=\"" << num(cx - 0.2 * slot_w) << "\" y1=\""
                            << num(sy(qv)) << "\" x2=\"" << num(cx + 0.2 * slot_w)
                            << "\" y2=\"" << num(sy(qv)) << "\" stroke=\"black\""
                            << (qv == q.q50 ? " stroke-width=\"2\"" : "") << "/>\n";
        }
        canvas.body << "<text x=\"" << num(cx) << "\" y=\"" << num(y0 + 16)
                    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
                       "font-size=\"12\">"
                    << escape(groups[g].first) << "</text>\n";
    }
    write_file(path, canvas.finish(title));
}

}  // namespace misbayes::svg
