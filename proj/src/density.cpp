#include "hablab/density.hpp"

#include <algorithm>
#include <cmath>

#include "hablab/descriptive.hpp"
#include "hablab/error.hpp"

namespace hablab {

double silverman_bandwidth(const std::vector<double>& v, double ref_sd, double floor_scale) {
    double h = 0.0;
    if (v.size() > 1) {
        double sd = stddev(v);
        double iqr = percentile(v, 0.75) - percentile(v, 0.25);
        double s = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
        h = 0.9 * s * std::pow(double(v.size()), -0.2);
    }
    double floor = floor_scale * ref_sd;
    if (!(floor > 0.0)) floor = floor_scale;
    return std::max(h, floor);
}

std::vector<double> density_grid(double lo, double hi, int points) {
    if (points < 2) fail(ErrorKind::usage, "density", "grid-too-small");
    std::vector<double> g(points);
    if (!(hi > lo)) {
        double pad = std::max(1.0, std::abs(lo)) * 1e-3;
        lo -= pad;
        hi += pad;
    }
    for (int k = 0; k < points; ++k) g[k] = lo + (hi - lo) * double(k) / double(points - 1);
    return g;
}

std::vector<double> kde_on_grid(const std::vector<double>& samples, double bandwidth, const std::vector<double>& grid) {
    if (samples.empty()) fail(ErrorKind::data, "density", "empty-sample");
    if (!(bandwidth > 0.0)) fail(ErrorKind::usage, "density", "bad-bandwidth");
    const std::size_t G = grid.size();
    std::vector<double> edges(G - 1);
    for (std::size_t k = 0; k + 1 < G; ++k) edges[k] = 0.5 * (grid[k] + grid[k + 1]);
    std::vector<double> p(G, 0.0);
    const double s = 1.0 / (bandwidth * std::sqrt(2.0));
    std::vector<double> cdf(G - 1);
    for (double x : samples) {
        for (std::size_t k = 0; k + 1 < G; ++k) cdf[k] = 0.5 * std::erfc(-(edges[k] - x) * s);
        p[0] += cdf[0];
        for (std::size_t k = 1; k + 1 < G; ++k) p[k] += cdf[k] - cdf[k - 1];
        p[G - 1] += 1.0 - cdf[G - 2];
    }
    double tot = 0.0;
    for (double v : p) tot += v;
    for (double& v : p) v /= tot;
    return p;
}

double js_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) fail(ErrorKind::usage, "density", "size-mismatch");
    double js = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        double m = 0.5 * (p[k] + q[k]);
        if (p[k] > 0.0) js += 0.5 * p[k] * std::log2(p[k] / m);
        if (q[k] > 0.0) js += 0.5 * q[k] * std::log2(q[k] / m);
    }
    return std::clamp(js, 0.0, 1.0);
}

std::vector<std::vector<double>> pooled_densities(const std::vector<std::vector<double>>& sets, int points) {
    std::vector<double> all;
    for (const auto& s : sets) {
        if (s.empty()) fail(ErrorKind::data, "density", "empty-sample");
        all.insert(all.end(), s.begin(), s.end());
    }
    const double ref = stddev(all);
    auto [lo, hi] = std::minmax_element(all.begin(), all.end());
    auto grid = density_grid(*lo, *hi, points);
    std::vector<std::vector<double>> out;
    for (const auto& s : sets) out.push_back(kde_on_grid(s, silverman_bandwidth(s, ref), grid));
    return out;
}

}  // namespace hablab
