#include "hablab/descriptive.hpp"

#include <algorithm>
#include <cmath>

#include "hablab/error.hpp"

namespace hablab {

double mean(const std::vector<double>& v) {
    if (v.empty()) fail(ErrorKind::data, "stats", "empty-sample");
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

double percentile(std::vector<double> v, double q) {
    if (v.empty()) fail(ErrorKind::data, "stats", "empty-sample");
    std::sort(v.begin(), v.end());
    double h = (double(v.size()) - 1.0) * q;
    auto lo = std::size_t(std::floor(h));
    auto hi = std::min(v.size() - 1, lo + 1);
    return v[lo] + (h - double(lo)) * (v[hi] - v[lo]);
}

double median(std::vector<double> v) { return percentile(std::move(v), 0.5); }

double mad(const std::vector<double>& v) {
    double m = median(v);
    std::vector<double> d(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) d[i] = std::abs(v[i] - m);
    return median(std::move(d));
}

double stddev(const std::vector<double>& v) {
    double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return v.size() > 1 ? std::sqrt(s / double(v.size() - 1)) : 0.0;
}

}  // namespace hablab
