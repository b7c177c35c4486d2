#pragma once

#include <vector>

namespace hablab {

double mean(const std::vector<double>& v);
double median(std::vector<double> v);
// Linear interpolation between order statistics at h = (n-1) q.
double percentile(std::vector<double> v, double q);
// Median absolute deviation from the median (unscaled).
double mad(const std::vector<double>& v);
double stddev(const std::vector<double>& v);

}  // namespace hablab
