#pragma once

#include <vector>

namespace hablab {

// Silverman's rule, 0.9 min(sd, IQR/1.34) n^(-1/5), floored at floor_scale * ref_sd.
double silverman_bandwidth(const std::vector<double>& v, double ref_sd, double floor_scale = 1e-3);

// Uniform grid of `points` values spanning [lo, hi].
std::vector<double> density_grid(double lo, double hi, int points = 256);

// Gaussian KDE discretized onto the grid: each grid point receives the kernel mass of its cell,
// so the result always sums to one even for very narrow kernels.
std::vector<double> kde_on_grid(const std::vector<double>& samples, double bandwidth, const std::vector<double>& grid);

// Jensen-Shannon divergence with base-2 logs, in [0, 1].
double js_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Densities of several sample sets on one pooled grid with per-set Silverman bandwidths.
std::vector<std::vector<double>> pooled_densities(const std::vector<std::vector<double>>& sets, int points = 256);

}  // namespace hablab
