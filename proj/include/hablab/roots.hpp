#pragma once

#include <array>

namespace hablab {

struct RealRoots {
    int count = 0;
    std::array<double, 3> r{};
};

// Real roots of x^3 + a2 x^2 + a1 x + a0, trigonometric or Cardano form, each polished by one Newton step.
RealRoots cubic_roots(double a2, double a1, double a0);

// |p(x)| divided by the largest term magnitude |c_k x^k| (monic cubic).
double cubic_scaled_residual(double a2, double a1, double a0, double x);

// Non-negative root of B p^2 - C p - g/2 = 0 (B > 0, g >= 0).
double svfmm_quadratic_root(double B, double C, double g);

// Coefficients (a2, a1, a0) of the monic cubic whose roots are the stationary points of
//   f(a) = g log a - log(a + A) - B a^2 + 2 C a.
std::array<double, 3> dcm_cubic(double g, double A, double B, double C);
double dcm_local_objective(double alpha, double g, double A, double B, double C);

struct AlphaUpdate {
    double value = 0.0;
    bool from_root = false;  // false when the boundary floor or the previous value was kept
    double residual = 0.0;
};

// Coordinate update for one Dirichlet parameter: best non-negative real root of dcm_cubic,
// never lowering f below its value at `current`.
AlphaUpdate dcm_alpha_update(double g, double A, double B, double C, double current, double floor = 1e-12);

}  // namespace hablab
