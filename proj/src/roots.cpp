#include "hablab/roots.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hablab {

namespace {

double poly(double a2, double a1, double a0, double x) { return ((x + a2) * x + a1) * x + a0; }
double dpoly(double a2, double a1, double x) { return (3.0 * x + 2.0 * a2) * x + a1; }

double polish(double a2, double a1, double a0, double x) {
    double fx = std::abs(poly(a2, a1, a0, x));
    for (int it = 0; it < 8 && fx > 0.0; ++it) {
        double d = dpoly(a2, a1, x);
        if (d == 0.0) break;
        double y = x - poly(a2, a1, a0, x) / d;
        double fy = std::abs(poly(a2, a1, a0, y));
        if (!(fy < fx)) break;
        x = y;
        fx = fy;
    }
    return x;
}

// Roots of x^2 + b x + c without cancellation.
int quadratic_roots(double b, double c, double* r) {
    double disc = b * b - 4.0 * c;
    if (disc < 0.0) return 0;
    double q = -0.5 * (b + (b >= 0 ? std::sqrt(disc) : -std::sqrt(disc)));
    if (q == 0.0) {
        r[0] = 0.0;
        return 1;
    }
    r[0] = q;
    r[1] = c / q;
    return 2;
}

}  // namespace

RealRoots cubic_roots(double a2, double a1, double a0) {
    RealRoots out;
    if (a0 == 0.0) {
        out.r[0] = 0.0;
        out.count = 1 + quadratic_roots(a2, a1, out.r.data() + 1);
        std::sort(out.r.begin(), out.r.begin() + out.count);
        return out;
    }
    // Depressed cubic t^3 + p t + q with x = t - a2/3.
    const double shift = a2 / 3.0;
    const double p = a1 - a2 * a2 / 3.0;
    const double q = 2.0 * a2 * a2 * a2 / 27.0 - a2 * a1 / 3.0 + a0;
    const double disc = q * q / 4.0 + p * p * p / 27.0;
    if (p == 0.0 && q == 0.0) {
        out.count = 1;
        out.r[0] = -shift;
    } else if (disc > 0.0) {
        double s = std::sqrt(disc);
        double u = std::cbrt(-q / 2.0 + (q <= 0 ? s : -s));
        double t = u - p / (3.0 * u);
        out.count = 1;
        out.r[0] = t - shift;
    } else {
        double m = 2.0 * std::sqrt(-p / 3.0);
        double arg = 3.0 * q / (p * m);
        arg = std::clamp(arg, -1.0, 1.0);
        double theta = std::acos(arg) / 3.0;
        out.count = 3;
        for (int k = 0; k < 3; ++k) out.r[k] = m * std::cos(theta - 2.0 * M_PI * k / 3.0) - shift;
        // Keep the largest root and recover the others by deflation, which is
        // accurate for roots much smaller than it.
        int big = 0;
        for (int k = 1; k < 3; ++k)
            if (std::abs(out.r[k]) > std::abs(out.r[big])) big = k;
        double r1 = polish(a2, a1, a0, out.r[big]);
        if (r1 != 0.0) {
            double c = -a0 / r1;
            double b = (c - a1) / r1;
            double rest[2];
            if (quadratic_roots(b, c, rest) == 2) {
                out.r = {r1, rest[0], rest[1]};
            }
        }
    }
    for (int k = 0; k < out.count; ++k) out.r[k] = polish(a2, a1, a0, out.r[k]);
    std::sort(out.r.begin(), out.r.begin() + out.count);
    return out;
}

double cubic_scaled_residual(double a2, double a1, double a0, double x) {
    double ax = std::abs(x);
    double scale = std::max({ax * ax * ax, std::abs(a2) * ax * ax, std::abs(a1) * ax, std::abs(a0)});
    if (scale == 0.0) return 0.0;
    return std::abs(poly(a2, a1, a0, x)) / scale;
}

double svfmm_quadratic_root(double B, double C, double g) {
    // Stable form of (C + sqrt(C^2 + 2 B g)) / (2 B).
    double s = std::sqrt(C * C + 2.0 * B * g);
    if (C >= 0.0) return (C + s) / (2.0 * B);
    return s - C > 0.0 ? g / (s - C) : 0.0;
}

std::array<double, 3> dcm_cubic(double g, double A, double B, double C) {
    return {A - C / B, (1.0 - g) / (2.0 * B) - A * C / B, -g * A / (2.0 * B)};
}

double dcm_local_objective(double alpha, double g, double A, double B, double C) {
    double v = -B * alpha * alpha + 2.0 * C * alpha - std::log(alpha + A);
    if (g > 0.0) v += g * std::log(alpha);
    return v;
}

AlphaUpdate dcm_alpha_update(double g, double A, double B, double C, double current, double floor) {
    AlphaUpdate out;
    if (!(B > 0.0)) {
        // No neighbours: f = g log a - log(a + A) peaks at gA/(1-g).
        if (g < 1.0 && A > 0.0 && g > 0.0) {
            out.value = std::max(floor, g * A / (1.0 - g));
            out.from_root = true;
        } else {
            out.value = current;
        }
        return out;
    }
    auto c = dcm_cubic(g, A, B, C);
    auto roots = cubic_roots(c[0], c[1], c[2]);
    double best = current;
    double best_f = dcm_local_objective(current, g, A, B, C);
    bool from_root = false;
    double residual = 0.0;
    for (int k = 0; k < roots.count; ++k) {
        double x = roots.r[k];
        if (!(x > 0.0)) continue;
        double f = dcm_local_objective(x, g, A, B, C);
        if (f > best_f || (from_root && f == best_f && x < best)) {
            best_f = f;
            best = x;
            from_root = true;
            residual = cubic_scaled_residual(c[0], c[1], c[2], x);
        }
    }
    double ff = dcm_local_objective(floor, g, A, B, C);
    if (ff > best_f) {
        best = floor;
        from_root = false;
        residual = 0.0;
    }
    out.value = best;
    out.from_root = from_root;
    out.residual = residual;
    return out;
}

}  // namespace hablab
