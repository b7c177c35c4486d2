#include "doctest.h"

#include <cmath>

#include "hablab/rng.hpp"
#include "hablab/roots.hpp"

using namespace hablab;

TEST_CASE("cubic with known roots") {
    // (x-1)(x-2)(x-3) = x^3 - 6x^2 + 11x - 6
    RealRoots r = cubic_roots(-6.0, 11.0, -6.0);
    REQUIRE(r.count == 3);
    CHECK(r.r[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.r[1] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(r.r[2] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("cubic with one real root and with a zero root") {
    RealRoots r = cubic_roots(0.0, 1.0, -2.0);  // x^3 + x - 2 = (x-1)(x^2+x+2)
    REQUIRE(r.count == 1);
    CHECK(r.r[0] == doctest::Approx(1.0));
    RealRoots z = cubic_roots(-3.0, 2.0, 0.0);  // x(x-1)(x-2)
    REQUIRE(z.count == 3);
    CHECK(z.r[0] == 0.0);
}

TEST_CASE("random cubics have small scaled residuals") {
    Rng rng(5);
    for (int i = 0; i < 2000; ++i) {
        double a2 = rng.uniform(-1e3, 1e3), a1 = rng.uniform(-1e3, 1e3), a0 = rng.uniform(-1e3, 1e3);
        RealRoots r = cubic_roots(a2, a1, a0);
        REQUIRE(r.count >= 1);
        for (int k = 0; k < r.count; ++k) CHECK(cubic_scaled_residual(a2, a1, a0, r.r[k]) <= 1e-9);
    }
}

TEST_CASE("quadratic root is non-negative and solves the equation") {
    Rng rng(6);
    for (int i = 0; i < 1000; ++i) {
        double B = rng.uniform(1e-3, 1e3), C = rng.uniform(-1e3, 1e3), g = rng.uniform(0.0, 1e3);
        double p = svfmm_quadratic_root(B, C, g);
        CHECK(p >= 0.0);
        double scale = std::max({B * p * p, std::abs(C * p), g / 2.0, 1e-300});
        CHECK(std::abs(B * p * p - C * p - g / 2.0) / scale <= 1e-9);
    }
}

TEST_CASE("dcm alpha update never lowers the local objective") {
    Rng rng(7);
    for (int i = 0; i < 500; ++i) {
        double g = rng.uniform(0.0, 1.0), A = rng.uniform(0.01, 10.0), B = rng.uniform(1e-3, 10.0),
               C = rng.uniform(-5.0, 5.0), cur = rng.uniform(0.01, 5.0);
        AlphaUpdate u = dcm_alpha_update(g, A, B, C, cur);
        CHECK(u.value >= 0.0);
        CHECK(dcm_local_objective(u.value, g, A, B, C) >= dcm_local_objective(cur, g, A, B, C) - 1e-12);
    }
}
