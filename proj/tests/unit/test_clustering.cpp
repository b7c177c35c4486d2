#include "doctest.h"

#include <cmath>

#include "hablab/clustering.hpp"
#include "hablab/rng.hpp"

using namespace hablab;

namespace {
Eigen::MatrixXd two_blobs(int n, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd X(2 * n, 2);
    for (int i = 0; i < 2 * n; ++i) {
        double c = i < n ? 0.0 : 10.0;
        X(i, 0) = rng.normal(c, 1.0);
        X(i, 1) = rng.normal(c, 1.0);
    }
    return X;
}
}  // namespace

TEST_CASE("kmeans separates two blobs and its objective does not increase") {
    Eigen::MatrixXd X = two_blobs(100, 1);
    auto seeds = kmeanspp_protocol(X, 2, 20, 3, 11);
    REQUIRE(seeds.size() == 3);
    for (std::size_t s = 1; s < seeds.size(); ++s) CHECK(seeds[s - 1].score <= seeds[s].score);
    KMeansResult km = best_kmeans(X, seeds);
    for (int i = 1; i < 100; ++i) CHECK(km.labels[i] == km.labels[0]);
    CHECK(km.labels[0] != km.labels[150]);
    for (std::size_t t = 1; t < km.objective.size(); ++t) CHECK(km.objective[t] <= km.objective[t - 1] + 1e-9);
}

TEST_CASE("kmeanspp protocol is deterministic for a seed") {
    Eigen::MatrixXd X = two_blobs(50, 2);
    auto a = kmeanspp_protocol(X, 3, 10, 2, 99);
    auto b = kmeanspp_protocol(X, 3, 10, 2, 99);
    CHECK(a[0].centroids.isApprox(b[0].centroids));
}

TEST_CASE("fuzzy memberships sum to one") {
    Eigen::MatrixXd X = two_blobs(40, 3);
    FuzzyResult f = best_fuzzy(X, kmeanspp_protocol(X, 2, 5, 1, 1));
    for (int i = 0; i < X.rows(); ++i) CHECK(f.memberships.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("gmm log-likelihood is monotone and responsibilities normalized") {
    Eigen::MatrixXd X = two_blobs(150, 4);
    auto km = best_kmeans(X, kmeanspp_protocol(X, 2, 10, 2, 4));
    GmmResult g = gmm_em(X, components_from_labels(X, km.labels, 2), 200, 1e-10);
    for (std::size_t t = 1; t < g.trace.size(); ++t)
        CHECK(g.trace[t] - g.trace[t - 1] >= -1e-8 * std::abs(g.trace[t - 1]));
    for (int i = 0; i < X.rows(); ++i) CHECK(g.resp.row(i).sum() == doctest::Approx(1.0));
    double w = g.components[0].weight + g.components[1].weight;
    CHECK(w == doctest::Approx(1.0));
}

TEST_CASE("gaussian density matches closed form") {
    GaussianComponent c;
    c.mean = Eigen::Vector2d(1.0, -1.0);
    c.cov = Eigen::Matrix2d::Identity() * 4.0;
    GaussianDensity d(c);
    Eigen::RowVector2d x(1.0, -1.0);
    CHECK(d.log_pdf(x) == doctest::Approx(-std::log(2.0 * M_PI * 4.0)));
}

TEST_CASE("argmax ties go to the lowest index") {
    Eigen::MatrixXd M(2, 3);
    M << 0.2, 0.4, 0.4, 0.5, 0.5, 0.0;
    auto l = argmax_rows(M);
    CHECK(l[0] == 1);
    CHECK(l[1] == 0);
}

TEST_CASE("hmrf with beta zero equals hard maximum-likelihood labels") {
    Geometry g;
    g.dims = {12, 12, 1};
    Volume v(g);
    Rng rng(8);
    for (std::size_t i = 0; i < g.size(); ++i) v.data[i] = rng.normal(i % 12 < 6 ? 0.0 : 3.0, 1.0);
    Mask m(g, true);
    FeatureStack fs = stack_volumes({&v}, {"v"}, m);
    auto km = best_kmeans(fs.values, kmeanspp_protocol(fs.values, 2, 5, 1, 1));
    auto init = components_from_labels(fs.values, km.labels, 2);
    auto ns = NeighborhoodSystem::make(NeighborhoodMode::full_grouped, true);
    HmrfResult h = gauss_hmrf(fs, ns, init, 0.0, 30);
    CHECK(h.labels == ml_labels(fs.values, h.components));
}
