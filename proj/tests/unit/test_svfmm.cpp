#include "doctest.h"

#include <cmath>
#include <map>

#include "hablab/phantom.hpp"
#include "hablab/rng.hpp"
#include "hablab/svfmm.hpp"

using namespace hablab;

namespace {
struct Problem {
    FeatureStack fs;
    NeighborhoodSystem ns;
    std::vector<GaussianComponent> init;
};

Problem small_problem(std::uint64_t seed, int K = 3) {
    ClusterPhantomSpec spec;
    spec.dims = {20, 20, 1};
    spec.classes = K;
    spec.snr = 3.0;
    ClusterPhantom ph = make_cluster_phantom(spec, seed);
    Problem p;
    Mask m(ph.image.geo, true);
    p.fs = stack_volumes({&ph.image}, {"i"}, m);
    p.ns = NeighborhoodSystem::make(NeighborhoodMode::full_grouped, true);
    auto km = best_kmeans(p.fs.values, kmeanspp_protocol(p.fs.values, K, 10, 2, seed));
    p.init = components_from_labels(p.fs.values, km.labels, K);
    return p;
}

void check_monotone(const SvfmmResult& r) {
    REQUIRE(r.trace.size() >= 2);
    for (std::size_t t = 1; t < r.trace.size(); ++t)
        CHECK(r.trace[t] - r.trace[t - 1] >= -1e-8 * std::abs(r.trace[t - 1]));
}

void check_pi(const SvfmmResult& r) {
    for (Eigen::Index i = 0; i < r.pi.rows(); ++i) {
        CHECK(std::abs(r.pi.row(i).sum() - 1.0) <= 1e-12);
        CHECK(r.pi.row(i).minCoeff() >= 0.0);
    }
}
}  // namespace

TEST_CASE("every variant increases its objective monotonically") {
    Problem p = small_problem(21);
    SvfmmOptions o;
    o.max_iter = 15;
    auto a = svfmm_fit(p.fs, p.ns, p.init, o);
    auto b = dcm_svfmm_fit(p.fs, p.ns, p.init, o);
    auto c = st_svfmm_fit(p.fs, p.ns, p.init, o);
    auto d = nlsvfmm_fit(p.fs, p.ns, p.init, NlmMode::voxel, o);
    auto e = nlsvfmm_fit(p.fs, p.ns, p.init, NlmMode::patch, o);
    for (const auto* r : {&a, &b, &c, &d, &e}) {
        check_monotone(*r);
        check_pi(*r);
        CHECK(r->max_root_residual <= 1e-9);
    }
}

TEST_CASE("nlm weight identities") {
    Problem p = small_problem(22);
    Lattice lat(p.fs, p.ns);
    Eigen::MatrixXd field = Eigen::MatrixXd::Constant(p.fs.samples(), 3, 1.0);
    Eigen::MatrixXd beta2 = Eigen::MatrixXd::Constant(3, p.ns.num_directions(), 1.0);
    NlmWeightField W = nlm_weights(field, beta2, lat, p.ns, NlmMode::patch);
    for (int e = 0; e < lat.edges(); ++e) CHECK(W.gamma(e) * W.eta(e) == doctest::Approx(double(W.patch(e))).epsilon(1e-15));

    auto ns3 = NeighborhoodSystem::make(NeighborhoodMode::orthogonal, false);
    Geometry g;
    g.dims = {5, 5, 5};
    Volume v(g, 1.0);
    Mask m(g, true);
    FeatureStack fs = stack_volumes({&v}, {"v"}, m);
    Lattice lat3(fs, ns3);
    NlmWeightField W3 = nlm_weights(Eigen::MatrixXd::Constant(fs.samples(), 2, 1.0),
                                    Eigen::MatrixXd::Constant(2, 3, 1.0), lat3, ns3, NlmMode::patch);
    int centre = lat3.row_at(2, 2, 2);
    for (int e = lat3.begin(centre); e < lat3.end(centre); ++e) {
        CHECK(W3.patch(e) == 27);
        CHECK(W3.gamma(e) == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
        CHECK(W3.eta(e) == doctest::Approx(20.25).epsilon(1e-15));
    }
    NlmWeightField Wv = nlm_weights(Eigen::MatrixXd::Constant(fs.samples(), 2, 1.0),
                                    Eigen::MatrixXd::Constant(2, 3, 1.0), lat3, ns3, NlmMode::voxel);
    for (int e = lat3.begin(centre); e < lat3.end(centre); ++e) {
        CHECK(Wv.gamma(e) == 1.0);
        CHECK(Wv.eta(e) == double(Wv.patch(e)));
    }
}

TEST_CASE("unit weights reduce nlsvfmm to dcm-svfmm") {
    Problem p = small_problem(23);
    SvfmmOptions o;
    o.max_iter = 8;
    o.unit_weights = true;
    auto nl = nlsvfmm_fit(p.fs, p.ns, p.init, NlmMode::patch, o);
    SvfmmOptions od = o;
    od.unit_weights = false;
    auto dcm = dcm_svfmm_fit(p.fs, p.ns, p.init, od);
    CHECK((nl.field - dcm.field).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("simplex solvers") {
    Eigen::VectorXd v(3);
    v << 0.5, 0.8, -0.2;
    Eigen::VectorXd p = project_to_simplex(v);
    CHECK(p.sum() == doctest::Approx(1.0));
    CHECK(p(2) == 0.0);
    CHECK(p(0) == doctest::Approx(0.35));

    Eigen::VectorXd g(3), B(3), C(3);
    g << 0.2, 0.5, 0.3;
    B << 1.0, 2.0, 0.5;
    C << 0.1, -0.3, 0.2;
    Eigen::VectorXd s = simplex_kkt_solve(g, B, C);
    CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-12));
    auto f = [&](const Eigen::VectorXd& q) {
        double r = 0.0;
        for (int j = 0; j < 3; ++j) r += g(j) * std::log(q(j)) - B(j) * q(j) * q(j) + 2.0 * C(j) * q(j);
        return r;
    };
    Rng rng(3);
    for (int t = 0; t < 200; ++t) {
        Eigen::VectorXd q(3);
        for (int j = 0; j < 3; ++j) q(j) = rng.uniform(0.01, 1.0);
        q /= q.sum();
        CHECK(f(s) >= f(q) - 1e-12);
    }
}

TEST_CASE("chi-square density") {
    CHECK(chi2_pdf(2.0, 2.0) == doctest::Approx(0.5 * std::exp(-1.0)));
    CHECK(chi2_pdf(1.0, 4.0) == doctest::Approx(0.25 * std::exp(-0.5)));
}

TEST_CASE("separable phantom is segmented perfectly") {
    ClusterPhantomSpec spec;
    spec.dims = {24, 24, 1};
    spec.classes = 3;
    spec.snr = 0.0;
    ClusterPhantom ph = make_cluster_phantom(spec, 4);
    Mask m(ph.image.geo, true);
    FeatureStack fs = stack_volumes({&ph.image}, {"i"}, m);
    auto km = best_kmeans(fs.values, kmeanspp_protocol(fs.values, 3, 10, 3, 4));
    auto init = components_from_labels(fs.values, km.labels, 3);
    SvfmmOptions o;
    o.max_iter = 10;
    auto r = nlsvfmm_fit(fs, NeighborhoodSystem::make(NeighborhoodMode::full_grouped, true), init, NlmMode::patch, o);
    auto lab = posterior_segment(r);
    // One-to-one correspondence between fitted and true classes.
    std::map<int, int> map;
    bool consistent = true;
    for (std::size_t i = 0; i < lab.size(); ++i) {
        auto it = map.emplace(lab[i], ph.truth.data[i]).first;
        consistent = consistent && it->second == ph.truth.data[i];
    }
    CHECK(consistent);
    CHECK(map.size() == 3);
}
