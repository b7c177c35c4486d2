#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "hablab/neighborhood.hpp"
#include "hablab/volume.hpp"

namespace hablab {

struct SeedSet {
    Eigen::MatrixXd centroids;  // K x d
    double score = 0.0;         // sum of squared point-to-nearest-centroid distances
};

struct KMeansResult {
    std::vector<int> labels;
    Eigen::MatrixXd centroids;
    std::vector<double> objective;
    int iterations = 0;
    int reseeded = 0;
};

KMeansResult kmeans(const Eigen::MatrixXd& X, const Eigen::MatrixXd& seeds, int max_iter = 300);

struct FuzzyResult {
    Eigen::MatrixXd memberships;  // N x K
    Eigen::MatrixXd centroids;
    int iterations = 0;
    std::vector<int> labels() const;
};

FuzzyResult fuzzy_kmeans(const Eigen::MatrixXd& X, const Eigen::MatrixXd& seeds, double m = 2.0, double tol = 1e-6,
                         int max_iter = 300);

double seed_score(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centroids);
std::vector<SeedSet> kmeanspp_protocol(const Eigen::MatrixXd& X, int K, int n_candidates = 100, int n_kept = 10,
                                       std::uint64_t rng_seed = 0);

struct GaussianComponent {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double weight = 1.0;
};

// Cached Cholesky factor for repeated density evaluation.
class GaussianDensity {
public:
    explicit GaussianDensity(const GaussianComponent& c);
    double log_pdf(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    // N x 1 column of log densities for all rows of X.
    Eigen::VectorXd log_pdf_rows(const Eigen::MatrixXd& X) const;

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd L_;
    double log_norm_ = 0.0;
};

// 1e-6 times the mean channel variance.
double covariance_floor(const Eigen::MatrixXd& X);

// Weighted ML update of mean/covariance. Returns true if the floor had to be applied.
// Components whose total weight is ~0 keep their previous parameters.
bool update_gaussians(const Eigen::MatrixXd& X, const Eigen::MatrixXd& resp, std::vector<GaussianComponent>& comps,
                      double floor);

std::vector<GaussianComponent> components_from_labels(const Eigen::MatrixXd& X, const std::vector<int>& labels, int K);

Eigen::MatrixXd log_densities(const Eigen::MatrixXd& X, const std::vector<GaussianComponent>& comps);

struct GmmResult {
    std::vector<GaussianComponent> components;
    Eigen::MatrixXd resp;
    std::vector<double> trace;
    int iterations = 0;
    bool regularized = false;
    bool converged = false;
    double loglik() const { return trace.empty() ? 0.0 : trace.back(); }
};

GmmResult gmm_em(const Eigen::MatrixXd& X, const std::vector<GaussianComponent>& init, int max_iter = 200,
                 double tol = 1e-8);

// Per-row argmax with ties to the lowest index.
std::vector<int> argmax_rows(const Eigen::MatrixXd& M);
// Hard labels maximizing log N(x; mu_j, Sigma_j).
std::vector<int> ml_labels(const Eigen::MatrixXd& X, const std::vector<GaussianComponent>& comps);

struct HmrfResult {
    std::vector<int> labels;
    std::vector<GaussianComponent> components;
    double energy = 0.0;
    std::vector<double> energy_trace;
    int iterations = 0;
};

double hmrf_energy(const Eigen::MatrixXd& X, const Lattice& lat, const std::vector<GaussianComponent>& comps,
                   const std::vector<int>& labels, double beta);

// Hard-EM with ICM label updates (raster order) and Ising potentials beta * [y_n != y_m].
HmrfResult gauss_hmrf(const FeatureStack& fs, const NeighborhoodSystem& ns,
                      const std::vector<GaussianComponent>& init, double beta, int max_iter = 30,
                      int icm_sweeps = 10);

// Multi-start selection.
KMeansResult best_kmeans(const Eigen::MatrixXd& X, const std::vector<SeedSet>& seeds, int max_iter = 300);
FuzzyResult best_fuzzy(const Eigen::MatrixXd& X, const std::vector<SeedSet>& seeds, double m = 2.0);
GmmResult best_gmm(const Eigen::MatrixXd& X, const std::vector<SeedSet>& seeds, int max_iter = 200,
                   double tol = 1e-8);

}  // namespace hablab
