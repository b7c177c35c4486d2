#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hablab/clustering.hpp"
#include "hablab/neighborhood.hpp"
#include "hablab/volume.hpp"

namespace hablab {

enum class FieldMode { simplex, dirichlet };
enum class PriorKind { gauss, student, nonlocal };
enum class NlmMode { voxel, patch };
// kkt: exact per-voxel maximizer on the simplex; projection: quadratic roots followed by Euclidean projection.
enum class SimplexSolver { kkt, projection };

struct NlmWeightField {
    Eigen::MatrixXd D;       // edges x K patch distance
    Eigen::MatrixXd u;       // edges x K weight
    Eigen::VectorXd gamma;   // per edge
    Eigen::VectorXd eta;     // per edge
    Eigen::VectorXi patch;   // per edge, number of valid voxel pairs |P|
    Eigen::VectorXi overlap; // per edge, shared voxels |O|
};

struct SvfmmOptions {
    int max_iter = 100;
    double tol = 1e-6;            // relative change of the objective
    int warm_start_iter = 5;      // GMM iterations used to initialise the field
    double beta2_floor = 1e-8;
    double alpha_floor = 1e-12;
    double weight_floor = 1e-10;
    double chi2_cap = 1e-6;       // chi-square argument floor
    SimplexSolver simplex = SimplexSolver::kkt;
    NlmMode nlm_mode = NlmMode::patch;
    double nu_init = 10.0;
    double nu_min = 1e-3;
    double nu_max = 1e6;
    bool update_nu = true;
    bool unit_weights = false;    // force u = 1 (nonlocal) or g = 1 (student)
    bool skip_warm_start = false; // use `init` responsibilities directly
    double monotone_tol = 1e-8;
};

struct SvfmmResult {
    FieldMode mode = FieldMode::dirichlet;
    PriorKind prior = PriorKind::gauss;
    std::vector<GaussianComponent> components;
    Eigen::MatrixXd field;   // N x K: pi (simplex) or alpha (dirichlet)
    Eigen::MatrixXd pi;      // N x K contextual mixing coefficients
    Eigen::MatrixXd resp;    // N x K posteriors at the returned parameters
    Eigen::MatrixXd beta2;   // K x D
    Eigen::MatrixXd nu;      // K x D (student only)
    Eigen::MatrixXd weights; // edges x K (nonlocal u or student E[g])
    std::vector<double> trace;
    int iterations = 0;
    bool converged = false;
    double max_root_residual = 0.0;
    std::vector<std::string> flags;

    bool has_flag(const std::string& f) const;
};

SvfmmResult svfmm_fit(const FeatureStack& fs, const NeighborhoodSystem& ns,
                      const std::vector<GaussianComponent>& init, const SvfmmOptions& opt = {});
SvfmmResult dcm_svfmm_fit(const FeatureStack& fs, const NeighborhoodSystem& ns,
                          const std::vector<GaussianComponent>& init, const SvfmmOptions& opt = {});
SvfmmResult nlsvfmm_fit(const FeatureStack& fs, const NeighborhoodSystem& ns,
                        const std::vector<GaussianComponent>& init, NlmMode mode, const SvfmmOptions& opt = {});
SvfmmResult st_svfmm_fit(const FeatureStack& fs, const NeighborhoodSystem& ns,
                         const std::vector<GaussianComponent>& init, const SvfmmOptions& opt = {});

// Probabilistic non-local weights for a field (N x K) and variances (K x D).
NlmWeightField nlm_weights(const Eigen::MatrixXd& field, const Eigen::MatrixXd& beta2, const Lattice& lat,
                           const NeighborhoodSystem& ns, NlmMode mode, double chi2_cap = 1e-6,
                           double weight_floor = 1e-10);

double chi2_pdf(double x, double dof);

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v);

// Maximizer of sum_j g_j log p_j - B_j p_j^2 + 2 C_j p_j on the simplex.
Eigen::VectorXd simplex_kkt_solve(const Eigen::VectorXd& g, const Eigen::VectorXd& B, const Eigen::VectorXd& C);

std::vector<int> posterior_segment(const SvfmmResult& r);
std::vector<int> prior_segment(const SvfmmResult& r);
Eigen::MatrixXd field_to_pi(const Eigen::MatrixXd& field, FieldMode mode);

}  // namespace hablab
