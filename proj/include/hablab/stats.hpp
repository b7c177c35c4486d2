#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hablab/volume.hpp"

namespace hablab {

struct ConfusionCounts {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::size_t p() const { return tp + fn; }       // truth positives
    std::size_t n() const { return tn + fp; }       // truth negatives
    std::size_t p_hat() const { return tp + fp; }   // predicted positives
    std::size_t n_hat() const { return tn + fn; }   // predicted negatives
    std::size_t total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion(const Mask& pred, const Mask& truth);
ConfusionCounts confusion(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth);

struct SegMetrics {
    double dice = 0.0, ppv = 0.0, sensitivity = 0.0, kappa = 0.0;
    std::vector<std::string> flags;
};

// Empty denominators follow the convention value = 1 when both masks agree on emptiness, else 0, and are flagged.
SegMetrics seg_metrics(const ConfusionCounts& c);
SegMetrics seg_metrics(const Mask& pred, const Mask& truth);

double rand_index(const std::vector<int>& a, const std::vector<int>& b);

// Mean pairwise sqrt(JS) of KDE densities on a pooled grid.
double separability(const std::vector<std::vector<double>>& sets);

struct SurvivalRecord {
    double time = 0.0;
    bool event = false;
    std::vector<double> covariates;
};

struct KmStep {
    double time = 0.0;
    int at_risk = 0, events = 0, censored = 0;
    double survival = 1.0;
};

struct KaplanMeier {
    std::vector<KmStep> steps;  // one row per distinct event time
    double at(double t) const;  // right-continuous step function
};

KaplanMeier kaplan_meier(const std::vector<SurvivalRecord>& records);

struct LogRankResult {
    double chi2 = 0.0, p = 1.0;
    double observed_a = 0.0, expected_a = 0.0, variance = 0.0;
    std::vector<std::string> flags;
};

LogRankResult logrank(const std::vector<SurvivalRecord>& a, const std::vector<SurvivalRecord>& b);

struct CoxResult {
    Eigen::VectorXd beta, se, hr, ci_low, ci_high, wald_p;
    double loglik = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    std::vector<double> trace;
    std::vector<std::string> flags;
};

// Newton-Raphson on the Breslow partial likelihood.
CoxResult cox_fit(const std::vector<SurvivalRecord>& records, int max_iter = 100, double grad_tol = 1e-8);

struct FdrResult {
    std::vector<double> adjusted;
    std::vector<bool> reject;
};

FdrResult fdr_correct(const std::vector<double>& pvals, double alpha = 0.05);

// Harrell's C: higher marker means higher risk; marker ties count one half.
double harrell_cindex(const std::vector<double>& marker, const std::vector<SurvivalRecord>& records);

struct CutoffResult {
    double threshold = 0.0;
    double cindex = 0.0;
};

CutoffResult cindex_cutoff(const std::vector<double>& marker, const std::vector<SurvivalRecord>& records);

double chi2_sf_1dof(double x);
double normal_sf(double z);

}  // namespace hablab
