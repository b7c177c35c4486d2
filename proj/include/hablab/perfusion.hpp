#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hablab/descriptive.hpp"
#include "hablab/volume.hpp"

namespace hablab {

struct ConcentrationCurve {
    std::vector<double> t;
    std::vector<double> c;
    int baseline_count = 5;
};

// Voxel-major concentration curves for a whole series.
struct ConcentrationSet {
    Geometry geo;
    std::vector<double> t;
    int frames = 0;
    int baseline_count = 5;
    std::vector<double> c;             // c[v * frames + k]
    std::vector<std::uint8_t> valid;   // S0 > 0

    std::vector<double> curve(std::size_t v) const {
        return {c.begin() + std::ptrdiff_t(v * frames), c.begin() + std::ptrdiff_t((v + 1) * frames)};
    }
};

std::vector<double> time_axis(int frames, double dt);
double trapezoid(const std::vector<double>& t, const std::vector<double>& y);
std::vector<double> cumulative_trapezoid(const std::vector<double>& t, const std::vector<double>& y);

// dR2*(t) = -log(S(t)/S0)/TE with S0 the mean of the first baseline frames; S <= 0 clamped to S0*1e-6.
std::vector<double> signal_to_concentration(const std::vector<double>& s, double te, int baseline_count,
                                            bool* valid = nullptr);
ConcentrationSet signal_to_concentration(const VolumeSeries& series, double te, int baseline_count = 5);

// K (t-t0)^alpha exp(-(t-t0)/beta) for t > t0, 0 otherwise.
double gamma_variate(double t, double K, double t0, double alpha, double beta);

struct GammaFitOptions {
    double tail_fraction = 0.3;  // window ends at the first post-peak sample below this fraction of the peak; 0 = whole curve
    int max_iter = 200;
};

struct GammaVariateFit {
    double K = 0.0, t0 = 0.0, alpha = 0.0, beta = 0.0;
    double r2 = 0.0;
    double sse = 0.0, sse_init = 0.0;
    int iterations = 0;
    std::size_t window = 0;  // number of samples used
    bool converged = false;

    double operator()(double t) const { return gamma_variate(t, K, t0, alpha, beta); }
    std::vector<double> evaluate(const std::vector<double>& t) const;
};

GammaVariateFit fit_gamma_variate(const ConcentrationCurve& curve, const GammaFitOptions& opt = {});

struct CurveShape {
    double peak = 0.0, ttp = 0.0, fwhm = 0.0;
};
CurveShape curve_shape(const std::vector<double>& t, const std::vector<double>& c);

struct Aif {
    ConcentrationCurve curve;
    std::vector<std::size_t> provenance;
    int passes = 0;
    bool flagged = false;
};

// Recursive median split on (peak high, TTP early, FWHM narrow) until at most max_kept curves remain.
Aif select_aif(const std::vector<std::vector<double>>& curves, const std::vector<std::size_t>& ids,
               const std::vector<double>& t, int max_kept = 10);

struct LeakageFit {
    double K1 = 0.0, K2 = 0.0;
    std::vector<double> reference;
};

// Least squares on {ref, -int ref}; corrected = c + K2 * int ref.
std::vector<double> boxerman_correct(const std::vector<double>& c, const std::vector<double>& reference,
                                     const std::vector<double>& t, LeakageFit* fit = nullptr);

struct DeconvOptions {
    double threshold = 0.10;          // relative to the largest singular value
    bool oscillation_index = false;   // adaptive threshold selection
    double oi_limit = 0.095;
};

struct DeconvResult {
    double cbf = 0.0;
    std::vector<double> residue;  // full padded length, max = 1
    double mtt = 0.0;             // dt * sum R
    double threshold = 0.0;
    double oscillation = 0.0;
    bool residue_flag = false;    // |R| > 1.5 somewhere
};

// Block-circulant truncated-SVD deconvolution with the AIF fixed at construction.
class Deconvolver {
public:
    Deconvolver(const std::vector<double>& aif, double dt, const DeconvOptions& opt = {});
    DeconvResult run(const std::vector<double>& tissue) const;
    int padded_length() const { return L_; }

private:
    DeconvResult solve(const Eigen::VectorXd& c, double thr) const;
    int N_ = 0, L_ = 0;
    double dt_ = 1.0;
    DeconvOptions opt_;
    Eigen::MatrixXd U_, V_;
    Eigen::VectorXd S_;
};

DeconvResult osvd_deconvolve(const std::vector<double>& tissue, const std::vector<double>& aif, double dt,
                             const DeconvOptions& opt = {});

struct PerfusionMasks {
    Mask brain;
    Mask enhancing;
    Mask reference;
};

struct PerfusionParams {
    double te = 0.03;
    int baseline_count = 5;
    DeconvOptions deconv;
    GammaFitOptions gamma;
    bool leakage_correction = true;
    bool raw_area_cbv = false;  // integrate the measured curves instead of the gamma fits
    int aif_max_kept = 10;
    double min_r2 = 0.95;
};

struct PerfusionMaps {
    Volume cbv, cbf, mtt, k2, r2, rcbv, rcbf;
    Mask valid;
    Aif aif;
    GammaVariateFit aif_fit;
    LeakageFit leakage_reference;
    double norm_cbv = 0.0, norm_cbf = 0.0;
    std::size_t low_r2 = 0;
    std::size_t residue_flags = 0;
    std::vector<std::string> flags;
};

PerfusionMaps compute_maps(const VolumeSeries& series, const PerfusionMasks& masks, const PerfusionParams& params);

}  // namespace hablab
