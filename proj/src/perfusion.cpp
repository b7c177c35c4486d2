#include "hablab/perfusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hablab/error.hpp"

namespace hablab {

std::vector<double> time_axis(int frames, double dt) {
    std::vector<double> t(frames);
    for (int k = 0; k < frames; ++k) t[k] = k * dt;
    return t;
}

double trapezoid(const std::vector<double>& t, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t k = 1; k < t.size(); ++k) s += 0.5 * (t[k] - t[k - 1]) * (y[k] + y[k - 1]);
    return s;
}

std::vector<double> cumulative_trapezoid(const std::vector<double>& t, const std::vector<double>& y) {
    std::vector<double> out(t.size(), 0.0);
    for (std::size_t k = 1; k < t.size(); ++k) out[k] = out[k - 1] + 0.5 * (t[k] - t[k - 1]) * (y[k] + y[k - 1]);
    return out;
}

std::vector<double> signal_to_concentration(const std::vector<double>& s, double te, int baseline_count,
                                            bool* valid) {
    if (!(te > 0.0)) fail(ErrorKind::usage, "perfusion", "bad-te");
    if (baseline_count < 1 || baseline_count > int(s.size())) fail(ErrorKind::usage, "perfusion", "bad-baseline");
    double s0 = 0.0;
    for (int k = 0; k < baseline_count; ++k) s0 += s[k];
    s0 /= baseline_count;
    std::vector<double> c(s.size(), 0.0);
    bool ok = s0 > 0.0 && std::isfinite(s0);
    if (valid) *valid = ok;
    if (!ok) return c;
    for (std::size_t k = 0; k < s.size(); ++k) {
        double v = s[k] > 0.0 ? s[k] : s0 * 1e-6;
        c[k] = -std::log(v / s0) / te;
    }
    return c;
}

ConcentrationSet signal_to_concentration(const VolumeSeries& series, double te, int baseline_count) {
    series.validate();
    ConcentrationSet out;
    out.geo = series.geo;
    out.frames = series.frames;
    out.baseline_count = baseline_count;
    out.t = time_axis(series.frames, series.dt);
    const std::size_t N = series.geo.size();
    out.c.assign(N * series.frames, 0.0);
    out.valid.assign(N, 0);
    std::vector<double> s(series.frames);
    for (std::size_t v = 0; v < N; ++v) {
        for (int k = 0; k < series.frames; ++k) s[k] = series.at(k, v);
        bool ok = false;
        auto c = signal_to_concentration(s, te, baseline_count, &ok);
        out.valid[v] = ok;
        std::copy(c.begin(), c.end(), out.c.begin() + std::ptrdiff_t(v * series.frames));
    }
    return out;
}

double gamma_variate(double t, double K, double t0, double alpha, double beta) {
    double tau = t - t0;
    if (tau <= 0.0) return 0.0;
    return K * std::exp(alpha * std::log(tau) - tau / beta);
}

std::vector<double> GammaVariateFit::evaluate(const std::vector<double>& t) const {
    std::vector<double> out(t.size());
    for (std::size_t k = 0; k < t.size(); ++k) out[k] = (*this)(t[k]);
    return out;
}

namespace {

struct GvParams {
    double logK, t0, logA, logB;
};

double gv(const GvParams& p, double t) { return gamma_variate(t, std::exp(p.logK), p.t0, std::exp(p.logA), std::exp(p.logB)); }

double sse_of(const GvParams& p, const std::vector<double>& t, const std::vector<double>& c, std::size_t n) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        double r = gv(p, t[k]) - c[k];
        s += r * r;
    }
    return s;
}

}  // namespace

GammaVariateFit fit_gamma_variate(const ConcentrationCurve& curve, const GammaFitOptions& opt) {
    const auto& t = curve.t;
    const auto& c = curve.c;
    if (t.size() != c.size() || t.size() < 4) fail(ErrorKind::data, "perfusion", "bad-curve");
    std::size_t ip = std::size_t(std::max_element(c.begin(), c.end()) - c.begin());
    double peak = c[ip];
    double lo = *std::min_element(c.begin(), c.end());
    if (!(peak > 0.0) || peak - lo <= 1e-12 * std::max(1.0, std::abs(peak)))
        fail(ErrorKind::data, "perfusion", "no-bolus");
    std::size_t n = c.size();
    if (opt.tail_fraction > 0.0) {
        for (std::size_t k = ip + 1; k < c.size(); ++k)
            if (c[k] < opt.tail_fraction * peak) {
                n = k + 1;
                break;
            }
    }
    const double dt = t[1] - t[0];
    const double tpeak = t[ip];
    int bl = std::clamp(curve.baseline_count, 1, int(ip) + 1);
    double t0 = t[std::size_t(bl - 1)];
    if (t0 >= tpeak) t0 = std::max(t[0], tpeak - 2.0 * dt);
    double alpha = 3.0;
    double beta = std::max((tpeak - t0) / alpha, 0.1 * dt);
    double K = peak / std::exp(alpha * std::log(alpha * beta) - alpha);
    GvParams p{std::log(K), t0, std::log(alpha), std::log(beta)};

    GammaVariateFit fit;
    double sse = sse_of(p, t, c, n);
    fit.sse_init = sse;
    double lambda = 1e-3;
    const double t0_max = tpeak - 1e-6 * dt;
    Eigen::MatrixXd J(n, 4);
    Eigen::VectorXd r(n);
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        double a = std::exp(p.logA), b = std::exp(p.logB);
        for (std::size_t k = 0; k < n; ++k) {
            double f = gv(p, t[k]);
            r(k) = f - c[k];
            double tau = t[k] - p.t0;
            if (tau <= 0.0 || f == 0.0) {
                J.row(k).setZero();
                continue;
            }
            J(k, 0) = f;
            J(k, 1) = f * (-a / tau + 1.0 / b);
            J(k, 2) = a * std::log(tau) * f;
            J(k, 3) = f * tau / b;
        }
        Eigen::Matrix4d A = J.transpose() * J;
        Eigen::Vector4d g = J.transpose() * r;
        bool accepted = false;
        double sse_new = sse;
        GvParams q = p;
        while (lambda < 1e16) {
            Eigen::Matrix4d M = A;
            for (int d = 0; d < 4; ++d) M(d, d) += lambda * std::max(A(d, d), 1e-12);
            Eigen::Vector4d step = M.ldlt().solve(-g);
            q = GvParams{p.logK + step(0), std::clamp(p.t0 + step(1), 0.0, t0_max),
                         std::clamp(p.logA + step(2), std::log(1e-3), std::log(100.0)),
                         std::clamp(p.logB + step(3), std::log(1e-3 * dt), std::log(1e3 * t.back() + 1.0))};
            sse_new = sse_of(q, t, c, n);
            if (std::isfinite(sse_new) && sse_new < sse) {
                accepted = true;
                lambda = std::max(lambda / 10.0, 1e-12);
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            fit.converged = true;
            break;
        }
        double gain = (sse - sse_new) / std::max(sse, 1e-300);
        p = q;
        sse = sse_new;
        if (gain < 1e-12 || sse < 1e-28 * peak * peak) {
            fit.converged = true;
            ++it;
            break;
        }
    }
    fit.iterations = it;
    fit.K = std::exp(p.logK);
    fit.t0 = p.t0;
    fit.alpha = std::exp(p.logA);
    fit.beta = std::exp(p.logB);
    fit.sse = sse;
    fit.window = n;
    double m = 0.0;
    for (std::size_t k = 0; k < n; ++k) m += c[k];
    m /= double(n);
    double sst = 0.0;
    for (std::size_t k = 0; k < n; ++k) sst += (c[k] - m) * (c[k] - m);
    fit.r2 = sst > 0.0 ? 1.0 - sse / sst : 0.0;
    return fit;
}

CurveShape curve_shape(const std::vector<double>& t, const std::vector<double>& c) {
    CurveShape s;
    std::size_t ip = std::size_t(std::max_element(c.begin(), c.end()) - c.begin());
    s.peak = c[ip];
    s.ttp = t[ip];
    double half = 0.5 * s.peak;
    double left = t.front(), right = t.back();
    for (std::size_t k = ip; k-- > 0;) {
        if (c[k] < half) {
            left = t[k] + (half - c[k]) / (c[k + 1] - c[k]) * (t[k + 1] - t[k]);
            break;
        }
    }
    for (std::size_t k = ip + 1; k < c.size(); ++k) {
        if (c[k] < half) {
            right = t[k - 1] + (c[k - 1] - half) / (c[k - 1] - c[k]) * (t[k] - t[k - 1]);
            break;
        }
    }
    s.fwhm = right - left;
    return s;
}

Aif select_aif(const std::vector<std::vector<double>>& curves, const std::vector<std::size_t>& ids,
               const std::vector<double>& t, int max_kept) {
    if (int(curves.size()) < max_kept) fail(ErrorKind::data, "perfusion", "too-few-aif-candidates");
    std::vector<CurveShape> shape(curves.size());
    for (std::size_t i = 0; i < curves.size(); ++i) shape[i] = curve_shape(t, curves[i]);
    std::vector<std::size_t> set(curves.size());
    std::iota(set.begin(), set.end(), 0);
    Aif aif;
    while (int(set.size()) > max_kept) {
        std::vector<double> pk, tp, fw;
        for (auto i : set) {
            pk.push_back(shape[i].peak);
            tp.push_back(shape[i].ttp);
            fw.push_back(shape[i].fwhm);
        }
        double mp = median(pk), mt = median(tp), mf = median(fw);
        std::vector<std::size_t> next;
        for (auto i : set)
            if (shape[i].peak >= mp && shape[i].ttp <= mt && shape[i].fwhm <= mf) next.push_back(i);
        ++aif.passes;
        if (next.empty() || next.size() == set.size()) {
            aif.flagged = true;
            break;
        }
        set = std::move(next);
    }
    aif.curve.t = t;
    aif.curve.c.assign(t.size(), 0.0);
    for (auto i : set) {
        for (std::size_t k = 0; k < t.size(); ++k) aif.curve.c[k] += curves[i][k];
        aif.provenance.push_back(ids.empty() ? i : ids[i]);
    }
    for (auto& v : aif.curve.c) v /= double(set.size());
    if (!(*std::max_element(aif.curve.c.begin(), aif.curve.c.end()) > 0.0))
        fail(ErrorKind::data, "perfusion", "aif-not-positive");
    return aif;
}

std::vector<double> boxerman_correct(const std::vector<double>& c, const std::vector<double>& reference,
                                     const std::vector<double>& t, LeakageFit* fit) {
    if (c.size() != reference.size() || c.size() != t.size()) fail(ErrorKind::data, "perfusion", "length-mismatch");
    const Eigen::Index n = Eigen::Index(c.size());
    double rmax = 0.0;
    for (double v : reference) rmax = std::max(rmax, std::abs(v));
    if (!(rmax > 1e-12)) fail(ErrorKind::data, "perfusion", "bad-reference");
    auto integ = cumulative_trapezoid(t, reference);
    Eigen::MatrixXd A(n, 2);
    Eigen::VectorXd y(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        A(k, 0) = reference[k];
        A(k, 1) = -integ[k];
        y(k) = c[k];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    if (qr.rank() < 2) fail(ErrorKind::data, "perfusion", "bad-reference", "collinear regressors");
    Eigen::Vector2d k = qr.solve(y);
    std::vector<double> out(c.size());
    for (std::size_t j = 0; j < c.size(); ++j) out[j] = c[j] + k(1) * integ[j];
    if (fit) {
        fit->K1 = k(0);
        fit->K2 = k(1);
        fit->reference = reference;
    }
    return out;
}

namespace {
const double kThresholds[] = {0.0005, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.3};
}

Deconvolver::Deconvolver(const std::vector<double>& aif, double dt, const DeconvOptions& opt)
    : N_(int(aif.size())), L_(2 * int(aif.size())), dt_(dt), opt_(opt) {
    if (!(dt > 0.0)) fail(ErrorKind::usage, "perfusion", "bad-dt");
    if (!(*std::max_element(aif.begin(), aif.end()) > 0.0)) fail(ErrorKind::data, "perfusion", "aif-degenerate");
    Eigen::MatrixXd A(L_, L_);
    for (int i = 0; i < L_; ++i)
        for (int j = 0; j < L_; ++j) {
            int k = ((i - j) % L_ + L_) % L_;
            A(i, j) = k < N_ ? dt * aif[k] : 0.0;
        }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
    U_ = svd.matrixU();
    V_ = svd.matrixV();
    S_ = svd.singularValues();
    if (!(S_(0) > 0.0)) fail(ErrorKind::data, "perfusion", "aif-degenerate");
}

DeconvResult Deconvolver::solve(const Eigen::VectorXd& y, double thr) const {
    Eigen::VectorXd w(L_);
    int kept = 0;
    for (int k = 0; k < L_; ++k) {
        bool keep = S_(k) > thr * S_(0);
        w(k) = keep ? y(k) / S_(k) : 0.0;
        kept += keep;
    }
    if (kept == 0) fail(ErrorKind::numerical, "perfusion", "aif-degenerate");
    Eigen::VectorXd b = V_ * w;
    DeconvResult r;
    r.threshold = thr;
    r.cbf = b.maxCoeff();
    r.residue.assign(L_, 0.0);
    if (r.cbf > 0.0) {
        double sum = 0.0, osc = 0.0;
        for (int k = 0; k < L_; ++k) {
            r.residue[k] = b(k) / r.cbf;
            sum += r.residue[k];
            if (std::abs(r.residue[k]) > 1.5) r.residue_flag = true;
            if (k >= 2) osc += std::abs(b(k) - 2.0 * b(k - 1) + b(k - 2));
        }
        r.mtt = dt_ * sum;
        r.oscillation = osc / (L_ * r.cbf);
    } else {
        r.cbf = 0.0;
    }
    return r;
}

DeconvResult Deconvolver::run(const std::vector<double>& tissue) const {
    if (int(tissue.size()) != N_) fail(ErrorKind::data, "perfusion", "length-mismatch");
    Eigen::VectorXd c = Eigen::VectorXd::Zero(L_);
    for (int k = 0; k < N_; ++k) c(k) = tissue[k];
    Eigen::VectorXd y = U_.transpose() * c;
    if (!opt_.oscillation_index) return solve(y, opt_.threshold);
    DeconvResult last;
    for (double thr : kThresholds) {
        last = solve(y, thr);
        if (last.cbf > 0.0 && last.oscillation <= opt_.oi_limit) return last;
    }
    return last;
}

DeconvResult osvd_deconvolve(const std::vector<double>& tissue, const std::vector<double>& aif, double dt,
                             const DeconvOptions& opt) {
    if (tissue.size() != aif.size()) fail(ErrorKind::data, "perfusion", "length-mismatch");
    return Deconvolver(aif, dt, opt).run(tissue);
}

PerfusionMaps compute_maps(const VolumeSeries& series, const PerfusionMasks& masks, const PerfusionParams& params) {
    require_same_grid(series.geo, masks.brain.geo, "perfusion");
    require_same_grid(series.geo, masks.enhancing.geo, "perfusion");
    require_same_grid(series.geo, masks.reference.geo, "perfusion");
    if (masks.reference.empty()) fail(ErrorKind::data, "perfusion", "empty-reference-roi");
    auto conc = signal_to_concentration(series, params.te, params.baseline_count);
    const auto& g = series.geo;
    const std::size_t N = g.size();
    const int T = conc.frames;
    const auto& t = conc.t;

    PerfusionMaps maps;
    for (Volume* v : {&maps.cbv, &maps.cbf, &maps.mtt, &maps.k2, &maps.r2, &maps.rcbv, &maps.rcbf}) *v = Volume(g);
    maps.valid = Mask(g);

    // Whole-brain non-enhancing reference and AIF candidates.
    std::vector<double> ref(T, 0.0);
    std::vector<std::vector<double>> cands;
    std::vector<std::size_t> cand_ids;
    std::size_t nref = 0;
    for (std::size_t v = 0; v < N; ++v) {
        if (!masks.brain.data[v] || masks.enhancing.data[v] || !conc.valid[v]) continue;
        auto c = conc.curve(v);
        for (int k = 0; k < T; ++k) ref[k] += c[k];
        ++nref;
        if (*std::max_element(c.begin(), c.end()) > 0.0) {
            cands.push_back(std::move(c));
            cand_ids.push_back(v);
        }
    }
    if (nref == 0) fail(ErrorKind::data, "perfusion", "empty-brain-mask");
    for (auto& x : ref) x /= double(nref);
    maps.leakage_reference.reference = ref;

    maps.aif = select_aif(cands, cand_ids, t, params.aif_max_kept);
    maps.aif.curve.baseline_count = params.baseline_count;
    if (maps.aif.flagged) maps.flags.push_back("aif-selection-stopped-early");
    maps.aif_fit = fit_gamma_variate(maps.aif.curve, params.gamma);
    double aif_area = params.raw_area_cbv ? trapezoid(t, maps.aif.curve.c) : trapezoid(t, maps.aif_fit.evaluate(t));
    if (!(aif_area > 0.0)) fail(ErrorKind::numerical, "perfusion", "aif-area-not-positive");
    Deconvolver deconv(maps.aif.curve.c, series.dt, params.deconv);

    for (std::size_t v = 0; v < N; ++v) {
        if (!masks.brain.data[v] || !conc.valid[v]) continue;
        auto c = conc.curve(v);
        if (params.leakage_correction) {
            LeakageFit lf;
            c = boxerman_correct(c, ref, t, &lf);
            maps.k2.data[v] = lf.K2;
        }
        ConcentrationCurve cc{t, c, params.baseline_count};
        GammaVariateFit gf;
        try {
            gf = fit_gamma_variate(cc, params.gamma);
        } catch (const Error&) {
            continue;
        }
        double area = params.raw_area_cbv ? trapezoid(t, c) : trapezoid(t, gf.evaluate(t));
        auto dr = deconv.run(c);
        if (dr.residue_flag) ++maps.residue_flags;
        if (gf.r2 < params.min_r2) ++maps.low_r2;
        maps.cbv.data[v] = std::max(0.0, area / aif_area);
        maps.cbf.data[v] = std::max(0.0, dr.cbf);
        maps.mtt.data[v] = dr.mtt;
        maps.r2.data[v] = gf.r2;
        maps.valid.data[v] = 1;
    }
    std::vector<double> rv, rf;
    for (std::size_t v = 0; v < N; ++v)
        if (masks.reference.data[v] && maps.valid.data[v]) {
            rv.push_back(maps.cbv.data[v]);
            rf.push_back(maps.cbf.data[v]);
        }
    if (rv.empty()) fail(ErrorKind::data, "perfusion", "empty-reference-roi", "no valid voxels");
    maps.norm_cbv = median(rv);
    maps.norm_cbf = median(rf);
    if (!(maps.norm_cbv > 0.0) || !(maps.norm_cbf > 0.0))
        fail(ErrorKind::numerical, "perfusion", "reference-statistic-not-positive");
    for (std::size_t v = 0; v < N; ++v) {
        if (!maps.valid.data[v]) continue;
        maps.rcbv.data[v] = maps.cbv.data[v] / maps.norm_cbv;
        maps.rcbf.data[v] = maps.cbf.data[v] / maps.norm_cbf;
    }
    if (maps.low_r2 > 0) maps.flags.push_back("low-r2-voxels");
    if (maps.residue_flags > 0) maps.flags.push_back("residue-above-1.5");
    return maps;
}

}  // namespace hablab
