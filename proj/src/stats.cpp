#include "hablab/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "hablab/density.hpp"
#include "hablab/error.hpp"

namespace hablab {

namespace {

void add_flag(std::vector<std::string>& flags, const std::string& f) {
    if (std::find(flags.begin(), flags.end(), f) == flags.end()) flags.push_back(f);
}

double ratio_or_convention(std::size_t num, std::size_t den, bool agree, std::vector<std::string>& flags,
                           const std::string& flag) {
    if (den == 0) {
        add_flag(flags, flag);
        return agree ? 1.0 : 0.0;
    }
    return double(num) / double(den);
}

void check_records(const std::vector<SurvivalRecord>& r) {
    for (const auto& s : r)
        if (!(s.time > 0.0) || !std::isfinite(s.time)) fail(ErrorKind::data, "stats", "bad-survival-time");
}

}  // namespace

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }
double chi2_sf_1dof(double x) { return x <= 0.0 ? 1.0 : std::erfc(std::sqrt(0.5 * x)); }

ConfusionCounts confusion(const std::vector<std::uint8_t>& pred, const std::vector<std::uint8_t>& truth) {
    if (pred.size() != truth.size()) fail(ErrorKind::usage, "stats", "size-mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        bool p = pred[i] != 0, t = truth[i] != 0;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

ConfusionCounts confusion(const Mask& pred, const Mask& truth) {
    require_same_grid(pred.geo, truth.geo, "stats");
    return confusion(pred.data, truth.data);
}

SegMetrics seg_metrics(const ConfusionCounts& c) {
    SegMetrics m;
    const bool both_empty = c.p() == 0 && c.p_hat() == 0;
    m.dice = ratio_or_convention(2 * c.tp, c.p() + c.p_hat(), both_empty, m.flags, "empty-masks");
    m.ppv = ratio_or_convention(c.tp, c.p_hat(), c.p() == 0, m.flags, "empty-prediction");
    m.sensitivity = ratio_or_convention(c.tp, c.p(), c.p_hat() == 0, m.flags, "empty-truth");
    const double n = double(c.total());
    if (n == 0.0) fail(ErrorKind::usage, "stats", "empty-input");
    const double pa = double(c.tp + c.tn) / n;
    const double pe = (double(c.p()) * double(c.p_hat()) + double(c.n()) * double(c.n_hat())) / (n * n);
    if (pe >= 1.0) {
        add_flag(m.flags, "kappa-undefined");
        m.kappa = pa >= 1.0 ? 1.0 : 0.0;
    } else {
        m.kappa = (pa - pe) / (1.0 - pe);
    }
    return m;
}

SegMetrics seg_metrics(const Mask& pred, const Mask& truth) { return seg_metrics(confusion(pred, truth)); }

double rand_index(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) fail(ErrorKind::usage, "stats", "size-mismatch");
    const double n = double(a.size());
    if (a.size() < 2) fail(ErrorKind::usage, "stats", "too-few-items");
    std::map<int, double> ca, cb;
    std::map<std::pair<int, int>, double> cab;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ca[a[i]] += 1;
        cb[b[i]] += 1;
        cab[{a[i], b[i]}] += 1;
    }
    auto pairs = [](double k) { return 0.5 * k * (k - 1.0); };
    double sa = 0, sb = 0, sab = 0;
    for (auto& [k, v] : ca) sa += pairs(v);
    for (auto& [k, v] : cb) sb += pairs(v);
    for (auto& [k, v] : cab) sab += pairs(v);
    const double total = pairs(n);
    // Agreements = pairs together in both + pairs apart in both.
    return (total + 2.0 * sab - sa - sb) / total;
}

double separability(const std::vector<std::vector<double>>& sets) {
    if (sets.size() < 2) fail(ErrorKind::usage, "stats", "too-few-sets");
    auto dens = pooled_densities(sets);
    double s = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < dens.size(); ++i)
        for (std::size_t j = i + 1; j < dens.size(); ++j) {
            s += std::sqrt(js_divergence(dens[i], dens[j]));
            ++n;
        }
    return s / n;
}

double KaplanMeier::at(double t) const {
    double s = 1.0;
    for (const auto& st : steps) {
        if (st.time > t) break;
        s = st.survival;
    }
    return s;
}

KaplanMeier kaplan_meier(const std::vector<SurvivalRecord>& records) {
    if (records.empty()) fail(ErrorKind::usage, "stats", "no-records");
    check_records(records);
    std::map<double, std::pair<int, int>> by_time;  // events, censored
    for (const auto& r : records) {
        auto& e = by_time[r.time];
        if (r.event) ++e.first;
        else ++e.second;
    }
    KaplanMeier km;
    int at_risk = int(records.size());
    double s = 1.0;
    for (const auto& [t, ec] : by_time) {
        if (ec.first > 0) {
            s *= 1.0 - double(ec.first) / double(at_risk);
            km.steps.push_back({t, at_risk, ec.first, ec.second, s});
        }
        at_risk -= ec.first + ec.second;
    }
    return km;
}

LogRankResult logrank(const std::vector<SurvivalRecord>& a, const std::vector<SurvivalRecord>& b) {
    if (a.empty() || b.empty()) fail(ErrorKind::usage, "stats", "empty-group");
    check_records(a);
    check_records(b);
    // time -> events A, at-exit A, events B, at-exit B
    std::map<double, std::array<int, 4>> tab;
    for (const auto& r : a) {
        auto& e = tab[r.time];
        e[0] += r.event;
        e[1] += 1;
    }
    for (const auto& r : b) {
        auto& e = tab[r.time];
        e[2] += r.event;
        e[3] += 1;
    }
    LogRankResult res;
    double na = double(a.size()), nb = double(b.size());
    for (const auto& [t, e] : tab) {
        double d = e[0] + e[2];
        double n = na + nb;
        if (d > 0.0) {
            res.observed_a += e[0];
            res.expected_a += d * na / n;
            if (n > 1.0) res.variance += d * (na / n) * (nb / n) * (n - d) / (n - 1.0);
        }
        na -= e[1];
        nb -= e[3];
    }
    if (!(res.variance > 0.0)) {
        add_flag(res.flags, "no-events");
        res.chi2 = 0.0;
        res.p = 1.0;
        return res;
    }
    double diff = res.observed_a - res.expected_a;
    res.chi2 = diff * diff / res.variance;
    res.p = chi2_sf_1dof(res.chi2);
    return res;
}

CoxResult cox_fit(const std::vector<SurvivalRecord>& records, int max_iter, double grad_tol) {
    if (records.empty()) fail(ErrorKind::usage, "stats", "no-records");
    check_records(records);
    const int n = int(records.size());
    const int p = int(records[0].covariates.size());
    if (p == 0) fail(ErrorKind::usage, "stats", "no-covariates");
    Eigen::MatrixXd X(n, p);
    int events = 0;
    for (int i = 0; i < n; ++i) {
        if (int(records[i].covariates.size()) != p) fail(ErrorKind::usage, "stats", "covariate-size-mismatch");
        for (int k = 0; k < p; ++k) X(i, k) = records[i].covariates[k];
        events += records[i].event;
    }
    if (events == 0) fail(ErrorKind::data, "stats", "no-events");
    Eigen::RowVectorXd center = X.colwise().mean();
    X.rowwise() -= center;
    if (Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(X).rank() < p)
        fail(ErrorKind::data, "stats", "collinear-covariates");

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return records[a].time > records[b].time; });

    auto evaluate = [&](const Eigen::VectorXd& beta, Eigen::VectorXd* grad, Eigen::MatrixXd* info) {
        Eigen::VectorXd eta = X * beta;
        const double shift = eta.maxCoeff();
        double s0 = 0.0, ll = 0.0;
        Eigen::VectorXd s1 = Eigen::VectorXd::Zero(p);
        Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(p, p);
        if (grad) grad->setZero(p);
        if (info) info->setZero(p, p);
        for (int g = 0; g < n;) {
            int h = g;
            while (h < n && records[order[h]].time == records[order[g]].time) ++h;
            for (int q = g; q < h; ++q) {
                int i = order[q];
                double w = std::exp(eta(i) - shift);
                s0 += w;
                s1 += w * X.row(i).transpose();
                if (info) s2 += w * X.row(i).transpose() * X.row(i);
            }
            for (int q = g; q < h; ++q) {
                int i = order[q];
                if (!records[i].event) continue;
                ll += eta(i) - shift - std::log(s0);
                Eigen::VectorXd m = s1 / s0;
                if (grad) *grad += X.row(i).transpose() - m;
                if (info) *info += s2 / s0 - m * m.transpose();
            }
            g = h;
        }
        return ll;
    };

    CoxResult res;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p), grad;
    Eigen::MatrixXd info;
    double ll = evaluate(beta, &grad, &info);
    res.trace.push_back(ll);
    bool done = false;
    for (int it = 0; it < max_iter; ++it) {
        if (grad.norm() <= grad_tol) {
            done = true;
            break;
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().array() > 0.0).all()) {
            add_flag(res.flags, "monotone-likelihood");
            done = true;
            break;
        }
        Eigen::VectorXd step = ldlt.solve(grad);
        // Near the optimum the log-likelihood is flat to rounding; a loss within that noise is not a decrease.
        const double noise = 1e-12 * std::max(1.0, std::abs(ll));
        double t = 1.0, ll_new = ll;
        Eigen::VectorXd cand = beta;
        for (int k = 0; k < 40; ++k) {
            cand = beta + t * step;
            ll_new = evaluate(cand, nullptr, nullptr);
            if (ll_new >= ll - noise) break;
            t *= 0.5;
        }
        if (!(ll_new >= ll - noise)) break;
        beta = cand;
        double gain = ll_new - ll;
        ll = evaluate(beta, &grad, &info);
        res.trace.push_back(ll);
        res.iterations = it + 1;
        if (beta.cwiseAbs().maxCoeff() > 30.0 && gain < 1e-10) {
            add_flag(res.flags, "monotone-likelihood");
            done = true;
            break;
        }
    }
    if (!done && grad.norm() <= grad_tol) done = true;
    if (!done) {
        std::ostringstream os;
        os << "gradient " << grad.norm() << ", loglik trace";
        for (double v : res.trace) os << ' ' << v;
        fail(ErrorKind::numerical, "stats", "cox-no-convergence", os.str());
    }
    res.beta = beta;
    res.loglik = ll;
    res.gradient_norm = grad.norm();
    Eigen::MatrixXd cov = info.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    res.se = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    const double z975 = 1.959963984540054;
    res.hr = beta.array().exp();
    res.ci_low = (beta.array() - z975 * res.se.array()).exp();
    res.ci_high = (beta.array() + z975 * res.se.array()).exp();
    res.wald_p.resize(p);
    for (int k = 0; k < p; ++k) res.wald_p(k) = res.se(k) > 0.0 ? 2.0 * normal_sf(std::abs(beta(k) / res.se(k))) : 1.0;
    return res;
}

FdrResult fdr_correct(const std::vector<double>& pvals, double alpha) {
    const std::size_t m = pvals.size();
    for (double v : pvals)
        if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::usage, "stats", "p-value-out-of-range");
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
    FdrResult r;
    r.adjusted.assign(m, 1.0);
    r.reject.assign(m, false);
    double running = 1.0;
    for (std::size_t k = m; k-- > 0;) {
        std::size_t i = order[k];
        running = std::min(running, pvals[i] * double(m) / double(k + 1));
        r.adjusted[i] = running;
    }
    for (std::size_t i = 0; i < m; ++i) r.reject[i] = r.adjusted[i] <= alpha;
    return r;
}

double harrell_cindex(const std::vector<double>& marker, const std::vector<SurvivalRecord>& records) {
    if (marker.size() != records.size()) fail(ErrorKind::usage, "stats", "size-mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!records[i].event) continue;
        for (std::size_t j = 0; j < records.size(); ++j) {
            if (!(records[i].time < records[j].time)) continue;
            den += 1.0;
            if (marker[i] > marker[j]) num += 1.0;
            else if (marker[i] == marker[j]) num += 0.5;
        }
    }
    if (den == 0.0) fail(ErrorKind::data, "stats", "no-comparable-pairs");
    return num / den;
}

CutoffResult cindex_cutoff(const std::vector<double>& marker, const std::vector<SurvivalRecord>& records) {
    if (marker.size() != records.size()) fail(ErrorKind::usage, "stats", "size-mismatch");
    std::vector<double> u = marker;
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    if (u.size() < 2) fail(ErrorKind::data, "stats", "constant-marker");
    CutoffResult best;
    best.cindex = -1.0;
    std::vector<double> split(marker.size());
    for (std::size_t k = 0; k + 1 < u.size(); ++k) {
        double thr = 0.5 * (u[k] + u[k + 1]);
        for (std::size_t i = 0; i < marker.size(); ++i) split[i] = marker[i] > thr ? 1.0 : 0.0;
        double c = harrell_cindex(split, records);
        if (c > best.cindex) {
            best.cindex = c;
            best.threshold = thr;
        }
    }
    return best;
}

}  // namespace hablab
