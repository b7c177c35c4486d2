#include "hablab/svfmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <boost/math/special_functions/digamma.hpp>

#include "hablab/error.hpp"
#include "hablab/roots.hpp"

namespace hablab {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kLogPi = 1.1447298858494002;

class Engine {
public:
    Engine(const FeatureStack& fs, const NeighborhoodSystem& ns, const std::vector<GaussianComponent>& init,
           FieldMode mode, PriorKind prior, const SvfmmOptions& opt)
        : X_(fs.values), ns_(ns), lat_(fs, ns), opt_(opt), mode_(mode), prior_(prior) {
        fs.validate();
        if (init.empty()) fail(ErrorKind::usage, "svfmm", "no-components");
        if (Eigen::Index(init.size()) > X_.rows()) fail(ErrorKind::usage, "svfmm", "k-exceeds-samples");
        N_ = int(X_.rows());
        K_ = int(init.size());
        D_ = lat_.directions();
        E_ = lat_.edges();
        cov_floor_ = covariance_floor(X_);
    }

    SvfmmResult run(const std::vector<GaussianComponent>& init) {
        initialise(init);
        SvfmmResult res;
        res.mode = mode_;
        res.prior = prior_;
        for (int t = 0;; ++t) {
            double ll = e_step();
            if (prior_ == PriorKind::student) student_expectations();
            double obj = ll + prior_value();
            if (!std::isfinite(obj)) fail(ErrorKind::numerical, "svfmm", "non-finite-objective");
            res.trace.push_back(obj);
            if (t > 0) {
                double prev = res.trace[t - 1];
                if (obj < prev - opt_.monotone_tol * std::abs(prev)) add_flag("monotonicity-violation");
                if (std::abs(obj - prev) <= opt_.tol * std::abs(obj)) {
                    res.converged = true;
                    break;
                }
            }
            if (t >= opt_.max_iter) break;
            if (prior_ == PriorKind::nonlocal) nonlocal_partial_estep();
            m_step();
            res.iterations = t + 1;
        }
        res.components = comps_;
        res.field = field_;
        res.pi = field_to_pi(field_, mode_);
        res.resp = resp_;
        res.beta2 = beta2_;
        res.nu = nu_;
        res.weights = w_;
        res.max_root_residual = max_residual_;
        res.flags = flags_;
        return res;
    }

private:
    void add_flag(const std::string& f) {
        if (std::find(flags_.begin(), flags_.end(), f) == flags_.end()) flags_.push_back(f);
    }

    void initialise(const std::vector<GaussianComponent>& init) {
        int iters = opt_.skip_warm_start ? 0 : opt_.warm_start_iter;
        GmmResult g = gmm_em(X_, init, iters, 0.0);
        comps_ = g.components;
        if (g.regularized) add_flag("covariance-regularized");
        if (mode_ == FieldMode::dirichlet) {
            field_ = g.resp.array() + 0.01;
        } else {
            field_ = (g.resp.array() + 0.01) / (1.0 + 0.01 * K_);
        }
        w_ = Eigen::MatrixXd::Ones(E_, K_);
        elog_ = Eigen::MatrixXd::Zero(E_, K_);
        nu_ = Eigen::MatrixXd::Constant(K_, D_, opt_.nu_init);
        beta2_ = Eigen::MatrixXd::Constant(K_, D_, 1.0);
        update_beta2();
    }

    double delta2(int e, int j) const {
        double d = field_(lat_.src(e), j) - field_(lat_.dst(e), j);
        return d * d;
    }

    double e_step() {
        Eigen::MatrixXd lp = log_densities(X_, comps_);
        Eigen::MatrixXd pi = field_to_pi(field_, mode_);
        resp_.resize(N_, K_);
        double ll = 0.0;
        for (int i = 0; i < N_; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < K_; ++j) {
                lp(i, j) = pi(i, j) > 0.0 ? lp(i, j) + std::log(pi(i, j)) : -std::numeric_limits<double>::infinity();
                mx = std::max(mx, lp(i, j));
            }
            double s = 0.0;
            for (int j = 0; j < K_; ++j) s += std::exp(lp(i, j) - mx);
            for (int j = 0; j < K_; ++j) resp_(i, j) = std::exp(lp(i, j) - mx) / s;
            ll += mx + std::log(s);
        }
        return ll;
    }

    double prior_value() const {
        double v = 0.0;
        if (prior_ == PriorKind::student && !opt_.unit_weights) {
            Eigen::MatrixXd c0(K_, D_);
            for (int d = 0; d < D_; ++d)
                for (int j = 0; j < K_; ++j) {
                    double nu = nu_(j, d);
                    c0(j, d) = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                               0.5 * (std::log(nu * beta2_(j, d)) + kLogPi);
                }
            for (int e = 0; e < E_; ++e) {
                int d = lat_.dir(e);
                for (int j = 0; j < K_; ++j) {
                    double nu = nu_(j, d);
                    v += c0(j, d) - 0.5 * (nu + 1.0) * std::log1p(delta2(e, j) / (nu * beta2_(j, d)));
                }
            }
            return v;
        }
        Eigen::MatrixXd c0 = -0.5 * (kLog2Pi + beta2_.array().log());
        const bool unit = (w_.array() == 1.0).all();
        for (int e = 0; e < E_; ++e) {
            int d = lat_.dir(e);
            for (int j = 0; j < K_; ++j) {
                double w = w_(e, j), b2 = beta2_(j, d);
                v += c0(j, d) - w * delta2(e, j) / (2.0 * b2);
                if (!unit) v += 0.5 * std::log(w);
            }
        }
        return v;
    }

    void student_expectations() {
        if (opt_.unit_weights) return;
        Eigen::MatrixXd psi(K_, D_);
        for (int d = 0; d < D_; ++d)
            for (int j = 0; j < K_; ++j) psi(j, d) = boost::math::digamma(0.5 * (nu_(j, d) + 1.0));
        for (int e = 0; e < E_; ++e) {
            int d = lat_.dir(e);
            for (int j = 0; j < K_; ++j) {
                double nu = nu_(j, d);
                double r = delta2(e, j) / beta2_(j, d);
                w_(e, j) = (nu + 1.0) / (nu + r);
                elog_(e, j) = psi(j, d) - std::log(0.5 * (nu + r));
            }
        }
    }

    void nonlocal_partial_estep() {
        if (opt_.unit_weights) return;
        NlmWeightField W = nlm_weights(field_, beta2_, lat_, ns_, opt_.nlm_mode, opt_.chi2_cap, opt_.weight_floor);
        for (int e = 0; e < E_; ++e) {
            int d = lat_.dir(e);
            for (int j = 0; j < K_; ++j) {
                double dd = delta2(e, j) / (2.0 * beta2_(j, d));
                double un = W.u(e, j), uo = w_(e, j);
                if (0.5 * std::log(un) - un * dd >= 0.5 * std::log(uo) - uo * dd) w_(e, j) = un;
            }
        }
    }

    void m_step() {
        if (update_gaussians(X_, resp_, comps_, cov_floor_)) add_flag("covariance-regularized");
        if (mode_ == FieldMode::dirichlet) {
            update_alpha();
        } else {
            update_pi();
        }
        update_beta2();
        if (prior_ == PriorKind::student && opt_.update_nu && !opt_.unit_weights) update_nu();
    }

    void coupling(int i, int j, double& B, double& C) const {
        B = 0.0;
        C = 0.0;
        for (int e = lat_.begin(i); e < lat_.end(i); ++e) {
            double a = w_(e, j) / beta2_(j, lat_.dir(e));
            B += a;
            C += a * field_(lat_.dst(e), j);
        }
    }

    void update_alpha() {
        for (const auto& color : lat_.colors()) {
            for (int i : color) {
                double total = field_.row(i).sum();
                for (int j = 0; j < K_; ++j) {
                    double B, C;
                    coupling(i, j, B, C);
                    double A = total - field_(i, j);
                    AlphaUpdate up = dcm_alpha_update(resp_(i, j), A, B, C, field_(i, j), opt_.alpha_floor);
                    if (up.from_root) max_residual_ = std::max(max_residual_, up.residual);
                    total = A + up.value;
                    field_(i, j) = up.value;
                }
                if (!(field_.row(i).sum() > 0.0)) field_.row(i).setConstant(opt_.alpha_floor);
            }
        }
    }

    void update_pi() {
        Eigen::VectorXd g(K_), B(K_), C(K_);
        for (const auto& color : lat_.colors()) {
            for (int i : color) {
                for (int j = 0; j < K_; ++j) {
                    coupling(i, j, B(j), C(j));
                    g(j) = resp_(i, j);
                }
                if (opt_.simplex == SimplexSolver::kkt) {
                    field_.row(i) = simplex_kkt_solve(g, B, C).transpose();
                } else {
                    Eigen::VectorXd p(K_);
                    for (int j = 0; j < K_; ++j) p(j) = B(j) > 0.0 ? svfmm_quadratic_root(B(j), C(j), g(j)) : g(j);
                    field_.row(i) = project_to_simplex(p).transpose();
                }
            }
        }
    }

    void update_beta2() {
        Eigen::MatrixXd num = Eigen::MatrixXd::Zero(K_, D_);
        for (int e = 0; e < E_; ++e)
            for (int j = 0; j < K_; ++j) num(j, lat_.dir(e)) += w_(e, j) * delta2(e, j);
        for (int d = 0; d < D_; ++d) {
            int n = lat_.edges_in_direction(d);
            if (n == 0) continue;
            for (int j = 0; j < K_; ++j) beta2_(j, d) = std::max(opt_.beta2_floor, num(j, d) / n);
        }
    }

    void update_nu() {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(K_, D_);
        for (int e = 0; e < E_; ++e)
            for (int j = 0; j < K_; ++j) s(j, lat_.dir(e)) += elog_(e, j) - w_(e, j);
        for (int d = 0; d < D_; ++d) {
            int n = lat_.edges_in_direction(d);
            if (n == 0) continue;
            for (int j = 0; j < K_; ++j) {
                double c = 1.0 + s(j, d) / n;
                auto h = [&](double nu) { return std::log(0.5 * nu) - boost::math::digamma(0.5 * nu) + c; };
                if (h(opt_.nu_max) >= 0.0) {
                    nu_(j, d) = opt_.nu_max;
                    continue;
                }
                if (h(opt_.nu_min) <= 0.0) {
                    add_flag("nu-no-bracket");
                    continue;
                }
                double lo = std::log(opt_.nu_min), hi = std::log(opt_.nu_max);
                for (int it = 0; it < 200 && hi - lo > 1e-12; ++it) {
                    double mid = 0.5 * (lo + hi);
                    if (h(std::exp(mid)) > 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                nu_(j, d) = std::exp(0.5 * (lo + hi));
            }
        }
    }

    const Eigen::MatrixXd& X_;
    const NeighborhoodSystem& ns_;
    Lattice lat_;
    SvfmmOptions opt_;
    FieldMode mode_;
    PriorKind prior_;
    int N_ = 0, K_ = 0, D_ = 0, E_ = 0;
    double cov_floor_ = 0.0;
    double max_residual_ = 0.0;
    std::vector<GaussianComponent> comps_;
    Eigen::MatrixXd field_, resp_, beta2_, nu_, w_, elog_;
    std::vector<std::string> flags_;
};

}  // namespace

bool SvfmmResult::has_flag(const std::string& f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
}

Eigen::MatrixXd field_to_pi(const Eigen::MatrixXd& field, FieldMode mode) {
    if (mode == FieldMode::simplex) return field;
    Eigen::VectorXd s = field.rowwise().sum();
    return s.asDiagonal().inverse() * field;
}

double chi2_pdf(double x, double dof) {
    if (x <= 0.0) return dof < 2.0 ? std::numeric_limits<double>::infinity() : (dof == 2.0 ? 0.5 : 0.0);
    double h = 0.5 * dof;
    return std::exp((h - 1.0) * std::log(x) - 0.5 * x - h * std::log(2.0) - std::lgamma(h));
}

NlmWeightField nlm_weights(const Eigen::MatrixXd& field, const Eigen::MatrixXd& beta2, const Lattice& lat,
                           const NeighborhoodSystem& ns, NlmMode mode, double chi2_cap, double weight_floor) {
    const int E = lat.edges();
    const int K = int(field.cols());
    NlmWeightField W;
    W.D.resize(E, K);
    W.u.resize(E, K);
    W.gamma.resize(E);
    W.eta.resize(E);
    W.patch.resize(E);
    W.overlap.resize(E);
    std::map<Index3, int> overlap_cache;
    std::vector<double> acc(K);
    for (int e = 0; e < E; ++e) {
        const int i = lat.src(e), m = lat.dst(e), d = lat.dir(e);
        int P = 0, O = 0;
        std::fill(acc.begin(), acc.end(), 0.0);
        if (mode == NlmMode::voxel) {
            P = 1;
            for (int j = 0; j < K; ++j) {
                double df = field(i, j) - field(m, j);
                acc[j] = df * df;
            }
        } else {
            const auto& ci = lat.coords(i);
            const auto& cm = lat.coords(m);
            for (const auto& k : ns.patch) {
                int a = lat.row_at(ci[0] + k[0], ci[1] + k[1], ci[2] + k[2]);
                int b = lat.row_at(cm[0] + k[0], cm[1] + k[1], cm[2] + k[2]);
                if (a < 0 || b < 0) continue;
                ++P;
                for (int j = 0; j < K; ++j) {
                    double df = field(a, j) - field(b, j);
                    acc[j] += df * df;
                }
            }
            const auto& o = lat.offset(e);
            auto it = overlap_cache.find(o);
            if (it == overlap_cache.end()) it = overlap_cache.emplace(o, patch_overlap(ns.patch, o)).first;
            O = std::min(it->second, P);
        }
        double gamma = double(2 * P + O) / double(2 * P);
        double eta = double(P) / gamma;
        W.gamma(e) = gamma;
        W.eta(e) = eta;
        W.patch(e) = P;
        W.overlap(e) = O;
        const double h = 0.5 * eta;
        const double lc = -h * std::log(2.0) - std::lgamma(h);
        for (int j = 0; j < K; ++j) {
            double D = acc[j] / (2.0 * beta2(j, d));
            double x = std::max(D / gamma, chi2_cap);
            W.D(e, j) = D;
            double pdf = x > 0.0 ? std::exp((h - 1.0) * std::log(x) - 0.5 * x + lc) : chi2_pdf(x, eta);
            W.u(e, j) = std::max(weight_floor, pdf);
        }
    }
    return W;
}

Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    std::vector<double> s(v.data(), v.data() + n);
    std::sort(s.begin(), s.end(), std::greater<double>());
    double cum = 0.0, theta = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        cum += s[k];
        double t = (cum - 1.0) / double(k + 1);
        if (s[k] - t > 0.0) theta = t;
    }
    Eigen::VectorXd out = (v.array() - theta).max(0.0);
    double tot = out.sum();
    if (!(tot > 0.0)) fail(ErrorKind::numerical, "svfmm", "simplex-projection-failed");
    return out / tot;
}

Eigen::VectorXd simplex_kkt_solve(const Eigen::VectorXd& g, const Eigen::VectorXd& B, const Eigen::VectorXd& C) {
    const Eigen::Index K = g.size();
    Eigen::VectorXd p(K);
    bool isolated = false;
    for (Eigen::Index j = 0; j < K; ++j)
        if (!(B(j) > 0.0) && g(j) > 0.0) isolated = true;
    // p_j(lam) solves 2B p^2 - (2C - lam) p - g = 0; the sum is convex and decreasing in lam.
    auto eval = [&](double lam, double& S, double& dS) {
        S = 0.0;
        dS = 0.0;
        for (Eigen::Index j = 0; j < K; ++j) {
            double pj = 0.0, dj = 0.0;
            if (B(j) > 0.0) {
                double x = 2.0 * C(j) - lam;
                double r = std::sqrt(x * x + 8.0 * B(j) * g(j));
                if (x >= 0.0) {
                    pj = (x + r) / (4.0 * B(j));
                } else {
                    pj = r - x > 0.0 ? 2.0 * g(j) / (r - x) : 0.0;
                }
                dj = r > 0.0 ? -pj / r : 0.0;
            } else if (g(j) > 0.0) {
                pj = g(j) / lam;
                dj = -pj / lam;
            }
            p(j) = pj;
            S += pj;
            dS += dj;
        }
    };
    double lo = isolated ? 0.0 : -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    double lam = isolated ? 1.0 : 0.0;
    for (int it = 0; it < 200; ++it) {
        double S, dS;
        eval(lam, S, dS);
        if (std::abs(S - 1.0) <= 1e-15) break;
        if (S > 1.0) {
            lo = lam;
        } else {
            hi = lam;
        }
        double next = dS < 0.0 ? lam - (S - 1.0) / dS : std::numeric_limits<double>::quiet_NaN();
        if (!std::isfinite(next) || next <= lo || next >= hi) {
            if (std::isfinite(lo) && std::isfinite(hi)) {
                next = 0.5 * (lo + hi);
            } else if (std::isfinite(lo)) {
                next = lo + std::max(1.0, 2.0 * std::abs(lo));
            } else {
                next = hi - std::max(1.0, 2.0 * std::abs(hi));
            }
        }
        if (next == lam) break;
        lam = next;
    }
    double S, dS;
    eval(lam, S, dS);
    if (!(S > 0.0)) fail(ErrorKind::numerical, "svfmm", "simplex-solve-failed");
    return p / S;
}

SvfmmResult svfmm_fit(const FeatureStack& fs, const NeighborhoodSystem& ns,
                      const std::vector<GaussianComponent>& init, const SvfmmOptions& opt) {
    return Engine(fs, ns, init, FieldMode::simplex, PriorKind::gauss, opt).run(init);
}

SvfmmResult dcm_svfmm_fit(const FeatureStack& fs, const NeighborhoodSystem& ns,
                          const std::vector<GaussianComponent>& init, const SvfmmOptions& opt) {
    return Engine(fs, ns, init, FieldMode::dirichlet, PriorKind::gauss, opt).run(init);
}

SvfmmResult nlsvfmm_fit(const FeatureStack& fs, const NeighborhoodSystem& ns,
                        const std::vector<GaussianComponent>& init, NlmMode mode, const SvfmmOptions& opt) {
    SvfmmOptions o = opt;
    o.nlm_mode = mode;
    return Engine(fs, ns, init, FieldMode::dirichlet, PriorKind::nonlocal, o).run(init);
}

SvfmmResult st_svfmm_fit(const FeatureStack& fs, const NeighborhoodSystem& ns,
                         const std::vector<GaussianComponent>& init, const SvfmmOptions& opt) {
    return Engine(fs, ns, init, FieldMode::dirichlet, PriorKind::student, opt).run(init);
}

std::vector<int> posterior_segment(const SvfmmResult& r) { return argmax_rows(r.resp); }
std::vector<int> prior_segment(const SvfmmResult& r) { return argmax_rows(r.pi); }

}  // namespace hablab
