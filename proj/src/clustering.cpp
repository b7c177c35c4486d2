#include "hablab/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hablab/error.hpp"
#include "hablab/rng.hpp"

namespace hablab {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double sqdist(const Eigen::MatrixXd& X, Eigen::Index i, const Eigen::MatrixXd& C, Eigen::Index j) {
    return (X.row(i) - C.row(j)).squaredNorm();
}

int nearest(const Eigen::MatrixXd& X, Eigen::Index i, const Eigen::MatrixXd& C, double* best_d = nullptr) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < C.rows(); ++j) {
        double d = sqdist(X, i, C, j);
        if (d < bd) {
            bd = d;
            best = int(j);
        }
    }
    if (best_d) *best_d = bd;
    return best;
}

void check_k(const Eigen::MatrixXd& X, Eigen::Index K) {
    if (K < 1) fail(ErrorKind::usage, "clustering", "bad-k");
    if (K > X.rows()) fail(ErrorKind::usage, "clustering", "k-exceeds-samples");
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& X, const Eigen::MatrixXd& seeds, int max_iter) {
    check_k(X, seeds.rows());
    const Eigen::Index N = X.rows(), K = seeds.rows();
    KMeansResult res;
    res.centroids = seeds;
    res.labels.assign(N, 0);
    std::vector<double> dist(N);
    auto assign = [&]() {
        double obj = 0.0;
        for (Eigen::Index i = 0; i < N; ++i) {
            res.labels[i] = nearest(X, i, res.centroids, &dist[i]);
            obj += dist[i];
        }
        return obj;
    };
    for (int it = 0; it < max_iter; ++it) {
        res.objective.push_back(assign());
        res.iterations = it + 1;
        Eigen::MatrixXd next = Eigen::MatrixXd::Zero(K, X.cols());
        std::vector<Eigen::Index> count(K, 0);
        for (Eigen::Index i = 0; i < N; ++i) {
            next.row(res.labels[i]) += X.row(i);
            ++count[res.labels[i]];
        }
        std::vector<char> taken(N, 0);
        for (Eigen::Index j = 0; j < K; ++j) {
            if (count[j] > 0) {
                next.row(j) /= double(count[j]);
                continue;
            }
            Eigen::Index far = -1;
            for (Eigen::Index i = 0; i < N; ++i)
                if (!taken[i] && (far < 0 || dist[i] > dist[far])) far = i;
            taken[far] = 1;
            next.row(j) = X.row(far);
            ++res.reseeded;
        }
        bool moved = next != res.centroids;
        res.centroids = next;
        if (!moved) return res;
    }
    res.objective.push_back(assign());
    return res;
}

std::vector<int> FuzzyResult::labels() const { return argmax_rows(memberships); }

FuzzyResult fuzzy_kmeans(const Eigen::MatrixXd& X, const Eigen::MatrixXd& seeds, double m, double tol,
                         int max_iter) {
    check_k(X, seeds.rows());
    if (!(m > 1.0)) fail(ErrorKind::usage, "clustering", "bad-fuzzifier");
    const Eigen::Index N = X.rows(), K = seeds.rows();
    FuzzyResult res;
    res.centroids = seeds;
    const double p = 1.0 / (m - 1.0);
    auto memberships = [&](Eigen::MatrixXd& U) {
        U.setZero(N, K);
        Eigen::VectorXd d(K);
        for (Eigen::Index i = 0; i < N; ++i) {
            Eigen::Index zero = -1;
            for (Eigen::Index j = 0; j < K; ++j) {
                d(j) = std::sqrt(sqdist(X, i, res.centroids, j));
                if (d(j) == 0.0 && zero < 0) zero = j;
            }
            if (zero >= 0) {
                U(i, zero) = 1.0;
                continue;
            }
            // u_ij = 1 / sum_k (d_ij/d_ik)^(2/(m-1)), evaluated in log space for large m.
            for (Eigen::Index j = 0; j < K; ++j) {
                double s = 0.0;
                for (Eigen::Index k = 0; k < K; ++k) s += std::exp(2.0 * p * (std::log(d(j)) - std::log(d(k))));
                U(i, j) = 1.0 / s;
            }
            U.row(i) /= U.row(i).sum();
        }
    };
    Eigen::MatrixXd U, Unew;
    memberships(U);
    for (int it = 0; it < max_iter; ++it) {
        res.iterations = it + 1;
        Eigen::MatrixXd W = U.array().pow(m);
        for (Eigen::Index j = 0; j < K; ++j) {
            double s = W.col(j).sum();
            if (s > 0.0) res.centroids.row(j) = (W.col(j).transpose() * X) / s;
        }
        memberships(Unew);
        double change = (Unew - U).cwiseAbs().maxCoeff();
        U.swap(Unew);
        if (change <= tol) break;
    }
    res.memberships = U;
    return res;
}

double seed_score(const Eigen::MatrixXd& X, const Eigen::MatrixXd& C) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        double d;
        nearest(X, i, C, &d);
        s += d;
    }
    return s;
}

std::vector<SeedSet> kmeanspp_protocol(const Eigen::MatrixXd& X, int K, int n_candidates, int n_kept,
                                       std::uint64_t rng_seed) {
    check_k(X, K);
    if (n_candidates < 1 || n_kept < 1) fail(ErrorKind::usage, "clustering", "bad-candidate-count");
    const Eigen::Index N = X.rows();
    Rng rng(rng_seed);
    std::vector<SeedSet> cands;
    std::vector<double> d2(N);
    for (int c = 0; c < n_candidates; ++c) {
        SeedSet s;
        s.centroids.resize(K, X.cols());
        std::vector<char> used(N, 0);
        Eigen::Index first = Eigen::Index(rng.below(std::size_t(N)));
        s.centroids.row(0) = X.row(first);
        used[first] = 1;
        for (Eigen::Index i = 0; i < N; ++i) d2[i] = (X.row(i) - s.centroids.row(0)).squaredNorm();
        for (int k = 1; k < K; ++k) {
            double total = 0.0;
            for (Eigen::Index i = 0; i < N; ++i)
                if (!used[i]) total += d2[i];
            Eigen::Index pick = -1;
            if (total > 0.0) {
                double r = rng.uniform() * total, acc = 0.0;
                for (Eigen::Index i = 0; i < N; ++i) {
                    if (used[i] || d2[i] <= 0.0) continue;
                    acc += d2[i];
                    pick = i;
                    if (acc >= r) break;
                }
            }
            if (pick < 0) {
                std::vector<Eigen::Index> free;
                for (Eigen::Index i = 0; i < N; ++i)
                    if (!used[i]) free.push_back(i);
                pick = free[rng.below(free.size())];
            }
            used[pick] = 1;
            s.centroids.row(k) = X.row(pick);
            for (Eigen::Index i = 0; i < N; ++i)
                d2[i] = std::min(d2[i], (X.row(i) - s.centroids.row(k)).squaredNorm());
        }
        s.score = seed_score(X, s.centroids);
        cands.push_back(std::move(s));
    }
    std::stable_sort(cands.begin(), cands.end(), [](const SeedSet& a, const SeedSet& b) { return a.score < b.score; });
    cands.resize(std::min<std::size_t>(cands.size(), std::size_t(n_kept)));
    return cands;
}

GaussianDensity::GaussianDensity(const GaussianComponent& c) : mean_(c.mean) {
    Eigen::LLT<Eigen::MatrixXd> llt(c.cov);
    if (llt.info() != Eigen::Success) fail(ErrorKind::numerical, "clustering", "covariance-not-spd");
    L_ = llt.matrixL();
    double logdet = 2.0 * L_.diagonal().array().log().sum();
    log_norm_ = -0.5 * (double(mean_.size()) * kLog2Pi + logdet);
}

double GaussianDensity::log_pdf(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    Eigen::VectorXd diff = x.transpose() - mean_;
    Eigen::VectorXd z = L_.triangularView<Eigen::Lower>().solve(diff);
    return log_norm_ - 0.5 * z.squaredNorm();
}

Eigen::VectorXd GaussianDensity::log_pdf_rows(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd diff = (X.rowwise() - mean_.transpose()).transpose();
    Eigen::MatrixXd z = L_.triangularView<Eigen::Lower>().solve(diff);
    return (log_norm_ - 0.5 * z.colwise().squaredNorm().array()).matrix().transpose();
}

double covariance_floor(const Eigen::MatrixXd& X) {
    Eigen::RowVectorXd mu = X.colwise().mean();
    double v = (X.rowwise() - mu).array().square().sum() / double(std::max<Eigen::Index>(1, X.rows()) * X.cols());
    return v > 0.0 ? 1e-6 * v : 1e-12;
}

bool update_gaussians(const Eigen::MatrixXd& X, const Eigen::MatrixXd& resp, std::vector<GaussianComponent>& comps,
                      double floor) {
    bool regularized = false;
    const Eigen::Index d = X.cols();
    const double total = resp.sum();
    for (std::size_t j = 0; j < comps.size(); ++j) {
        const auto w = resp.col(Eigen::Index(j));
        double nk = w.sum();
        if (!(nk > 1e-10)) continue;
        Eigen::VectorXd mu = (X.transpose() * w) / nk;
        Eigen::MatrixXd C = X.rowwise() - mu.transpose();
        Eigen::MatrixXd cov = (C.transpose() * w.asDiagonal() * C) / nk;
        cov = 0.5 * (cov + cov.transpose());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
        if (es.eigenvalues()(0) < floor) {
            cov += floor * Eigen::MatrixXd::Identity(d, d);
            regularized = true;
        }
        comps[j].mean = mu;
        comps[j].cov = cov;
        comps[j].weight = nk / total;
    }
    return regularized;
}

std::vector<GaussianComponent> components_from_labels(const Eigen::MatrixXd& X, const std::vector<int>& labels,
                                                      int K) {
    Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(X.rows(), K);
    for (Eigen::Index i = 0; i < X.rows(); ++i) resp(i, labels[i]) = 1.0;
    std::vector<GaussianComponent> comps(K);
    const double floor = covariance_floor(X);
    Eigen::RowVectorXd mu = X.colwise().mean();
    Eigen::MatrixXd C = X.rowwise() - mu;
    Eigen::MatrixXd pooled = (C.transpose() * C) / double(X.rows());
    pooled += floor * Eigen::MatrixXd::Identity(X.cols(), X.cols());
    for (auto& c : comps) {
        c.mean = mu.transpose();
        c.cov = pooled;
        c.weight = 1.0 / K;
    }
    update_gaussians(X, resp, comps, floor);
    // Singleton clusters get the pooled covariance scaled down instead of a zero matrix.
    for (int j = 0; j < K; ++j) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(comps[j].cov, Eigen::EigenvaluesOnly);
        if (es.eigenvalues()(0) <= floor * 1.0000001) comps[j].cov = 0.1 * pooled;
    }
    return comps;
}

Eigen::MatrixXd log_densities(const Eigen::MatrixXd& X, const std::vector<GaussianComponent>& comps) {
    Eigen::MatrixXd out(X.rows(), Eigen::Index(comps.size()));
    for (std::size_t j = 0; j < comps.size(); ++j) out.col(Eigen::Index(j)) = GaussianDensity(comps[j]).log_pdf_rows(X);
    return out;
}

GmmResult gmm_em(const Eigen::MatrixXd& X, const std::vector<GaussianComponent>& init, int max_iter, double tol) {
    check_k(X, Eigen::Index(init.size()));
    const Eigen::Index N = X.rows(), K = Eigen::Index(init.size());
    GmmResult res;
    res.components = init;
    double wsum = 0.0;
    for (const auto& c : init) wsum += c.weight;
    for (auto& c : res.components) c.weight = wsum > 0.0 ? c.weight / wsum : 1.0 / double(K);
    const double floor = covariance_floor(X);
    res.resp.resize(N, K);
    for (int it = 0;; ++it) {
        Eigen::MatrixXd lp = log_densities(X, res.components);
        double ll = 0.0;
        for (Eigen::Index i = 0; i < N; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < K; ++j) {
                lp(i, j) += std::log(res.components[j].weight);
                mx = std::max(mx, lp(i, j));
            }
            double s = 0.0;
            for (Eigen::Index j = 0; j < K; ++j) s += std::exp(lp(i, j) - mx);
            for (Eigen::Index j = 0; j < K; ++j) res.resp(i, j) = std::exp(lp(i, j) - mx) / s;
            ll += mx + std::log(s);
        }
        if (!std::isfinite(ll)) fail(ErrorKind::numerical, "clustering", "non-finite-loglik");
        res.trace.push_back(ll);
        if (it > 0 && std::abs(ll - res.trace[it - 1]) <= tol * std::abs(ll)) {
            res.converged = true;
            break;
        }
        if (it >= max_iter) break;
        res.regularized |= update_gaussians(X, res.resp, res.components, floor);
        res.iterations = it + 1;
    }
    return res;
}

std::vector<int> argmax_rows(const Eigen::MatrixXd& M) {
    std::vector<int> out(M.rows());
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        int best = 0;
        for (Eigen::Index j = 1; j < M.cols(); ++j)
            if (M(i, j) > M(i, best)) best = int(j);
        out[i] = best;
    }
    return out;
}

std::vector<int> ml_labels(const Eigen::MatrixXd& X, const std::vector<GaussianComponent>& comps) {
    return argmax_rows(log_densities(X, comps));
}

double hmrf_energy(const Eigen::MatrixXd& X, const Lattice& lat, const std::vector<GaussianComponent>& comps,
                   const std::vector<int>& labels, double beta) {
    Eigen::MatrixXd lp = log_densities(X, comps);
    double data = 0.0, prior = 0.0;
    for (int i = 0; i < lat.rows(); ++i) {
        data -= lp(i, labels[i]);
        for (int e = lat.begin(i); e < lat.end(i); ++e)
            if (labels[lat.dst(e)] != labels[i]) prior += 1.0;
    }
    return data + beta * 0.5 * prior;
}

HmrfResult gauss_hmrf(const FeatureStack& fs, const NeighborhoodSystem& ns, const std::vector<GaussianComponent>& init,
                      double beta, int max_iter, int icm_sweeps) {
    if (!(beta >= 0.0)) fail(ErrorKind::usage, "clustering", "bad-beta");
    const auto& X = fs.values;
    check_k(X, Eigen::Index(init.size()));
    Lattice lat(fs, ns);
    const int K = int(init.size());
    const double floor = covariance_floor(X);
    HmrfResult res;
    res.components = init;
    Eigen::MatrixXd lp = log_densities(X, res.components);
    res.labels = argmax_rows(lp);
    for (int it = 0;; ++it) {
        for (int sweep = 0; sweep < icm_sweeps; ++sweep) {
            bool changed = false;
            for (int i = 0; i < lat.rows(); ++i) {
                int best = res.labels[i];
                double best_e = std::numeric_limits<double>::infinity();
                for (int k = 0; k < K; ++k) {
                    double e = -lp(i, k);
                    for (int n = lat.begin(i); n < lat.end(i); ++n)
                        if (res.labels[lat.dst(n)] != k) e += beta;
                    if (e < best_e) {
                        best_e = e;
                        best = k;
                    }
                }
                if (best != res.labels[i]) {
                    res.labels[i] = best;
                    changed = true;
                }
            }
            if (!changed) break;
        }
        double energy = hmrf_energy(X, lat, res.components, res.labels, beta);
        res.energy_trace.push_back(energy);
        res.energy = energy;
        res.iterations = it;
        if (it > 0 && std::abs(res.energy_trace[it - 1] - energy) <= 1e-10 * std::abs(energy)) break;
        if (it >= max_iter) break;
        Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(X.rows(), K);
        for (Eigen::Index i = 0; i < X.rows(); ++i) resp(i, res.labels[i]) = 1.0;
        update_gaussians(X, resp, res.components, floor);
        lp = log_densities(X, res.components);
    }
    return res;
}

KMeansResult best_kmeans(const Eigen::MatrixXd& X, const std::vector<SeedSet>& seeds, int max_iter) {
    if (seeds.empty()) fail(ErrorKind::usage, "clustering", "no-seeds");
    KMeansResult best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (const auto& s : seeds) {
        auto r = kmeans(X, s.centroids, max_iter);
        if (r.objective.back() < best_obj) {
            best_obj = r.objective.back();
            best = std::move(r);
        }
    }
    return best;
}

FuzzyResult best_fuzzy(const Eigen::MatrixXd& X, const std::vector<SeedSet>& seeds, double m) {
    if (seeds.empty()) fail(ErrorKind::usage, "clustering", "no-seeds");
    FuzzyResult best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (const auto& s : seeds) {
        auto r = fuzzy_kmeans(X, s.centroids, m);
        double obj = seed_score(X, r.centroids);
        if (obj < best_obj) {
            best_obj = obj;
            best = std::move(r);
        }
    }
    return best;
}

GmmResult best_gmm(const Eigen::MatrixXd& X, const std::vector<SeedSet>& seeds, int max_iter, double tol) {
    if (seeds.empty()) fail(ErrorKind::usage, "clustering", "no-seeds");
    GmmResult best;
    double best_ll = -std::numeric_limits<double>::infinity();
    for (const auto& s : seeds) {
        auto km = kmeans(X, s.centroids, 50);
        auto r = gmm_em(X, components_from_labels(X, km.labels, int(s.centroids.rows())), max_iter, tol);
        if (r.loglik() > best_ll) {
            best_ll = r.loglik();
            best = std::move(r);
        }
    }
    return best;
}

}  // namespace hablab
