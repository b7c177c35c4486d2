#include "hablab/features.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "hablab/error.hpp"

namespace hablab {

namespace {

void moments_at(const Volume& v, const Index3& c, int radius, std::vector<double>& buf, double out[3]) {
    const auto& g = v.geo;
    int rz = g.is2d() ? 0 : radius;
    buf.clear();
    for (int z = std::max(0, c[2] - rz); z <= std::min(g.dims[2] - 1, c[2] + rz); ++z)
        for (int y = std::max(0, c[1] - radius); y <= std::min(g.dims[1] - 1, c[1] + radius); ++y)
            for (int x = std::max(0, c[0] - radius); x <= std::min(g.dims[0] - 1, c[0] + radius); ++x)
                buf.push_back(v(x, y, z));
    double n = double(buf.size());
    double mean = 0.0;
    for (double x : buf) mean += x;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : buf) {
        double d = x - mean;
        double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    out[0] = mean;
    double scale = 1e-12 * std::max(1.0, std::abs(mean));
    if (m2 <= scale * scale) {
        out[1] = 0.0;
        out[2] = 0.0;
    } else {
        out[1] = m3 / std::pow(m2, 1.5);
        out[2] = m4 / (m2 * m2) - 3.0;
    }
}

}  // namespace

std::vector<int> patch_sizes(const Geometry& geo, const std::vector<std::size_t>& voxels, int radius) {
    std::vector<int> out;
    out.reserve(voxels.size());
    int rz = geo.is2d() ? 0 : radius;
    for (auto idx : voxels) {
        auto c = geo.coords(idx);
        int n = 1;
        n *= std::min(geo.dims[0] - 1, c[0] + radius) - std::max(0, c[0] - radius) + 1;
        n *= std::min(geo.dims[1] - 1, c[1] + radius) - std::max(0, c[1] - radius) + 1;
        n *= std::min(geo.dims[2] - 1, c[2] + rz) - std::max(0, c[2] - rz) + 1;
        out.push_back(n);
    }
    return out;
}

FeatureStack local_moment_features(const std::vector<const Volume*>& vols, const std::vector<std::string>& names,
                                   const Mask& mask, int radius) {
    if (radius < 1) fail(ErrorKind::usage, "volume", "bad-radius");
    if (vols.empty()) fail(ErrorKind::usage, "volume", "no-channels");
    for (auto* v : vols) require_same_grid(v->geo, mask.geo, "volume");
    FeatureStack fs;
    fs.geo = mask.geo;
    fs.voxels = mask.indices();
    if (fs.voxels.empty()) fail(ErrorKind::data, "volume", "empty-roi");
    fs.values.resize(Eigen::Index(fs.voxels.size()), Eigen::Index(3 * vols.size()));
    std::vector<double> buf;
    for (std::size_t c = 0; c < vols.size(); ++c) {
        std::string base = c < names.size() ? names[c] : "ch" + std::to_string(c);
        fs.channels.push_back(base + "_mean");
        fs.channels.push_back(base + "_skewness");
        fs.channels.push_back(base + "_kurtosis");
        for (std::size_t r = 0; r < fs.voxels.size(); ++r) {
            double m[3];
            moments_at(*vols[c], fs.geo.coords(fs.voxels[r]), radius, buf, m);
            for (int k = 0; k < 3; ++k) fs.values(Eigen::Index(r), Eigen::Index(3 * c + k)) = m[k];
        }
    }
    return fs;
}

FeatureStack local_moment_features(const Volume& v, const Mask& mask, int radius, const std::string& name) {
    return local_moment_features(std::vector<const Volume*>{&v}, {name}, mask, radius);
}

PcaResult pca(const FeatureStack& fs, double variance_kept) {
    if (!(variance_kept > 0.0 && variance_kept <= 1.0)) fail(ErrorKind::usage, "volume", "bad-variance-kept");
    const auto& X = fs.values;
    if (X.rows() < 2) fail(ErrorKind::data, "volume", "too-few-samples");
    PcaResult res;
    res.center = X.colwise().mean();
    Eigen::MatrixXd C = X.rowwise() - res.center;
    Eigen::MatrixXd cov = (C.transpose() * C) / double(X.rows() - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::Index d = cov.rows();
    res.eigenvalues.resize(d);
    Eigen::MatrixXd vecs(d, d);
    for (Eigen::Index k = 0; k < d; ++k) {
        res.eigenvalues(k) = std::max(0.0, es.eigenvalues()(d - 1 - k));
        Eigen::VectorXd v = es.eigenvectors().col(d - 1 - k);
        Eigen::Index arg;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        vecs.col(k) = v;
    }
    double total = res.eigenvalues.sum();
    if (!(total > 0.0) || res.eigenvalues(0) <= 1e-24 * std::max(1.0, res.center.squaredNorm()))
        fail(ErrorKind::numerical, "volume", "degenerate-covariance");
    Eigen::Index k = 0;
    double acc = 0.0;
    while (k < d) {
        acc += res.eigenvalues(k);
        ++k;
        if (acc / total >= variance_kept - 1e-12) break;
    }
    res.basis = vecs.leftCols(k);
    res.reduced.values = C * res.basis;
    res.reduced.geo = fs.geo;
    res.reduced.voxels = fs.voxels;
    for (Eigen::Index c = 0; c < k; ++c) res.reduced.channels.push_back("pc" + std::to_string(c + 1));
    return res;
}

FeatureStack pca_reduce(const FeatureStack& fs, double variance_kept) { return pca(fs, variance_kept).reduced; }

Volume abs_difference(const Volume& a, const Volume& b) {
    require_same_grid(a.geo, b.geo, "volume");
    Volume out(a.geo);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = std::abs(a.data[i] - b.data[i]);
    return out;
}

}  // namespace hablab
