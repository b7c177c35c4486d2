#include "hablab/volume.hpp"

#include <cmath>

#include "hablab/error.hpp"

namespace hablab {

void Geometry::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1) fail(ErrorKind::data, "volume", "bad-dims");
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) fail(ErrorKind::data, "volume", "bad-spacing");
    }
}

void Volume::validate() const {
    geo.validate();
    if (data.size() != geo.size()) fail(ErrorKind::data, "volume", "size-mismatch");
    for (double v : data)
        if (!std::isfinite(v)) fail(ErrorKind::data, "volume", "non-finite-value");
}

std::size_t Mask::count() const {
    std::size_t n = 0;
    for (auto v : data) n += v != 0;
    return n;
}

std::vector<std::size_t> Mask::indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (data[i]) out.push_back(i);
    return out;
}

int LabelMap::max_label() const {
    int m = 0;
    for (int v : data) m = std::max(m, v);
    return m;
}

Mask LabelMap::select(int label) const {
    Mask m(geo);
    for (std::size_t i = 0; i < data.size(); ++i) m.data[i] = data[i] == label;
    return m;
}

std::vector<double> VolumeSeries::curve(std::size_t voxel) const {
    std::vector<double> c(frames);
    for (int t = 0; t < frames; ++t) c[t] = at(t, voxel);
    return c;
}

Volume VolumeSeries::frame(int t) const {
    Volume v(geo);
    std::copy(data.begin() + std::size_t(t) * geo.size(), data.begin() + std::size_t(t + 1) * geo.size(),
              v.data.begin());
    return v;
}

void VolumeSeries::validate() const {
    geo.validate();
    if (frames < 3) fail(ErrorKind::data, "volume", "too-few-frames");
    if (!(dt > 0.0)) fail(ErrorKind::data, "volume", "bad-dt");
    if (data.size() != geo.size() * std::size_t(frames)) fail(ErrorKind::data, "volume", "size-mismatch");
}

void FeatureStack::validate() const {
    if (!channels.empty() && Eigen::Index(channels.size()) != values.cols())
        fail(ErrorKind::data, "volume", "channel-count-mismatch");
    if (has_grid() && Eigen::Index(voxels.size()) != values.rows())
        fail(ErrorKind::data, "volume", "voxel-count-mismatch");
    if (!values.allFinite()) fail(ErrorKind::data, "volume", "non-finite-feature");
}

void require_same_grid(const Geometry& a, const Geometry& b, const std::string& module) {
    if (!a.same_grid(b)) fail(ErrorKind::data, module, "geometry-mismatch");
}

FeatureStack stack_volumes(const std::vector<const Volume*>& vols, const std::vector<std::string>& names,
                           const Mask& mask) {
    if (vols.empty()) fail(ErrorKind::usage, "volume", "no-channels");
    for (auto* v : vols) require_same_grid(v->geo, mask.geo, "volume");
    FeatureStack fs;
    fs.geo = mask.geo;
    fs.voxels = mask.indices();
    if (fs.voxels.empty()) fail(ErrorKind::data, "volume", "empty-roi");
    fs.values.resize(Eigen::Index(fs.voxels.size()), Eigen::Index(vols.size()));
    for (std::size_t c = 0; c < vols.size(); ++c)
        for (std::size_t r = 0; r < fs.voxels.size(); ++r) fs.values(r, c) = vols[c]->data[fs.voxels[r]];
    fs.channels = names;
    if (fs.channels.size() != vols.size()) {
        fs.channels.clear();
        for (std::size_t c = 0; c < vols.size(); ++c) fs.channels.push_back("ch" + std::to_string(c));
    }
    return fs;
}

LabelMap scatter_labels(const FeatureStack& fs, const std::vector<int>& labels) {
    if (!fs.has_grid()) fail(ErrorKind::usage, "volume", "no-grid");
    LabelMap out(fs.geo);
    for (std::size_t r = 0; r < fs.voxels.size(); ++r) out.data[fs.voxels[r]] = labels[r] + 1;
    return out;
}

}  // namespace hablab
