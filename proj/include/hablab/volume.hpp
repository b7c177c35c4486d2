#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hablab {

using Index3 = std::array<int, 3>;

struct Geometry {
    Index3 dims{1, 1, 1};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};

    std::size_t size() const { return std::size_t(dims[0]) * dims[1] * dims[2]; }
    std::size_t index(int x, int y, int z) const {
        return std::size_t(x) + std::size_t(dims[0]) * (std::size_t(y) + std::size_t(dims[1]) * z);
    }
    Index3 coords(std::size_t idx) const {
        int x = int(idx % dims[0]);
        std::size_t r = idx / dims[0];
        return {x, int(r % dims[1]), int(r / dims[1])};
    }
    bool inside(int x, int y, int z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
    }
    double voxel_volume_mm3() const { return spacing[0] * spacing[1] * spacing[2]; }
    bool is2d() const { return dims[2] == 1; }
    bool same_grid(const Geometry& o) const { return dims == o.dims && spacing == o.spacing; }
    void validate() const;
};

struct Volume {
    Geometry geo;
    std::vector<double> data;

    Volume() = default;
    explicit Volume(const Geometry& g, double fill = 0.0) : geo(g), data(g.size(), fill) {}

    double& operator()(int x, int y, int z) { return data[geo.index(x, y, z)]; }
    double operator()(int x, int y, int z) const { return data[geo.index(x, y, z)]; }
    std::size_t size() const { return data.size(); }
    void validate() const;
};

struct Mask {
    Geometry geo;
    std::vector<std::uint8_t> data;

    Mask() = default;
    explicit Mask(const Geometry& g, bool fill = false) : geo(g), data(g.size(), fill ? 1 : 0) {}

    bool operator()(int x, int y, int z) const { return data[geo.index(x, y, z)] != 0; }
    std::size_t size() const { return data.size(); }
    std::size_t count() const;
    bool empty() const { return count() == 0; }
    std::vector<std::size_t> indices() const;
};

// Integer labels, 0 = background.
struct LabelMap {
    Geometry geo;
    std::vector<int> data;

    LabelMap() = default;
    explicit LabelMap(const Geometry& g, int fill = 0) : geo(g), data(g.size(), fill) {}
    std::size_t size() const { return data.size(); }
    int max_label() const;
    Mask select(int label) const;
};

// T frames stored frame-major: frame t occupies [t*N, (t+1)*N).
struct VolumeSeries {
    Geometry geo;
    int frames = 0;
    double dt = 1.0;
    std::vector<double> data;

    VolumeSeries() = default;
    VolumeSeries(const Geometry& g, int t, double step) : geo(g), frames(t), dt(step), data(g.size() * t, 0.0) {}

    double& at(int t, std::size_t voxel) { return data[std::size_t(t) * geo.size() + voxel]; }
    double at(int t, std::size_t voxel) const { return data[std::size_t(t) * geo.size() + voxel]; }
    std::vector<double> curve(std::size_t voxel) const;
    Volume frame(int t) const;
    void validate() const;
};

// Rows are samples. When built from a grid, voxels[r] is the linear grid index of row r.
struct FeatureStack {
    Eigen::MatrixXd values;
    std::vector<std::string> channels;
    Geometry geo;
    std::vector<std::size_t> voxels;

    Eigen::Index samples() const { return values.rows(); }
    Eigen::Index dims() const { return values.cols(); }
    bool has_grid() const { return !voxels.empty(); }
    void validate() const;
};

FeatureStack stack_volumes(const std::vector<const Volume*>& vols, const std::vector<std::string>& names,
                           const Mask& mask);
LabelMap scatter_labels(const FeatureStack& fs, const std::vector<int>& labels);
void require_same_grid(const Geometry& a, const Geometry& b, const std::string& module);

}  // namespace hablab
