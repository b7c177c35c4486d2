#include "hablab/neighborhood.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>

#include "hablab/error.hpp"

namespace hablab {

namespace {

Index3 negate(const Index3& o) { return {-o[0], -o[1], -o[2]}; }

bool canonical(const Index3& o) {
    for (int a = 2; a >= 0; --a)
        if (o[a] != 0) return o[a] > 0;
    return false;
}

}  // namespace

std::vector<Index3> cube_offsets(int radius, bool two_d) {
    std::vector<Index3> out;
    int rz = two_d ? 0 : radius;
    for (int z = -rz; z <= rz; ++z)
        for (int y = -radius; y <= radius; ++y)
            for (int x = -radius; x <= radius; ++x) out.push_back({x, y, z});
    return out;
}

int patch_overlap(const std::vector<Index3>& patch, const Index3& o) {
    int n = 0;
    for (const auto& k : patch) {
        Index3 q{k[0] - o[0], k[1] - o[1], k[2] - o[2]};
        if (std::find(patch.begin(), patch.end(), q) != patch.end()) ++n;
    }
    return n;
}

int NeighborhoodSystem::reach() const {
    int r = 0;
    for (const auto& cls : directions)
        for (const auto& o : cls)
            for (int a = 0; a < 3; ++a) r = std::max(r, std::abs(o[a]));
    return r;
}

void NeighborhoodSystem::validate() const {
    if (directions.empty()) fail(ErrorKind::usage, "volume", "no-directions");
    if (patch.empty()) fail(ErrorKind::usage, "volume", "empty-patch");
    for (const auto& cls : directions) {
        for (const auto& o : cls) {
            if (o == Index3{0, 0, 0}) fail(ErrorKind::usage, "volume", "zero-offset");
            if (std::find(cls.begin(), cls.end(), negate(o)) == cls.end())
                fail(ErrorKind::usage, "volume", "direction-not-symmetric");
        }
    }
}

NeighborhoodSystem NeighborhoodSystem::make(NeighborhoodMode mode, bool two_d, int patch_radius) {
    NeighborhoodSystem ns;
    ns.mode = mode;
    ns.patch = cube_offsets(patch_radius, two_d);
    for (const auto& o : cube_offsets(1, two_d)) {
        if (!canonical(o)) continue;
        int nonzero = (o[0] != 0) + (o[1] != 0) + (o[2] != 0);
        if (mode == NeighborhoodMode::orthogonal && nonzero != 1) continue;
        ns.directions.push_back({o, negate(o)});
    }
    return ns;
}

Lattice::Lattice(const FeatureStack& fs, const NeighborhoodSystem& ns) {
    if (!fs.has_grid()) fail(ErrorKind::usage, "svfmm", "no-grid", "spatial models need voxel coordinates");
    ns.validate();
    geo_ = fs.geo;
    rows_ = int(fs.voxels.size());
    num_dirs_ = ns.num_directions();
    grid_to_row_.assign(geo_.size(), -1);
    coords_.resize(rows_);
    for (int r = 0; r < rows_; ++r) {
        grid_to_row_[fs.voxels[r]] = r;
        coords_[r] = geo_.coords(fs.voxels[r]);
    }
    per_dir_.assign(num_dirs_, 0);
    start_.assign(rows_ + 1, 0);
    for (int i = 0; i < rows_; ++i) {
        start_[i] = int(dst_.size());
        const auto& c = coords_[i];
        for (int d = 0; d < num_dirs_; ++d) {
            for (const auto& o : ns.directions[d]) {
                int m = row_at(c[0] + o[0], c[1] + o[1], c[2] + o[2]);
                if (m < 0) continue;
                src_.push_back(i);
                dst_.push_back(m);
                dir_.push_back(d);
                off_.push_back(o);
                ++per_dir_[d];
            }
        }
    }
    start_[rows_] = int(dst_.size());
    rev_.assign(dst_.size(), -1);
    for (int e = 0; e < int(dst_.size()); ++e) {
        int m = dst_[e];
        Index3 back = negate(off_[e]);
        for (int f = start_[m]; f < start_[m + 1]; ++f)
            if (dst_[f] == src_[e] && off_[f] == back) {
                rev_[e] = f;
                break;
            }
    }
    int period = ns.reach() + 1;
    std::map<int, std::vector<int>> groups;
    for (int i = 0; i < rows_; ++i) {
        const auto& c = coords_[i];
        int key = (c[0] % period) + period * ((c[1] % period) + period * (c[2] % period));
        groups[key].push_back(i);
    }
    for (auto& kv : groups) colors_.push_back(std::move(kv.second));
}

int Lattice::row_at(int x, int y, int z) const {
    if (!geo_.inside(x, y, z)) return -1;
    return grid_to_row_[geo_.index(x, y, z)];
}

}  // namespace hablab
