#pragma once

#include <string>
#include <vector>

#include "hablab/volume.hpp"

namespace hablab {

enum class NeighborhoodMode { orthogonal, full_grouped };

struct NeighborhoodSystem {
    // Each direction class is closed under negation.
    std::vector<std::vector<Index3>> directions;
    std::vector<Index3> patch;
    NeighborhoodMode mode = NeighborhoodMode::full_grouped;

    int num_directions() const { return int(directions.size()); }
    int reach() const;
    void validate() const;

    // 2-D: 4-neighbourhood (D=2) or 8-neighbourhood (D=4); 3-D: 6 (D=3) or 26 (D=13).
    static NeighborhoodSystem make(NeighborhoodMode mode, bool two_d, int patch_radius = 1);
};

std::vector<Index3> cube_offsets(int radius, bool two_d);

// Number of offsets k in P with k - o also in P (shared voxels of two patches displaced by o).
int patch_overlap(const std::vector<Index3>& patch, const Index3& o);

// Sparse neighbour graph over the rows of a FeatureStack.
class Lattice {
public:
    Lattice() = default;
    Lattice(const FeatureStack& fs, const NeighborhoodSystem& ns);

    int rows() const { return rows_; }
    int directions() const { return num_dirs_; }
    int edges() const { return int(dst_.size()); }

    // Directed edges leaving row i occupy [begin(i), end(i)).
    int begin(int i) const { return start_[i]; }
    int end(int i) const { return start_[i + 1]; }
    int src(int e) const { return src_[e]; }
    int dst(int e) const { return dst_[e]; }
    int dir(int e) const { return dir_[e]; }
    const Index3& offset(int e) const { return off_[e]; }
    int reverse(int e) const { return rev_[e]; }
    int edges_in_direction(int d) const { return per_dir_[d]; }

    const Index3& coords(int i) const { return coords_[i]; }
    // Row of the grid voxel at (x,y,z), or -1 if outside the sample set.
    int row_at(int x, int y, int z) const;
    const Geometry& geometry() const { return geo_; }

    // Rows grouped so that no two rows of a group are neighbours.
    const std::vector<std::vector<int>>& colors() const { return colors_; }

private:
    int rows_ = 0;
    int num_dirs_ = 0;
    Geometry geo_;
    std::vector<int> start_, src_, dst_, dir_, rev_, per_dir_;
    std::vector<Index3> off_, coords_;
    std::vector<int> grid_to_row_;
    std::vector<std::vector<int>> colors_;
};

}  // namespace hablab
