#pragma once

#include <string>
#include <vector>

#include "hablab/volume.hpp"

namespace hablab {

// Mean, skewness and excess kurtosis over the (2r+1)^3 patch clipped at the borders.
FeatureStack local_moment_features(const Volume& v, const Mask& mask, int radius, const std::string& name = "v");
FeatureStack local_moment_features(const std::vector<const Volume*>& vols, const std::vector<std::string>& names,
                                   const Mask& mask, int radius);

// Number of in-bounds voxels in the patch around each row.
std::vector<int> patch_sizes(const Geometry& geo, const std::vector<std::size_t>& voxels, int radius);

struct PcaResult {
    FeatureStack reduced;
    Eigen::VectorXd eigenvalues;  // all, descending
    Eigen::MatrixXd basis;        // d x k
    Eigen::RowVectorXd center;
};

PcaResult pca(const FeatureStack& fs, double variance_kept);
FeatureStack pca_reduce(const FeatureStack& fs, double variance_kept);

Volume abs_difference(const Volume& a, const Volume& b);

}  // namespace hablab
