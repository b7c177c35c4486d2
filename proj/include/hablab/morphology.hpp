#pragma once

#include "hablab/volume.hpp"

namespace hablab {

// Squared Euclidean distance in mm to the nearest seed voxel.
std::vector<double> squared_distance_mm(const Mask& seed);

Mask distance_band(const Mask& seed, double max_mm);

// Labels 1..C in raster order of first voxel; connectivity 6 or 26 (4/8 in 2-D).
LabelMap connected_components(const Mask& m, int connectivity = 26);

Mask erode(const Mask& m, int iterations = 1);
Mask dilate(const Mask& m, int iterations = 1);
Mask fill_holes(const Mask& m);
Mask mask_and(const Mask& a, const Mask& b);
Mask mask_or(const Mask& a, const Mask& b);
Mask mask_minus(const Mask& a, const Mask& b);

}  // namespace hablab
