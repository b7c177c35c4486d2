#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hablab/volume.hpp"

namespace hablab {

struct TissueProbabilityMaps {
    Volume wm, gm, csf;
    void validate() const;  // same grid, values in [0, 1]
};

struct RoughLesion {
    Mask mask;
    bool empty = true;
};

// Brain rim used to discard border artefacts: brain minus its 2-voxel erosion, dilated by one.
Mask perimeter_band(const Mask& brain);

RoughLesion lesion_rough_mask(const Volume& flair, const Volume& t1ce, const Mask& brain);

TissueProbabilityMaps correct_tissue_maps(const TissueProbabilityMaps& maps, const Mask& lesion, double epsilon = 1e-3);

struct LabelTissueScore {
    std::vector<int> labels;                 // distinct nonzero labels, ascending
    Eigen::MatrixXd p;                       // labels x 3 (WM, GM, CSF), columns sum to 1
    std::vector<std::vector<int>> sorted;    // per tissue, labels by descending p
    std::vector<std::vector<double>> cumulative;
    std::vector<std::vector<int>> survivors; // per tissue, labels strictly after the tau crossing
    std::vector<int> pathological;           // intersection over tissues, ascending
};

LabelTissueScore pathological_labels(const LabelMap& seg, const TissueProbabilityMaps& maps, double tau = 0.8);

LabelMap remove_spurious(const LabelMap& seg, const std::vector<int>& pathological, const Mask& brain,
                         double overlap_frac = 0.5, double min_prevalence = 0.01);

struct MergeResult {
    LabelMap labels;
    std::vector<int> input_labels;
    Eigen::MatrixXd js;                      // pairwise divergence between input labels
    std::vector<double> heights;             // UPGMA merge heights, non-decreasing
    std::vector<std::vector<int>> groups;    // input labels per output label 1..G
};

MergeResult merge_similar_labels(const LabelMap& seg, const FeatureStack& fs, int max_labels = 4);

// Average-link clustering of a symmetric distance matrix. Returns the merge heights and,
// for a requested cluster count, the group index of each item.
struct Dendrogram {
    std::vector<double> heights;
    std::vector<std::pair<int, int>> merges;  // cluster ids; new cluster ids continue after the n leaves
    std::vector<int> cut(int clusters) const;
    int leaves = 0;
};

Dendrogram upgma(const Eigen::MatrixXd& dist);

// Number of clusters at the largest gap between consecutive merge heights, with 0 below the first
// merge and 1 above the last, capped to max_clusters.
int choose_cluster_count(const std::vector<double>& heights, int max_clusters);

}  // namespace hablab
