#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hablab/hts.hpp"
#include "hablab/perfusion.hpp"

namespace hablab {

struct InputPaths {
    std::string dsc, rcbv, rcbf;
    std::string brain_mask, et_mask, edema_mask, t1ce_enh_mask, reference_mask;
    std::vector<std::string> images;
    std::string mask;
    std::string segmentation, flair, t1ce, wm, gm, csf;
    std::string survival_csv;
};

struct SegmentSettings {
    std::string algorithm = "nlsvfmm_patch";
    int classes = 3;
    int max_iter = 100;
    double tol = 1e-6;
    int seed_candidates = 100;
    int seeds_kept = 10;
    std::string features = "intensity";  // or "moments"
    int moment_radius = 1;
    double pca_variance = 1.0;           // 1 keeps every component
    std::string neighborhood = "full_grouped";
    double hmrf_beta = 1.0;
};

struct LabelIdSettings {
    double tau = 0.8;
    double epsilon = 1e-3;
    double overlap_frac = 0.5;
    double min_prevalence = 0.01;
    int max_labels = 4;
};

struct StatsSettings {
    std::string time_column = "time";
    std::string event_column = "event";
    std::string marker_column = "marker";
    double alpha = 0.05;
};

struct PhantomSettings {
    std::string kind = "dsc";  // cluster, habitat, dsc
    std::array<int, 3> dims{0, 0, 0};  // 0 keeps the kind's default
    double spacing = 0.0;
    int classes = 7;
    double snr = 5.0;
    double noise_sd = 2.0;
    double heterogeneity = 0.08;
    int frames = 50;
    double leakage_k2 = 0.0;
};

struct PipelineConfig {
    std::uint64_t rng_seed = 0;
    int threads = 1;
    std::string base_dir;  // relative input paths resolve against this
    InputPaths inputs;
    PerfusionParams perfusion;
    HtsOptions hts;
    SegmentSettings segment;
    LabelIdSettings labelid;
    StatsSettings stats;
    PhantomSettings phantom;

    std::string resolve(const std::string& path) const;
    nlohmann::ordered_json to_json() const;   // canonical form, paths as given
    std::string hash() const;                 // FNV-1a 64 of the canonical dump, hex
};

// Unknown keys and out-of-range values are usage errors.
PipelineConfig parse_config(const nlohmann::json& j, const std::string& base_dir = {});
PipelineConfig load_config(const std::string& path);

// HABLAB_THREADS and HABLAB_INPUT_<KEY> (upper-case input key) override the config.
void apply_env_overrides(PipelineConfig& cfg);

}  // namespace hablab
