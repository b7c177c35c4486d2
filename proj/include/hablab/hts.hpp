#pragma once

#include <array>
#include <string>
#include <vector>

#include "hablab/neighborhood.hpp"
#include "hablab/volume.hpp"

namespace hablab {

enum Habitat { HAT = 1, LAT = 2, IPE = 3, VPE = 4 };
const char* habitat_name(int h);

struct HtsOptions {
    double et_band_mm = 10.0;
    double ipe_band_mm = 20.0;
    double coverage = 0.8;
    double min_frac = 0.10;
    int max_iter = 50;
    double tol = 1e-6;
    NeighborhoodMode neighborhood = NeighborhoodMode::full_grouped;
};

struct Stage1Result {
    Mask et_dsc, ed_dsc;
    std::vector<double> trace;
    std::vector<std::string> log;
    std::vector<std::string> flags;
};

struct HabitatMap {
    LabelMap labels;  // 0 background, 1 HAT, 2 LAT, 3 IPE, 4 VPE
    std::vector<std::string> log;
    std::vector<std::string> flags;
    std::vector<double> trace_et, trace_ed;
    bool has_flag(const std::string& f) const;
};

Stage1Result hts_stage1(const Volume& rcbv, const Volume& rcbf, const Mask& et, const Mask& edema,
                        const Mask& t1ce_enh, const HtsOptions& opt = {});

HabitatMap hts_stage2(const Volume& rcbv, const Volume& rcbf, const Stage1Result& stage1, const Mask& t1ce_enh,
                      const HtsOptions& opt = {});

struct HabitatMarker {
    bool empty = true;
    std::size_t voxels = 0;
    double rcbv_max = 0.0, rcbf_max = 0.0;
    double rcbv_median = 0.0, rcbf_median = 0.0;
    double rcbv_mad = 0.0, rcbf_mad = 0.0;
    double volume_cm3 = 0.0;
    double relative_volume = 0.0;  // over the intracranial mask
};

// Index 0 is HAT, 3 is VPE.
std::array<HabitatMarker, 4> habitat_markers(const HabitatMap& map, const Volume& rcbv, const Volume& rcbf,
                                             const Mask& intracranial);

}  // namespace hablab
