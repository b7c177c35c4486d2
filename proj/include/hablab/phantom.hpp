#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hablab/volume.hpp"

namespace hablab {

// Piecewise-constant K-class image on a Voronoi partition plus Gaussian noise.
struct ClusterPhantomSpec {
    Index3 dims{64, 64, 1};
    int classes = 7;
    int cells = 0;        // Voronoi cells; 0 = 2 * classes
    double snr = 5.0;     // mean class level / noise sd; <= 0 means noiseless
};

struct ClusterPhantom {
    Volume image;
    LabelMap truth;  // 1..K
    std::vector<double> levels;
    double sigma = 0.0;
};

ClusterPhantom make_cluster_phantom(const ClusterPhantomSpec& spec, std::uint64_t seed);

// Slab lesion: HAT | LAT | IPE | VPE stacked along x inside a brain box, normal tissue on both sides.
struct HabitatLayout {
    LabelMap truth;  // 0 outside lesion, 1 HAT, 2 LAT, 3 IPE, 4 VPE
    Mask brain, et, edema, t1ce_enh, reference;
};

HabitatLayout make_habitat_layout(const Geometry& geo, double slab_mm);

struct HabitatPhantomSpec {
    Index3 dims{72, 32, 10};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    double slab_mm = 12.0;
    std::array<double, 4> rcbv{6.0, 3.5, 2.0, 1.0};
    std::array<double, 4> rcbv_sd{0.5, 0.4, 0.3, 0.2};
    std::array<double, 4> rcbf{5.0, 4.5, 1.4, 1.0};
    std::array<double, 4> rcbf_sd{0.5, 0.4, 0.3, 0.2};
    double normal = 1.0, normal_sd = 0.2;
};

struct HabitatPhantom {
    HabitatLayout layout;
    Volume rcbv, rcbf;
};

HabitatPhantom make_habitat_phantom(const HabitatPhantomSpec& spec, std::uint64_t seed);

struct DscPhantomSpec {
    Index3 dims{36, 16, 4};
    std::array<double, 3> spacing{2.0, 2.0, 2.0};
    double slab_mm = 12.0;
    int frames = 50;
    double dt = 1.0;
    double te = 0.03;
    double s0 = 800.0;
    double noise_sd = 0.0;        // additive, signal units
    double cbf_normal = 0.01;     // 1/s
    double mtt = 4.0;             // s
    // Habitat CBV and CBF relative to normal tissue; habitat MTT = mtt * cbv / cbf.
    std::array<double, 4> habitat_cbv{6.0, 3.5, 2.0, 1.0};
    std::array<double, 4> habitat_cbf{5.0, 4.5, 1.4, 1.0};
    double heterogeneity = 0.0;   // relative sd of per-voxel CBV and CBF jitter
    double aif_peak = 40.0;       // 1/s
    double recirculation = 0.1;   // relative area of the second pass
    double leakage_k2 = 0.0;      // applied inside the enhancing mask
    int arterial_voxels = 12;
};

struct DscPhantom {
    HabitatLayout layout;
    VolumeSeries series;
    Volume true_cbv, true_cbf;
    Mask arteries;
    std::vector<double> aif;
};

DscPhantom make_dsc_phantom(const DscPhantomSpec& spec, std::uint64_t seed);

// Forward model pieces shared with tests.
std::vector<double> phantom_aif(int frames, double dt, double peak, double recirculation);
std::vector<double> forward_convolve(const std::vector<double>& aif, const std::vector<double>& residue, double cbf,
                                     double dt);

}  // namespace hablab
