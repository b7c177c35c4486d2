#include "hablab/phantom.hpp"

#include <cmath>
#include <limits>

#include "hablab/error.hpp"
#include "hablab/perfusion.hpp"
#include "hablab/rng.hpp"

namespace hablab {

ClusterPhantom make_cluster_phantom(const ClusterPhantomSpec& spec, std::uint64_t seed) {
    if (spec.classes < 1) fail(ErrorKind::usage, "phantom", "bad-classes");
    Geometry g;
    g.dims = spec.dims;
    g.validate();
    Rng rng(seed);
    int cells = spec.cells > 0 ? spec.cells : 2 * spec.classes;
    std::vector<std::array<double, 3>> sites(cells);
    for (auto& s : sites)
        for (int a = 0; a < 3; ++a) s[a] = rng.uniform(0.0, double(g.dims[a]));
    // Shuffle class assignment so that every class owns at least one cell.
    std::vector<int> cls(cells);
    for (int c = 0; c < cells; ++c) cls[c] = c % spec.classes;
    for (int c = cells - 1; c > 0; --c) std::swap(cls[c], cls[rng.below(std::size_t(c) + 1)]);

    ClusterPhantom ph;
    ph.image = Volume(g);
    ph.truth = LabelMap(g);
    for (int k = 0; k < spec.classes; ++k) ph.levels.push_back(k + 1.0);
    double mean_level = 0.5 * (spec.classes + 1.0);
    ph.sigma = spec.snr > 0.0 ? mean_level / spec.snr : 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        auto c = g.coords(i);
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int s = 0; s < cells; ++s) {
            double d = 0.0;
            for (int a = 0; a < 3; ++a) d += (c[a] + 0.5 - sites[s][a]) * (c[a] + 0.5 - sites[s][a]);
            if (d < bd) {
                bd = d;
                best = s;
            }
        }
        int k = cls[best];
        ph.truth.data[i] = k + 1;
        ph.image.data[i] = ph.levels[k] + (ph.sigma > 0.0 ? rng.normal(0.0, ph.sigma) : 0.0);
    }
    return ph;
}

HabitatLayout make_habitat_layout(const Geometry& geo, double slab_mm) {
    geo.validate();
    HabitatLayout L;
    L.truth = LabelMap(geo);
    L.brain = Mask(geo, true);
    L.et = Mask(geo);
    L.edema = Mask(geo);
    L.reference = Mask(geo);
    const double sx = geo.spacing[0];
    int slab = std::max(1, int(std::lround(slab_mm / sx)));
    int x0 = std::max(1, geo.dims[0] / 12);
    int y0 = std::max(0, geo.dims[1] / 8), y1 = geo.dims[1] - y0;
    int z0 = geo.dims[2] > 2 ? 1 : 0, z1 = geo.dims[2] > 2 ? geo.dims[2] - 1 : geo.dims[2];
    for (int z = 0; z < geo.dims[2]; ++z)
        for (int y = 0; y < geo.dims[1]; ++y)
            for (int x = 0; x < geo.dims[0]; ++x) {
                auto i = geo.index(x, y, z);
                bool in_box = y >= y0 && y < y1 && z >= z0 && z < z1;
                int h = (x - x0) / slab;
                if (in_box && x >= x0 && h < 4) {
                    L.truth.data[i] = h + 1;
                    if (h < 2) {
                        L.et.data[i] = 1;
                    } else {
                        L.edema.data[i] = 1;
                    }
                } else if (x < x0 || x >= x0 + 4 * slab + 2) {
                    L.reference.data[i] = 1;
                }
            }
    L.t1ce_enh = L.et;
    return L;
}

HabitatPhantom make_habitat_phantom(const HabitatPhantomSpec& spec, std::uint64_t seed) {
    Geometry g;
    g.dims = spec.dims;
    g.spacing = spec.spacing;
    HabitatPhantom ph;
    ph.layout = make_habitat_layout(g, spec.slab_mm);
    ph.rcbv = Volume(g);
    ph.rcbf = Volume(g);
    Rng rng(seed);
    for (std::size_t i = 0; i < g.size(); ++i) {
        int h = ph.layout.truth.data[i];
        if (h == 0) {
            ph.rcbv.data[i] = std::max(0.0, rng.normal(spec.normal, spec.normal_sd));
            ph.rcbf.data[i] = std::max(0.0, rng.normal(spec.normal, spec.normal_sd));
        } else {
            ph.rcbv.data[i] = std::max(0.0, rng.normal(spec.rcbv[h - 1], spec.rcbv_sd[h - 1]));
            ph.rcbf.data[i] = std::max(0.0, rng.normal(spec.rcbf[h - 1], spec.rcbf_sd[h - 1]));
        }
    }
    return ph;
}

std::vector<double> phantom_aif(int frames, double dt, double peak, double recirculation) {
    // First pass: alpha 3, beta 1.5 s, arrival 8 s; recirculation: wider, later bolus.
    const double a = 3.0, b = 1.5, t0 = 8.0;
    const double first_peak = std::pow(a * b, a) * std::exp(-a);
    std::vector<double> out(frames);
    for (int k = 0; k < frames; ++k) {
        double t = k * dt;
        double v = gamma_variate(t, peak / first_peak, t0, a, b);
        if (recirculation > 0.0) {
            // Same area scaling as the first pass times `recirculation`, spread with beta 3 s.
            double area1 = peak / first_peak * std::tgamma(a + 1.0) * std::pow(b, a + 1.0);
            double b2 = 3.0;
            double K2 = recirculation * area1 / (std::tgamma(a + 1.0) * std::pow(b2, a + 1.0));
            v += gamma_variate(t, K2, t0 + 12.0, a, b2);
        }
        out[k] = v;
    }
    return out;
}

std::vector<double> forward_convolve(const std::vector<double>& aif, const std::vector<double>& residue, double cbf,
                                     double dt) {
    std::vector<double> out(aif.size(), 0.0);
    for (std::size_t k = 0; k < aif.size(); ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j <= k && j < residue.size(); ++j) s += aif[k - j] * residue[j];
        out[k] = cbf * dt * s;
    }
    return out;
}

DscPhantom make_dsc_phantom(const DscPhantomSpec& spec, std::uint64_t seed) {
    Geometry g;
    g.dims = spec.dims;
    g.spacing = spec.spacing;
    DscPhantom ph;
    ph.layout = make_habitat_layout(g, spec.slab_mm);
    ph.series = VolumeSeries(g, spec.frames, spec.dt);
    ph.true_cbv = Volume(g);
    ph.true_cbf = Volume(g);
    ph.arteries = Mask(g);
    ph.aif = phantom_aif(spec.frames, spec.dt, spec.aif_peak, spec.recirculation);
    auto t = time_axis(spec.frames, spec.dt);
    auto tissue_curve = [&](double cbf_rel, double cbv_rel) {
        double mtt = spec.mtt * cbv_rel / cbf_rel;
        std::vector<double> residue(spec.frames);
        for (int k = 0; k < spec.frames; ++k) residue[k] = std::exp(-k * spec.dt / mtt);
        return forward_convolve(ph.aif, residue, spec.cbf_normal * cbf_rel, spec.dt);
    };
    auto leak = cumulative_trapezoid(t, tissue_curve(1.0, 1.0));

    // Arterial voxels along a line in the normal tissue on the low-x side.
    int placed = 0;
    for (int y = 1; y < g.dims[1] - 1 && placed < spec.arterial_voxels; ++y)
        for (int z = 0; z < g.dims[2] && placed < spec.arterial_voxels; ++z) {
            auto i = g.index(0, y, z);
            if (!ph.layout.reference.data[i]) continue;
            ph.arteries.data[i] = 1;
            ++placed;
        }
    Rng rng(seed);
    for (std::size_t i = 0; i < g.size(); ++i) {
        int h = ph.layout.truth.data[i];
        std::vector<double> c;
        if (ph.arteries.data[i]) {
            c = ph.aif;
        } else {
            double cbf_rel = h == 0 ? 1.0 : spec.habitat_cbf[h - 1];
            double cbv_rel = h == 0 ? 1.0 : spec.habitat_cbv[h - 1];
            if (spec.heterogeneity > 0.0) {
                cbf_rel *= std::max(0.2, 1.0 + spec.heterogeneity * rng.normal());
                cbv_rel *= std::max(0.2, 1.0 + spec.heterogeneity * rng.normal());
            }
            c = tissue_curve(cbf_rel, cbv_rel);
            ph.true_cbf.data[i] = spec.cbf_normal * cbf_rel;
            ph.true_cbv.data[i] = spec.cbf_normal * spec.mtt * cbv_rel;
            if (spec.leakage_k2 != 0.0 && ph.layout.t1ce_enh.data[i])
                for (int k = 0; k < spec.frames; ++k) c[k] -= spec.leakage_k2 * leak[k];
        }
        for (int k = 0; k < spec.frames; ++k) {
            double s = spec.s0 * std::exp(-spec.te * c[k]);
            if (spec.noise_sd > 0.0) s += rng.normal(0.0, spec.noise_sd);
            ph.series.at(k, i) = s;
        }
    }
    return ph;
}

}  // namespace hablab
