#include "hablab/hts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hablab/clustering.hpp"
#include "hablab/descriptive.hpp"
#include "hablab/error.hpp"
#include "hablab/morphology.hpp"
#include "hablab/svfmm.hpp"

namespace hablab {

namespace {

// Two-class split of a ROI into high and low perfusion.
struct TwoClass {
    std::vector<std::size_t> voxels;
    std::vector<int> high;
    std::vector<double> p_high;
    std::vector<double> trace;
    bool fallback = false;
};

void median_split(const Volume& rcbv, TwoClass& out) {
    std::vector<double> v;
    for (auto i : out.voxels) v.push_back(rcbv.data[i]);
    double med = median(v);
    for (std::size_t r = 0; r < out.voxels.size(); ++r) {
        out.high[r] = v[r] > med ? 1 : 0;
        out.p_high[r] = out.high[r];
    }
    out.fallback = true;
}

TwoClass two_class(const Volume& rcbv, const Volume& rcbf, const Mask& roi, const HtsOptions& opt) {
    TwoClass out;
    out.voxels = roi.indices();
    const std::size_t n = out.voxels.size();
    out.high.assign(n, 0);
    out.p_high.assign(n, 0.0);
    if (n < 4) {
        median_split(rcbv, out);
        return out;
    }
    FeatureStack fs = stack_volumes({&rcbv, &rcbf}, {"rcbv", "rcbf"}, roi);
    Eigen::MatrixXd& X = fs.values;
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        double mu = X.col(c).mean();
        double sd = std::sqrt((X.col(c).array() - mu).square().mean());
        X.col(c).array() -= mu;
        if (sd > 0.0) X.col(c) /= sd;
    }
    Eigen::MatrixXd seeds(2, X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        std::vector<double> col(X.col(c).data(), X.col(c).data() + n);
        seeds(0, c) = percentile(col, 0.05);
        seeds(1, c) = percentile(col, 0.95);
    }
    if ((seeds.row(0) - seeds.row(1)).norm() == 0.0) {
        median_split(rcbv, out);
        return out;
    }
    KMeansResult km = kmeans(X, seeds, 100);
    if (std::count(km.labels.begin(), km.labels.end(), 0) == 0 ||
        std::count(km.labels.begin(), km.labels.end(), 1) == 0) {
        median_split(rcbv, out);
        return out;
    }
    auto init = components_from_labels(X, km.labels, 2);
    auto ns = NeighborhoodSystem::make(opt.neighborhood, fs.geo.is2d(), 1);
    SvfmmOptions so;
    so.max_iter = opt.max_iter;
    so.tol = opt.tol;
    SvfmmResult fit = dcm_svfmm_fit(fs, ns, init, so);
    out.trace = fit.trace;
    const auto& m0 = fit.components[0].mean;
    const auto& m1 = fit.components[1].mean;
    int hi = (m1(0) > m0(0) || (m1(0) == m0(0) && m1(1) > m0(1))) ? 1 : 0;
    auto lab = posterior_segment(fit);
    std::size_t nh = 0;
    for (std::size_t r = 0; r < n; ++r) {
        out.high[r] = lab[r] == hi ? 1 : 0;
        out.p_high[r] = fit.resp(Eigen::Index(r), hi);
        nh += out.high[r];
    }
    if (nh == 0 || nh == n) median_split(rcbv, out);
    return out;
}

std::string count_msg(const std::string& what, std::size_t n) { return what + ": " + std::to_string(n); }

std::vector<std::size_t> face_neighbors(const Geometry& geo, std::size_t idx) {
    std::vector<std::size_t> out;
    Index3 c = geo.coords(idx);
    static const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (const auto& o : off) {
        int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
        if (geo.inside(x, y, z)) out.push_back(geo.index(x, y, z));
    }
    return out;
}

// Grows habitat h from its sibling s until h holds at least floor voxels.
void enforce_min_size(LabelMap& lab, const Volume& rcbv, int h, int s, bool h_is_high, std::size_t floor,
                      std::vector<std::string>& log, std::vector<std::string>& flags) {
    auto count = [&](int l) { return std::size_t(std::count(lab.data.begin(), lab.data.end(), l)); };
    std::size_t nh = count(h), ns = count(s);
    if (nh == 0) {
        log.push_back(std::string(habitat_name(h)) + " vanished");
        return;
    }
    if (nh >= floor) return;
    std::size_t moved = 0;
    while (nh < floor && ns > floor) {
        std::vector<std::size_t> boundary;
        for (std::size_t i = 0; i < lab.size(); ++i) {
            if (lab.data[i] != s) continue;
            for (auto j : face_neighbors(lab.geo, i))
                if (lab.data[j] == h) {
                    boundary.push_back(i);
                    break;
                }
        }
        if (boundary.empty()) break;
        std::stable_sort(boundary.begin(), boundary.end(), [&](std::size_t a, std::size_t b) {
            return h_is_high ? rcbv.data[a] > rcbv.data[b] : rcbv.data[a] < rcbv.data[b];
        });
        for (auto i : boundary) {
            if (nh >= floor || ns <= floor) break;
            lab.data[i] = h;
            ++nh;
            --ns;
            ++moved;
        }
    }
    log.push_back(count_msg(std::string("min-size repair moved to ") + habitat_name(h), moved));
    if (nh < floor) {
        log.push_back(std::string(habitat_name(h)) + " below minimum size after repair");
        if (std::find(flags.begin(), flags.end(), "min-size-unmet") == flags.end()) flags.push_back("min-size-unmet");
    }
}

}  // namespace

const char* habitat_name(int h) {
    switch (h) {
        case HAT: return "HAT";
        case LAT: return "LAT";
        case IPE: return "IPE";
        case VPE: return "VPE";
        default: return "background";
    }
}

bool HabitatMap::has_flag(const std::string& f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
}

Stage1Result hts_stage1(const Volume& rcbv, const Volume& rcbf, const Mask& et, const Mask& edema,
                        const Mask& t1ce_enh, const HtsOptions& opt) {
    require_same_grid(rcbv.geo, rcbf.geo, "hts");
    require_same_grid(rcbv.geo, et.geo, "hts");
    require_same_grid(rcbv.geo, edema.geo, "hts");
    require_same_grid(rcbv.geo, t1ce_enh.geo, "hts");
    if (et.empty()) fail(ErrorKind::data, "hts", "empty-et-mask");
    if (t1ce_enh.empty()) fail(ErrorKind::data, "hts", "empty-enhancing-mask");
    Stage1Result res;
    Mask ed = mask_minus(edema, et);
    if (ed.count() != edema.count()) res.log.push_back(count_msg("edema voxels removed as overlapping ET", edema.count() - ed.count()));
    if (ed.empty()) fail(ErrorKind::data, "hts", "empty-edema-mask");
    Mask lesion = mask_or(et, ed);

    TwoClass tc = two_class(rcbv, rcbf, lesion, opt);
    res.trace = tc.trace;
    if (tc.fallback) {
        res.flags.push_back("fallback-median-split");
        res.log.push_back("stage 1 clustering collapsed, median split used");
    }
    std::vector<double> p_high(lesion.size(), 0.0);
    res.et_dsc = Mask(lesion.geo);
    for (std::size_t r = 0; r < tc.voxels.size(); ++r) {
        p_high[tc.voxels[r]] = tc.p_high[r];
        res.et_dsc.data[tc.voxels[r]] = std::uint8_t(tc.high[r]);
    }

    Mask band = distance_band(t1ce_enh, opt.et_band_mm);
    Mask clipped = mask_and(res.et_dsc, band);
    if (clipped.count() != res.et_dsc.count())
        res.log.push_back(count_msg("ET_DSC voxels outside the enhancing band", res.et_dsc.count() - clipped.count()));
    res.et_dsc = clipped;

    const std::size_t n_et = et.count();
    const std::size_t need = std::size_t(std::ceil(opt.coverage * double(n_et) - 1e-9));
    std::size_t covered = mask_and(res.et_dsc, et).count();
    if (covered < need) {
        std::vector<std::size_t> cand;
        for (auto i : et.indices())
            if (!res.et_dsc.data[i]) cand.push_back(i);
        std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return p_high[a] > p_high[b]; });
        std::size_t added = 0;
        for (auto i : cand) {
            if (covered >= need) break;
            res.et_dsc.data[i] = 1;
            ++covered;
            ++added;
        }
        res.log.push_back(count_msg("ET coverage repair added", added));
    }
    if (res.et_dsc.empty()) fail(ErrorKind::data, "hts", "no-et-dsc");
    res.ed_dsc = mask_minus(lesion, res.et_dsc);
    res.log.push_back(count_msg("ET_DSC voxels", res.et_dsc.count()));
    res.log.push_back(count_msg("ED_DSC voxels", res.ed_dsc.count()));
    return res;
}

HabitatMap hts_stage2(const Volume& rcbv, const Volume& rcbf, const Stage1Result& stage1, const Mask& t1ce_enh,
                      const HtsOptions& opt) {
    require_same_grid(rcbv.geo, stage1.et_dsc.geo, "hts");
    require_same_grid(rcbv.geo, stage1.ed_dsc.geo, "hts");
    if (stage1.et_dsc.empty()) fail(ErrorKind::data, "hts", "no-et-dsc");
    HabitatMap map;
    map.log = stage1.log;
    map.flags = stage1.flags;
    map.labels = LabelMap(rcbv.geo);
    auto assign = [&](const Mask& roi, int high, int low, std::vector<double>& trace) {
        if (roi.empty()) {
            map.log.push_back(std::string("empty ROI for ") + habitat_name(high) + "/" + habitat_name(low));
            return;
        }
        TwoClass tc = two_class(rcbv, rcbf, roi, opt);
        trace = tc.trace;
        if (tc.fallback) {
            if (!map.has_flag("fallback-median-split")) map.flags.push_back("fallback-median-split");
            map.log.push_back(std::string(habitat_name(high)) + "/" + habitat_name(low) + " clustering collapsed, median split used");
        }
        for (std::size_t r = 0; r < tc.voxels.size(); ++r) map.labels.data[tc.voxels[r]] = tc.high[r] ? high : low;
    };
    assign(stage1.et_dsc, HAT, LAT, map.trace_et);
    assign(stage1.ed_dsc, IPE, VPE, map.trace_ed);

    const std::size_t lesion = stage1.et_dsc.count() + stage1.ed_dsc.count();
    const std::size_t floor = std::size_t(std::ceil(opt.min_frac * double(lesion) - 1e-9));
    enforce_min_size(map.labels, rcbv, HAT, LAT, true, floor, map.log, map.flags);
    enforce_min_size(map.labels, rcbv, LAT, HAT, false, floor, map.log, map.flags);
    enforce_min_size(map.labels, rcbv, IPE, VPE, true, floor, map.log, map.flags);
    enforce_min_size(map.labels, rcbv, VPE, IPE, false, floor, map.log, map.flags);

    Mask band = distance_band(t1ce_enh, opt.ipe_band_mm);
    std::size_t relabeled = 0;
    for (std::size_t i = 0; i < map.labels.size(); ++i)
        if (map.labels.data[i] == IPE && !band.data[i]) {
            map.labels.data[i] = VPE;
            ++relabeled;
        }
    if (relabeled > 0) map.log.push_back(count_msg("IPE voxels outside the peritumoral band relabeled VPE", relabeled));
    return map;
}

std::array<HabitatMarker, 4> habitat_markers(const HabitatMap& map, const Volume& rcbv, const Volume& rcbf,
                                             const Mask& intracranial) {
    require_same_grid(map.labels.geo, rcbv.geo, "hts");
    require_same_grid(map.labels.geo, rcbf.geo, "hts");
    require_same_grid(map.labels.geo, intracranial.geo, "hts");
    std::array<HabitatMarker, 4> out;
    const double total = double(intracranial.count());
    for (int h = HAT; h <= VPE; ++h) {
        std::vector<double> v, f;
        for (std::size_t i = 0; i < map.labels.size(); ++i)
            if (map.labels.data[i] == h) {
                v.push_back(rcbv.data[i]);
                f.push_back(rcbf.data[i]);
            }
        HabitatMarker& m = out[h - 1];
        m.voxels = v.size();
        if (v.empty()) continue;
        m.empty = false;
        m.rcbv_max = percentile(v, 0.95);
        m.rcbf_max = percentile(f, 0.95);
        m.rcbv_median = median(v);
        m.rcbf_median = median(f);
        m.rcbv_mad = mad(v);
        m.rcbf_mad = mad(f);
        m.volume_cm3 = double(v.size()) * map.labels.geo.voxel_volume_mm3() / 1000.0;
        m.relative_volume = total > 0.0 ? double(v.size()) / total : 0.0;
    }
    return out;
}

}  // namespace hablab
