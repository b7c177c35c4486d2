#include "hablab/labelid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "hablab/density.hpp"
#include "hablab/descriptive.hpp"
#include "hablab/error.hpp"
#include "hablab/morphology.hpp"

namespace hablab {

void TissueProbabilityMaps::validate() const {
    require_same_grid(wm.geo, gm.geo, "labelid");
    require_same_grid(wm.geo, csf.geo, "labelid");
    for (const Volume* v : {&wm, &gm, &csf}) {
        if (v->data.size() != v->geo.size()) fail(ErrorKind::data, "labelid", "map-size-mismatch");
        for (double x : v->data)
            if (!(x >= 0.0 && x <= 1.0)) fail(ErrorKind::data, "labelid", "probability-out-of-range");
    }
}

Mask perimeter_band(const Mask& brain) { return mask_and(dilate(mask_minus(brain, erode(brain, 2)), 1), brain); }

RoughLesion lesion_rough_mask(const Volume& flair, const Volume& t1ce, const Mask& brain) {
    require_same_grid(flair.geo, t1ce.geo, "labelid");
    require_same_grid(flair.geo, brain.geo, "labelid");
    RoughLesion out;
    out.mask = Mask(brain.geo);
    auto idx = brain.indices();
    if (idx.empty()) return out;
    Mask raw(brain.geo);
    for (const Volume* v : {&flair, &t1ce}) {
        std::vector<double> vals;
        for (auto i : idx) vals.push_back(v->data[i]);
        double thr = median(vals) + stddev(vals);
        for (auto i : idx)
            if (v->data[i] > thr) raw.data[i] = 1;
    }
    out.mask = mask_and(mask_minus(fill_holes(raw), perimeter_band(brain)), brain);
    out.empty = out.mask.empty();
    return out;
}

TissueProbabilityMaps correct_tissue_maps(const TissueProbabilityMaps& maps, const Mask& lesion, double epsilon) {
    maps.validate();
    require_same_grid(maps.wm.geo, lesion.geo, "labelid");
    if (!(epsilon >= 0.0 && epsilon < 1.0)) fail(ErrorKind::usage, "labelid", "bad-epsilon");
    TissueProbabilityMaps out = maps;
    for (std::size_t i = 0; i < lesion.size(); ++i)
        if (lesion.data[i]) out.wm.data[i] = out.gm.data[i] = out.csf.data[i] = epsilon;
    return out;
}

LabelTissueScore pathological_labels(const LabelMap& seg, const TissueProbabilityMaps& maps, double tau) {
    maps.validate();
    require_same_grid(seg.geo, maps.wm.geo, "labelid");
    LabelTissueScore s;
    std::map<int, int> row;
    for (int l : seg.data)
        if (l > 0) row.emplace(l, 0);
    if (row.empty()) fail(ErrorKind::data, "labelid", "empty-segmentation");
    for (auto& [l, r] : row) {
        r = int(s.labels.size());
        s.labels.push_back(l);
    }
    const int L = int(s.labels.size());
    s.p = Eigen::MatrixXd::Zero(L, 3);
    const Volume* tissue[3] = {&maps.wm, &maps.gm, &maps.csf};
    for (std::size_t i = 0; i < seg.size(); ++i) {
        if (seg.data[i] <= 0) continue;
        int r = row[seg.data[i]];
        for (int t = 0; t < 3; ++t) s.p(r, t) += tissue[t]->data[i];
    }
    for (int t = 0; t < 3; ++t) {
        double tot = s.p.col(t).sum();
        if (tot > 0.0) s.p.col(t) /= tot;
    }
    s.sorted.resize(3);
    s.cumulative.resize(3);
    s.survivors.resize(3);
    for (int t = 0; t < 3; ++t) {
        std::vector<int> ord(L);
        std::iota(ord.begin(), ord.end(), 0);
        std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return s.p(a, t) > s.p(b, t); });
        double cum = 0.0;
        bool crossed = false;
        for (int r : ord) {
            s.sorted[t].push_back(s.labels[r]);
            if (crossed) s.survivors[t].push_back(s.labels[r]);
            cum += s.p(r, t);
            s.cumulative[t].push_back(cum);
            if (cum > tau) crossed = true;
        }
        std::sort(s.survivors[t].begin(), s.survivors[t].end());
    }
    std::vector<int> z = s.survivors[0], tmp;
    for (int t = 1; t < 3; ++t) {
        tmp.clear();
        std::set_intersection(z.begin(), z.end(), s.survivors[t].begin(), s.survivors[t].end(), std::back_inserter(tmp));
        z = tmp;
    }
    s.pathological = z;
    return s;
}

LabelMap remove_spurious(const LabelMap& seg, const std::vector<int>& pathological, const Mask& brain,
                         double overlap_frac, double min_prevalence) {
    require_same_grid(seg.geo, brain.geo, "labelid");
    LabelMap out(seg.geo);
    for (std::size_t i = 0; i < seg.size(); ++i)
        if (std::find(pathological.begin(), pathological.end(), seg.data[i]) != pathological.end())
            out.data[i] = seg.data[i];
    Mask band = perimeter_band(brain);
    for (int l : pathological) {
        LabelMap cc = connected_components(out.select(l));
        int C = cc.max_label();
        std::vector<std::size_t> size(C + 1, 0), inside(C + 1, 0);
        for (std::size_t i = 0; i < cc.size(); ++i) {
            int c = cc.data[i];
            if (c == 0) continue;
            ++size[c];
            if (band.data[i]) ++inside[c];
        }
        for (std::size_t i = 0; i < cc.size(); ++i) {
            int c = cc.data[i];
            if (c > 0 && double(inside[c]) > overlap_frac * double(size[c])) out.data[i] = 0;
        }
    }
    std::map<int, std::size_t> count;
    std::size_t total = 0;
    for (int l : out.data)
        if (l > 0) {
            ++count[l];
            ++total;
        }
    for (auto& [l, n] : count)
        if (double(n) < min_prevalence * double(total))
            for (int& v : out.data)
                if (v == l) v = 0;
    bool any = std::any_of(out.data.begin(), out.data.end(), [](int v) { return v > 0; });
    if (!any) fail(ErrorKind::data, "labelid", "no-pathological-tissue");
    return out;
}

Dendrogram upgma(const Eigen::MatrixXd& dist) {
    const int n = int(dist.rows());
    if (dist.cols() != n) fail(ErrorKind::usage, "labelid", "distance-not-square");
    Dendrogram dg;
    dg.leaves = n;
    std::vector<int> id(n), size(n, 1);
    std::iota(id.begin(), id.end(), 0);
    std::vector<bool> alive(n, true);
    Eigen::MatrixXd d = dist;
    for (int step = 0; step + 1 < n; ++step) {
        int a = -1, b = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < n; ++i) {
            if (!alive[i]) continue;
            for (int j = i + 1; j < n; ++j)
                if (alive[j] && d(i, j) < best) {
                    best = d(i, j);
                    a = i;
                    b = j;
                }
        }
        dg.heights.push_back(best);
        dg.merges.push_back({id[a], id[b]});
        for (int k = 0; k < n; ++k) {
            if (!alive[k] || k == a || k == b) continue;
            double v = (size[a] * d(a, k) + size[b] * d(b, k)) / double(size[a] + size[b]);
            d(a, k) = d(k, a) = v;
        }
        size[a] += size[b];
        alive[b] = false;
        id[a] = n + step;
    }
    return dg;
}

std::vector<int> Dendrogram::cut(int clusters) const {
    const int n = leaves;
    clusters = std::clamp(clusters, 1, std::max(1, n));
    std::vector<int> parent(2 * n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (int k = 0; k < n - clusters; ++k) {
        parent[find(merges[k].first)] = n + k;
        parent[find(merges[k].second)] = n + k;
    }
    std::vector<int> out(n);
    std::map<int, int> group;
    for (int i = 0; i < n; ++i) {
        int r = find(i);
        auto it = group.emplace(r, int(group.size())).first;
        out[i] = it->second;
    }
    return out;
}

int choose_cluster_count(const std::vector<double>& heights, int max_clusters) {
    const int L = int(heights.size()) + 1;
    if (L == 1) return 1;
    int best_k = 0;
    double best_gap = -1.0;
    for (int k = 0; k < L; ++k) {
        double lo = k == 0 ? 0.0 : heights[k - 1];
        double hi = k == L - 1 ? 1.0 : heights[k];
        if (hi - lo > best_gap) {
            best_gap = hi - lo;
            best_k = k;
        }
    }
    int clusters = L - best_k;
    return std::min(clusters, std::max(1, max_clusters));
}

MergeResult merge_similar_labels(const LabelMap& seg, const FeatureStack& fs, int max_labels) {
    fs.validate();
    if (!fs.has_grid()) fail(ErrorKind::usage, "labelid", "features-without-grid");
    require_same_grid(seg.geo, fs.geo, "labelid");
    if (max_labels < 1) fail(ErrorKind::usage, "labelid", "bad-max-labels");
    MergeResult res;
    std::map<int, int> row;
    for (std::size_t r = 0; r < fs.voxels.size(); ++r) {
        int l = seg.data[fs.voxels[r]];
        if (l > 0) row.emplace(l, 0);
    }
    if (row.empty()) fail(ErrorKind::data, "labelid", "empty-segmentation");
    for (auto& [l, r] : row) {
        r = int(res.input_labels.size());
        res.input_labels.push_back(l);
    }
    const int L = int(res.input_labels.size());
    const int C = int(fs.dims());
    res.js = Eigen::MatrixXd::Zero(L, L);
    for (int c = 0; c < C; ++c) {
        std::vector<std::vector<double>> sets(L);
        for (std::size_t r = 0; r < fs.voxels.size(); ++r) {
            int l = seg.data[fs.voxels[r]];
            if (l > 0) sets[row[l]].push_back(fs.values(Eigen::Index(r), c));
        }
        auto dens = pooled_densities(sets);
        for (int a = 0; a < L; ++a)
            for (int b = a + 1; b < L; ++b) {
                double v = js_divergence(dens[a], dens[b]) / C;
                res.js(a, b) += v;
                res.js(b, a) += v;
            }
    }
    Dendrogram dg = upgma(res.js);
    res.heights = dg.heights;
    int G = choose_cluster_count(dg.heights, max_labels);
    std::vector<int> grp = dg.cut(G);
    res.groups.assign(G, {});
    for (int a = 0; a < L; ++a) res.groups[grp[a]].push_back(res.input_labels[a]);
    res.labels = LabelMap(seg.geo);
    for (std::size_t i = 0; i < seg.size(); ++i) {
        auto it = row.find(seg.data[i]);
        if (it != row.end()) res.labels.data[i] = grp[it->second] + 1;
    }
    return res;
}

}  // namespace hablab
