#include "hablab/morphology.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include "hablab/error.hpp"

namespace hablab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas along one line (Felzenszwalb & Huttenlocher) with sample pitch s.
void edt_line(const std::vector<double>& f, std::vector<double>& d, double s, std::vector<int>& v,
              std::vector<double>& z) {
    int n = int(f.size());
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf) continue;
        double pq = q * s;
        while (k >= 0) {
            double pv = v[k] * s;
            double sect = ((f[q] + pq * pq) - (f[v[k]] + pv * pv)) / (2.0 * (pq - pv));
            if (sect <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        if (k == 0) {
            z[k] = -kInf;
        } else {
            double pv = v[k - 1] * s;
            z[k] = ((f[q] + pq * pq) - (f[v[k - 1]] + pv * pv)) / (2.0 * (pq - pv));
        }
        z[k + 1] = kInf;
    }
    d.assign(n, kInf);
    if (k < 0) return;
    int j = 0;
    for (int q = 0; q < n; ++q) {
        double p = q * s;
        while (z[j + 1] < p) ++j;
        double dx = p - v[j] * s;
        d[q] = dx * dx + f[v[j]];
    }
}

std::vector<Index3> face_offsets(const Geometry& g) {
    std::vector<Index3> out;
    for (int a = 0; a < 3; ++a) {
        if (g.dims[a] == 1) continue;
        Index3 o{0, 0, 0};
        o[a] = 1;
        out.push_back(o);
        o[a] = -1;
        out.push_back(o);
    }
    return out;
}

std::vector<Index3> connectivity_offsets(const Geometry& g, int connectivity) {
    if (connectivity == 6 || connectivity == 4) return face_offsets(g);
    std::vector<Index3> out;
    for (int z = -1; z <= 1; ++z)
        for (int y = -1; y <= 1; ++y)
            for (int x = -1; x <= 1; ++x) {
                if (x == 0 && y == 0 && z == 0) continue;
                if ((g.dims[2] == 1 && z != 0) || (g.dims[1] == 1 && y != 0) || (g.dims[0] == 1 && x != 0))
                    continue;
                out.push_back({x, y, z});
            }
    return out;
}

}  // namespace

std::vector<double> squared_distance_mm(const Mask& seed) {
    const auto& g = seed.geo;
    std::vector<double> dist(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) dist[i] = seed.data[i] ? 0.0 : kInf;
    std::vector<double> f, d, z;
    std::vector<int> v;
    for (int axis = 0; axis < 3; ++axis) {
        int n = g.dims[axis];
        if (n == 1) continue;
        int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        f.resize(n);
        for (int j = 0; j < g.dims[a2]; ++j)
            for (int i = 0; i < g.dims[a1]; ++i) {
                Index3 c{};
                c[a1] = i;
                c[a2] = j;
                for (int q = 0; q < n; ++q) {
                    c[axis] = q;
                    f[q] = dist[g.index(c[0], c[1], c[2])];
                }
                edt_line(f, d, g.spacing[axis], v, z);
                for (int q = 0; q < n; ++q) {
                    c[axis] = q;
                    dist[g.index(c[0], c[1], c[2])] = d[q];
                }
            }
    }
    return dist;
}

Mask distance_band(const Mask& seed, double max_mm) {
    if (!(max_mm > 0.0)) fail(ErrorKind::usage, "volume", "bad-distance");
    if (seed.empty()) fail(ErrorKind::data, "volume", "empty-seed");
    auto d2 = squared_distance_mm(seed);
    double lim = max_mm * max_mm * (1.0 + 1e-12);
    Mask out(seed.geo);
    for (std::size_t i = 0; i < d2.size(); ++i) out.data[i] = seed.data[i] || d2[i] <= lim;
    return out;
}

LabelMap connected_components(const Mask& m, int connectivity) {
    const auto& g = m.geo;
    auto offs = connectivity_offsets(g, connectivity);
    LabelMap out(g);
    int next = 0;
    std::deque<std::size_t> queue;
    for (std::size_t s = 0; s < g.size(); ++s) {
        if (!m.data[s] || out.data[s]) continue;
        out.data[s] = ++next;
        queue.push_back(s);
        while (!queue.empty()) {
            auto cur = queue.front();
            queue.pop_front();
            auto c = g.coords(cur);
            for (const auto& o : offs) {
                int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
                if (!g.inside(x, y, z)) continue;
                auto n = g.index(x, y, z);
                if (m.data[n] && !out.data[n]) {
                    out.data[n] = next;
                    queue.push_back(n);
                }
            }
        }
    }
    return out;
}

Mask erode(const Mask& m, int iterations) {
    Mask cur = m;
    auto offs = face_offsets(m.geo);
    for (int it = 0; it < iterations; ++it) {
        Mask next(m.geo);
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (!cur.data[i]) continue;
            auto c = m.geo.coords(i);
            bool keep = true;
            for (const auto& o : offs) {
                int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
                if (!m.geo.inside(x, y, z) || !cur.data[m.geo.index(x, y, z)]) {
                    keep = false;
                    break;
                }
            }
            next.data[i] = keep;
        }
        cur = std::move(next);
    }
    return cur;
}

Mask dilate(const Mask& m, int iterations) {
    Mask cur = m;
    auto offs = face_offsets(m.geo);
    for (int it = 0; it < iterations; ++it) {
        Mask next = cur;
        for (std::size_t i = 0; i < m.size(); ++i) {
            if (!cur.data[i]) continue;
            auto c = m.geo.coords(i);
            for (const auto& o : offs) {
                int x = c[0] + o[0], y = c[1] + o[1], z = c[2] + o[2];
                if (m.geo.inside(x, y, z)) next.data[m.geo.index(x, y, z)] = 1;
            }
        }
        cur = std::move(next);
    }
    return cur;
}

Mask fill_holes(const Mask& m) {
    const auto& g = m.geo;
    Mask bg(g);
    for (std::size_t i = 0; i < g.size(); ++i) bg.data[i] = !m.data[i];
    auto cc = connected_components(bg, 6);
    std::vector<char> touches(std::size_t(cc.max_label()) + 1, 0);
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!cc.data[i]) continue;
        auto c = g.coords(i);
        for (int a = 0; a < 3; ++a)
            if (g.dims[a] > 1 && (c[a] == 0 || c[a] == g.dims[a] - 1)) touches[cc.data[i]] = 1;
    }
    Mask out = m;
    for (std::size_t i = 0; i < g.size(); ++i)
        if (cc.data[i] && !touches[cc.data[i]]) out.data[i] = 1;
    return out;
}

Mask mask_and(const Mask& a, const Mask& b) {
    require_same_grid(a.geo, b.geo, "volume");
    Mask out(a.geo);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] && b.data[i];
    return out;
}

Mask mask_or(const Mask& a, const Mask& b) {
    require_same_grid(a.geo, b.geo, "volume");
    Mask out(a.geo);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] || b.data[i];
    return out;
}

Mask mask_minus(const Mask& a, const Mask& b) {
    require_same_grid(a.geo, b.geo, "volume");
    Mask out(a.geo);
    for (std::size_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] && !b.data[i];
    return out;
}

}  // namespace hablab
