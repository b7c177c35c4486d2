#include "hablab/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "hablab/error.hpp"

namespace hablab {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads the keys of one JSON object and rejects anything it was not asked about.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) fail(ErrorKind::usage, "config", "not-an-object", name_);
    }

    template <typename T>
    void get(const char* key, T& out, std::function<bool(const T&)> ok = {}, const std::string& range = "") {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return;
        T v;
        try {
            v = it->get<T>();
        } catch (const json::exception&) {
            fail(ErrorKind::usage, "config", "bad-type", path(key));
        }
        if (ok && !ok(v)) fail(ErrorKind::usage, "config", "out-of-range", path(key) + " must be " + range);
        out = v;
    }

    const json* child(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail(ErrorKind::usage, "config", "unknown-key", path(it.key()));
    }

    std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

template <typename T>
std::function<bool(const T&)> between(T lo, T hi) {
    return [=](const T& v) { return v >= lo && v <= hi; };
}
template <typename T>
std::function<bool(const T&)> above(T lo) {
    return [=](const T& v) { return v > lo; };
}
template <typename T>
std::function<bool(const T&)> at_least(T lo) {
    return [=](const T& v) { return v >= lo; };
}
std::function<bool(const std::string&)> one_of(std::vector<std::string> opts) {
    return [=](const std::string& v) { return std::find(opts.begin(), opts.end(), v) != opts.end(); };
}
std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& x : v) s += (s.empty() ? "" : "|") + x;
    return s;
}

const std::vector<std::string> kAlgorithms = {"kmeans", "fuzzy", "gmm", "hmrf", "svfmm", "dcm_svfmm",
                                              "st_svfmm", "nlsvfmm_voxel", "nlsvfmm_patch"};

std::map<std::string, std::string*> input_fields(InputPaths& in) {
    return {{"dsc", &in.dsc},
            {"rcbv", &in.rcbv},
            {"rcbf", &in.rcbf},
            {"brain_mask", &in.brain_mask},
            {"et_mask", &in.et_mask},
            {"edema_mask", &in.edema_mask},
            {"t1ce_enh_mask", &in.t1ce_enh_mask},
            {"reference_mask", &in.reference_mask},
            {"mask", &in.mask},
            {"segmentation", &in.segmentation},
            {"flair", &in.flair},
            {"t1ce", &in.t1ce},
            {"wm", &in.wm},
            {"gm", &in.gm},
            {"csf", &in.csf},
            {"survival_csv", &in.survival_csv}};
}

}  // namespace

std::string PipelineConfig::resolve(const std::string& path) const {
    if (path.empty()) return path;
    std::filesystem::path p(path);
    if (p.is_absolute() || base_dir.empty()) return path;
    return (std::filesystem::path(base_dir) / p).string();
}

PipelineConfig parse_config(const json& j, const std::string& base_dir) {
    PipelineConfig c;
    c.base_dir = base_dir;
    Section top(j, "");
    top.get<std::uint64_t>("rng_seed", c.rng_seed);
    top.get<int>("threads", c.threads, between(1, 1024), "in [1, 1024]");
    if (const json* s = top.child("inputs")) {
        Section in(*s, "inputs");
        for (auto& [k, v] : input_fields(c.inputs)) in.get<std::string>(k.c_str(), *v);
        in.get<std::vector<std::string>>("images", c.inputs.images);
        in.finish();
    }
    if (const json* s = top.child("perfusion")) {
        Section p(*s, "perfusion");
        auto& q = c.perfusion;
        p.get<double>("te", q.te, [](const double& v) { return v > 0.0 && v <= 1.0; }, "in (0, 1] seconds");
        p.get<int>("baseline_count", q.baseline_count, at_least(1), ">= 1");
        p.get<double>("svd_threshold", q.deconv.threshold, [](const double& v) { return v > 0.0 && v < 1.0; }, "in (0, 1)");
        p.get<bool>("oscillation_index", q.deconv.oscillation_index);
        p.get<double>("oi_limit", q.deconv.oi_limit, above(0.0), "> 0");
        p.get<bool>("leakage_correction", q.leakage_correction);
        p.get<bool>("raw_area_cbv", q.raw_area_cbv);
        p.get<int>("aif_max_kept", q.aif_max_kept, at_least(1), ">= 1");
        p.get<double>("min_r2", q.min_r2, between(0.0, 1.0), "in [0, 1]");
        p.get<double>("gamma_tail_fraction", q.gamma.tail_fraction, [](const double& v) { return v >= 0.0 && v < 1.0; },
                      "in [0, 1)");
        p.finish();
    }
    if (const json* s = top.child("hts")) {
        Section h(*s, "hts");
        auto& q = c.hts;
        h.get<double>("et_band_mm", q.et_band_mm, above(0.0), "> 0");
        h.get<double>("ipe_band_mm", q.ipe_band_mm, above(0.0), "> 0");
        h.get<double>("coverage", q.coverage, between(0.0, 1.0), "in [0, 1]");
        h.get<double>("min_frac", q.min_frac, between(0.0, 0.5), "in [0, 0.5]");
        h.get<int>("max_iter", q.max_iter, at_least(1), ">= 1");
        h.get<double>("tol", q.tol, above(0.0), "> 0");
        std::string nb = q.neighborhood == NeighborhoodMode::orthogonal ? "orthogonal" : "full_grouped";
        h.get<std::string>("neighborhood", nb, one_of({"orthogonal", "full_grouped"}), "orthogonal|full_grouped");
        q.neighborhood = nb == "orthogonal" ? NeighborhoodMode::orthogonal : NeighborhoodMode::full_grouped;
        h.finish();
    }
    if (const json* s = top.child("segment")) {
        Section g(*s, "segment");
        auto& q = c.segment;
        g.get<std::string>("algorithm", q.algorithm, one_of(kAlgorithms), join(kAlgorithms));
        g.get<int>("classes", q.classes, between(2, 64), "in [2, 64]");
        g.get<int>("max_iter", q.max_iter, at_least(1), ">= 1");
        g.get<double>("tol", q.tol, above(0.0), "> 0");
        g.get<int>("seed_candidates", q.seed_candidates, at_least(1), ">= 1");
        g.get<int>("seeds_kept", q.seeds_kept, at_least(1), ">= 1");
        g.get<std::string>("features", q.features, one_of({"intensity", "moments"}), "intensity|moments");
        g.get<int>("moment_radius", q.moment_radius, between(1, 5), "in [1, 5]");
        g.get<double>("pca_variance", q.pca_variance, [](const double& v) { return v > 0.0 && v <= 1.0; }, "in (0, 1]");
        g.get<std::string>("neighborhood", q.neighborhood, one_of({"orthogonal", "full_grouped"}), "orthogonal|full_grouped");
        g.get<double>("hmrf_beta", q.hmrf_beta, at_least(0.0), ">= 0");
        g.finish();
        if (q.seeds_kept > q.seed_candidates) fail(ErrorKind::usage, "config", "out-of-range", "segment.seeds_kept must be <= seed_candidates");
    }
    if (const json* s = top.child("labelid")) {
        Section l(*s, "labelid");
        auto& q = c.labelid;
        l.get<double>("tau", q.tau, [](const double& v) { return v > 0.0 && v < 1.0; }, "in (0, 1)");
        l.get<double>("epsilon", q.epsilon, [](const double& v) { return v >= 0.0 && v < 0.5; }, "in [0, 0.5)");
        l.get<double>("overlap_frac", q.overlap_frac, between(0.0, 1.0), "in [0, 1]");
        l.get<double>("min_prevalence", q.min_prevalence, between(0.0, 1.0), "in [0, 1]");
        l.get<int>("max_labels", q.max_labels, at_least(1), ">= 1");
        l.finish();
    }
    if (const json* s = top.child("stats")) {
        Section t(*s, "stats");
        auto& q = c.stats;
        t.get<std::string>("time_column", q.time_column);
        t.get<std::string>("event_column", q.event_column);
        t.get<std::string>("marker_column", q.marker_column);
        t.get<double>("alpha", q.alpha, [](const double& v) { return v > 0.0 && v < 1.0; }, "in (0, 1)");
        t.finish();
    }
    if (const json* s = top.child("phantom")) {
        Section p(*s, "phantom");
        auto& q = c.phantom;
        p.get<std::string>("kind", q.kind, one_of({"cluster", "habitat", "dsc"}), "cluster|habitat|dsc");
        p.get<std::array<int, 3>>("dims", q.dims, [](const std::array<int, 3>& d) {
            return d[0] >= 0 && d[1] >= 0 && d[2] >= 0 && d[0] <= 512 && d[1] <= 512 && d[2] <= 512;
        }, "three sizes in [0, 512]");
        p.get<double>("spacing", q.spacing, at_least(0.0), ">= 0");
        p.get<int>("classes", q.classes, between(2, 32), "in [2, 32]");
        p.get<double>("snr", q.snr, at_least(0.0), ">= 0");
        p.get<double>("noise_sd", q.noise_sd, at_least(0.0), ">= 0");
        p.get<double>("heterogeneity", q.heterogeneity, between(0.0, 0.5), "in [0, 0.5]");
        p.get<int>("frames", q.frames, between(10, 1000), "in [10, 1000]");
        p.get<double>("leakage_k2", q.leakage_k2, between(-1.0, 1.0), "in [-1, 1]");
        p.finish();
    }
    top.finish();
    return c;
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::usage, "config", "cannot-open", path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::usage, "config", "malformed-json", e.what());
    }
    auto base = std::filesystem::absolute(std::filesystem::path(path)).parent_path().string();
    return parse_config(j, base);
}

void apply_env_overrides(PipelineConfig& cfg) {
    if (const char* t = std::getenv("HABLAB_THREADS")) {
        char* end = nullptr;
        long v = std::strtol(t, &end, 10);
        if (end == t || *end != '\0' || v < 1 || v > 1024) fail(ErrorKind::usage, "config", "bad-env", "HABLAB_THREADS");
        cfg.threads = int(v);
    }
    for (auto& [k, v] : input_fields(cfg.inputs)) {
        std::string name = "HABLAB_INPUT_";
        for (char ch : k) name += char(std::toupper(static_cast<unsigned char>(ch)));
        if (const char* p = std::getenv(name.c_str())) *v = p;
    }
}

ordered_json PipelineConfig::to_json() const {
    ordered_json in;
    InputPaths copy = inputs;
    for (auto& [k, v] : input_fields(copy))
        if (!v->empty()) in[k] = *v;
    if (!inputs.images.empty()) in["images"] = inputs.images;
    const auto& p = perfusion;
    const auto& h = hts;
    const auto& g = segment;
    const auto& l = labelid;
    const auto& s = stats;
    const auto& f = phantom;
    ordered_json j;
    j["rng_seed"] = rng_seed;
    j["threads"] = threads;
    j["inputs"] = in.is_null() ? ordered_json::object() : in;
    j["perfusion"] = {{"te", p.te},
                      {"baseline_count", p.baseline_count},
                      {"svd_threshold", p.deconv.threshold},
                      {"oscillation_index", p.deconv.oscillation_index},
                      {"oi_limit", p.deconv.oi_limit},
                      {"leakage_correction", p.leakage_correction},
                      {"raw_area_cbv", p.raw_area_cbv},
                      {"aif_max_kept", p.aif_max_kept},
                      {"min_r2", p.min_r2},
                      {"gamma_tail_fraction", p.gamma.tail_fraction}};
    j["hts"] = {{"et_band_mm", h.et_band_mm},
                {"ipe_band_mm", h.ipe_band_mm},
                {"coverage", h.coverage},
                {"min_frac", h.min_frac},
                {"max_iter", h.max_iter},
                {"tol", h.tol},
                {"neighborhood", h.neighborhood == NeighborhoodMode::orthogonal ? "orthogonal" : "full_grouped"}};
    j["segment"] = {{"algorithm", g.algorithm},       {"classes", g.classes},
                    {"max_iter", g.max_iter},         {"tol", g.tol},
                    {"seed_candidates", g.seed_candidates}, {"seeds_kept", g.seeds_kept},
                    {"features", g.features},         {"moment_radius", g.moment_radius},
                    {"pca_variance", g.pca_variance}, {"neighborhood", g.neighborhood},
                    {"hmrf_beta", g.hmrf_beta}};
    j["labelid"] = {{"tau", l.tau},
                    {"epsilon", l.epsilon},
                    {"overlap_frac", l.overlap_frac},
                    {"min_prevalence", l.min_prevalence},
                    {"max_labels", l.max_labels}};
    j["stats"] = {{"time_column", s.time_column},
                  {"event_column", s.event_column},
                  {"marker_column", s.marker_column},
                  {"alpha", s.alpha}};
    j["phantom"] = {{"kind", f.kind},       {"dims", f.dims},
                    {"spacing", f.spacing}, {"classes", f.classes},
                    {"snr", f.snr},         {"noise_sd", f.noise_sd},
                    {"heterogeneity", f.heterogeneity}, {"frames", f.frames},
                    {"leakage_k2", f.leakage_k2}};
    return j;
}

std::string PipelineConfig::hash() const {
    // Thread count does not affect results, so it is left out of the hash.
    ordered_json j = to_json();
    j.erase("threads");
    const std::string s = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

}  // namespace hablab
