#include "hablab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hablab/clustering.hpp"
#include "hablab/descriptive.hpp"
#include "hablab/error.hpp"
#include "hablab/features.hpp"
#include "hablab/hts.hpp"
#include "hablab/io.hpp"
#include "hablab/labelid.hpp"
#include "hablab/morphology.hpp"
#include "hablab/perfusion.hpp"
#include "hablab/phantom.hpp"
#include "hablab/schema.hpp"
#include "hablab/stats.hpp"
#include "hablab/svfmm.hpp"

namespace hablab {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string now_utc() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

ordered_json num(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json nums(const std::vector<double>& v) {
    ordered_json a = ordered_json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::data, "cli", "cannot-write", path);
    out << text;
}

// Completion state of each stage, rewritten after every change so partial runs are documented.
class Manifest {
public:
    Manifest(std::string dir, const std::string& command) : path_(std::move(dir) + "/MANIFEST.json") {
        j_["command"] = command;
        j_["complete"] = false;
        j_["stages"] = ordered_json::array();
        save();
    }
    void start(const std::string& name) {
        j_["stages"].push_back({{"name", name}, {"status", "running"}, {"outputs", ordered_json::array()}});
        save();
    }
    void output(const std::string& file) {
        j_["stages"].back()["outputs"].push_back(file);
        save();
    }
    void done() {
        j_["stages"].back()["status"] = "done";
        save();
    }
    void skip(const std::string& name, const std::string& why) {
        j_["stages"].push_back({{"name", name}, {"status", "skipped"}, {"reason", why}, {"outputs", ordered_json::array()}});
        save();
    }
    void failed(const std::string& message) {
        if (!j_["stages"].empty() && j_["stages"].back()["status"] == "running") {
            j_["stages"].back()["status"] = "failed";
            j_["stages"].back()["error"] = message;
        }
        j_["error"] = message;
        save();
    }
    void complete() {
        j_["complete"] = true;
        save();
    }

private:
    void save() const { write_text(path_, j_.dump(2) + "\n"); }
    std::string path_;
    ordered_json j_;
};

// Shared context for one command: output directory, manifest and the list of written files.
struct Run {
    const PipelineConfig& cfg;
    RunOptions opt;
    std::string command;
    Manifest manifest;
    std::vector<std::string> outputs;

    Run(const PipelineConfig& c, const RunOptions& o, const std::string& cmd)
        : cfg(c), opt(o), command(cmd), manifest((fs::create_directories(o.out_dir), o.out_dir), cmd) {}

    std::string out(const std::string& name) {
        outputs.push_back(name);
        manifest.output(name);
        return opt.out_dir + "/" + name;
    }

    std::string input(const std::string& key, const std::string& value) const {
        if (value.empty()) fail(ErrorKind::usage, "cli", "missing-input", "inputs." + key);
        return cfg.resolve(value);
    }

    Report base() const {
        Report r;
        r["generated_at"] = opt.timestamp.empty() ? now_utc() : opt.timestamp;
        r["command"] = command;
        r["provenance"] = {{"tool", "hablab"},
                           {"version", kVersion},
                           {"config_hash", cfg.hash()},
                           {"rng_seed", cfg.rng_seed},
                           {"threads", cfg.threads},
                           {"config", cfg.to_json()}};
        return r;
    }

    void finish(Report& r) {
        r["outputs"] = outputs;
        auto errors = validate_json(json::parse(r.dump()), report_schema());
        if (!errors.empty()) fail(ErrorKind::numerical, "cli", "report-schema-violation", errors.front());
        manifest.start("report");
        emit_report(r, out("report.json"), "json");
        if (opt.format == "markdown") emit_report(r, out("report.md"), "markdown");
        manifest.done();
        manifest.complete();
    }
};

template <typename F>
Report guarded(Run& run, F&& body) {
    try {
        return body();
    } catch (const Error& e) {
        run.manifest.failed(e.what());
        throw;
    } catch (const std::exception& e) {
        run.manifest.failed(e.what());
        throw;
    }
}

ordered_json volume_entry(const std::string& name, std::size_t voxels, double voxel_mm3, double intracranial) {
    return {{"name", name},
            {"voxels", voxels},
            {"volume_cm3", double(voxels) * voxel_mm3 / 1000.0},
            {"relative_volume", intracranial > 0.0 ? double(voxels) / intracranial : 0.0}};
}

ordered_json perfusion_diagnostics(const PerfusionMaps& m) {
    std::vector<double> r2;
    for (std::size_t i = 0; i < m.r2.size(); ++i)
        if (m.valid.data[i]) r2.push_back(m.r2.data[i]);
    ordered_json r2s = nullptr;
    if (!r2.empty())
        r2s = {{"min", *std::min_element(r2.begin(), r2.end())},
               {"p05", percentile(r2, 0.05)},
               {"median", median(r2)}};
    std::vector<std::size_t> aif_ids = m.aif.provenance;
    return {{"aif_voxels", aif_ids},
            {"aif_passes", m.aif.passes},
            {"aif_flagged", m.aif.flagged},
            {"aif_fit", {{"K", num(m.aif_fit.K)}, {"t0", num(m.aif_fit.t0)}, {"alpha", num(m.aif_fit.alpha)},
                         {"beta", num(m.aif_fit.beta)}, {"r2", num(m.aif_fit.r2)}}},
            {"leakage_reference", {{"K1", num(m.leakage_reference.K1)}, {"K2", num(m.leakage_reference.K2)}}},
            {"norm_cbv", num(m.norm_cbv)},
            {"norm_cbf", num(m.norm_cbf)},
            {"valid_voxels", m.valid.count()},
            {"low_r2_voxels", m.low_r2},
            {"residue_flags", m.residue_flags},
            {"r2", r2s},
            {"flags", m.flags}};
}

Mask default_reference(const Mask& brain, const std::vector<const Mask*>& lesion) {
    Mask les(brain.geo);
    for (const Mask* m : lesion) les = mask_or(les, *m);
    return mask_minus(brain, les);
}

void write_perfusion_maps(Run& run, const PerfusionMaps& m) {
    write_volume(run.out("cbv.nii.gz"), m.cbv);
    write_volume(run.out("cbf.nii.gz"), m.cbf);
    write_volume(run.out("mtt.nii.gz"), m.mtt);
    write_volume(run.out("k2.nii.gz"), m.k2);
    write_volume(run.out("r2.nii.gz"), m.r2);
    write_volume(run.out("rcbv.nii.gz"), m.rcbv);
    write_volume(run.out("rcbf.nii.gz"), m.rcbf);
    write_mask(run.out("valid.nii.gz"), m.valid);
}

std::vector<std::string> merge_flags(std::vector<std::string> a, const std::vector<std::string>& b) {
    for (const auto& f : b)
        if (std::find(a.begin(), a.end(), f) == a.end()) a.push_back(f);
    return a;
}

// Relabels 0-based cluster ids to 1..K by ascending key.
std::vector<int> order_labels(const std::vector<int>& labels, const std::vector<double>& key) {
    std::vector<int> ord(key.size());
    std::iota(ord.begin(), ord.end(), 0);
    std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) { return key[a] < key[b]; });
    std::vector<int> rank(key.size());
    for (std::size_t r = 0; r < ord.size(); ++r) rank[ord[r]] = int(r) + 1;
    std::vector<int> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = rank[labels[i]];
    return out;
}

Report run_hts(const PipelineConfig& cfg, const RunOptions& opt) {
    Run run(cfg, opt, "hts");
    return guarded(run, [&]() -> Report {
        const auto& in = cfg.inputs;
        run.manifest.start("load");
        Mask brain = read_mask(run.input("brain_mask", in.brain_mask));
        Mask et = read_mask(run.input("et_mask", in.et_mask));
        Mask edema = read_mask(run.input("edema_mask", in.edema_mask));
        Mask enh = in.t1ce_enh_mask.empty() ? et : read_mask(cfg.resolve(in.t1ce_enh_mask));
        require_same_grid(brain.geo, et.geo, "cli");
        require_same_grid(brain.geo, edema.geo, "cli");
        require_same_grid(brain.geo, enh.geo, "cli");
        run.manifest.done();

        Report r = run.base();
        ordered_json diag;
        Volume rcbv, rcbf;
        VolumeSeries series;
        bool have_series = false;
        std::vector<std::string> flags;
        if (!in.rcbv.empty() || !in.rcbf.empty()) {
            run.manifest.skip("perfusion", "rCBV and rCBF maps given as inputs");
            rcbv = read_volume(run.input("rcbv", in.rcbv));
            rcbf = read_volume(run.input("rcbf", in.rcbf));
            require_same_grid(brain.geo, rcbv.geo, "cli");
            require_same_grid(brain.geo, rcbf.geo, "cli");
            diag["perfusion"] = nullptr;
        } else {
            run.manifest.start("perfusion");
            series = read_series(run.input("dsc", in.dsc));
            have_series = true;
            require_same_grid(brain.geo, series.geo, "cli");
            PerfusionMasks pm{brain, enh,
                              in.reference_mask.empty() ? default_reference(brain, {&et, &edema, &enh})
                                                        : read_mask(cfg.resolve(in.reference_mask))};
            PerfusionMaps maps = compute_maps(series, pm, cfg.perfusion);
            write_perfusion_maps(run, maps);
            rcbv = maps.rcbv;
            rcbf = maps.rcbf;
            diag["perfusion"] = perfusion_diagnostics(maps);
            flags = merge_flags(flags, maps.flags);
            run.manifest.done();
        }

        run.manifest.start("hts_stage1");
        Stage1Result s1 = hts_stage1(rcbv, rcbf, et, edema, enh, cfg.hts);
        write_mask(run.out("et_dsc.nii.gz"), s1.et_dsc);
        write_mask(run.out("ed_dsc.nii.gz"), s1.ed_dsc);
        run.manifest.done();

        run.manifest.start("hts_stage2");
        HabitatMap hm = hts_stage2(rcbv, rcbf, s1, enh, cfg.hts);
        write_labels(run.out("habitats.nii.gz"), hm.labels);
        run.manifest.done();

        run.manifest.start("markers");
        auto markers = habitat_markers(hm, rcbv, rcbf, brain);
        const double vox = brain.geo.voxel_volume_mm3();
        const double ic = double(brain.count());
        ordered_json regions = ordered_json::array(), habitats = ordered_json::array(), mk = ordered_json::array();
        regions.push_back(volume_entry("ET_DSC", s1.et_dsc.count(), vox, ic));
        regions.push_back(volume_entry("ED_DSC", s1.ed_dsc.count(), vox, ic));
        regions.push_back(volume_entry("lesion", s1.et_dsc.count() + s1.ed_dsc.count(), vox, ic));
        for (int h = HAT; h <= VPE; ++h) {
            const HabitatMarker& m = markers[h - 1];
            habitats.push_back(volume_entry(habitat_name(h), m.voxels, vox, ic));
            auto val = [&](double v) { return m.empty ? ordered_json(nullptr) : num(v); };
            mk.push_back({{"habitat", habitat_name(h)},
                          {"empty", m.empty},
                          {"voxels", m.voxels},
                          {"rcbv_max", val(m.rcbv_max)},
                          {"rcbf_max", val(m.rcbf_max)},
                          {"rcbv_median", val(m.rcbv_median)},
                          {"rcbf_median", val(m.rcbf_median)},
                          {"rcbv_mad", val(m.rcbv_mad)},
                          {"rcbf_mad", val(m.rcbf_mad)}});
            if (m.empty) flags = merge_flags(flags, {std::string("empty-") + habitat_name(h)});
        }
        r["volumetry"] = {{"voxel_volume_mm3", vox}, {"intracranial_cm3", ic * vox / 1000.0}, {"regions", regions},
                          {"habitats", habitats}};
        r["markers"] = mk;
        r["constraint_log"] = hm.log;
        r["flags"] = merge_flags(flags, hm.flags);
        diag["stage1_trace"] = nums(s1.trace);
        diag["hat_lat_trace"] = nums(hm.trace_et);
        diag["ipe_vpe_trace"] = nums(hm.trace_ed);
        r["diagnostics"] = diag;
        if (have_series) {
            // Prototypical curve of each habitat: median concentration at every frame.
            ConcentrationSet conc = signal_to_concentration(series, cfg.perfusion.te, cfg.perfusion.baseline_count);
            ordered_json curves = ordered_json::array();
            for (int h = HAT; h <= VPE; ++h) {
                std::vector<std::size_t> vox_ids;
                for (std::size_t i = 0; i < hm.labels.size(); ++i)
                    if (hm.labels.data[i] == h && conc.valid[i]) vox_ids.push_back(i);
                ordered_json values = nullptr;
                if (!vox_ids.empty()) {
                    std::vector<double> med(conc.frames);
                    for (int k = 0; k < conc.frames; ++k) {
                        std::vector<double> col;
                        for (auto i : vox_ids) col.push_back(conc.c[i * conc.frames + k]);
                        med[k] = median(col);
                    }
                    values = nums(med);
                }
                curves.push_back({{"name", habitat_name(h)}, {"values", values}});
            }
            r["curves"] = {{"t", nums(conc.t)}, {"series", curves}};
        }
        run.manifest.done();
        run.finish(r);
        return r;
    });
}

Report run_perfuse(const PipelineConfig& cfg, const RunOptions& opt) {
    Run run(cfg, opt, "perfuse");
    return guarded(run, [&]() -> Report {
        const auto& in = cfg.inputs;
        run.manifest.start("load");
        VolumeSeries series = read_series(run.input("dsc", in.dsc));
        Mask brain = read_mask(run.input("brain_mask", in.brain_mask));
        Mask enh = read_mask(run.input("t1ce_enh_mask", in.t1ce_enh_mask));
        require_same_grid(series.geo, brain.geo, "cli");
        require_same_grid(series.geo, enh.geo, "cli");
        Mask ref = in.reference_mask.empty() ? default_reference(brain, {&enh}) : read_mask(cfg.resolve(in.reference_mask));
        run.manifest.done();
        run.manifest.start("perfusion");
        PerfusionMaps maps = compute_maps(series, PerfusionMasks{brain, enh, ref}, cfg.perfusion);
        write_perfusion_maps(run, maps);
        run.manifest.done();
        Report r = run.base();
        r["flags"] = maps.flags;
        r["diagnostics"] = {{"perfusion", perfusion_diagnostics(maps)}};
        run.finish(r);
        return r;
    });
}

Report run_segment(const PipelineConfig& cfg, const RunOptions& opt) {
    Run run(cfg, opt, "segment");
    return guarded(run, [&]() -> Report {
        const auto& in = cfg.inputs;
        const auto& sg = cfg.segment;
        run.manifest.start("load");
        if (in.images.empty()) fail(ErrorKind::usage, "cli", "missing-input", "inputs.images");
        std::vector<Volume> vols;
        std::vector<std::string> names;
        for (std::size_t k = 0; k < in.images.size(); ++k) {
            vols.push_back(read_volume(cfg.resolve(in.images[k])));
            names.push_back("image" + std::to_string(k));
            require_same_grid(vols[0].geo, vols.back().geo, "cli");
        }
        Mask mask = in.mask.empty() ? Mask(vols[0].geo, true) : read_mask(cfg.resolve(in.mask));
        require_same_grid(vols[0].geo, mask.geo, "cli");
        run.manifest.done();

        run.manifest.start("features");
        std::vector<const Volume*> ptrs;
        for (const auto& v : vols) ptrs.push_back(&v);
        FeatureStack fsx = sg.features == "moments" ? local_moment_features(ptrs, names, mask, sg.moment_radius)
                                                    : stack_volumes(ptrs, names, mask);
        if (sg.pca_variance < 1.0) fsx = pca_reduce(fsx, sg.pca_variance);
        run.manifest.done();

        run.manifest.start("clustering");
        const int K = sg.classes;
        if (fsx.samples() < K) fail(ErrorKind::data, "cli", "too-few-voxels");
        auto seeds = kmeanspp_protocol(fsx.values, K, sg.seed_candidates, sg.seeds_kept, cfg.rng_seed);
        auto ns = NeighborhoodSystem::make(
            sg.neighborhood == "orthogonal" ? NeighborhoodMode::orthogonal : NeighborhoodMode::full_grouped,
            fsx.geo.is2d(), 1);
        std::vector<int> labels;
        std::vector<double> key(K);
        std::vector<double> trace;
        std::vector<std::string> flags;
        ordered_json extra = ordered_json::object();
        auto key_from = [&](const std::vector<GaussianComponent>& comps) {
            for (int j = 0; j < K; ++j) key[j] = comps[j].mean(0);
        };
        const std::string& alg = sg.algorithm;
        if (alg == "kmeans") {
            auto km = best_kmeans(fsx.values, seeds, sg.max_iter);
            labels = km.labels;
            for (int j = 0; j < K; ++j) key[j] = km.centroids(j, 0);
            trace = km.objective;
        } else if (alg == "fuzzy") {
            auto fz = best_fuzzy(fsx.values, seeds);
            labels = fz.labels();
            for (int j = 0; j < K; ++j) key[j] = fz.centroids(j, 0);
        } else if (alg == "gmm") {
            auto g = best_gmm(fsx.values, seeds, sg.max_iter, sg.tol);
            labels = argmax_rows(g.resp);
            key_from(g.components);
            trace = g.trace;
            if (g.regularized) flags.push_back("covariance-regularized");
        } else {
            auto km = best_kmeans(fsx.values, seeds);
            auto init = components_from_labels(fsx.values, km.labels, K);
            if (alg == "hmrf") {
                auto h = gauss_hmrf(fsx, ns, init, sg.hmrf_beta, sg.max_iter);
                labels = h.labels;
                key_from(h.components);
                trace = h.energy_trace;
            } else {
                SvfmmOptions so;
                so.max_iter = sg.max_iter;
                so.tol = sg.tol;
                SvfmmResult res;
                if (alg == "svfmm") res = svfmm_fit(fsx, ns, init, so);
                else if (alg == "dcm_svfmm") res = dcm_svfmm_fit(fsx, ns, init, so);
                else if (alg == "st_svfmm") res = st_svfmm_fit(fsx, ns, init, so);
                else if (alg == "nlsvfmm_voxel") res = nlsvfmm_fit(fsx, ns, init, NlmMode::voxel, so);
                else res = nlsvfmm_fit(fsx, ns, init, NlmMode::patch, so);
                labels = posterior_segment(res);
                key_from(res.components);
                trace = res.trace;
                flags = res.flags;
                extra["iterations"] = res.iterations;
                extra["converged"] = res.converged;
                extra["max_root_residual"] = res.max_root_residual;
            }
        }
        auto ordered = order_labels(labels, key);
        std::vector<int> zero_based(ordered.size());
        for (std::size_t i = 0; i < ordered.size(); ++i) zero_based[i] = ordered[i] - 1;
        LabelMap seg = scatter_labels(fsx, zero_based);
        write_labels(run.out("labels.nii.gz"), seg);
        run.manifest.done();

        std::vector<std::size_t> sizes(K, 0);
        for (int l : ordered) ++sizes[l - 1];
        Report r = run.base();
        ordered_json res = {{"algorithm", alg}, {"classes", K}, {"features", fsx.channels}, {"class_sizes", sizes},
                            {"objective_trace", nums(trace)}};
        for (auto it = extra.begin(); it != extra.end(); ++it) res[it.key()] = it.value();
        r["results"] = res;
        r["flags"] = flags;
        run.finish(r);
        return r;
    });
}

Report run_labelid(const PipelineConfig& cfg, const RunOptions& opt) {
    Run run(cfg, opt, "labelid");
    return guarded(run, [&]() -> Report {
        const auto& in = cfg.inputs;
        const auto& li = cfg.labelid;
        run.manifest.start("load");
        LabelMap seg = read_labels(run.input("segmentation", in.segmentation));
        Mask brain = read_mask(run.input("brain_mask", in.brain_mask));
        TissueProbabilityMaps maps{read_volume(run.input("wm", in.wm)), read_volume(run.input("gm", in.gm)),
                                   read_volume(run.input("csf", in.csf))};
        require_same_grid(seg.geo, brain.geo, "cli");
        run.manifest.done();

        std::vector<std::string> flags;
        run.manifest.start("tissue_correction");
        std::size_t lesion_voxels = 0;
        if (!in.flair.empty() && !in.t1ce.empty()) {
            Volume flair = read_volume(cfg.resolve(in.flair)), t1ce = read_volume(cfg.resolve(in.t1ce));
            RoughLesion rough = lesion_rough_mask(flair, t1ce, brain);
            if (rough.empty) flags.push_back("empty-rough-lesion");
            lesion_voxels = rough.mask.count();
            write_mask(run.out("rough_lesion.nii.gz"), rough.mask);
            maps = correct_tissue_maps(maps, rough.mask, li.epsilon);
        } else {
            flags.push_back("no-tissue-correction");
        }
        run.manifest.done();

        run.manifest.start("pathological_labels");
        LabelTissueScore score = pathological_labels(seg, maps, li.tau);
        LabelMap cleaned = remove_spurious(seg, score.pathological, brain, li.overlap_frac, li.min_prevalence);
        write_labels(run.out("pathological.nii.gz"), cleaned);
        run.manifest.done();

        run.manifest.start("merge");
        std::vector<Volume> vols;
        std::vector<std::string> names;
        std::vector<std::string> sources = in.images;
        if (sources.empty() && !in.flair.empty() && !in.t1ce.empty()) sources = {in.flair, in.t1ce};
        if (sources.empty()) fail(ErrorKind::usage, "cli", "missing-input", "inputs.images (or flair and t1ce) for merging");
        for (std::size_t k = 0; k < sources.size(); ++k) {
            vols.push_back(read_volume(cfg.resolve(sources[k])));
            names.push_back("image" + std::to_string(k));
        }
        std::vector<const Volume*> ptrs;
        for (const auto& v : vols) ptrs.push_back(&v);
        Mask labelled(cleaned.geo);
        for (std::size_t i = 0; i < cleaned.size(); ++i) labelled.data[i] = cleaned.data[i] > 0;
        FeatureStack fsx = stack_volumes(ptrs, names, labelled);
        MergeResult merged = merge_similar_labels(cleaned, fsx, li.max_labels);
        write_labels(run.out("merged.nii.gz"), merged.labels);
        run.manifest.done();

        Report r = run.base();
        ordered_json p = ordered_json::array();
        for (int k = 0; k < int(score.labels.size()); ++k)
            p.push_back({{"label", score.labels[k]}, {"wm", score.p(k, 0)}, {"gm", score.p(k, 1)}, {"csf", score.p(k, 2)}});
        ordered_json js = ordered_json::array();
        for (int a = 0; a < merged.js.rows(); ++a) {
            ordered_json jr = ordered_json::array();
            for (int b = 0; b < merged.js.cols(); ++b) jr.push_back(merged.js(a, b));
            js.push_back(jr);
        }
        r["results"] = {{"rough_lesion_voxels", lesion_voxels},
                        {"label_tissue_probability", p},
                        {"survivors", {{"wm", score.survivors[0]}, {"gm", score.survivors[1]}, {"csf", score.survivors[2]}}},
                        {"pathological", score.pathological},
                        {"merge_input_labels", merged.input_labels},
                        {"js_divergence", js},
                        {"merge_heights", nums(merged.heights)},
                        {"groups", merged.groups}};
        r["flags"] = flags;
        run.finish(r);
        return r;
    });
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) {
        while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
        while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
        out.push_back(cell);
    }
    return out;
}

ordered_json km_json(const KaplanMeier& km) {
    ordered_json a = ordered_json::array();
    for (const auto& s : km.steps)
        a.push_back({{"time", s.time}, {"at_risk", s.at_risk}, {"events", s.events}, {"censored", s.censored},
                     {"survival", s.survival}});
    return a;
}

Report run_stats(const PipelineConfig& cfg, const RunOptions& opt) {
    Run run(cfg, opt, "stats");
    return guarded(run, [&]() -> Report {
        const auto& st = cfg.stats;
        run.manifest.start("load");
        std::string path = run.input("survival_csv", cfg.inputs.survival_csv);
        std::ifstream in(path);
        if (!in) fail(ErrorKind::data, "cli", "cannot-open", path);
        std::string line;
        if (!std::getline(in, line)) fail(ErrorKind::data, "cli", "empty-csv", path);
        auto header = split_csv(line);
        auto col = [&](const std::string& name) {
            auto it = std::find(header.begin(), header.end(), name);
            if (it == header.end()) fail(ErrorKind::data, "cli", "missing-column", name);
            return std::size_t(it - header.begin());
        };
        const std::size_t ct = col(st.time_column), ce = col(st.event_column), cm = col(st.marker_column);
        std::vector<SurvivalRecord> recs;
        std::vector<double> marker;
        int lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
            auto cells = split_csv(line);
            if (cells.size() != header.size()) fail(ErrorKind::data, "cli", "bad-csv-row", "line " + std::to_string(lineno));
            try {
                SurvivalRecord r;
                r.time = std::stod(cells[ct]);
                r.event = std::stod(cells[ce]) != 0.0;
                double m = std::stod(cells[cm]);
                r.covariates = {m};
                recs.push_back(r);
                marker.push_back(m);
            } catch (const std::logic_error&) {
                fail(ErrorKind::data, "cli", "bad-csv-value", "line " + std::to_string(lineno));
            }
        }
        run.manifest.done();

        run.manifest.start("survival");
        CutoffResult cut = cindex_cutoff(marker, recs);
        std::vector<SurvivalRecord> hi, lo;
        for (std::size_t i = 0; i < recs.size(); ++i) (marker[i] > cut.threshold ? hi : lo).push_back(recs[i]);
        LogRankResult lr = logrank(hi, lo);
        CoxResult cox = cox_fit(recs);
        std::vector<SurvivalRecord> dich = recs;
        for (std::size_t i = 0; i < dich.size(); ++i) dich[i].covariates = {marker[i] > cut.threshold ? 1.0 : 0.0};
        CoxResult cox_d = cox_fit(dich);
        FdrResult fdr = fdr_correct({lr.p, cox.wald_p(0), cox_d.wald_p(0)}, st.alpha);
        run.manifest.done();

        auto cox_json = [&](const CoxResult& c) {
            return ordered_json{{"beta", num(c.beta(0))}, {"hr", num(c.hr(0))}, {"ci95", {num(c.ci_low(0)), num(c.ci_high(0))}},
                                {"wald_p", num(c.wald_p(0))}, {"iterations", c.iterations}, {"flags", c.flags}};
        };
        Report r = run.base();
        r["results"] = {{"subjects", recs.size()},
                        {"events", std::count_if(recs.begin(), recs.end(), [](const SurvivalRecord& s) { return s.event; })},
                        {"cutoff", {{"threshold", cut.threshold}, {"cindex", cut.cindex}}},
                        {"kaplan_meier", {{"high", km_json(kaplan_meier(hi))}, {"low", km_json(kaplan_meier(lo))}}},
                        {"logrank", {{"chi2", lr.chi2}, {"p", lr.p}, {"flags", lr.flags}}},
                        {"cox_continuous", cox_json(cox)},
                        {"cox_dichotomized", cox_json(cox_d)},
                        {"fdr", {{"tests", {"logrank", "cox_continuous", "cox_dichotomized"}},
                                 {"adjusted", nums(fdr.adjusted)},
                                 {"reject", fdr.reject}}}};
        r["flags"] = merge_flags(lr.flags, merge_flags(cox.flags, cox_d.flags));
        run.finish(r);
        return r;
    });
}

Report run_phantom(const PipelineConfig& cfg, const RunOptions& opt) {
    Run run(cfg, opt, "phantom");
    return guarded(run, [&]() -> Report {
        const auto& ps = cfg.phantom;
        run.manifest.start("phantom");
        Report r = run.base();
        ordered_json next;  // ready-to-run config for the matching command
        next["rng_seed"] = cfg.rng_seed;
        auto dims_or = [&](Index3 d) {
            for (int k = 0; k < 3; ++k)
                if (ps.dims[k] > 0) d[k] = ps.dims[k];
            return d;
        };
        auto write_layout = [&](const HabitatLayout& l) {
            write_mask(run.out("brain.nii.gz"), l.brain);
            write_mask(run.out("et.nii.gz"), l.et);
            write_mask(run.out("edema.nii.gz"), l.edema);
            write_mask(run.out("t1ce_enh.nii.gz"), l.t1ce_enh);
            write_labels(run.out("truth_habitats.nii.gz"), l.truth);
            next["inputs"] = {{"brain_mask", "brain.nii.gz"}, {"et_mask", "et.nii.gz"}, {"edema_mask", "edema.nii.gz"},
                              {"t1ce_enh_mask", "t1ce_enh.nii.gz"}};
        };
        ordered_json res = {{"kind", ps.kind}};
        if (ps.kind == "cluster") {
            ClusterPhantomSpec spec;
            spec.dims = dims_or(spec.dims);
            spec.classes = ps.classes;
            spec.snr = ps.snr;
            ClusterPhantom ph = make_cluster_phantom(spec, cfg.rng_seed);
            write_volume(run.out("image.nii.gz"), ph.image);
            write_labels(run.out("truth.nii.gz"), ph.truth);
            next["inputs"] = {{"images", {"image.nii.gz"}}};
            next["segment"] = {{"classes", ps.classes}};
            res["dims"] = spec.dims;
            res["sigma"] = ph.sigma;
            res["levels"] = ph.levels;
            write_text(run.out("segment_config.json"), next.dump(2) + "\n");
        } else if (ps.kind == "habitat") {
            HabitatPhantomSpec spec;
            spec.dims = dims_or(spec.dims);
            if (ps.spacing > 0.0) spec.spacing = {ps.spacing, ps.spacing, ps.spacing};
            HabitatPhantom ph = make_habitat_phantom(spec, cfg.rng_seed);
            write_volume(run.out("rcbv.nii.gz"), ph.rcbv);
            write_volume(run.out("rcbf.nii.gz"), ph.rcbf);
            write_layout(ph.layout);
            next["inputs"]["rcbv"] = "rcbv.nii.gz";
            next["inputs"]["rcbf"] = "rcbf.nii.gz";
            res["dims"] = spec.dims;
            write_text(run.out("hts_config.json"), next.dump(2) + "\n");
        } else {
            DscPhantomSpec spec;
            spec.dims = dims_or(spec.dims);
            if (ps.spacing > 0.0) spec.spacing = {ps.spacing, ps.spacing, ps.spacing};
            spec.noise_sd = ps.noise_sd;
            spec.heterogeneity = ps.heterogeneity;
            spec.frames = ps.frames;
            spec.leakage_k2 = ps.leakage_k2;
            DscPhantom ph = make_dsc_phantom(spec, cfg.rng_seed);
            write_series(run.out("dsc.nii.gz"), ph.series);
            write_volume(run.out("true_cbv.nii.gz"), ph.true_cbv);
            write_volume(run.out("true_cbf.nii.gz"), ph.true_cbf);
            write_mask(run.out("arteries.nii.gz"), ph.arteries);
            write_layout(ph.layout);
            next["inputs"]["dsc"] = "dsc.nii.gz";
            next["perfusion"] = {{"te", spec.te}};
            res["dims"] = spec.dims;
            res["frames"] = spec.frames;
            write_text(run.out("hts_config.json"), next.dump(2) + "\n");
        }
        run.manifest.done();
        r["results"] = res;
        run.finish(r);
        return r;
    });
}

std::string md_cell(const ordered_json& v) {
    if (v.is_null()) return "n/a";
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

}  // namespace

Report run_pipeline(const PipelineConfig& cfg, const RunOptions& opt) { return run_hts(cfg, opt); }

Report run_command(const std::string& command, const PipelineConfig& cfg, const RunOptions& opt) {
    if (opt.format != "json" && opt.format != "markdown") fail(ErrorKind::usage, "cli", "bad-format", opt.format);
    if (command == "hts") return run_hts(cfg, opt);
    if (command == "perfuse") return run_perfuse(cfg, opt);
    if (command == "segment") return run_segment(cfg, opt);
    if (command == "labelid") return run_labelid(cfg, opt);
    if (command == "stats") return run_stats(cfg, opt);
    if (command == "phantom") return run_phantom(cfg, opt);
    fail(ErrorKind::usage, "cli", "unknown-command", command);
}

std::string report_body(const Report& report) {
    Report body = report;
    body.erase("generated_at");
    return body.dump(2);
}

std::string render_markdown(const Report& r) {
    std::ostringstream md;
    md << "# hablab " << md_cell(r.at("command")) << " report\n\n";
    md << "Generated: " << md_cell(r.at("generated_at")) << "\n\n";
    const auto& pv = r.at("provenance");
    md << "| tool | version | config hash | rng seed | threads |\n|---|---|---|---|---|\n";
    md << "| " << md_cell(pv.at("tool")) << " | " << md_cell(pv.at("version")) << " | " << md_cell(pv.at("config_hash"))
       << " | " << md_cell(pv.at("rng_seed")) << " | " << md_cell(pv.at("threads")) << " |\n\n";
    if (r.contains("volumetry")) {
        const auto& v = r.at("volumetry");
        md << "## Volumetry\n\nIntracranial volume: " << md_cell(v.at("intracranial_cm3")) << " cm3\n\n";
        md << "| region | voxels | volume (cm3) | relative volume |\n|---|---|---|---|\n";
        for (const char* key : {"regions", "habitats"})
            for (const auto& e : v.at(key))
                md << "| " << md_cell(e.at("name")) << " | " << md_cell(e.at("voxels")) << " | "
                   << md_cell(e.at("volume_cm3")) << " | " << md_cell(e.at("relative_volume")) << " |\n";
        md << "\n";
    }
    static const char* kMarkerCols[] = {"voxels", "rcbv_max", "rcbf_max", "rcbv_median", "rcbf_median", "rcbv_mad", "rcbf_mad"};
    if (r.contains("markers")) {
        md << "## Habitat markers\n\n| habitat";
        for (const char* c : kMarkerCols) md << " | " << c;
        md << " |\n|---";
        for (std::size_t k = 0; k < std::size(kMarkerCols); ++k) md << "|---";
        md << "|\n";
        for (const auto& m : r.at("markers")) {
            md << "| " << md_cell(m.at("habitat"));
            for (const char* c : kMarkerCols) md << " | " << md_cell(m.at(c));
            md << " |\n";
        }
        md << "\nRadar chart data (CSV):\n\n```csv\nhabitat";
        for (const char* c : kMarkerCols) md << "," << c;
        md << "\n";
        for (const auto& m : r.at("markers")) {
            md << md_cell(m.at("habitat"));
            for (const char* c : kMarkerCols) md << "," << md_cell(m.at(c));
            md << "\n";
        }
        md << "```\n\n";
    }
    if (r.contains("constraint_log")) {
        md << "## Constraint log\n\n";
        if (r.at("constraint_log").empty()) md << "(no entries)\n";
        for (const auto& e : r.at("constraint_log")) md << "- " << md_cell(e) << "\n";
        md << "\n";
    }
    if (r.contains("flags")) {
        md << "## Flags\n\n";
        if (r.at("flags").empty()) md << "(none)\n";
        for (const auto& e : r.at("flags")) md << "- " << md_cell(e) << "\n";
        md << "\n";
    }
    if (r.contains("curves")) {
        const auto& c = r.at("curves");
        md << "## Prototypical curves (median concentration, CSV)\n\n```csv\nt";
        for (const auto& s : c.at("series")) md << "," << md_cell(s.at("name"));
        md << "\n";
        for (std::size_t k = 0; k < c.at("t").size(); ++k) {
            md << md_cell(c.at("t")[k]);
            for (const auto& s : c.at("series")) md << "," << (s.at("values").is_null() ? "n/a" : md_cell(s.at("values")[k]));
            md << "\n";
        }
        md << "```\n\n";
    }
    if (r.contains("results")) md << "## Results\n\n```json\n" << r.at("results").dump(2) << "\n```\n\n";
    if (r.contains("diagnostics")) md << "## Diagnostics\n\n```json\n" << r.at("diagnostics").dump(2) << "\n```\n\n";
    if (r.contains("outputs")) {
        md << "## Outputs\n\n";
        for (const auto& o : r.at("outputs")) md << "- " << md_cell(o) << "\n";
    }
    return md.str();
}

void emit_report(const Report& report, const std::string& path, const std::string& format) {
    if (format == "json") {
        write_text(path, report.dump(2) + "\n");
    } else if (format == "markdown") {
        write_text(path, render_markdown(report));
    } else {
        fail(ErrorKind::usage, "cli", "bad-format", format);
    }
}

}  // namespace hablab
