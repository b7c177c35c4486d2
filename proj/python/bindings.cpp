#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "hablab/clustering.hpp"
#include "hablab/config.hpp"
#include "hablab/error.hpp"
#include "hablab/hts.hpp"
#include "hablab/io.hpp"
#include "hablab/perfusion.hpp"
#include "hablab/phantom.hpp"
#include "hablab/pipeline.hpp"
#include "hablab/schema.hpp"
#include "hablab/stats.hpp"
#include "hablab/svfmm.hpp"

namespace py = pybind11;
using namespace hablab;

namespace {

// Arrays are (nx, ny[, nz]) with x fastest in memory, matching the on-disk order.
using FArray = py::array_t<double, py::array::f_style | py::array::forcecast>;
using IArray = py::array_t<int, py::array::f_style | py::array::forcecast>;

Geometry geometry_of(const py::array& a, const std::array<double, 3>& spacing) {
    if (a.ndim() < 2 || a.ndim() > 3) throw py::value_error("expected a 2-D or 3-D array");
    Geometry g;
    g.dims = {int(a.shape(0)), int(a.shape(1)), a.ndim() == 3 ? int(a.shape(2)) : 1};
    g.spacing = spacing;
    g.validate();
    return g;
}

Volume to_volume(const FArray& a, const std::array<double, 3>& spacing) {
    Volume v(geometry_of(a, spacing));
    std::copy(a.data(), a.data() + v.size(), v.data.begin());
    return v;
}

Mask to_mask(const IArray& a, const std::array<double, 3>& spacing) {
    Mask m(geometry_of(a, spacing));
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = a.data()[i] != 0;
    return m;
}

std::vector<py::ssize_t> shape_of(const Geometry& g) {
    if (g.dims[2] == 1) return {g.dims[0], g.dims[1]};
    return {g.dims[0], g.dims[1], g.dims[2]};
}

template <typename T, typename Src>
py::array_t<T, py::array::f_style> to_array(const Geometry& g, const Src& data) {
    py::array_t<T, py::array::f_style> out(shape_of(g));
    std::copy(data.begin(), data.end(), out.mutable_data());
    return out;
}

py::object to_python(const nlohmann::ordered_json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

std::vector<SurvivalRecord> records(const std::vector<double>& time, const std::vector<int>& event,
                                    const std::vector<std::vector<double>>& covariates = {}) {
    if (time.size() != event.size()) throw py::value_error("time and event lengths differ");
    std::vector<SurvivalRecord> r(time.size());
    for (std::size_t i = 0; i < time.size(); ++i) {
        r[i].time = time[i];
        r[i].event = event[i] != 0;
        if (!covariates.empty()) r[i].covariates = covariates.at(i);
    }
    return r;
}

const std::array<double, 3> kUnit{1.0, 1.0, 1.0};

}  // namespace

PYBIND11_MODULE(_hablab, m) {
    m.doc() = "Structured mixture segmentation, DSC perfusion and vascular habitat analysis";
    m.attr("__version__") = kVersion;

    static py::exception<Error> error_type(m, "HablabError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            error_type(e.what());
        }
    });

    m.def(
        "cluster_phantom",
        [](std::array<int, 3> dims, int classes, double snr, std::uint64_t seed) {
            ClusterPhantomSpec s;
            s.dims = dims;
            s.classes = classes;
            s.snr = snr;
            ClusterPhantom ph = make_cluster_phantom(s, seed);
            py::dict d;
            d["image"] = to_array<double>(ph.image.geo, ph.image.data);
            d["truth"] = to_array<int>(ph.truth.geo, ph.truth.data);
            d["sigma"] = ph.sigma;
            return d;
        },
        py::arg("dims") = std::array<int, 3>{64, 64, 1}, py::arg("classes") = 7, py::arg("snr") = 5.0,
        py::arg("seed") = 0);

    m.def(
        "habitat_phantom",
        [](std::uint64_t seed) {
            HabitatPhantom ph = make_habitat_phantom(HabitatPhantomSpec{}, seed);
            const auto& L = ph.layout;
            py::dict d;
            d["rcbv"] = to_array<double>(ph.rcbv.geo, ph.rcbv.data);
            d["rcbf"] = to_array<double>(ph.rcbf.geo, ph.rcbf.data);
            d["truth"] = to_array<int>(L.truth.geo, L.truth.data);
            d["brain"] = to_array<int>(L.brain.geo, L.brain.data);
            d["et"] = to_array<int>(L.et.geo, L.et.data);
            d["edema"] = to_array<int>(L.edema.geo, L.edema.data);
            d["t1ce_enh"] = to_array<int>(L.t1ce_enh.geo, L.t1ce_enh.data);
            return d;
        },
        py::arg("seed") = 0);

    m.def(
        "segment",
        [](const FArray& image, const std::string& algorithm, int classes, int max_iter, std::uint64_t seed) {
            Volume v = to_volume(image, kUnit);
            FeatureStack fs = stack_volumes({&v}, {"image"}, Mask(v.geo, true));
            auto seeds = kmeanspp_protocol(fs.values, classes, 20, 3, seed);
            auto km = best_kmeans(fs.values, seeds);
            auto init = components_from_labels(fs.values, km.labels, classes);
            auto ns = NeighborhoodSystem::make(NeighborhoodMode::full_grouped, v.geo.is2d());
            SvfmmOptions o;
            o.max_iter = max_iter;
            std::vector<int> labels;
            std::vector<GaussianComponent> comps;
            if (algorithm == "kmeans") {
                labels = km.labels;
                comps = init;
            } else if (algorithm == "gmm") {
                GmmResult g = gmm_em(fs.values, init, max_iter);
                labels = argmax_rows(g.resp);
                comps = g.components;
            } else {
                SvfmmResult r;
                if (algorithm == "svfmm") r = svfmm_fit(fs, ns, init, o);
                else if (algorithm == "dcm_svfmm") r = dcm_svfmm_fit(fs, ns, init, o);
                else if (algorithm == "st_svfmm") r = st_svfmm_fit(fs, ns, init, o);
                else if (algorithm == "nlsvfmm_voxel") r = nlsvfmm_fit(fs, ns, init, NlmMode::voxel, o);
                else if (algorithm == "nlsvfmm_patch") r = nlsvfmm_fit(fs, ns, init, NlmMode::patch, o);
                else throw py::value_error("unknown algorithm " + algorithm);
                labels = posterior_segment(r);
                comps = r.components;
            }
            // Labels 1..K by ascending class mean.
            std::vector<int> order(classes), rank(classes);
            for (int j = 0; j < classes; ++j) order[j] = j;
            std::sort(order.begin(), order.end(), [&](int a, int b) { return comps[a].mean(0) < comps[b].mean(0); });
            for (int r = 0; r < classes; ++r) rank[order[r]] = r + 1;
            for (int& l : labels) l = rank[l];
            return to_array<int>(v.geo, labels);
        },
        py::arg("image"), py::arg("algorithm") = "nlsvfmm_patch", py::arg("classes") = 3, py::arg("max_iter") = 100,
        py::arg("seed") = 0);

    m.def(
        "seg_metrics",
        [](const IArray& pred, const IArray& truth) {
            SegMetrics s = seg_metrics(to_mask(pred, kUnit), to_mask(truth, kUnit));
            py::dict d;
            d["dice"] = s.dice;
            d["ppv"] = s.ppv;
            d["sensitivity"] = s.sensitivity;
            d["kappa"] = s.kappa;
            d["flags"] = s.flags;
            return d;
        },
        py::arg("pred"), py::arg("truth"));
    m.def("rand_index", &rand_index, py::arg("a"), py::arg("b"));
    m.def("separability", &separability, py::arg("sets"));

    m.def(
        "kaplan_meier",
        [](const std::vector<double>& time, const std::vector<int>& event) {
            py::list out;
            for (const auto& s : kaplan_meier(records(time, event)).steps) {
                py::dict d;
                d["time"] = s.time;
                d["at_risk"] = s.at_risk;
                d["events"] = s.events;
                d["censored"] = s.censored;
                d["survival"] = s.survival;
                out.append(d);
            }
            return out;
        },
        py::arg("time"), py::arg("event"));
    m.def(
        "logrank",
        [](const std::vector<double>& ta, const std::vector<int>& ea, const std::vector<double>& tb,
           const std::vector<int>& eb) {
            LogRankResult r = logrank(records(ta, ea), records(tb, eb));
            return py::make_tuple(r.chi2, r.p);
        },
        py::arg("time_a"), py::arg("event_a"), py::arg("time_b"), py::arg("event_b"));
    m.def(
        "cox_fit",
        [](const std::vector<double>& time, const std::vector<int>& event,
           const std::vector<std::vector<double>>& covariates) {
            CoxResult c = cox_fit(records(time, event, covariates));
            auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
            py::dict d;
            d["beta"] = vec(c.beta);
            d["se"] = vec(c.se);
            d["hr"] = vec(c.hr);
            d["ci_low"] = vec(c.ci_low);
            d["ci_high"] = vec(c.ci_high);
            d["wald_p"] = vec(c.wald_p);
            d["flags"] = c.flags;
            return d;
        },
        py::arg("time"), py::arg("event"), py::arg("covariates"));
    m.def(
        "fdr_correct",
        [](const std::vector<double>& p, double alpha) {
            FdrResult f = fdr_correct(p, alpha);
            return py::make_tuple(f.adjusted, std::vector<bool>(f.reject.begin(), f.reject.end()));
        },
        py::arg("pvals"), py::arg("alpha") = 0.05);

    m.def(
        "deconvolve",
        [](const std::vector<double>& tissue, const std::vector<double>& aif, double dt, double threshold,
           bool oscillation_index) {
            DeconvOptions o;
            o.threshold = threshold;
            o.oscillation_index = oscillation_index;
            DeconvResult r = osvd_deconvolve(tissue, aif, dt, o);
            py::dict d;
            d["cbf"] = r.cbf;
            d["mtt"] = r.mtt;
            d["residue"] = r.residue;
            d["threshold"] = r.threshold;
            return d;
        },
        py::arg("tissue"), py::arg("aif"), py::arg("dt") = 1.0, py::arg("threshold") = 0.10,
        py::arg("oscillation_index") = false);
    m.def(
        "fit_gamma_variate",
        [](const std::vector<double>& t, const std::vector<double>& c) {
            GammaVariateFit f = fit_gamma_variate(ConcentrationCurve{t, c, 5});
            py::dict d;
            d["K"] = f.K;
            d["t0"] = f.t0;
            d["alpha"] = f.alpha;
            d["beta"] = f.beta;
            d["r2"] = f.r2;
            return d;
        },
        py::arg("t"), py::arg("c"));

    m.def(
        "hts",
        [](const FArray& rcbv, const FArray& rcbf, const IArray& et, const IArray& edema, const IArray& t1ce_enh,
           std::array<double, 3> spacing) {
            Volume v = to_volume(rcbv, spacing), f = to_volume(rcbf, spacing);
            Mask enh = to_mask(t1ce_enh, spacing);
            Stage1Result s1 = hts_stage1(v, f, to_mask(et, spacing), to_mask(edema, spacing), enh);
            HabitatMap hm = hts_stage2(v, f, s1, enh);
            py::dict d;
            d["habitats"] = to_array<int>(hm.labels.geo, hm.labels.data);
            d["log"] = hm.log;
            d["flags"] = hm.flags;
            return d;
        },
        py::arg("rcbv"), py::arg("rcbf"), py::arg("et"), py::arg("edema"), py::arg("t1ce_enh"),
        py::arg("spacing") = kUnit);

    m.def(
        "read_volume",
        [](const std::string& path) {
            Volume v = read_volume(path);
            return py::make_tuple(to_array<double>(v.geo, v.data), v.geo.spacing);
        },
        py::arg("path"));
    m.def(
        "write_volume",
        [](const std::string& path, const FArray& a, std::array<double, 3> spacing) {
            write_volume(path, to_volume(a, spacing));
        },
        py::arg("path"), py::arg("array"), py::arg("spacing") = kUnit);

    m.def(
        "run",
        [](const std::string& command, const std::string& config_path, const std::string& out_dir,
           const std::string& format, std::optional<std::uint64_t> seed) {
            PipelineConfig cfg;
            if (!config_path.empty()) cfg = load_config(config_path);
            if (seed) cfg.rng_seed = *seed;
            RunOptions o;
            o.out_dir = out_dir;
            o.format = format;
            return to_python(run_command(command, cfg, o));
        },
        py::arg("command"), py::arg("config") = "", py::arg("out_dir") = ".", py::arg("format") = "json",
        py::arg("seed") = py::none());
    m.def("report_schema", []() { return to_python(nlohmann::ordered_json(report_schema())); });
}
