#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "hablab/config.hpp"
#include "hablab/error.hpp"
#include "hablab/io.hpp"
#include "hablab/pipeline.hpp"
#include "hablab/rng.hpp"
#include "hablab/schema.hpp"

using namespace hablab;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("hablab_unit_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Volume random_volume(std::uint64_t seed) {
    Geometry g;
    g.dims = {5, 4, 3};
    g.spacing = {0.5, 1.25, 3.0};
    Volume v(g);
    Rng rng(seed);
    for (auto& x : v.data) x = rng.normal() * 1e3;
    return v;
}
}  // namespace

TEST_CASE("raw format round trip is bit-exact") {
    auto dir = scratch("raw");
    Volume v = random_volume(1);
    write_volume((dir / "v.raw").string(), v);
    CHECK(fs::exists(dir / "v.json"));
    Volume w = read_volume((dir / "v.raw").string());
    CHECK(w.geo.dims == v.geo.dims);
    CHECK(w.geo.spacing == v.geo.spacing);
    CHECK(std::memcmp(w.data.data(), v.data.data(), v.data.size() * sizeof(double)) == 0);
}

TEST_CASE("raw sidecar size mismatch is reported") {
    auto dir = scratch("raw_bad");
    write_volume((dir / "v.raw").string(), random_volume(2));
    fs::resize_file(dir / "v.raw", 8);
    try {
        read_volume((dir / "v.raw").string());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.tag() == "dim-mismatch");
    }
}

TEST_CASE("nifti plain and gzip agree") {
    auto dir = scratch("nifti");
    Volume v = random_volume(3);
    write_volume((dir / "a.nii").string(), v);
    write_volume((dir / "a.nii.gz").string(), v);
    Volume a = read_volume((dir / "a.nii").string());
    Volume b = read_volume((dir / "a.nii.gz").string());
    CHECK(a.data == b.data);
    CHECK(a.geo.spacing == v.geo.spacing);
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(a.data[i] == double(float(v.data[i])));
}

TEST_CASE("series, labels and masks round trip") {
    auto dir = scratch("series");
    Geometry g;
    g.dims = {3, 2, 2};
    VolumeSeries s(g, 4, 1.5);
    for (std::size_t i = 0; i < s.data.size(); ++i) s.data[i] = double(i);
    write_series((dir / "s.nii.gz").string(), s);
    VolumeSeries t = read_series((dir / "s.nii.gz").string());
    CHECK(t.frames == 4);
    CHECK(t.dt == 1.5);
    CHECK(t.data == s.data);

    LabelMap l(g);
    l.data[3] = 7;
    write_labels((dir / "l.nii.gz").string(), l);
    CHECK(read_labels((dir / "l.nii.gz").string()).data == l.data);
    Mask m(g);
    m.data[1] = 1;
    write_mask((dir / "m.raw").string(), m);
    CHECK(read_mask((dir / "m.raw").string()).data == m.data);
}

TEST_CASE("malformed nifti header is rejected") {
    auto dir = scratch("badnii");
    std::ofstream((dir / "x.nii").string()) << "not a nifti file";
    CHECK_THROWS_AS(read_volume((dir / "x.nii").string()), Error);
}

TEST_CASE("config rejects unknown keys and out-of-range values") {
    CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"nope": 1})")), Error);
    CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"hts": {"coverage": 2}})")), Error);
    CHECK_THROWS_AS(parse_config(nlohmann::json::parse(R"({"segment": {"classes": "three"}})")), Error);
    PipelineConfig c = parse_config(nlohmann::json::parse(R"({"rng_seed": 4, "hts": {"min_frac": 0.2}})"));
    CHECK(c.rng_seed == 4);
    CHECK(c.hts.min_frac == 0.2);
}

TEST_CASE("config hash ignores the thread count") {
    PipelineConfig a, b;
    b.threads = 8;
    CHECK(a.hash() == b.hash());
    b.rng_seed = 1;
    CHECK(a.hash() != b.hash());
}

TEST_CASE("schema validator") {
    auto schema = nlohmann::json::parse(R"({"type":"object","required":["a"],"additionalProperties":false,
        "properties":{"a":{"type":"number","minimum":0},"b":{"enum":["x","y"]}}})");
    CHECK(validate_json(nlohmann::json::parse(R"({"a":1,"b":"x"})"), schema).empty());
    CHECK_FALSE(validate_json(nlohmann::json::parse(R"({"b":"x"})"), schema).empty());
    CHECK_FALSE(validate_json(nlohmann::json::parse(R"({"a":-1})"), schema).empty());
    CHECK_FALSE(validate_json(nlohmann::json::parse(R"({"a":1,"b":"z"})"), schema).empty());
    CHECK_FALSE(validate_json(nlohmann::json::parse(R"({"a":1,"c":2})"), schema).empty());
}

TEST_CASE("phantom then hts pipeline is deterministic and schema-valid") {
    auto dir = scratch("pipeline");
    PipelineConfig pc;
    pc.rng_seed = 5;
    pc.phantom.kind = "dsc";
    pc.phantom.dims = {30, 12, 3};
    RunOptions po;
    po.out_dir = (dir / "phantom").string();
    run_command("phantom", pc, po);

    PipelineConfig cfg = load_config((dir / "phantom" / "hts_config.json").string());
    RunOptions o1, o2;
    o1.out_dir = (dir / "a").string();
    o1.format = "markdown";
    o2.out_dir = (dir / "b").string();
    Report r1 = run_pipeline(cfg, o1);
    Report r2 = run_pipeline(cfg, o2);
    CHECK(report_body(r1) == report_body(r2));
    CHECK(validate_json(nlohmann::json::parse(r1.dump()), report_schema()).empty());
    CHECK(fs::exists(dir / "a" / "report.md"));
    CHECK(fs::exists(dir / "a" / "habitats.nii.gz"));
    auto manifest = nlohmann::json::parse(std::ifstream((dir / "a" / "MANIFEST.json").string()));
    CHECK(manifest["complete"] == true);

    std::string md = render_markdown(r1);
    for (const auto& m : r1["markers"]) {
        if (!m["rcbv_median"].is_null()) CHECK(md.find(m["rcbv_median"].dump()) != std::string::npos);
    }
}

TEST_CASE("missing input is a usage error with a partial manifest") {
    auto dir = scratch("missing");
    PipelineConfig cfg;
    RunOptions o;
    o.out_dir = dir.string();
    try {
        run_pipeline(cfg, o);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::usage);
    }
    auto manifest = nlohmann::json::parse(std::ifstream((dir / "MANIFEST.json").string()));
    CHECK(manifest["complete"] == false);
}

TEST_CASE("empty habitat renders as n/a") {
    Report r;
    r["generated_at"] = "t";
    r["command"] = "hts";
    r["provenance"] = {{"tool", "hablab"}, {"version", "x"}, {"config_hash", "0"}, {"rng_seed", 0}, {"threads", 1},
                       {"config", nlohmann::ordered_json::object()}};
    r["markers"] = nlohmann::ordered_json::array();
    r["markers"].push_back({{"habitat", "HAT"}, {"empty", true}, {"voxels", 0}, {"rcbv_max", nullptr},
                            {"rcbf_max", nullptr}, {"rcbv_median", nullptr}, {"rcbf_median", nullptr},
                            {"rcbv_mad", nullptr}, {"rcbf_mad", nullptr}});
    CHECK(validate_json(nlohmann::json::parse(r.dump()), report_schema()).empty());
    CHECK(render_markdown(r).find("| HAT | 0 | n/a | n/a") != std::string::npos);
}
