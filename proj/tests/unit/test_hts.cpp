#include "doctest.h"

#include <cmath>

#include "hablab/error.hpp"
#include "hablab//hts.hpp"
#include "hablab/morphology.hpp"
#include "hablab/phantom.hpp"
#include "hablab/stats.hpp"

using namespace hablab;

TEST_CASE("habitat phantom is recovered") {
    HabitatPhantomSpec spec;
    spec.dims = {72, 24, 6};
    HabitatPhantom ph = make_habitat_phantom(spec, 1);
    const auto& L = ph.layout;
    Stage1Result s1 = hts_stage1(ph.rcbv, ph.rcbf, L.et, L.edema, L.t1ce_enh);
    HabitatMap hm = hts_stage2(ph.rcbv, ph.rcbf, s1, L.t1ce_enh);
    for (int h = HAT; h <= VPE; ++h) {
        SegMetrics m = seg_metrics(hm.labels.select(h), L.truth.select(h));
        CHECK_MESSAGE(m.dice >= 0.9, habitat_name(h));
    }
    Mask band = distance_band(L.t1ce_enh, 20.0);
    Mask ipe = hm.labels.select(IPE);
    CHECK(mask_minus(ipe, band).count() == 0);

    auto mk = habitat_markers(hm, ph.rcbv, ph.rcbf, L.brain);
    CHECK(mk[0].rcbv_median > mk[1].rcbv_median);
    CHECK(mk[1].rcbv_median > mk[2].rcbv_median);
    CHECK(mk[2].rcbv_median > mk[3].rcbv_median);
    for (const auto& m : mk) {
        CHECK_FALSE(m.empty);
        CHECK(m.rcbv_max >= m.rcbv_median);
    }
}

TEST_CASE("stage one rejects an empty enhancing tumour") {
    HabitatPhantomSpec spec;
    spec.dims = {72, 16, 4};
    HabitatPhantom ph = make_habitat_phantom(spec, 2);
    Mask empty(ph.layout.et.geo);
    CHECK_THROWS_AS(hts_stage1(ph.rcbv, ph.rcbf, empty, ph.layout.edema, ph.layout.t1ce_enh), Error);
}

TEST_CASE("overlapping edema is removed from the edema mask and logged") {
    HabitatPhantomSpec spec;
    spec.dims = {72, 16, 4};
    HabitatPhantom ph = make_habitat_phantom(spec, 3);
    Mask edema = mask_or(ph.layout.edema, ph.layout.et);
    Stage1Result s1 = hts_stage1(ph.rcbv, ph.rcbf, ph.layout.et, edema, ph.layout.t1ce_enh);
    CHECK(mask_and(s1.et_dsc, s1.ed_dsc).count() == 0);
    CHECK_FALSE(s1.log.empty());
}

TEST_CASE("markers of an empty habitat are flagged empty") {
    Geometry g;
    g.dims = {4, 4, 1};
    HabitatMap hm;
    hm.labels = LabelMap(g, 0);
    hm.labels.data[0] = HAT;
    Volume v(g, 2.0);
    auto mk = habitat_markers(hm, v, v, Mask(g, true));
    CHECK_FALSE(mk[0].empty);
    CHECK(mk[0].relative_volume == doctest::Approx(1.0 / 16.0));
    CHECK(mk[1].empty);
    CHECK(mk[3].voxels == 0);
}
