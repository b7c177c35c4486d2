import json
import pathlib

import numpy as np
import pytest

import hablab

SCHEMA = pathlib.Path(__file__).resolve().parents[2] / "schema" / "report.schema.json"


def test_segment_cluster_phantom():
    ph = hablab.cluster_phantom(dims=(32, 32, 1), classes=3, snr=8.0, seed=1)
    labels = hablab.segment(ph["image"], algorithm="svfmm", classes=3, max_iter=30, seed=1)
    assert labels.shape == ph["image"].shape
    assert set(np.unique(labels)) <= {1, 2, 3}
    assert hablab.rand_index(labels.ravel().tolist(), ph["truth"].ravel().tolist()) > 0.9


def test_seg_metrics_identical_masks():
    m = np.zeros((8, 8), dtype=np.int32)
    m[2:5, 2:5] = 1
    s = hablab.seg_metrics(m, m)
    assert s["dice"] == pytest.approx(1.0)
    assert s["kappa"] == pytest.approx(1.0)


def test_hts_phantom_recovers_habitats():
    ph = hablab.habitat_phantom(seed=3)
    out = hablab.hts(ph["rcbv"], ph["rcbf"], ph["et"], ph["edema"], ph["t1ce_enh"])
    hab, truth = out["habitats"], ph["truth"]
    for h in range(1, 5):
        a, b = hab == h, truth == h
        dice = 2 * np.sum(a & b) / (np.sum(a) + np.sum(b))
        assert dice > 0.9


def test_survival_tools():
    t = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
    e = [1, 1, 0, 1, 1, 0]
    steps = hablab.kaplan_meier(t, e)
    assert steps[0]["survival"] == pytest.approx(5 / 6)
    chi2, p = hablab.logrank(t[:3], e[:3], t[3:], e[3:])
    assert chi2 >= 0 and 0 <= p <= 1
    cox = hablab.cox_fit(t, e, [[0.1], [0.5], [0.2], [0.9], [0.4], [0.3]])
    assert len(cox["hr"]) == 1
    adj, rej = hablab.fdr_correct([0.01, 0.04, 0.03], 0.05)
    assert adj == pytest.approx([0.03, 0.04, 0.04])
    assert rej == [True, True, True]


def test_deconvolution_recovers_flow():
    dt = 1.0
    n = 60
    t = np.arange(n) * dt
    aif = np.where(t > 5, (t - 5) ** 3 * np.exp(-(t - 5) / 1.5), 0.0)
    cbf, mtt = 0.01, 4.0
    residue = np.exp(-t / mtt)
    tissue = cbf * dt * np.convolve(aif, residue)[:n]
    r = hablab.deconvolve(tissue.tolist(), aif.tolist(), dt, oscillation_index=True)
    assert r["cbf"] == pytest.approx(cbf, rel=0.1)


def test_volume_roundtrip(tmp_path):
    a = np.random.default_rng(0).normal(size=(5, 4, 3))
    path = str(tmp_path / "v.nii.gz")
    hablab.write_volume(path, a, (1.0, 2.0, 3.0))
    b, spacing = hablab.read_volume(path)
    assert np.allclose(a, b, rtol=1e-6, atol=1e-6)
    assert tuple(spacing) == pytest.approx((1.0, 2.0, 3.0))


def test_phantom_then_hts_report_validates(tmp_path):
    jsonschema = pytest.importorskip("jsonschema")
    hablab.run("phantom", out_dir=str(tmp_path / "ph"), seed=5)
    configs = list((tmp_path / "ph").glob("*config.json"))
    assert configs
    hts_cfg = [c for c in configs if c.name.startswith("hts")]
    report = hablab.run("hts", config=str(hts_cfg[0] if hts_cfg else configs[0]),
                        out_dir=str(tmp_path / "hts"), format="markdown")
    schema = json.loads(SCHEMA.read_text())
    jsonschema.validate(report, schema)
    on_disk = json.loads((tmp_path / "hts" / "report.json").read_text())
    jsonschema.validate(on_disk, schema)
    assert (tmp_path / "hts" / "report.md").exists()
    manifest = json.loads((tmp_path / "hts" / "MANIFEST.json").read_text())
    assert manifest["complete"] is True


def test_errors_are_raised():
    with pytest.raises(hablab.HablabError):
        hablab.run("hts", config="", out_dir="/nonexistent/dir/for/test")
    with pytest.raises(ValueError):
        hablab.segment(np.zeros(5))
