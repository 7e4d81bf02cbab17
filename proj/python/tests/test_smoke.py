import io
import itertools
import json
import pathlib

import numpy as np
import pytest
from PIL import Image
from PIL.TiffImagePlugin import IFDRational

import hazardpipe as hp

DATA = pathlib.Path(__file__).resolve().parents[2] / "tests" / "data"


def read_jsonl(path, key):
    out = {}
    for line in path.read_text().splitlines():
        if line.strip():
            row = json.loads(line)
            out[row["image_id"]] = row[key]
    return out


def test_evaluate_micro_fixture_matches_cli_values():
    preds = read_jsonl(DATA / "micro_preds.jsonl", "detections")
    truth = read_jsonl(DATA / "micro_truth.jsonl", "boxes")
    m = hp.evaluate(preds, truth)
    assert m["box_precision"] == pytest.approx(0.6, abs=1e-12)
    assert m["recall"] == pytest.approx(1.0, abs=1e-12)
    assert m["map_50"] == pytest.approx(0.611111111111, abs=1e-9)
    assert m["map_50_95"] <= m["map_50"]


def test_evaluate_single_box_iou_threshold():
    truth = {"a": [{"box": [0, 0, 10, 10], "class": "metal_can"}]}
    # IoU of a 10x10 box against a 10x6 box inside it is 0.6.
    inside = {"a": [{"box": [0, 0, 10, 6], "class": "metal_can", "score": 0.9}]}
    m = hp.evaluate(inside, truth)
    assert m["box_precision"] == 1.0
    assert m["recall"] == 1.0
    assert m["map_50_95"] == pytest.approx(3 / 10)
    wrong_class = {"a": [{"box": [0, 0, 10, 10], "class": "other", "score": 0.9}]}
    assert hp.evaluate(wrong_class, truth)["recall"] == 0.0


def test_evaluate_rejects_unknown_class():
    with pytest.raises(hp._hazardpipe.HazardpipeError):
        hp.evaluate({"a": [{"box": [0, 0, 1, 1], "class": "banana", "score": 0.5}]}, {})


def test_cam_matches_numpy_and_is_scale_invariant():
    rng = np.random.default_rng(3)
    for _ in range(20):
        f = np.maximum(rng.normal(size=(6, 4, 5)), 0.0)
        w = rng.normal(size=6)
        raw = np.maximum(np.tensordot(w, f, axes=1), 0.0)
        span = raw.max() - raw.min()
        want = (raw - raw.min()) / span if span > 0 else np.zeros_like(raw)
        got = hp.cam(f, w)
        np.testing.assert_allclose(got["grid"], want, atol=1e-12)
        assert got["peak"] == np.unravel_index(np.argmax(want), want.shape)
        scaled = hp.cam(f, w * 37.5)
        np.testing.assert_allclose(scaled["grid"], got["grid"], atol=1e-12)
    up = hp.cam(f, w, width=20, height=16)["upsampled"]
    assert up.shape == (16, 20)
    assert 0.0 <= up.min() and up.max() <= 1.0


def test_lime_recovers_planted_linear_weights():
    w = [0.8, -1.2, 0.5, 2.0, -0.3, 1.1]

    def predict(z):
        return 0.25 + sum(wi * zi for wi, zi in zip(w, z))

    e = hp.lime_fit(predict, rows=2, cols=3, exhaustive=True, kernel_width=0.75)
    assert e["n_samples"] == 64
    for got, want in zip(e["cell_importance"], w):
        assert abs(got - want) <= 0.05 * abs(want)
    assert e["top_k"][0] == 3


def test_lime_seeded_runs_repeat_and_constant_is_flat():
    def predict(z):
        return float(np.sin(np.arange(len(z))) @ np.asarray(z, dtype=float))

    a = hp.lime_fit(predict, seed=11)
    b = hp.lime_fit(predict, seed=11)
    assert json.dumps(a) == json.dumps(b)
    flat = hp.lime_fit(lambda z: 4.0, seed=2)
    assert max(abs(v) for v in flat["cell_importance"]) < 1e-6


def test_consensus_three_vote_enumeration():
    creds = [0.25, 0.5, 1.0]
    for bits in itertools.product([False, True], repeat=3):
        score = sum(c for c, b in zip(creds, bits) if b) / sum(creds)
        assert hp.consensus_score(creds, list(bits)) == score
        want = "confirmed" if score >= 0.7 else "rejected" if score <= 0.3 else "escalated"
        assert hp.decide(creds, list(bits))["status"] == want
    assert hp.decide([0.5, 0.5], [True, True])["status"] == "pending"
    assert hp.decide([], [], uncertainty=0.9)["status"] == "escalated"


def gps_jpeg(lat, lon):
    img = Image.new("RGB", (64, 48), (120, 160, 200))
    exif = Image.Exif()
    exif[0x010F] = "TestCam"
    exif[0x0112] = 1

    def dms(v):
        v = abs(v)
        d = int(v)
        m = int((v - d) * 60)
        s = round(((v - d) * 60 - m) * 60 * 100)
        return (IFDRational(d, 1), IFDRational(m, 1), IFDRational(s, 100))

    gps = exif.get_ifd(0x8825)
    gps[1] = "N" if lat >= 0 else "S"
    gps[2] = dms(lat)
    gps[3] = "E" if lon >= 0 else "W"
    gps[4] = dms(lon)
    buf = io.BytesIO()
    img.save(buf, format="JPEG", exif=exif)
    return buf.getvalue()


def test_anonymize_strips_gps_and_keeps_pixels():
    raw = gps_jpeg(39.5696, 2.6502)
    assert hp.has_gps(raw)
    lat, lon = hp.extract_geotag(raw)
    assert lat == pytest.approx(39.5696, abs=1e-5)
    assert lon == pytest.approx(2.6502, abs=1e-5)
    clean = hp.anonymize(raw)
    assert not hp.has_gps(clean)
    assert hp.extract_geotag(clean) is None
    assert hp.anonymize(clean) == clean
    before = np.asarray(Image.open(io.BytesIO(raw)))
    after = np.asarray(Image.open(io.BytesIO(clean)))
    assert np.array_equal(before, after)
    assert Image.open(io.BytesIO(clean)).getexif().get(0x0112) == 1


def test_small_scenario_summary():
    r = hp.run_scenario(seed=5, n_images=200, n_sites=10)
    m = r["metrics"]
    assert 0.0 <= m["map_50_95"] <= m["map_50"] <= 1.0
    assert 0.0 < r["agreement"] <= 1.0
    assert r["sites_planted"] == 10
    assert r["replay_consistent"]
    assert r["metrics_csv"].startswith("row,")
    again = hp.run_scenario(seed=5, n_images=200, n_sites=10)
    assert again["metrics"] == m
