from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from curveface.cli import main
from curveface.config import PipelineConfig, apply_overrides, load_config, parse_config
from curveface.features import read_vector
from curveface.formats import (ManifestRecord, decode_disparity, encode_disparity, read_disparity, read_manifest,
                               write_manifest)
from curveface.imgio import CropRect, GrayImage, read_pnm, write_pgm
from curveface.pipeline import content_key, synthesize
from curveface.stereo import CameraGeometry, DisparityMap, depth_from_disparity

pytestmark = pytest.mark.usefixtures("no_cache")


def _files(root: Path, skip=("timings.json",)) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name not in skip}


# ---------------------------------------------------------------------------
# config and formats


def test_config_text_round_trip(tmp_path):
    cfg = PipelineConfig(nscales=4, K=5, tol=0.5, finest="wavelets")
    assert parse_config(cfg.to_text()) == cfg
    (tmp_path / "c.cfg").write_text("# comment\n\nK = 7   # trailing\nwindow=9\n")
    assert load_config(tmp_path / "c.cfg") == PipelineConfig(K=7, window=9)
    assert apply_overrides(cfg, ["K=1", "dmax=30"]).replace(K=5, dmax=24) == cfg
    for bad in ("bogus = 1", "K = x", "K 3", "window = 4", "nscales = 7", "p = 5"):
        with pytest.raises(ValueError):
            parse_config(bad)


def test_manifest_round_trip_and_validation(tmp_path):
    recs = [ManifestRecord("s1", "v0", tmp_path / "a.pgm", tmp_path / "b.pgm", CropRect(1, 2, 3, 4), 0.1, 500.0),
            ManifestRecord("s2", "v0", tmp_path / "c.pgm", None, None, None, None, tmp_path / "d.pgm")]
    write_manifest(tmp_path / "m.csv", recs)
    assert read_manifest(tmp_path / "m.csv") == recs
    text = (tmp_path / "m.csv").read_text()
    assert "a.pgm" in text and str(tmp_path) not in text
    (tmp_path / "dup.csv").write_text("subject,view,left,right\ns,v,a,b\ns,v,c,d\n")
    with pytest.raises(ValueError, match="duplicate"):
        read_manifest(tmp_path / "dup.csv")
    (tmp_path / "empty.csv").write_text("subject,view,left,right\n,v,a,b\n")
    with pytest.raises(ValueError, match="empty subject"):
        read_manifest(tmp_path / "empty.csv")
    (tmp_path / "nodepth.csv").write_text("subject,view,left,right\ns,v,a,\n")
    with pytest.raises(ValueError):
        read_manifest(tmp_path / "nodepth.csv")


def test_disparity_sidecar_round_trip():
    disp = DisparityMap(np.random.default_rng(0).uniform(0, 9, (5, 7)), np.random.default_rng(1).random((5, 7)) > 0.5)
    back = decode_disparity(encode_disparity(disp))
    assert np.array_equal(back.disp, disp.disp) and np.array_equal(back.valid, disp.valid)
    with pytest.raises(ValueError):
        decode_disparity(encode_disparity(disp)[:-1])


def test_content_key_separates_parts():
    assert content_key(b"ab", b"c") != content_key(b"a", b"bc")
    assert content_key(b"x", (1, 2)) == content_key(b"x", (1, 2))


# ---------------------------------------------------------------------------
# synth


def test_synth_is_deterministic_and_truth_inverts(tmp_path):
    assert main(["synth", "--subjects", "2", "--views", "2", "--size", "64", "--seed", "4", "--out", str(tmp_path / "a")]) == 0
    assert main(["synth", "--subjects", "2", "--views", "2", "--size", "64", "--seed", "4", "--out", str(tmp_path / "b")]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    truth = read_disparity(tmp_path / "a" / "truth" / "s000_v00.disp")
    geom = CameraGeometry(0.1, 600.0)
    depth = depth_from_disparity(truth, geom)
    assert np.allclose(geom.baseline * geom.focal / depth.depth[depth.valid], truth.disp[depth.valid])


def test_synth_without_noise_or_jitter_repeats_views(tmp_path):
    recs = synthesize(tmp_path, 2, 3, noise=0.0, jitter=0.0, size=64)
    lefts = [r.left.read_bytes() for r in recs if r.subject == "s000"]
    assert lefts[0] == lefts[1] == lefts[2]
    with pytest.raises(ValueError):
        synthesize(tmp_path, 1, 1)


# ---------------------------------------------------------------------------
# depth


def test_depth_verb(tmp_path):
    data = tmp_path / "data"
    synthesize(data, 2, 1, noise=0.0, jitter=0.0, size=64)
    recs = read_manifest(data / "manifest.csv")
    # second record uses a precomputed depth map: passed through untouched
    depth_img = GrayImage(np.full((64, 64), 77.0))
    write_pgm(data / "given_depth.pgm", depth_img)
    recs[1] = ManifestRecord(recs[1].subject, recs[1].view, recs[1].left, None, depth=data / "given_depth.pgm")
    write_manifest(data / "m2.csv", recs)
    out = tmp_path / "out"
    assert main(["depth", "--manifest", str(data / "m2.csv"), "--out", str(out)]) == 0
    assert (out / "s000_v00_depth.pgm").exists() and (out / "s000_v00_disparity.disp").exists()
    assert (out / "s001_v00_depth.pgm").read_bytes() == (data / "given_depth.pgm").read_bytes()
    assert not (out / "s001_v00_disparity.disp").exists()
    est = read_disparity(out / "s000_v00_disparity.disp")
    truth = read_disparity(data / "truth" / "s000_v00.disp")
    assert np.mean(np.abs(est.disp - truth.disp)[truth.valid] <= 1) > 0.9


def test_depth_verb_reports_unreadable_records(tmp_path, capsys):
    data = tmp_path / "data"
    synthesize(data, 2, 1, noise=0.0, jitter=0.0, size=64)
    (data / "pairs" / "s001_v00_R.pgm").write_bytes(b"garbage")
    out = tmp_path / "out"
    assert main(["depth", "--manifest", str(data / "manifest.csv"), "--out", str(out)]) == 1
    assert "FAILED s001/v00" in capsys.readouterr().err
    assert (out / "s000_v00_depth.pgm").exists()
    assert "s001/v00" in (out / "failures.tsv").read_text()


# ---------------------------------------------------------------------------
# extract


def test_extract_verb(tmp_path):
    write_pgm(tmp_path / "zero.pgm", GrayImage(np.zeros((64, 64))))
    rnd = GrayImage(np.random.default_rng(0).integers(0, 256, (64, 64)).astype(float))
    write_pgm(tmp_path / "rnd.pgm", rnd)
    inputs = [str(tmp_path / "zero.pgm"), str(tmp_path / "rnd.pgm")]
    assert main(["extract", *inputs, "--out", str(tmp_path / "f1"), "--csv"]) == 0
    assert main(["extract", *inputs, "--out", str(tmp_path / "f2"), "--csv"]) == 0
    assert _files(tmp_path / "f1") == _files(tmp_path / "f2")
    zero = read_vector(tmp_path / "f1" / "zero.feat")
    assert zero.size == 2372 and np.all(zero == 0)
    assert read_vector(tmp_path / "f1" / "rnd.feat").size == 2372
    assert "zero" in (tmp_path / "f1" / "index.csv").read_text()
    write_pgm(tmp_path / "tiny.pgm", GrayImage(np.zeros((16, 16))))
    with pytest.raises(SystemExit, match="tiny.pgm"):
        main(["extract", str(tmp_path / "tiny.pgm"), "--out", str(tmp_path / "f3")])


# ---------------------------------------------------------------------------
# eval, sweep, report


@pytest.fixture(scope="module")
def clean_set(tmp_path_factory):
    root = tmp_path_factory.mktemp("clean")
    synthesize(root, 4, 4, noise=0.0, jitter=0.0, size=64, seed=1)
    return root / "manifest.csv"


def test_eval_on_noise_free_set_is_perfect(clean_set, tmp_path):
    out = tmp_path / "ev"
    assert main(["eval", "--manifest", str(clean_set), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    for method in ("intensity_curvelet", "depth_curvelet", "fused_curvelet", "intensity_pca", "feature_level"):
        assert report["rank1"][method] == 100.0
    for name in ("report.md", "cms.csv", "roc.csv", "folds.csv", "decisions.csv", "cms.svg", "roc.svg",
                 "labels.csv", "timings.json"):
        assert (out / name).exists()
    assert len(list((out / "features").glob("*.feat"))) == 32
    # re-render from report.json reproduces the report files
    assert main(["report", str(out / "report.json"), "--out", str(tmp_path / "re")]) == 0
    for name in ("report.json", "report.md", "cms.csv", "roc.csv"):
        assert (tmp_path / "re" / name).read_bytes() == (out / name).read_bytes()


def test_eval_rejects_insufficient_data_early(clean_set, tmp_path):
    with pytest.raises(SystemExit, match="K=20"):
        main(["eval", "--manifest", str(clean_set), "--out", str(tmp_path / "x"), "--set", "K=20"])
    with pytest.raises(SystemExit, match="fewer than 5"):
        main(["eval", "--manifest", str(clean_set), "--out", str(tmp_path / "x"), "--set", "folds=5"])
    assert not (tmp_path / "x").exists()
    assert main(["eval", "--manifest", str(clean_set), "--out", str(tmp_path / "y"), "--set", "bogus=1"]) == 2


def test_sweep_verb(clean_set, tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "--manifest", str(clean_set), "--out", str(out), "--ks", "1", "3", "--scales", "2", "3"]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 5 and lines[1].startswith("2,1,2,")
    assert len(list((out / "runs").glob("*.json"))) == 4 and (out / "sweep.svg").exists()


def test_cache_reuse(clean_set, tmp_path, monkeypatch):
    monkeypatch.setenv("CURVEFACE_CACHE", str(tmp_path / "cache"))
    assert main(["eval", "--manifest", str(clean_set), "--out", str(tmp_path / "a")]) == 0
    entries = sorted(p.name for p in (tmp_path / "cache").rglob("*.bin"))
    assert entries
    assert main(["eval", "--manifest", str(clean_set), "--out", str(tmp_path / "b")]) == 0
    assert sorted(p.name for p in (tmp_path / "cache").rglob("*.bin")) == entries
    assert _files(tmp_path / "a") == _files(tmp_path / "b")
    monkeypatch.delenv("CURVEFACE_CACHE")
    assert main(["eval", "--manifest", str(clean_set), "--out", str(tmp_path / "c")]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "c")


def test_pnm_written_by_synth_is_readable(clean_set):
    recs = read_manifest(clean_set)
    img = read_pnm(recs[0].left)
    assert img.shape == (64, 64)
