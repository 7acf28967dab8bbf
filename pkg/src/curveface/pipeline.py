"""Dataset-level plumbing shared by the command-line verbs.

Depth maps and feature vectors are cached on disk when the ``CURVEFACE_CACHE``
environment variable names a directory.  Entries are keyed by a SHA-256 of
the input bytes and every config value that influences them, so a changed
image or parameter never hits a stale entry.
"""

from __future__ import annotations

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .evaluate import Sample
from .features import decode_vector, encode_vector, extract_features
from .fdct import forward
from .formats import ManifestRecord, decode_disparity, encode_disparity, write_disparity, write_manifest
from .imgio import (GrayImage, RgbImage, atomic_write, load_image, preprocess, rgb_to_gray, write_pgm)
from .stereo import (CameraGeometry, DisparityMap, StereoPair, depth_from_disparity, depth_to_image, refine)
from .synth import jitter_scene, render, subject_scene

CACHE_ENV = "CURVEFACE_CACHE"


def cache_dir() -> Path | None:
    root = os.environ.get(CACHE_ENV)
    return Path(root) if root else None


def content_key(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        data = part if isinstance(part, bytes) else repr(part).encode()
        h.update(len(data).to_bytes(8, "little"))
        h.update(data)
    return h.hexdigest()


def _cached(kind: str, key: str, compute, encode, decode):
    root = cache_dir()
    if root is None:
        return compute()
    path = root / kind / f"{key}.bin"
    if path.exists():
        try:
            return decode(path.read_bytes())
        except ValueError:
            pass  # corrupt entry: recompute and overwrite
    value = compute()
    atomic_write(path, encode(value))
    return value


def as_gray(img: GrayImage | RgbImage) -> GrayImage:
    return rgb_to_gray(img) if isinstance(img, RgbImage) else img


# ---------------------------------------------------------------------------
# depth


def _stereo_key(cfg: PipelineConfig) -> tuple:
    return ("stereo-v1", cfg.dmin, cfg.dmax, cfg.window, cfg.tol, cfg.spatial_bw, cfg.range_bw, cfg.min_region)


def disparity_for(left_path: Path, right_path: Path, cfg: PipelineConfig) -> DisparityMap:
    left_bytes, right_bytes = Path(left_path).read_bytes(), Path(right_path).read_bytes()

    def compute():
        pair = StereoPair(as_gray(load_image(left_path)), as_gray(load_image(right_path)))
        dense, _ = refine(pair, cfg.stereo())
        return dense

    key = content_key(left_bytes, right_bytes, _stereo_key(cfg))
    return _cached("disparity", key, compute, encode_disparity, decode_disparity)


def geometry_for(rec: ManifestRecord, cfg: PipelineConfig) -> CameraGeometry:
    return CameraGeometry(rec.baseline if rec.baseline is not None else cfg.baseline,
                          rec.focal if rec.focal is not None else cfg.focal)


def depth_image(rec: ManifestRecord, cfg: PipelineConfig) -> tuple[GrayImage, DisparityMap | None]:
    """Depth image at source resolution, plus the disparity when it was estimated here."""
    if rec.depth is not None:
        return as_gray(load_image(rec.depth)), None
    disp = disparity_for(rec.left, rec.right, cfg)
    return depth_to_image(depth_from_disparity(disp, geometry_for(rec, cfg))), disp


def sample_for(rec: ManifestRecord, cfg: PipelineConfig) -> Sample:
    size = (cfg.size, cfg.size)
    intensity = preprocess(load_image(rec.left), rec.crop, cfg.median_radius, size)
    depth, _ = depth_image(rec, cfg)
    depth = preprocess(depth, rec.crop, cfg.median_radius, size)
    return Sample(rec.key, rec.subject, intensity.data, depth.data)


@dataclass
class Failure:
    key: str
    message: str


def load_samples(records: list[ManifestRecord], cfg: PipelineConfig,
                 workers: int = 1) -> tuple[list[Sample], list[Failure]]:
    """Samples in manifest order; records that fail are reported, not raised."""

    def one(rec):
        try:
            return sample_for(rec, cfg)
        except (OSError, ValueError) as exc:
            return Failure(rec.key, f"{type(exc).__name__}: {exc}")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, records))
    else:
        results = [one(r) for r in records]
    samples = [r for r in results if isinstance(r, Sample)]
    failures = [r for r in results if isinstance(r, Failure)]
    return samples, failures


def features_for(image: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    image = np.ascontiguousarray(image, dtype=float)
    key = content_key(image.tobytes(), image.shape, ("features-v1", cfg.nscales, cfg.nangles, cfg.finest, cfg.block))
    return _cached("features", key, lambda: extract_features(forward(image, cfg.transform()), cfg.block),
                   encode_vector, decode_vector)


def sample_features(samples: list[Sample], cfg: PipelineConfig) -> dict[str, np.ndarray]:
    return {m: np.array([features_for(getattr(s, m), cfg) for s in samples]) for m in ("intensity", "depth")}


# ---------------------------------------------------------------------------
# synthetic datasets


def synthesize(out_dir, nsubjects: int, nviews: int, noise: float = 2.0, jitter: float = 1.0,
               seed: int = 0, size: int = 128) -> list[ManifestRecord]:
    """Write a stereo face set plus ground truth and return its manifest records.

    Per subject: one scene.  Per view: pose jitter (shift and depth offset),
    an illumination gain/bias shared by the pair, and independent sensor noise.
    Ground truth disparity goes to ``truth/<subject>_<view>.disp``.
    """
    if nsubjects < 2:
        raise ValueError("nsubjects must be >= 2")
    if nviews < 1:
        raise ValueError("nviews must be >= 1")
    out = Path(out_dir)
    records = []
    for s in range(nsubjects):
        subject = f"s{s:03d}"
        scene = subject_scene(np.random.default_rng([seed, s]), width=size, height=size)
        for v in range(nviews):
            view = f"v{v:02d}"
            rng = np.random.default_rng([seed, s, v + 1])
            posed = jitter_scene(scene, rng, jitter)
            gain = 1.0 + rng.uniform(-0.1, 0.1) * jitter
            bias = rng.uniform(-8.0, 8.0) * jitter
            rendered = render(posed, rng, noise=noise, gain=gain, bias=bias)
            stem = f"{subject}_{view}"
            left, right = out / "pairs" / f"{stem}_L.pgm", out / "pairs" / f"{stem}_R.pgm"
            write_pgm(left, rendered.pair.left)
            write_pgm(right, rendered.pair.right)
            write_disparity(out / "truth" / f"{stem}.disp", rendered.truth)
            records.append(ManifestRecord(subject, view, left, right))
    write_manifest(out / "manifest.csv", records)
    return records
