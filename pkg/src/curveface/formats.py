"""On-disk formats: disparity sidecars, dataset manifests, label indexes, SVG plots."""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .imgio import CropRect, atomic_write
from .stereo import DisparityMap

# ---------------------------------------------------------------------------
# disparity sidecar: magic, uint32 height, width, row-major float64 values,
# row-major uint8 validity (0/1); little-endian throughout

SIDECAR_MAGIC = b"DISPMAP1"


def encode_disparity(disp: DisparityMap) -> bytes:
    h, w = disp.shape
    return b"".join([
        SIDECAR_MAGIC,
        struct.pack("<II", h, w),
        np.ascontiguousarray(disp.disp, dtype="<f8").tobytes(),
        np.ascontiguousarray(disp.valid, dtype=np.uint8).tobytes(),
    ])


def decode_disparity(payload: bytes) -> DisparityMap:
    if payload[:8] != SIDECAR_MAGIC:
        raise ValueError("not a disparity sidecar")
    h, w = struct.unpack_from("<II", payload, 8)
    expected = 16 + 9 * h * w
    if len(payload) != expected:
        raise ValueError(f"sidecar length {len(payload)} != {expected}")
    disp = np.frombuffer(payload, dtype="<f8", count=h * w, offset=16).reshape(h, w).astype(float)
    valid = np.frombuffer(payload, dtype=np.uint8, count=h * w, offset=16 + 8 * h * w).reshape(h, w) != 0
    return DisparityMap(disp, valid)


def write_disparity(path, disp: DisparityMap) -> None:
    atomic_write(path, encode_disparity(disp))


def read_disparity(path) -> DisparityMap:
    return decode_disparity(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# manifest CSV
#
# header: subject,view,left,right,crop_x,crop_y,crop_w,crop_h,baseline,focal,depth
# paths are relative to the manifest's directory; empty cells mean "not given"

MANIFEST_FIELDS = ["subject", "view", "left", "right", "crop_x", "crop_y", "crop_w", "crop_h",
                   "baseline", "focal", "depth"]


@dataclass
class ManifestRecord:
    subject: str
    view: str
    left: Path
    right: Path | None = None
    crop: CropRect | None = None
    baseline: float | None = None
    focal: float | None = None
    depth: Path | None = None

    @property
    def key(self) -> str:
        return f"{self.subject}/{self.view}"


def read_manifest(path) -> list[ManifestRecord]:
    path = Path(path)
    root = path.parent
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"subject", "view", "left"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: manifest lacks columns {sorted(missing)}")
        records, seen = [], set()
        for lineno, row in enumerate(reader, 2):
            get = lambda k: (row.get(k) or "").strip()
            subject, view = get("subject"), get("view")
            if not subject:
                raise ValueError(f"{path}:{lineno}: empty subject id")
            if (subject, view) in seen:
                raise ValueError(f"{path}:{lineno}: duplicate (subject, view) = ({subject}, {view})")
            seen.add((subject, view))
            crop = None
            if any(get(k) for k in ("crop_x", "crop_y", "crop_w", "crop_h")):
                crop = CropRect(*(int(get(k)) for k in ("crop_x", "crop_y", "crop_w", "crop_h")))
            records.append(ManifestRecord(
                subject, view, root / get("left"),
                root / get("right") if get("right") else None,
                crop,
                float(get("baseline")) if get("baseline") else None,
                float(get("focal")) if get("focal") else None,
                root / get("depth") if get("depth") else None,
            ))
    for rec in records:
        if rec.right is None and rec.depth is None:
            raise ValueError(f"{path}: record {rec.key} has neither a right image nor a depth map")
    return records


def write_manifest(path, records: list[ManifestRecord]) -> None:
    path = Path(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MANIFEST_FIELDS)

    def rel(p):
        if p is None:
            return ""
        p = Path(p)
        try:
            return p.relative_to(path.parent).as_posix()
        except ValueError:
            return str(p)

    for r in records:
        c = r.crop
        writer.writerow([
            r.subject, r.view, rel(r.left), rel(r.right),
            *(("", "", "", "") if c is None else (c.x, c.y, c.w, c.h)),
            "" if r.baseline is None else repr(r.baseline),
            "" if r.focal is None else repr(r.focal),
            rel(r.depth),
        ])
    atomic_write(path, buf.getvalue().encode())


# ---------------------------------------------------------------------------
# label index: sample id, subject, modality, fold, file


def label_index_csv(rows: list[tuple]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["sample", "subject", "modality", "fold", "file"])
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# SVG


def svg_lines(series: dict[str, list[tuple[float, float]]], title: str, xlabel: str, ylabel: str,
              width: int = 480, height: int = 320) -> str:
    """Small dependency-free line plot; output depends only on the data."""
    pad = 48
    xs = [x for pts in series.values() for x, _ in pts] or [0.0, 1.0]
    ys = [y for pts in series.values() for _, y in pts] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    sx = lambda x: pad + (x - x0) / (x1 - x0) * (width - 2 * pad)
    sy = lambda y: height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)
    colours = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.1f})">{ylabel}</text>',
        f'<text x="{pad}" y="{height - pad + 14}" font-size="10">{x0:g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 14}" text-anchor="end" font-size="10">{x1:g}</text>',
        f'<text x="{pad - 4}" y="{height - pad}" text-anchor="end" font-size="10">{y0:g}</text>',
        f'<text x="{pad - 4}" y="{pad + 4}" text-anchor="end" font-size="10">{y1:g}</text>',
    ]
    for k, (name, pts) in enumerate(sorted(series.items())):
        colour = colours[k % len(colours)]
        path = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{path}"/>')
        out.append(f'<text x="{pad + 8}" y="{pad + 14 * k}" font-size="10" fill="{colour}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
