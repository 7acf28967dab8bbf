"""Pipeline configuration and its flat ``key = value`` text format.

Blank lines and ``#`` comments are ignored; unknown keys are an error.
Example::

    nscales = 4
    K = 5
    dmax = 30
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .classify import KnnConfig
from .fdct import TransformConfig, min_side
from .stereo import StereoParams


@dataclass(frozen=True)
class PipelineConfig:
    size: int = 64  # square working size of intensity and depth images
    nscales: int = 5
    nangles: int = 8
    finest: str = "curvelets"
    block: int = 8
    K: int = 3
    p: int = 2
    window: int = 11
    dmin: int = 0
    dmax: int = 24
    tol: float = 1.0
    spatial_bw: int = 4
    range_bw: float = 4.0
    min_region: int = 8
    median_radius: int = 1
    folds: int = 4
    seed: int = 0
    baseline: float = 1.0
    focal: float = 1.0
    pca_variance: float = 0.95

    def __post_init__(self):
        problems = []
        if self.size < 1:
            problems.append("size must be >= 1")
        if self.nscales < 2:
            problems.append("nscales must be >= 2")
        elif self.size < min_side(self.transform()):
            problems.append(f"size {self.size} too small for {self.nscales} scales")
        if self.block < 1:
            problems.append("block must be >= 1")
        if self.K < 1:
            problems.append("K must be >= 1")
        if self.p not in (1, 2, 3):
            problems.append("p must be 1, 2 or 3")
        if self.window < 1 or self.window % 2 == 0:
            problems.append("window must be a positive odd integer")
        if self.dmin > self.dmax:
            problems.append("dmin must not exceed dmax")
        if self.tol < 0:
            problems.append("tol must be >= 0")
        if self.median_radius < 0:
            problems.append("median_radius must be >= 0")
        if self.folds < 2:
            problems.append("folds must be >= 2")
        if self.baseline <= 0 or self.focal <= 0:
            problems.append("baseline and focal must be > 0")
        if not 0 < self.pca_variance <= 1:
            problems.append("pca_variance must lie in (0, 1]")
        if problems:
            raise ValueError("invalid config: " + "; ".join(problems))

    def transform(self) -> TransformConfig:
        return TransformConfig(self.nscales, self.nangles, self.finest)

    def knn(self) -> KnnConfig:
        return KnnConfig(self.K, self.p)

    def stereo(self, workers: int = 1) -> StereoParams:
        return StereoParams(self.dmin, self.dmax, self.window, self.tol, self.spatial_bw,
                            self.range_bw, self.min_region, workers)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _coerce(name: str, raw: str):
    kinds = {f.name: f.type for f in fields(PipelineConfig)}
    if name not in kinds:
        raise ValueError(f"unknown config key {name!r}")
    kind = kinds[name]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ValueError(f"config key {name!r}: cannot parse {raw!r}") from exc
    return raw


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        values[key] = _coerce(key, raw)
    return (base or PipelineConfig()).replace(**values)


def load_config(path) -> PipelineConfig:
    return parse_config(Path(path).read_text())


def apply_overrides(cfg: PipelineConfig, pairs: list[str]) -> PipelineConfig:
    """Apply ``key=value`` strings (e.g. from repeated ``--set`` flags)."""
    return parse_config("\n".join(pairs), cfg)
