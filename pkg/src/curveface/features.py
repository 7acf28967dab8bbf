"""Block statistics of curvelet subbands.

Every subband is reduced to magnitudes, zero-padded up to a multiple of the
block size, cut into blocks in row-major order, and each block contributes
(mean, variance, std, entropy).  Subbands are scanned scale-major, then by
orientation in the tiling's order.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fdct import CurveletCoeffs, TransformConfig, structural_audit

BLOCK = 8
NBINS = 256
STATS = ("mean", "variance", "std", "entropy")


@dataclass
class BlockGrid:
    source_shape: tuple[int, int]
    block: int
    padded_shape: tuple[int, int]
    blocks: list[np.ndarray]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.padded_shape[0] // self.block, self.padded_shape[1] // self.block


@dataclass(frozen=True)
class BlockStats:
    mean: float
    variance: float
    std: float
    entropy: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.mean, self.variance, self.std, self.entropy)


def subband_to_real(wedge) -> np.ndarray:
    return np.abs(np.asarray(wedge))


def partition_blocks(band, block: int = BLOCK) -> BlockGrid:
    band = np.asarray(band, dtype=float)
    if band.ndim != 2 or band.size == 0:
        raise ValueError("partition_blocks needs a non-empty 2-D band")
    h, w = band.shape
    ph, pw = -(-h // block) * block, -(-w // block) * block
    padded = np.zeros((ph, pw))
    padded[:h, :w] = band
    tiles = padded.reshape(ph // block, block, pw // block, block).swapaxes(1, 2)
    blocks = [tiles[i, j].copy() for i in range(ph // block) for j in range(pw // block)]
    return BlockGrid((h, w), block, (ph, pw), blocks)


def _histogram_entropy(values: np.ndarray, lo: float, hi: float, nbins: int = NBINS) -> float:
    # values outside [lo, hi] are clipped into the end bins
    scaled = (np.clip(values, lo, hi) - lo) / (hi - lo) * nbins
    idx = np.minimum(scaled.astype(int), nbins - 1)
    counts = np.bincount(idx.ravel(), minlength=nbins)
    p = counts[counts > 0] / values.size
    return float(max(0.0, -(p * np.log2(p)).sum()))


def block_stats(block, hist_range: tuple[float, float] | None = None, ddof: int = 1) -> BlockStats:
    """Mean, variance, standard deviation and histogram entropy of one block.

    The variance uses ``ddof`` (default 1, the sample variance, which is what
    reproduces the published block statistics).  Entropy is the Shannon
    entropy in bits of a 256-bin histogram over ``hist_range``; with no range
    given the block's own min/max is used.  A degenerate range (lo == hi)
    puts every value in one bin, giving 0.
    """
    values = np.asarray(block, dtype=float).ravel()
    n = values.size
    mean = float(values.mean())
    variance = float(((values - mean) ** 2).sum() / (n - ddof)) if n > ddof else 0.0
    lo, hi = hist_range if hist_range is not None else (values.min(), values.max())
    if hi < lo:
        raise ValueError("histogram range must satisfy lo <= hi")
    entropy = _histogram_entropy(values, lo, hi) if hi > lo else 0.0
    return BlockStats(mean, variance, math.sqrt(variance), entropy)


def band_features(band, block: int = BLOCK, ddof: int = 1) -> np.ndarray:
    """Stats of every block of one magnitude band, shape (nblocks, 4)."""
    band = np.asarray(band, dtype=float)
    lo, hi = float(band.min()), float(band.max())
    grid = partition_blocks(band, block)
    return np.array([block_stats(b, (lo, hi), ddof).as_tuple() for b in grid.blocks])


def extract_features(coeffs: CurveletCoeffs, block: int = BLOCK, ddof: int = 1) -> np.ndarray:
    """Concatenated block statistics over all subbands (scale-major, then orientation)."""
    parts = [band_features(subband_to_real(band), block, ddof).ravel() for _, _, band in coeffs]
    return np.concatenate(parts)


def feature_length(shape: tuple[int, int], cfg: TransformConfig, block: int = BLOCK) -> int:
    audit = structural_audit(shape, cfg)
    nblocks = sum(-(-h // block) * -(-w // block) for scale in audit["wedge_shapes"] for h, w in scale)
    return len(STATS) * nblocks


def feature_labels(coeffs_or_shapes) -> list[str]:
    """Column names ``s{j}_o{l}_b{k}_{stat}`` in feature order."""
    shapes = getattr(coeffs_or_shapes, "wedge_shapes", coeffs_or_shapes)
    names = []
    for j, scale in enumerate(shapes):
        for l, (h, w) in enumerate(scale):
            for k in range(-(-h // BLOCK) * -(-w // BLOCK)):
                names.extend(f"s{j}_o{l}_b{k}_{s}" for s in STATS)
    return names


# ---------------------------------------------------------------------------
# feature files: little-endian uint64 length followed by that many float64


def encode_vector(vec) -> bytes:
    vec = np.ascontiguousarray(vec, dtype="<f8")
    return struct.pack("<Q", vec.size) + vec.tobytes()


def decode_vector(payload: bytes) -> np.ndarray:
    if len(payload) < 8:
        raise ValueError("feature file too short")
    (n,) = struct.unpack_from("<Q", payload)
    if len(payload) != 8 + 8 * n:
        raise ValueError(f"feature file length mismatch: header says {n} values")
    return np.frombuffer(payload, dtype="<f8", count=n, offset=8).astype(float)


def read_vector(path) -> np.ndarray:
    return decode_vector(Path(path).read_bytes())


def vector_csv(vec) -> str:
    # repr round-trips doubles exactly
    return "\n".join(repr(float(v)) for v in np.asarray(vec).ravel()) + "\n"
