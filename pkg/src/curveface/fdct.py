"""Discrete curvelet transform via wedge wrapping.

The frequency plane is tiled by concentric Cartesian coronae (one per scale)
and, inside each corona, by angular wedges whose count doubles every other
scale.  Each wedge's windowed spectrum is wrapped periodically onto a small
rectangle centred on the origin and brought back to space by an inverse FFT.

The tiling geometry (wedge ticks, corner wedges, wrapping offsets) follows
the classic wrapping construction.  Rather than re-running that geometry on
every call, :class:`CurveletTiling` compiles it once per (shape, config) into
a gather plan: for every cell of every wrapped wedge, the source frequency
index on the image grid and its window weight.  The forward transform is then
gather -> multiply -> IFFT and the inverse is its exact adjoint
(FFT -> multiply -> scatter-add).  Because the squared weights landing on each
grid frequency sum to one, the adjoint is the inverse.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

FinestKind = Literal["wavelets", "curvelets"]


@dataclass(frozen=True)
class TransformConfig:
    nscales: int = 5
    nangles_coarse: int = 8
    finest: FinestKind = "curvelets"

    def __post_init__(self) -> None:
        if self.nscales < 2:
            raise ValueError(f"nscales must be >= 2, got {self.nscales}")
        if self.nangles_coarse < 8 or self.nangles_coarse % 4:
            raise ValueError(
                f"nangles_coarse must be a multiple of 4 and >= 8, got {self.nangles_coarse}"
            )
        if self.finest not in ("wavelets", "curvelets"):
            raise ValueError(f"finest must be 'wavelets' or 'curvelets', got {self.finest!r}")

    def wedge_counts(self) -> list[int]:
        """Number of subbands per scale, coarsest first."""
        counts = [1]
        for j in range(1, self.nscales):
            counts.append(self.nangles_coarse * 2 ** math.ceil((j - 1) / 2))
        if self.finest == "wavelets":
            counts[-1] = 1
        return counts


@dataclass
class CurveletCoeffs:
    config: TransformConfig
    shape: tuple[int, int]
    subbands: list[list[np.ndarray]]

    def __iter__(self):
        for j, scale in enumerate(self.subbands):
            for l, band in enumerate(scale):
                yield j, l, band

    @property
    def wedge_shapes(self) -> list[list[tuple[int, int]]]:
        return [[band.shape for band in scale] for scale in self.subbands]

    def total_size(self) -> int:
        return sum(band.size for _, _, band in self)


# ---------------------------------------------------------------------------
# window profiles


def meyer_step(t):
    """Smooth step 0 -> 1 on [0, 1] with s(t) + s(1 - t) = 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3)


def window_pair(x):
    """Power-complementary rising/falling windows ``(wl, wr)``.

    ``wl`` rises from 0 at x <= 0 to 1 at x >= 1, ``wr`` falls the other way,
    and ``wl**2 + wr**2 == 1`` everywhere.
    """
    x = np.asarray(x, dtype=float)
    x = np.where(np.abs(x) < 2.0**-52, 0.0, x)
    angle = 0.5 * np.pi * meyer_step(x)
    return np.sin(angle), np.cos(angle)


def lowpass_1d(m: float) -> np.ndarray:
    """1-D low-pass samples on integer frequencies ``-floor(2m) .. floor(2m)``.

    Flat (=1) for ``|k| <= floor(m)``, smooth roll-off to 0 at ``|k| = floor(2m)``.
    """
    length = math.floor(2 * m) - math.floor(m) - 1
    coord = np.linspace(0.0, 1.0, length + 1) if length > 0 else np.zeros(1)
    wl, wr = window_pair(coord)
    return np.concatenate([wl, np.ones(2 * math.floor(m) + 1), wr])


def _mround(x):
    """Round half away from zero."""
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(int)


# ---------------------------------------------------------------------------
# tiling plan


@dataclass
class _Wedge:
    scale: int
    angle: int
    shape: tuple[int, int]
    src: np.ndarray  # flat index into the centred image spectrum, per wrapped cell
    weight: np.ndarray  # full window value U_{j,l} at that cell
    radial: np.ndarray  # radial factor only


@dataclass
class CurveletTiling:
    """Compiled wrapping geometry for one image shape and config."""

    shape: tuple[int, int]
    config: TransformConfig
    wedges: list[list[_Wedge]] = field(default_factory=list)
    # per scale: (flat source indices, radial window) over that scale's corona array
    _coronae: list[tuple[np.ndarray, np.ndarray]] = field(default_factory=list)

    @classmethod
    def build(cls, shape: tuple[int, int], config: TransformConfig) -> "CurveletTiling":
        return _build_tiling(tuple(int(s) for s in shape), config)

    # -- structure -------------------------------------------------------

    @property
    def wedge_shapes(self) -> list[list[tuple[int, int]]]:
        return [[w.shape for w in scale] for scale in self.wedges]

    def coefficient_count(self) -> int:
        return sum(h * w for scale in self.wedge_shapes for h, w in scale)

    # -- windows on the image frequency grid --------------------------------

    def _fold(self, src: np.ndarray, values: np.ndarray) -> np.ndarray:
        n1, n2 = self.shape
        return np.bincount(src, weights=values, minlength=n1 * n2).reshape(n1, n2)

    def energy(self) -> np.ndarray:
        """Sum of squared windows over all wedges, per grid frequency."""
        total = np.zeros(self.shape)
        for scale in self.wedges:
            for w in scale:
                total += self._fold(w.src, w.weight**2)
        return total

    def cartesian_window(self, j: int, l: int) -> np.ndarray:
        w = self.wedges[j][l]
        return np.sqrt(self._fold(w.src, w.weight**2))

    def radial_window(self, j: int) -> np.ndarray:
        """Radial window of scale ``j`` on the grid; scale 0 is the low-pass."""
        src, radial = self._coronae[j]
        return np.sqrt(self._fold(src, radial**2))

    def lowpass(self, j: int) -> np.ndarray:
        """Cumulative low-pass phi_j: energy of all scales <= j."""
        energy = sum(self.radial_window(s) ** 2 for s in range(j + 1))
        return np.sqrt(energy)

    def angular_window(self, j: int, l: int) -> np.ndarray:
        """Angular factor V_{j,l} = U_{j,l} / W_j where W_j > 0, else 0."""
        u = self.cartesian_window(j, l)
        r = self.radial_window(j)
        out = np.zeros_like(u)
        np.divide(u, r, out=out, where=r > 1e-12)
        return out

    def grid_index(self, w1, w2) -> tuple[np.ndarray, np.ndarray]:
        """Array indices of integer frequencies (vertical w1, horizontal w2)."""
        n1, n2 = self.shape
        return (np.asarray(w1) + n1 // 2) % n1, (np.asarray(w2) + n2 // 2) % n2


def min_side(config: TransformConfig) -> int:
    return 2**config.nscales


def check_shape(shape: tuple[int, int], config: TransformConfig) -> None:
    need = min_side(config)
    if min(shape) < need:
        raise ValueError(
            f"image {shape[0]}x{shape[1]} too small for {config.nscales} scales "
            f"(need >= {need} per side)"
        )


@functools.lru_cache(maxsize=32)
def _build_tiling(shape: tuple[int, int], config: TransformConfig) -> CurveletTiling:
    check_shape(shape, config)
    n1, n2 = shape
    counts = config.wedge_counts()
    nscales = config.nscales
    tiling = CurveletTiling(shape, config)
    wedges: list[list[_Wedge]] = [[] for _ in range(nscales)]
    coronae: list[tuple[np.ndarray, np.ndarray] | None] = [None] * nscales

    m1, m2 = n1 / 3, n2 / 3
    if config.finest == "curvelets":
        # periodic extension of the spectrum so the outer corona is smooth
        big1, big2 = 2 * math.floor(2 * m1) + 1, 2 * math.floor(2 * m2) + 1
        idx1 = np.mod(n1 // 2 - math.floor(2 * m1) + np.arange(big1), n1)
        idx2 = np.mod(n2 // 2 - math.floor(2 * m2) + np.arange(big2), n2)
        src_low = idx1[:, None] * n2 + idx2[None, :]
        lp1 = _extended_lowpass(n1, m1)
        lp2 = _extended_lowpass(n2, m2)
        w_low = np.outer(lp1, lp2)
        scales = range(nscales - 1, 0, -1)
    else:
        m1, m2 = m1 / 2, m2 / 2
        lowpass = np.outer(lowpass_1d(m1), lowpass_1d(m2))
        hipass = np.sqrt(1 - lowpass**2)
        r1 = np.arange(-math.floor(2 * m1), math.floor(2 * m1) + 1) + n1 // 2
        r2 = np.arange(-math.floor(2 * m2), math.floor(2 * m2) + 1) + n2 // 2
        src_full = np.arange(n1 * n2).reshape(n1, n2)
        w_hi = np.ones(shape)
        w_hi[np.ix_(r1, r2)] = hipass
        src_low = src_full[np.ix_(r1, r2)]
        w_low = lowpass
        finest = _Wedge(nscales - 1, 0, shape, src_full.ravel(), w_hi.ravel(), w_hi.ravel())
        wedges[nscales - 1].append(finest)
        coronae[nscales - 1] = (src_full.ravel(), w_hi.ravel())
        scales = range(nscales - 2, 0, -1)

    for j in scales:
        m1, m2 = m1 / 2, m2 / 2
        lowpass = np.outer(lowpass_1d(m1), lowpass_1d(m2))
        hipass = np.sqrt(1 - lowpass**2)
        c1, c2 = math.floor(4 * m1), math.floor(4 * m2)
        h1, h2 = math.floor(2 * m1), math.floor(2 * m2)
        inner = np.ix_(np.arange(c1 - h1, c1 + h1 + 1), np.arange(c2 - h2, c2 + h2 + 1))
        w_hi = w_low.copy()
        w_hi[inner] = w_low[inner] * hipass
        src_hi = src_low
        coronae[j] = (src_hi.ravel(), w_hi.ravel())
        src_low = src_low[inner]
        w_low = w_low[inner] * lowpass
        with np.errstate(divide="ignore", invalid="ignore"):
            wedges[j] = _angular_wedges(j, counts[j], m1, m2, src_hi, w_hi)

    coarse = _Wedge(0, 0, src_low.shape, src_low.ravel(), w_low.ravel(), w_low.ravel())
    wedges[0] = [coarse]
    coronae[0] = (src_low.ravel(), w_low.ravel())
    tiling.wedges = wedges
    tiling._coronae = coronae  # type: ignore[assignment]
    return tiling


def _extended_lowpass(n: int, m: float) -> np.ndarray:
    length = math.floor(2 * m) - math.floor(m) - 1 - (n % 3 == 0)
    coord = np.linspace(0.0, 1.0, length + 1)
    wl, wr = window_pair(coord)
    lp = np.concatenate([wl, np.ones(2 * math.floor(m) + 1), wr])
    if n % 3 == 0:
        lp = np.concatenate([[0.0], lp, [0.0]])
    return lp


def _angular_wedges(j, nangles, m1, m2, src_hi, w_hi) -> list[_Wedge]:
    """Split one corona into ``nangles`` wrapped wedges, four quadrants."""
    out: list[_Wedge] = []
    per_quad = nangles // 4
    # track source index and radial weight through the per-quadrant rotations
    src, rad = src_hi, w_hi
    for quadrant in range(1, 5):
        odd = quadrant % 2 == 1
        m_horiz = m2 if odd else m1
        m_vert = m1 if odd else m2
        f4h, f4v = math.floor(4 * m_horiz), math.floor(4 * m_vert)
        fv = math.floor(m_vert)

        ticks_left = _mround(np.arange(0, 0.5 + 1e-12, 1 / (2 * per_quad)) * 2 * f4h + 1)
        ticks_right = 2 * f4h + 2 - ticks_left
        if per_quad % 2:
            ticks = np.concatenate([ticks_left, ticks_right[::-1]])
        else:
            ticks = np.concatenate([ticks_left, ticks_right[-2::-1]])
        ends = ticks[1:-1:2]
        mids = (ends[:-1] + ends[1:]) / 2

        xx_full = np.arange(1, 2 * f4h + 2)
        shift_row = 1 if quadrant in (2, 3) else 0
        shift_col = 1 if quadrant == 3 or quadrant == 4 else 0

        def wrap(length, width, left_line, rows, clamp=None):
            first_row = f4v + 2 - math.ceil((length + 1) / 2) + ((length + 1) % 2) * shift_row
            first_col = f4h + 2 - math.ceil((width + 1) / 2) + ((width + 1) % 2) * shift_col
            g_src = np.zeros((length, width), dtype=np.int64)
            g_rad = np.zeros((length, width))
            g_xx = np.zeros((length, width))
            g_yy = np.zeros((length, width))
            ok = np.ones((length, width), dtype=bool)
            span = np.arange(width)
            for i, row in enumerate(rows):
                cols = left_line[i] + np.mod(span - (left_line[i] - first_col), width)
                valid = np.ones(width, dtype=bool)
                if clamp == "low":
                    valid = cols > 0
                    cols = np.maximum(cols, 1)
                elif clamp == "high":
                    valid = cols <= 2 * f4h + 1
                    cols = np.minimum(cols, 2 * f4h + 1)
                new_row = (row - first_row) % length
                g_src[new_row] = src[row - 1, cols - 1]
                g_rad[new_row] = rad[row - 1, cols - 1] * valid
                g_xx[new_row] = xx_full[cols - 1]
                g_yy[new_row] = row
                ok[new_row] = valid
            return g_src, g_rad, g_xx, g_yy, ok

        def emit(g_src, g_rad, ang, ok):
            # angle coordinates are 0/0 on the corona's inner rows, where the radial factor is 0
            live = ok & (g_rad > 0)
            weight = np.where(live, g_rad * np.where(live, ang, 0.0), 0.0)
            k = -(quadrant - 1)
            g_src, weight, g_rad = (np.rot90(a, k) for a in (g_src, weight, g_rad))
            out.append(
                _Wedge(j, len(out), weight.shape, g_src.ravel().copy(),
                       weight.ravel().copy(), g_rad.ravel().copy())
            )

        # left corner wedge
        first_end_vert = int(_mround(2 * f4v / (2 * per_quad) + 1))
        len_corner = f4v - fv + math.ceil(first_end_vert / 4)
        rows_corner = np.arange(1, len_corner + 1)
        width = int(ends[1] + ends[0] - 1)
        slope = (f4h + 1 - ends[0]) / f4v
        left_line = _mround(2 - ends[0] + slope * (rows_corner - 1))
        g_src, g_rad, xx, yy, ok = wrap(len_corner, width, left_line, rows_corner, "low")
        slope_r = (f4h + 1 - mids[0]) / f4v
        coord_r = 0.5 + f4v / (ends[1] - ends[0]) * (xx - (mids[0] + slope_r * (yy - 1))) / (f4v + 1 - yy)
        c2 = 1 / (1 / (2 * f4h / (ends[0] - 1) - 1) + 1 / (2 * f4v / (first_end_vert - 1) - 1))
        c1 = c2 / (2 * f4v / (first_end_vert - 1) - 1)
        xn, yn = (xx - 1) / f4h, (yy - 1) / f4v
        xx = np.where(xn + yn == 2, xx + 1, xx)
        xn = (xx - 1) / f4h
        coord_c = c1 + c2 * (xn - yn) / (2 - (xn + yn))
        emit(g_src, g_rad, window_pair(coord_c)[0] * window_pair(coord_r)[1], ok)

        # regular wedges
        len_wedge = f4v - fv
        rows = np.arange(1, len_wedge + 1)
        for sub in range(2, per_quad):
            width = int(ends[sub] - ends[sub - 2] + 1)
            slope = (f4h + 1 - ends[sub - 1]) / f4v
            left_line = _mround(ends[sub - 2] + slope * (rows - 1))
            g_src, g_rad, xx, yy, ok = wrap(len_wedge, width, left_line, rows)
            slope_l = (f4h + 1 - mids[sub - 2]) / f4v
            coord_l = 0.5 + f4v / (ends[sub - 1] - ends[sub - 2]) * (
                xx - (mids[sub - 2] + slope_l * (yy - 1))) / (f4v + 1 - yy)
            slope_r = (f4h + 1 - mids[sub - 1]) / f4v
            coord_r = 0.5 + f4v / (ends[sub] - ends[sub - 1]) * (
                xx - (mids[sub - 1] + slope_r * (yy - 1))) / (f4v + 1 - yy)
            emit(g_src, g_rad, window_pair(coord_l)[0] * window_pair(coord_r)[1], ok)

        # right corner wedge
        width = int(4 * f4h + 3 - ends[-1] - ends[-2])
        slope = (f4h + 1 - ends[-1]) / f4v
        left_line = _mround(ends[-2] + slope * (rows_corner - 1))
        g_src, g_rad, xx, yy, ok = wrap(len_corner, width, left_line, rows_corner, "high")
        slope_l = (f4h + 1 - mids[-1]) / f4v
        coord_l = 0.5 + f4v / (ends[-1] - ends[-2]) * (xx - (mids[-1] + slope_l * (yy - 1))) / (f4v + 1 - yy)
        c2 = -1 / (2 * f4h / (ends[-1] - 1) - 1 + 1 / (2 * f4v / (first_end_vert - 1) - 1))
        c1 = -c2 * (2 * f4h / (ends[-1] - 1) - 1)
        xn, yn = (xx - 1) / f4h, (yy - 1) / f4v
        xx = np.where(xn == yn, xx - 1, xx)
        xn = (xx - 1) / f4h
        coord_c = c1 + c2 * (2 - (xn + yn)) / (xn - yn)
        emit(g_src, g_rad, window_pair(coord_l)[0] * window_pair(coord_c)[1], ok)

        src, rad = np.rot90(src), np.rot90(rad)
    return out


# ---------------------------------------------------------------------------
# transform


def _centered_fft(x: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(x))) / math.sqrt(x.size)


def _centered_ifft(x: np.ndarray) -> np.ndarray:
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(x))) * math.sqrt(x.size)


def forward(img, cfg: TransformConfig | None = None) -> CurveletCoeffs:
    """Curvelet coefficients of a 2-D real image."""
    cfg = cfg or TransformConfig()
    data = np.asarray(getattr(img, "data", img), dtype=float)
    if data.ndim != 2:
        raise ValueError("forward expects a 2-D image")
    tiling = CurveletTiling.build(data.shape, cfg)
    spectrum = _centered_fft(data).ravel()
    subbands = [
        [_centered_ifft((spectrum[w.src] * w.weight).reshape(w.shape)) for w in scale]
        for scale in tiling.wedges
    ]
    return CurveletCoeffs(cfg, data.shape, subbands)


def adjoint(coeffs: CurveletCoeffs) -> np.ndarray:
    """Adjoint of :func:`forward`; complex-valued image."""
    tiling = CurveletTiling.build(coeffs.shape, coeffs.config)
    if coeffs.wedge_shapes != tiling.wedge_shapes:
        raise ValueError("coefficient shapes do not match the transform configuration")
    n1, n2 = coeffs.shape
    acc = np.zeros(n1 * n2, dtype=complex)
    for scale, bands in zip(tiling.wedges, coeffs.subbands):
        for w, band in zip(scale, bands):
            wrapped = _centered_fft(np.asarray(band, dtype=complex)).ravel()
            acc += np.bincount(w.src, weights=(wrapped * w.weight).real, minlength=n1 * n2)
            acc += 1j * np.bincount(w.src, weights=(wrapped * w.weight).imag, minlength=n1 * n2)
    return _centered_ifft(acc.reshape(n1, n2))


def inverse(coeffs: CurveletCoeffs) -> np.ndarray:
    """Reconstruct the (real) image from its curvelet coefficients."""
    return adjoint(coeffs).real


def structural_audit(shape: tuple[int, int], cfg: TransformConfig) -> dict:
    """Wedge shapes, coefficient count and block count derived from the tiling only."""
    tiling = CurveletTiling.build(shape, cfg)
    shapes = tiling.wedge_shapes
    blocks = sum(math.ceil(h / 8) * math.ceil(w / 8) for scale in shapes for h, w in scale)
    return {
        "wedge_shapes": shapes,
        "wedge_counts": [len(s) for s in shapes],
        "coefficient_count": tiling.coefficient_count(),
        "block_count": blocks,
        "feature_length": 4 * blocks,
    }


# ---------------------------------------------------------------------------
# coefficient dump
#
# little-endian: magic, int32 n1, n2, nscales, nangles_coarse, finest (0 = wavelets,
# 1 = curvelets), then per scale an int32 wedge count and per wedge int32 (rows, cols),
# then every wedge as row-major complex128 in scan order.

_DUMP_MAGIC = b"FDCTWRP1"


def dump_coeffs(coeffs: CurveletCoeffs) -> bytes:
    cfg = coeffs.config
    head = [*coeffs.shape, cfg.nscales, cfg.nangles_coarse, int(cfg.finest == "curvelets")]
    for scale in coeffs.subbands:
        head.append(len(scale))
        for band in scale:
            head.extend(band.shape)
    parts = [_DUMP_MAGIC, np.asarray(head, dtype="<i4").tobytes()]
    parts += [np.ascontiguousarray(band, dtype="<c16").tobytes() for _, _, band in coeffs]
    return b"".join(parts)


def load_coeffs(payload: bytes) -> CurveletCoeffs:
    if payload[: len(_DUMP_MAGIC)] != _DUMP_MAGIC:
        raise ValueError("not a curvelet coefficient dump")
    pos = len(_DUMP_MAGIC)

    def ints(k):
        nonlocal pos
        out = np.frombuffer(payload, dtype="<i4", count=k, offset=pos)
        pos += 4 * k
        return [int(v) for v in out]

    n1, n2, nscales, nangles, finest = ints(5)
    cfg = TransformConfig(nscales, nangles, "curvelets" if finest else "wavelets")
    shapes = []
    for _ in range(nscales):
        (count,) = ints(1)
        shapes.append([tuple(ints(2)) for _ in range(count)])
    subbands = []
    for scale in shapes:
        bands = []
        for h, w in scale:
            band = np.frombuffer(payload, dtype="<c16", count=h * w, offset=pos)
            bands.append(band.reshape(h, w).astype(complex))
            pos += 16 * h * w
        subbands.append(bands)
    if pos != len(payload):
        raise ValueError("trailing bytes in coefficient dump")
    return CurveletCoeffs(cfg, (n1, n2), subbands)
