"""Disparity and depth from a rectified stereo pair.

Matching cost is the windowed sum of squared intensity differences plus the
squared differences of horizontal and vertical gradients.  The refinement
chain is: winner-takes-all, left/right cross-check, mean-shift segmentation
with per-segment least-squares disparity planes, Delaunay interpolation of
whatever is still unreliable, and finally D = b * f / d.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, QhullError, cKDTree

from .imgio import GrayImage

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StereoPair:
    left: GrayImage
    right: GrayImage

    def __post_init__(self) -> None:
        if self.left.shape != self.right.shape:
            raise ValueError(
                f"stereo images differ in size: {self.left.shape} vs {self.right.shape}"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.left.shape


@dataclass
class CostVolume:
    dmin: int
    dmax: int
    cost: np.ndarray  # (ndisp, height, width)

    @property
    def disparities(self) -> np.ndarray:
        return np.arange(self.dmin, self.dmax + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cost.shape[1:]


@dataclass
class DisparityMap:
    disp: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        self.disp = np.asarray(self.disp, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.disp.shape != self.valid.shape:
            raise ValueError("disparity and validity mask shapes differ")

    @property
    def shape(self) -> tuple[int, int]:
        return self.disp.shape

    def copy(self) -> "DisparityMap":
        return DisparityMap(self.disp.copy(), self.valid.copy())


@dataclass
class SegmentLabels:
    label: np.ndarray
    nsegments: int


@dataclass
class PlaneParams:
    """One plane ``disp = a*x + b*y + c`` per segment (rows of ``coef``).

    ``source`` records how each plane was obtained: ``"fit"`` (full least
    squares), ``"constant"`` (median fallback) or ``"inherited"`` (copied
    from the nearest segment that had valid pixels).
    """

    coef: np.ndarray
    source: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class CameraGeometry:
    baseline: float = 1.0
    focal: float = 1.0

    def __post_init__(self) -> None:
        if not (self.baseline > 0 and self.focal > 0):
            raise ValueError("baseline and focal length must be positive")


@dataclass
class DepthMap:
    depth: np.ndarray
    valid: np.ndarray


@dataclass(frozen=True)
class StereoParams:
    dmin: int = 0
    dmax: int = 24
    window: int = 11
    tol: float = 1.0
    spatial_bw: int = 4
    range_bw: float = 4.0
    min_region: int = 8
    workers: int = 1
    refits: int = 3


# ---------------------------------------------------------------------------
# matching cost


def _gradients(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central differences with clamped borders; returns (d/dx, d/dy)."""
    p = np.pad(a, 1, mode="edge")
    gx = (p[1:-1, 2:] - p[1:-1, :-2]) / 2.0
    gy = (p[2:, 1:-1] - p[:-2, 1:-1]) / 2.0
    return gx, gy


def _check_window(window: int) -> None:
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be a positive odd integer, got {window}")


def match_cost(pair: StereoPair, x: int, y: int, d: int, window: int = 11,
               d_range: tuple[int, int] | None = None) -> float:
    """Dissimilarity of left pixel (x, y) and right pixel (x - d, y).

    Window and shifted coordinates are clamped to the image.
    """
    _check_window(window)
    if d_range is not None and not d_range[0] <= d <= d_range[1]:
        raise ValueError(f"disparity {d} outside [{d_range[0]}, {d_range[1]}]")
    h, w = pair.shape
    if not (0 <= x < w and 0 <= y < h):
        raise ValueError(f"pixel ({x}, {y}) outside {w}x{h} image")
    left, right = pair.left.data, pair.right.data
    lgx, lgy = _gradients(left)
    rgx, rgy = _gradients(right)
    r = window // 2
    vs = np.clip(np.arange(y - r, y + r + 1), 0, h - 1)
    us = np.clip(np.arange(x - r, x + r + 1), 0, w - 1)
    V, U = np.meshgrid(vs, us, indexing="ij")
    Ur = np.clip(U - d, 0, w - 1)
    return float(
        np.sum((left[V, U] - right[V, Ur]) ** 2)
        + np.sum((lgx[V, U] - rgx[V, Ur]) ** 2)
        + np.sum((lgy[V, U] - rgy[V, Ur]) ** 2)
    )


def _cost_slice(stack_l, stack_r, d: int, window: int) -> np.ndarray:
    w = stack_l.shape[2]
    cols = np.clip(np.arange(w) - d, 0, w - 1)
    err = ((stack_l - stack_r[:, :, cols]) ** 2).sum(axis=0)
    # box sums of non-negative terms stay non-negative
    ones = np.ones(window)
    err = ndimage.correlate1d(err, ones, axis=0, mode="nearest")
    return ndimage.correlate1d(err, ones, axis=1, mode="nearest")


def build_cost_volume(pair: StereoPair, dmin: int, dmax: int, window: int = 11,
                      workers: int = 1) -> CostVolume:
    if not 0 <= dmin <= dmax:
        raise ValueError(f"need 0 <= dmin <= dmax, got [{dmin}, {dmax}]")
    _check_window(window)
    return _cost_volume(pair.left.data, pair.right.data, dmin, dmax, window, workers)


def _cost_volume(left, right, dmin, dmax, window, workers=1) -> CostVolume:
    stack_l = np.stack([left, *_gradients(left)])
    stack_r = np.stack([right, *_gradients(right)])
    ds = range(dmin, dmax + 1)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            slices = list(pool.map(lambda d: _cost_slice(stack_l, stack_r, d, window), ds))
    else:
        slices = [_cost_slice(stack_l, stack_r, d, window) for d in ds]
    return CostVolume(dmin, dmax, np.stack(slices))


def wta(volume: CostVolume) -> DisparityMap:
    """Per-pixel minimum-cost disparity; ties go to the smallest disparity."""
    best = np.argmin(volume.cost, axis=0)  # first minimum == smallest d
    disp = (best + volume.dmin).astype(np.float64)
    return DisparityMap(disp, np.ones(disp.shape, dtype=bool))


def right_disparity(pair: StereoPair, dmin: int, dmax: int, window: int = 11,
                    workers: int = 1) -> DisparityMap:
    """WTA disparity referenced to the right image: R(x) matches L(x + d).

    Mirroring both images turns right->left matching into the left->right case.
    """
    flipped = _cost_volume(pair.right.data[:, ::-1], pair.left.data[:, ::-1],
                           dmin, dmax, window, workers)
    dm = wta(flipped)
    return DisparityMap(dm.disp[:, ::-1].copy(), dm.valid[:, ::-1].copy())


def cross_check(left_disp: DisparityMap, right_disp: DisparityMap, tol: float = 1.0) -> DisparityMap:
    """Keep (x, y) iff |dL(x, y) - dR(x - dL(x, y), y)| <= tol."""
    if left_disp.shape != right_disp.shape:
        raise ValueError("left and right disparity maps differ in size")
    h, w = left_disp.shape
    ys, xs = np.mgrid[0:h, 0:w]
    xr = xs - np.rint(left_disp.disp).astype(int)
    inside = (xr >= 0) & (xr < w)
    xr_c = np.clip(xr, 0, w - 1)
    other = right_disp.disp[ys, xr_c]
    agree = np.abs(left_disp.disp - other) <= tol
    valid = left_disp.valid & inside & agree & right_disp.valid[ys, xr_c]
    return DisparityMap(left_disp.disp.copy(), valid)


# ---------------------------------------------------------------------------
# segmentation


def segment(img: GrayImage, spatial_bw: int = 4, range_bw: float = 4.0,
            min_region: int = 8, max_iter: int = 20) -> SegmentLabels:
    """Mean-shift over (x, y, intensity) followed by mode grouping.

    Each pixel climbs to a mode with a flat kernel of half-width
    ``spatial_bw`` in space and ``range_bw`` in intensity.  4-connected pixels
    whose modes lie within the bandwidths are joined; regions smaller than
    ``min_region`` pixels are merged into the adjacent region of closest mean
    intensity.  Labels are dense and numbered in raster order of first pixel.
    """
    data = img.data
    h, w = data.shape
    px, py = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    pv = data.copy()
    offsets = [(dy, dx) for dy in range(-spatial_bw, spatial_bw + 1)
               for dx in range(-spatial_bw, spatial_bw + 1)]
    for _ in range(max_iter):
        cx = np.rint(px).astype(int)
        cy = np.rint(py).astype(int)
        sx = np.zeros_like(px)
        sy = np.zeros_like(py)
        sv = np.zeros_like(pv)
        n = np.zeros_like(pv)
        for dy, dx in offsets:
            qx, qy = cx + dx, cy + dy
            inb = (qx >= 0) & (qx < w) & (qy >= 0) & (qy < h)
            qv = data[np.clip(qy, 0, h - 1), np.clip(qx, 0, w - 1)]
            take = inb & (np.abs(qv - pv) <= range_bw)
            sx += np.where(take, qx, 0)
            sy += np.where(take, qy, 0)
            sv += np.where(take, qv, 0.0)
            n += take
        n = np.maximum(n, 1)
        nx, ny, nv = sx / n, sy / n, sv / n
        shift = np.abs(nx - px) + np.abs(ny - py) + np.abs(nv - pv)
        px, py, pv = nx, ny, nv
        if shift.max() < 1e-3:
            break

    idx = np.arange(h * w).reshape(h, w)
    edges = []
    for a, b in ((idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])):
        a, b = a.ravel(), b.ravel()
        close = (
            (np.abs(px.ravel()[a] - px.ravel()[b]) <= spatial_bw)
            & (np.abs(py.ravel()[a] - py.ravel()[b]) <= spatial_bw)
            & (np.abs(pv.ravel()[a] - pv.ravel()[b]) <= range_bw / 2)
        )
        edges.append((a[close], b[close]))
    rows = np.concatenate([e[0] for e in edges])
    cols = np.concatenate([e[1] for e in edges])
    graph = sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(h * w, h * w))
    _, comp = connected_components(graph, directed=False)
    labels = _merge_small(comp.reshape(h, w), data, min_region)
    return _relabel(labels)


def _relabel(labels: np.ndarray) -> SegmentLabels:
    _, first, inverse = np.unique(labels.ravel(), return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    dense = order[inverse].reshape(labels.shape)
    return SegmentLabels(dense, int(first.size))


def _merge_small(labels: np.ndarray, data: np.ndarray, min_region: int) -> np.ndarray:
    """Fold regions below ``min_region`` into the adjacent region of closest mean.

    All undersized regions are merged in one pass, smallest first, then the
    pass repeats on the result until none remain.
    """
    labels = _relabel(labels).label
    h, w = labels.shape
    while True:
        counts = np.bincount(labels.ravel())
        small = np.flatnonzero(counts < min_region)
        if counts.size <= 1 or small.size == 0:
            return labels
        means = np.bincount(labels.ravel(), weights=data.ravel()) / counts
        # label adjacency from 4-neighbour pairs
        pairs = np.concatenate([
            np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1),
            np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1),
        ])
        pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        pairs = np.unique(np.concatenate([pairs, pairs[:, ::-1]]), axis=0)
        target = np.arange(counts.size)
        merged = False
        for s in small[np.lexsort((small, counts[small]))]:
            nb = pairs[pairs[:, 0] == s, 1]
            nb = np.unique(target[nb])
            nb = nb[nb != target[s]]
            if nb.size == 0:
                continue
            # ties go to the lower label so the result is order independent
            t = nb[np.argmin(np.abs(means[nb] - means[s]))]
            target[target == target[s]] = t
            merged = True
        if not merged:
            return labels
        labels = _relabel(target[labels]).label


# ---------------------------------------------------------------------------
# planes and hole filling


def fit_planes(disp: DisparityMap, labels: SegmentLabels) -> PlaneParams:
    """Least-squares plane per segment over its valid pixels."""
    if labels.label.shape != disp.shape:
        raise ValueError("label image and disparity map differ in size")
    if not disp.valid.any():
        raise ValueError("no valid disparity anywhere; cannot fit planes")
    h, w = disp.shape
    ys, xs = np.mgrid[0:h, 0:w]
    coef = np.zeros((labels.nsegments, 3))
    source = [""] * labels.nsegments
    centroids = np.zeros((labels.nsegments, 2))
    for s in range(labels.nsegments):
        seg = labels.label == s
        centroids[s] = xs[seg].mean(), ys[seg].mean()
        m = seg & disp.valid
        if not m.any():
            continue
        x, y, d = xs[m].astype(float), ys[m].astype(float), disp.disp[m]
        A = np.column_stack([x, y, np.ones_like(x)])
        if x.size >= 3 and np.linalg.matrix_rank(A) == 3:
            coef[s] = np.linalg.lstsq(A, d, rcond=None)[0]
            source[s] = "fit"
        else:
            coef[s] = (0.0, 0.0, float(np.median(d)))
            source[s] = "constant"
    donors = [s for s in range(labels.nsegments) if source[s]]
    tree = cKDTree(centroids[donors])
    for s in range(labels.nsegments):
        if not source[s]:
            _, k = tree.query(centroids[s])
            coef[s] = coef[donors[int(k)]]
            source[s] = "inherited"
    return PlaneParams(coef, source)


def apply_planes(labels: SegmentLabels, planes: PlaneParams) -> DisparityMap:
    if planes.coef.shape[0] < labels.nsegments:
        raise ValueError("fewer planes than segments")
    h, w = labels.label.shape
    ys, xs = np.mgrid[0:h, 0:w]
    c = planes.coef[labels.label]
    disp = c[..., 0] * xs + c[..., 1] * ys + c[..., 2]
    return DisparityMap(disp, np.ones((h, w), dtype=bool))


def delaunay_fill(disp: DisparityMap) -> DisparityMap:
    """Fill invalid pixels by barycentric interpolation over a Delaunay mesh
    of the valid ones; pixels outside the hull take the nearest valid value."""
    holes = ~disp.valid
    if not holes.any():
        return disp.copy()
    pts = np.argwhere(disp.valid)[:, ::-1].astype(float)  # (x, y)
    if pts.shape[0] < 3:
        raise ValueError("need at least 3 valid pixels for Delaunay filling")
    vals = disp.disp[disp.valid]
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise ValueError("valid pixels are collinear; cannot triangulate") from exc
    q = np.argwhere(holes)[:, ::-1].astype(float)
    simplex = tri.find_simplex(q)
    out = disp.disp.copy()
    filled = np.empty(q.shape[0])
    inside = simplex >= 0
    if inside.any():
        T = tri.transform[simplex[inside]]
        b2 = np.einsum("ijk,ik->ij", T[:, :2], q[inside] - T[:, 2])
        bary = np.column_stack([b2, 1 - b2.sum(axis=1)])
        filled[inside] = (bary * vals[tri.simplices[simplex[inside]]]).sum(axis=1)
    if (~inside).any():
        _, k = cKDTree(pts).query(q[~inside])
        filled[~inside] = vals[k]
    out[holes] = filled
    return DisparityMap(out, np.ones_like(disp.valid))


# ---------------------------------------------------------------------------
# depth


def depth_from_disparity(disp: DisparityMap, geom: CameraGeometry = CameraGeometry(),
                         eps: float = 1e-6) -> DepthMap:
    ok = disp.valid & (disp.disp > eps)
    depth = np.zeros(disp.shape)
    depth[ok] = geom.baseline * geom.focal / disp.disp[ok]
    return DepthMap(depth, ok)


def depth_to_image(depth: DepthMap) -> GrayImage:
    """Min-max rescale valid depths to [0, 255]; invalid pixels become 255 (far)."""
    out = np.full(depth.depth.shape, 255.0)
    if depth.valid.any():
        d = depth.depth[depth.valid]
        lo, hi = d.min(), d.max()
        out[depth.valid] = 0.0 if hi == lo else 255.0 * (d - lo) / (hi - lo)
    return GrayImage.clipped(out)


def _group(keys: np.ndarray, values: np.ndarray):
    """Yield (key, values) runs after a stable sort by key."""
    order = np.argsort(keys, kind="stable")
    keys, values = keys[order], values[order]
    cuts = np.flatnonzero(np.diff(keys)) + 1
    for chunk_k, chunk_v in zip(np.split(keys, cuts), np.split(values, cuts)):
        if chunk_k.size:
            yield int(chunk_k[0]), chunk_v


def refine(pair: StereoPair, params: StereoParams = StereoParams()) -> tuple[DisparityMap, dict]:
    """Full chain; returns the dense disparity and the intermediate maps."""
    vol = build_cost_volume(pair, params.dmin, params.dmax, params.window, params.workers)
    raw = wta(vol)
    right = right_disparity(pair, params.dmin, params.dmax, params.window, params.workers)
    checked = cross_check(raw, right, params.tol)
    labels = segment(pair.left, params.spatial_bw, params.range_bw, params.min_region)
    # trimmed least squares: each plane is refitted on the checked pixels
    # within tol of the current estimate, starting from the segment median so
    # a minority of mismatches cannot tilt the first fit
    planes = fit_planes(checked, labels)
    planar = apply_planes(labels, planes)
    ok = checked.valid.ravel()
    median = np.zeros(labels.nsegments)
    for s, vals in _group(labels.label.ravel()[ok], checked.disp.ravel()[ok]):
        median[s] = np.median(vals)
    reference = median[labels.label]
    for _ in range(params.refits + 1):
        keep = checked.valid & (np.abs(checked.disp - reference) <= params.tol)
        if keep.sum() < 3:
            break
        planes = fit_planes(DisparityMap(checked.disp, keep), labels)
        planar = apply_planes(labels, planes)
        if np.allclose(planar.disp, reference):
            break
        reference = planar.disp
    # pixels on borrowed planes, or planes leaving the search range, are re-estimated
    borrowed = np.array([src == "inherited" for src in planes.source])[labels.label]
    in_range = (planar.disp >= params.dmin - 0.5) & (planar.disp <= params.dmax + 0.5)
    planar.valid = ~borrowed & in_range
    if planar.valid.sum() >= 3:
        dense = delaunay_fill(planar)
    else:
        dense = delaunay_fill(checked)
    stages = {"wta": raw, "right": right, "checked": checked, "labels": labels,
              "planes": planes, "planar": planar}
    return dense, stages


def estimate_depth(pair: StereoPair, params: StereoParams = StereoParams(),
                   geom: CameraGeometry = CameraGeometry()) -> tuple[GrayImage, DisparityMap]:
    dense, _ = refine(pair, params)
    return depth_to_image(depth_from_disparity(dense, geom)), dense
