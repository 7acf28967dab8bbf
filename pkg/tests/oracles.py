"""Independent reference implementations used by the tests.

Each oracle recomputes a quantity by a different route from the package code:
brute-force loops, explicit normal equations, direct geometric formulas.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np


def matlab_round(x: float) -> int:
    # half away from zero
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def expected_wedge_shapes(n1: int, n2: int, nscales: int, nangles_coarse: int,
                          finest: str = "curvelets") -> list[list[tuple[int, int]]]:
    """Wedge array shapes of the wrapping transform from its integer geometry alone.

    Scale j (1-based, coarse = 1) uses M = N / (3 * 2^(nscales - j + 1)) when
    the finest level is curvelets, and half that when it is wavelets.  Inside a quadrant: corner wedges are
    floor(4Mv) - floor(Mv) + ceil(e_v / 4) rows tall, regular wedges
    floor(4Mv) - floor(Mv); widths follow from the wedge endpoint ticks.
    Quadrants 2 and 4 are transposed on output.
    """
    nb = [1] + [nangles_coarse * 2 ** math.ceil((nscales - s) / 2) for s in range(nscales, 1, -1)]
    shapes: list = [None] * nscales
    m1, m2 = n1 / 3, n2 / 3
    if finest == "wavelets":
        # the wavelet split happens at M = N/6; curvelet scales continue below it
        m1, m2 = m1 / 2, m2 / 2
        shapes[nscales - 1] = [(n1, n2)]
        scales = range(nscales - 1, 1, -1)
    else:
        scales = range(nscales, 1, -1)
    for j in scales:
        m1, m2 = m1 / 2, m2 / 2
        per = nb[j - 1] // 4
        out = []
        for quadrant in range(1, 5):
            mh, mv = (m2, m1) if quadrant % 2 == 1 else (m1, m2)
            f4h, f4v = math.floor(4 * mh), math.floor(4 * mv)
            left = [matlab_round(k / (2 * per) * 2 * f4h + 1) for k in range(per + 1)]
            right = [2 * f4h + 2 - t for t in left]
            ticks = left + (right[::-1] if per % 2 else right[-2::-1])
            ends = ticks[1:-1:2]
            first_vert = matlab_round(2 * f4v / (2 * per) + 1)
            corner_len = f4v - math.floor(mv) + math.ceil(first_vert / 4)
            reg_len = f4v - math.floor(mv)
            wedges = [(corner_len, ends[1] + ends[0] - 1)]
            wedges += [(reg_len, ends[s] - ends[s - 2] + 1) for s in range(2, per)]
            wedges.append((corner_len, 4 * f4h + 3 - ends[-1] - ends[-2]))
            if quadrant % 2 == 0:
                wedges = [(w, h) for h, w in wedges]
            out += wedges
        shapes[j - 1] = out
    shapes[0] = [(2 * math.floor(2 * m1) + 1, 2 * math.floor(2 * m2) + 1)]
    return shapes


def median_filter_oracle(img: np.ndarray, r: int) -> np.ndarray:
    h, w = img.shape
    out = np.empty_like(img, dtype=float)
    for y in range(h):
        for x in range(w):
            vals = sorted(
                img[min(max(y + dy, 0), h - 1), min(max(x + dx, 0), w - 1)]
                for dy in range(-r, r + 1) for dx in range(-r, r + 1)
            )
            out[y, x] = vals[len(vals) // 2]
    return out


def bilinear_oracle(img: np.ndarray, w_out: int, h_out: int) -> np.ndarray:
    h, w = img.shape
    out = np.empty((h_out, w_out))
    for yo in range(h_out):
        for xo in range(w_out):
            y = min(max((yo + 0.5) * h / h_out - 0.5, 0.0), h - 1)
            x = min(max((xo + 0.5) * w / w_out - 0.5, 0.0), w - 1)
            y0, x0 = int(math.floor(y)), int(math.floor(x))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = y - y0, x - x0
            out[yo, xo] = ((1 - fy) * ((1 - fx) * img[y0, x0] + fx * img[y0, x1])
                           + fy * ((1 - fx) * img[y1, x0] + fx * img[y1, x1]))
    return out


def match_cost_oracle(left: np.ndarray, right: np.ndarray, x: int, y: int, d: int, window: int) -> float:
    """Pixel-by-pixel SSD of intensity and of both central-difference gradients.

    Window pixels are clamped to the image first; the match sits d pixels to
    the left of the clamped pixel, clamped again.
    """
    h, w = left.shape
    r = window // 2

    def at(img, yy, xx):
        return img[min(max(yy, 0), h - 1), min(max(xx, 0), w - 1)]

    def gx(img, yy, xx):
        return (at(img, yy, xx + 1) - at(img, yy, xx - 1)) / 2.0

    def gy(img, yy, xx):
        return (at(img, yy + 1, xx) - at(img, yy - 1, xx)) / 2.0

    total = 0.0
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            yy = min(max(y + dy, 0), h - 1)
            xl = min(max(x + dx, 0), w - 1)
            xr = min(max(xl - d, 0), w - 1)
            total += (at(left, yy, xl) - at(right, yy, xr)) ** 2
            total += (gx(left, yy, xl) - gx(right, yy, xr)) ** 2
            total += (gy(left, yy, xl) - gy(right, yy, xr)) ** 2
    return total


def argmin_oracle(cost: np.ndarray) -> np.ndarray:
    nd, h, w = cost.shape
    out = np.zeros((h, w), dtype=int)
    for y in range(h):
        for x in range(w):
            best = 0
            for d in range(1, nd):
                if cost[d, y, x] < cost[best, y, x]:
                    best = d
            out[y, x] = best
    return out


def plane_normal_equations(xs, ys, ds) -> np.ndarray:
    """Solve the 3x3 normal equations of d ~ a x + b y + c by Cramer's rule."""
    xs, ys, ds = (np.asarray(v, dtype=float) for v in (xs, ys, ds))
    n = xs.size
    A = np.array([
        [np.sum(xs * xs), np.sum(xs * ys), np.sum(xs)],
        [np.sum(xs * ys), np.sum(ys * ys), np.sum(ys)],
        [np.sum(xs), np.sum(ys), n],
    ])
    rhs = np.array([np.sum(xs * ds), np.sum(ys * ds), np.sum(ds)])
    det = np.linalg.det(A)
    out = []
    for k in range(3):
        Ak = A.copy()
        Ak[:, k] = rhs
        out.append(np.linalg.det(Ak) / det)
    return np.array(out)


def knn_oracle(query, vectors, labels, K: int, p: int):
    """Sort every (distance, index) pair, vote, break vote ties by the nearest member."""
    dists = []
    for i, v in enumerate(vectors):
        s = 0.0
        for a, b in zip(query, v):
            s += abs(a - b) ** p
        dists.append((s ** (1.0 / p), i))
    dists.sort()
    top = dists[:K]
    votes = Counter(labels[i] for _, i in top)
    best = max(votes.values())
    for _, i in top:
        if votes[labels[i]] == best:
            return labels[i]


def visibility_oracle(disp_left: np.ndarray) -> np.ndarray:
    """Mark left pixels whose match x - d is hidden by a nearer surface, scanning each row."""
    h, w = disp_left.shape
    visible = np.ones((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            xr = x - disp_left[y, x]
            if xr < 0:
                visible[y, x] = False
                continue
            for x2 in range(x + 1, w):
                if abs((x2 - disp_left[y, x2]) - xr) < 0.5 and disp_left[y, x2] > disp_left[y, x]:
                    visible[y, x] = False
                    break
    return visible


def cms_oracle(rankings, truth, max_rank):
    out = []
    for r in range(1, max_rank + 1):
        out.append(sum(1 for ranked, t in zip(rankings, truth) if t in list(ranked)[:r]) / len(truth))
    return out
