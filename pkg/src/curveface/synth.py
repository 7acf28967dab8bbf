"""Synthetic rectified stereo "faces" with exact ground-truth disparity.

A scene is a stack of layers.  Each layer owns a region (ellipse) in
left-image coordinates, a disparity surface ``a*x + b*y + c`` plus an
optional Gaussian bump, and a texture attached to the surface.  The left
view shows, per pixel, the covering layer with the largest disparity; the
right view is rendered exactly by solving ``xL - d(xL, y) = xR`` per layer
and keeping the nearest hit, so occlusions come out of the geometry rather
than a warp.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .imgio import GrayImage
from .stereo import DisparityMap, StereoPair


@dataclass
class Layer:
    center: tuple[float, float]  # (x, y); None-like huge radii make a background
    radii: tuple[float, float]
    plane: tuple[float, float, float]
    albedo: float
    tex_freq: np.ndarray  # (n, 2) cycles/pixel
    tex_phase: np.ndarray
    tex_amp: np.ndarray
    bump: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)  # amp, cx, cy, sigma
    step: float = 0.0  # > 0 posterizes the texture into flat cells of this grey spacing
    offset: float = 0.0

    def covers(self, x, y) -> np.ndarray:
        (cx, cy), (rx, ry) = self.center, self.radii
        return ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 <= 1.0

    def disparity(self, x, y) -> np.ndarray:
        a, b, c = self.plane
        amp, bx, by, s = self.bump
        d = a * x + b * y + c
        if amp:
            d = d + amp * np.exp(-((x - bx) ** 2 + (y - by) ** 2) / (2 * s * s))
        return d

    def texture(self, x, y) -> np.ndarray:
        arg = 2 * np.pi * (np.multiply.outer(x, self.tex_freq[:, 0])
                           + np.multiply.outer(y, self.tex_freq[:, 1])) + self.tex_phase
        t = self.albedo + (np.sin(arg) * self.tex_amp).sum(axis=-1)
        if self.step > 0:
            t = self.step * np.floor(t / self.step) + self.offset
        return t


@dataclass
class Scene:
    layers: list[Layer] = field(default_factory=list)
    width: int = 64
    height: int = 64


def _texture(rng: np.random.Generator, n: int = 10, amp: float = 7.0):
    freq = rng.uniform(0.04, 0.35, size=(n, 2)) * rng.choice([-1, 1], size=(n, 2))
    phase = rng.uniform(0, 2 * np.pi, size=n)
    amps = rng.uniform(0.4, 1.0, size=n)
    return freq, phase, amps * amp / np.sqrt(n / 2)


def subject_scene(rng: np.random.Generator, width: int = 128, height: int = 128,
                  smooth: float = 0.0, tex_amp: float = 30.0, posterize: float = 25.0) -> Scene:
    """Background plane, face ellipse, two cheek/brow patches and a nose.

    Geometry scales with the frame so the face keeps a background margin.
    Disparity increases strictly from background to nose.  With ``smooth``
    zero every layer is planar; a positive value adds a Gaussian bulge to
    the face.  With ``posterize`` > 0 each layer's texture is quantized to
    flat cells; layer k's grey levels are shifted by k * posterize / 5, so
    a flat cell never has the same grey as a cell of another layer.
    """
    u = min(width, height) / 64.0
    # small albedo steps: strong edges between layers widen foreground fattening
    albedos = rng.permutation(np.array([116.0, 122.0, 128.0, 134.0, 140.0]))
    albedos = albedos + rng.uniform(-2, 2, size=5)
    cx, cy = width / 2 + rng.uniform(-3, 3) * u, height / 2 + rng.uniform(-3, 3) * u
    layers = []

    def add(center, radii, plane, albedo, bump=(0.0, 0.0, 0.0, 1.0)):
        f, p, a = _texture(rng, amp=tex_amp)
        k = len(layers)
        layers.append(Layer(center, radii, plane, float(albedo), f, p, a, bump,
                            posterize, k * posterize / 5))

    big = 1e6
    add((0.0, 0.0), (big, big), (rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01), 2.0), albedos[0])
    fx, fy = rng.uniform(14, 17) * u, rng.uniform(18, 21) * u
    c_face = 10.0 + rng.uniform(-1.0, 1.0)
    a_face, b_face = rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04)
    add((cx, cy), (fx, fy), (a_face, b_face, c_face - a_face * cx - b_face * cy), albedos[1],
        (smooth, cx, cy, fx / 2))
    for side in (-1, 1):
        px = cx + side * rng.uniform(6, 8) * u
        py = cy - rng.uniform(5, 8) * u
        base = c_face + smooth + 4.0
        add((px, py), (rng.uniform(4, 5) * u, rng.uniform(3, 4) * u),
            (0.0, 0.0, base + rng.uniform(0, 1.2)), albedos[2] if side < 0 else albedos[3])
    nose_d = c_face + smooth + 8.0 + rng.uniform(0, 2.0)
    ncx, ncy = cx + rng.uniform(-1.5, 1.5) * u, cy + rng.uniform(2, 4) * u
    na, nb = rng.uniform(-0.06, 0.06), rng.uniform(-0.06, 0.06)
    add((ncx, ncy), (rng.uniform(3, 4) * u, rng.uniform(5, 7) * u),
        (na, nb, nose_d - na * ncx - nb * ncy), albedos[4])
    return Scene(layers, width, height)


def _visible(scene: Scene, x: np.ndarray, y: np.ndarray):
    """Index and disparity of the nearest layer covering left coords (x, y)."""
    best = np.full(x.shape, -1)
    disp = np.full(x.shape, -np.inf)
    for k, layer in enumerate(scene.layers):
        d = layer.disparity(x, y)
        take = layer.covers(x, y) & (d > disp)
        best[take], disp[take] = k, d[take]
    return best, disp


def _right_hits(scene: Scene, xr: np.ndarray, y: np.ndarray, iters: int = 40):
    """Nearest layer seen at right coords (xr, y) and the matching left x."""
    best = np.full(xr.shape, -1)
    disp = np.full(xr.shape, -np.inf)
    xl_best = np.zeros(xr.shape)
    for k, layer in enumerate(scene.layers):
        xl = xr + layer.disparity(xr, y)
        for _ in range(iters):
            xl = xr + layer.disparity(xl, y)
        d = layer.disparity(xl, y)
        take = layer.covers(xl, y) & (d > disp)
        best[take], disp[take], xl_best[take] = k, d[take], xl[take]
    return best, disp, xl_best


def _shade(scene: Scene, idx: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.zeros(x.shape)
    for k, layer in enumerate(scene.layers):
        m = idx == k
        if m.any():
            out[m] = layer.texture(x[m], y[m])
    return out


@dataclass
class Rendered:
    pair: StereoPair
    truth: DisparityMap  # valid = visible in both views


def render(scene: Scene, rng: np.random.Generator | None = None, noise: float = 0.0,
           gain: float = 1.0, bias: float = 0.0) -> Rendered:
    h, w = scene.height, scene.width
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    k_left, d_left = _visible(scene, xs, ys)
    left = _shade(scene, k_left, xs, ys)
    k_right, _, xl = _right_hits(scene, xs, ys)
    right = _shade(scene, k_right, xl, ys)

    # a left pixel is matched iff the right view at x - d sees the same layer
    xr = xs - d_left
    k_back, _, xl_back = _right_hits(scene, xr, ys)
    seen = (k_back == k_left) & (np.abs(xl_back - xs) < 1e-6) & (xr >= -0.5)

    left = gain * left + bias
    right = gain * right + bias
    if noise > 0:
        rng = rng or np.random.default_rng(0)
        left = left + rng.normal(0, noise, left.shape)
        right = right + rng.normal(0, noise, right.shape)
    pair = StereoPair(GrayImage.clipped(left), GrayImage.clipped(right))
    return Rendered(pair, DisparityMap(d_left, seen))


def jitter_scene(scene: Scene, rng: np.random.Generator, amount: float) -> Scene:
    """Per-view pose jitter: global shift of the face and a small depth change."""
    if amount <= 0:
        return scene
    dx, dy = rng.uniform(-1.5, 1.5, size=2) * amount
    dd = rng.uniform(-0.4, 0.4) * amount
    layers = []
    for i, layer in enumerate(scene.layers):
        if i == 0:
            layers.append(layer)
            continue
        a, b, c = layer.plane
        amp, bx, by, s = layer.bump
        layers.append(replace(
            layer,
            center=(layer.center[0] + dx, layer.center[1] + dy),
            plane=(a, b, c - a * dx - b * dy + dd),
            tex_phase=layer.tex_phase - 2 * np.pi * (layer.tex_freq @ np.array([dx, dy])),
            bump=(amp, bx + dx, by + dy, s),
        ))
    return Scene(layers, scene.width, scene.height)
