"""Positive-octant and positive-quadrant integration in polar coordinates.

Angles use the tanh-sinh (double exponential) rule, which is insensitive
to the boundary layers the integrands develop near coordinate planes.
Radii use composite Gauss-Legendre panels in y = log r. When the kernel
oscillates with spatial frequency ``omega``, radial panels are narrowed to
keep the phase per panel bounded, and far from the origin the angular rule
switches to Gauss-Legendre panels whose count grows with the radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

_KMAX = 3.2
_GL_ORDER = 10


@lru_cache(maxsize=64)
def tanh_sinh(h: float, length: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodes x, complements length - x, and weights on [0, length].

    Complements are computed directly so sin(pi/2 - x) keeps full relative
    accuracy near the upper endpoint.
    """
    k = np.arange(-int(_KMAX / h), int(_KMAX / h) + 1) * h
    q = np.pi * np.sinh(k)
    x = length / (1.0 + np.exp(-q))
    xc = length / (1.0 + np.exp(q))
    w = length * np.pi * np.cosh(k) / (4.0 * np.cosh(q / 2) ** 2) * h
    keep = w > 1e-300
    out = x[keep], xc[keep], w[keep]
    for a in out:
        a.setflags(write=False)
    return out


@lru_cache(maxsize=64)
def gauss_panels(n_panels: int, length: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes, complements and weights on [0, length]."""
    g, gw = leggauss(_GL_ORDER)
    edges = np.linspace(0.0, length, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (mid[:, None] + half[:, None] * g).ravel()
    xc = (length - mid[:, None] - half[:, None] * g).ravel()
    w = (half[:, None] * gw).ravel()
    out = x, xc, w
    for a in out:
        a.setflags(write=False)
    return out


def _angular_rule(rule: tuple, length: float):
    kind, param = rule
    if kind == "de":
        return tanh_sinh(param, length)
    return gauss_panels(int(param), length)


@lru_cache(maxsize=64)
def octant_directions(rule: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors (3, m) and solid-angle weights covering the positive octant.

    ``rule`` is ``("de", h)`` for tanh-sinh with step h or ``("gl", k)`` for
    k Gauss-Legendre panels along the polar angle. The azimuth runs over
    [0, pi/4] only; kernels must be symmetric under swapping the first two
    coordinates. Weights include the resulting factor 2.
    """
    th, thc, wth = _angular_rule(rule, math.pi / 2)
    az_rule = rule if rule[0] == "de" else ("gl", max(1, rule[1] // 2))
    ph, _, wph = _angular_rule(az_rule, math.pi / 4)
    sin_th, cos_th = np.sin(th), np.sin(thc)
    u1 = np.outer(sin_th, np.cos(ph)).ravel()
    u2 = np.outer(sin_th, np.sin(ph)).ravel()
    u3 = np.repeat(cos_th, ph.size)
    w = 2.0 * np.outer(wth * sin_th, wph).ravel()
    keep = w > 1e-280
    u = np.stack([u1[keep], u2[keep], u3[keep]])
    w = w[keep]
    u.setflags(write=False)
    w.setflags(write=False)
    return u, w


@lru_cache(maxsize=64)
def quadrant_directions(rule: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Unit vectors (2, m) and weights on the quarter circle, folded about the diagonal."""
    th, _, w = _angular_rule(rule, math.pi / 4)
    u = np.stack([np.cos(th), np.sin(th)])
    u.setflags(write=False)
    return u, 2.0 * w


def _panel_count(need: float) -> int:
    # smallest 2^k or 3 * 2^(k-1) >= need; few distinct rules keeps the caches small
    k = math.floor(math.log2(need))
    for c in (1 << k, 3 << (k - 1), 1 << (k + 1)):
        if c >= need:
            return int(c)
    return 1 << (k + 1)


@dataclass(frozen=True)
class RadialBand:
    """A run of radial nodes sharing one angular rule."""

    r: np.ndarray
    w: np.ndarray
    rule: tuple
    y_hi: float


def radial_bands(
    y_lo: float,
    y_hi: float,
    width: float,
    omega: float = 0.0,
    phase: float = 8.0,
    h: float = 0.16,
) -> list[RadialBand]:
    """Log-radial Gauss-Legendre panels grouped by angular rule.

    Parameters
    ----------
    width : float
        Maximum panel width in log radius.
    omega : float
        Bound on the spatial frequency of the kernel; zero when it does not
        oscillate.
    phase : float
        Maximum phase change across one radial or angular panel.
    h : float
        Tanh-sinh step used where the angular oscillation is mild. Beyond
        that radius the angular rule switches to Gauss-Legendre panels whose
        count (a power of two) keeps the phase per panel below ``phase``.
    """
    g, gw = leggauss(_GL_ORDER)
    edges = [y_lo]
    y = y_lo
    while y < y_hi - 1e-12:
        step = width
        if omega > 0:
            step = min(step, phase / (omega * math.exp(y)))
        y = min(y + step, y_hi)
        edges.append(y)
    e = np.array(edges)
    rules = []
    de_limit = 1.0 / (h * (math.pi / 2) * (math.pi / 4))
    for rt in np.exp(e[1:]):
        if omega * rt <= de_limit:
            rules.append(("de", h))
        else:
            need = max(4.0, omega * rt * (math.pi / 2) / phase)
            rules.append(("gl", _panel_count(need)))
    mid = 0.5 * (e[:-1] + e[1:])
    half = 0.5 * (e[1:] - e[:-1])
    bands = []
    start = 0
    for i in range(1, mid.size + 1):
        if i == mid.size or rules[i] != rules[start]:
            ys = (mid[start:i, None] + half[start:i, None] * g).ravel()
            yw = (half[start:i, None] * gw).ravel()
            r = np.exp(ys)
            bands.append(RadialBand(r, yw * r, rules[start], float(e[i])))
            start = i
    return bands


def integrate_polar(
    kernel: Callable[[np.ndarray, np.ndarray], np.ndarray],
    bands: list[RadialBand],
    dim: int,
    work: int = 1 << 21,
) -> tuple[float, np.ndarray]:
    """Integrate ``kernel(r, u)`` over the positive octant (dim 3) or quadrant (dim 2).

    ``kernel`` receives radii (nr,) and directions (dim, m) and returns an
    (m, nr) array. Returns the total and the per-band contributions; the
    accumulation order is fixed by band and chunk index.
    """
    directions = octant_directions if dim == 3 else quadrant_directions
    per_band = np.zeros(len(bands))
    for b, band in enumerate(bands):
        u, wu = directions(band.rule)
        radial_w = band.w * band.r ** (dim - 1)
        step = max(1, work // max(1, band.r.size))
        acc = 0.0
        for lo in range(0, wu.size, step):
            vals = kernel(band.r, u[:, lo : lo + step])
            acc += float(wu[lo : lo + step] @ (vals @ radial_w))
        per_band[b] = acc
    return float(per_band.sum()), per_band
