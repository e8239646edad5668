"""Deterministic quadrature used for every kernel certification.

Two rules are provided: composite Gauss-Legendre (the default, vectorized,
spectrally accurate on the piecewise-polynomial integrands that dominate
this package) and adaptive Simpson (kept as an independent cross-check).
Randomized integration is deliberately absent: certification values must
be reproducible bit for bit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, QuadratureError

GAUSS_LEGENDRE = "gauss-legendre"
ADAPTIVE_SIMPSON = "adaptive-simpson"

_MAX_DOUBLINGS = 10


@dataclass(frozen=True)
class QuadratureSpec:
    """Rule selection plus tolerances for certification integrals.

    ``panels`` is the starting panel count for the composite rule; the
    engine doubles it until successive values agree to tolerance.
    """

    rule: str = GAUSS_LEGENDRE
    panels: int = 8
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9

    def __post_init__(self):
        if self.rule not in (GAUSS_LEGENDRE, ADAPTIVE_SIMPSON):
            raise ConfigError(f"unknown quadrature rule: {self.rule!r}")
        if self.panels < 1:
            raise ConfigError("panels must be >= 1")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ConfigError("tolerances must be positive")


@lru_cache(maxsize=32)
def _gl_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


def gauss_legendre(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    panels: int,
    nodes: int = 12,
) -> float:
    """Composite Gauss-Legendre on [a, b]; f must accept an ndarray."""
    x, w = _gl_nodes(nodes)
    edges = np.linspace(a, b, panels + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    vals = np.asarray(f(pts), dtype=float).reshape(panels, nodes)
    return float(np.sum(vals @ w * half))


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    abs_tol: float = 1e-9,
    max_depth: int = 40,
) -> float:
    """Classic adaptive Simpson with Richardson acceptance test."""

    def simpson(lo, flo, hi, fhi, fmid):
        return (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def recurse(lo, flo, hi, fhi, fmid, whole, tol, depth):
        mid = (lo + hi) / 2.0
        lmid = (lo + mid) / 2.0
        rmid = (mid + hi) / 2.0
        flm = float(f(lmid))
        frm = float(f(rmid))
        left = simpson(lo, flo, mid, fmid, flm)
        right = simpson(mid, fmid, hi, fhi, frm)
        delta = left + right - whole
        if depth <= 0:
            raise QuadratureError("adaptive Simpson depth exhausted", abs(delta))
        if abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0
        return recurse(lo, flo, mid, fmid, flm, left, tol / 2.0, depth - 1) + recurse(
            mid, fmid, hi, fhi, frm, right, tol / 2.0, depth - 1
        )

    fa, fb = float(f(a)), float(f(b))
    fm = float(f((a + b) / 2.0))
    whole = simpson(a, fa, b, fb, fm)
    return recurse(a, fa, b, fb, fm, whole, abs_tol, max_depth)


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    spec: QuadratureSpec | None = None,
) -> float:
    """Integrate f over [a, b] to the spec's tolerance or raise.

    Gauss-Legendre runs with doubling panel counts until two successive
    values agree within max(abs_tol, rel_tol * |value|).
    """
    spec = spec or QuadratureSpec()
    if spec.rule == ADAPTIVE_SIMPSON:
        return adaptive_simpson(lambda x: float(f(np.asarray([x]))[0]), a, b, spec.abs_tol)
    panels = spec.panels
    prev = gauss_legendre(f, a, b, panels)
    deviation = np.inf
    for _ in range(_MAX_DOUBLINGS):
        panels *= 2
        cur = gauss_legendre(f, a, b, panels)
        deviation = abs(cur - prev)
        if deviation <= max(spec.abs_tol, spec.rel_tol * abs(cur)):
            return cur
        prev = cur
    raise QuadratureError("Gauss-Legendre did not converge", deviation)


def integrate_box(
    f: Callable[[np.ndarray], np.ndarray],
    lo: Sequence[float],
    hi: Sequence[float],
    spec: QuadratureSpec | None = None,
    nodes: int = 12,
) -> float:
    """Tensor-product Gauss-Legendre over an axis-aligned box.

    f maps an (m, d) array of points to m values.  The composite grid uses
    ``spec.panels`` panels per axis, doubled once for a convergence check.
    """
    spec = spec or QuadratureSpec()
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != hi.shape or lo.ndim != 1:
        raise ConfigError("box bounds must be 1-d arrays of equal length")
    if not np.all(lo < hi):
        raise ConfigError("box bounds need lo < hi on every axis")

    def tensor(panels: int) -> float:
        x, w = _gl_nodes(nodes)
        axes_pts, axes_w = [], []
        for k in range(lo.size):
            edges = np.linspace(lo[k], hi[k], panels + 1)
            half = np.diff(edges) / 2.0
            mid = (edges[:-1] + edges[1:]) / 2.0
            axes_pts.append((mid[:, None] + half[:, None] * x[None, :]).ravel())
            axes_w.append((half[:, None] * w[None, :]).ravel())
        grids = np.meshgrid(*axes_pts, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        wgrids = np.meshgrid(*axes_w, indexing="ij")
        wts = np.ones(pts.shape[0])
        for g in wgrids:
            wts = wts * g.ravel()
        vals = np.asarray(f(pts), dtype=float)
        return float(np.dot(vals, wts))

    coarse = tensor(spec.panels)
    fine = tensor(spec.panels * 2)
    deviation = abs(fine - coarse)
    if deviation <= max(spec.abs_tol, spec.rel_tol * abs(fine)):
        return fine
    refined = tensor(spec.panels * 4)
    deviation = abs(refined - fine)
    if deviation <= max(spec.abs_tol, spec.rel_tol * abs(refined)):
        return refined
    raise QuadratureError("tensor Gauss-Legendre did not converge", deviation)


def unit_interval_rule(panels: int, nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed composite Gauss-Legendre rule on [0, 1] (nodes, weights)."""
    x, w = _gl_nodes(nodes)
    edges = np.linspace(0.0, 1.0, panels + 1)
    half = np.diff(edges) / 2.0
    mid = (edges[:-1] + edges[1:]) / 2.0
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    return pts, wts


def product_offsets(d: int) -> list[tuple[int, ...]]:
    """All {-1,0,1}^d neighbor offsets, in deterministic order."""
    return list(itertools.product((-1, 0, 1), repeat=d))
