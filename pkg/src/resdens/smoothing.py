"""Leave-one-out kernel regression and residual extraction.

The first estimation stage fits m at each sample point by Nadaraya-Watson
regression that excludes the point's own response, then keeps the
residual Y_i - m_hat_i for points inside the trimming box.  The kernel
support is ||z||_inf <= b0/2, so a uniform grid with cell width b0/2
finds every interacting pair in O(n * neighbors); a brute-force O(n^2)
path is kept as an oracle and the two must agree exactly.

All scalar accumulations go through math.fsum (error-free transformation
summation), which is exactly rounded and therefore independent of the
enumeration order; this is what makes grid and brute-force paths agree
bit for bit and makes locality tests meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .data import Dataset, TrimRegion
from .errors import AllTrimmed, InvalidBandwidth
from .kernels import ProductKernel, product_kernel
from .quadrature import QuadratureSpec, integrate_box, product_offsets


def _check_bandwidth(b0: float) -> float:
    if not (np.isfinite(b0) and b0 > 0):
        raise InvalidBandwidth(f"bandwidth must be finite and positive, got {b0}")
    return float(b0)


class NeighborGrid:
    """Uniform-cell index over sample points.

    Cell width equals the kernel support radius (b0/2), so any pair with
    a nonzero kernel weight lives in the same or an adjacent cell along
    every axis.  Candidate lists are returned sorted ascending, which
    keeps every downstream enumeration deterministic.
    """

    def __init__(self, X: np.ndarray, cell: float):
        self.X = X
        self.cell = cell
        keys = np.floor(X / cell).astype(np.int64)
        buckets: dict[tuple, list[int]] = {}
        for idx, key in enumerate(map(tuple, keys)):
            buckets.setdefault(key, []).append(idx)
        self._keys = keys
        self._buckets = buckets
        self._offsets = product_offsets(X.shape[1])
        self._cell_candidates: dict[tuple, np.ndarray] = {}

    def candidates(self, i: int) -> np.ndarray:
        """Indices (sorted, including i itself) near point i."""
        key = tuple(self._keys[i])
        cached = self._cell_candidates.get(key)
        if cached is None:
            found: list[int] = []
            for off in self._offsets:
                nb = tuple(k + o for k, o in zip(key, off))
                got = self._buckets.get(nb)
                if got:
                    found.extend(got)
            cached = np.array(sorted(found), dtype=np.intp)
            self._cell_candidates[key] = cached
        return cached

    def occupied_cells(self):
        return self._buckets.items()


def pair_kernel_matrix(
    X: np.ndarray,
    b0: float,
    kernel: ProductKernel | None = None,
) -> sparse.csr_matrix:
    """Sparse symmetric matrix of K0((X_j - X_i)/b0), zero diagonal.

    Built via the neighbor grid; entries are exactly the kernel values
    the brute-force enumeration produces (tested).
    """
    b0 = _check_bandwidth(b0)
    n, d = X.shape
    kernel = kernel or product_kernel(dim=d)
    grid = NeighborGrid(X, b0 / 2.0)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for key, members in grid.occupied_cells():
        mem = np.asarray(members, dtype=np.intp)
        cand = grid.candidates(mem[0])
        Z = (X[cand][None, :, :] - X[mem][:, None, :]) / b0
        w = kernel.eval_many(Z.reshape(-1, d)).reshape(mem.size, cand.size)
        w[cand[None, :] == mem[:, None]] = 0.0
        r, c = np.nonzero(w)
        rows.append(mem[r])
        cols.append(cand[c])
        vals.append(w[r, c])
    if rows:
        mat = sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        )
    else:
        mat = sparse.csr_matrix((n, n))
    mat.sort_indices()
    return mat


def brute_pair_kernel_matrix(
    X: np.ndarray,
    b0: float,
    kernel: ProductKernel | None = None,
) -> sparse.csr_matrix:
    """O(n^2) oracle for pair_kernel_matrix with the identical contract."""
    b0 = _check_bandwidth(b0)
    n, d = X.shape
    kernel = kernel or product_kernel(dim=d)
    Z = (X[None, :, :] - X[:, None, :]) / b0
    w = kernel.eval_many(Z.reshape(-1, d)).reshape(n, n)
    np.fill_diagonal(w, 0.0)
    mat = sparse.csr_matrix(w)
    mat.sort_indices()
    return mat


def _loo_weights(
    data: Dataset, b0: float, i: int, kernel: ProductKernel, grid: NeighborGrid | None
) -> tuple[np.ndarray, np.ndarray]:
    """(sorted indices j != i, kernel weights) with zero weights dropped."""
    X = data.X
    cand = grid.candidates(i) if grid is not None else np.arange(data.n)
    cand = cand[cand != i]
    w = kernel.eval_many((X[cand] - X[i]) / b0)
    nz = w != 0.0
    return cand[nz], w[nz]


def pooled_density(data: Dataset, b0: float, x, kernel: ProductKernel | None = None) -> float:
    """Kernel density of the design at x using all n points."""
    b0 = _check_bandwidth(b0)
    kernel = kernel or product_kernel(dim=data.dim)
    pt = np.asarray(x, dtype=float).reshape(1, -1)
    w = kernel.eval_many((data.X - pt) / b0)
    return math.fsum(w[w != 0.0].tolist()) / (data.n * b0**data.dim)


def loo_density(
    data: Dataset, b0: float, i: int, kernel: ProductKernel | None = None
) -> float:
    """Leave-one-out design density at X_i (divisor n, not n-1)."""
    b0 = _check_bandwidth(b0)
    kernel = kernel or product_kernel(dim=data.dim)
    _, w = _loo_weights(data, b0, i, kernel, None)
    return math.fsum(w.tolist()) / (data.n * b0**data.dim)


def loo_regression(
    data: Dataset, b0: float, i: int, kernel: ProductKernel | None = None
) -> float | None:
    """Leave-one-out Nadaraya-Watson fit at X_i; None when undefined.

    Undefined means no other point carries kernel weight, so the local
    average has an empty denominator.  None is the only undefined signal;
    NaN never escapes.
    """
    b0 = _check_bandwidth(b0)
    kernel = kernel or product_kernel(dim=data.dim)
    cand, w = _loo_weights(data, b0, i, kernel, None)
    den = math.fsum(w.tolist())
    if den == 0.0:
        return None
    num = math.fsum((data.Y[cand] * w).tolist())
    return num / den


def smoothed_density(
    g_pdf,
    b0: float,
    x,
    kernel: ProductKernel | None = None,
    spec: QuadratureSpec | None = None,
) -> float:
    """Expected kernel density at x: int K0(z) g(x + b0 z) dz.

    ``g_pdf`` maps an (m, d) array of points to densities.  This is the
    deterministic quadrature twin of pooled_density; their gap is the
    stochastic part and their mean bias is what decays like b0^2.
    """
    b0 = _check_bandwidth(b0)
    pt = np.asarray(x, dtype=float).reshape(-1)
    d = pt.size
    kernel = kernel or product_kernel(dim=d)

    def integrand(Z: np.ndarray) -> np.ndarray:
        return kernel.eval_many(Z) * g_pdf(pt[None, :] + b0 * Z)

    return integrate_box(integrand, [-0.5] * d, [0.5] * d, spec)


@dataclass(frozen=True)
class ResidualFit:
    """Residuals and local masses from the leave-one-out stage.

    ``kept`` is the trimming indicator (inside the box AND the fit is
    defined); undefined fits are flagged in ``defined``, forced out of
    the kept set, and carry 0.0 placeholders instead of NaN.
    """

    m_hat: np.ndarray
    g_hat: np.ndarray
    residual: np.ndarray
    kept: np.ndarray
    defined: np.ndarray
    b0: float

    @property
    def n_kept(self) -> int:
        return int(np.count_nonzero(self.kept))


def fit_residuals(
    data: Dataset,
    b0: float,
    trim: TrimRegion,
    kernel: ProductKernel | None = None,
) -> ResidualFit:
    """Run the full leave-one-out stage over the sample.

    Raises AllTrimmed when nothing survives the trimming box; callers
    never see an estimator built from an empty kept set.
    """
    b0 = _check_bandwidth(b0)
    n, d = data.n, data.dim
    kernel = kernel or product_kernel(dim=d)
    grid = NeighborGrid(data.X, b0 / 2.0)
    m_hat = np.zeros(n)
    g_hat = np.zeros(n)
    residual = np.zeros(n)
    defined = np.zeros(n, dtype=bool)
    inside = trim.contains_many(data.X)
    scale = n * b0**d
    for i in range(n):
        cand, w = _loo_weights(data, b0, i, kernel, grid)
        den = math.fsum(w.tolist())
        g_hat[i] = den / scale
        if den == 0.0:
            continue
        num = math.fsum((data.Y[cand] * w).tolist())
        m_hat[i] = num / den
        residual[i] = data.Y[i] - m_hat[i]
        defined[i] = True
    kept = inside & defined
    if not kept.any():
        raise AllTrimmed("all observations trimmed; nothing to estimate from")
    return ResidualFit(
        m_hat=m_hat, g_hat=g_hat, residual=residual, kept=kept, defined=defined, b0=b0
    )


def dependency_set(
    data: Dataset, b0: float, i: int, kernel: ProductKernel | None = None
) -> np.ndarray:
    """Indices k != i whose kernel weight against X_i is nonzero.

    The leave-one-out fit at i depends on exactly these responses, so
    perturbing any Y_k outside the set must leave m_hat_i bit-identical.
    Two points at inf-distance >= 2*b0 have disjoint sets.
    """
    b0 = _check_bandwidth(b0)
    kernel = kernel or product_kernel(dim=data.dim)
    cand, _ = _loo_weights(data, b0, i, kernel, None)
    return cand
