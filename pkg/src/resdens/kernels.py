"""Kernel functions and their certification.

The two-stage estimator needs two kernels with different jobs.  The
residual-stage kernel ``K1`` smooths estimated residuals and enters the
error analysis through its first three derivatives, so it must be three
times continuously differentiable on all of R with compact support, unit
mass, vanishing integrals of its first three derivatives, and vanishing
first moments of the second and third derivatives.  The regression-stage
kernel ``K0`` is a symmetric product kernel supported inside the cube
[-1/2, 1/2]^d with unit mass.

The default univariate kernel is the quadweight

    Q(u) = (315/256) (1 - u^2)^4   on [-1, 1],

the lowest-degree polynomial bump that is C^3 across its support boundary
(all derivatives up to order three vanish at u = +-1).  The triweight
(1 - u^2)^3 is shipped alongside it as a deliberate counterexample: its
third derivative jumps by 48 * 35/32 at the boundary, and the validator
must catch that.

Every certified property is checked by deterministic quadrature through
``validate_kernel_conditions``; nothing in this module trusts closed-form
claims that the test suite does not independently confirm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, InvalidBandwidth, InvalidOrder
from .quadrature import QuadratureSpec, integrate, integrate_box

QUADWEIGHT = "quadweight"
TRIWEIGHT = "triweight"

_QW_C = 315.0 / 256.0
_TW_C = 35.0 / 32.0


def _quadweight_piece(order: int, u: np.ndarray) -> np.ndarray:
    # Closed forms of Q and its first three derivatives inside [-1, 1].
    s = 1.0 - u * u
    if order == 0:
        return _QW_C * s**4
    if order == 1:
        return -8.0 * _QW_C * u * s**3
    if order == 2:
        return -8.0 * _QW_C * s * s * (1.0 - 7.0 * u * u)
    return 48.0 * _QW_C * u * s * (3.0 - 7.0 * u * u)


def _triweight_piece(order: int, u: np.ndarray) -> np.ndarray:
    s = 1.0 - u * u
    if order == 0:
        return _TW_C * s**3
    if order == 1:
        return -6.0 * _TW_C * u * s * s
    if order == 2:
        return -6.0 * _TW_C * s * (1.0 - 5.0 * u * u)
    return 24.0 * _TW_C * u * (3.0 - 5.0 * u * u)


@dataclass(frozen=True)
class UnivariateKernel:
    """Compactly supported symmetric kernel with derivatives up to order 3.

    ``eval`` returns exact polynomial values inside the closed support and
    exactly 0 outside; no floating fuzz widens the support.
    """

    name: str
    support_radius: float
    _piece: Callable[[int, np.ndarray], np.ndarray] = field(repr=False)

    def eval(self, order: int, v):
        """Evaluate the order-th derivative (0 <= order <= 3) at v.

        v may be a scalar or an ndarray; the result matches its shape.
        """
        if order not in (0, 1, 2, 3):
            raise InvalidOrder(f"derivative order must be 0..3, got {order}")
        arr = np.asarray(v, dtype=float)
        inside = np.abs(arr) <= self.support_radius
        out = np.zeros_like(arr)
        if np.any(inside):
            out[inside] = self._piece(order, arr[inside])
        if np.isscalar(v) or arr.ndim == 0:
            return float(out)
        return out

    def __call__(self, v):
        return self.eval(0, v)


_UNIVARIATE = {
    QUADWEIGHT: UnivariateKernel(QUADWEIGHT, 1.0, _quadweight_piece),
    TRIWEIGHT: UnivariateKernel(TRIWEIGHT, 1.0, _triweight_piece),
}


def univariate_kernel(name: str = QUADWEIGHT) -> UnivariateKernel:
    try:
        return _UNIVARIATE[name]
    except KeyError:
        raise KeyError(
            f"unknown kernel {name!r}; choose from {sorted(_UNIVARIATE)}"
        ) from None


@dataclass(frozen=True)
class ProductKernel:
    """d-fold product kernel supported inside [-1/2, 1/2]^d.

    Each axis applies the base kernel rescaled so that the product keeps
    unit mass while its support shrinks into the half-cube: with base
    support radius R the axis factor is 2R * base(2R * u).
    """

    dim: int
    base: UnivariateKernel

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionError("product kernel needs dim >= 1")

    @property
    def support_radius(self) -> float:
        return 0.5

    def _axis_factor(self, u: np.ndarray) -> np.ndarray:
        scale = 2.0 * self.base.support_radius
        return scale * self.base.eval(0, scale * u)

    def eval(self, z) -> float:
        """Kernel value at a single point z of length dim."""
        arr = np.asarray(z, dtype=float).reshape(-1)
        if arr.size != self.dim:
            raise DimensionError(
                f"point has length {arr.size}, kernel dim is {self.dim}"
            )
        return float(np.prod(self._axis_factor(arr)))

    def eval_many(self, Z: np.ndarray) -> np.ndarray:
        """Kernel values for an (m, dim) array of points."""
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] != self.dim:
            raise DimensionError(f"expected (m, {self.dim}) array, got {Z.shape}")
        return np.prod(self._axis_factor(Z), axis=1)

    def __call__(self, z):
        return self.eval(z)


def product_kernel(name: str = QUADWEIGHT, dim: int = 1) -> ProductKernel:
    return ProductKernel(dim, univariate_kernel(name))


@dataclass(frozen=True)
class MomentCondition:
    """One certified condition: quadrature value vs target."""

    condition: str
    target: float
    value: float
    tolerance: float

    @property
    def deviation(self) -> float:
        return abs(self.value - self.target)

    @property
    def passed(self) -> bool:
        return self.deviation <= self.tolerance


@dataclass(frozen=True)
class MomentReport:
    """Outcome of the full kernel certification."""

    residual_kernel: str
    regression_kernel: str
    dim: int
    conditions: tuple[MomentCondition, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions)

    def failing(self) -> list[MomentCondition]:
        return [c for c in self.conditions if not c.passed]

    def render(self, digits: int = 6) -> str:
        lines = [
            f"residual kernel: {self.residual_kernel}   "
            f"regression kernel: {self.regression_kernel} (dim {self.dim})"
        ]
        for c in self.conditions:
            mark = "ok " if c.passed else "FAIL"
            lines.append(
                f"  [{mark}] {c.condition:<34} value {c.value:+.{digits}g}"
                f"  target {c.target:+g}  tol {c.tolerance:g}"
            )
        lines.append("overall: " + ("PASS" if self.passed else "FAIL"))
        return "\n".join(lines)


def continuity_scan(
    kernel: UnivariateKernel,
    order: int,
    step: float = 1e-3,
    slope_budget: float = 2000.0,
) -> float:
    """Largest jump of eval(order, .) across a dense grid.

    A continuous function with derivative bounded by ``slope_budget``
    moves at most slope_budget * step between neighboring grid points.
    Returns the maximal excess jump (0.0 when continuous within budget);
    the scan straddles the support boundary where violations live.
    """
    r = kernel.support_radius
    lo, hi = -r - 8 * step, r + 8 * step
    m = int(np.ceil((hi - lo) / step)) + 1
    # Offset by step/3 so the support boundary never lands on a node.
    grid = lo + step * np.arange(m) + step / 3.0
    vals = kernel.eval(order, grid)
    jumps = np.abs(np.diff(vals))
    excess = jumps - slope_budget * step
    return float(max(0.0, excess.max()))


def power_weight(e, p: float):
    """The weight e^p extended to the real line.

    Integer p uses the signed power.  Non-integer p in [0, 2] falls back
    to |e|^p (the even extension); only integer p carries meaning for
    moments of a sign-changing error, and nothing downstream exercises
    the extension.
    """
    if not 0.0 <= p <= 2.0:
        raise ValueError(f"power p must lie in [0, 2], got {p}")
    arr = np.asarray(e, dtype=float)
    if float(p).is_integer():
        out = arr ** int(p)
    else:
        out = np.abs(arr) ** p
    return out


def kernel_derivative_moment(
    kernel: UnivariateKernel,
    order: int,
    squared: bool,
    p: float,
    density: Callable[[np.ndarray], np.ndarray],
    e: float,
    b1: float,
    spec: QuadratureSpec | None = None,
) -> float:
    """Integral of a kernel-derivative window against e^p * density.

    Computes  I = int K^(order)((t - e)/b1)^s  t^p  f(t) dt  with s = 2
    when ``squared`` else 1, by substituting t = e + b1 v so the window
    is resolved exactly:

        I = b1 * int_{-R}^{R} K^(order)(v)^s (e + b1 v)^p f(e + b1 v) dv.

    These are the quantities whose decay in b1 the rate lab certifies:
    the squared versions shrink like b1, the plain order-1 version like
    b1^2, and the plain order-2 and order-3 versions at least like b1^3.
    """
    if order not in (1, 2, 3):
        raise InvalidOrder(f"moment integrals use orders 1..3, got {order}")
    if not (np.isfinite(b1) and b1 > 0):
        raise InvalidBandwidth(f"b1 must be positive, got {b1}")
    spec = spec or QuadratureSpec(abs_tol=1e-12, rel_tol=1e-10)
    power = 2 if squared else 1
    r = kernel.support_radius

    def integrand(v: np.ndarray) -> np.ndarray:
        t = e + b1 * v
        return kernel.eval(order, v) ** power * power_weight(t, p) * density(t)

    return b1 * integrate(integrand, -r, r, spec)


def validate_kernel_conditions(
    residual_kernel: UnivariateKernel,
    regression_kernel: ProductKernel,
    spec: QuadratureSpec | None = None,
) -> MomentReport:
    """Certify both kernels' moment and smoothness conditions.

    Checks, all by quadrature at the spec tolerance:

      regression kernel: unit mass over the half-cube and a vanishing
      first moment per component (symmetry);

      residual kernel: unit mass; vanishing integrals of the first,
      second and third derivatives; vanishing first moments of the
      second and third derivatives; and continuity of derivative orders
      0..3 via a dense-grid jump scan.
    """
    spec = spec or QuadratureSpec()
    conds: list[MomentCondition] = []
    d = regression_kernel.dim
    box_lo = [-0.5] * d
    box_hi = [0.5] * d

    mass = integrate_box(regression_kernel.eval_many, box_lo, box_hi, spec)
    conds.append(MomentCondition("regression-kernel mass", 1.0, mass, spec.abs_tol))
    for k in range(d):

        def first_moment(Z: np.ndarray, axis: int = k) -> np.ndarray:
            return Z[:, axis] * regression_kernel.eval_many(Z)

        val = integrate_box(first_moment, box_lo, box_hi, spec)
        conds.append(
            MomentCondition(f"regression-kernel first moment [{k}]", 0.0, val, spec.abs_tol)
        )

    r = residual_kernel.support_radius
    mass1 = integrate(lambda v: residual_kernel.eval(0, v), -r, r, spec)
    conds.append(MomentCondition("residual-kernel mass", 1.0, mass1, spec.abs_tol))
    for order in (1, 2, 3):
        val = integrate(lambda v, o=order: residual_kernel.eval(o, v), -r, r, spec)
        conds.append(
            MomentCondition(f"residual-kernel derivative-{order} integral", 0.0, val, spec.abs_tol)
        )
    for order in (2, 3):
        val = integrate(lambda v, o=order: v * residual_kernel.eval(o, v), -r, r, spec)
        conds.append(
            MomentCondition(
                f"residual-kernel derivative-{order} first moment", 0.0, val, spec.abs_tol
            )
        )
    for order in range(4):
        excess = continuity_scan(residual_kernel, order)
        conds.append(
            MomentCondition(f"residual-kernel continuity order {order}", 0.0, excess, 0.0)
        )

    return MomentReport(
        residual_kernel=residual_kernel.name,
        regression_kernel=regression_kernel.base.name,
        dim=d,
        conditions=tuple(conds),
    )
