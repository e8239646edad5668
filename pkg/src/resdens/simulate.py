"""Data-generating processes and reproducible sampling.

Streams are counter-based (Philox) and keyed by (base seed, replication
index, role), where role 0 draws covariates and role 1 draws errors.
Conditional experiments that freeze the design and redraw only the
errors therefore reuse the covariate stream untouched while walking the
replication index of the error stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .data import Dataset, TrimRegion, trim_region
from .errors import ConfigError

ROLE_COVARIATES = 0
ROLE_ERRORS = 1


def stream(seed: int, *path: int) -> np.random.Generator:
    """Philox generator keyed by the seed and an integer path."""
    seq = np.random.SeedSequence((int(seed),) + tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(seq))


def covariate_stream(seed: int, replication: int) -> np.random.Generator:
    return stream(seed, replication, ROLE_COVARIATES)


def error_stream(seed: int, replication: int) -> np.random.Generator:
    return stream(seed, replication, ROLE_ERRORS)


@dataclass(frozen=True)
class RegressionFunction:
    """Named regression surface m(x), applied coordinatewise-summed."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    params: tuple = ()

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return self.fn(X)


def regression_function(name: str, **params) -> RegressionFunction:
    """Registry of C^2 regression surfaces.

    constant: m(x) = level (default 1).
    affine: m(x) = intercept + slope * sum_k x_k.
    quadratic: m(x) = sum_k x_k^2.
    sinusoid: m(x) = amplitude * sum_k sin(frequency * x_k); the default
      amplitude 10 and frequency 3 give the surface enough curvature for
      smoothing bias to be measurable at simulation-scale sample sizes.
    """
    if name == "constant":
        level = float(params.pop("level", 1.0))
        fn = lambda X: np.full(X.shape[0], level)
        tag = (level,)
    elif name == "affine":
        intercept = float(params.pop("intercept", 1.0))
        slope = float(params.pop("slope", 1.0))
        fn = lambda X: intercept + slope * X.sum(axis=1)
        tag = (intercept, slope)
    elif name == "quadratic":
        fn = lambda X: (X**2).sum(axis=1)
        tag = ()
    elif name == "sinusoid":
        amplitude = float(params.pop("amplitude", 10.0))
        frequency = float(params.pop("frequency", 3.0))
        fn = lambda X: amplitude * np.sin(frequency * X).sum(axis=1)
        tag = (amplitude, frequency)
    else:
        raise ConfigError(f"unknown regression function {name!r}")
    if params:
        raise ConfigError(f"unused parameters for {name!r}: {sorted(params)}")
    return RegressionFunction(name, fn, tag)


@dataclass(frozen=True)
class CovariateDensity:
    """Covariate law on an axis-aligned support box, iid across axes."""

    name: str
    lo: float
    hi: float
    params: tuple = ()
    _pdf1: Callable[[np.ndarray], np.ndarray] = field(repr=False, default=None)
    _sample1: Callable[[np.random.Generator, int], np.ndarray] = field(
        repr=False, default=None
    )

    def support_box(self, d: int) -> tuple[np.ndarray, np.ndarray]:
        return np.full(d, self.lo), np.full(d, self.hi)

    def pdf(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        return np.prod(self._pdf1(X), axis=1)

    def sample(self, rng: np.random.Generator, n: int, d: int) -> np.ndarray:
        flat = self._sample1(rng, n * d)
        return flat.reshape(n, d)


def covariate_density(name: str, **params) -> CovariateDensity:
    """Registry of covariate laws.

    uniform: flat on [lo, hi].
    truncated-normal: normal(center, sd) conditioned on [lo, hi]; its
      curvature makes design-density bias visible, which the flat
      uniform cannot exhibit.
    """
    lo = float(params.pop("lo", 0.0))
    hi = float(params.pop("hi", 1.0))
    if not lo < hi:
        raise ConfigError("covariate support needs lo < hi")
    if name == "uniform":
        height = 1.0 / (hi - lo)

        def pdf1(X):
            return np.where((X >= lo) & (X <= hi), height, 0.0)

        def sample1(rng, m):
            return rng.uniform(lo, hi, m)

        tag = ()
    elif name == "truncated-normal":
        center = float(params.pop("center", (lo + hi) / 2.0))
        sd = float(params.pop("sd", (hi - lo) / 3.0))
        if sd <= 0:
            raise ConfigError("truncated-normal needs sd > 0")
        a = (lo - center) / sd
        b = (hi - center) / sd
        z = special.ndtr(b) - special.ndtr(a)

        def pdf1(X):
            u = (X - center) / sd
            body = np.exp(-0.5 * u * u) / (sd * np.sqrt(2.0 * np.pi) * z)
            return np.where((X >= lo) & (X <= hi), body, 0.0)

        def sample1(rng, m):
            # Inverse-CDF keeps the draw deterministic per stream.
            u = rng.uniform(0.0, 1.0, m)
            return center + sd * special.ndtri(special.ndtr(a) + u * z)

        tag = (center, sd)
    else:
        raise ConfigError(f"unknown covariate density {name!r}")
    if params:
        raise ConfigError(f"unused parameters for {name!r}: {sorted(params)}")
    return CovariateDensity(name, lo, hi, tag, pdf1, sample1)


@dataclass(frozen=True)
class ErrorDensity:
    """Centered error law with a known density and finite sixth moment."""

    name: str
    variance: float
    params: tuple = ()
    _pdf: Callable[[np.ndarray], np.ndarray] = field(repr=False, default=None)
    _sample: Callable[[np.random.Generator, int], np.ndarray] = field(
        repr=False, default=None
    )

    def pdf(self, e) -> np.ndarray:
        return self._pdf(np.asarray(e, dtype=float))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self._sample(rng, n)


def error_density(name: str, **params) -> ErrorDensity:
    """Registry of centered error laws.

    normal: N(0, sigma^2), sigma default 0.5.
    laplace: double exponential with the given scale (variance 2*scale^2).
    scaled-beta: w * (2*Beta(shape, shape) - 1), compactly supported on
      [-w, w] with variance w^2 / (2*shape + 1).
    """
    if name == "normal":
        sigma = float(params.pop("sigma", 0.5))
        if sigma <= 0:
            raise ConfigError("normal error needs sigma > 0")

        def pdf(e):
            return np.exp(-0.5 * (e / sigma) ** 2) / (sigma * np.sqrt(2.0 * np.pi))

        def sample(rng, n):
            return rng.normal(0.0, sigma, n)

        return ErrorDensity(name, sigma**2, (sigma,), pdf, sample)
    if name == "laplace":
        scale = float(params.pop("scale", 0.35))
        if scale <= 0:
            raise ConfigError("laplace error needs scale > 0")

        def pdf(e):
            return np.exp(-np.abs(e) / scale) / (2.0 * scale)

        def sample(rng, n):
            return rng.laplace(0.0, scale, n)

        return ErrorDensity(name, 2.0 * scale**2, (scale,), pdf, sample)
    if name == "scaled-beta":
        width = float(params.pop("width", 1.0))
        shape = float(params.pop("shape", 2.0))
        if width <= 0 or shape <= 0:
            raise ConfigError("scaled-beta needs width > 0 and shape > 0")
        from scipy.stats import beta as beta_dist

        def pdf(e):
            return beta_dist.pdf((e / width + 1.0) / 2.0, shape, shape) / (2.0 * width)

        def sample(rng, n):
            return width * (2.0 * rng.beta(shape, shape, n) - 1.0)

        return ErrorDensity(
            name, width**2 / (2.0 * shape + 1.0), (width, shape), pdf, sample
        )
    raise ConfigError(f"unknown error density {name!r}")


@dataclass(frozen=True)
class DGPSpec:
    """Complete simulation design: dimension, surfaces, laws, trimming."""

    d: int
    m: RegressionFunction
    g: CovariateDensity
    f: ErrorDensity
    trim: TrimRegion

    def __post_init__(self):
        if self.d < 1:
            raise ConfigError("dimension must be >= 1")
        if self.trim.dim != self.d:
            raise ConfigError("trim region dimension must match d")
        lo, hi = self.g.support_box(self.d)
        self.trim.require_inside(lo, hi)


def default_dgp(**overrides) -> DGPSpec:
    """Baseline design: d=1, uniform X on [0,1], m(x)=x^2, normal errors
    with sigma 0.5, trimming box [0.1, 0.9]."""
    d = int(overrides.pop("d", 1))
    m = overrides.pop("m", None) or regression_function("quadratic")
    g = overrides.pop("g", None) or covariate_density("uniform")
    f = overrides.pop("f", None) or error_density("normal")
    trim = overrides.pop("trim", None) or trim_region(0.1, 0.9, dim=d)
    if overrides:
        raise ConfigError(f"unknown DGP overrides: {sorted(overrides)}")
    return DGPSpec(d=d, m=m, g=g, f=f, trim=trim)


def generate_sample(dgp: DGPSpec, n: int, seed: int, replication: int = 0) -> Dataset:
    """Draw a Dataset from the DGP; deterministic in all arguments.

    Y is stored as exactly true_m + true_eps so the additivity invariant
    holds bitwise.
    """
    if n < 2:
        raise ConfigError("need n >= 2")
    X = dgp.g.sample(covariate_stream(seed, replication), n, dgp.d)
    eps = dgp.f.sample(error_stream(seed, replication), n)
    m = dgp.m(X)
    return Dataset(X=X, Y=m + eps, true_m=m, true_eps=eps)


_FLAT_KEYS = {
    "d", "m", "m_level", "m_intercept", "m_slope", "m_amplitude", "m_frequency",
    "g", "g_lo", "g_hi", "g_center", "g_sd",
    "f", "f_sigma", "f_scale", "f_width", "f_shape",
    "trim_lo", "trim_hi",
}


def dgp_from_flat(cfg: dict) -> DGPSpec:
    """Build a DGPSpec from flat config keys (missing keys -> defaults)."""
    d = int(cfg.get("d", 1))
    m_name = cfg.get("m", "quadratic")
    m_params = {}
    for key, target in (
        ("m_level", "level"), ("m_intercept", "intercept"), ("m_slope", "slope"),
        ("m_amplitude", "amplitude"), ("m_frequency", "frequency"),
    ):
        if key in cfg:
            m_params[target] = cfg[key]
    g_name = cfg.get("g", "uniform")
    g_params = {}
    for key, target in (
        ("g_lo", "lo"), ("g_hi", "hi"), ("g_center", "center"), ("g_sd", "sd"),
    ):
        if key in cfg:
            g_params[target] = cfg[key]
    f_name = cfg.get("f", "normal")
    f_params = {}
    for key, target in (
        ("f_sigma", "sigma"), ("f_scale", "scale"),
        ("f_width", "width"), ("f_shape", "shape"),
    ):
        if key in cfg:
            f_params[target] = cfg[key]
    trim = trim_region(cfg.get("trim_lo", 0.1), cfg.get("trim_hi", 0.9), dim=d)
    try:
        return DGPSpec(
            d=d,
            m=regression_function(m_name, **m_params),
            g=covariate_density(g_name, **g_params),
            f=error_density(f_name, **f_params),
            trim=trim,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad DGP configuration: {exc}") from exc
