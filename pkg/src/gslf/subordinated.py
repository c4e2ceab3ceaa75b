"""Gaussian-subordinated Levy fields ``L(x) = l(F(W(x)))``.

Coupling: one master seed and a sample index fix (a) the standard normals of
the GRF, shared as a prefix across KLE truncations, and (b) the Levy path on
the finest grid (or the exact Poisson jump times), which coarser grids read
at their own knots. Any approximation and its reference drawn from the same
``(seed, index)`` therefore see the same randomness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import rng as rngmod
from .grf import Grid2D, GrfModel, TruncatedKLE, interpolate
from .levy import LevyModel, sample_grid_path, sample_poisson_path


@dataclass(frozen=True)
class Transform:
    """``F(y) = offset + min(scale * |y|, cap)``; covers all supported kinds."""

    kind: str
    offset: float = 0.0
    scale: float = 1.0
    cap: float = math.inf

    def __post_init__(self):
        if self.offset < 0 or self.scale < 0 or self.cap < 0:
            raise ValueError("transform parameters must be non-negative")

    @classmethod
    def abs_plus(cls, c: float) -> Transform:
        return cls("abs_plus", c, 1.0)

    @classmethod
    def clamped_abs(cls, cap: float, offset: float = 0.0) -> Transform:
        return cls("clamped_abs", offset, 1.0, cap)

    @classmethod
    def const(cls, c: float) -> Transform:
        return cls("const", c, 0.0)

    @classmethod
    def abs_scaled_plus(cls, scale: float, c: float) -> Transform:
        return cls("abs_scaled_plus", c, scale)

    @classmethod
    def from_dict(cls, d: dict) -> Transform:
        kind = d["kind"]
        if kind == "abs_plus":
            return cls.abs_plus(d.get("c", 0.0))
        if kind == "clamped_abs":
            return cls.clamped_abs(d["cap"], d.get("offset", 0.0))
        if kind == "const":
            return cls.const(d["c"])
        if kind == "abs_scaled_plus":
            return cls.abs_scaled_plus(d["scale"], d.get("c", 0.0))
        raise ValueError(f"unknown transform {kind!r}")

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        return self.offset + np.minimum(self.scale * np.abs(y), self.cap)

    @property
    def lipschitz_constant(self) -> float:
        return self.scale

    @property
    def bound(self) -> float:
        """Global bound C_F (infinite for unclamped transforms)."""
        return self.offset + (self.cap if self.scale > 0 else 0.0)

    @property
    def is_constant(self) -> bool:
        return self.scale == 0 or self.cap == 0

    def kinks(self) -> list:
        """Points where F is not differentiable."""
        if self.is_constant:
            return []
        pts = [0.0]
        if math.isfinite(self.cap):
            pts += [-self.cap / self.scale, self.cap / self.scale]
        return pts

    def prob_below(self, t, mean: float, std: float):
        """``P(F(Y) < t)`` for ``Y ~ N(mean, std^2)``."""
        t = np.asarray(t, dtype=float)
        if self.is_constant:
            return (t > self.offset).astype(float)
        r = (t - self.offset) / self.scale
        inside = ndtr((r - mean) / std) - ndtr((-r - mean) / std)
        out = np.where(t <= self.offset, 0.0, inside)
        return np.where(t > self.bound, 1.0, out)

    def range_on(self, lo: float, hi: float) -> tuple:
        """Min and max of F over ``[lo, hi]``."""
        vals = self(np.array([lo, hi]))
        fmin = self.offset if lo <= 0 <= hi else float(vals.min())
        return fmin, float(vals.max())


@dataclass(frozen=True)
class GslfSpec:
    levy: LevyModel
    grf: GrfModel
    transform: Transform
    # required for unbounded transforms: W is validated against it at sample time
    horizon_bound: float = None

    @property
    def horizon(self) -> float:
        h = self.transform.bound
        if math.isfinite(h):
            if self.horizon_bound is not None and self.horizon_bound < h:
                raise ValueError("Levy horizon must cover the transform's range")
            return h
        if self.horizon_bound is None:
            raise ValueError("unbounded transform: set horizon_bound")
        return float(self.horizon_bound)


@dataclass(frozen=True)
class GslfApproxParams:
    """Levy grid step ``eps`` (None: exact Poisson path) and KLE truncation ``n_terms``."""

    eps: float = None
    n_terms: int = None

    def __post_init__(self):
        if self.eps is not None and self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.n_terms is not None and self.n_terms < 0:
            raise ValueError("n_terms must be non-negative")

    @classmethod
    def coupled(cls, eps: float, nu: float) -> GslfApproxParams:
        """``N = ceil(eps^(-2/(2 nu - 1)))`` balancing GRF and Levy errors."""
        return cls(eps, coupled_terms(eps, nu))


def coupled_terms(eps: float, nu: float) -> int:
    return int(math.ceil(eps ** (-2.0 / (2.0 * nu - 1.0)) - 1e-9))


@dataclass
class FieldSample:
    values: np.ndarray
    grid: Grid2D
    eps: float
    n_terms: int
    seed: int
    index: int = 0
    provenance: dict = field(default_factory=dict)


class _Draw:
    """Randomness for one sample index, shared by every fidelity drawn from it."""

    def __init__(self, spec: GslfSpec, seed: int, index: int, finest_eps, max_terms: int):
        self.spec = spec
        self._normals = None
        grf_rng = rngmod.stream(seed, rngmod.GRF, index)
        sampler = spec.grf.sampler
        if isinstance(sampler, TruncatedKLE):
            self._normals = grf_rng.standard_normal(max(max_terms, 0))
        else:
            self._normals = grf_rng.standard_normal(sampler.normals_needed())
        levy_rng = rngmod.stream(seed, rngmod.LEVY, index)
        # one ulp past C_F so that F(W) = C_F stays inside the half-open path domain
        horizon = float(np.nextafter(spec.horizon, np.inf))
        if finest_eps is None:
            self.poisson = sample_poisson_path(spec.levy, horizon, levy_rng)
            self.path = None
        else:
            self.poisson = None
            self.path = sample_grid_path(spec.levy, finest_eps, horizon, levy_rng)
        self._grid_field = None

    def grf(self, points, n_terms):
        sampler = self.spec.grf.sampler
        if isinstance(sampler, TruncatedKLE):
            n = sampler.n_terms if n_terms is None else n_terms
            return self.spec.grf.mean + TruncatedKLE(sampler.basis, n).evaluate(points, self._normals)
        if self._grid_field is None:
            self._grid_field = self.spec.grf.sample(None, normals=self._normals)
        return interpolate(self._grid_field, points)

    def levy(self, t, eps):
        if eps is None:
            if self.poisson is None:
                raise ValueError("exact paths exist only for Poisson drivers")
            return self.poisson(t)
        if self.poisson is not None:
            path = self.poisson.on_grid(eps)
        else:
            factor = eps / self.path.grid_step
            k = int(round(factor))
            if k < 1 or abs(factor - k) > 1e-9 * factor:
                raise ValueError(f"eps={eps} is not a multiple of the finest step {self.path.grid_step}")
            path = self.path if k == 1 else self.path.coarsen(k)
        return path(t)


def _check_range(spec, y, points):
    bad = y >= spec.horizon
    if np.any(bad) and not math.isfinite(spec.transform.bound):
        i = int(np.argmax(bad))
        raise ValueError(f"F(W) = {y[i]:.4g} >= horizon {spec.horizon} at point {tuple(points[i])}")


def sample_coupled(spec: GslfSpec, levels, grid: Grid2D, seed: int, index: int = 0):
    """Values of every fidelity in ``levels`` for one coupled draw.

    The finest Levy step among ``levels`` drives all of them, so the grid
    steps must be integer multiples of it (or all None for exact Poisson).
    """
    levels = list(levels)
    eps_values = [p.eps for p in levels]
    if any(e is None for e in eps_values):
        finest = None
    else:
        finest = min(eps_values)
    terms = [p.n_terms if p.n_terms is not None else getattr(spec.grf.sampler, "n_terms", 0) for p in levels]
    draw = _Draw(spec, seed, index, finest, max(terms))
    pts = grid.points
    out = []
    cache = {}
    for p, n in zip(levels, terms):
        if n not in cache:
            w = draw.grf(pts, n)
            f = spec.transform(w)
            _check_range(spec, f, pts)
            cache[n] = f
        out.append(draw.levy(cache[n], p.eps).reshape(grid.shape))
    return out


def sample_field(spec: GslfSpec, params: GslfApproxParams, grid: Grid2D, seed: int,
                 index: int = 0) -> FieldSample:
    (vals,) = sample_coupled(spec, [params], grid, seed, index)
    return FieldSample(vals, grid, params.eps, params.n_terms, seed, index)


def lp_error_sample(spec: GslfSpec, params: GslfApproxParams, reference: GslfApproxParams,
                    grid: Grid2D, seed: int, index: int = 0, p: float = 2.0, g=None) -> float:
    """Spatial L^p norm of ``g(L_approx) - g(L_ref)`` for one coupled draw."""
    if p < 1:
        raise ValueError("p must be at least 1")
    approx, ref = sample_coupled(spec, [params, reference], grid, seed, index)
    return spatial_lp(approx, ref, grid, p, g)


def spatial_lp(approx, ref, grid: Grid2D, p: float, g=None) -> float:
    if g is not None:
        approx, ref = g(approx), g(ref)
    diff = np.abs(np.asarray(approx) - np.asarray(ref)).ravel()
    return float(np.dot(grid.weights, diff**p) ** (1.0 / p))
