"""Gaussian expectations of piecewise-smooth integrands.

``E h(Y)`` for ``Y ~ N(mean, std^2)`` uses Gauss-Hermite when ``h`` is smooth and
Gauss-Legendre panels split at the known kinks otherwise. Pair expectations
``E h(U, V)`` are computed in whitened coordinates with iterated 1D panels
whose breakpoints follow the kink lines of ``h``. Every rule is checked by
node doubling.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

_SQRT_2PI = math.sqrt(2.0 * math.pi)


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class QuadratureConfig:
    hermite_nodes: int = 200
    legendre_nodes: int = 24
    panel_width: float = 1.0  # in standard deviations
    truncation: float = 8.0  # standard deviations
    xi_max: float = 200.0
    fourier_nodes: int = 2**14
    damping: float = 0.0
    tol: float = 1e-8
    check: bool = True

    def __post_init__(self):
        if self.hermite_nodes < 16 or self.legendre_nodes < 16 or self.fourier_nodes < 16:
            raise ValueError("node counts must be at least 16")
        if self.xi_max <= 0 or self.truncation <= 0 or self.panel_width <= 0:
            raise ValueError("xi_max, truncation and panel_width must be positive")
        if self.damping < 0:
            raise ValueError("damping must be non-negative")

    def doubled(self) -> QuadratureConfig:
        return QuadratureConfig(2 * self.hermite_nodes, 2 * self.legendre_nodes, self.panel_width,
                                self.truncation, self.xi_max, self.fourier_nodes, self.damping,
                                self.tol, False)


@lru_cache(maxsize=32)
def _hermite(n):
    # scipy's rule stays finite for large n, where numpy's hermegauss overflows
    z, w = special.roots_hermitenorm(n)
    return z, w / _SQRT_2PI


@lru_cache(maxsize=32)
def _legendre(n):
    return np.polynomial.legendre.leggauss(n)


def _phi(z):
    return np.exp(-0.5 * z * z) / _SQRT_2PI


def _panel_rule(breaks, width, n):
    """Nodes and weights of Gauss-Legendre on each panel between sorted breaks."""
    t, w = _legendre(n)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        m = max(1, int(math.ceil((b - a) / width - 1e-12)))
        edges = np.linspace(a, b, m + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        nodes.append((mid[:, None] + half[:, None] * t).ravel())
        weights.append((half[:, None] * w).ravel())
    return np.concatenate(nodes), np.concatenate(weights)


def standard_rule(kinks_z, cfg: QuadratureConfig):
    """Nodes ``z`` and weights (including the Gaussian density) for E h(Z)."""
    T = cfg.truncation
    inner = sorted(k for k in kinks_z if -T < k < T)
    if not inner:
        return _hermite(cfg.hermite_nodes)
    z, w = _panel_rule([-T] + inner + [T], cfg.panel_width, cfg.legendre_nodes)
    return z, w * _phi(z)


def _expect_once(h, mean, std, kinks, cfg):
    kz = [(k - mean) / std for k in kinks] if std > 0 else []
    z, w = standard_rule(kz, cfg)
    vals = np.asarray(h(mean + std * z))
    return np.tensordot(w, vals, axes=(0, 0))


def gaussian_expectation(h, mean: float, std: float, kinks=(), cfg: QuadratureConfig = None):
    """``E h(mean + std * Z)``; ``h`` maps an (n,) array to shape (n, ...)."""
    cfg = cfg or QuadratureConfig()
    if std < 0:
        raise ValueError("std must be non-negative")
    if std == 0:
        return np.asarray(h(np.array([float(mean)])))[0]
    val = _expect_once(h, mean, std, kinks, cfg)
    if cfg.check:
        ref = _expect_once(h, mean, std, kinks, cfg.doubled())
        _check(val, ref, cfg.tol, "gaussian_expectation", mean=mean, std=std)
    return val


def _check(val, ref, tol, what, **diag):
    diff = float(np.max(np.abs(np.asarray(val) - np.asarray(ref)), initial=0.0))
    scale = max(1.0, float(np.max(np.abs(ref), initial=0.0)))
    if not diff <= tol * scale:
        info = ", ".join(f"{k}={v!r}" for k, v in diag.items())
        raise QuadratureError(f"{what}: node doubling changed the result by {diff:.3e} ({info})")


# --------------------------------------------------------------------------
# pairs


@dataclass(frozen=True)
class KinkLine:
    """Kink set ``cu * u + cv * v = c`` of the integrand in original coordinates."""

    cu: float
    cv: float
    c: float


def pair_expectation(h, mean, cov, lines, cfg: QuadratureConfig = None):
    """``E h(U, V)`` for a bivariate normal with positive-definite ``cov``.

    ``h`` maps two equally shaped arrays to values of the same shape. ``lines``
    lists the kink lines of ``h``; they become panel breakpoints after whitening.
    """
    cfg = cfg or QuadratureConfig()
    cov = np.asarray(cov, dtype=float)
    L = np.linalg.cholesky(cov)
    val = _pair_once(h, np.asarray(mean, dtype=float), L, lines, cfg)
    if cfg.check:
        ref = _pair_once(h, np.asarray(mean, dtype=float), L, lines, cfg.doubled())
        _check(val, ref, cfg.tol, "pair_expectation", mean=tuple(mean), cov=cov.tolist())
    return float(val)


def _whitened_lines(mean, L, lines):
    # u = m0 + L00 z1, v = m1 + L10 z1 + L11 z2
    vertical, sloped = [], []
    for ln in lines:
        a1 = ln.cu * L[0, 0] + ln.cv * L[1, 0]
        a2 = ln.cv * L[1, 1]
        rhs = ln.c - ln.cu * mean[0] - ln.cv * mean[1]
        if abs(a2) < 1e-14 * (abs(a1) + 1.0):
            if abs(a1) > 0:
                vertical.append(rhs / a1)
        else:
            sloped.append((rhs / a2, -a1 / a2))  # z2 = a + b z1
    return vertical, sloped


def _pair_once(h, mean, L, lines, cfg):
    T = cfg.truncation
    vertical, sloped = _whitened_lines(mean, L, lines)
    sloped = sloped + [(-T, 0.0), (T, 0.0)]
    brk = set(v for v in vertical if -T < v < T)
    for i in range(len(sloped)):
        a1, b1 = sloped[i]
        for a2, b2 in sloped[i + 1:]:
            if abs(b1 - b2) > 1e-12:
                z = (a2 - a1) / (b1 - b2)
                if -T < z < T:
                    brk.add(z)
    outer = [-T] + sorted(brk) + [T]
    z1, w1 = _panel_rule(outer, cfg.panel_width, cfg.legendre_nodes)
    w1 = w1 * _phi(z1)
    # inner breakpoints for every outer node, sorted and clipped to [-T, T]
    cuts = np.array([a + b * z1 for a, b in sloped]).T
    cuts = np.sort(np.clip(cuts, -T, T), axis=1)
    t, w = _legendre(cfg.legendre_nodes)
    total = 0.0
    for j in range(cuts.shape[1] - 1):
        lo, hi = cuts[:, j], cuts[:, j + 1]
        width = hi - lo
        if not np.any(width > 0):
            continue
        m = max(1, int(math.ceil(width.max() / cfg.panel_width - 1e-12)))
        for s in range(m):
            a = lo + width * s / m
            half = 0.5 * width / m
            z2 = (a + half)[:, None] + half[:, None] * t
            wz = half[:, None] * w * _phi(z2)
            u = mean[0] + L[0, 0] * z1[:, None] + 0.0 * z2
            v = mean[1] + L[1, 0] * z1[:, None] + L[1, 1] * z2
            inner = np.sum(wz * h(u, v), axis=1)
            total += float(np.dot(w1, inner))
    return total
