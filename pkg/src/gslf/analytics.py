"""Pointwise laws of GSLFs: characteristic functions, densities, moments, covariance.

Conditioning on the Gaussian value gives ``E exp(i xi l(F(W(x)))) = E exp(F(W(x)) psi(xi))``,
and ``E l(s) l(t) = mu(|s - t|) mu(s ^ t) + mu2(s ^ t)`` turns the covariance into
a bivariate Gaussian integral of moment functions.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grf import TruncatedKLE
from .quadrature import KinkLine, QuadratureConfig, QuadratureError, gaussian_expectation, pair_expectation
from .subordinated import GslfApproxParams, GslfSpec

# exact bin sums are used up to this many staircase steps
MAX_STAIRCASE_BINS = 2_000_000


class DiscreteLawError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianMarginal:
    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0:
            raise ValueError("variance must be non-negative")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class GaussianPair:
    means: tuple
    cov: np.ndarray

    @property
    def correlation(self) -> float:
        c = self.cov
        return float(c[0, 1] / math.sqrt(c[0, 0] * c[1, 1]))


def marginal(spec: GslfSpec, x, n_terms=None) -> GaussianMarginal:
    """Law of ``W(x)``, or of its KLE truncation when ``n_terms`` is given."""
    x = np.asarray(x, dtype=float)
    if n_terms is not None:
        if spec.grf.basis is None:
            raise ValueError("truncated variance needs a KLE basis")
        var = float(spec.grf.basis.variance(x, n_terms=int(n_terms)))
    else:
        var = float(spec.grf.variance(x))
    return GaussianMarginal(float(spec.grf.mean), var)


def pair(spec: GslfSpec, x, y) -> GaussianPair:
    vx, vy = spec.grf.variance(np.asarray(x, float)), spec.grf.variance(np.asarray(y, float))
    q = spec.grf.covariance(np.asarray(x, float), np.asarray(y, float))
    m = float(spec.grf.mean)
    return GaussianPair((m, m), np.array([[vx, q], [q, vy]], dtype=float))


def _exp_integrand(spec, psi):
    F = spec.transform
    return lambda y: np.exp(np.multiply.outer(F(y), psi))


def charfn_gaussian(spec: GslfSpec, m: GaussianMarginal, xi, cfg: QuadratureConfig = None):
    """``E exp(F(Y) psi(xi))`` for ``Y`` with law ``m``."""
    xi = np.asarray(xi, dtype=float)
    psi = np.atleast_1d(spec.levy.char_exponent(xi))
    F = spec.transform
    if F.is_constant or m.variance == 0:
        val = np.exp(F(np.array([m.mean]))[0] * psi)
    else:
        val = gaussian_expectation(_exp_integrand(spec, psi), m.mean, m.std, F.kinks(), cfg)
        # psi = 0 makes the integrand 1; avoid the rounding of the summed weights
        val = np.where(psi == 0, 1.0 + 0.0j, val)
    return val.reshape(xi.shape) if xi.ndim else complex(val[0])


def charfn_exact(spec: GslfSpec, x, xi, cfg: QuadratureConfig = None):
    """Characteristic function of ``L(x)`` at ``xi`` (scalar or array)."""
    return charfn_gaussian(spec, marginal(spec, x), xi, cfg)


def charfn_approx(spec: GslfSpec, params: GslfApproxParams, x, xi, cfg: QuadratureConfig = None):
    """Characteristic function of ``l_eps(F(W_N(x)))`` with a piecewise-constant path.

    The integrand ``exp(eps * floor(F(y) / eps) * psi)`` is constant between the
    points where F crosses a multiple of eps, so the Gaussian integral is an
    exact sum of bin probabilities. Beyond ``MAX_STAIRCASE_BINS`` steps the
    staircase is replaced by F itself, which changes the result by at most
    ``eps * |psi(xi)|``.
    """
    cfg = cfg or QuadratureConfig()
    if params.eps is None:
        raise ValueError("charfn_approx needs a Levy grid step eps")
    n = params.n_terms
    if n is None and isinstance(spec.grf.sampler, TruncatedKLE):
        n = spec.grf.sampler.n_terms
    if n is None:
        raise ValueError("charfn_approx needs a KLE truncation")
    m = marginal(spec, x, n)
    eps = params.eps
    F = spec.transform
    xi_arr = np.asarray(xi, dtype=float)
    psi = np.atleast_1d(spec.levy.char_exponent(xi_arr))
    if F.is_constant or m.variance == 0:
        t0 = float(F(np.array([m.mean]))[0])
        val = np.exp(eps * math.floor(t0 / eps + 1e-10) * psi)
    else:
        T = cfg.truncation * m.std
        fmin, fmax = F.range_on(m.mean - T, m.mean + T)
        k0, k1 = int(math.floor(fmin / eps)), int(math.floor(fmax / eps))
        if k1 - k0 + 1 <= MAX_STAIRCASE_BINS:
            val = _staircase_sum(F, m, eps, k0, k1, psi)
        else:
            val = gaussian_expectation(_exp_integrand(spec, psi), m.mean, m.std, F.kinks(), cfg)
    return val.reshape(xi_arr.shape) if xi_arr.ndim else complex(val[0])


def _staircase_sum(F, m, eps, k0, k1, psi, chunk=1 << 16):
    out = np.zeros(psi.shape, dtype=complex)
    for start in range(k0, k1 + 1, chunk):
        k = np.arange(start, min(start + chunk, k1 + 1), dtype=float)
        p = F.prob_below((k + 1) * eps, m.mean, m.std) - F.prob_below(k * eps, m.mean, m.std)
        # mass below the first bin or above the last is at most a Gaussian tail
        out += p @ np.exp(np.multiply.outer(k * eps, psi))
    return out


# --------------------------------------------------------------------------
# Fourier inversion


@dataclass
class DensityResult:
    v: np.ndarray
    values: np.ndarray
    mass: float  # integral of the returned (clipped) density over v


def _xi_grid(cfg: QuadratureConfig):
    xi = np.linspace(0.0, cfg.xi_max, cfg.fourier_nodes)
    w = np.full(xi.shape, xi[1] - xi[0])
    w[0] = w[-1] = 0.5 * (xi[1] - xi[0])
    if cfg.damping > 0:
        w = w * np.exp(-cfg.damping * xi)
    return xi, w


def density_fourier_inversion(phi, v, cfg: QuadratureConfig = None, lattice: bool = False,
                              chunk: int = 256) -> DensityResult:
    """``f(v) = (1/pi) int_0^xi_max Re(exp(-i xi v) phi(xi)) d xi`` by the trapezoid rule.

    ``phi`` maps an array of xi to complex values. Laws with atoms have no
    density: pass ``lattice=True`` to get a DiscreteLawError pointing at
    :func:`bin_probabilities`.
    """
    if lattice:
        raise DiscreteLawError("the pointwise law has atoms (integer-valued driver) and no density; "
                               "use bin_probabilities (CDF-difference mode) instead")
    cfg = cfg or QuadratureConfig()
    v = np.asarray(v, dtype=float)
    xi, w = _xi_grid(cfg)
    ph = np.asarray(phi(xi), dtype=complex) * w
    f = np.empty(v.shape)
    flat = v.ravel()
    out = f.reshape(-1)
    for s in range(0, flat.size, chunk):
        vv = flat[s:s + chunk]
        out[s:s + chunk] = (np.exp(-1j * np.outer(vv, xi)) @ ph).real / math.pi
    f = np.maximum(f, 0.0)
    mass = float(np.trapezoid(f, v)) if v.ndim == 1 and v.size > 1 else float("nan")
    return DensityResult(v, f, mass)


def bin_probabilities(phi, edges, cfg: QuadratureConfig = None, smoothing: float = 0.05):
    """``P(a < X <= b)`` for consecutive ``edges`` from the characteristic function.

    The law is first convolved with ``N(0, smoothing^2)`` (factor
    ``exp(-xi^2 s^2 / 2)``), which makes the inversion integral absolutely
    convergent for lattice laws; place edges between atoms so that the
    smoothing moves no mass across them.
    """
    cfg = cfg or QuadratureConfig()
    edges = np.asarray(edges, dtype=float)
    xi, w = _xi_grid(cfg)
    ph = np.asarray(phi(xi), dtype=complex) * np.exp(-0.5 * (xi * smoothing) ** 2) * w
    a, b = edges[:-1], edges[1:]
    safe = np.where(xi > 0, xi, 1.0)
    kern = (np.exp(-1j * np.outer(a, xi)) - np.exp(-1j * np.outer(b, xi))) / (1j * safe)
    kern[:, xi == 0] = (b - a)[:, None]
    return (kern @ ph).real / math.pi


# --------------------------------------------------------------------------
# moments and covariance


def _mu(spec):
    return lambda t: spec.levy.moments(t)[0]


def _mu2(spec):
    return lambda t: spec.levy.moments(t)[1]


def mean_gslf(spec: GslfSpec, x, cfg: QuadratureConfig = None) -> float:
    m = marginal(spec, x)
    F = spec.transform
    return float(gaussian_expectation(lambda y: _mu(spec)(F(y)), m.mean, m.std, F.kinks(), cfg))


def variance_gslf(spec: GslfSpec, x, cfg: QuadratureConfig = None) -> float:
    m = marginal(spec, x)
    return _variance_from_marginal(spec, m, cfg)


def _variance_from_marginal(spec, m, cfg):
    F = spec.transform
    both = gaussian_expectation(lambda y: np.stack([_mu(spec)(F(y)), _mu2(spec)(F(y))], axis=-1),
                                m.mean, m.std, F.kinks(), cfg)
    var = float(both[1] - both[0] ** 2)
    if var < -1e-10:
        raise QuadratureError(f"negative variance {var:.3e}")
    return max(var, 0.0)


def second_moment_kernel(spec: GslfSpec):
    """``c_l(s, t) = E l(s) l(t) = mu(|s - t|) mu(s ^ t) + mu2(s ^ t)``."""
    mu, mu2 = _mu(spec), _mu2(spec)

    def c(s, t):
        lo = np.minimum(s, t)
        return mu(np.abs(s - t)) * mu(lo) + mu2(lo)

    return c


def _kink_lines(F):
    lines = [KinkLine(1.0, -1.0, 0.0), KinkLine(1.0, 1.0, 0.0)]
    for k in F.kinks():
        lines += [KinkLine(1.0, 0.0, k), KinkLine(0.0, 1.0, k)]
    return lines


def covariance_gslf(spec: GslfSpec, x, y, cfg: QuadratureConfig = None) -> float:
    """``Cov(L(x), L(y))``; symmetric in its arguments by construction."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    if tuple(y) < tuple(x):
        x, y = y, x
    if np.array_equal(x, y):
        return variance_gslf(spec, x, cfg)
    gp = pair(spec, x, y)
    F = spec.transform
    rho = gp.correlation
    if F.is_constant:
        return 0.0
    if rho > 1 - 1e-10:
        warnings.warn("near-singular Gaussian pair: using the variance formula", RuntimeWarning)
        return variance_gslf(spec, x, cfg)
    c = second_moment_kernel(spec)
    ecl = pair_expectation(lambda u, v: c(F(u), F(v)), gp.means, gp.cov, _kink_lines(F), cfg)
    mu = _mu(spec)
    sx, sy = math.sqrt(gp.cov[0, 0]), math.sqrt(gp.cov[1, 1])
    mx = gaussian_expectation(lambda u: mu(F(u)), gp.means[0], sx, F.kinks(), cfg)
    my = gaussian_expectation(lambda u: mu(F(u)), gp.means[1], sy, F.kinks(), cfg)
    return float(ecl - mx * my)
