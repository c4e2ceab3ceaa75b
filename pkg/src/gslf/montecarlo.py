"""Seeded Monte Carlo experiments: pointwise and pair sampling, rate fits, studies.

Each sample (or chunk of pointwise samples) owns its random stream, keyed by
the master seed and its index, so results do not depend on the number of
workers. Aggregates use compensated summation.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import analytics
from . import rng as rngmod
from .grf import Grid2D
from .levy import moment_scaling_study
from .subordinated import GslfApproxParams, GslfSpec, coupled_terms, sample_coupled

THREADS_ENV = "GSLF_THREADS"
POINTWISE_CHUNK = 1 << 16


def default_workers() -> int:
    return max(1, int(os.environ.get(THREADS_ENV, "1")))


def parallel_map(fn, items, workers: int = None) -> list:
    """``[fn(i) for i in items]`` on a thread pool; order preserved."""
    items = list(items)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) < 2:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# rate fits


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    points: int

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, dtype=float) ** self.slope


def fit_rate(x, y, drop_coarsest: int = 0, coarse_is_large: bool = True) -> RateFit:
    """Least-squares fit of ``log y = intercept + slope * log x``.

    ``drop_coarsest`` removes that many pre-asymptotic points (largest x when
    ``coarse_is_large``, otherwise smallest x).
    """
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    order = np.argsort(-x if coarse_is_large else x)
    keep = order[drop_coarsest:]
    keep = keep[(y[keep] > 0) & (x[keep] > 0)]
    if len(keep) < 3:
        raise ValueError(f"rate fit needs at least 3 positive points, got {len(keep)}")
    lx, ly = np.log(x[keep]), np.log(y[keep])
    slope, intercept = np.polyfit(lx, ly, 1)
    res = ly - (intercept + slope * lx)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    # a flat series leaves only rounding in ss_tot; the fit is then exact
    flat = ss_tot <= 1e-24 * max(1.0, float(np.sum(ly * ly)))
    r2 = 1.0 if flat else 1.0 - float(np.sum(res**2)) / ss_tot
    return RateFit(float(slope), float(intercept), r2, len(keep))


# --------------------------------------------------------------------------
# pointwise sampling


def _chunks(M, chunk=POINTWISE_CHUNK):
    for c, start in enumerate(range(0, M, chunk)):
        yield c, min(chunk, M - start)


def _levy_times(spec, w, eps):
    t = spec.transform(w)
    if eps is not None:
        t = eps * np.floor(t / eps + 1e-10)
    return t


def sample_pointwise(spec: GslfSpec, x, M: int, seed: int, params: GslfApproxParams = None,
                     workers: int = None) -> np.ndarray:
    """``M`` independent draws of ``L(x)`` (or of its approximation ``params``).

    Only the law of ``W(x)`` matters here, so ``W(x)`` is drawn from its
    Gaussian marginal (with the truncated KLE variance for approximations).
    """
    n = None if params is None else params.n_terms
    eps = None if params is None else params.eps
    m = analytics.marginal(spec, x, n)

    def run(item):
        c, size = item
        g = rngmod.stream(seed, rngmod.POINTWISE, c)
        w = m.mean + m.std * g.standard_normal(size)
        return spec.levy.sample(_levy_times(spec, w, eps), g)

    return np.concatenate(parallel_map(run, list(_chunks(M)), workers))


def sample_pair(spec: GslfSpec, x, y, M: int, rng) -> tuple:
    """``M`` draws of ``(L(x), L(y))`` sharing one Levy path per draw."""
    gp = analytics.pair(spec, x, y)
    L = np.linalg.cholesky(gp.cov)
    z = rng.standard_normal((M, 2))
    w = np.asarray(gp.means) + z @ L.T
    s, t = spec.transform(w[:, 0]), spec.transform(w[:, 1])
    lo, hi = np.minimum(s, t), np.maximum(s, t)
    l_lo = spec.levy.sample(lo, rng)
    l_hi = l_lo + spec.levy.sample(hi - lo, rng)
    first_low = s <= t
    return np.where(first_low, l_lo, l_hi), np.where(first_low, l_hi, l_lo)


@dataclass
class EmpiricalCharfn:
    xi: np.ndarray
    value: np.ndarray
    std_error_re: np.ndarray
    std_error_im: np.ndarray

    def within(self, exact, k: float = 4.0, floor: float = 1e-12) -> np.ndarray:
        """``|estimate - exact| <= k * SE`` per part; ``floor`` absorbs rounding when SE is 0."""
        exact = np.asarray(exact)
        return ((np.abs(self.value.real - exact.real) <= k * self.std_error_re + floor)
                & (np.abs(self.value.imag - exact.imag) <= k * self.std_error_im + floor))


def empirical_charfn(samples, xi) -> EmpiricalCharfn:
    samples = np.asarray(samples, dtype=float)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    M = len(samples)
    vals, se_re, se_im = [], [], []
    for k in xi:
        c, s = np.cos(k * samples), np.sin(k * samples)
        vals.append(complex(math.fsum(c) / M, math.fsum(s) / M))
        se_re.append(c.std(ddof=1) / math.sqrt(M))
        se_im.append(s.std(ddof=1) / math.sqrt(M))
    return EmpiricalCharfn(xi, np.array(vals), np.array(se_re), np.array(se_im))


# --------------------------------------------------------------------------
# experiment configuration


KINDS = ("moment_scaling", "density_vs_histogram", "approx_levels", "lp_convergence", "covariance_rmse")


@dataclass
class ExperimentConfig:
    kind: str
    spec: GslfSpec = None
    levels: list = field(default_factory=list)  # eps values, strictly decreasing
    n_terms: list = None  # explicit truncations; None with coupling_nu set uses the coupling rule
    coupling_nu: float = None
    reference_eps: float = None  # None: exact Poisson path
    reference_terms: int = None
    samples: int = 30
    p_values: list = field(default_factory=lambda: [1.0, 2.0])
    seed: int = 0
    grid_cells: int = 64
    fit_drop: int = 2
    points: list = field(default_factory=list)
    bins: int = 60
    repetitions: int = 100
    sample_sizes: list = None
    exponents: list = None
    # "known_mean": mean of products minus the product of the exact means; "sample": sample covariance
    cov_estimator: str = "known_mean"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.samples < 2:
            raise ValueError("need at least 2 samples")
        if self.cov_estimator not in ("known_mean", "sample"):
            raise ValueError(f"unknown covariance estimator {self.cov_estimator!r}")
        if any(b >= a for a, b in zip(self.levels, self.levels[1:])):
            raise ValueError("levels must be strictly decreasing in eps")

    def level_params(self) -> list:
        out = []
        for i, eps in enumerate(self.levels):
            if self.n_terms is not None:
                n = int(self.n_terms[i])
            elif self.coupling_nu is not None:
                n = coupled_terms(eps, self.coupling_nu)
            else:
                n = None
            out.append(GslfApproxParams(eps, n))
        return out

    def reference_params(self) -> GslfApproxParams:
        return GslfApproxParams(self.reference_eps, self.reference_terms)


# --------------------------------------------------------------------------
# studies


@dataclass
class LpResult:
    eps: np.ndarray
    n_terms: list
    errors: dict  # p -> array over levels
    fits: dict  # p -> RateFit or None


def run_lp_convergence(cfg: ExperimentConfig, workers: int = None) -> LpResult:
    """Coupled L^p errors of each level against the reference fidelity.

    All levels of one sample index share the reference randomness, so each
    index contributes one coupled difference per level.
    """
    grid = Grid2D.cells(cfg.grid_cells)
    levels = cfg.level_params()
    ref = cfg.reference_params()
    ps = [float(p) for p in cfg.p_values]

    def one(i):
        fields = sample_coupled(cfg.spec, levels + [ref], grid, cfg.seed, i)
        r = fields[-1].ravel()
        out = np.empty((len(levels), len(ps)))
        for j, f in enumerate(fields[:-1]):
            d = np.abs(f.ravel() - r)
            for k, p in enumerate(ps):
                out[j, k] = float(np.dot(grid.weights, d**p))
        return out

    per_sample = parallel_map(one, range(cfg.samples), workers)
    stacked = np.stack(per_sample)  # (M, levels, p)
    errors, fits = {}, {}
    eps = np.array(cfg.levels, dtype=float)
    for k, p in enumerate(ps):
        mean = np.array([math.fsum(stacked[:, j, k]) / cfg.samples for j in range(len(levels))])
        errors[p] = mean ** (1.0 / p)
        try:
            fits[p] = fit_rate(eps, errors[p], cfg.fit_drop)
        except ValueError:
            fits[p] = None
    return LpResult(eps, [lv.n_terms for lv in levels], errors, fits)


@dataclass
class CovRmseResult:
    sample_sizes: np.ndarray
    rmse: np.ndarray
    exact: float
    fit: RateFit
    estimates: np.ndarray  # (repetitions, len(sample_sizes))


def sample_covariance(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    M = len(a)
    ma, mb = math.fsum(a) / M, math.fsum(b) / M
    return math.fsum((a - ma) * (b - mb)) / (M - 1)


def run_covariance_rmse(cfg: ExperimentConfig, x, y, workers: int = None,
                        exact: float = None) -> CovRmseResult:
    """RMSE of the MC covariance estimate over ``cfg.repetitions`` independent runs.

    Within one repetition the sample sizes are nested prefixes of one stream.
    """
    sizes = np.array(cfg.sample_sizes or [100 * 2**k for k in range(8)], dtype=int)
    if exact is None:
        exact = analytics.covariance_gslf(cfg.spec, x, y)
    if cfg.cov_estimator == "known_mean":
        mean_prod = analytics.mean_gslf(cfg.spec, x) * analytics.mean_gslf(cfg.spec, y)
        estimate = lambda a, b: math.fsum(a * b) / len(a) - mean_prod
    else:
        estimate = sample_covariance

    def one(r):
        a, b = sample_pair(cfg.spec, x, y, int(sizes.max()), rngmod.stream(cfg.seed, rngmod.REPETITION, r))
        return [estimate(a[:m], b[:m]) for m in sizes]

    est = np.array(parallel_map(one, range(cfg.repetitions), workers))
    rmse = np.array([math.sqrt(math.fsum((est[:, j] - exact) ** 2) / cfg.repetitions)
                     for j in range(len(sizes))])
    return CovRmseResult(sizes, rmse, float(exact), fit_rate(sizes, rmse, 0, coarse_is_large=False), est)


def product_std(spec: GslfSpec, x, y, M: int, seed: int) -> float:
    """Sample standard deviation of ``L(x) L(y)``."""
    a, b = sample_pair(spec, x, y, M, rngmod.stream(seed, rngmod.REPETITION, 0))
    return float(np.std(a * b, ddof=1))


@dataclass
class HistogramComparison:
    edges: np.ndarray
    empirical: np.ndarray  # probability per bin
    predicted: np.ndarray  # probability per bin from the characteristic function
    l1: float
    discrete: bool
    level: GslfApproxParams = None


def run_density_vs_histogram(cfg: ExperimentConfig, x, bins: int = None, params: GslfApproxParams = None,
                             workers: int = None, sub_nodes: int = 8) -> HistogramComparison:
    """Histogram of ``cfg.samples`` draws at ``x`` against the inverted characteristic function.

    Continuous laws are compared through the FI density averaged over each bin
    (Gauss-Legendre with ``sub_nodes`` per bin). Lattice laws use unit bins
    centred on the integers and CDF-difference bin probabilities. ``l1`` is
    the sum of absolute bin-probability differences.
    """
    spec = cfg.spec
    bins = bins or cfg.bins
    draws = sample_pointwise(spec, x, cfg.samples, cfg.seed, params, workers)
    if params is None:
        phi = lambda xi: analytics.charfn_exact(spec, x, xi)
    else:
        phi = lambda xi: analytics.charfn_approx(spec, params, x, xi)
    if spec.levy.lattice:
        top = int(draws.max()) + 1
        edges = np.arange(-0.5, top + 0.5 + 1e-9)
        pred = analytics.bin_probabilities(phi, edges)
        discrete = True
    else:
        lo, hi = np.quantile(draws, [0.0005, 0.9995])
        edges = np.linspace(max(lo, 0.0) if spec.levy.is_subordinator else lo, hi, bins + 1)
        t, w = np.polynomial.legendre.leggauss(sub_nodes)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        v = (mid[:, None] + half[:, None] * t).ravel()
        dens = analytics.density_fourier_inversion(phi, v).values.reshape(len(mid), sub_nodes)
        pred = (dens * w).sum(axis=1) * half
        discrete = False
    counts, _ = np.histogram(draws, edges)
    emp = counts / len(draws)
    return HistogramComparison(edges, emp, pred, float(np.abs(emp - pred).sum()), discrete, params)


def run_moment_scaling(cfg: ExperimentConfig, model):
    return moment_scaling_study(model, cfg.exponents or [1.0, 2.0], samples=cfg.samples, seed=cfg.seed,
                                fit_max_time=2.0**-4)
