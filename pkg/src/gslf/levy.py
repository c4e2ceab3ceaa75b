"""Levy process families: triplets, characteristic exponents, moments and paths.

Three families are supported, each with closed forms:

* ``poisson(lam)``: counting process, Levy measure ``lam * delta_1``.
* ``gamma(a, b)``: subordinator with Levy density ``a * exp(-b y) / y`` on
  ``(0, inf)``, so that ``l(t) ~ Gamma(shape=a t, rate=b)``.
* ``nig(alpha, beta, delta)``: normal inverse Gaussian process (no location
  term), ``l(t) ~ NIG(alpha, beta, delta t)``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special, stats

from .rng import as_generator, stream

KINDS = ("poisson", "gamma", "nig")


@dataclass(frozen=True)
class LevyTriplet:
    """Drift ``gamma``, Gaussian variance ``b`` and a Levy measure descriptor.

    ``measure`` is ``("point_mass", lam)``, ``("gamma", a, b)`` or
    ``("nig", alpha, beta, delta)``.
    """

    gamma: float
    b: float
    measure: tuple

    def __post_init__(self):
        if self.b < 0:
            raise ValueError("Gaussian part b must be non-negative")

    def levy_density(self, y):
        """Density of the Levy measure (absolutely continuous families only)."""
        y = np.asarray(y, dtype=float)
        name = self.measure[0]
        if name == "gamma":
            _, a, b = self.measure
            return np.where(y > 0, a * np.exp(-b * np.abs(y)) / np.where(y > 0, y, 1.0), 0.0)
        if name == "nig":
            _, alpha, beta, delta = self.measure
            ay = np.abs(y)
            safe = np.where(ay > 0, ay, 1.0)
            # exp(beta y) K1(alpha |y|) = exp(beta y - alpha |y|) k1e(alpha |y|), finite for |beta| < alpha
            dens = delta * alpha / np.pi * np.exp(beta * y - alpha * safe) * special.k1e(alpha * safe) / safe
            return np.where(ay > 0, dens, 0.0)
        raise ValueError(f"measure {name!r} has no density")


@dataclass(frozen=True)
class LevyModel:
    kind: str
    params: tuple
    # exponent in E|l(t)|^s <= C t^delta; one for all three families
    moment_rate_delta: float = 1.0
    approx_constant_exponent_eta: float = 2.0
    triplet: LevyTriplet = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown Levy family {self.kind!r}; expected one of {KINDS}")
        p = tuple(float(v) for v in self.params)
        object.__setattr__(self, "params", p)
        if self.kind == "poisson":
            (lam,) = p
            if lam <= 0:
                raise ValueError("Poisson intensity must be positive")
            trip = LevyTriplet(lam, 0.0, ("point_mass", lam))
        elif self.kind == "gamma":
            a, b = p
            if a <= 0 or b <= 0:
                raise ValueError("Gamma parameters a, b must be positive")
            trip = LevyTriplet(a * (1.0 - math.exp(-b)) / b, 0.0, ("gamma", a, b))
        else:
            alpha, beta, delta = p
            if not (alpha > abs(beta) and delta > 0):
                raise ValueError("NIG requires alpha > |beta| and delta > 0")
            trip = LevyTriplet(_nig_drift(alpha, beta, delta), 0.0, ("nig", alpha, beta, delta))
        if not (0 < self.moment_rate_delta <= 1):
            raise ValueError("moment_rate_delta must lie in (0, 1]")
        if self.approx_constant_exponent_eta <= 1:
            raise ValueError("approx_constant_exponent_eta must exceed 1")
        object.__setattr__(self, "triplet", trip)

    @property
    def is_subordinator(self) -> bool:
        return self.kind in ("poisson", "gamma")

    @property
    def lattice(self) -> bool:
        """True when l(t) is integer valued (atoms in the pointwise law)."""
        return self.kind == "poisson"

    def char_exponent(self, xi):
        """psi(xi) with E exp(i xi l(t)) = exp(t psi(xi))."""
        xi = np.asarray(xi, dtype=float)
        if self.kind == "poisson":
            (lam,) = self.params
            return lam * np.expm1(1j * xi)
        if self.kind == "gamma":
            a, b = self.params
            # 1 - i xi / b has positive real part: principal log is continuous
            return -a * np.log(1.0 - 1j * xi / b)
        alpha, beta, delta = self.params
        return delta * (math.sqrt(alpha**2 - beta**2) - np.sqrt(alpha**2 - (beta + 1j * xi) ** 2))

    def moments(self, t):
        """First and second moment ``(E l(t), E l(t)^2)``."""
        t = np.asarray(t, dtype=float)
        if self.kind == "poisson":
            (lam,) = self.params
            m1, var = lam * t, lam * t
        elif self.kind == "gamma":
            a, b = self.params
            m1, var = a * t / b, a * t / b**2
        else:
            alpha, beta, delta = self.params
            g = math.sqrt(alpha**2 - beta**2)
            m1, var = delta * beta / g * t, delta * alpha**2 / g**3 * t
        return m1, var + m1 * m1

    def sample(self, t, rng, size=None):
        """Draw l(t) for (an array of) non-negative times t."""
        rng = as_generator(rng)
        t = np.asarray(t, dtype=float)
        if size is not None:
            t = np.broadcast_to(t, size)
        if np.any(t < 0):
            raise ValueError("times must be non-negative")
        if self.kind == "poisson":
            (lam,) = self.params
            return rng.poisson(lam * t).astype(float)
        if self.kind == "gamma":
            a, b = self.params
            out = np.zeros(t.shape)
            pos = t > 0
            out[pos] = rng.gamma(a * t[pos], 1.0 / b)
            return out
        alpha, beta, delta = self.params
        g = math.sqrt(alpha**2 - beta**2)
        out = np.zeros(t.shape)
        pos = t > 0
        dt = delta * t[pos]
        # inverse Gaussian subordinator with mean dt/g and shape dt^2
        ig = rng.wald(dt / g, dt**2)
        out[pos] = beta * ig + np.sqrt(ig) * rng.standard_normal(ig.shape)
        return out

    def increments(self, dt: float, count: int, rng) -> np.ndarray:
        return self.sample(np.full(int(count), float(dt)), rng)


def poisson(lam: float) -> LevyModel:
    return LevyModel("poisson", (lam,))


def gamma(a: float, b: float) -> LevyModel:
    return LevyModel("gamma", (a, b))


def nig(alpha: float, beta: float, delta: float) -> LevyModel:
    return LevyModel("nig", (alpha, beta, delta))


def from_dict(d: dict) -> LevyModel:
    kind = d["kind"]
    if kind == "poisson":
        return poisson(d["lam"])
    if kind == "gamma":
        return gamma(d["a"], d["b"])
    if kind == "nig":
        return nig(d["alpha"], d["beta"], d["delta"])
    raise ValueError(f"unknown Levy family {kind!r}")


def _nig_drift(alpha, beta, delta):
    # gamma = E l(1) - int_{|y|>1} y nu(dy)
    trip = LevyTriplet(0.0, 0.0, ("nig", alpha, beta, delta))
    mean = delta * beta / math.sqrt(alpha**2 - beta**2)
    tail = integrate.quad(lambda y: y * trip.levy_density(y), 1.0, np.inf)[0]
    tail += integrate.quad(lambda y: y * trip.levy_density(y), -np.inf, -1.0)[0]
    return mean - tail


def char_exponent(model: LevyModel, xi):
    return model.char_exponent(xi)


def moments(model: LevyModel, t):
    return model.moments(t)


# --------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class PathApprox:
    """Piecewise-constant, right-continuous path from values on ``t_i = i * grid_step``."""

    grid_step: float
    grid_values: np.ndarray
    horizon: float

    def __post_init__(self):
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        n = grid_size(self.horizon, self.grid_step)
        if len(self.grid_values) != n:
            raise ValueError(f"expected {n} grid values, got {len(self.grid_values)}")

    def index(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t >= self.horizon):
            bad = t[(t < 0) | (t >= self.horizon)]
            raise ValueError(f"time {bad.flat[0]!r} outside [0, {self.horizon})")
        # tolerance keeps knots right-continuous under round-off (0.3/0.1 < 3)
        return np.floor(t / self.grid_step + 1e-10).astype(np.int64)

    def __call__(self, t):
        return self.grid_values[self.index(t)]

    def coarsen(self, factor: int) -> PathApprox:
        """Path on the grid with step ``factor * grid_step`` sharing this randomness."""
        step = self.grid_step * factor
        n = grid_size(self.horizon, step)
        return PathApprox(step, self.grid_values[: (n - 1) * factor + 1 : factor], self.horizon)


def grid_size(horizon: float, step: float) -> int:
    return int(math.ceil(horizon / step - 1e-9)) + 1


def sample_grid_path(model: LevyModel, eps: float, horizon: float, rng) -> PathApprox:
    if eps <= 0:
        raise ValueError("grid step must be positive")
    if eps > horizon:
        raise ValueError("grid step exceeds the horizon")
    n = grid_size(horizon, eps)
    inc = model.increments(eps, n - 1, rng)
    return PathApprox(eps, np.concatenate(([0.0], np.cumsum(inc))), horizon)


def eval_path(path: PathApprox, t):
    return path(t)


@dataclass(frozen=True)
class PoissonPath:
    """Exact Poisson path on ``[0, horizon]`` from its sorted jump times."""

    jump_times: np.ndarray
    horizon: float

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < 0) or np.any(t > self.horizon):
            raise ValueError(f"time outside [0, {self.horizon}]")
        return np.searchsorted(self.jump_times, t, side="right").astype(float)

    def on_grid(self, eps: float) -> PathApprox:
        n = grid_size(self.horizon, eps)
        knots = eps * np.arange(n)
        return PathApprox(eps, np.searchsorted(self.jump_times, knots, side="right").astype(float), self.horizon)


def sample_poisson_path(model: LevyModel, horizon: float, rng) -> PoissonPath:
    """Uniform method: Poisson(lam * horizon) jumps placed uniformly."""
    if model.kind != "poisson":
        raise ValueError("exact jump-time sampling is only available for Poisson")
    rng = as_generator(rng)
    (lam,) = model.params
    count = rng.poisson(lam * horizon)
    return PoissonPath(np.sort(rng.uniform(0.0, horizon, count)), horizon)


# --------------------------------------------------------------------------
# moment scaling


@dataclass
class MomentScaling:
    exponents: list
    times: np.ndarray
    estimates: np.ndarray  # (len(exponents), len(times))
    nonzero: np.ndarray  # nonzero draws per time
    slopes: dict
    insufficient: bool
    fit_max_time: float
    method: str = "plain"

    def rows(self):
        for i, s in enumerate(self.exponents):
            for j, t in enumerate(self.times):
                yield s, float(t), float(self.estimates[i, j])


STRATA_DEPTH = 40


def stratified_sample(model: LevyModel, t: float, samples: int, rng, depth: int = STRATA_DEPTH) -> tuple:
    """Exact draws of ``l(t)`` stratified on a survival probability, with weights.

    The survival probability ``q`` of the driving variable (``l(t)`` itself for
    Poisson and Gamma, the inverse Gaussian time change for NIG) is split into
    the geometric strata ``(2^-(j+1), 2^-j]``, ``j < depth``, and
    ``(0, 2^-depth]``, with equally many draws each and a further uniform
    stratification inside. ``sum(weights * h(draws))`` is an unbiased estimate of
    ``E h(l(t))`` that resolves the rare large values dominating small-time
    moments.
    """
    rng = as_generator(rng)
    if t < 0:
        raise ValueError("time must be non-negative")
    n_strata = depth + 1
    if samples < n_strata:
        raise ValueError(f"need at least {n_strata} samples")
    counts = np.full(n_strata, samples // n_strata)
    counts[: samples % n_strata] += 1
    hi = 2.0 ** -np.arange(n_strata, dtype=float)
    lo = np.append(hi[1:], 0.0)
    q_parts, w_parts = [], []
    for a, b, n in zip(lo, hi, counts):
        q_parts.append(a + (b - a) * (np.arange(n) + rng.random(n)) / n)
        w_parts.append(np.full(n, (b - a) / n))
    q, w = np.concatenate(q_parts), np.concatenate(w_parts)
    if t == 0:
        return np.zeros(samples), w
    if model.kind == "poisson":
        (lam,) = model.params
        x = stats.poisson.isf(q, lam * t).astype(float)
    elif model.kind == "gamma":
        a, b = model.params
        x = special.gammainccinv(a * t, q) / b
    else:
        alpha, beta, delta = model.params
        g = math.sqrt(alpha**2 - beta**2)
        dt = delta * t
        # inverse Gaussian with mean dt/g and shape dt^2; boost warns about its
        # internal bracketing for tiny dt, but sf(isf(q)) = q holds to ~1e-8
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ig = stats.invgauss.isf(q, 1.0 / (g * dt), scale=dt * dt)
        x = beta * ig + np.sqrt(ig) * rng.standard_normal(len(ig))
    return x, w


def moment_scaling_study(model: LevyModel, exponents, times=None, samples: int = 10**5,
                         seed: int = 0, fit_max_time: float = 2.0**-4,
                         min_nonzero: int = 100, method: str = "stratified") -> MomentScaling:
    """Estimate E|l(t)|^s on ``t = 2^i`` and fit the log-log slope for small t.

    ``method="plain"`` averages independent draws; ``"stratified"`` uses
    :func:`stratified_sample` with the same number of draws.
    """
    if method not in ("plain", "stratified"):
        raise ValueError(f"unknown method {method!r}")
    if times is None:
        times = 2.0 ** np.arange(1, -17, -1)
    times = np.asarray(times, dtype=float)
    est = np.empty((len(exponents), len(times)))
    nonzero = np.empty(len(times), dtype=int)
    for j, t in enumerate(times):
        if method == "plain":
            draws = np.abs(model.sample(np.full(samples, t), stream(seed, j)))
            weights = np.full(samples, 1.0 / samples)
        else:
            draws, weights = stratified_sample(model, float(t), samples, stream(seed, j))
            draws = np.abs(draws)
        nonzero[j] = np.count_nonzero(draws)
        for i, s in enumerate(exponents):
            est[i, j] = math.fsum(weights * draws**s)
    sel = times <= fit_max_time
    slopes = {}
    for i, s in enumerate(exponents):
        ok = sel & (est[i] > 0)
        slopes[s] = float(np.polyfit(np.log(times[ok]), np.log(est[i, ok]), 1)[0])
    return MomentScaling(list(exponents), times, est, nonzero, slopes,
                         bool(np.any(nonzero < min_nonzero)), fit_max_time, method)
