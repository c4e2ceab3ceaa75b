"""Gaussian random fields on ``[0, D]^2``.

Covariance kernels, the separable sine KLE basis and three samplers:
truncated KLE, dense Cholesky on a node grid, and circulant embedding on a
node grid. Grid samplers are evaluated off-grid by bilinear interpolation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

# switch from dense Cholesky to circulant embedding above this many nodes
CHOLESKY_MAX_NODES = 64 * 64


class EmbeddingError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# kernels


@dataclass(frozen=True)
class Matern:
    nu: float
    r: float
    sigma2: float

    def __post_init__(self):
        if self.nu <= 0.5:
            raise ValueError("Matern smoothness must exceed 1/2")
        if self.r <= 0 or self.sigma2 <= 0:
            raise ValueError("r and sigma2 must be positive")

    stationary = True

    def from_distance(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        z = 2.0 * math.sqrt(self.nu) * s / self.r
        if self.nu == 1.5:
            return self.sigma2 * (1.0 + z) * np.exp(-z)
        if self.nu == 2.5:
            return self.sigma2 * (1.0 + z + z * z / 3.0) * np.exp(-z)
        with np.errstate(invalid="ignore", over="ignore"):
            val = self.sigma2 * 2.0 ** (1.0 - self.nu) / special.gamma(self.nu) * z**self.nu * special.kv(self.nu, z)
        return np.where(z == 0, self.sigma2, val)

    def __call__(self, x, y):
        return self.from_distance(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1))


@dataclass(frozen=True)
class SquaredExponential:
    r: float
    sigma2: float

    def __post_init__(self):
        if self.r <= 0 or self.sigma2 <= 0:
            raise ValueError("r and sigma2 must be positive")

    stationary = True

    def from_distance(self, s):
        s = np.asarray(s, dtype=float)
        return self.sigma2 * np.exp(-(s * s) / self.r**2)

    def __call__(self, x, y):
        return self.from_distance(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float), axis=-1))


def kernel_eval(kernel, x, y):
    return kernel(x, y)


@dataclass(frozen=True)
class SineKleBasis:
    """Eigenpairs ``lambda_k = c (k^2 pi^2 + kappa^2)^-nu``, ``e_k = 2 sin(pi k x) sin(pi k y)`` on [0,1]^2."""

    c: float
    kappa: float
    nu: float

    def __post_init__(self):
        if self.c <= 0 or self.nu <= 0.5:
            raise ValueError("need c > 0 and nu > 1/2")

    stationary = False

    @property
    def regularity(self):
        """``(alpha, beta, C_e, C_lambda)``; beta is any value below ``2 nu - 1``."""
        beta = 2 * self.nu - 1
        return 1.0, beta, 2.0, math.inf

    def eigenvalues(self, n: int, start: int = 1) -> np.ndarray:
        k = np.arange(start, start + n, dtype=float)
        return self.c * (k * k * math.pi**2 + self.kappa**2) ** (-self.nu)

    def eigenfunctions(self, n: int, points, start: int = 1) -> np.ndarray:
        """Array of shape ``(n, npoints)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = np.arange(start, start + n, dtype=float)[:, None]
        return 2.0 * np.sin(math.pi * k * pts[:, 0]) * np.sin(math.pi * k * pts[:, 1])

    def variance(self, points, n_terms=None, chunk: int = 1 << 20, full_terms: int = 10**7):
        """Pointwise variance ``sum_{k<=N} lambda_k e_k(x)^2``.

        ``n_terms=None`` is the full series: ``full_terms`` summed exactly plus
        a tail estimate using the running mean of ``e_k^2`` over the last chunk.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = full_terms if n_terms is None else int(n_terms)
        total = np.zeros(len(pts))
        start = 1
        last_mean = np.ones(len(pts))
        while start <= n:
            m = min(chunk, n - start + 1)
            e2 = self.eigenfunctions(m, pts, start) ** 2
            total += self.eigenvalues(m, start) @ e2
            last_mean = e2.mean(axis=0)
            start += m
        if n_terms is None:
            total += last_mean * self.tail_sum(n)
        return total if np.ndim(points) > 1 else float(total[0])

    def tail_sum(self, n: int) -> float:
        """``sum_{k>n} lambda_k`` by the midpoint rule ``int_{n+1/2}^inf lambda(k) dk``."""
        f = lambda k: self.c * (k * k * math.pi**2 + self.kappa**2) ** (-self.nu)
        a = n + 0.5
        b = 1e3 * a
        head = integrate.quad(f, a, b, limit=200)[0]
        # beyond b the kappa term is negligible and lambda(k) is a pure power
        p = 2.0 * self.nu
        return head + self.c * math.pi ** (-p) * b ** (1.0 - p) / (p - 1.0)

    def covariance(self, x, y, n_terms: int = 10**5) -> float:
        ex = self.eigenfunctions(n_terms, x)[:, 0]
        ey = self.eigenfunctions(n_terms, y)[:, 0]
        return float(self.eigenvalues(n_terms) @ (ex * ey))


# --------------------------------------------------------------------------
# grids and realizations


@dataclass(frozen=True)
class Grid2D:
    """Tensor grid with quadrature weights; ``kind`` is "nodes" or "cells"."""

    x: np.ndarray
    y: np.ndarray
    kind: str = "nodes"
    domain: float = 1.0

    @classmethod
    def nodes(cls, n: int, domain: float = 1.0) -> Grid2D:
        t = np.linspace(0.0, domain, n + 1)
        return cls(t, t, "nodes", domain)

    @classmethod
    def cells(cls, n: int, domain: float = 1.0) -> Grid2D:
        t = (np.arange(n) + 0.5) * domain / n
        return cls(t, t, "cells", domain)

    @property
    def shape(self):
        return (len(self.x), len(self.y))

    @property
    def points(self) -> np.ndarray:
        X, Y = np.meshgrid(self.x, self.y, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights over the domain: midpoint for cells, trapezoid for nodes."""
        if self.kind == "cells":
            return np.full(len(self.x) * len(self.y), self.domain**2 / (len(self.x) * len(self.y)))
        wx = _trapezoid_weights(self.x)
        wy = _trapezoid_weights(self.y)
        return np.outer(wx, wy).ravel()


def _trapezoid_weights(t):
    if len(t) == 1:
        return np.ones(1)
    w = np.zeros(len(t))
    d = np.diff(t)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


@dataclass
class FieldRealization:
    """Values on a node grid (``values[i, j]`` at ``(x[i], y[j])``) plus provenance."""

    values: np.ndarray
    x: np.ndarray
    y: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.x), len(self.y)):
            raise ValueError("values shape does not match grid")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite field values")

    def interpolate(self, points):
        return interpolate(self, points)


def interpolate(real: FieldRealization, points):
    """Bilinear interpolation on the (equidistant) node grid."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    x, y, v = real.x, real.y, real.values
    lo = np.array([x[0], y[0]])
    hi = np.array([x[-1], y[-1]])
    tol = 1e-12 * max(1.0, float(np.max(np.abs(hi))))
    if np.any(pts < lo - tol) or np.any(pts > hi + tol):
        raise ValueError("point outside the field domain")
    nx, ny = len(x), len(y)
    hx = (x[-1] - x[0]) / (nx - 1) if nx > 1 else 1.0
    hy = (y[-1] - y[0]) / (ny - 1) if ny > 1 else 1.0
    sx = np.clip((pts[:, 0] - x[0]) / hx, 0, max(nx - 1, 0))
    sy = np.clip((pts[:, 1] - y[0]) / hy, 0, max(ny - 1, 0))
    i = np.minimum(np.floor(sx).astype(int), max(nx - 2, 0))
    j = np.minimum(np.floor(sy).astype(int), max(ny - 2, 0))
    tx = sx - i if nx > 1 else np.zeros(len(pts))
    ty = sy - j if ny > 1 else np.zeros(len(pts))
    i1 = np.minimum(i + 1, nx - 1)
    j1 = np.minimum(j + 1, ny - 1)
    out = ((1 - tx) * (1 - ty) * v[i, j] + tx * (1 - ty) * v[i1, j]
           + (1 - tx) * ty * v[i, j1] + tx * ty * v[i1, j1])
    return out if np.ndim(points) > 1 else float(out[0])


# --------------------------------------------------------------------------
# samplers


@dataclass(frozen=True)
class TruncatedKLE:
    basis: SineKleBasis
    n_terms: int

    def normals_needed(self) -> int:
        return self.n_terms

    def evaluate(self, points, normals) -> np.ndarray:
        """Partial sum ``sum_{k<=N} sqrt(lambda_k) Z_k e_k`` at points; uses ``normals[:N]``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        n = self.n_terms
        if n == 0:
            return np.zeros(len(pts))
        z = np.asarray(normals, dtype=float)[:n]
        if len(z) < n:
            raise ValueError(f"need {n} normals, got {len(z)}")
        coef = np.sqrt(self.basis.eigenvalues(n)) * z
        out = np.zeros(len(pts))
        for s in range(0, n, 256):
            out += coef[s:s + 256] @ self.basis.eigenfunctions(min(256, n - s), pts, s + 1)
        return out

    def variance(self, points):
        return self.basis.variance(points, self.n_terms)


class _GridSampler:
    @property
    def node_coords(self) -> np.ndarray:
        n = int(round(self.domain / self.step))
        return np.linspace(0.0, self.domain, n + 1)


@dataclass(frozen=True)
class GridCholesky(_GridSampler):
    kernel: object
    step: float
    domain: float = 1.0
    _factor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = self.node_coords
        X, Y = np.meshgrid(t, t, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        d = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        cov = self.kernel.from_distance(d)
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            try:
                L = np.linalg.cholesky(cov + 1e-12 * self.kernel.sigma2 * np.eye(len(cov)))
            except np.linalg.LinAlgError:
                raise np.linalg.LinAlgError(
                    "node covariance is not numerically positive definite even with jitter; "
                    "use a coarser grid or circulant embedding") from None
        object.__setattr__(self, "_factor", L)

    def normals_needed(self) -> int:
        return self._factor.shape[0]

    def sample(self, normals) -> FieldRealization:
        t = self.node_coords
        v = self._factor @ np.asarray(normals, dtype=float)[: self.normals_needed()]
        return FieldRealization(v.reshape(len(t), len(t)), t, t, {"sampler": "cholesky", "h_W": self.step})


@dataclass(frozen=True)
class CirculantEmbedding(_GridSampler):
    """Exact stationary sampling on the node grid via a 2D block-circulant embedding."""

    kernel: object
    step: float
    domain: float = 1.0
    max_padding: int = 8
    tolerance: float = 1e-10
    _sqrt_eig: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        m = len(self.node_coords)
        base = max(2 * (m - 1), 1)
        size = base
        while True:
            j = np.arange(size)
            lag = np.minimum(j, size - j) * self.step
            c = self.kernel.from_distance(np.sqrt(lag[:, None] ** 2 + lag[None, :] ** 2))
            eig = np.real(np.fft.fft2(c))
            if eig.min() >= -self.tolerance * eig.max():
                break
            if size >= base * self.max_padding:
                raise EmbeddingError(
                    f"circulant embedding has negative eigenvalue {eig.min():.3e} after padding to "
                    f"{size}x{size}; use GridCholesky instead")
            size *= 2
        object.__setattr__(self, "_sqrt_eig", np.sqrt(np.clip(eig, 0.0, None) / size**2))

    @property
    def embedding_size(self) -> int:
        return self._sqrt_eig.shape[0]

    def normals_needed(self) -> int:
        return 2 * self.embedding_size**2

    def sample(self, normals) -> FieldRealization:
        size = self.embedding_size
        z = np.asarray(normals, dtype=float)[: self.normals_needed()].reshape(2, size, size)
        y = np.fft.fft2(self._sqrt_eig * (z[0] + 1j * z[1]))
        t = self.node_coords
        m = len(t)
        return FieldRealization(np.real(y[:m, :m]), t, t, {"sampler": "circulant", "h_W": self.step})


def grid_sampler(kernel, step: float, domain: float = 1.0, method: str = "auto"):
    nodes = (int(round(domain / step)) + 1) ** 2
    if method == "auto":
        method = "cholesky" if nodes <= CHOLESKY_MAX_NODES else "circulant"
    if method == "cholesky":
        return GridCholesky(kernel, step, domain)
    if method == "circulant":
        return CirculantEmbedding(kernel, step, domain)
    raise ValueError(f"unknown grid sampler {method!r}")


@dataclass(frozen=True)
class GrfModel:
    """A centered-plus-constant-mean GRF with a kernel and/or a KLE basis and a sampler."""

    kernel: object = None
    basis: SineKleBasis = None
    mean: float = 0.0
    sampler: object = None

    def variance(self, x) -> float:
        if self.basis is not None:
            return self.basis.variance(x)
        return float(self.kernel.sigma2)

    def covariance(self, x, y) -> float:
        if self.basis is not None:
            return self.basis.covariance(x, y)
        return float(self.kernel(x, y))

    def sample(self, rng, points=None, normals=None):
        """One draw: a FieldRealization for grid samplers, point values for KLE."""
        s = self.sampler
        if s is None:
            raise ValueError("GrfModel has no sampler")
        if normals is None:
            normals = rng.standard_normal(s.normals_needed())
        if isinstance(s, TruncatedKLE):
            if points is None:
                raise ValueError("KLE sampling needs query points")
            return self.mean + s.evaluate(points, normals)
        real = s.sample(normals)
        real.values += self.mean
        if points is not None:
            return interpolate(real, points)
        return real


def sample_kle(model: GrfModel, grid: Grid2D, rng, normals=None, seed=None) -> FieldRealization:
    if not isinstance(model.sampler, TruncatedKLE):
        raise ValueError("model does not use a truncated KLE sampler")
    vals = model.sample(rng, grid.points, normals)
    return FieldRealization(vals.reshape(grid.shape), grid.x, grid.y,
                            {"sampler": "kle", "N": model.sampler.n_terms, "seed": seed})


def sample_grid(model: GrfModel, rng, normals=None, seed=None) -> FieldRealization:
    if not isinstance(model.sampler, (GridCholesky, CirculantEmbedding)):
        raise ValueError("model does not use a grid sampler")
    real = model.sample(rng, normals=normals)
    real.provenance["seed"] = seed
    return real


def kernel_from_dict(d: dict):
    kind = d["kind"]
    if kind == "matern":
        return Matern(d["nu"], d["r"], d["sigma2"])
    if kind == "squared_exponential":
        return SquaredExponential(d["r"], d["sigma2"])
    raise ValueError(f"unknown kernel {kind!r}")

