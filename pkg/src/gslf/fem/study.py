"""Random coefficients ``a = abar + Phi1(W1) + Phi2(l(F(W2)))`` and strong-error studies."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from matplotlib.tri import Triangulation

from .. import rng as rngmod
from ..grf import GrfModel, interpolate
from ..levy import LevyModel, sample_grid_path, sample_poisson_path
from ..montecarlo import RateFit, fit_rate, parallel_map
from ..subordinated import Transform
from .estimator import estimate_error
from .mesh import Mesh, adapt, effective_h, level_h, level_triangles, structured_mesh
from .solver import FemSolution, SolverError, assemble_and_solve, barycentric_gradients

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Phi:
    """``scale * exp(w)`` or ``scale * |w|``."""

    kind: str
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("exp", "abs"):
            raise ValueError(f"unknown Phi kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("Phi scale must be non-negative")

    def __call__(self, w):
        w = np.asarray(w, dtype=float)
        return self.scale * (np.exp(w) if self.kind == "exp" else np.abs(w))


@dataclass(frozen=True)
class CoefficientSpec:
    abar: float
    phi1: Phi
    phi2: Phi
    w1: GrfModel
    w2: GrfModel
    transform: Transform
    levy: LevyModel
    levy_eps: float = None  # None: exact Poisson path

    def __post_init__(self):
        if self.abar <= 0:
            raise ValueError("abar must be positive")

    @property
    def lower_bound(self) -> float:
        return self.abar


@dataclass
class CoefficientSample:
    spec: CoefficientSpec
    w1: object
    w2: object
    path: object
    index: int = 0

    def __call__(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        s = self.spec
        t = s.transform(interpolate(self.w2, pts))
        return s.abar + s.phi1(interpolate(self.w1, pts)) + s.phi2(self.path(t))


def sample_coefficient(spec: CoefficientSpec, seed: int, index: int = 0) -> CoefficientSample:
    """One coefficient realization; W1, W2 and the Levy path use separate streams."""
    w1 = spec.w1.sample(rngmod.stream(seed, rngmod.GRF, index))
    w2 = spec.w2.sample(rngmod.stream(seed, rngmod.GRF_SECOND, index))
    horizon = float(np.nextafter(spec.transform.bound, np.inf))
    if not math.isfinite(horizon):
        raise ValueError("the coefficient needs a bounded transform")
    g = rngmod.stream(seed, rngmod.LEVY, index)
    if spec.levy_eps is None:
        path = sample_poisson_path(spec.levy, horizon, g)
    else:
        path = sample_grid_path(spec.levy, spec.levy_eps, horizon, g)
    return CoefficientSample(spec, w1, w2, path, index)


# --------------------------------------------------------------------------
# errors between meshes

# interior 3-point rule on the reference triangle (degree 2)
_BARY = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])


class ReferenceQuadrature:
    """Quadrature points of a fine solution for H1 distances to coarser solutions."""

    def __init__(self, ref: FemSolution):
        m = ref.mesh
        P = m.corners()
        self.points = np.einsum("qj,tjk->tqk", _BARY, P).reshape(-1, 2)
        self.weights = np.repeat(m.areas() / 3.0, 3)
        self.grad = np.repeat(ref.gradients(), 3, axis=0)
        self.value = np.einsum("qj,tj->tq", _BARY, ref.u[m.triangles]).ravel()

    def h1_distance(self, sol: FemSolution) -> float:
        m = sol.mesh
        tri = Triangulation(m.vertices[:, 0], m.vertices[:, 1], m.triangles)
        loc = tri.get_trifinder()(self.points[:, 0], self.points[:, 1])
        if np.any(loc < 0):
            raise ValueError("reference quadrature point outside the coarse mesh")
        grads = barycentric_gradients(m)[loc]  # (nq, 3, 2)
        P = m.vertices[m.triangles[loc]]
        lam12 = np.linalg.solve(np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2),
                                (self.points - P[:, 0])[..., None])[..., 0]
        lam = np.column_stack([1 - lam12.sum(axis=1), lam12])
        uc = sol.u[m.triangles[loc]]
        val = np.sum(lam * uc, axis=1)
        gc = np.einsum("qij,qi->qj", grads, uc)
        e2 = np.sum((self.grad - gc) ** 2, axis=1) + (self.value - val) ** 2
        return math.sqrt(math.fsum(self.weights * e2))


def h1_error_exact(sol: FemSolution, u, grad_u) -> float:
    """H1 distance to a smooth function, by the 3-point rule on each triangle."""
    m = sol.mesh
    P = m.corners()
    pts = np.einsum("qj,tjk->tqk", _BARY, P).reshape(-1, 2)
    w = np.repeat(m.areas() / 3.0, 3)
    gh = np.repeat(sol.gradients(), 3, axis=0)
    uh = np.einsum("qj,tj->tq", _BARY, sol.u[m.triangles]).ravel()
    e2 = np.sum((grad_u(pts) - gh) ** 2, axis=1) + (u(pts) - uh) ** 2
    return math.sqrt(math.fsum(w * e2))


# --------------------------------------------------------------------------
# studies


@dataclass
class FemProblem:
    coefficient: CoefficientSpec
    layout: str = "all_dirichlet"
    f: float = 10.0
    dirichlet_left: float = 0.0
    dirichlet_right: float = 0.0
    neumann: float = 0.0
    rule: str = "centroid"

    def g_d(self, p):
        p = np.atleast_2d(p)
        if self.layout == "all_dirichlet":
            return np.full(len(p), self.dirichlet_left)
        return np.where(p[:, 0] < 0.5, self.dirichlet_left, self.dirichlet_right)

    def solve(self, mesh: Mesh, a) -> FemSolution:
        g_n = self.neumann if self.layout != "all_dirichlet" else None
        return assemble_and_solve(mesh, a, self.f, self.g_d, g_n, self.rule, self.coefficient.lower_bound)

    def estimate(self, sol: FemSolution):
        g_n = self.neumann if self.layout != "all_dirichlet" else None
        return estimate_error(sol, self.f, g_n)


def adaptive_sequence(problem: FemProblem, a, targets, start_h: float = 0.25, fraction: float = 0.5,
                      max_rounds: int = 10000):
    """Refine from the structured ``start_h`` mesh; return the first solution whose
    triangle count exceeds each target (targets ascending)."""
    mesh = structured_mesh(start_h, problem.layout)
    sol = problem.solve(mesh, a)
    out = []
    rounds = 0
    for target in targets:
        while mesh.n_triangles <= target:
            if rounds >= max_rounds:
                raise RuntimeError("adaptive refinement did not reach the target size")
            mesh = adapt(mesh, problem.estimate(sol), fraction)
            sol = problem.solve(mesh, a)
            rounds += 1
        out.append(sol)
    return out


@dataclass
class StrongErrorResult:
    levels: list
    h: np.ndarray
    rmse: dict  # mode -> array over levels
    mean_dofs: dict  # mode -> array
    mean_h: dict  # mode -> array of effective mesh widths
    fits: dict  # mode -> RateFit
    samples_used: int
    failures: int
    per_sample: dict = field(default_factory=dict)  # mode -> (samples, levels) errors


def strong_error_study(problem: FemProblem, levels, reference_level: int, samples: int, seed: int,
                       modes=("standard", "adaptive"), workers: int = None,
                       fit_drop: int = 0) -> StrongErrorResult:
    """RMSE in H1 against a per-sample reference solution on the structured mesh
    of ``reference_level``. Every level and mode of a sample uses the same
    coefficient realization."""
    levels = list(levels)
    if reference_level <= max(levels):
        raise ValueError("reference level must be finer than all study levels")
    ref_mesh = structured_mesh(level_h(reference_level), problem.layout)
    std_meshes = {l: structured_mesh(level_h(l), problem.layout) for l in levels}
    targets = [level_triangles(l) for l in levels]

    def one(i):
        try:
            a = sample_coefficient(problem.coefficient, seed, i)
            quad = ReferenceQuadrature(problem.solve(ref_mesh, a))
            res = {}
            for mode in modes:
                if mode == "standard":
                    sols = [problem.solve(std_meshes[l], a) for l in levels]
                elif mode == "adaptive":
                    sols = adaptive_sequence(problem, a, targets)
                else:
                    raise ValueError(f"unknown mode {mode!r}")
                res[mode] = [(quad.h1_distance(s), s.dofs, s.mesh.n_triangles) for s in sols]
            return res
        except SolverError as exc:
            log.warning("sample %d skipped: %s", i, exc)
            return None

    results = parallel_map(one, range(samples), workers)
    ok = [r for r in results if r is not None]
    failures = samples - len(ok)
    if len(ok) < 0.95 * samples:
        raise RuntimeError(f"{failures} of {samples} samples failed")
    rmse, dofs, hs, fits, per = {}, {}, {}, {}, {}
    for mode in modes:
        arr = np.array([[c[0] for c in r[mode]] for r in ok])
        per[mode] = arr
        rmse[mode] = np.sqrt(np.array([math.fsum(arr[:, j] ** 2) / len(ok) for j in range(len(levels))]))
        dofs[mode] = np.array([np.mean([r[mode][j][1] for r in ok]) for j in range(len(levels))])
        tris = np.array([np.mean([r[mode][j][2] for r in ok]) for j in range(len(levels))])
        hs[mode] = np.array([effective_h(n) for n in tris])
        fits[mode] = fit_rate(hs[mode], rmse[mode], fit_drop) if len(levels) - fit_drop >= 3 else None
    return StrongErrorResult(levels, np.array([level_h(l) for l in levels]), rmse, dofs, hs, fits,
                             len(ok), failures, per)


def adaptive_dominance(result: StrongErrorResult, from_level: int = 3) -> dict:
    """Adaptive RMSE against the standard RMSE interpolated (log-log in dofs)
    at the adaptive mean dofs, for every level ``>= from_level``.

    Beyond the range of standard dofs the last segment is extrapolated.
    Returns ``{level: (adaptive_rmse, standard_rmse_at_same_dofs)}``.
    """
    ld = np.log(result.mean_dofs["standard"])
    le = np.log(result.rmse["standard"])
    out = {}
    for j, level in enumerate(result.levels):
        if level < from_level:
            continue
        x = math.log(result.mean_dofs["adaptive"][j])
        k = int(np.clip(np.searchsorted(ld, x) - 1, 0, len(ld) - 2))
        slope = (le[k + 1] - le[k]) / (ld[k + 1] - ld[k])
        out[level] = (float(result.rmse["adaptive"][j]), float(math.exp(le[k] + slope * (x - ld[k]))))
    return out


def equilibrated_params(h: float, kappa: float, delta: float, beta: float) -> tuple:
    """``eps = h^(2 kappa)`` and ``N = ceil(h^(-4 kappa / (beta delta)))``."""
    if not (0 < kappa <= 1 and 0 < delta <= 1 and beta > 0):
        raise ValueError("need kappa, delta in (0, 1] and beta > 0")
    eps = h ** (2 * kappa)
    n = int(math.ceil(h ** (-4 * kappa / (beta * delta)) - 1e-9))
    return eps, n


def manufactured_rate(hs) -> tuple:
    """H1 errors for ``u = sin(pi x) sin(pi y)`` with ``a = 1`` and the fitted rate."""
    pi = math.pi
    u = lambda p: np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1])
    grad = lambda p: pi * np.column_stack([np.cos(pi * p[:, 0]) * np.sin(pi * p[:, 1]),
                                           np.sin(pi * p[:, 0]) * np.cos(pi * p[:, 1])])
    f = lambda p: 2 * pi**2 * u(p)
    errs = []
    for h in hs:
        sol = assemble_and_solve(structured_mesh(h), 1.0, f)
        errs.append(h1_error_exact(sol, u, grad))
    errs = np.array(errs)
    return errs, fit_rate(hs, errs)
