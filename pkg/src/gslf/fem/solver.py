"""P1 assembly and solution of ``-div(a grad u) = f`` with Dirichlet and Neumann data."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import NEUMANN, Mesh

DIRECT_MAX_DOFS = 5000
CG_RTOL = 1e-10
_GAUSS2 = (0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0))


class SolverError(RuntimeError):
    pass


@dataclass
class FemSolution:
    mesh: Mesh
    u: np.ndarray
    coefficient: np.ndarray  # per-triangle value used in assembly
    dirichlet_nodes: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def free_nodes(self) -> np.ndarray:
        mask = np.ones(self.mesh.n_vertices, dtype=bool)
        mask[self.dirichlet_nodes] = False
        return np.flatnonzero(mask)

    @property
    def dofs(self) -> int:
        return self.mesh.n_vertices - len(self.dirichlet_nodes)

    def gradients(self) -> np.ndarray:
        return np.einsum("tij,ti->tj", barycentric_gradients(self.mesh), self.u[self.mesh.triangles])


def barycentric_gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the three hat functions on each triangle, shape (nt, 3, 2)."""
    P = mesh.corners()
    J = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)  # columns d1, d2
    Jinv = np.linalg.inv(J)  # rows: grad lambda_1, grad lambda_2
    g = np.empty((len(P), 3, 2))
    g[:, 1], g[:, 2] = Jinv[:, 0], Jinv[:, 1]
    g[:, 0] = -g[:, 1] - g[:, 2]
    return g


def edge_midpoints(mesh: Mesh) -> np.ndarray:
    """Midpoint of the edge opposite each vertex, shape (nt, 3, 2)."""
    P = mesh.corners()
    return 0.5 * (P[:, [1, 2, 0]] + P[:, [2, 0, 1]])


def coefficient_on_triangles(mesh: Mesh, a, rule: str = "centroid") -> np.ndarray:
    """One value of ``a`` per triangle: centroid sample or mean over the edge midpoints."""
    if callable(a):
        if rule == "centroid":
            return np.asarray(a(mesh.centroids()), dtype=float)
        if rule == "midpoints":
            mids = edge_midpoints(mesh).reshape(-1, 2)
            return np.asarray(a(mids), dtype=float).reshape(-1, 3).mean(axis=1)
        raise ValueError(f"unknown coefficient rule {rule!r}")
    vals = np.asarray(a, dtype=float)
    if vals.ndim == 0:
        return np.full(mesh.n_triangles, float(vals))
    if len(vals) != mesh.n_triangles:
        raise ValueError("per-triangle coefficient has the wrong length")
    return vals


def _as_field(g, default=0.0):
    if g is None:
        return lambda p: np.full(len(p), default)
    if callable(g):
        return g
    return lambda p: np.full(len(p), float(g))


def assemble(mesh: Mesh, a_tri, f=None, g_n=None):
    """Stiffness matrix and load vector (Neumann data included)."""
    grads = barycentric_gradients(mesh)
    area = mesh.areas()
    K_loc = (a_tri * area)[:, None, None] * np.einsum("tik,tjk->tij", grads, grads)
    T = mesh.triangles
    rows = np.repeat(T, 3, axis=1).ravel()
    cols = np.tile(T, (1, 3)).ravel()
    n = mesh.n_vertices
    K = sp.csr_matrix((K_loc.ravel(), (rows, cols)), shape=(n, n))
    b = np.zeros(n)
    if f is not None:
        fm = _as_field(f)(edge_midpoints(mesh).reshape(-1, 2)).reshape(-1, 3)
        # midpoint rule: the hat of vertex j is 1/2 at the two midpoints next to it
        load = (area / 3.0)[:, None] * 0.5 * (fm[:, [1, 2, 0]] + fm[:, [2, 0, 1]])
        np.add.at(b, T, load)
    if g_n is not None:
        E = mesh.edges_with_tag(NEUMANN)
        if len(E):
            g = _as_field(g_n)
            p, q = mesh.vertices[E[:, 0]], mesh.vertices[E[:, 1]]
            length = np.linalg.norm(q - p, axis=1)
            for s in _GAUSS2:
                val = g(p + s * (q - p)) * 0.5 * length
                np.add.at(b, E[:, 0], (1 - s) * val)
                np.add.at(b, E[:, 1], s * val)
    return K, b


def assemble_and_solve(mesh: Mesh, a, f=None, g_d=None, g_n=None, rule: str = "centroid",
                       a_min: float = None) -> FemSolution:
    """Solve the P1 Galerkin system; Dirichlet data enter by lifting."""
    a_tri = coefficient_on_triangles(mesh, a, rule)
    if not np.all(np.isfinite(a_tri)):
        raise SolverError("coefficient is not finite")
    floor = 0.0 if a_min is None else a_min
    if np.any(a_tri <= 0) or np.any(a_tri < floor):
        raise SolverError(f"coefficient below its lower bound: min {a_tri.min():.3e}")
    K, b = assemble(mesh, a_tri, f, g_n)
    dn = mesh.dirichlet_nodes()
    u = np.zeros(mesh.n_vertices)
    u[dn] = _as_field(g_d)(mesh.vertices[dn])
    free = np.ones(mesh.n_vertices, dtype=bool)
    free[dn] = False
    fi = np.flatnonzero(free)
    rhs = b[fi] - K[fi][:, dn] @ u[dn]
    A = K[fi][:, fi].tocsr()
    info = {"dofs": len(fi)}
    if len(fi) <= DIRECT_MAX_DOFS:
        u[fi] = spla.spsolve(A.tocsc(), rhs)
        info["solver"] = "direct"
    else:
        u[fi], info = _cg(A, rhs, info)
    return FemSolution(mesh, u, a_tri, dn, info)


def _cg(A, rhs, info):
    import pyamg

    ml = pyamg.smoothed_aggregation_solver(A, symmetry="hermitian")
    M = ml.aspreconditioner()
    maxiter = int(20 * math.sqrt(A.shape[0])) + 1
    its = [0]

    def count(_):
        its[0] += 1

    x, flag = spla.cg(A, rhs, rtol=CG_RTOL, atol=0.0, maxiter=maxiter, M=M, callback=count)
    res = np.linalg.norm(rhs - A @ x) / max(np.linalg.norm(rhs), 1e-300)
    if flag != 0 or res > 10 * CG_RTOL:
        diag = A.diagonal()
        raise SolverError(f"CG did not converge in {maxiter} iterations (relative residual {res:.2e}, "
                          f"diagonal range {diag.min():.2e}..{diag.max():.2e})")
    info.update(solver="cg", iterations=its[0], residual=res)
    return x, info


def galerkin_residual(sol: FemSolution, f=None, g_n=None) -> float:
    """``|B(u, v_i) - F(v_i)|`` over free hat functions, relative to the size of the terms."""
    K, b = assemble(sol.mesh, sol.coefficient, f, g_n)
    fi = sol.free_nodes
    r = (K @ sol.u - b)[fi]
    scale = np.linalg.norm(b[fi]) + np.linalg.norm((abs(K) @ np.abs(sol.u))[fi])
    return float(np.linalg.norm(r) / max(scale, 1e-300))
