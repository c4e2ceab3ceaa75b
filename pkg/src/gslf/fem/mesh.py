"""Conforming triangulations of the unit square with newest-vertex bisection.

Triangles are stored as ``(v0, v1, v2)`` in counter-clockwise order with
``v0`` the newest vertex; the refinement edge is ``(v1, v2)``. Bisecting it at
its midpoint ``m`` gives the children ``(m, v0, v1)`` and ``(m, v2, v0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DIRICHLET = 1
NEUMANN = 2
LAYOUTS = ("all_dirichlet", "mixed_lr")


def _key(a, b):
    return (a, b) if a < b else (b, a)


@dataclass
class Mesh:
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), newest vertex first
    boundary: dict  # sorted vertex pair -> DIRICHLET | NEUMANN
    layout: str = "all_dirichlet"

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def boundary_edges(self) -> np.ndarray:
        return np.array(sorted(self.boundary), dtype=np.int64).reshape(-1, 2)

    @property
    def boundary_tags(self) -> np.ndarray:
        return np.array([self.boundary[e] for e in sorted(self.boundary)], dtype=np.int64)

    def edges_with_tag(self, tag) -> np.ndarray:
        return np.array([e for e, t in sorted(self.boundary.items()) if t == tag], dtype=np.int64).reshape(-1, 2)

    def dirichlet_nodes(self) -> np.ndarray:
        return np.unique(self.edges_with_tag(DIRICHLET))

    def corners(self) -> np.ndarray:
        return self.vertices[self.triangles]  # (nt, 3, 2)

    def areas(self) -> np.ndarray:
        P = self.corners()
        d1, d2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.corners().mean(axis=1)

    def diameters(self) -> np.ndarray:
        P = self.corners()
        lengths = np.linalg.norm(P[:, [1, 2, 0]] - P[:, [2, 0, 1]], axis=-1)
        return lengths.max(axis=1)

    def angles(self) -> np.ndarray:
        """Interior angles in degrees, shape (nt, 3); column j is the angle at vertex j."""
        P = self.corners()
        out = np.empty((len(P), 3))
        for j in range(3):
            a = P[:, (j + 1) % 3] - P[:, j]
            b = P[:, (j + 2) % 3] - P[:, j]
            cos = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            out[:, j] = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
        return out

    def min_angle(self) -> float:
        return float(self.angles().min())

    def edge_counts(self) -> dict:
        counts = {}
        for t in self.triangles:
            for j in range(3):
                k = _key(int(t[(j + 1) % 3]), int(t[(j + 2) % 3]))
                counts[k] = counts.get(k, 0) + 1
        return counts

    def check(self) -> None:
        """Raise ValueError unless the mesh is a conforming, positively oriented triangulation."""
        if np.any(self.areas() <= 0):
            raise ValueError("triangle with non-positive orientation")
        counts = self.edge_counts()
        single = {e for e, c in counts.items() if c == 1}
        if any(c > 2 for c in counts.values()):
            raise ValueError("edge shared by more than two triangles")
        if single != set(self.boundary):
            raise ValueError("hanging node or untagged boundary edge")
        V = self.vertices
        for a, b in single:
            pa, pb = V[a], V[b]
            on_side = any(abs(pa[i] - s) < 1e-12 and abs(pb[i] - s) < 1e-12 for i in (0, 1) for s in (0.0, 1.0))
            if not on_side:
                raise ValueError(f"edge {(a, b)} is used once but is not on the boundary")
        if not any(t == DIRICHLET for t in self.boundary.values()):
            raise ValueError("Dirichlet boundary is empty")


def _boundary_tag(layout, p, q):
    if layout == "all_dirichlet":
        return DIRICHLET
    vertical = abs(p[0] - q[0]) < 1e-12
    return DIRICHLET if vertical else NEUMANN


def structured_mesh(h: float, layout: str = "all_dirichlet") -> Mesh:
    """Uniform right-triangle mesh of (0,1)^2 with ``1/h`` squares per side.

    Each square is cut along its rising diagonal; the right-angle vertex is the
    newest, so the first bisection halves the hypotenuse.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"unknown boundary layout {layout!r}; expected one of {LAYOUTS}")
    n = int(round(1.0 / h))
    if n < 1 or abs(n * h - 1.0) > 1e-9:
        raise ValueError(f"1/h must be an integer, got h={h}")
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t, indexing="xy")
    V = np.column_stack([X.ravel(), Y.ravel()])
    idx = lambda i, j: j * (n + 1) + i
    tris = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris.append((b, c, a))
            tris.append((d, a, c))
    bnd = {}
    for k in range(n):
        for e in ((idx(k, 0), idx(k + 1, 0)), (idx(k, n), idx(k + 1, n)),
                  (idx(0, k), idx(0, k + 1)), (idx(n, k), idx(n, k + 1))):
            bnd[_key(*e)] = _boundary_tag(layout, V[e[0]], V[e[1]])
    return Mesh(V, np.array(tris, dtype=np.int64), bnd, layout)


def refine(mesh: Mesh, marked) -> Mesh:
    """Newest-vertex bisection of the marked triangles with conformity closure.

    Every marked triangle is bisected at least once; neighbours are bisected
    as needed so that no hanging nodes remain.
    """
    tris = [tuple(int(v) for v in t) for t in mesh.triangles]
    marked = np.asarray(marked)
    if marked.dtype == bool:
        marked = np.flatnonzero(marked)
    edges = {_key(tris[i][1], tris[i][2]) for i in marked}
    if not edges:
        return mesh
    # closure: a triangle with any marked edge must also bisect its refinement edge
    by_edge = {}
    for i, (v0, v1, v2) in enumerate(tris):
        for e in (_key(v0, v1), _key(v2, v0)):
            by_edge.setdefault(e, []).append(i)
    work = list(edges)
    while work:
        e = work.pop()
        for i in by_edge.get(e, ()):
            _, v1, v2 = tris[i]
            r = _key(v1, v2)
            if r not in edges:
                edges.add(r)
                work.append(r)
    verts = [tuple(p) for p in mesh.vertices]
    mid = {}
    bnd = dict(mesh.boundary)
    out = []
    stack = tris[::-1]
    while stack:
        v0, v1, v2 = stack.pop()
        r = _key(v1, v2)
        if r not in edges:
            out.append((v0, v1, v2))
            continue
        m = mid.get(r)
        if m is None:
            m = len(verts)
            p, q = verts[v1], verts[v2]
            verts.append((0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])))
            mid[r] = m
            tag = bnd.pop(r, None)
            if tag is not None:
                bnd[_key(r[0], m)] = tag
                bnd[_key(m, r[1])] = tag
        stack.append((m, v2, v0))
        stack.append((m, v0, v1))
    return Mesh(np.array(verts, dtype=float), np.array(out, dtype=np.int64), bnd, mesh.layout)


def mark(indicator, fraction: float = 0.5) -> np.ndarray:
    """Indices with ``eta_K >= fraction * max eta``."""
    eta = np.asarray(indicator, dtype=float)
    top = eta.max()
    if top <= 0:
        return np.arange(len(eta))
    return np.flatnonzero(eta >= fraction * top)


def adapt(mesh: Mesh, indicator, fraction: float = 0.5) -> Mesh:
    values = getattr(indicator, "values", indicator)
    if len(values) != mesh.n_triangles:
        raise ValueError("indicator does not match the mesh")
    return refine(mesh, mark(values, fraction))


def uniform_refine(mesh: Mesh, times: int = 1) -> Mesh:
    for _ in range(times):
        mesh = refine(mesh, np.arange(mesh.n_triangles))
    return mesh


def level_h(level: int) -> float:
    """``h_l = 0.25 * 2^-(l-1)``."""
    return 0.25 * 2.0 ** (-(level - 1))


def level_triangles(level: int) -> int:
    return 2 * int(round(1.0 / level_h(level))) ** 2


def effective_h(n_triangles) -> float:
    """Mesh width of a structured mesh with the same number of triangles."""
    return math.sqrt(2.0 / float(n_triangles))
