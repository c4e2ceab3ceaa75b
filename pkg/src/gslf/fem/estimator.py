"""Residual a-posteriori error indicator for P1 solutions."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .mesh import DIRICHLET, NEUMANN, _key
from .solver import FemSolution, _GAUSS2, _as_field, edge_midpoints


@dataclass
class ErrorIndicator:
    values: np.ndarray  # eta_K >= 0 per triangle

    @property
    def total(self) -> float:
        return math.sqrt(math.fsum(self.values))


def estimate_error(sol: FemSolution, f=None, g_n=None) -> ErrorIndicator:
    """Per-triangle ``eta_K``: volume residual, Neumann mismatch and flux jumps.

    ``eta_K = h_K^2 |f|^2_K + sum_{e on Neumann} h_e |g - n.a grad u|^2_e
    + sum_{e interior} h_e |[n.a grad u]|^2_e``; the flux of a P1 function is
    constant per triangle, so interior edge terms are exact.
    """
    mesh = sol.mesh
    area = mesh.areas()
    h = mesh.diameters()
    eta = np.zeros(mesh.n_triangles)
    if f is not None:
        fm = _as_field(f)(edge_midpoints(mesh).reshape(-1, 2)).reshape(-1, 3)
        eta += h**2 * area / 3.0 * np.sum(fm**2, axis=1)
    flux = sol.coefficient[:, None] * sol.gradients()  # (nt, 2)
    V, T = mesh.vertices, mesh.triangles
    owner = {}
    g = _as_field(g_n)
    for t in range(mesh.n_triangles):
        for j in range(3):
            a, b = int(T[t, (j + 1) % 3]), int(T[t, (j + 2) % 3])
            d = V[b] - V[a]
            length = math.hypot(d[0], d[1])
            n = np.array([d[1], -d[0]]) / length  # outward for counter-clockwise triangles
            k = _key(a, b)
            tag = mesh.boundary.get(k)
            if tag == DIRICHLET:
                continue
            if tag == NEUMANN:
                nf = float(n @ flux[t])
                vals = g(np.array([V[a] + s * d for s in _GAUSS2])) - nf
                eta[t] += length * 0.5 * length * float(np.sum(vals**2))
                continue
            other = owner.pop(k, None)
            if other is None:
                owner[k] = (t, n)
                continue
            s, ns = other
            jump = float(ns @ (flux[s] - flux[t]))
            term = length * length * jump * jump
            eta[s] += term
            eta[t] += term
    return ErrorIndicator(eta)
