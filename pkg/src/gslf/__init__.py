"""Gaussian-subordinated Levy fields ``L(x) = l(F(W(x)))``: sampling, analytics and PDE studies."""
from . import analytics, grf, levy, montecarlo, quadrature, rng, subordinated
from .subordinated import GslfApproxParams, GslfSpec, Transform

__version__ = "0.1.0"

__all__ = ["analytics", "grf", "levy", "montecarlo", "quadrature", "rng", "subordinated",
           "GslfApproxParams", "GslfSpec", "Transform"]
