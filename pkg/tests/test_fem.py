import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gslf import config, grf, levy
from gslf.fem import (DIRICHLET, NEUMANN, CoefficientSpec, FemProblem, Phi, adapt, adaptive_dominance,
                      assemble_and_solve, equilibrated_params, estimate_error, galerkin_residual,
                      manufactured_rate, refine, sample_coefficient, strong_error_study, structured_mesh)
from gslf.fem import solver as solvermod
from gslf.fem.mesh import effective_h, level_h, level_triangles, uniform_refine
from gslf.fem.study import ReferenceQuadrature, StrongErrorResult
from gslf.subordinated import Transform


def small_problem(layout="all_dirichlet"):
    k = grf.SquaredExponential(1.0, 0.25)
    w = grf.GrfModel(k, None, 0.0, grf.grid_sampler(k, 0.05))
    coef = CoefficientSpec(0.1, Phi("exp", 0.1), Phi("abs", 1.0), w, w, Transform.clamped_abs(30.0),
                           levy.poisson(2.0))
    return FemProblem(coef, layout, 10.0, 0.1, 0.3, 0.0)


def test_structured_mesh_shape_and_tags():
    m = structured_mesh(0.25)
    m.check()
    assert m.n_triangles == 32 == level_triangles(1)
    assert m.n_vertices == 25
    assert m.areas().sum() == pytest.approx(1.0)
    assert set(m.boundary.values()) == {DIRICHLET}
    mixed = structured_mesh(0.25, "mixed_lr")
    assert sorted(set(mixed.boundary.values())) == [DIRICHLET, NEUMANN]
    assert len(mixed.edges_with_tag(NEUMANN)) == 8
    with pytest.raises(ValueError):
        structured_mesh(0.3)
    with pytest.raises(ValueError):
        structured_mesh(0.25, "periodic")


def test_level_geometry():
    assert level_h(1) == 0.25 and level_h(4) == 0.03125
    assert effective_h(level_triangles(3)) == pytest.approx(level_h(3))


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.sampled_from(["all_dirichlet", "mixed_lr"]))
def test_adaptive_refinement_stays_conforming(seed, layout):
    rng = np.random.default_rng(seed)
    m = structured_mesh(0.5, layout)
    angle = m.min_angle()
    for _ in range(10):
        m = adapt(m, rng.random(m.n_triangles) ** 4)
        m.check()
        assert m.areas().sum() == pytest.approx(1.0)
        # newest-vertex bisection of right isosceles triangles only produces similar copies
        assert m.min_angle() == pytest.approx(angle)


def test_refine_bisects_every_marked_triangle():
    m = structured_mesh(0.25)
    r = refine(m, [5])
    r.check()
    assert r.n_triangles >= m.n_triangles + 1
    assert refine(m, []) is m
    u = uniform_refine(m, 2)
    assert u.n_triangles == 4 * m.n_triangles
    with pytest.raises(ValueError):
        adapt(m, np.ones(3))


def test_galerkin_orthogonality_for_random_coefficients():
    for layout in ("all_dirichlet", "mixed_lr"):
        p = small_problem(layout)
        a = sample_coefficient(p.coefficient, seed=1, index=0)
        sol = p.solve(structured_mesh(1 / 32, layout), a)
        g_n = p.neumann if layout == "mixed_lr" else None
        assert galerkin_residual(sol, p.f, g_n) < 1e-9


def test_cg_matches_direct_solver(monkeypatch):
    p = small_problem()
    a = sample_coefficient(p.coefficient, seed=2)
    mesh = structured_mesh(1 / 48)
    direct = p.solve(mesh, a)
    monkeypatch.setattr(solvermod, "DIRECT_MAX_DOFS", 0)
    cg = p.solve(mesh, a)
    assert direct.info["solver"] == "direct" and cg.info["solver"] == "cg"
    assert np.max(np.abs(direct.u - cg.u)) < 1e-8 * np.max(np.abs(direct.u))


def test_manufactured_solution_rate():
    hs = 2.0 ** -np.arange(2, 7)
    errs, fit = manufactured_rate(hs)
    assert np.all(np.diff(errs) < 0)
    assert abs(fit.slope - 1.0) <= 0.05


def test_linear_solutions_are_reproduced_with_zero_indicator():
    u = lambda p: 1.0 + 2.0 * p[:, 0] - p[:, 1]
    sol = assemble_and_solve(structured_mesh(0.125), 3.0, None, u)
    assert np.allclose(sol.u, u(sol.mesh.vertices), atol=1e-12)
    assert estimate_error(sol).total == pytest.approx(0.0, abs=1e-10)


def test_solver_rejects_bad_coefficients():
    with pytest.raises(solvermod.SolverError):
        assemble_and_solve(structured_mesh(0.25), -1.0, 1.0)
    with pytest.raises(solvermod.SolverError):
        assemble_and_solve(structured_mesh(0.25), lambda p: np.full(len(p), np.nan), 1.0)


def test_coefficient_is_bounded_below_and_reproducible():
    p = small_problem()
    a = sample_coefficient(p.coefficient, seed=3, index=4)
    b = sample_coefficient(p.coefficient, seed=3, index=4)
    pts = np.random.default_rng(0).random((500, 2))
    assert np.array_equal(a(pts), b(pts))
    assert a(pts).min() >= p.coefficient.abar
    with pytest.raises(ValueError):
        Phi("log")
    unbounded = CoefficientSpec(0.1, Phi("exp"), Phi("abs"), p.coefficient.w1, p.coefficient.w2,
                                Transform.abs_plus(0.0), levy.poisson(1.0))
    with pytest.raises(ValueError):
        sample_coefficient(unbounded, 0)


def test_reference_distance_is_zero_to_itself_and_positive_to_coarser():
    p = small_problem()
    a = sample_coefficient(p.coefficient, seed=0)
    fine = p.solve(structured_mesh(1 / 16), a)
    q = ReferenceQuadrature(fine)
    assert q.h1_distance(fine) == pytest.approx(0.0, abs=1e-12)
    assert q.h1_distance(p.solve(structured_mesh(0.25), a)) > 0


def test_equilibrated_params_examples():
    assert equilibrated_params(0.25, 1, 1, 4) == (pytest.approx(0.0625), 4)
    assert equilibrated_params(0.5, 0.5, 1, 2) == (pytest.approx(0.5), 2)
    with pytest.raises(ValueError):
        equilibrated_params(0.5, 0.0, 1, 2)


def test_adaptive_dominance_interpolates_in_dofs():
    res = StrongErrorResult(
        [1, 2, 3], np.array([0.25, 0.125, 0.0625]),
        {"standard": np.array([4.0, 2.0, 1.0]), "adaptive": np.array([3.0, 1.5, 0.9])},
        {"standard": np.array([10.0, 40.0, 160.0]), "adaptive": np.array([12.0, 40.0, 320.0])},
        {}, {}, 3, 0)
    dom = adaptive_dominance(res, from_level=2)
    assert set(dom) == {2, 3}
    assert dom[2] == (1.5, pytest.approx(2.0))
    # extrapolated along the last segment: rmse ~ dofs^-1/2
    assert dom[3][1] == pytest.approx(1.0 / math.sqrt(2.0))


def test_strong_error_study_is_deterministic_under_workers():
    p = small_problem()
    a = strong_error_study(p, [1, 2], 3, samples=3, seed=0, workers=1)
    b = strong_error_study(p, [1, 2], 3, samples=3, seed=0, workers=3)
    for mode in ("standard", "adaptive"):
        assert np.array_equal(a.rmse[mode], b.rmse[mode])
        assert a.rmse[mode][1] < a.rmse[mode][0]
    assert a.fits["standard"] is None
    with pytest.raises(ValueError):
        strong_error_study(p, [1, 2], 2, samples=3, seed=0)


def test_shipped_problem_configs_build():
    for name in ("fem_dirichlet", "fem_mixed", "fem_high_contrast"):
        prob = config.build_problem(config.load(name))
        a = sample_coefficient(prob.coefficient, 0)
        sol = prob.solve(structured_mesh(0.125, prob.layout), a)
        assert np.all(np.isfinite(sol.u))
