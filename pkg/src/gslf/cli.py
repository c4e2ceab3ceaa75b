"""Command-line entry point: ``gslf <subcommand> [--config ...]``.

Each subcommand reads a TOML config (a path or a shipped config name), writes
CSV (and optionally SVG) files to ``--out`` and prints a one-line JSON summary.
Exit codes: 0 success, 2 a configured rate/band check failed, 1 error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analytics, config, io, plots
from . import montecarlo as mc
from .grf import Grid2D
from .levy import moment_scaling_study
from .subordinated import GslfApproxParams, sample_field

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2

DEFAULT_CONFIGS = {
    "sample-field": "sample_field_matern_poisson",
    "charfn": "charfn_gamma_matern",
    "density": "density_gamma_matern",
    "covariance": "cov_gamma_a",
    "density-hist": "histogram_gamma_matern",
    "moment-scaling": "moments_poisson",
    "converge-lp": "lp_poisson",
    "converge-cov": "cov_gamma_a",
    "solve-pde": "fem_dirichlet",
    "converge-fem": "fem_dirichlet",
}

HELP = {
    "sample-field": "draw one field realization on a node grid",
    "charfn": "characteristic function at a point (exact or per approximation level)",
    "density": "pointwise density by Fourier inversion",
    "covariance": "covariance between two points by quadrature",
    "density-hist": "histogram of pointwise samples against the inverted law",
    "moment-scaling": "small-time scaling of absolute Levy moments",
    "converge-lp": "strong L^p error of approximated fields against a reference",
    "converge-cov": "RMSE of Monte Carlo covariance estimates against sample size",
    "solve-pde": "one random coefficient and its finite element solution",
    "converge-fem": "strong H1 error of standard and adaptive finite elements",
}


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; exit 2 is reserved for failed checks
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gslf", description="Gaussian-subordinated Levy fields: experiments and checks.")
    sub = p.add_subparsers(dest="command", metavar="subcommand", required=True, parser_class=_Parser)
    for name in DEFAULT_CONFIGS:
        s = sub.add_parser(name, help=HELP[name], description=HELP[name])
        s.add_argument("--config", default=DEFAULT_CONFIGS[name],
                       help=f"config file or shipped config name (default: {DEFAULT_CONFIGS[name]})")
        s.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
        s.add_argument("--out", default="out", help="output directory (default: out)")
        s.add_argument("--scale", choices=config.SCALES, default="ci",
                       help="ci: desk-scale run; paper: full-size run with the config's [paper] overrides")
        s.add_argument("--svg", action="store_true", help="also write SVG plots")
        s.add_argument("--xi", type=_floats, default=None,
                       help="comma-separated frequencies (charfn only)")
        s.add_argument("--workers", type=int, default=None,
                       help=f"worker threads (default: ${mc.THREADS_ENV} or 1)")
    return p


class _Run:
    """Shared state for one invocation."""

    def __init__(self, args):
        self.args = args
        self.cfg = config.load(args.config, args.scale)
        self.out = Path(args.out)
        self.seed = args.seed if args.seed is not None else int(self.cfg.get("seed", 0))
        self.workers = args.workers if args.workers is not None else self.cfg.get("workers")
        self.files = []
        self.checks = {}

    def path(self, suffix: str) -> Path:
        return self.out / f"{self.cfg.name}_{suffix}"

    def csv(self, suffix, header, rows):
        self.files.append(str(io.write_csv(self.path(suffix + ".csv"), header, rows)))

    def field(self, suffix, values, x, y, provenance):
        self.files.append(str(io.write_field_csv(self.path(suffix + ".csv"), values, x, y, provenance)))

    def svg(self, suffix, text):
        if self.args.svg:
            self.files.append(str(plots.write_svg(self.path(suffix + ".svg"), text)))

    def check(self, name, ok: bool):
        self.checks[name] = bool(ok)

    def summary(self, **extra) -> dict:
        return {"command": self.args.command, "config": self.cfg.name, "scale": self.cfg.scale,
                "seed": self.seed, "files": self.files, "checks": self.checks,
                "status": "pass" if all(self.checks.values()) else "fail", **extra}


def _params(cfg) -> GslfApproxParams:
    eps, n = cfg.get("eps"), cfg.get("n_terms")
    if eps is None and n is None:
        return None
    return GslfApproxParams(eps, n)


# --------------------------------------------------------------------------
# subcommands


def cmd_sample_field(r: _Run) -> dict:
    spec = config.build_spec(r.cfg)
    n = int(r.cfg.get("grid_nodes", 64))
    grid = Grid2D.nodes(n)
    params = _params(r.cfg) or GslfApproxParams()
    if params.eps is None and not spec.levy.lattice:
        raise config.ConfigError("exact paths exist only for Poisson drivers; set run.eps")
    index = int(r.cfg.get("index", 0))
    fs = sample_field(spec, params, grid, r.seed, index)
    prov = {"config": r.cfg.name, "eps": params.eps, "n_terms": params.n_terms, "seed": r.seed, "index": index}
    r.field("field", fs.values, grid.x, grid.y, prov)
    r.svg("field", plots.heatmap_svg(fs.values, f"{r.cfg.name} (seed {r.seed})"))
    vals = fs.values
    return r.summary(min=float(vals.min()), max=float(vals.max()), distinct=int(len(np.unique(vals))),
                     shape=list(vals.shape))


def _xi_values(r: _Run) -> np.ndarray:
    if r.args.xi is not None:
        return np.array(r.args.xi, dtype=float)
    if "xi" in r.cfg.run:
        return np.array(r.cfg.run["xi"], dtype=float)
    return np.linspace(0.0, float(r.cfg.get("xi_max", 10.0)), int(r.cfg.get("xi_count", 101)))


def cmd_charfn(r: _Run) -> dict:
    spec = config.build_spec(r.cfg)
    x, _ = config.build_points(r.cfg)
    xi = _xi_values(r)
    exact = np.atleast_1d(analytics.charfn_exact(spec, x, xi))
    if "levels" in r.cfg.run:
        return _charfn_levels(r, spec, x, xi, exact)
    params = _params(r.cfg)
    phi = exact if params is None else np.atleast_1d(analytics.charfn_approx(spec, params, x, xi))
    header, rows = ["xi", "re", "im"], [[a, b.real, b.imag] for a, b in zip(xi, phi)]
    extra = {}
    if "samples" in r.cfg.run:
        draws = mc.sample_pointwise(spec, x, int(r.cfg.run["samples"]), r.seed, params, r.workers)
        emp = mc.empirical_charfn(draws, xi)
        ok = emp.within(phi, 4.0)
        header += ["mc_re", "mc_im", "se_re", "se_im", "within_4se"]
        rows = [row + [e.real, e.imag, sr, si, bool(k)]
                for row, e, sr, si, k in zip(rows, emp.value, emp.std_error_re, emp.std_error_im, ok)]
        r.check("mc_within_4se", np.all(ok))
        extra["mc_samples"] = len(draws)
    r.csv("charfn", header, rows)
    r.svg("charfn", plots.line_plot_svg([plots.Series("Re", xi, phi.real, markers=False),
                                         plots.Series("Im", xi, phi.imag, dashed=True, markers=False)],
                                        "characteristic function", "xi", "phi"))
    if len(xi) <= 16:
        extra.update(xi=xi.tolist(), re=phi.real.tolist(), im=phi.imag.tolist())
    return r.summary(point=list(x), **extra)


def _charfn_levels(r, spec, x, xi, exact) -> dict:
    rows, gaps, series = [], [], []
    for k, (eps, n) in enumerate(r.cfg.run["levels"], start=1):
        approx = np.atleast_1d(analytics.charfn_approx(spec, GslfApproxParams(float(eps), int(n)), x, xi))
        gap = np.abs(approx - exact)
        gaps.append(float(gap.max()))
        rows += [[k, float(eps), int(n), a, b.real, b.imag, c.real, c.imag, d]
                 for a, b, c, d in zip(xi, approx, exact, gap)]
        series.append(plots.Series(f"level {k}", xi, approx.real, markers=False))
    r.csv("levels", ["level", "eps", "n_terms", "xi", "re", "im", "exact_re", "exact_im", "abs_gap"], rows)
    series.append(plots.Series("exact", xi, exact.real, dashed=True, markers=False))
    r.svg("levels", plots.line_plot_svg(series, "Re phi per level", "xi", "Re phi"))
    r.check("gap_monotone", all(b <= a for a, b in zip(gaps, gaps[1:])))
    if "gap_target" in r.cfg.run:
        lv = int(r.cfg.get("gap_level", len(gaps)))
        r.check(f"gap_level{lv}_below_target", gaps[lv - 1] < float(r.cfg.run["gap_target"]))
    return r.summary(point=list(x), sup_gaps=gaps)


def cmd_density(r: _Run) -> dict:
    spec = config.build_spec(r.cfg)
    x, _ = config.build_points(r.cfg)
    params = _params(r.cfg)
    if params is None:
        phi = lambda xi: analytics.charfn_exact(spec, x, xi)
    else:
        phi = lambda xi: analytics.charfn_approx(spec, params, x, xi)
    if spec.levy.lattice:
        top = int(r.cfg.get("v_max", 50))
        k = np.arange(0, top + 1)
        p = analytics.bin_probabilities(phi, np.arange(-0.5, top + 1.0))
        r.csv("pmf", ["k", "probability"], zip(k, p))
        r.svg("pmf", plots.line_plot_svg([plots.Series("P(L=k)", k, p)], "probability mass", "k", "p"))
        return r.summary(point=list(x), discrete=True, mass=float(p.sum()))
    v = np.linspace(float(r.cfg.get("v_min", 0.0)), float(r.cfg.get("v_max", 5.0)), int(r.cfg.get("v_count", 201)))
    res = analytics.density_fourier_inversion(phi, v)
    r.csv("density", ["v", "density"], zip(v, res.values))
    r.svg("density", plots.line_plot_svg([plots.Series("density", v, res.values, markers=False)],
                                         "density by Fourier inversion", "v", "f(v)"))
    return r.summary(point=list(x), discrete=False, mass=res.mass)


def cmd_covariance(r: _Run) -> dict:
    spec = config.build_spec(r.cfg)
    x, y = config.build_points(r.cfg)
    if y is None:
        raise config.ConfigError(f"{r.cfg.name}: [points] needs 'y' for a covariance")
    value = analytics.covariance_gslf(spec, x, y)
    mx, my = analytics.mean_gslf(spec, x), analytics.mean_gslf(spec, y)
    vx, vy = analytics.variance_gslf(spec, x), analytics.variance_gslf(spec, y)
    r.csv("covariance", ["x0", "x1", "y0", "y1", "mean_x", "mean_y", "var_x", "var_y", "covariance"],
          [[*x, *y, mx, my, vx, vy, value]])
    return r.summary(x=list(x), y=list(y), value=value, mean_x=mx, mean_y=my, var_x=vx, var_y=vy)


def cmd_density_hist(r: _Run) -> dict:
    spec = config.build_spec(r.cfg)
    x, _ = config.build_points(r.cfg)
    ecfg = mc.ExperimentConfig("density_vs_histogram", spec, samples=int(r.cfg.get("samples", 10**5)),
                               seed=r.seed, bins=int(r.cfg.get("bins", 60)))
    h = mc.run_density_vs_histogram(ecfg, x, params=_params(r.cfg), workers=r.workers)
    r.csv("histogram", ["bin_lo", "bin_hi", "empirical", "predicted"],
          zip(h.edges[:-1], h.edges[1:], h.empirical, h.predicted))
    mid = 0.5 * (h.edges[:-1] + h.edges[1:])
    r.svg("histogram", plots.line_plot_svg([plots.Series("samples", mid, h.empirical),
                                            plots.Series("inverted", mid, h.predicted, dashed=True, markers=False)],
                                           "bin probabilities", "v", "probability"))
    if "l1_max" in r.cfg.run:
        r.check("l1_below_max", h.l1 < float(r.cfg.run["l1_max"]))
    return r.summary(point=list(x), l1=h.l1, discrete=h.discrete, bins=len(h.empirical))


def cmd_moment_scaling(r: _Run) -> dict:
    model = config.build_levy(r.cfg.table("levy"))
    hi, lo = r.cfg.get("time_exponents", [1, -16])
    times = 2.0 ** np.arange(int(hi), int(lo) - 1, -1)
    res = moment_scaling_study(model, [float(s) for s in r.cfg.get("exponents", [1.0, 2.0])], times,
                               int(r.cfg.get("samples", 10**5)), r.seed,
                               float(r.cfg.get("fit_max_time", 2.0**-4)),
                               method=r.cfg.get("method", "stratified"))
    r.csv("moments", ["s", "t", "moment"], res.rows())
    r.svg("moments", plots.loglog_svg([plots.Series(f"s={s:g}", res.times, res.estimates[i])
                                       for i, s in enumerate(res.exponents)], "E|l(t)|^s", "t", "moment"))
    if "slope_band" in r.cfg.run:
        lo_b, hi_b = r.cfg.run["slope_band"]
        for s, k in res.slopes.items():
            r.check(f"slope_s{s:g}", lo_b <= k <= hi_b)
    return r.summary(slopes={f"{s:g}": k for s, k in res.slopes.items()}, insufficient=res.insufficient,
                     method=res.method)


def cmd_converge_lp(r: _Run) -> dict:
    spec = config.build_spec(r.cfg)
    a, b = r.cfg.require("level_exponents")
    levels = [2.0**-k for k in range(int(a), int(b) + 1)]
    ecfg = mc.ExperimentConfig(
        "lp_convergence", spec, levels=levels, n_terms=r.cfg.get("n_terms"),
        coupling_nu=r.cfg.get("coupling_nu"), reference_eps=r.cfg.get("reference_eps"),
        reference_terms=r.cfg.get("reference_terms"), samples=int(r.cfg.get("samples", 30)),
        p_values=r.cfg.get("p_values", [1.0, 2.0]), seed=r.seed, grid_cells=int(r.cfg.get("grid_cells", 64)),
        fit_drop=int(r.cfg.get("fit_drop", 2)))
    res = mc.run_lp_convergence(ecfg, r.workers)
    rows = [[p, e, n, res.errors[p][j]] for p in res.errors for j, (e, n) in enumerate(zip(res.eps, res.n_terms))]
    r.csv("lp", ["p", "eps", "n_terms", "error"], rows)
    r.svg("lp", plots.loglog_svg([plots.Series(f"p={p:g}", res.eps, res.errors[p]) for p in res.errors],
                                 "strong L^p error", "eps", "error"))
    slopes = {f"{p:g}": (f.slope if f else None) for p, f in res.fits.items()}
    if "slope_tolerance" in r.cfg.run:
        tol = float(r.cfg.run["slope_tolerance"])
        for p, f in res.fits.items():
            r.check(f"slope_p{p:g}", f is not None and abs(f.slope - 1.0 / p) <= tol)
    return r.summary(slopes=slopes, samples=ecfg.samples)


def cmd_converge_cov(r: _Run) -> dict:
    spec = config.build_spec(r.cfg)
    x, y = config.build_points(r.cfg)
    ecfg = mc.ExperimentConfig("covariance_rmse", spec, seed=r.seed,
                               repetitions=int(r.cfg.get("repetitions", 100)),
                               sample_sizes=r.cfg.get("sample_sizes"),
                               cov_estimator=r.cfg.get("estimator", "known_mean"))
    res = mc.run_covariance_rmse(ecfg, x, y, r.workers)
    r.csv("rmse", ["samples", "rmse"], zip(res.sample_sizes, res.rmse))
    r.svg("rmse", plots.loglog_svg([plots.Series("RMSE", res.sample_sizes, res.rmse),
                                    plots.Series("fit", res.sample_sizes, res.fit.predict(res.sample_sizes),
                                                 dashed=True, markers=False)],
                                   "covariance estimator RMSE", "M", "RMSE"))
    if "slope_band" in r.cfg.run:
        lo, hi = r.cfg.run["slope_band"]
        r.check("slope_in_band", lo <= res.fit.slope <= hi)
    if "r2_min" in r.cfg.run:
        r.check("r2_above_min", res.fit.r2 > float(r.cfg.run["r2_min"]))
    return r.summary(exact=res.exact, slope=res.fit.slope, r2=res.fit.r2, rmse_first=float(res.rmse[0]))


def cmd_solve_pde(r: _Run) -> dict:
    from matplotlib.tri import LinearTriInterpolator, Triangulation

    from .fem.mesh import level_h, level_triangles, structured_mesh
    from .fem.study import adaptive_sequence, sample_coefficient

    problem = config.build_problem(r.cfg)
    level = int(r.cfg.get("level", 3))
    mode = r.cfg.get("mode", "standard")
    index = int(r.cfg.get("index", 0))
    a = sample_coefficient(problem.coefficient, r.seed, index)
    if mode == "standard":
        sol = problem.solve(structured_mesh(level_h(level), problem.layout), a)
    elif mode == "adaptive":
        (sol,) = adaptive_sequence(problem, a, [level_triangles(level)])
    else:
        raise config.ConfigError(f"unknown mode {mode!r}")
    n = int(r.cfg.get("grid_nodes", 100))
    grid = Grid2D.nodes(n)
    coef = a(grid.points).reshape(grid.shape)
    prov = {"config": r.cfg.name, "seed": r.seed, "index": index, "quantity": "coefficient"}
    r.field("coefficient", coef, grid.x, grid.y, prov)
    V = sol.mesh.vertices
    r.csv("solution", ["x", "y", "u"], zip(V[:, 0], V[:, 1], sol.u))
    r.csv("triangles", ["v0", "v1", "v2", "coefficient"],
          ([*t, c] for t, c in zip(sol.mesh.triangles.tolist(), sol.coefficient)))
    if r.args.svg:
        r.svg("coefficient", plots.heatmap_svg(coef, "coefficient"))
        tri = Triangulation(V[:, 0], V[:, 1], sol.mesh.triangles)
        P = grid.points
        u_grid = np.asarray(LinearTriInterpolator(tri, sol.u)(P[:, 0], P[:, 1]).filled(0.0)).reshape(grid.shape)
        r.svg("solution", plots.heatmap_svg(u_grid, "solution"))
    est = problem.estimate(sol)
    return r.summary(mode=mode, level=level, dofs=sol.dofs, triangles=sol.mesh.n_triangles,
                     u_max=float(sol.u.max()), estimator=est.total, a_min=float(sol.coefficient.min()),
                     a_max=float(sol.coefficient.max()))


def cmd_converge_fem(r: _Run) -> dict:
    from .fem.study import adaptive_dominance, strong_error_study

    problem = config.build_problem(r.cfg)
    levels = [int(v) for v in r.cfg.require("fem_levels")]
    modes = tuple(r.cfg.get("modes", ["standard", "adaptive"]))
    res = strong_error_study(problem, levels, int(r.cfg.require("reference_level")),
                             int(r.cfg.get("samples", 20)), r.seed, modes, r.workers,
                             int(r.cfg.get("fit_drop", 0)))
    rows = []
    for m in modes:
        for j, lv in enumerate(levels):
            rows.append([m, lv, res.h[j], res.mean_h[m][j], res.mean_dofs[m][j], res.rmse[m][j]])
    r.csv("rmse", ["mode", "level", "h", "h_eff", "mean_dofs", "rmse"], rows)
    r.svg("rmse", plots.loglog_svg([plots.Series(m, res.mean_dofs[m], res.rmse[m]) for m in modes],
                                   "strong H1 error", "mean dofs", "RMSE"))
    slopes = {m: (res.fits[m].slope if res.fits[m] else None) for m in modes}
    extra = {}
    if "standard_band" in r.cfg.run and slopes.get("standard") is not None:
        lo, hi = r.cfg.run["standard_band"]
        r.check("standard_slope_in_band", lo <= slopes["standard"] <= hi)
    if "adaptive_margin" in r.cfg.run and "adaptive" in modes and "standard" in modes:
        margin = float(r.cfg.run["adaptive_margin"])
        r.check("adaptive_slope_margin", slopes["adaptive"] is not None
                and slopes["adaptive"] - slopes["standard"] >= margin)
        dom = adaptive_dominance(res, 3)
        r.check("adaptive_equal_dof", all(ad <= st for ad, st in dom.values()))
        extra["equal_dof"] = {str(k): list(v) for k, v in dom.items()}
    return r.summary(slopes=slopes, samples_used=res.samples_used, failures=res.failures,
                     rmse={m: res.rmse[m].tolist() for m in modes},
                     mean_dofs={m: res.mean_dofs[m].tolist() for m in modes}, **extra)


COMMANDS = {
    "sample-field": cmd_sample_field,
    "charfn": cmd_charfn,
    "density": cmd_density,
    "covariance": cmd_covariance,
    "density-hist": cmd_density_hist,
    "moment-scaling": cmd_moment_scaling,
    "converge-lp": cmd_converge_lp,
    "converge-cov": cmd_converge_cov,
    "solve-pde": cmd_solve_pde,
    "converge-fem": cmd_converge_fem,
}


def dispatch(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run = _Run(args)
        summary = COMMANDS[args.command](run)
    except Exception as exc:  # report, do not trace
        print(io.summary_line({"command": args.command, "status": "error",
                               "error": f"{type(exc).__name__}: {exc}"}))
        return EXIT_ERROR
    print(io.summary_line(summary))
    return EXIT_OK if summary["status"] == "pass" else EXIT_CHECK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    code = dispatch(argv)
    if argv is None:
        sys.exit(code)
    return code


if __name__ == "__main__":
    main()
