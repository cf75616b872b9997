"""Figure presets: each writes the CSV tables behind one family of plots."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from . import noisedesign as nd
from .asymptotics import cramer_rao, is_finite_config, mse_of
from .densities import Family, GaussianDensity, ParametricModel, default_histogram
from .integrate import GridSpec
from .output import write_csv

MODELS = (
    (Family.GAUSS_MEAN_1D, 0.0),
    (Family.GAUSS_VAR_1D, 1.0),
    (Family.GAUSS_CORR_2D, 0.3),
)
# coarser 2-D quadrature for sweeps that evaluate thousands of configurations
SWEEP_GRID_2D = GridSpec(-8.0, 8.0, 201, 2)
HIST_GRID_2D = GridSpec(-4.0, 4.0, 161, 2)
HIST_NUS = (0.01, 1.0, 100.0)


def default_param_grid(family, theta, n=400, lo=None, hi=None):
    """Noise-parameter grid for a family: mean offsets, variance scalings, or correlations."""
    family = Family.parse(family)
    if family is Family.GAUSS_MEAN_1D:
        lo = theta - 4.0 if lo is None else lo
        hi = theta + 4.0 if hi is None else hi
    elif family is Family.GAUSS_VAR_1D:
        lo = 0.05 * theta if lo is None else lo
        hi = 8.0 * theta if hi is None else hi
    else:
        lo = -0.98 if lo is None else lo
        hi = 0.98 if hi is None else hi
    return np.linspace(lo, hi, n)


def _grid_for(family, cfg_grid):
    if cfg_grid is not None:
        return cfg_grid
    return SWEEP_GRID_2D if Family.parse(family).dims == 2 else None


def _data_params(family):
    family = Family.parse(family)
    if family is Family.GAUSS_MEAN_1D:
        return np.linspace(-1.0, 1.0, 5)
    if family is Family.GAUSS_VAR_1D:
        return np.array([0.5, 1.0, 1.5, 2.0, 3.0])
    return np.linspace(-0.8, 0.8, 9)


def fig1(ctx) -> list[Path]:
    """Best same-family noise parameter against the data parameter, ``nu = 1`` and joint."""
    files = []
    for family, _ in MODELS:
        rows = []
        grid = _grid_for(family, ctx.grid)
        for theta in _data_params(family):
            m = ParametricModel(family, theta, ctx.normalized)
            n = ctx.param_n or (400 if family.dims == 1 else 101)
            params = default_param_grid(family, theta, n, ctx.param_lo, ctx.param_hi)
            fixed = nd.optimize_noise_parametric(m, None, family, 1.0, params, loss=ctx.loss,
                                                 objective=ctx.objective, T=ctx.T, integrator=grid,
                                                 workers=ctx.threads)
            joint = nd.optimize_noise_parametric(m, None, family, "joint", params, ctx.nu_grid_coarse,
                                                 loss=ctx.loss, objective=ctx.objective, T=ctx.T,
                                                 integrator=grid, workers=ctx.threads)
            rows.append((theta, fixed.noise_param, joint.noise_param, joint.nu))
        files.append(write_csv(ctx.out / f"fig1_{family.value}.csv",
                               ["data_param", "noise_param_nu1", "noise_param_joint", "nu_joint"], rows))
    return files


def _histogram_rows(ctx, model, tag):
    files = []
    theory = nd.optimal_noise_allnoise(model).density
    for nu in HIST_NUS:
        init = _jittered_init(model, ctx.seed)
        cfg = nd.HistogramOptimizerConfig(max_iter=ctx.max_iter, projection=ctx.projection)
        grid = HIST_GRID_2D if model.dims == 2 else None
        res = nd.optimize_noise_histogram(model, None, nu, ctx.loss, ctx.objective, init, cfg, grid)
        path = ctx.out / f"{tag}_nu{nu:g}.csv"
        res.density.to_csv(path)
        files.append(path)
        files.append(write_csv(ctx.out / f"{tag}_nu{nu:g}_trace.csv", ["iter", "mse"], res.trace))
    if model.dims == 1:
        x = np.linspace(-5.0, 5.0, 1001)
        cols = [x, model.density().pdf(x), theory.pdf(x)]
        header = ["x", "p_data", "p_opt_allnoise"]
        if model.n_params == 1:
            cand = nd.alldata_candidates(model)
            cols.append(cand.relaxed_density.pdf(x))
            header.append("p_alldata_relaxed")
        files.append(write_csv(ctx.out / f"{tag}_theory.csv", header, np.column_stack(cols)))
    else:
        g = np.linspace(-4.0, 4.0, 81)
        xx, yy = np.meshgrid(g, g, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
        files.append(write_csv(ctx.out / f"{tag}_theory.csv", ["x1", "x2", "p_data", "p_opt_allnoise"],
                               np.column_stack([pts, model.density().pdf(pts), theory.pdf(pts)])))
    return files


def _jittered_init(model, seed):
    # the binned data density is a symmetric saddle at small nu; a seeded
    # multiplicative jitter breaks the tie reproducibly
    h = default_histogram(model.dims, model.density())
    rng = np.random.default_rng(seed)
    w = h.weights * np.exp(0.1 * rng.standard_normal(h.weights.shape))
    return h.with_weights(w / w.sum())


def fig2(ctx):
    files = []
    for family, theta in MODELS[:2]:
        model = ParametricModel(family, theta, True)
        files += _histogram_rows(ctx, model, f"fig2_{family.value}")
    return files


def fig3(ctx):
    family, theta = MODELS[2]
    return _histogram_rows(ctx, ParametricModel(family, theta, True), f"fig3_{family.value}")


def fig7(ctx):
    files = []
    for family, theta in MODELS[:2]:
        model = ParametricModel(family, theta, False)
        files += _histogram_rows(ctx, model, f"fig7_{family.value}")
    return files


def fig4(ctx):
    """Error against the noise-data ratio for data, best same-family and all-noise-optimal noise."""
    files = []
    for family, theta in MODELS:
        model = ParametricModel(family, theta, ctx.normalized)
        grid = _grid_for(family, ctx.grid)
        opt = nd.optimal_noise_allnoise(model, integrator=grid).density
        params = default_param_grid(family, theta, ctx.param_n or 101, ctx.param_lo, ctx.param_hi)
        rows = []
        for nu in ctx.nu_grid:
            data = is_finite_config(mse_of, model, model.density(), nu, ctx.T, ctx.loss, grid, ctx.objective)
            best = nd.optimize_noise_parametric(model, None, family, nu, params, loss=ctx.loss,
                                                objective=ctx.objective, T=ctx.T, integrator=grid,
                                                workers=ctx.threads).mse
            o = is_finite_config(mse_of, model, opt, nu, ctx.T, ctx.loss, grid, ctx.objective)
            cr = cramer_rao(model, None, grid, ctx.T / (1.0 + nu)) if model.normalized else float("nan")
            rows.append((nu, data, best, o, cr))
        files.append(write_csv(ctx.out / f"fig4_{family.value}.csv",
                               ["nu", "mse_data_noise", "mse_param_noise", "mse_opt_noise", "cramer_rao"], rows))
    return files


def fig5(ctx):
    """Best noise-data ratio against the noise parameter."""
    files = []
    for family, theta in MODELS:
        model = ParametricModel(family, theta, ctx.normalized)
        grid = _grid_for(family, ctx.grid)
        params = default_param_grid(family, theta, ctx.param_n or 41, ctx.param_lo, ctx.param_hi)
        rows = []
        for p in params:
            p_n = nd.noise_from_family(family, p)
            try:
                nu_star, mse, _ = nd.optimize_nu(model, None, p_n, ctx.loss, ctx.nu_grid, ctx.T, grid, ctx.objective)
            except nd.AllCandidatesInfeasible:
                nu_star, mse = float("nan"), float("inf")
            rows.append((p, nu_star, mse))
        files.append(write_csv(ctx.out / f"fig5_{family.value}.csv", ["noise_param", "nu_star", "mse"], rows))
    return files


def fig6(ctx):
    """Error landscape over the noise parameter at the configured ``nu``."""
    files = []
    for family, theta in MODELS:
        model = ParametricModel(family, theta, ctx.normalized)
        files.append(landscape(ctx, model, ctx.out / f"fig6_{family.value}.csv"))
    return files


def landscape(ctx, model, path):
    grid = _grid_for(model.family, ctx.grid)
    params = default_param_grid(model.family, model.theta, ctx.param_n or 400, ctx.param_lo, ctx.param_hi)
    res = nd.optimize_noise_parametric(model, None, model.family, ctx.nu, params, loss=ctx.loss,
                                       objective=ctx.objective, T=ctx.T, integrator=grid, workers=ctx.threads)
    return write_csv(path, ["noise_param", "mse"], [(p, m) for p, _, m in res.table])


PRESET_FUNCS = {"fig1": fig1, "fig2": fig2, "fig3": fig3, "fig4": fig4, "fig5": fig5, "fig6": fig6, "fig7": fig7}
