"""Command-line experiment runner.

Every subcommand reads the same flat configuration; values may come from a
TOML file (``--config`` or ``run FILE``) and are overridden by flags. Outputs
are CSV/JSON files in the output directory plus a ``run_report.json``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import noisedesign as nd
from . import presets
from .asymptotics import mse_report
from .bregman import Loss
from .config import COMMANDS, PRESETS, ExperimentConfig, load_file, merge, validate
from .densities import Family, ParametricModel, default_histogram, parse_density
from .empirical import empirical_mse, z_benchmark
from .errors import ConfigError, NceLabError, NumericalError
from .integrate import GridSpec, default_grid
from .output import gnuplot_script, plot_csv, write_csv, write_json
from .parallel import worker_count

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


@dataclass
class RunReport:
    config: dict
    input_hash: str
    files: list
    wall_clock_seconds: float


@dataclass
class Context:
    """Resolved run settings shared by subcommands and presets."""

    cfg: ExperimentConfig
    out: Path
    model: ParametricModel
    losses: list
    grid: Optional[GridSpec]
    nu_grid: np.ndarray
    nu_grid_coarse: np.ndarray
    threads: int

    def __getattr__(self, name):
        return getattr(self.cfg, name)

    @property
    def loss(self):
        return self.losses[0]


def _grid(cfg: ExperimentConfig, dims: int) -> Optional[GridSpec]:
    if cfg.grid_lo is None and cfg.grid_hi is None and cfg.grid_n is None:
        return None
    base = default_grid(dims)
    try:
        return GridSpec(cfg.grid_lo if cfg.grid_lo is not None else base.lo,
                        cfg.grid_hi if cfg.grid_hi is not None else base.hi,
                        cfg.grid_n if cfg.grid_n is not None else base.n, dims)
    except NceLabError as exc:
        raise ConfigError(f"invalid integration grid: {exc}") from None


def _context(cfg: ExperimentConfig) -> Context:
    family = Family.parse(cfg.model)
    theta = cfg.theta if cfg.theta is not None else (1.0 if family is Family.GAUSS_VAR_1D else 0.0)
    try:
        model = ParametricModel(family, theta, cfg.normalized)
    except NceLabError as exc:
        raise ConfigError(f"invalid model parameter: {exc}") from None
    losses = cfg.loss if isinstance(cfg.loss, list) else str(cfg.loss).split(",")
    nu_grid = np.asarray(cfg.nu_grid, dtype=np.float64) if cfg.nu_grid else nd.log_nu_grid()
    coarse = np.asarray(cfg.nu_grid, dtype=np.float64) if cfg.nu_grid else nd.log_nu_grid(per_decade=5)
    return Context(cfg, Path(cfg.output), model, [Loss.parse(l).value for l in losses],
                   _grid(cfg, model.dims), nu_grid, coarse, worker_count(cfg.threads))


def _noise(ctx: Context, spec: Optional[str] = None):
    spec = spec or ctx.cfg.noise
    if spec == "optimal":
        return nd.optimal_noise_allnoise(ctx.model, objective="parametric", integrator=ctx.grid).density
    if spec == "optimal-kl":
        return nd.optimal_noise_allnoise(ctx.model, objective="nonparametric", integrator=ctx.grid).density
    try:
        return parse_density(spec, ctx.model)
    except NceLabError as exc:
        raise ConfigError(f"field 'noise': {exc}") from None


def _nus(ctx: Context):
    if ctx.cfg.nu_grid:
        return list(ctx.nu_grid)
    if ctx.cfg.nu == "joint":
        raise ConfigError("field 'nu' may be 'joint' only for optimize-noise")
    return [float(ctx.cfg.nu)]


# --------------------------------------------------------------------------
# subcommands


def cmd_mse(ctx: Context):
    p_n = _noise(ctx)
    rows = []
    for loss in ctx.losses:
        for nu in _nus(ctx):
            try:
                rep = mse_report(ctx.model, p_n, nu, ctx.T, loss, ctx.grid, noise_id=ctx.cfg.noise)
            except NumericalError as exc:
                raise type(exc)(f"row loss={loss} nu={nu:g}: {exc}") from exc
            rows.append((ctx.model.family.value, ctx.model.theta, not ctx.model.normalized, loss, nu, ctx.T,
                         ctx.cfg.noise, rep.mse_param, rep.mse_nonparam,
                         rep.cramer_rao if rep.cramer_rao is not None else float("nan")))
    header = ["model", "theta", "unnormalized", "loss", "nu", "T", "noise_id",
              "mse_param", "mse_nonparam", "cramer_rao"]
    return [write_csv(ctx.out / "mse.csv", header, rows)]


def cmd_zbench(ctx: Context):
    try:
        p_d = parse_density(ctx.cfg.data)
    except NceLabError as exc:
        raise ConfigError(f"field 'data': {exc}") from None
    p_n = parse_density(ctx.cfg.noise, None) if ctx.cfg.noise != "data" else p_d
    files = []
    for loss in ctx.losses:
        rep = z_benchmark(loss, p_d, p_n, float(ctx.cfg.nu), ctx.T, ctx.reps, ctx.seed, ctx.z_star,
                          ctx.grid, workers=ctx.threads)
        tag = "" if len(ctx.losses) == 1 else f"_{loss}"
        files.append(write_csv(ctx.out / f"zbench{tag}.csv", ["replicate", "z_hat"], enumerate(rep.z_hats)))
        files.append(write_json(ctx.out / f"zbench{tag}.json", {
            "mse_empirical": rep.mse_empirical, "mse_theory": rep.mse_theory, "stderr": rep.stderr}))
    return files


def cmd_optimize_noise(ctx: Context):
    if ctx.cfg.mode == "histogram":
        if ctx.cfg.nu == "joint":
            raise ConfigError("histogram mode needs a numeric 'nu'")
        init = None
        if ctx.cfg.noise.startswith("hist:"):
            init = _noise(ctx)
        elif ctx.model.dims == 1 or ctx.cfg.noise == "data":
            init = default_histogram(ctx.model.dims, ctx.model.density())
        cfg = nd.HistogramOptimizerConfig(max_iter=ctx.max_iter, projection=ctx.projection)
        grid = ctx.grid or (presets.HIST_GRID_2D if ctx.model.dims == 2 else None)
        res = nd.optimize_noise_histogram(ctx.model, None, float(ctx.cfg.nu), ctx.loss, ctx.objective,
                                          init, cfg, grid)
        path = ctx.out / "histogram.csv"
        res.density.to_csv(path)
        return [path, write_csv(ctx.out / "trace.csv", ["iter", "mse"], res.trace)]
    params = presets.default_param_grid(ctx.model.family, ctx.model.theta, ctx.param_n or 400,
                                        ctx.param_lo, ctx.param_hi)
    grid = presets._grid_for(ctx.model.family, ctx.grid)
    res = nd.optimize_noise_parametric(ctx.model, None, ctx.model.family, ctx.cfg.nu, params,
                                       ctx.nu_grid if ctx.cfg.nu == "joint" else None, ctx.loss,
                                       ctx.objective, ctx.T, grid, workers=ctx.threads)
    return [
        write_csv(ctx.out / "optimal_noise.csv", ["noise_param", "nu", "mse"],
                  [(res.noise_param, res.nu, res.mse)]),
        write_csv(ctx.out / "trace.csv", ["iter", "mse"], [(i, m) for i, (_, _, m) in enumerate(res.table)]),
    ]


def cmd_optimize_nu(ctx: Context):
    nu_star, mse, curve = nd.optimize_nu(ctx.model, None, _noise(ctx), ctx.loss, ctx.nu_grid, ctx.T,
                                         ctx.grid, ctx.objective)
    return [
        write_csv(ctx.out / "nu_mse.csv", ["nu", "mse"], curve),
        write_json(ctx.out / "nu_star.json", {"nu_star": nu_star, "mse": mse}),
    ]


def cmd_validate(ctx: Context):
    nu = float(ctx.cfg.nu)
    rep = empirical_mse(ctx.model, None, _noise(ctx), nu, ctx.T, ctx.loss, ctx.reps, ctx.seed,
                        integrator=ctx.grid, workers=ctx.threads)
    header = ["replicate"] + [f"beta_{i}" for i in range(rep.beta_hats.shape[1])]
    rows = [(i, *b) for i, b in enumerate(rep.beta_hats)]
    return [
        write_csv(ctx.out / "validate_betas.csv", header, rows),
        write_json(ctx.out / "validate.json", {
            "mse_hat": rep.mse_hat, "std_err": rep.std_err, "n_replicates": rep.n_replicates,
            "n_dropped": rep.n_dropped, "mse_asymptotic": rep.mse_asymptotic,
            "mean_beta": rep.mean_beta, "initialization": rep.initialization}),
    ]


def cmd_landscape(ctx: Context):
    if ctx.cfg.nu == "joint":
        raise ConfigError("landscape needs a numeric 'nu'")
    return [presets.landscape(ctx, ctx.model, ctx.out / "landscape.csv")]


def cmd_preset(ctx: Context):
    return presets.PRESET_FUNCS[ctx.cfg.preset](ctx)


HANDLERS = {
    "mse": cmd_mse, "zbench": cmd_zbench, "optimize-noise": cmd_optimize_noise,
    "optimize-nu": cmd_optimize_nu, "validate": cmd_validate, "landscape": cmd_landscape,
    "preset": cmd_preset,
}


def run(config: ExperimentConfig) -> RunReport:
    """Execute one validated configuration and write its outputs."""
    start = time.perf_counter()
    ctx = _context(config)
    ctx.out.mkdir(parents=True, exist_ok=True)
    files = [Path(f) for f in HANDLERS[config.command](ctx)]
    extras = []
    for f in files:
        if f.suffix != ".csv":
            continue
        if config.gnuplot:
            extras.append(gnuplot_script(f))
        if config.plot:
            extras.append(plot_csv(f))
    files += extras
    report = RunReport(asdict(config), config.digest(), [str(f) for f in files],
                       time.perf_counter() - start)
    write_json(ctx.out / "run_report.json", asdict(report))
    return report


# --------------------------------------------------------------------------
# argument parsing


def _nu_value(text):
    if text == "joint":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'joint', got {text!r}") from None


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="TOML file with default values for this run")
    p.add_argument("--model", help="gauss_mean, gauss_var or gauss_corr")
    p.add_argument("--theta", type=float, help="true model parameter")
    p.add_argument("--unnormalized", dest="normalized", action="store_const", const=False, default=None,
                   help="estimate the log-normalizer as an extra parameter")
    p.add_argument("--noise", help="data | optimal | optimal-kl | param:V | normal:M,V | corr:R | hist:FILE")
    p.add_argument("--data", help="data density for zbench (default normal:0,1)")
    p.add_argument("--z-star", dest="z_star", type=float)
    p.add_argument("--nu", type=_nu_value, help="noise-data ratio, or 'joint'")
    p.add_argument("--nu-grid", dest="nu_grid", type=_float_list, help="comma-separated ratios")
    p.add_argument("--loss", help="kl, revkl, js or h2 (comma-separated for several)")
    p.add_argument("--T", "-T", dest="T", type=float, help="total sample budget")
    p.add_argument("--objective", choices=["parametric", "nonparametric", "mse", "kl"])
    p.add_argument("--mode", choices=["parametric", "histogram"])
    p.add_argument("--param-lo", dest="param_lo", type=float)
    p.add_argument("--param-hi", dest="param_hi", type=float)
    p.add_argument("--param-n", dest="param_n", type=int)
    p.add_argument("--grid-lo", dest="grid_lo", type=float)
    p.add_argument("--grid-hi", dest="grid_hi", type=float)
    p.add_argument("--grid-n", dest="grid_n", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--projection", choices=["clip", "softmax"])
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--output", "-o")
    p.add_argument("--gnuplot", action="store_const", const=True, default=None,
                   help="also write a gnuplot script per CSV")
    p.add_argument("--plot", action="store_const", const=True, default=None,
                   help="also render a PNG per CSV with matplotlib")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nce-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        if name == "preset":
            p.add_argument("preset", choices=PRESETS)
        _add_common(p)
    p = sub.add_parser("run", help="run a configuration file")
    p.add_argument("config_file")
    _add_common(p)
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    values = dict(vars(args))
    file_values = {}
    if values.get("config_file"):
        file_values = load_file(values.pop("config_file"))
    if values.get("config"):
        file_values = merge(file_values, load_file(values["config"]))
    values.pop("config", None)
    values.pop("config_file", None)
    if values.get("command") == "run":
        values.pop("command")
    return validate(merge(file_values, values))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = config_from_args(args)
        report = run(cfg)
    except ConfigError as exc:
        print(f"nce-lab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"nce-lab: numerical failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for f in report.files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
