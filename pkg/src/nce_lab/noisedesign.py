"""Optimal noise distributions and numerical noise / noise-ratio optimizers.

Closed-form constructions reweight the data density by a function of the
generalized score: ``||I^-1 psi||`` minimizes the parametric error and
``||I^-1/2 psi||`` the non-parametric one when noise dominates. When data
dominates, the optimum degenerates to point masses at the maxima of
``p_d psi^2`` (or ``p_d |psi|``), which we report as grid candidates.

The numerical optimizers minimize the asymptotic error over a parametric
noise family on a grid, over a histogram noise by projected nonlinear
conjugate gradient, or over the noise-data ratio.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .asymptotics import at_beta, mse_of, sym_inverse, sym_power
from .bregman import Loss, as_loss
from .densities import (
    Density,
    Family,
    HistogramDensity,
    HistogramDensity2D,
    ParametricModel,
    ReweightedDensity,
    fisher_matrices,
)
from .errors import (
    AllCandidatesInfeasible,
    DegenerateInformation,
    DomainError,
    LineSearchFailure,
    NumericalError,
    UnsupportedModel,
)
from .integrate import GridSpec, default_grid, integrate_values
from .parallel import parallel_map

PARAMETRIC = "parametric"
NONPARAMETRIC = "nonparametric"
_OBJECTIVE_ALIASES = {"parametric": PARAMETRIC, "mse": PARAMETRIC,
                      "nonparametric": NONPARAMETRIC, "kl": NONPARAMETRIC}


def parse_objective(objective) -> str:
    try:
        return _OBJECTIVE_ALIASES[str(objective).lower()]
    except KeyError:
        raise DomainError(f"unknown objective {objective!r}; expected parametric or nonparametric") from None


def log_nu_grid(lo_decade: int = -2, hi_decade: int = 2, per_decade: int = 20) -> np.ndarray:
    """Logarithmic grid ``10**(k/per_decade)``; contains 1 exactly."""
    k = np.arange(lo_decade * per_decade, hi_decade * per_decade + 1)
    return 10.0 ** (k / per_decade)


# --------------------------------------------------------------------------
# all-noise limit


@dataclass(frozen=True)
class OptimalNoiseResult:
    density: ReweightedDensity
    weight_kind: str
    normalizer: float


def _weight_exponent(objective):
    return 1.0 if parse_objective(objective) == PARAMETRIC else 0.5


def score_weight(model, objective=PARAMETRIC, integrator: GridSpec | None = None):
    """Callable ``x -> ||I^-e psi(x)||`` with ``e = 1`` or ``1/2``."""
    I = fisher_matrices(model, integrator).I
    M = sym_power(I, -_weight_exponent(objective))

    def weight(x):
        return np.linalg.norm(model.score(x) @ M.T, axis=1)

    return weight


def optimal_noise_allnoise(model, beta_star=None, objective=PARAMETRIC,
                           integrator: GridSpec | None = None) -> OptimalNoiseResult:
    """Noise density proportional to ``p_d ||I^-e psi||`` (``e = 1`` or ``1/2``)."""
    model = at_beta(model, beta_star)
    grid = integrator or default_grid(model.dims)
    weight = score_weight(model, objective, grid)

    def log_weight(x):
        with np.errstate(divide="ignore"):
            return np.log(weight(x))

    kind = "W1_param_allnoise" if parse_objective(objective) == PARAMETRIC else "W3_nonparam_allnoise"
    dens = ReweightedDensity(model.density().logpdf, log_weight, grid, name=f"optimal:{kind}")
    return OptimalNoiseResult(dens, kind, dens.normalizer)


@dataclass(frozen=True)
class GapReport:
    gap_pd_vs_opt: float
    gap_opt_vs_cr: Optional[float]
    var_w1: float
    mean_w1: float


def mse_gaps_allnoise(model, beta_star=None, integrator: GridSpec | None = None, T: float = 1.0) -> GapReport:
    """Error gaps in the all-noise limit: data noise vs optimum, optimum vs efficiency."""
    model = at_beta(model, beta_star)
    grid = integrator or default_grid(model.dims)
    w1 = score_weight(model, PARAMETRIC, grid)(grid.points)
    pd = model.density().pdf(grid.points)
    mean = float(integrate_values(pd * w1, grid))
    second = float(integrate_values(pd * w1 * w1, grid))
    var = second - mean * mean
    cr_gap = mean * mean / T if getattr(model, "normalized", False) else None
    return GapReport(var / T, cr_gap, var, mean)


# --------------------------------------------------------------------------
# all-data limit


@dataclass(frozen=True)
class DiracCandidate:
    location: float
    score: float
    objective: float


@dataclass(frozen=True)
class DiracCandidateSet:
    points: list
    relaxed_density: Optional[Density] = None

    @property
    def locations(self) -> np.ndarray:
        return np.array([p.location for p in self.points])


def alldata_candidates(model, beta_star=None, objective=PARAMETRIC, grid: GridSpec | None = None,
                       temperature: float = 0.01) -> DiracCandidateSet:
    """Local maxima of ``p_d psi^2`` (or ``p_d |psi|``) on a 1-D grid.

    Also returns the softmax relaxation ``exp(log(p_d w) / temperature)``,
    normalized on the grid.
    """
    model = at_beta(model, beta_star)
    if model.n_params != 1:
        raise UnsupportedModel("point-mass candidates are defined for a scalar parameter only")
    if model.dims != 1:
        raise UnsupportedModel("point-mass candidates are computed on one-dimensional grids")
    if not temperature > 0:
        raise DomainError("temperature must be positive")
    grid = grid or default_grid(1)
    x = grid.points
    psi = model.score(x)[:, 0]
    w = psi ** 2 if parse_objective(objective) == PARAMETRIC else np.abs(psi)
    obj = model.density().pdf(x) * w

    left = np.r_[-np.inf, obj[:-1]]
    right = np.r_[obj[1:], -np.inf]
    # strict on the left so that a flat top yields its leftmost node only
    is_max = (obj > left) & (obj >= right) & (obj > 0)
    idx = np.nonzero(is_max)[0]
    idx = idx[np.argsort(-obj[idx], kind="stable")]
    points = [DiracCandidate(float(x[i]), float(psi[i]), float(obj[i])) for i in idx]

    log_peak = math.log(obj.max())

    def log_relaxed(z):
        zpsi = model.score(z)[:, 0]
        zw = zpsi ** 2 if parse_objective(objective) == PARAMETRIC else np.abs(zpsi)
        with np.errstate(divide="ignore"):
            return (model.density().logpdf(z) + np.log(zw) - log_peak) / temperature

    relaxed = ReweightedDensity(lambda z: np.zeros(np.shape(z)[0]), log_relaxed, grid,
                                name=f"relaxed:tau={temperature:g}")
    return DiracCandidateSet(points, relaxed)


# --------------------------------------------------------------------------
# parametric noise family on a grid


@dataclass
class ParametricNoiseResult:
    noise_param: float
    nu: float
    mse: float
    skipped: list = field(default_factory=list)
    table: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.noise_param, self.nu, self.mse))


def noise_from_family(family, param) -> Density:
    return ParametricModel(Family.parse(family), float(param)).density()


def _safe_mse(model, p_n, nu, T, loss, objective, integrator):
    try:
        val = mse_of(model, p_n, nu, T, loss, integrator, objective)
    except NumericalError:
        return math.inf
    return val if math.isfinite(val) else math.inf


def _argmin_smallest(values, params, rtol=1e-12):
    # among (near-)ties, prefer the smallest parameter
    values = np.asarray(values)
    best = values.min()
    near = np.nonzero(values <= best + rtol * abs(best))[0]
    return near[np.argmin(np.asarray(params)[near])]


def optimize_noise_parametric(model, beta_star=None, noise_family=None, nu=1.0, param_grid=None,
                              nu_grid=None, loss="js", objective=PARAMETRIC, T=1.0,
                              integrator: GridSpec | None = None, workers: int | None = None
                              ) -> ParametricNoiseResult:
    """Grid search for the best noise parameter (and optionally ``nu``).

    ``nu`` is either a positive number (fixed ratio) or the string ``"joint"``,
    in which case ``nu_grid`` is searched as well. Non-finite candidates are
    skipped and listed in the result.
    """
    model = at_beta(model, beta_star)
    family = Family.parse(noise_family or model.family)
    objective = parse_objective(objective)
    if param_grid is None or len(param_grid) == 0:
        raise DomainError("param_grid must be nonempty")
    if isinstance(nu, str):
        if nu != "joint":
            raise DomainError(f"nu must be a number or 'joint', got {nu!r}")
        nus = np.asarray(nu_grid if nu_grid is not None else log_nu_grid(), dtype=np.float64)
    else:
        nus = np.array([float(nu)])
    params = np.asarray(param_grid, dtype=np.float64)

    def row(p):
        try:
            p_n = noise_from_family(family, p)
        except NumericalError:
            return [math.inf] * len(nus)
        return [_safe_mse(model, p_n, v, T, loss, objective, integrator) for v in nus]

    grid_vals = np.array(parallel_map(row, params, workers=workers))
    table = [(float(p), float(v), float(grid_vals[i, j])) for i, p in enumerate(params) for j, v in enumerate(nus)]
    skipped = [(p, v) for p, v, m in table if not math.isfinite(m)]
    if len(skipped) == len(table):
        raise AllCandidatesInfeasible("every grid candidate produced a non-finite error")
    flat = grid_vals.ravel()
    pflat = np.repeat(params, len(nus))
    k = _argmin_smallest(flat, pflat)
    i, j = divmod(int(k), len(nus))
    return ParametricNoiseResult(float(params[i]), float(nus[j]), float(flat[k]), skipped, table)


def optimize_nu(model, beta_star=None, p_n=None, loss="js", nu_grid=None, T=1.0,
                integrator: GridSpec | None = None, objective=PARAMETRIC):
    """Best noise-data ratio on a grid at a fixed budget ``T``; returns ``(nu_star, mse, curve)``."""
    model = at_beta(model, beta_star)
    p_n = p_n if p_n is not None else model.density()
    nus = np.asarray(nu_grid if nu_grid is not None else log_nu_grid(), dtype=np.float64)
    if np.any(nus <= 0):
        raise DomainError("nu grid must be positive")
    vals = np.array([_safe_mse(model, p_n, v, T, loss, objective, integrator) for v in nus])
    if not np.any(np.isfinite(vals)):
        raise AllCandidatesInfeasible("no noise-data ratio on the grid gives a finite error")
    k = _argmin_smallest(vals, nus)
    return float(nus[k]), float(vals[k]), np.column_stack([nus, vals])


# --------------------------------------------------------------------------
# histogram noise


@dataclass(frozen=True)
class HistogramOptimizerConfig:
    max_iter: int = 100
    fd_step: float = 1e-6
    projection: str = "clip"  # or "softmax"
    ftol: float = 1e-12
    armijo: float = 1e-4
    max_backtracks: int = 60
    max_expansions: int = 30
    initial_step: float = 0.05
    max_step: float = 0.5
    restart_every: int = 0  # 0: number of free weights
    # scale the clip-mode gradient by the bin weights (floored at floor/K)
    precondition: bool = True
    precondition_floor: float = 1e-3

    def __post_init__(self):
        if self.projection not in ("clip", "softmax"):
            raise DomainError(f"unknown projection {self.projection!r}")
        if self.max_iter < 1 or not self.fd_step > 0:
            raise DomainError("max_iter and fd_step must be positive")


@dataclass
class HistogramResult:
    density: Density
    trace: list
    iterations: int
    converged: bool
    mse_initial: float
    mse_final: float


class _HistogramObjective:
    """Asymptotic error as a function of histogram bin weights.

    The noise density at each grid node is a fixed linear map of the bin
    densities, so perturbing one bin changes a handful of nodes only; the
    finite-difference gradient exploits this by updating the score moments
    locally.
    """

    def __init__(self, model, nu, loss, objective, hist, grid):
        self.nu = float(nu)
        self.loss = as_loss(loss)
        self.objective = parse_objective(objective)
        self.hist = hist
        x = grid.points
        self.q = np.asarray(grid.weights)
        self.log_pd = model.density().logpdf(x)
        self.psi = model.score(x)
        self.outer = self.psi[:, :, None] * self.psi[:, None, :]
        A = hist.node_matrix(x).tocsc()
        self.A = A.tocsr()
        self.cols = [(A.indices[A.indptr[j]:A.indptr[j + 1]], A.data[A.indptr[j]:A.indptr[j + 1]])
                     for j in range(A.shape[1])]
        self.size = hist.weights.size
        self.volume = (hist.widths if isinstance(hist, HistogramDensity) else hist.areas).ravel()
        pd = np.exp(self.log_pd)
        self.I = np.einsum("n,n,nij->ij", self.q, pd, self.outer)

    def node_terms(self, pn, idx=slice(None)):
        """Quadrature-weighted ``w p_d`` and ``v p_d`` at the selected nodes."""
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            l = self.log_pd[idx] - math.log(self.nu) - np.log(pn)
            wp = np.exp(self.loss.log_w(l) + self.log_pd[idx])
            vp = np.exp(self.loss.log_v(l) + self.log_pd[idx])
        return self.q[idx] * wp, self.q[idx] * vp

    def moments(self, a, b, idx=slice(None)):
        psi = self.psi[idx]
        outer = self.outer[idx]
        return a @ psi, np.tensordot(a, outer, axes=(0, 0)), np.tensordot(b, outer, axes=(0, 0))

    def value_from_moments(self, m, Iw, Iv):
        if not (np.all(np.isfinite(Iw)) and np.all(np.isfinite(Iv))):
            return math.inf
        try:
            inv = sym_inverse(Iw, "reweighted information I_w")
        except DegenerateInformation:
            return math.inf
        sigma = inv @ (Iv - (1.0 + 1.0 / self.nu) * np.outer(m, m)) @ inv
        if self.objective == PARAMETRIC:
            return float((self.nu + 1.0) * np.trace(sigma))
        return float(0.5 * (self.nu + 1.0) * np.trace(sigma @ self.I))

    def state(self, weights):
        pn = self.A @ (weights / self.volume)
        a, b = self.node_terms(pn)
        m, Iw, Iv = self.moments(a, b)
        return pn, a, b, m, Iw, Iv

    def value(self, weights):
        _, _, _, m, Iw, Iv = self.state(weights)
        return self.value_from_moments(m, Iw, Iv)

    def _shifted(self, st, j, delta):
        pn, a, b, m, Iw, Iv = st
        rows, coef = self.cols[j]
        new_pn = pn[rows] + coef * (delta / self.volume[j])
        if np.any(new_pn < 0):
            return math.inf
        a2, b2 = self.node_terms(new_pn, rows)
        da, db = a2 - a[rows], b2 - b[rows]
        if not (np.all(np.isfinite(da)) and np.all(np.isfinite(db))):
            return math.inf
        dm, dIw, dIv = self.moments(da, db, rows)
        return self.value_from_moments(m + dm, Iw + dIw, Iv + dIv)

    def gradient(self, weights, h):
        """Finite-difference gradient in all ``K`` bin weights."""
        st = self.state(weights)
        f0 = self.value_from_moments(*st[3:])
        g = np.empty(self.size)
        for j in range(self.size):
            if weights[j] >= h:
                g[j] = (self._shifted(st, j, h) - self._shifted(st, j, -h)) / (2.0 * h)
            else:
                g[j] = (self._shifted(st, j, h) - f0) / h
        return f0, g


def _softmax(u):
    z = np.exp(u - u.max())
    return z / z.sum()


def _project(weights):
    w = np.maximum(weights, 0.0)
    s = w.sum()
    if not s > 0:
        raise LineSearchFailure("projection onto the simplex lost all mass")
    return w / s


def optimize_noise_histogram(model, beta_star=None, nu=1.0, loss="js", objective=PARAMETRIC,
                             histogram_init=None, optimizer_cfg: HistogramOptimizerConfig | None = None,
                             integrator: GridSpec | None = None) -> HistogramResult:
    """Local minimizer of the asymptotic error over histogram bin weights.

    Polak-Ribiere+ nonlinear conjugate gradient on the free weights (all but
    the last, which takes up the remaining mass), with finite-difference
    gradients, Armijo backtracking with step expansion, and clip-and-
    renormalize projection after each line search.

    Search directions are kept in the full weight space with zero sum, which
    is the same as moving the free weights and letting the last absorb the
    change. By default the gradient is scaled bin-wise by the current weight:
    bins in the data tails carry tiny mass but large curvature, and without
    the scaling fixed-length steps overshoot there.
    """
    from .densities import default_histogram

    cfg = optimizer_cfg or HistogramOptimizerConfig()
    model = at_beta(model, beta_star)
    if not nu > 0:
        raise DomainError("nu must be positive")
    hist = histogram_init if histogram_init is not None else default_histogram(model.dims, model.density())
    if integrator is None:
        integrator = _histogram_grid(hist)
    obj = _HistogramObjective(model, nu, loss, objective, hist, integrator)
    K = obj.size
    h = cfg.fd_step

    if cfg.projection == "softmax":
        with np.errstate(divide="ignore"):
            x = np.log(np.maximum(hist.weights.ravel(), 1e-300))
        to_w = _softmax
        project = lambda v: v

        def fg(v):
            w = to_w(v)
            f, gw = obj.gradient(w, h)
            g = w * (gw - w @ gw)
            return f, g, g
    else:
        # full weight vector; search directions sum to zero, so the last
        # weight stays determined by the others
        x = hist.weights.ravel().copy()
        to_w = lambda v: v
        project = _project
        floor = cfg.precondition_floor / K

        def fg(v):
            f, g = obj.gradient(v, h)
            p = np.maximum(v, floor) if cfg.precondition else np.ones(K)
            z = p * (g - (p @ g) / p.sum())
            return f, g, z

    value = lambda v: obj.value(to_w(v))
    f, g, z = fg(x)
    if not math.isfinite(f):
        raise DegenerateInformation("the initial histogram gives a non-finite error")
    f_init = f
    trace = [(0, f)]
    d = -z
    g_prev, z_prev = g, z
    restart_every = cfg.restart_every or K - 1
    step = cfg.initial_step
    converged = False
    it = 0
    since_restart = 0
    for it in range(1, cfg.max_iter + 1):
        if not g @ d < 0:
            d = -z
            since_restart = 0
        if not g @ d < 0:
            converged = True
            break
        x_new, f_new = _line_search(value, x, f, g, d, step / max(np.max(np.abs(d)), 1e-300), project, cfg)
        if x_new is None and since_restart > 0:
            # retry once along the preconditioned steepest descent
            d = -z
            since_restart = 0
            x_new, f_new = _line_search(value, x, f, g, d, step / max(np.max(np.abs(d)), 1e-300), project, cfg)
        if x_new is None:
            if it == 1:
                raise LineSearchFailure("no descent step from the initial histogram")
            converged = True
            break
        step = min(max(np.max(np.abs(x_new - x)), 1e-12) * 2.0, cfg.max_step)
        decrease = f - f_new
        x = x_new
        f, g, z = fg(x)
        trace.append((it, f))
        if decrease <= cfg.ftol * max(abs(f), 1.0):
            converged = True
            break
        since_restart += 1
        beta = max(0.0, z @ (g - g_prev) / max(z_prev @ g_prev, 1e-300))
        if since_restart >= restart_every:
            beta, since_restart = 0.0, 0
        d = -z + beta * d
        g_prev, z_prev = g, z

    weights = _project(to_w(x))
    out = hist.with_weights(weights if isinstance(hist, HistogramDensity) else weights.reshape(hist.weights.shape))
    return HistogramResult(out, trace, it, converged, f_init, obj.value(weights))


def _line_search(fg_value, u, f, g, d, alpha, project, cfg):
    """Projected Armijo backtracking that first tries to expand the step."""
    def trial(a):
        v = project(u + a * d)
        return v, fg_value(v)

    v, fv = trial(alpha)
    ok = lambda v, fv: math.isfinite(fv) and fv <= f + cfg.armijo * (g @ (v - u)) and fv < f
    if ok(v, fv):
        for _ in range(cfg.max_expansions):
            v2, f2 = trial(2.0 * alpha)
            if not (ok(v2, f2) and f2 < fv):
                break
            alpha, v, fv = 2.0 * alpha, v2, f2
        return v, fv
    for _ in range(cfg.max_backtracks):
        alpha *= 0.5
        v, fv = trial(alpha)
        if ok(v, fv):
            return v, fv
    return None, None


def _histogram_grid(hist) -> GridSpec:
    """Quadrature grid whose nodes include every bin edge."""
    if isinstance(hist, HistogramDensity):
        lo, hi, widths = hist.edges[0], hist.edges[-1], np.diff(hist.edges)
        dims = 1
    else:
        lo, hi, widths = hist.xedges[0], hist.xedges[-1], np.diff(hist.xedges)
        dims = 2
    per_bin = 20 if dims == 1 else 4
    n = int(round((hi - lo) / widths.min())) * per_bin + 1
    if dims == 1:
        # keep the data tails inside the domain
        pad = max(0.0, 10.0 - max(abs(lo), abs(hi)))
        if pad > 0:
            h = (hi - lo) / (n - 1)
            extra = int(round(pad / h))
            return GridSpec(lo - extra * h, hi + extra * h, n + 2 * extra, 1)
    return GridSpec(lo, hi, n, dims)


def binned_total_variation(hist, density, integrator: GridSpec | None = None) -> float:
    """Half the L1 distance between histogram weights and a density's bin masses."""
    from .densities import _bin_mass_1d

    if not isinstance(hist, HistogramDensity):
        raise UnsupportedModel("binned total variation is implemented for 1-D histograms")
    masses = _bin_mass_1d(density, hist.edges)
    masses = masses / masses.sum()
    return 0.5 * float(np.abs(hist.weights - masses).sum())


def mass_near(hist, centres: Sequence[float], radius: float) -> float:
    """Histogram mass within ``radius`` of any of the ``centres`` (exact for partial bins)."""
    lo, hi = hist.edges[:-1], hist.edges[1:]
    dens = hist.weights / (hi - lo)
    ivals = sorted((c - radius, c + radius) for c in centres)
    merged = []
    for a, b in ivals:
        if merged and a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    total = 0.0
    for a, b in merged:
        overlap = np.clip(np.minimum(hi, b) - np.maximum(lo, a), 0.0, None)
        total += float(dens @ overlap)
    return total
