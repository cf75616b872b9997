"""Finite-sample NCE fits and Monte-Carlo error estimates.

Each replicate draws fresh data and noise samples from a seed derived from
the base seed and the replicate index, fits the model starting from the
true parameter, and records the squared error. The spread of the replicate
average is assessed by a bootstrap over replicates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .asymptotics import at_beta, mse_nonparametric, mse_parametric, score_moments, sigma_matrix
from .bregman import as_loss, log_ratio
from .divergence import GENERALIZED_KL, divergence
from .errors import DomainError, DomainEscape, NonConvergence, NumericalError
from .parallel import parallel_map, splitmix64
from .partition import estimate_z, split_budget, z_mse_theory

N_BOOTSTRAP = 200
MAX_DROP_FRACTION = 0.05
# stream index reserved for the bootstrap generator
BOOTSTRAP_STREAM = 2**63


@dataclass(frozen=True)
class OptimizerConfig:
    gtol: float = 1e-8
    max_iter: int = 500
    armijo: float = 1e-4
    max_backtracks: int = 60


@dataclass(frozen=True)
class FitResult:
    beta_hat: np.ndarray
    loss_value: float
    converged: bool
    iterations: int
    grad_norm: float = math.nan
    domain_backtracks: int = 0


class EmpiricalLoss:
    """Empirical Bregman loss ``nu mean_n S0(r) - mean_d S1(r)`` and its gradient."""

    def __init__(self, model, p_n, data_sample, noise_sample, nu, loss):
        if len(data_sample) == 0 or len(noise_sample) == 0:
            raise DomainError("both samples must be nonempty")
        if not nu > 0:
            raise DomainError("nu must be positive")
        self.model = model
        self.loss = as_loss(loss)
        self.nu = float(nu)
        self.xd = np.asarray(data_sample, dtype=np.float64)
        self.xn = np.asarray(noise_sample, dtype=np.float64)
        with np.errstate(divide="ignore"):
            self.log_pn_d = p_n.logpdf(self.xd)
            self.log_pn_n = p_n.logpdf(self.xn)

    def __call__(self, beta):
        l_d = log_ratio(self.model.logpdf(self.xd, beta), self.log_pn_d, self.nu)
        l_n = log_ratio(self.model.logpdf(self.xn, beta), self.log_pn_n, self.nu)
        with np.errstate(over="ignore"):
            f = self.nu * np.mean(self.loss.s0(l_n)) - np.mean(self.loss.s1(l_d))
            psi_d = self.model.score(self.xd, beta)
            psi_n = self.model.score(self.xn, beta)
            wr_n = np.exp(self.loss.log_w(l_n) + l_n)
            w_d = np.exp(self.loss.log_w(l_d))
            g = self.nu * (wr_n @ psi_n) / len(self.xn) - (w_d @ psi_d) / len(self.xd)
        return float(f), g


def fit_nce(model, p_n, data_sample, noise_sample, nu, loss="js", init=None,
            optimizer_cfg: OptimizerConfig | None = None) -> FitResult:
    """Minimize the empirical Bregman loss by BFGS with Armijo backtracking.

    Trial steps that leave the parameter domain are halved until they are
    admissible. Non-convergence is reported in the result, not raised.
    """
    cfg = optimizer_cfg or OptimizerConfig()
    objective = EmpiricalLoss(model, p_n, data_sample, noise_sample, nu, loss)
    beta = np.array(model.beta if init is None else init, dtype=np.float64)
    if not model.valid_beta(beta):
        raise DomainError(f"initial parameter {beta} is outside the model's domain")
    f, g = objective(beta)
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        raise NonConvergence("the empirical loss is not finite at the initial parameter")
    n = beta.size
    H = np.eye(n)
    escapes = 0
    for it in range(cfg.max_iter):
        gnorm = float(np.linalg.norm(g))
        if gnorm < cfg.gtol:
            return FitResult(beta, f, True, it, gnorm, escapes)
        d = -H @ g
        if not g @ d < 0:
            H = np.eye(n)
            d = -g
        t = 1.0
        for _ in range(cfg.max_backtracks):
            trial = beta + t * d
            if not model.valid_beta(trial):
                escapes += 1
                t *= 0.5
                continue
            f_new, g_new = objective(trial)
            if math.isfinite(f_new) and f_new <= f + cfg.armijo * t * (g @ d):
                break
            t *= 0.5
        else:
            if escapes and not model.valid_beta(beta + t * d):
                raise DomainEscape("line search could not stay inside the parameter domain")
            return FitResult(beta, f, False, it, gnorm, escapes)
        s = trial - beta
        y = g_new - g
        sy = s @ y
        if sy > 1e-300:
            if it == 0:
                H = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        beta, f, g = trial, f_new, g_new
    gnorm = float(np.linalg.norm(g))
    return FitResult(beta, f, gnorm < cfg.gtol, cfg.max_iter, gnorm, escapes)


def bootstrap_stderr(values, n_boot: int = N_BOOTSTRAP, seed: int = 0) -> float:
    """Bootstrap standard error of the mean of ``values``."""
    values = np.asarray(values, dtype=np.float64)
    rng = np.random.default_rng(splitmix64(seed, BOOTSTRAP_STREAM))
    idx = rng.integers(0, values.size, size=(n_boot, values.size))
    return float(np.std(values[idx].mean(axis=1), ddof=1))


def _ordered_mean(values):
    # pairwise summation over a fixed order keeps the result independent
    # of how replicates were scheduled
    return float(np.sum(np.asarray(values, dtype=np.float64)) / len(values))


@dataclass
class EmpiricalMseReport:
    mse_hat: float
    std_err: float
    n_replicates: int
    mse_asymptotic: float
    n_dropped: int = 0
    beta_hats: np.ndarray = field(default=None, repr=False)
    mean_beta: np.ndarray = field(default=None)
    kl_hat: Optional[float] = None
    kl_asymptotic: Optional[float] = None
    initialization: str = "beta_star"


def draw_replicate(model, p_n, t_d, t_n, seed, index):
    rng = np.random.default_rng(splitmix64(seed, index))
    return model.sample(t_d, rng), p_n.sample(t_n, rng)


def empirical_mse(model, beta_star=None, p_n=None, nu=1.0, T=10_000, loss="js", n_replicates=100,
                  seed=0, optimizer_cfg: OptimizerConfig | None = None, integrator=None,
                  nonparametric: bool = False, workers: int | None = None) -> EmpiricalMseReport:
    """Monte-Carlo estimate of ``E ||beta_hat - beta*||^2`` at budget ``T``.

    Replicate ``i`` draws ``T/(1+nu)`` data and ``nu T/(1+nu)`` noise points
    from the seed ``splitmix64(seed, i)``; every fit starts at ``beta*``.
    With ``nonparametric`` the generalized KL from the data to each fitted
    model is averaged as well.
    """
    if n_replicates < 100:
        raise DomainError("at least 100 replicates are required")
    model = at_beta(model, beta_star)
    p_n = p_n if p_n is not None else model.density()
    beta0 = model.beta
    t_d, t_n = split_budget(T, nu)
    if t_n < 1:
        raise DomainError("the budget leaves no noise samples")

    def one(i):
        xd, xn = draw_replicate(model, p_n, t_d, t_n, seed, i)
        try:
            res = fit_nce(model, p_n, xd, xn, nu, loss, beta0, optimizer_cfg)
        except NumericalError:
            return None
        return res.beta_hat if res.converged else None

    fits = parallel_map(one, range(n_replicates), workers=workers)
    kept = [b for b in fits if b is not None]
    dropped = n_replicates - len(kept)
    if dropped > MAX_DROP_FRACTION * n_replicates:
        raise NonConvergence(f"{dropped} of {n_replicates} replicate fits failed to converge")
    betas = np.array(kept)
    sq = np.sum((betas - beta0) ** 2, axis=1)
    mom = score_moments(model, None, p_n, nu, loss, integrator)
    sigma = sigma_matrix(mom, nu)
    report = EmpiricalMseReport(
        mse_hat=_ordered_mean(sq),
        std_err=bootstrap_stderr(sq, seed=seed),
        n_replicates=len(kept),
        mse_asymptotic=mse_parametric(sigma, nu, T),
        n_dropped=dropped,
        beta_hats=betas,
        mean_beta=betas.mean(axis=0),
    )
    if nonparametric:
        data = model.density()
        kls = [divergence(GENERALIZED_KL, data, lambda x, b=b: model.logpdf(x, b), integrator) for b in betas]
        report.kl_hat = _ordered_mean(kls)
        report.kl_asymptotic = mse_nonparametric(sigma, mom.I, nu, T)
    return report


@dataclass
class ZBenchReport:
    z_hats: np.ndarray
    mse_empirical: float
    mse_theory: float
    stderr: float
    loss: str
    n_replicates: int


def z_benchmark(loss, p_d, p_n, nu=1.0, T=10_000, n_replicates=500, seed=0, z_star=1.0,
                integrator=None, workers: int | None = None) -> ZBenchReport:
    """Replicated estimates of ``Z`` with the theoretical error for comparison."""
    loss = as_loss(loss)
    t_d, t_n = split_budget(T, nu)
    log_z = math.log(z_star)
    log_f = lambda x: p_d.logpdf(x) + log_z

    def one(i):
        rng = np.random.default_rng(splitmix64(seed, i))
        xd = p_d.sample(t_d, rng)
        xn = p_n.sample(t_n, rng)
        return estimate_z(loss.kind, log_f, p_n, xd, xn).z_hat

    z = np.array(parallel_map(one, range(n_replicates), workers=workers))
    sq = (z - z_star) ** 2
    return ZBenchReport(
        z_hats=z,
        mse_empirical=_ordered_mean(sq),
        mse_theory=z_mse_theory(loss.kind, p_d, p_n, nu, T, z_star, integrator),
        stderr=bootstrap_stderr(sq, seed=seed),
        loss=loss.kind.value,
        n_replicates=n_replicates,
    )
