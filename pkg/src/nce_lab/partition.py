"""Estimators of a normalizing constant and their asymptotic errors.

Given an unnormalized density ``f = Z * p_d``, samples from ``p_d`` and from
a noise density ``p_n``, each Bregman loss yields an estimator of ``Z``:

    KL     IS         mean_n f/p_n
    RevKL  RevIS      1 / mean_d p_n/f
    H2     IS-RevIS   mean_n sqrt(f/p_n) / mean_d sqrt(p_n/f)
    JS     NCE        root in c = log Z of the empirical logistic-loss gradient
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect
from scipy.special import expit

from .bregman import Loss
from .divergence import CHI_SQUARED, HELLINGER2, divergence, harmonic
from .errors import DomainError, NoRoot, NonFiniteIntegrand, NonFiniteRatio
from .integrate import GridSpec

C_BRACKET = (-30.0, 30.0)
C_TOL = 1e-12


@dataclass(frozen=True)
class ZEstimate:
    z_hat: float
    loss_kind: Loss
    n_data: int
    n_noise: int
    converged: bool = True

    @property
    def c_hat(self) -> float:
        return math.log(self.z_hat)


def _log_eval(fn, x):
    fn = fn.logpdf if hasattr(fn, "logpdf") else fn
    with np.errstate(divide="ignore"):
        return np.asarray(fn(x), dtype=np.float64)


def _mean_exp(log_vals, what):
    with np.errstate(over="ignore"):
        vals = np.exp(log_vals)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteRatio(f"{what} overflows at a sample point")
    return float(np.mean(vals))


def _need(sample, what):
    if sample is None or len(sample) == 0:
        raise DomainError(f"this estimator needs a nonempty {what} sample")
    return np.asarray(sample, dtype=np.float64)


def nce_gradient_c(c, log_f_d, log_pn_d, log_f_n, log_pn_n, nu):
    """Empirical logistic-loss gradient in ``c``; nondecreasing in ``c``."""
    l_n = log_f_n - c - math.log(nu) - log_pn_n
    l_d = log_f_d - c - math.log(nu) - log_pn_d
    return -nu * np.mean(expit(l_n)) + np.mean(expit(-l_d))


def estimate_z(loss_kind, log_f, p_n, data_sample=None, noise_sample=None) -> ZEstimate:
    """Estimate ``Z`` from samples with the estimator induced by ``loss_kind``.

    ``log_f`` is the log of the unnormalized density (a callable, or an
    object with a ``logpdf`` method).
    """
    kind = Loss.parse(loss_kind)
    n_d = 0 if data_sample is None else len(data_sample)
    n_n = 0 if noise_sample is None else len(noise_sample)

    if kind is Loss.KL:
        xn = _need(noise_sample, "noise")
        z = _mean_exp(_log_eval(log_f, xn) - _log_eval(p_n, xn), "f/p_n")
        return ZEstimate(z, kind, n_d, n_n)

    if kind is Loss.REVKL:
        xd = _need(data_sample, "data")
        z = 1.0 / _mean_exp(_log_eval(p_n, xd) - _log_eval(log_f, xd), "p_n/f")
        return ZEstimate(z, kind, n_d, n_n)

    xd = _need(data_sample, "data")
    xn = _need(noise_sample, "noise")
    log_f_d, log_pn_d = _log_eval(log_f, xd), _log_eval(p_n, xd)
    log_f_n, log_pn_n = _log_eval(log_f, xn), _log_eval(p_n, xn)

    if kind is Loss.H2:
        num = _mean_exp(0.5 * (log_f_n - log_pn_n), "sqrt(f/p_n)")
        den = _mean_exp(0.5 * (log_pn_d - log_f_d), "sqrt(p_n/f)")
        return ZEstimate(num / den, kind, n_d, n_n)

    nu = n_n / n_d
    g = lambda c: nce_gradient_c(c, log_f_d, log_pn_d, log_f_n, log_pn_n, nu)
    lo, hi = C_BRACKET
    g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0.0:
        return ZEstimate(math.exp(lo), kind, n_d, n_n)
    if g_hi == 0.0:
        return ZEstimate(math.exp(hi), kind, n_d, n_n)
    if not (g_lo < 0.0 < g_hi):
        raise NoRoot(f"logistic-loss gradient does not change sign on c in [{lo}, {hi}]")
    c, info = bisect(g, lo, hi, xtol=C_TOL, rtol=4 * np.finfo(float).eps, maxiter=200, full_output=True)
    return ZEstimate(math.exp(c), kind, n_d, n_n, converged=bool(info.converged))


def _guard_unit(d, what):
    if not d < 1.0:
        raise NonFiniteIntegrand(f"{what} equals 1: the supports are disjoint and the error is infinite")
    return d


def z_mse_theory(loss_kind, p_d, p_n, nu, T, z_star=1.0, integrator: GridSpec | None = None) -> float:
    """Asymptotic mean squared error of the ``Z`` estimator for a given loss.

    The squared-Hellinger case uses ``d = 1 - (1 - H^2)^2`` in the ratio
    ``d / (1 - d)``; this is the form that agrees with the general covariance
    formula for a model whose only parameter is the normalizer.
    """
    kind = Loss.parse(loss_kind)
    if not nu > 0 or not T > 0:
        raise DomainError("nu and T must be positive")
    scale = z_star ** 2
    if kind is Loss.KL:
        return (1.0 + nu) / (nu * T) * scale * divergence(CHI_SQUARED, p_d, p_n, integrator)
    if kind is Loss.REVKL:
        return (1.0 + nu) / T * scale * divergence(CHI_SQUARED, p_n, p_d, integrator)
    if kind is Loss.JS:
        d = _guard_unit(divergence(harmonic(nu / (1.0 + nu)), p_d, p_n, integrator), "harmonic divergence")
    else:
        h2 = _guard_unit(divergence(HELLINGER2, p_d, p_n, integrator), "squared Hellinger distance")
        d = 1.0 - (1.0 - h2) ** 2
    return (1.0 + nu) ** 2 / (nu * T) * scale * d / (1.0 - d)


def optimal_nu_for_z(loss_kind) -> float:
    """Error-minimizing noise-data ratio for each estimator (``inf`` for IS)."""
    kind = Loss.parse(loss_kind)
    return {Loss.REVKL: 0.0, Loss.JS: 1.0, Loss.KL: math.inf, Loss.H2: 1.0}[kind]


def split_budget(T: float, nu: float) -> tuple[int, int]:
    """Data and noise sample sizes ``T/(1+nu)`` and ``nu T/(1+nu)``, rounded."""
    t_d = max(1, int(round(T / (1.0 + nu))))
    t_n = int(round(nu * T / (1.0 + nu)))
    return t_d, t_n
