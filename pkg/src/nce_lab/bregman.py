"""Bregman classification losses and the reweighting functions they induce.

A loss is generated by a convex ``phi`` on ``(0, inf)``. Evaluated at the
density ratio ``r = p_beta / (nu p_n)`` it gives the pair

    S0(r) = -phi(r) + r phi'(r),    S1(r) = phi'(r)

and the population loss ``nu E_n S0(r) - E_d S1(r)``. Everything below works
on ``log r`` and exponentiates as late as possible.
"""
from __future__ import annotations

import enum
import math

import numpy as np
from scipy.special import expit, log_expit

from .errors import DomainError, NonFiniteIntegrand
from .integrate import GridSpec, default_grid, integrate_values

LOG2 = math.log(2.0)


class Loss(str, enum.Enum):
    KL = "kl"
    REVKL = "revkl"
    JS = "js"
    H2 = "h2"

    @classmethod
    def parse(cls, name) -> "Loss":
        if isinstance(name, Loss):
            return name
        key = str(name).strip().lower().replace("²", "2").replace("-", "").replace("_", "")
        for member in cls:
            if member.value == key:
                return member
        if key in ("logistic", "nce"):
            return cls.JS
        raise DomainError(f"unknown loss {name!r}; expected one of kl, revkl, js, h2")


def _softplus(z):
    return np.logaddexp(0.0, z)


class BregmanLoss:
    """A named member of the Bregman family, with its generator and derivatives."""

    def __init__(self, kind):
        self.kind = Loss.parse(kind)

    def __repr__(self):
        return f"BregmanLoss({self.kind.value!r})"

    def __eq__(self, other):
        return isinstance(other, BregmanLoss) and other.kind is self.kind

    def __hash__(self):
        return hash(self.kind)

    # -- generator

    def phi(self, x):
        x = np.asarray(x, dtype=np.float64)
        k = self.kind
        if k is Loss.KL:
            return x * np.log(x)
        if k is Loss.REVKL:
            return -np.log(x)
        if k is Loss.JS:
            return x * np.log(x) - (1.0 + x) * np.log((1.0 + x) / 2.0)
        return (1.0 - np.sqrt(x)) ** 2

    def dphi(self, x):
        x = np.asarray(x, dtype=np.float64)
        k = self.kind
        if k is Loss.KL:
            return np.log(x) + 1.0
        if k is Loss.REVKL:
            return -1.0 / x
        if k is Loss.JS:
            return np.log(2.0 * x / (1.0 + x))
        return 1.0 - 1.0 / np.sqrt(x)

    def ddphi(self, x):
        x = np.asarray(x, dtype=np.float64)
        k = self.kind
        if k is Loss.KL:
            return 1.0 / x
        if k is Loss.REVKL:
            return 1.0 / x ** 2
        if k is Loss.JS:
            return 1.0 / (x * (1.0 + x))
        return 0.5 * x ** -1.5

    # -- log-space quantities

    def log_w(self, log_r):
        """Log of the reweighting ``w = r phi''(r)``."""
        l = np.asarray(log_r, dtype=np.float64)
        k = self.kind
        if k is Loss.KL:
            return np.zeros_like(l)
        if k is Loss.REVKL:
            return -l
        if k is Loss.JS:
            return log_expit(-l)
        return -LOG2 - 0.5 * l

    def log_v(self, log_r):
        """Log of ``v = w^2 (1 + r)``; identical to ``log_w`` for JS."""
        l = np.asarray(log_r, dtype=np.float64)
        if self.kind is Loss.JS:
            return log_expit(-l)
        return 2.0 * self.log_w(l) + _softplus(l)

    def w(self, log_r):
        if self.kind is Loss.JS:
            return expit(-np.asarray(log_r, dtype=np.float64))
        return np.exp(self.log_w(log_r))

    def s0(self, log_r):
        l = np.asarray(log_r, dtype=np.float64)
        k = self.kind
        if k is Loss.KL:
            return np.exp(l)
        if k is Loss.REVKL:
            return l - 1.0
        if k is Loss.JS:
            return _softplus(l) - LOG2
        return np.expm1(0.5 * l)

    def s1(self, log_r):
        l = np.asarray(log_r, dtype=np.float64)
        k = self.kind
        if k is Loss.KL:
            return l + 1.0
        if k is Loss.REVKL:
            return -np.exp(-l)
        if k is Loss.JS:
            return LOG2 + log_expit(l)
        return -np.expm1(-0.5 * l)


def as_loss(loss) -> BregmanLoss:
    return loss if isinstance(loss, BregmanLoss) else BregmanLoss(loss)


def _check_positive(x, what):
    x = np.asarray(x, dtype=np.float64)
    if np.any(~(x > 0)):
        raise DomainError(f"{what} must be positive")
    return x


def _scalar(a):
    return float(a) if np.ndim(a) == 0 else a


def phi_eval(loss, x):
    """``(phi(x), phi'(x), phi''(x))`` for ``x > 0``."""
    loss = as_loss(loss)
    x = _check_positive(x, "phi argument")
    with np.errstate(divide="ignore", invalid="ignore"):
        return _scalar(loss.phi(x)), _scalar(loss.dphi(x)), _scalar(loss.ddphi(x))


def reweight_w(loss, ratio):
    """Reweighting ``w = ratio * phi''(ratio)``."""
    ratio = _check_positive(ratio, "ratio")
    with np.errstate(divide="ignore"):
        return _scalar(as_loss(loss).w(np.log(ratio)))


def reweight_v(loss, ratio):
    """Second reweighting ``v = w**2 * (1 + ratio)``."""
    loss = as_loss(loss)
    ratio = _check_positive(ratio, "ratio")
    with np.errstate(divide="ignore"):
        l = np.log(ratio)
    if loss.kind is Loss.JS:
        return _scalar(loss.w(l))
    return _scalar(np.exp(loss.log_v(l)))


def log_ratio(log_p_beta, log_pn, nu):
    """``log(p_beta / (nu p_n))``, with ``+inf`` where ``p_n`` vanishes."""
    with np.errstate(invalid="ignore"):
        l = np.asarray(log_p_beta, dtype=np.float64) - math.log(nu) - np.asarray(log_pn, dtype=np.float64)
    return l


def _check_ratio(loss, l):
    if loss.kind is not Loss.JS and not np.all(np.isfinite(l)):
        raise NonFiniteIntegrand(
            f"density ratio is 0 or infinite on the grid; the {loss.kind.value} loss is undefined there"
        )
    if np.any(np.isnan(l)):
        raise NonFiniteIntegrand("density ratio is undefined (both densities vanish)")


def _setup(model, beta, p_n, nu, integrator):
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    grid = integrator or default_grid(model.dims)
    x = grid.points
    log_pd = model.density().logpdf(x)
    log_pb = model.logpdf(x, beta)
    with np.errstate(divide="ignore"):
        log_pn = p_n.logpdf(x)
    return grid, x, log_pd, log_pb, log_pn


def population_loss(loss, model, beta, p_n, nu, integrator: GridSpec | None = None) -> float:
    """``nu E_n S0(r) - E_d S1(r)`` with ``r = p_beta / (nu p_n)``, by quadrature."""
    loss = as_loss(loss)
    grid, x, log_pd, log_pb, log_pn = _setup(model, beta, p_n, nu, integrator)
    l = log_ratio(log_pb, log_pn, nu)
    _check_ratio(loss, l)
    with np.errstate(all="ignore"):
        pn = np.exp(log_pn)
        noise_term = nu * pn * loss.s0(l)
        # p_n = 0 nodes carry no noise mass (the JS continuation)
        noise_term = np.where(pn > 0, noise_term, 0.0)
        vals = noise_term - np.exp(log_pd) * loss.s1(l)
    return float(integrate_values(vals, grid))


def population_gradient(loss, model, beta, p_n, nu, integrator: GridSpec | None = None) -> np.ndarray:
    """Gradient ``nu E_n[w r psi] - E_d[w psi]`` of :func:`population_loss`."""
    loss = as_loss(loss)
    grid, x, log_pd, log_pb, log_pn = _setup(model, beta, p_n, nu, integrator)
    l = log_ratio(log_pb, log_pn, nu)
    _check_ratio(loss, l)
    psi = model.score(x, beta)
    with np.errstate(all="ignore"):
        lw = loss.log_w(l)
        # nu p_n w r = w p_beta
        coef = np.exp(lw + log_pb) - np.exp(lw + log_pd)
        coef = np.where(np.isnan(coef), 0.0, coef)
    return np.atleast_1d(integrate_values(coef[:, None] * psi, grid))


def table1_objective(loss, model, beta, p_n, nu, integrator: GridSpec | None = None) -> float:
    """The classification objective in its conventional per-loss form.

    These are the expressions usually tabulated for the four losses; they
    differ from :func:`population_loss` by sign and additive constants, but
    share its stationary points. At ``p_beta = p_n = p_d`` and ``nu = 1`` the
    JS form equals ``-2 log 2``.
    """
    loss = as_loss(loss)
    grid, x, log_pd, log_pb, log_pn = _setup(model, beta, p_n, nu, integrator)
    l = log_ratio(log_pb, log_pn, nu)
    _check_ratio(loss, l)
    pd = np.exp(log_pd)
    with np.errstate(all="ignore"):
        pn = np.exp(log_pn)
        k = loss.kind
        if k is Loss.REVKL:
            vals = -pd * np.exp(-l) - nu * pn * log_pb
        elif k is Loss.JS:
            vals = pd * log_expit(l) + np.where(pn > 0, nu * pn * log_expit(-l), 0.0)
        elif k is Loss.KL:
            vals = pd * log_pb - nu * pn * np.exp(l)
        else:
            vals = pd * np.exp(-0.5 * l) + nu * pn * np.exp(0.5 * l)
    return float(integrate_values(vals, grid))
