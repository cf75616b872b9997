"""Asymptotic covariance and estimation errors of Bregman-loss NCE estimators.

All quantities are evaluated at the true parameter of the model. With the
reweightings ``w`` and ``v`` taken at the ratio ``p_d / (nu p_n)``:

    m_w = E_d[w psi],  I_w = E_d[w psi psi^T],  I_v = E_d[v psi psi^T]
    Sigma = I_w^-1 (I_v - (1 + 1/nu) m_w m_w^T) I_w^-1
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bregman import as_loss, log_ratio
from .densities import ParametricModel, fisher_matrices
from .errors import DegenerateInformation, DomainError, NonFiniteIntegrand, UnsupportedModel
from .integrate import GridSpec, default_grid, integrate_values

COND_MAX = 1e12


@dataclass(frozen=True)
class ScoreMoments:
    m_w: np.ndarray
    I_w: np.ndarray
    I_v: np.ndarray
    # unweighted generalized score covariance, used by the non-parametric error
    I: Optional[np.ndarray] = field(default=None)


@dataclass(frozen=True)
class MseReport:
    sigma: np.ndarray
    mse_param: float
    mse_nonparam: float
    cramer_rao: Optional[float]
    nu: float
    T: float
    loss: str
    noise_id: str
    evaluated_at: str = "beta_star"


def sym_inverse(a: np.ndarray, what: str = "information matrix") -> np.ndarray:
    """Inverse of a symmetric positive definite matrix with a conditioning guard."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    a = 0.5 * (a + a.T)
    lam, vec = np.linalg.eigh(a)
    if not np.all(np.isfinite(lam)) or lam[0] <= 0 or lam[-1] / lam[0] > COND_MAX:
        raise DegenerateInformation(f"{what} is singular or ill-conditioned (eigenvalues {lam})")
    return (vec / lam) @ vec.T


def sym_power(a: np.ndarray, e: float) -> np.ndarray:
    """``a**e`` for a symmetric positive definite ``a``."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    lam, vec = np.linalg.eigh(0.5 * (a + a.T))
    if lam[0] <= 0 or lam[-1] / lam[0] > COND_MAX:
        raise DegenerateInformation(f"matrix is singular or ill-conditioned (eigenvalues {lam})")
    return (vec * lam ** e) @ vec.T


def at_beta(model, beta_star):
    if beta_star is None:
        return model
    beta_star = np.asarray(beta_star, dtype=np.float64)
    if np.array_equal(beta_star, model.beta):
        return model
    return model.with_beta(beta_star)


def score_moments(model, beta_star, p_n, nu, loss, integrator: GridSpec | None = None) -> ScoreMoments:
    """Reweighted score moments ``m_w``, ``I_w``, ``I_v`` (and plain ``I``) by quadrature."""
    if not nu > 0:
        raise DomainError(f"nu must be positive, got {nu}")
    model = at_beta(model, beta_star)
    loss = as_loss(loss)
    grid = integrator or default_grid(model.dims)
    x = grid.points
    log_pd = model.density().logpdf(x)
    with np.errstate(divide="ignore"):
        log_pn = p_n.logpdf(x)
    psi = model.score(x)
    l = log_ratio(log_pd, log_pn, nu)
    with np.errstate(all="ignore"):
        wp = np.exp(loss.log_w(l) + log_pd)
        vp = np.exp(loss.log_v(l) + log_pd)
    if not (np.all(np.isfinite(wp)) and np.all(np.isfinite(vp))):
        raise NonFiniteIntegrand(
            f"reweighted integrand for the {loss.kind.value} loss is infinite: "
            "the noise vanishes where the data has mass"
        )
    pd = np.exp(log_pd)
    outer = psi[:, :, None] * psi[:, None, :]
    m_w = np.atleast_1d(integrate_values(wp[:, None] * psi, grid))
    I_w = np.atleast_2d(integrate_values(wp[:, None, None] * outer, grid, tail_check=True))
    I_v = np.atleast_2d(integrate_values(vp[:, None, None] * outer, grid, tail_check=True))
    I = np.atleast_2d(integrate_values(pd[:, None, None] * outer, grid))
    # guard before anyone inverts it
    sym_inverse(I_w, "reweighted information I_w")
    return ScoreMoments(m_w, I_w, I_v, I)


def sigma_matrix(moments: ScoreMoments, nu: float) -> np.ndarray:
    """Asymptotic covariance ``Sigma`` of the estimator."""
    inv = sym_inverse(moments.I_w, "reweighted information I_w")
    m = np.atleast_1d(moments.m_w)
    mid = moments.I_v - (1.0 + 1.0 / nu) * np.outer(m, m)
    s = inv @ mid @ inv
    return 0.5 * (s + s.T)


def mse_parametric(sigma, nu, T) -> float:
    """``(nu + 1) / T * tr(Sigma)``."""
    if not T > 0:
        raise DomainError("sample budget T must be positive")
    return float((nu + 1.0) / T * np.trace(np.atleast_2d(sigma)))


def mse_nonparametric(sigma, fisher_I, nu, T) -> float:
    """``(nu + 1) / (2T) * tr(Sigma I)``: expected generalized KL to the data."""
    if not T > 0:
        raise DomainError("sample budget T must be positive")
    sigma = np.atleast_2d(sigma)
    fisher_I = np.atleast_2d(fisher_I)
    if sigma.shape != fisher_I.shape:
        raise DomainError(f"shape mismatch {sigma.shape} vs {fisher_I.shape}")
    return float((nu + 1.0) / (2.0 * T) * np.trace(sigma @ fisher_I))


def cramer_rao(model, beta_star=None, integrator: GridSpec | None = None, T_d: float = 1.0) -> float:
    """``tr(J^-1) / T_d`` for a normalized model."""
    if not getattr(model, "normalized", False):
        raise UnsupportedModel("no Cramer-Rao bound is defined for the log-normalizer")
    model = at_beta(model, beta_star)
    J = fisher_matrices(model, integrator).J
    return float(np.trace(sym_inverse(J, "Fisher information J")) / T_d)


def data_fraction(nu: float) -> float:
    return 1.0 / (1.0 + nu)


def mse_report(model, p_n, nu, T, loss, integrator: GridSpec | None = None, beta_star=None,
               noise_id: Optional[str] = None) -> MseReport:
    """Full asymptotic error report for one configuration."""
    mom = score_moments(model, beta_star, p_n, nu, loss, integrator)
    sigma = sigma_matrix(mom, nu)
    cr = None
    if isinstance(model, ParametricModel) and model.normalized:
        cr = cramer_rao(model, beta_star, integrator, T * data_fraction(nu))
    return MseReport(
        sigma=sigma,
        mse_param=mse_parametric(sigma, nu, T),
        mse_nonparam=mse_nonparametric(sigma, mom.I, nu, T),
        cramer_rao=cr,
        nu=float(nu),
        T=float(T),
        loss=as_loss(loss).kind.value,
        noise_id=noise_id or getattr(p_n, "name", "noise"),
    )


def mse_of(model, p_n, nu, T, loss="js", integrator=None, objective="parametric") -> float:
    """Scalar asymptotic error: parametric MSE, or the non-parametric (KL) error."""
    mom = score_moments(model, None, p_n, nu, loss, integrator)
    sigma = sigma_matrix(mom, nu)
    if objective in ("parametric", "mse"):
        return mse_parametric(sigma, nu, T)
    if objective in ("nonparametric", "kl"):
        return mse_nonparametric(sigma, mom.I, nu, T)
    raise DomainError(f"unknown objective {objective!r}")


def z_space(mse_c: float, z_star: float) -> float:
    """Delta-method conversion of a log-normalizer MSE to a Z-space MSE."""
    return mse_c * z_star ** 2


def is_finite_config(fn, *args, **kwargs):
    """Evaluate ``fn`` and return ``math.inf`` on a numerical failure."""
    from .errors import NumericalError

    try:
        val = fn(*args, **kwargs)
    except NumericalError:
        return math.inf
    return val if math.isfinite(val) else math.inf
