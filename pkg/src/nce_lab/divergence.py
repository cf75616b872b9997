"""Divergences between densities, evaluated by grid quadrature."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter, NonFiniteIntegrand
from .integrate import GridSpec, default_grid, integrate_values


class Kind(str, enum.Enum):
    CHI_SQUARED = "chi2"
    HELLINGER2 = "hellinger2"
    HARMONIC = "harmonic"
    GENERALIZED_KL = "gkl"


@dataclass(frozen=True)
class DivergenceKind:
    kind: Kind
    pi: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.HARMONIC:
            if self.pi is None or not 0.0 < self.pi < 1.0:
                raise InvalidParameter(f"harmonic divergence needs a weight in (0, 1), got {self.pi}")
        elif self.pi is not None:
            raise InvalidParameter("only the harmonic divergence takes a weight")


CHI_SQUARED = DivergenceKind(Kind.CHI_SQUARED)
HELLINGER2 = DivergenceKind(Kind.HELLINGER2)
GENERALIZED_KL = DivergenceKind(Kind.GENERALIZED_KL)


def harmonic(pi: float) -> DivergenceKind:
    return DivergenceKind(Kind.HARMONIC, pi)


def _log_density(d, x):
    # accept a Density or a plain log-density callable (possibly unnormalized)
    fn = d.logpdf if hasattr(d, "logpdf") else d
    with np.errstate(divide="ignore"):
        return np.asarray(fn(x), dtype=np.float64)


def divergence(kind: DivergenceKind, p, q, integrator: GridSpec | None = None) -> float:
    """Divergence of ``q`` from ``p``.

    ChiSquared ``int p^2/q - 1``; Hellinger2 ``1 - int sqrt(pq)``;
    Harmonic ``1 - int pq / ((1-pi) p + pi q)``; GeneralizedKL
    ``int p log(p/q) - p + q`` (``q`` may be unnormalized).

    Raises :class:`NonFiniteIntegrand` when the integral diverges, including
    integrands whose tails do not decay inside the grid.
    """
    if not isinstance(kind, DivergenceKind):
        kind = DivergenceKind(kind)
    dims = getattr(p, "dims", 1)
    grid = integrator or default_grid(dims)
    x = grid.points
    lp = _log_density(p, x)
    lq = _log_density(q, x)
    k = kind.kind
    with np.errstate(all="ignore"):
        if k is Kind.CHI_SQUARED:
            vals = np.exp(2.0 * lp - lq)
            vals = np.where(np.isneginf(lp), 0.0, vals)
            return float(integrate_values(vals, grid, tail_check=True)) - 1.0
        if k is Kind.HELLINGER2:
            vals = np.exp(0.5 * (lp + lq))
            return 1.0 - float(integrate_values(vals, grid))
        if k is Kind.HARMONIC:
            pi = kind.pi
            den = np.logaddexp(np.log1p(-pi) + lp, np.log(pi) + lq)
            vals = np.exp(lp + lq - den)
            vals = np.where(np.isneginf(den), 0.0, vals)
            return 1.0 - float(integrate_values(vals, grid))
        pe, qe = np.exp(lp), np.exp(lq)
        vals = pe * (lp - lq) - pe + qe
        vals = np.where(np.isneginf(lp), qe, vals)
    if np.any(np.isinf(vals)):
        raise NonFiniteIntegrand("generalized KL diverges: q vanishes where p does not")
    return float(integrate_values(vals, grid, tail_check=True))
