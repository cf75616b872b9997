"""Fixed-grid trapezoid quadrature and seeded Monte-Carlo expectations.

Every integral in the package goes through :func:`integrate_grid` (or the
lower-level :func:`integrate_values` when the integrand is already tabulated
on the grid). Grids are tensor products of a uniform 1-D node set, so the
trapezoid weights are known in closed form and the summation order is fixed,
which keeps results bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .errors import InvalidParameter, NonFiniteIntegrand

# integrands whose magnitude exceeds this are treated as divergent
BLOWUP = 1e12
# relative size of the boundary contribution above which truncation is unsafe
TAIL_RTOL = 1e-6


@dataclass(frozen=True)
class GridSpec:
    """Uniform tensor-product grid on ``[lo, hi]**dims`` with ``n`` nodes per axis."""

    lo: float = -10.0
    hi: float = 10.0
    n: int = 2001
    dims: int = 1

    def __post_init__(self):
        if not self.lo < self.hi:
            raise InvalidParameter(f"grid requires lo < hi, got [{self.lo}, {self.hi}]")
        if int(self.n) != self.n or self.n < 3:
            raise InvalidParameter(f"grid requires n >= 3 nodes, got {self.n}")
        if self.dims not in (1, 2):
            raise InvalidParameter(f"grid dims must be 1 or 2, got {self.dims}")

    @property
    def step(self) -> float:
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return _nodes(self.lo, self.hi, self.n)

    @property
    def points(self) -> np.ndarray:
        """Evaluation points: shape ``(n,)`` in 1-D, ``(n*n, 2)`` in 2-D."""
        return _points(self)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights aligned with :attr:`points`."""
        return _weights(self)

    @property
    def boundary(self) -> np.ndarray:
        """Boolean mask of points on the boundary of the domain."""
        return _boundary(self)

    def refined(self, factor: int = 2) -> "GridSpec":
        """Same domain with the node spacing divided by ``factor``."""
        return GridSpec(self.lo, self.hi, (self.n - 1) * factor + 1, self.dims)


DEFAULT_GRID_1D = GridSpec(-10.0, 10.0, 2001, 1)
DEFAULT_GRID_2D = GridSpec(-8.0, 8.0, 501, 2)


def default_grid(dims: int) -> GridSpec:
    return DEFAULT_GRID_1D if dims == 1 else DEFAULT_GRID_2D


@lru_cache(maxsize=32)
def _nodes(lo, hi, n):
    # symmetric construction so that nodes at +x and -x are exact negatives
    # whenever the domain is symmetric
    i = np.arange(n, dtype=np.float64)
    x = lo + (hi - lo) * i / (n - 1)
    if lo == -hi:
        half = (hi - lo) * (i[: n // 2]) / (n - 1)
        x[: n // 2] = lo + half
        x[n - n // 2:] = -x[: n // 2][::-1]
        if n % 2:
            x[n // 2] = 0.0
    x.setflags(write=False)
    return x


@lru_cache(maxsize=32)
def _points(spec):
    x = _nodes(spec.lo, spec.hi, spec.n)
    if spec.dims == 1:
        return x
    xx, yy = np.meshgrid(x, x, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    pts.setflags(write=False)
    return pts


@lru_cache(maxsize=32)
def _weights(spec):
    w = np.full(spec.n, spec.step)
    w[0] = w[-1] = 0.5 * spec.step
    if spec.dims == 2:
        w = np.outer(w, w).ravel()
    w.setflags(write=False)
    return w


@lru_cache(maxsize=32)
def _boundary(spec):
    edge = np.zeros(spec.n, dtype=bool)
    edge[0] = edge[-1] = True
    if spec.dims == 2:
        edge = (edge[:, None] | edge[None, :]).ravel()
    edge.setflags(write=False)
    return edge


def integrate_values(values: np.ndarray, spec: GridSpec, *, tail_check: bool = False):
    """Trapezoid sum of integrand values tabulated on ``spec.points``.

    ``values`` may carry trailing axes (e.g. ``(N, d, d)``); the sum runs over
    the first axis only.

    With ``tail_check`` the boundary values must be negligible relative to the
    integral; otherwise the integrand is judged to have a heavy or divergent
    tail that the truncated domain cannot represent.
    """
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise NonFiniteIntegrand("integrand is NaN or infinite on at least one grid node")
    if np.max(np.abs(values), initial=0.0) > BLOWUP:
        raise NonFiniteIntegrand(f"integrand exceeds {BLOWUP:g} on the grid")
    w = spec.weights
    total = np.tensordot(w, values, axes=(0, 0))
    if tail_check:
        edge = np.abs(values[spec.boundary]).max(initial=0.0)
        extent = (spec.hi - spec.lo) ** spec.dims
        scale = np.abs(total).max(initial=0.0) if np.ndim(total) else abs(total)
        if edge * extent > TAIL_RTOL * max(scale, 1e-300) and edge * extent > 1e-12:
            raise NonFiniteIntegrand(
                "integrand does not decay at the grid boundary; the integral is "
                "divergent or the domain is too small"
            )
    return total


def integrate_grid(f: Callable[[np.ndarray], np.ndarray], spec: GridSpec = DEFAULT_GRID_1D) -> float:
    """Composite trapezoid approximation of the integral of ``f`` over the grid box.

    ``f`` must be vectorised: it receives all grid points at once.
    """
    with np.errstate(all="ignore"):
        values = np.asarray(f(spec.points), dtype=np.float64)
    return float(integrate_values(values, spec))


@dataclass(frozen=True)
class McSpec:
    n_samples: int
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidParameter("n_samples must be positive")
        if not 0 <= self.seed < 2**64:
            raise InvalidParameter("seed must fit in an unsigned 64-bit integer")


def mc_expectation(sampler, f, spec: McSpec) -> tuple[float, float]:
    """Sample mean of ``f`` and its standard error over ``spec.n_samples`` draws.

    ``sampler(n, rng)`` returns ``n`` points; the generator is seeded from
    ``spec.seed`` alone, so repeated calls agree bit for bit.
    """
    rng = np.random.default_rng(spec.seed)
    x = sampler(spec.n_samples, rng)
    with np.errstate(all="ignore"):
        y = np.asarray(f(x), dtype=np.float64)
    if not np.all(np.isfinite(y)):
        raise NonFiniteIntegrand("Monte-Carlo integrand produced NaN or infinite values")
    mean = float(np.mean(y))
    if spec.n_samples > 1:
        std_err = float(np.std(y, ddof=1) / np.sqrt(spec.n_samples))
    else:
        std_err = float("inf")
    return mean, std_err
