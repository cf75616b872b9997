"""Toy data models, their generalized Fisher scores, and noise densities.

Points are numpy arrays: shape ``(n,)`` for one-dimensional densities and
``(n, 2)`` for two-dimensional ones. All log-densities are vectorised.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from .errors import InvalidParameter, NormalizationViolation, UnsupportedModel
from .integrate import GridSpec, default_grid, integrate_values

LOG_2PI = math.log(2.0 * math.pi)
CLIP_TOL = 1e-12


class Family(str, enum.Enum):
    GAUSS_MEAN_1D = "gauss_mean"
    GAUSS_VAR_1D = "gauss_var"
    GAUSS_CORR_2D = "gauss_corr"

    @property
    def dims(self) -> int:
        return 2 if self is Family.GAUSS_CORR_2D else 1

    @classmethod
    def parse(cls, name) -> "Family":
        if isinstance(name, Family):
            return name
        aliases = {
            "gaussmean1d": cls.GAUSS_MEAN_1D, "mean": cls.GAUSS_MEAN_1D,
            "gaussvar1d": cls.GAUSS_VAR_1D, "var": cls.GAUSS_VAR_1D,
            "gausscorr2d": cls.GAUSS_CORR_2D, "corr": cls.GAUSS_CORR_2D,
        }
        key = str(name).lower()
        for member in cls:
            if member.value == key:
                return member
        if key in aliases:
            return aliases[key]
        raise InvalidParameter(f"unknown model family {name!r}")


# --------------------------------------------------------------------------
# plain densities


class Density:
    """Base class: a normalized density with a log-pdf and a sampler."""

    dims: int = 1
    name: str = "density"

    def logpdf(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def pdf(self, x: np.ndarray) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.exp(self.logpdf(x))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class GaussianDensity(Density):
    """One-dimensional normal distribution parameterized by mean and variance."""

    def __init__(self, mean: float = 0.0, var: float = 1.0):
        if not var > 0:
            raise InvalidParameter(f"variance must be positive, got {var}")
        self.mean = float(mean)
        self.var = float(var)
        self.dims = 1
        self.name = f"normal:{self.mean:g},{self.var:g}"

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return -0.5 * (x - self.mean) ** 2 / self.var - 0.5 * (LOG_2PI + math.log(self.var))

    def sample(self, n, rng):
        return self.mean + math.sqrt(self.var) * rng.standard_normal(n)


class CorrelatedGaussian(Density):
    """Zero-mean bivariate normal with unit marginal variances and correlation ``corr``."""

    def __init__(self, corr: float = 0.0):
        if not -1.0 < corr < 1.0:
            raise InvalidParameter(f"correlation must lie in (-1, 1), got {corr}")
        self.corr = float(corr)
        self.dims = 2
        self.name = f"corr:{self.corr:g}"

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        r = self.corr
        q = (x[:, 0] ** 2 + x[:, 1] ** 2 - 2.0 * r * x[:, 0] * x[:, 1]) / (1.0 - r * r)
        return -0.5 * q - LOG_2PI - 0.5 * math.log1p(-r * r)

    def sample(self, n, rng):
        z = rng.standard_normal((n, 2))
        r = self.corr
        return np.column_stack([z[:, 0], r * z[:, 0] + math.sqrt(1.0 - r * r) * z[:, 1]])


class ReweightedDensity(Density):
    """Density proportional to ``base(x) * weight(x)``, normalized on a grid.

    The log-density is exact at any point; sampling draws a grid cell with
    probability proportional to its quadrature mass and places the point
    uniformly inside the cell.
    """

    def __init__(self, base_logpdf: Callable, log_weight: Callable, grid: GridSpec, name="reweighted"):
        self._base = base_logpdf
        self._log_weight = log_weight
        self.grid = grid
        self.dims = grid.dims
        self.name = name
        with np.errstate(divide="ignore"):
            vals = np.exp(self._unnormalized_log(grid.points))
        self.normalizer = float(integrate_values(vals, grid))
        if not self.normalizer > 0:
            raise InvalidParameter("reweighted density has zero mass on the grid")
        self.log_normalizer = math.log(self.normalizer)
        self._cell_mass = grid.weights * vals / self.normalizer

    def _unnormalized_log(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self._base(x) + self._log_weight(x)

    def logpdf(self, x):
        return self._unnormalized_log(np.asarray(x, dtype=np.float64)) - self.log_normalizer

    def sample(self, n, rng):
        p = self._cell_mass / self._cell_mass.sum()
        idx = rng.choice(p.size, size=n, p=p)
        h = self.grid.step
        centre = self.grid.points[idx]
        jitter = rng.uniform(-0.5 * h, 0.5 * h, size=centre.shape)
        return np.clip(centre + jitter, self.grid.lo, self.grid.hi)


# --------------------------------------------------------------------------
# histograms


def _side_indices(edges, x):
    """Bin indices of ``x`` seen from the left and from the right of an edge.

    Points within a relative ``1e-9`` of an edge count as lying on it, so
    that grid nodes and bin edges built by different arithmetic still match.
    """
    eps = 1e-9 * max(1.0, float(np.max(np.abs(edges))))
    kr = np.searchsorted(edges, x + eps, side="right") - 1
    kl = np.searchsorted(edges, x - eps, side="left") - 1
    return kl, kr


class HistogramDensity(Density):
    """Piecewise-constant density on ``len(edges) - 1`` bins.

    At a point lying exactly on a bin edge the density is the average of the
    two adjacent bins (zero outside the support), which makes the trapezoid
    rule exact whenever the edges fall on grid nodes.
    """

    def __init__(self, edges, weights):
        edges = np.asarray(edges, dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64)
        if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
            raise InvalidParameter("histogram edges must be strictly increasing")
        if weights.shape != (edges.size - 1,):
            raise InvalidParameter("histogram needs one weight per bin")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise NormalizationViolation("histogram weights must be nonnegative and sum to 1")
        self.edges = edges
        self.weights = weights
        self.dims = 1
        self.name = f"hist:{weights.size}"

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def bin_densities(self):
        return self.weights / self.widths

    def node_matrix(self, x) -> sparse.csr_matrix:
        """Sparse map from bin densities to density values at the points ``x``."""
        x = np.asarray(x, dtype=np.float64)
        k = self.weights.size
        rows, cols, vals = [], [], []
        for side in _side_indices(self.edges, x):
            ok = (side >= 0) & (side < k)
            rows.append(np.nonzero(ok)[0])
            cols.append(side[ok])
            vals.append(np.full(ok.sum(), 0.5))
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(x.shape[0], k),
        )

    def pdf(self, x):
        return self.node_matrix(x) @ self.bin_densities

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def with_weights(self, weights) -> "HistogramDensity":
        return HistogramDensity(self.edges, weights)

    def sample(self, n, rng):
        k = rng.choice(self.weights.size, size=n, p=self.weights / self.weights.sum())
        return rng.uniform(self.edges[k], self.edges[k + 1])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["bin_lo", "bin_hi", "weight"])
            for lo, hi, w in zip(self.edges[:-1], self.edges[1:], self.weights):
                out.writerow([f"{lo:.17g}", f"{hi:.17g}", f"{w:.17g}"])

    @classmethod
    def from_csv(cls, path) -> "HistogramDensity":
        lo, hi, w = [], [], []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["bin_lo", "bin_hi", "weight"]:
                raise InvalidParameter(f"{path}: expected header bin_lo,bin_hi,weight")
            for row in reader:
                lo.append(float(row["bin_lo"]))
                hi.append(float(row["bin_hi"]))
                w.append(float(row["weight"]))
        if not lo or not np.allclose(lo[1:], hi[:-1], rtol=0, atol=1e-12):
            raise InvalidParameter(f"{path}: bins must be contiguous")
        return cls(np.array(lo + [hi[-1]]), np.array(w))


class HistogramDensity2D(Density):
    """Piecewise-constant density on a rectangular grid of bins.

    ``weights`` has shape ``(len(xedges) - 1, len(yedges) - 1)``; flat vectors
    use C order.
    """

    def __init__(self, xedges, yedges, weights):
        self.xedges = np.asarray(xedges, dtype=np.float64)
        self.yedges = np.asarray(yedges, dtype=np.float64)
        shape = (self.xedges.size - 1, self.yedges.size - 1)
        weights = np.asarray(weights, dtype=np.float64).reshape(shape)
        for e in (self.xedges, self.yedges):
            if np.any(np.diff(e) <= 0):
                raise InvalidParameter("histogram edges must be strictly increasing")
        if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
            raise NormalizationViolation("histogram weights must be nonnegative and sum to 1")
        self.weights = weights
        self.dims = 2
        self.name = f"hist2d:{shape[0]}x{shape[1]}"

    @property
    def areas(self):
        return np.outer(np.diff(self.xedges), np.diff(self.yedges))

    @property
    def bin_densities(self):
        return (self.weights / self.areas).ravel()

    def node_matrix(self, x) -> sparse.csr_matrix:
        x = np.asarray(x, dtype=np.float64)
        kx, ky = self.weights.shape
        rows, cols, vals = [], [], []
        for ix in _side_indices(self.xedges, x[:, 0]):
            for iy in _side_indices(self.yedges, x[:, 1]):
                ok = (ix >= 0) & (ix < kx) & (iy >= 0) & (iy < ky)
                rows.append(np.nonzero(ok)[0])
                cols.append(ix[ok] * ky + iy[ok])
                vals.append(np.full(ok.sum(), 0.25))
        return sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(x.shape[0], kx * ky),
        )

    def pdf(self, x):
        return self.node_matrix(x) @ self.bin_densities

    def logpdf(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(x))

    def with_weights(self, weights) -> "HistogramDensity2D":
        return HistogramDensity2D(self.xedges, self.yedges, weights)

    def sample(self, n, rng):
        flat = self.weights.ravel()
        k = rng.choice(flat.size, size=n, p=flat / flat.sum())
        ix, iy = np.divmod(k, self.weights.shape[1])
        return np.column_stack([
            rng.uniform(self.xedges[ix], self.xedges[ix + 1]),
            rng.uniform(self.yedges[iy], self.yedges[iy + 1]),
        ])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["x_lo", "x_hi", "y_lo", "y_hi", "weight"])
            for i in range(self.weights.shape[0]):
                for j in range(self.weights.shape[1]):
                    out.writerow([f"{v:.17g}" for v in (
                        self.xedges[i], self.xedges[i + 1],
                        self.yedges[j], self.yedges[j + 1], self.weights[i, j])])


def make_histogram(edges, free_weights) -> HistogramDensity:
    """Histogram whose last bin takes the probability left over by the others.

    Entries within ``1e-12`` below zero are clipped to zero first.
    """
    edges = np.asarray(edges, dtype=np.float64)
    free = np.array(free_weights, dtype=np.float64).ravel()
    if free.size != edges.size - 2:
        raise InvalidParameter(f"expected {edges.size - 2} free weights, got {free.size}")
    if np.any(free < -CLIP_TOL):
        raise NormalizationViolation("free histogram weights must be nonnegative")
    free = np.maximum(free, 0.0)
    total = free.sum()
    if total > 1.0 + CLIP_TOL:
        raise NormalizationViolation(f"free histogram weights sum to {total:.6g} > 1")
    weights = np.append(free, max(1.0 - total, 0.0))
    return HistogramDensity(edges, weights / weights.sum())


def default_histogram(dims: int = 1, init: Optional[Density] = None):
    """Default noise histogram: 50 bins on [-5, 5], or 40x40 bins on [-4, 4]^2.

    Bin masses are taken from ``init`` (midpoint rule) or set uniform.
    """
    if dims == 1:
        edges = np.linspace(-5.0, 5.0, 51)
        if init is None:
            w = np.ones(50)
        else:
            w = _bin_mass_1d(init, edges)
        return HistogramDensity(edges, w / w.sum())
    edges = np.linspace(-4.0, 4.0, 41)
    if init is None:
        w = np.ones((40, 40))
    else:
        w = _bin_mass_2d(init, edges, edges)
    return HistogramDensity2D(edges, edges, w / w.sum())


def _bin_mass_1d(density, edges, sub=20):
    # Gauss-Legendre inside each bin
    t, q = np.polynomial.legendre.leggauss(sub)
    lo, hi = edges[:-1, None], edges[1:, None]
    x = 0.5 * (hi - lo) * t[None, :] + 0.5 * (hi + lo)
    vals = density.pdf(x.ravel()).reshape(x.shape)
    return (vals * q[None, :]).sum(axis=1) * 0.5 * (hi - lo).ravel()


def _bin_mass_2d(density, xedges, yedges, sub=8):
    t, q = np.polynomial.legendre.leggauss(sub)
    xs = (0.5 * np.diff(xedges)[:, None] * t[None, :] + 0.5 * (xedges[1:] + xedges[:-1])[:, None])
    ys = (0.5 * np.diff(yedges)[:, None] * t[None, :] + 0.5 * (yedges[1:] + yedges[:-1])[:, None])
    X = xs[:, None, :, None] + 0 * ys[None, :, None, :]
    Y = ys[None, :, None, :] + 0 * xs[:, None, :, None]
    vals = density.pdf(np.column_stack([X.ravel(), Y.ravel()])).reshape(X.shape)
    w = (vals * q[None, None, :, None] * q[None, None, None, :]).sum(axis=(2, 3))
    return w * 0.25 * np.outer(np.diff(xedges), np.diff(yedges))


# --------------------------------------------------------------------------
# parametric models


@dataclass(frozen=True)
class ParametricModel:
    """One of the toy data families at parameter ``theta``.

    When ``normalized`` is false the model carries a free log-normalizer ``c``
    and its generalized parameter is ``beta = (theta, c)``; ``c`` defaults to
    the true log-partition ``log Z(theta)``.
    """

    family: Family
    theta: float
    normalized: bool = True
    c: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        object.__setattr__(self, "theta", float(self.theta))
        self._check_theta(self.theta)
        if self.normalized:
            if self.c is not None:
                raise InvalidParameter("a normalized model has no free log-normalizer")
        elif self.c is None:
            object.__setattr__(self, "c", self.log_partition(self.theta))

    # -- parameter bookkeeping

    @property
    def dims(self) -> int:
        return self.family.dims

    @property
    def n_params(self) -> int:
        return 1 if self.normalized else 2

    @property
    def beta(self) -> np.ndarray:
        if self.normalized:
            return np.array([self.theta])
        return np.array([self.theta, self.c])

    def _check_theta(self, theta):
        if not math.isfinite(theta):
            raise InvalidParameter(f"theta must be finite, got {theta}")
        if self.family is Family.GAUSS_VAR_1D and not theta > 0:
            raise InvalidParameter(f"variance parameter must be positive, got {theta}")
        if self.family is Family.GAUSS_CORR_2D and not -1.0 < theta < 1.0:
            raise InvalidParameter(f"correlation parameter must lie in (-1, 1), got {theta}")

    def valid_beta(self, beta) -> bool:
        beta = np.asarray(beta, dtype=np.float64)
        if not np.all(np.isfinite(beta)):
            return False
        try:
            self._check_theta(float(beta[0]))
        except InvalidParameter:
            return False
        return True

    def with_beta(self, beta) -> "ParametricModel":
        beta = np.asarray(beta, dtype=np.float64)
        if self.normalized:
            return ParametricModel(self.family, float(beta[0]), True)
        return ParametricModel(self.family, float(beta[0]), False, float(beta[1]))

    def _split(self, beta):
        if beta is None:
            return self.theta, self.c
        beta = np.asarray(beta, dtype=np.float64)
        theta = float(beta[0])
        self._check_theta(theta)
        return theta, (None if self.normalized else float(beta[1]))

    # -- family formulas

    def log_tilde(self, x, theta):
        """Log of the unnormalized density (the negative energy)."""
        x = np.asarray(x, dtype=np.float64)
        if self.family is Family.GAUSS_MEAN_1D:
            return -0.5 * (x - theta) ** 2
        if self.family is Family.GAUSS_VAR_1D:
            return -0.5 * x ** 2 / theta
        s = x[:, 0] ** 2 + x[:, 1] ** 2
        p = x[:, 0] * x[:, 1]
        return -0.5 * (s - 2.0 * theta * p) / (1.0 - theta * theta)

    def dlog_tilde(self, x, theta):
        """Derivative of :meth:`log_tilde` with respect to ``theta``."""
        x = np.asarray(x, dtype=np.float64)
        if self.family is Family.GAUSS_MEAN_1D:
            return x - theta
        if self.family is Family.GAUSS_VAR_1D:
            return 0.5 * x ** 2 / theta ** 2
        s = x[:, 0] ** 2 + x[:, 1] ** 2
        p = x[:, 0] * x[:, 1]
        u = 1.0 - theta * theta
        return p / u - theta * (s - 2.0 * theta * p) / u ** 2

    def log_partition(self, theta) -> float:
        if self.family is Family.GAUSS_MEAN_1D:
            return 0.5 * LOG_2PI
        if self.family is Family.GAUSS_VAR_1D:
            return 0.5 * (LOG_2PI + math.log(theta))
        return LOG_2PI + 0.5 * math.log1p(-theta * theta)

    def dlog_partition(self, theta) -> float:
        if self.family is Family.GAUSS_MEAN_1D:
            return 0.0
        if self.family is Family.GAUSS_VAR_1D:
            return 0.5 / theta
        return -theta / (1.0 - theta * theta)

    # -- model evaluation

    def logpdf(self, x, beta=None):
        """Log model density ``log p_beta(x)`` (possibly unnormalized)."""
        theta, c = self._split(beta)
        if self.normalized:
            return self.log_tilde(x, theta) - self.log_partition(theta)
        return self.log_tilde(x, theta) - c

    def score(self, x, beta=None) -> np.ndarray:
        """Generalized Fisher score, shape ``(n, n_params)``.

        The trailing column is identically ``-1`` for unnormalized models.
        """
        theta, _ = self._split(beta)
        if self.normalized:
            return self.normalized_score(x, theta)[:, None]
        d = self.dlog_tilde(x, theta)
        return np.column_stack([d, -np.ones_like(d)])

    def normalized_score(self, x, theta=None) -> np.ndarray:
        """Classical score of the normalized model in ``theta``."""
        theta = self.theta if theta is None else float(theta)
        return self.dlog_tilde(x, theta) - self.dlog_partition(theta)

    def density(self) -> Density:
        """The data density ``p_d`` at the true parameter."""
        if self.family is Family.GAUSS_MEAN_1D:
            return GaussianDensity(self.theta, 1.0)
        if self.family is Family.GAUSS_VAR_1D:
            return GaussianDensity(0.0, self.theta)
        return CorrelatedGaussian(self.theta)

    def sample(self, n, rng):
        return self.density().sample(n, rng)

    @property
    def name(self) -> str:
        return f"{self.family.value}:{self.theta:g}" + ("" if self.normalized else "+c")


class PartitionModel:
    """Model whose only parameter is the log-normalizer: ``p_c = f / exp(c)``.

    ``f = z_star * p_d`` for a known density ``p_d``; the generalized score
    is the constant ``-1``.
    """

    normalized = False
    n_params = 1

    def __init__(self, data: Density, z_star: float = 1.0):
        if not z_star > 0:
            raise InvalidParameter("z_star must be positive")
        self.data = data
        self.z_star = float(z_star)
        self.dims = data.dims
        self.name = f"partition[{data.name}]"

    @property
    def beta(self):
        return np.array([math.log(self.z_star)])

    def valid_beta(self, beta):
        return bool(np.all(np.isfinite(beta)))

    def with_beta(self, beta):
        return PartitionModel(self.data, math.exp(float(np.asarray(beta)[0])))

    def log_f(self, x):
        return self.data.logpdf(x) + math.log(self.z_star)

    def logpdf(self, x, beta=None):
        c = math.log(self.z_star) if beta is None else float(np.asarray(beta)[0])
        return self.log_f(x) - c

    def score(self, x, beta=None):
        n = np.asarray(x).shape[0]
        return -np.ones((n, 1))

    def density(self):
        return self.data

    def sample(self, n, rng):
        return self.data.sample(n, rng)


def model_score(model, x) -> np.ndarray:
    """Generalized score at the model's true parameter for a single point or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 0 or (model.dims == 2 and x.ndim == 1)
    pts = x.reshape(1, -1) if model.dims == 2 and x.ndim == 1 else np.atleast_1d(x)
    s = model.score(pts)
    return s[0] if single else s


@dataclass(frozen=True)
class FisherMatrices:
    m: np.ndarray
    I: np.ndarray
    J: Optional[np.ndarray] = field(default=None)


def fisher_matrices(model, integrator: Optional[GridSpec] = None) -> FisherMatrices:
    """Score mean, generalized score covariance and classical Fisher information."""
    grid = integrator or default_grid(model.dims)
    x = grid.points
    pd = model.density().pdf(x)
    psi = model.score(x)
    m = integrate_values(pd[:, None] * psi, grid)
    I = integrate_values(pd[:, None, None] * psi[:, :, None] * psi[:, None, :], grid)
    J = None
    if isinstance(model, ParametricModel):
        s = model.normalized_score(x)
        J = np.atleast_2d(integrate_values(pd * s * s, grid))
    return FisherMatrices(np.atleast_1d(m), np.atleast_2d(I), J)


def sample(density, n: int, seed: int) -> np.ndarray:
    """``n`` i.i.d. draws from ``density``, reproducible from ``seed``."""
    if n < 1:
        raise InvalidParameter("sample size must be at least 1")
    return density.sample(int(n), np.random.default_rng(seed))


def parse_density(spec: str, model=None) -> Density:
    """Build a noise density from a short text spec.

    Accepted forms: ``data``, ``normal:MEAN,VAR``, ``corr:RHO``,
    ``param:VALUE`` (same family as ``model``), ``hist:PATH``.
    """
    kind, _, arg = str(spec).partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "data":
            if model is None:
                raise InvalidParameter("noise 'data' needs a data model")
            return model.density()
        if kind == "normal":
            mean, var = (float(v) for v in arg.split(","))
            return GaussianDensity(mean, var)
        if kind == "corr":
            return CorrelatedGaussian(float(arg))
        if kind == "param":
            if model is None:
                raise InvalidParameter("noise 'param:' needs a data model")
            return ParametricModel(model.family, float(arg)).density()
        if kind == "hist":
            return HistogramDensity.from_csv(arg)
    except ValueError as exc:
        raise InvalidParameter(f"cannot parse density spec {spec!r}: {exc}") from exc
    raise InvalidParameter(f"unknown density spec {spec!r}")


def require_scalar(model):
    if model.n_params != 1:
        raise UnsupportedModel("this construction needs a scalar parameter")
