"""Asymptotic and empirical analysis of noise-contrastive estimation.

The package evaluates the asymptotic error of NCE-type estimators built on
Bregman classification losses, designs noise distributions that reduce it,
and checks the predictions against Monte-Carlo fits.
"""
from .bregman import BregmanLoss, Loss, phi_eval, population_loss, reweight_v, reweight_w
from .densities import (
    CorrelatedGaussian,
    Family,
    GaussianDensity,
    HistogramDensity,
    ParametricModel,
    PartitionModel,
    fisher_matrices,
    make_histogram,
    model_score,
    sample,
)
from .divergence import DivergenceKind, divergence
from .errors import ConfigError, NceLabError, NumericalError
from .integrate import GridSpec, McSpec, integrate_grid, mc_expectation

__version__ = "0.1.0"
