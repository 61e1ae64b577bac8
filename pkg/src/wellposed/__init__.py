"""Posteriors of 1D Bayesian inverse problems by quadrature, distances between
them, and stability sweeps over the data."""

from .bayes import BayesianProblem, Likelihood, check_assumptions, evidence, posterior
from .errors import WellposedError
from .measures import DiscreteMeasure, Gaussian1D, Grid1D, GridMeasure
from .metrics import distance_report, hellinger, kl_divergence, prokhorov, total_variation, wasserstein_p
from .sweep import SweepCurve, continuity_report, stability_sweep

__all__ = [
    "BayesianProblem", "Likelihood", "check_assumptions", "evidence", "posterior",
    "WellposedError", "DiscreteMeasure", "Gaussian1D", "Grid1D", "GridMeasure",
    "distance_report", "hellinger", "kl_divergence", "prokhorov", "total_variation",
    "wasserstein_p", "SweepCurve", "continuity_report", "stability_sweep",
]
