"""Stability sweeps: perturb the data, recompute the posterior, measure how far
it moved.

A sweep produces a :class:`SweepCurve` (one row per data value) and a
:class:`ContinuityReport` flags adjacent-row jumps that are out of scale with
the rest of the curve.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import gpfield
from .bayes import BayesianProblem, delta_posterior, model_selection_posterior, posterior
from .errors import WellposedError, ZeroEvidence
from .measures import DiscreteMeasure, GridMeasure
from .metrics import (
    DEFAULT_TOL,
    format_value,
    hellinger,
    kl_divergence,
    parse_metrics,
    prokhorov,
    total_variation,
    wasserstein_p,
)

JUMP_FACTOR = 50.0
JUMP_FLOOR = 1e-9


def data_grid(lower: float, upper: float, step: float) -> np.ndarray:
    """``lower, lower + step, ..., upper`` with round-off removed, so that
    values like ``1.0`` are hit exactly."""
    if not step > 0 or upper < lower:
        raise WellposedError("data grid needs step > 0 and upper >= lower")
    n = int(round((upper - lower) / step)) + 1
    return np.round(np.linspace(lower, upper, n), 12) + 0.0


def metric_column(name: str, p: float = 1.0) -> str:
    return f"wasserstein_{p:g}" if name == "wasserstein" else name


@dataclass
class SweepCurve:
    """Distances to a reference posterior along increasing parameter values.

    ``columns`` maps column name to an array aligned with ``param``; NaN marks
    a row that could not be computed (its reason is in ``status``).
    """

    param: np.ndarray
    columns: dict
    reference: str = ""
    param_name: str = "param"
    status: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.param = np.asarray(self.param, dtype=float)
        if self.param.size and np.any(np.diff(self.param) <= 0):
            raise WellposedError("sweep parameter values must be strictly increasing")
        if not self.status:
            self.status = ["ok"] * self.param.size
        for k, v in self.columns.items():
            v = np.asarray(v, dtype=float)
            if v.shape != self.param.shape:
                raise WellposedError(f"column {k} has the wrong length")
            self.columns[k] = v

    def __len__(self):
        return self.param.size

    def __getitem__(self, name) -> np.ndarray:
        return self.columns[name]

    @property
    def metrics(self) -> list:
        return list(self.columns)

    def to_csv(self, path=None, report: Optional["ContinuityReport"] = None,
               comments: Sequence[str] = (), with_status=True) -> str:
        names = list(self.columns)
        head = [self.param_name] + names + (["status"] if with_status else [])
        lines = [",".join(head)]
        for i, x in enumerate(self.param):
            vals = [format_value(float(x))]
            for n in names:
                v = self.columns[n][i]
                vals.append("" if math.isnan(v) else format_value(float(v)))
            if with_status:
                vals.append(self.status[i])
            lines.append(",".join(vals))
        if self.reference:
            lines.append(f"# reference: {self.reference}")
        if report is not None:
            lines += [f"# {ln}" for ln in report.lines()]
        lines += [f"# {c}" for c in comments]
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def stability_sweep(
    problem: BayesianProblem,
    y_ref: float,
    y_values: Sequence[float],
    metrics=("hellinger",),
    p: float = 1.0,
    tol: float = DEFAULT_TOL,
    workers: Optional[int] = None,
) -> SweepCurve:
    """Distance between the posterior at ``y_ref`` and the posterior at each of
    ``y_values``.

    KL is taken as ``D_KL(reference || perturbed)``: the information lost by
    using the perturbed posterior in place of the reference one.  Rows whose
    evidence vanishes are kept with empty values and status ``ZeroEvidence``.
    Rows are independent; ``workers > 1`` evaluates them on a thread pool with
    identical results.
    """
    metrics = parse_metrics(metrics)
    ys = np.asarray(y_values, dtype=float)
    if ys.size == 0:
        raise WellposedError("y_values must not be empty")
    ref = posterior(problem, y_ref).measure

    def row(y):
        if y == y_ref:
            post = ref
        else:
            try:
                post = posterior(problem, y).measure
            except ZeroEvidence:
                return None
        return _distances(ref, post, metrics, p, tol)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(row, ys))
    else:
        rows = [row(y) for y in ys]

    names = [metric_column(m, p) for m in metrics]
    cols = {n: np.full(ys.size, np.nan) for n in names}
    status = []
    for i, r in enumerate(rows):
        if r is None:
            status.append("ZeroEvidence")
            continue
        status.append("ok")
        for n in names:
            cols[n][i] = r[n]
    return SweepCurve(ys, cols, reference=f"y_ref={y_ref:g}", status=status)


def _distances(ref, post, metrics, p, tol) -> dict:
    out = {}
    for m in metrics:
        if m == "hellinger":
            out[m] = hellinger(ref, post)
        elif m == "tv":
            out[m] = total_variation(ref, post)
        elif m == "prokhorov":
            out[m] = prokhorov(ref, post, tol)
        elif m == "wasserstein":
            out[metric_column(m, p)] = wasserstein_p(ref, post, p)
        elif m == "kl":
            out[m] = kl_divergence(ref, post)
    return out


def delta_sweep(g_inverse, y_ref: float, y_values, metrics=("tv", "wasserstein"),
                p: float = 1.0, tol: float = DEFAULT_TOL) -> SweepCurve:
    """Sweep for a noise-free problem whose posterior is the point mass at
    ``g_inverse(y)``; distances are evaluated exactly on the atoms."""
    metrics = parse_metrics(metrics)
    ys = np.asarray(y_values, dtype=float)
    ref = DiscreteMeasure.delta(delta_posterior(g_inverse, y_ref))
    names = [metric_column(m, p) for m in metrics]
    cols = {n: np.empty(ys.size) for n in names}
    for i, y in enumerate(ys):
        post = ref if y == y_ref else DiscreteMeasure.delta(delta_posterior(g_inverse, y))
        d = _distances(ref, post, metrics, p, tol)
        for n in names:
            cols[n][i] = d[n]
    return SweepCurve(ys, cols, reference=f"y_ref={y_ref:g}")


def model_selection_sweep(models, prior: GridMeasure, noise_variance: float, y_ref: float,
                          y_values, labels=None) -> SweepCurve:
    """Posterior model weights along the data and the Hellinger distance of the
    joint (parameter, model) posterior to the one at ``y_ref``."""
    models = list(models)
    labels = labels or [f"model{i}" for i in range(len(models))]
    ys = np.asarray(y_values, dtype=float)
    ref_w, ref_posts = model_selection_posterior(models, prior, noise_variance, y_ref)
    cols = {f"weight_{lab}": np.full(ys.size, np.nan) for lab in labels}
    cols["hellinger"] = np.full(ys.size, np.nan)
    status = []
    for i, y in enumerate(ys):
        try:
            w, posts = model_selection_posterior(models, prior, noise_variance, y)
        except ZeroEvidence:
            status.append("ZeroEvidence")
            continue
        status.append("ok")
        # Bhattacharyya coefficient of the joint posterior, summed model by model
        bc = 0.0
        for k, lab in enumerate(labels):
            cols[f"weight_{lab}"][i] = w[k]
            if posts[k] is not None and ref_posts[k] is not None:
                hk = hellinger(ref_posts[k].measure, posts[k].measure)
                bc += math.sqrt(w[k] * ref_w[k]) * (1.0 - hk * hk)
        cols["hellinger"][i] = 0.0 if y == y_ref else math.sqrt(max(0.0, 1.0 - bc))
    return SweepCurve(ys, cols, reference=f"y_ref={y_ref:g}", status=status)


@dataclass
class ContinuityReport:
    """Largest adjacent-row change per metric and the verdict at ``threshold``.

    ``location`` is the parameter value of the row at which the largest
    change first appears (the right end of the adjacent pair).
    """

    max_jump: dict
    location: dict
    threshold: dict
    jump_locations: dict = field(default_factory=dict)

    def verdict(self, metric) -> str:
        return "jump detected" if self.max_jump[metric] > self.threshold[metric] else "continuous"

    @property
    def verdicts(self) -> dict:
        return {m: self.verdict(m) for m in self.max_jump}

    def lines(self) -> list:
        out = []
        for m in self.max_jump:
            out.append(
                f"continuity {m}: verdict={self.verdict(m)} max_jump={self.max_jump[m]:.6g} "
                f"at={self.location[m]:.10g} threshold={self.threshold[m]:.6g}"
            )
        return out


def continuity_report(curve: SweepCurve, threshold: Optional[float] = None,
                      factor: float = JUMP_FACTOR) -> ContinuityReport:
    """Flag jumps between adjacent rows.

    Without an explicit ``threshold`` each metric uses ``factor`` times its
    median adjacent change, but never less than ``1e-9`` so that pure
    round-off on a flat curve is not called a jump.  Rows with missing
    values are skipped.
    """
    if len(curve) < 3:
        raise WellposedError("continuity report needs at least 3 rows")
    max_jump, location, thresh, where = {}, {}, {}, {}
    for name, col in curve.columns.items():
        ok = ~np.isnan(col)
        x, v = curve.param[ok], col[ok]
        if v.size < 2:
            max_jump[name], location[name], thresh[name] = 0.0, float("nan"), float("inf")
            continue
        finite = np.isfinite(v)
        with np.errstate(invalid="ignore"):
            jumps = np.abs(np.diff(v))
        # a step into or out of an infinite KL value is always a jump
        jumps = np.where(finite[1:] & finite[:-1], jumps, np.where(finite[1:] | finite[:-1], np.inf, 0.0))
        t = threshold if threshold is not None else max(factor * float(np.median(jumps)), JUMP_FLOOR)
        k = int(np.argmax(jumps))
        max_jump[name] = float(jumps[k])
        location[name] = float(x[k + 1])
        thresh[name] = float(t)
        where[name] = x[1:][jumps > t].tolist()
    return ContinuityReport(max_jump, location, thresh, where)


# -- Gaussian-field sweep ------------------------------------------------------


@dataclass
class FieldSetup:
    """Image reconstruction experiment: prior, observation pattern, noise and
    the clean image whose observations serve as unperturbed data."""

    image: np.ndarray
    stride: int = 4
    noise_variance: float = 25.0
    prior_mean: float = 128.0
    amplitude: float = 1e4
    lengthscale: float = 15.0
    low_memory: bool = False

    @property
    def n(self) -> int:
        return self.image.shape[0]

    def regression(self) -> gpfield.GPRegression:
        grid = gpfield.ImageGrid(self.n)
        obs = gpfield.ObservationOp(self.n, self.stride)
        if self.low_memory:
            return gpfield.kernel_regression(grid, obs, self.noise_variance, self.prior_mean,
                                             self.amplitude, self.lengthscale)
        prior = gpfield.prior_field(grid, self.prior_mean, self.amplitude, self.lengthscale)
        return gpfield.gp_regression(prior, obs, self.noise_variance)


def gp_stability_sweep(setup: FieldSetup, sigmas: Sequence[float], replicates: int = 20,
                       base_seed: int = 0, regression: Optional[gpfield.GPRegression] = None,
                       workers: Optional[int] = None) -> SweepCurve:
    """Mean squared Hellinger distance and mean relative Frobenius distance
    between the clean posterior and posteriors from noise-perturbed images.

    Replicate ``r`` perturbs with seed ``base_seed + r`` at every sigma.
    Extra columns carry the unsquared Hellinger mean and the standard errors
    of both means.
    """
    if replicates < 1:
        raise WellposedError("replicates must be >= 1")
    sig = np.asarray(sigmas, dtype=float)
    if np.any(sig < 0):
        raise WellposedError("sigmas must be nonnegative")
    reg = regression or setup.regression()
    obs = reg.obs
    clean = reg.mean(obs(setup.image))
    factor = None if reg.posterior_cov is None else reg.posterior_cov.covariance_factor

    def one(args):
        s, r = args
        if s == 0:
            return 0.0, 0.0, 0.0
        pert = gpfield.white_noise_perturb(setup.image, s, base_seed + r)
        m = reg.mean(obs(pert))
        if factor is not None:
            h2 = gpfield.squared_shared_cov_hellinger(m, clean, factor)
        else:
            h2 = gpfield.data_space_sq_hellinger(reg, obs(pert) - obs(setup.image))
        return h2, math.sqrt(h2), gpfield.relative_frobenius(m, clean)

    jobs = [(float(s), r) for s in sig for r in range(replicates)]
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            res = list(pool.map(one, jobs))
    else:
        res = [one(j) for j in jobs]
    res = np.array(res).reshape(sig.size, replicates, 3)
    mean = res.mean(axis=1)
    se = res.std(axis=1, ddof=1) / math.sqrt(replicates) if replicates > 1 else np.zeros_like(mean)
    cols = {
        "mean_sq_hellinger": mean[:, 0],
        "mean_rel_frobenius": mean[:, 2],
        "replicates": np.full(sig.size, float(replicates)),
        "mean_hellinger": mean[:, 1],
        "se_sq_hellinger": se[:, 0],
        "se_rel_frobenius": se[:, 2],
    }
    return SweepCurve(sig, cols, reference="sigma=0", param_name="sigma")
