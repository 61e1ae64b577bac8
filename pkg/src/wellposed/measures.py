"""Probability measures on uniform 1D grids, finite atom sets and Gaussians.

Everything on a grid is integrated with the composite trapezoid rule, and the
CDF is the exact antiderivative of the piecewise-linear interpolant of the
density.  That makes ``cdf``, ``quantile``, ``moment`` and ``to_discrete``
views of one and the same discrete model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AllZero, Degenerate, InsufficientSupport, NonFinite, WellposedError

#: Grid resolution used by every reproduction unless overridden.
DEFAULT_GRID_N = 2001
#: Half-width, in standard deviations, of grids built around Gaussians.
TRUNCATION_SIGMAS = 8.0
#: Minimal half-width, in standard deviations, accepted by ``discretize``.
SUPPORT_SIGMAS = 6.0


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid1D:
    """Uniform partition of ``[lower, upper]`` into ``n - 1`` cells."""

    lower: float
    upper: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise NonFinite("grid bounds must be finite")
        if not self.lower < self.upper:
            raise WellposedError(f"grid needs lower < upper, got [{self.lower}, {self.upper}]")
        if int(self.n) != self.n or self.n < 2:
            raise WellposedError(f"grid needs n >= 2 nodes, got {self.n}")
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return (self.upper - self.lower) / (self.n - 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.lower + np.arange(self.n) * self.h

    @property
    def weights(self) -> np.ndarray:
        """Trapezoid weights: ``h/2`` at the ends, ``h`` inside."""
        w = np.full(self.n, self.h)
        w[0] = w[-1] = self.h / 2
        return w

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    @classmethod
    def cell_centered(cls, lower, upper, n):
        """Grid on the open interval ``(lower, upper)`` with nodes at the centres of
        ``n`` equal cells, so neither endpoint is ever evaluated."""
        h = (upper - lower) / n
        return cls(lower + h / 2, upper - h / 2, n)


@dataclass(frozen=True, eq=False)
class GridMeasure:
    """A probability density sampled at the nodes of a :class:`Grid1D`.

    Build through :func:`normalize` unless the density is known to integrate
    to one already.
    """

    grid: Grid1D
    density: np.ndarray
    _cdf_nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = _readonly(self.density)
        if d.shape != (self.grid.n,):
            raise WellposedError(f"density has shape {d.shape}, grid has {self.grid.n} nodes")
        if not np.all(np.isfinite(d)):
            raise NonFinite("density contains NaN or inf")
        if np.any(d < 0):
            raise WellposedError("density must be nonnegative")
        object.__setattr__(self, "density", d)
        cells = 0.5 * self.grid.h * (d[:-1] + d[1:])
        object.__setattr__(self, "_cdf_nodes", _readonly(np.concatenate([[0.0], np.cumsum(cells)])))

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes

    def mass(self) -> float:
        return self.grid.integrate(self.density)

    def cdf(self, x):
        return cdf(self, x)

    def quantile(self, u):
        return quantile(self, u)

    def moment(self, p=1, absolute=True):
        return moment(self, p, absolute)

    def mean(self) -> float:
        return moment(self, 1, absolute=False)

    def variance(self) -> float:
        mu = self.mean()
        return self.grid.integrate((self.nodes - mu) ** 2 * self.density)

    def to_csv(self, path):
        write_grid_measure(self, path)


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Finitely many weighted atoms at strictly increasing locations."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        x = _readonly(np.atleast_1d(self.locations))
        w = _readonly(np.atleast_1d(self.weights))
        if x.ndim != 1 or x.shape != w.shape:
            raise WellposedError("locations and weights must be 1D of equal length")
        if x.size == 0:
            raise Degenerate("discrete measure has no atoms")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise NonFinite("atoms must be finite")
        if np.any(np.diff(x) <= 0):
            raise WellposedError("atom locations must be strictly increasing")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise WellposedError("atom weights must be nonnegative and sum to 1")
        object.__setattr__(self, "locations", x)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_atoms(cls, locations, weights):
        """Sort, merge duplicate locations and renormalize."""
        x = np.asarray(locations, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if x.size == 0:
            raise Degenerate("discrete measure has no atoms")
        ux, inv = np.unique(x, return_inverse=True)
        uw = np.zeros_like(ux)
        np.add.at(uw, inv, w)
        total = uw.sum()
        if not total > 0:
            raise AllZero("atom weights sum to zero")
        return cls(ux, uw / total)

    @classmethod
    def delta(cls, location):
        return cls(np.array([float(location)]), np.array([1.0]))

    def __len__(self):
        return self.locations.size

    def moment(self, p=1, absolute=True) -> float:
        x = np.abs(self.locations) if absolute else self.locations
        return float(np.dot(self.weights, x**p))


@dataclass(frozen=True)
class Gaussian1D:
    mean: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise NonFinite("Gaussian parameters must be finite")
        if not self.variance > 0:
            raise WellposedError(f"variance must be positive, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-0.5 * (x - self.mean) ** 2 / self.variance) / math.sqrt(2 * math.pi * self.variance)

    def default_grid(self, n=DEFAULT_GRID_N, sigmas=TRUNCATION_SIGMAS) -> Grid1D:
        return Grid1D(self.mean - sigmas * self.std, self.mean + sigmas * self.std, n)


def normalize(grid: Grid1D, raw) -> GridMeasure:
    """Scale nonnegative node values so their trapezoid integral is one."""
    raw = np.asarray(raw, dtype=float)
    if not np.all(np.isfinite(raw)):
        raise NonFinite("raw density contains NaN or inf")
    if np.any(raw < 0):
        raise WellposedError("raw density must be nonnegative")
    z = grid.integrate(raw)
    if not z > 0:
        raise AllZero("raw density is zero on every node")
    return GridMeasure(grid, raw / z)


def cdf(m: GridMeasure, x):
    """CDF of the piecewise-linear density interpolant; scalar in, scalar out."""
    g = m.grid
    xa = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xa)):
        raise NonFinite("cdf needs finite x")
    h = g.h
    pos = np.clip((xa - g.lower) / h, 0.0, g.n - 1)
    k = np.minimum(np.floor(pos).astype(int), g.n - 2)
    s = pos - k
    d = m.density
    a, b = d[k], 0.5 * (d[k + 1] - d[k])
    lo, hi = m._cdf_nodes[k], m._cdf_nodes[k + 1]
    # Mass of the linear density over the cell is s (a + b s) from the left
    # node, or r (d[k+1] - b r) with r = 1 - s from the right node.  Taking the
    # form whose factors are nonnegative and increasing keeps F monotone under
    # rounding; the clip keeps it inside the cell's range.
    left = lo + (h * s) * (a + b * s)
    r = 1.0 - s
    right = hi - (h * r) * (d[k + 1] - b * r)
    F = np.clip(np.where(b >= 0, left, right), lo, hi)
    total = m._cdf_nodes[-1]
    F = np.clip(F / total, 0.0, 1.0)
    return float(F) if F.ndim == 0 else F


def quantile(m: GridMeasure, u):
    """Smallest ``x`` with ``cdf(x) >= u``.

    The bracketing cell is found on the node CDF values and the local
    quadratic is solved in closed form.  ``u = 0`` maps to the left node of
    the first cell carrying mass.
    """
    ua = np.asarray(u, dtype=float)
    if np.any((ua < 0) | (ua > 1)) or not np.all(np.isfinite(ua)):
        raise WellposedError("quantile level must lie in [0, 1]")
    g = m.grid
    F = m._cdf_nodes / m._cdf_nodes[-1]
    target = ua * 1.0
    first_cell = int(np.argmax(F[1:] > 0))
    k = np.searchsorted(F, target, side="left") - 1
    k = np.clip(k, first_cell, g.n - 2)
    d = m.density
    h = g.h
    total = m._cdf_nodes[-1]
    r = np.maximum(target - F[k], 0.0) * total
    a = d[k]
    s = (d[k + 1] - d[k]) / h
    disc = np.maximum(a * a + 2.0 * s * r, 0.0)
    denom = a + np.sqrt(disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > 0, 2.0 * r / denom, 0.0)
    t = np.clip(t, 0.0, h)
    x = g.lower + k * h + t
    return float(x) if x.ndim == 0 else x


def moment(m: GridMeasure, p=1, absolute=True) -> float:
    if p < 1:
        raise WellposedError("moment order must be >= 1")
    x = m.nodes
    f = np.abs(x) ** p if absolute else x**p
    return m.grid.integrate(f * m.density)


def discretize(g: Gaussian1D, grid: Grid1D) -> GridMeasure:
    """Sample a Gaussian pdf on ``grid`` and renormalize.

    Raises InsufficientSupport unless the grid covers ``mean +- 6 std``.
    """
    half = SUPPORT_SIGMAS * g.std
    if grid.lower > g.mean - half or grid.upper < g.mean + half:
        raise InsufficientSupport(
            f"grid [{grid.lower}, {grid.upper}] does not cover mean +- {SUPPORT_SIGMAS:g} std "
            f"= [{g.mean - half}, {g.mean + half}]"
        )
    return normalize(grid, g.pdf(grid.nodes))


def to_discrete(m: GridMeasure) -> DiscreteMeasure:
    """Atoms at the grid nodes carrying their trapezoid masses."""
    w = m.grid.weights * m.density
    w = w / w.sum()
    return DiscreteMeasure(m.nodes, w)


def uniform(grid: Grid1D) -> GridMeasure:
    return normalize(grid, np.ones(grid.n))


def write_grid_measure(m: GridMeasure, path):
    """CSV with header ``x,density``, 17 significant digits."""
    lines = ["x,density"]
    lines += [f"{x:.17g},{d:.17g}" for x, d in zip(m.nodes, m.density)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid_measure(path) -> GridMeasure:
    """Parse a ``x,density`` CSV back into a GridMeasure.

    Nodes must form a uniform grid; the density is taken as stored (it is not
    renormalized).
    """
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip().replace(" ", "") != "x,density":
        raise WellposedError(f"{path}:1: expected header 'x,density'")
    xs, ds = [], []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise WellposedError(f"{path}:{lineno}: expected 2 fields, got {len(parts)}")
        try:
            xs.append(float(parts[0]))
            ds.append(float(parts[1]))
        except ValueError as exc:
            raise WellposedError(f"{path}:{lineno}: {exc}") from None
    if len(xs) < 2:
        raise WellposedError(f"{path}: need at least two nodes")
    grid = Grid1D(xs[0], xs[-1], len(xs))
    span = grid.upper - grid.lower
    if np.max(np.abs(grid.nodes - np.array(xs))) > 1e-9 * span:
        raise WellposedError(f"{path}: nodes are not a uniform grid")
    return GridMeasure(grid, np.array(ds))


def spike(grid: Grid1D, location) -> GridMeasure:
    """Density concentrated on the single node nearest ``location``."""
    raw = np.zeros(grid.n)
    raw[int(np.argmin(np.abs(grid.nodes - location)))] = 1.0
    return normalize(grid, raw)

