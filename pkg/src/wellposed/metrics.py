"""Distances and divergences between probability measures.

Grid measures are compared node-wise with trapezoid quadrature (Hellinger,
total variation, Kullback-Leibler) or through their quantile functions
(Wasserstein).  The Prokhorov metric works on atoms: feasibility of a radius
``eps`` is a max-flow problem on the bipartite graph linking atoms at distance
at most ``eps``, and the radius itself is found by bisection.

The ``*_bruteforce`` functions are slow reference oracles and share no code
with the fast paths they check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, fields
from typing import Iterable, Optional

import numpy as np

from .errors import GridMismatch, TooLarge, WellposedError
from .measures import DiscreteMeasure, Gaussian1D, GridMeasure, to_discrete

METRIC_NAMES = ("hellinger", "tv", "prokhorov", "wasserstein", "kl")
DEFAULT_TOL = 1e-6


def _same_grid(a: GridMeasure, b: GridMeasure):
    if a.grid != b.grid:
        raise GridMismatch(f"grids differ: {a.grid} vs {b.grid}")


def _common_support(a: DiscreteMeasure, b: DiscreteMeasure):
    """Weights of ``a`` and ``b`` on the union of their atom locations."""
    x = np.union1d(a.locations, b.locations)
    wa = np.zeros_like(x)
    wb = np.zeros_like(x)
    wa[np.searchsorted(x, a.locations)] = a.weights
    wb[np.searchsorted(x, b.locations)] = b.weights
    return x, wa, wb


def _as_discrete(m):
    return to_discrete(m) if isinstance(m, GridMeasure) else m


def hellinger(a, b) -> float:
    """``sqrt(1/2 * int (sqrt(pa) - sqrt(pb))^2)``; grid or discrete inputs."""
    if isinstance(a, GridMeasure) and isinstance(b, GridMeasure):
        _same_grid(a, b)
        h2 = 0.5 * a.grid.integrate((np.sqrt(a.density) - np.sqrt(b.density)) ** 2)
    else:
        _, wa, wb = _common_support(_as_discrete(a), _as_discrete(b))
        h2 = 0.5 * float(np.sum((np.sqrt(wa) - np.sqrt(wb)) ** 2))
    return math.sqrt(min(max(h2, 0.0), 1.0))


def total_variation(a, b) -> float:
    """Half the L1 distance between densities (equal to the sup over events)."""
    if isinstance(a, GridMeasure) and isinstance(b, GridMeasure):
        _same_grid(a, b)
        tv = 0.5 * a.grid.integrate(np.abs(a.density - b.density))
    else:
        _, wa, wb = _common_support(_as_discrete(a), _as_discrete(b))
        tv = 0.5 * float(np.sum(np.abs(wa - wb)))
    return min(max(tv, 0.0), 1.0)


def kl_divergence(a, b) -> float:
    """``D_KL(a || b) = int pa log(pa / pb)``.

    Nodes with ``pa = 0`` contribute nothing.  Returns ``math.inf`` when
    ``pb`` vanishes somewhere ``pa`` does not.
    """
    if isinstance(a, GridMeasure) and isinstance(b, GridMeasure):
        _same_grid(a, b)
        pa, pb, w = a.density, b.density, a.grid.weights
    else:
        _, pa, pb = _common_support(_as_discrete(a), _as_discrete(b))
        w = np.ones_like(pa)
    on = pa > 0
    if np.any(pb[on] == 0):
        return math.inf
    val = float(np.dot(w[on], pa[on] * np.log(pa[on] / pb[on])))
    return max(val, 0.0)


def _discrete_wasserstein(a: DiscreteMeasure, b: DiscreteMeasure, p) -> float:
    # Both quantile functions are step functions; integrate exactly between
    # the merged jump levels.
    ca = np.cumsum(a.weights)
    cb = np.cumsum(b.weights)
    ca[-1] = cb[-1] = 1.0
    levels = np.union1d(ca, cb)
    lo = np.concatenate([[0.0], levels[:-1]])
    du = levels - lo
    mid = lo + 0.5 * du
    ia = np.minimum(np.searchsorted(ca, mid, side="left"), len(ca) - 1)
    ib = np.minimum(np.searchsorted(cb, mid, side="left"), len(cb) - 1)
    cost = float(np.dot(du, np.abs(a.locations[ia] - b.locations[ib]) ** p))
    return cost ** (1.0 / p)


def wasserstein_p(a, b, p=1.0, n_levels: Optional[int] = None) -> float:
    """Wasserstein distance of order ``p`` via the 1D quantile identity.

    For grid measures the integral over quantile levels uses the trapezoid
    rule on ``n_levels`` points (default ``4 * n + 1``); for discrete
    measures it is exact.
    """
    if p < 1:
        raise WellposedError(f"Wasserstein order must be >= 1, got {p}")
    if isinstance(a, GridMeasure) and isinstance(b, GridMeasure):
        _same_grid(a, b)
        if a is b:
            return 0.0
        n_levels = n_levels or 4 * a.grid.n + 1
        u = np.linspace(0.0, 1.0, n_levels)
        diff = np.abs(a.quantile(u) - b.quantile(u)) ** p
        cost = (diff.sum() - 0.5 * (diff[0] + diff[-1])) / (n_levels - 1)
        return float(cost) ** (1.0 / p)
    return _discrete_wasserstein(_as_discrete(a), _as_discrete(b), p)


def strassen_flow(a: DiscreteMeasure, b: DiscreteMeasure, eps: float) -> float:
    """Maximum mass of a coupling of ``a`` and ``b`` that stays within ``eps``
    of the diagonal.

    Source -> atoms of ``a`` (capacity = weight) -> atoms of ``b`` within
    distance ``eps`` (unbounded) -> sink (capacity = weight).  On the line the
    neighbourhood of each ``a`` atom is an index interval of ``b`` whose ends
    are nondecreasing, so augmenting greedily into the leftmost reachable
    residual capacity is an exact max-flow algorithm, linear in the atom count.
    """
    xa, wa = a.locations, a.weights
    yb = b.locations
    left = np.searchsorted(yb, xa - eps, side="left")
    right = np.searchsorted(yb, xa + eps, side="right")
    residual = b.weights.astype(float).tolist()
    left = left.tolist()
    right = right.tolist()
    flow = 0.0
    j = 0
    for i, supply in enumerate(wa.tolist()):
        if j < left[i]:
            j = left[i]
        k = j
        while supply > 0 and k < right[i]:
            take = residual[k] if residual[k] < supply else supply
            residual[k] -= take
            supply -= take
            flow += take
            if residual[k] <= 0:
                k += 1
        j = k
    return flow


def prokhorov(a, b, tol: float = DEFAULT_TOL) -> float:
    """Prokhorov distance by bisection on the Strassen coupling criterion.

    ``eps`` is feasible when some coupling puts at most ``eps`` mass farther
    than ``eps`` from the diagonal, i.e. when the max flow above is at least
    ``1 - eps``.  The result is an upper bound within ``tol`` of the true
    value (exactly 0 for equal measures).
    """
    if not tol > 0:
        raise WellposedError("tolerance must be positive")
    a, b = _as_discrete(a), _as_discrete(b)

    def feasible(eps):
        return strassen_flow(a, b, eps) >= 1.0 - eps - 1e-12

    if feasible(0.0):
        return 0.0
    allx = np.concatenate([a.locations, b.locations])
    lo, hi = 0.0, float(allx.max() - allx.min()) + 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def prokhorov_bruteforce(a: DiscreteMeasure, b: DiscreteMeasure, tol: float = DEFAULT_TOL) -> float:
    """Reference Prokhorov distance from the set-enlargement definition.

    Every subset ``B`` of each support is checked against
    ``mu(B) <= nu(B^eps) + eps`` with open enlargements, in both directions.
    Exponential in the atom count; limited to 15 atoms per measure.
    """
    if len(a) > 15 or len(b) > 15:
        raise TooLarge("prokhorov_bruteforce handles at most 15 atoms per measure")

    def subsets(k):
        return np.array(list(itertools.product([0.0, 1.0], repeat=k)))

    Sa, Sb = subsets(len(a)), subsets(len(b))
    dist = np.abs(a.locations[:, None] - b.locations[None, :])

    def one_side(S, w_from, w_to, d, eps):
        mass = S @ w_from
        reach = (S @ (d < eps).astype(float)) > 0
        return np.all(mass <= reach @ w_to + eps + 1e-12)

    def feasible(eps):
        return one_side(Sa, a.weights, b.weights, dist, eps) and one_side(
            Sb, b.weights, a.weights, dist.T, eps
        )

    allx = np.concatenate([a.locations, b.locations])
    lo, hi = 0.0, float(allx.max() - allx.min()) + 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _transport_constraints(wa, wb):
    m, n = len(wa), len(wb)
    rows = []
    for i in range(m):
        r = np.zeros((m, n))
        r[i, :] = 1
        rows.append(r.ravel())
    for j in range(n - 1):
        r = np.zeros((m, n))
        r[:, j] = 1
        rows.append(r.ravel())
    return np.array(rows), np.concatenate([wa, wb[:-1]])


def wasserstein_bruteforce(a: DiscreteMeasure, b: DiscreteMeasure, p=1.0) -> float:
    """Optimal transport cost over all couplings, without the quantile shortcut.

    Up to 4 atoms per side every vertex of the transportation polytope is
    enumerated; up to 7 the linear program is handed to HiGHS.
    """
    m, n = len(a), len(b)
    if m > 7 or n > 7:
        raise TooLarge("wasserstein_bruteforce handles at most 7 atoms per measure")
    cost = (np.abs(a.locations[:, None] - b.locations[None, :]) ** p).ravel()
    A, rhs = _transport_constraints(a.weights, b.weights)
    if m <= 4 and n <= 4:
        r = m + n - 1
        combos = np.array(list(itertools.combinations(range(m * n), r)))
        blocks = np.transpose(A[:, combos], (1, 0, 2))
        # transportation matrices are totally unimodular: det is 0 or +-1
        det = np.linalg.det(blocks)
        ok = np.abs(det) > 0.5
        sol = np.linalg.solve(blocks[ok], np.broadcast_to(rhs, (ok.sum(), r))[..., None])[..., 0]
        feas = np.all(sol >= -1e-12, axis=1)
        best = np.min(np.sum(sol[feas] * cost[combos[ok][feas]], axis=1))
    else:
        from scipy.optimize import linprog

        res = linprog(cost, A_eq=A, b_eq=rhs, bounds=(0, None), method="highs")
        if not res.success:
            raise WellposedError(f"transport LP failed: {res.message}")
        best = res.fun
    return max(float(best), 0.0) ** (1.0 / p)


def gaussian_hellinger(a: Gaussian1D, b: Gaussian1D) -> float:
    sa, sb = a.std, b.std
    s2 = a.variance + b.variance
    bc = math.sqrt(2 * sa * sb / s2) * math.exp(-((a.mean - b.mean) ** 2) / (4 * s2))
    return math.sqrt(max(0.0, 1.0 - bc))


def gaussian_kl(a: Gaussian1D, b: Gaussian1D) -> float:
    """``D_KL(a || b)`` for univariate Gaussians."""
    return (
        math.log(b.std / a.std)
        + (a.variance + (a.mean - b.mean) ** 2) / (2 * b.variance)
        - 0.5
    )


@dataclass
class DistanceReport:
    hellinger: Optional[float] = None
    tv: Optional[float] = None
    prokhorov: Optional[float] = None
    wasserstein: Optional[float] = None
    p: Optional[float] = None
    kl: Optional[float] = None

    HEADER = "hellinger,tv,prokhorov,wasserstein_p,p,kl"

    def chain_holds(self, tol=DEFAULT_TOL) -> bool:
        """Prokhorov <= TV <= sqrt(2) Hellinger, where all three are present."""
        if None in (self.hellinger, self.tv, self.prokhorov):
            return True
        return (
            self.prokhorov <= self.tv + 2 * tol
            and self.tv <= math.sqrt(2) * self.hellinger + 1e-9
        )

    def csv_row(self) -> str:
        return ",".join(
            format_value(getattr(self, f.name)) for f in fields(self)
        )


def format_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    return f"{v:.17g}"


def parse_metrics(spec) -> list:
    """Turn ``"hellinger,kl"`` (or a list) into a validated metric list."""
    names = spec.split(",") if isinstance(spec, str) else list(spec)
    names = [n.strip().lower() for n in names if n.strip()]
    aliases = {"total_variation": "tv", "wasserstein_p": "wasserstein", "w": "wasserstein"}
    names = [aliases.get(n, n) for n in names]
    bad = [n for n in names if n not in METRIC_NAMES]
    if bad:
        raise WellposedError(f"unknown metric(s) {bad}; choose from {', '.join(METRIC_NAMES)}")
    return list(dict.fromkeys(names))


def distance_report(a, b, metrics: Iterable[str] = METRIC_NAMES, p=1.0, tol=DEFAULT_TOL,
                    kl_reversed=False) -> DistanceReport:
    """Evaluate the requested metrics between ``a`` and ``b``.

    KL is ``D_KL(a || b)`` unless ``kl_reversed``.
    """
    metrics = parse_metrics(metrics)
    rep = DistanceReport()
    if "hellinger" in metrics:
        rep.hellinger = hellinger(a, b)
    if "tv" in metrics:
        rep.tv = total_variation(a, b)
    if "prokhorov" in metrics:
        rep.prokhorov = prokhorov(a, b, tol)
    if "wasserstein" in metrics:
        rep.wasserstein = wasserstein_p(a, b, p)
        rep.p = float(p)
    if "kl" in metrics:
        rep.kl = kl_divergence(b, a) if kl_reversed else kl_divergence(a, b)
    return rep
