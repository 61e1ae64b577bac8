"""Gaussian random fields on square pixel lattices and their conditioning on
subsampled, noisy pixels (Gaussian process regression).

Pixels are flattened row-major: pixel ``(i, j)`` of an ``n x n`` image has
index ``i * n + j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .errors import NotPD, WellposedError, ZeroReference

JITTER_START = 1e-10
JITTER_CAP = 1e-6


@dataclass(frozen=True)
class ImageGrid:
    n: int

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise WellposedError("image side length must be a positive integer")

    @property
    def size(self) -> int:
        return self.n * self.n

    def coordinates(self) -> np.ndarray:
        i, j = np.divmod(np.arange(self.size), self.n)
        return np.column_stack([i, j]).astype(float)


def cholesky_with_jitter(cov: np.ndarray):
    """Lower Cholesky factor of ``cov``, adding diagonal jitter if needed.

    Jitter starts at ``1e-10 * max(diag)`` and grows tenfold up to
    ``1e-6 * max(diag)``; beyond that :class:`NotPD` is raised.  Returns the
    factor and the jitter actually added.
    """
    cov = 0.5 * (cov + cov.T)
    scale = float(np.max(np.diag(cov)))
    if not scale > 0:
        raise NotPD("covariance has no positive diagonal entry")
    try:
        return np.linalg.cholesky(cov), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = JITTER_START * scale
    eye = np.eye(cov.shape[0])
    while jitter <= JITTER_CAP * scale * (1 + 1e-12):
        try:
            return np.linalg.cholesky(cov + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= 10
    raise NotPD(f"covariance not positive definite even with jitter {JITTER_CAP:g} x max diagonal")


@dataclass(frozen=True, eq=False)
class GaussianField:
    """Gaussian measure on ``n x n`` images.

    ``covariance_factor`` is the lower Cholesky factor of ``covariance +
    jitter * I``.
    """

    mean: np.ndarray
    covariance: np.ndarray
    covariance_factor: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return self.mean.shape[0]

    @classmethod
    def from_covariance(cls, mean, covariance):
        mean = np.asarray(mean, dtype=float)
        covariance = np.asarray(covariance, dtype=float)
        factor, jitter = cholesky_with_jitter(covariance)
        return cls(mean, covariance, factor, jitter)

    def with_mean(self, mean) -> "GaussianField":
        mean = np.broadcast_to(np.asarray(mean, dtype=float), (self.n, self.n)).copy()
        return GaussianField(mean, self.covariance, self.covariance_factor, self.jitter)

    def marginal_variance(self) -> np.ndarray:
        return np.diag(self.covariance).reshape(self.n, self.n)


@dataclass(frozen=True, eq=False)
class ObservationOp:
    """Selects observed pixels: a regular ``stride`` sublattice (starting at
    ``(0, 0)``) or an explicit boolean ``mask``."""

    n: int
    stride: int = 1
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.mask is None:
            if int(self.stride) != self.stride or self.stride < 1:
                raise WellposedError("stride must be a positive integer")
            i, j = np.divmod(np.arange(self.n * self.n), self.n)
            mask = (i % self.stride == 0) & (j % self.stride == 0)
        else:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != (self.n, self.n):
                raise WellposedError(f"mask must be {self.n}x{self.n}")
            mask = mask.ravel()
        if not mask.any():
            raise WellposedError("observation set is empty")
        object.__setattr__(self, "mask", mask.reshape(self.n, self.n))

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask.ravel())

    def __call__(self, image) -> np.ndarray:
        return np.asarray(image, dtype=float).ravel()[self.indices]


def exp_kernel_cov(grid: ImageGrid, amplitude: float, lengthscale: float) -> np.ndarray:
    """``amplitude * exp(-|p - q| / lengthscale)`` with Euclidean pixel-index
    distance between pixels ``p`` and ``q``."""
    if not (amplitude > 0 and lengthscale > 0):
        raise WellposedError("amplitude and lengthscale must be positive")
    xy = grid.coordinates()
    return amplitude * np.exp(-cdist(xy, xy) / lengthscale)


def prior_field(grid: ImageGrid, mean=128.0, amplitude=1e4, lengthscale=15.0) -> GaussianField:
    cov = exp_kernel_cov(grid, amplitude, lengthscale)
    m = np.full((grid.n, grid.n), float(mean))
    return GaussianField.from_covariance(m, cov)


@dataclass(frozen=True, eq=False)
class GPRegression:
    """Everything about the posterior that does not depend on the data.

    ``gain`` is ``C G^T K^-1`` with ``K = G C G^T + noise I``; the posterior
    mean for data ``d`` is ``m + gain (d - G m)``.
    """

    prior_mean: np.ndarray
    obs: ObservationOp
    noise_variance: float
    gain: np.ndarray
    posterior_cov: Optional[GaussianField]
    innovation: tuple = None

    def mean(self, data) -> np.ndarray:
        data = np.asarray(data, dtype=float).ravel()
        idx = self.obs.indices
        if data.size != idx.size:
            raise WellposedError(f"expected {idx.size} observations, got {data.size}")
        m = self.prior_mean.ravel()
        n = self.prior_mean.shape[0]
        return (m + self.gain @ (data - m[idx])).reshape(n, n)

    def posterior(self, data) -> GaussianField:
        if self.posterior_cov is None:
            raise WellposedError("posterior covariance was not computed")
        return self.posterior_cov.with_mean(self.mean(data))


def _gain(cross_cov, obs: ObservationOp, noise_variance: float):
    """``C G^T K^-1`` and the Cholesky factor of ``K`` from ``C G^T``."""
    if not noise_variance > 0:
        raise WellposedError("noise variance must be positive")
    idx = obs.indices
    K = cross_cov[idx, :] + noise_variance * np.eye(idx.size)
    try:
        cho = scipy.linalg.cho_factor(K, lower=True)
    except np.linalg.LinAlgError:
        raise NotPD("innovation covariance is not positive definite") from None
    gain = scipy.linalg.cho_solve(cho, cross_cov.T).T
    return gain, cho


def kernel_regression(grid: ImageGrid, obs: ObservationOp, noise_variance: float,
                      mean=128.0, amplitude=1e4, lengthscale=15.0) -> GPRegression:
    """Posterior mean machinery for the exponential-kernel prior without ever
    forming the full pixel covariance; memory grows with pixels x observations.
    Use with :func:`data_space_sq_hellinger` on large lattices."""
    if obs.n != grid.n:
        raise WellposedError("observation operator and grid sizes differ")
    xy = grid.coordinates()
    cross = amplitude * np.exp(-cdist(xy, xy[obs.indices]) / lengthscale)
    gain, cho = _gain(cross, obs, noise_variance)
    prior_mean = np.full((grid.n, grid.n), float(mean))
    return GPRegression(prior_mean, obs, noise_variance, gain, None, cho)


def gp_regression(prior: GaussianField, obs: ObservationOp, noise_variance: float,
                  with_covariance: bool = True) -> GPRegression:
    """Precompute the gain and the posterior covariance.

    The covariance is taken in Joseph form, ``A A^T`` with
    ``A = [(I - gain G) L, sqrt(noise) gain]``, and its factor is read off a QR
    decomposition of ``A^T``; unlike ``C - gain G C`` this stays positive
    semidefinite when the noise is tiny.  ``with_covariance=False`` skips it
    (large lattices, where only :func:`data_space_sq_hellinger` is used).
    """
    if obs.n != prior.n:
        raise WellposedError("observation operator and field sizes differ")
    idx = obs.indices
    gain, cho = _gain(prior.covariance[:, idx], obs, noise_variance)
    if not with_covariance:
        return GPRegression(prior.mean, obs, noise_variance, gain, None, cho)
    N = prior.mean.size
    IKG = np.eye(N)
    IKG[:, idx] -= gain
    A = np.hstack([IKG @ prior.covariance_factor, math.sqrt(noise_variance) * gain])
    R = scipy.linalg.qr(A.T, mode="r")[0][:N, :]
    factor = R.T * np.sign(np.diag(R))[None, :]
    cov = factor @ factor.T
    jitter = 0.0
    if not np.all(np.diag(factor) > 0):
        factor, jitter = cholesky_with_jitter(cov)
    field = GaussianField(np.zeros_like(prior.mean), cov, factor, jitter)
    return GPRegression(prior.mean, obs, noise_variance, gain, field, cho)


def data_space_sq_hellinger(reg: "GPRegression", data_change) -> float:
    """Squared Hellinger distance between the posteriors for data ``d`` and
    ``d + data_change``, computed in observation space only.

    The Mahalanobis norm of the mean shift under the posterior covariance
    equals ``u^T (I - noise K^-1) u / noise`` for ``u = data_change``.
    """
    u = np.asarray(data_change, dtype=float).ravel()
    v = scipy.linalg.cho_solve(reg.innovation, u)
    q = (u @ u - reg.noise_variance * (u @ v)) / reg.noise_variance
    return max(0.0, -math.expm1(-max(q, 0.0) / 8.0))


def gp_posterior(prior: GaussianField, obs: ObservationOp, noise_variance: float, data) -> GaussianField:
    """Condition ``prior`` on noisy observations ``data`` of the pixels in ``obs``."""
    return gp_regression(prior, obs, noise_variance).posterior(data)


def shared_cov_hellinger(m1, m2, cov_factor) -> float:
    """Hellinger distance between ``N(m1, C)`` and ``N(m2, C)`` given the
    lower Cholesky factor of ``C``."""
    d = (np.asarray(m1, dtype=float) - np.asarray(m2, dtype=float)).ravel()
    if isinstance(cov_factor, GaussianField):
        cov_factor = cov_factor.covariance_factor
    L = np.atleast_2d(cov_factor)
    if L.shape[0] != d.size:
        raise WellposedError("mean size does not match covariance factor")
    z = scipy.linalg.solve_triangular(L, d, lower=True)
    q = float(z @ z)
    return math.sqrt(max(0.0, -math.expm1(-q / 8.0)))


def squared_shared_cov_hellinger(m1, m2, cov_factor) -> float:
    """Same as :func:`shared_cov_hellinger`, squared, without the round trip
    through ``sqrt`` (keeps resolution for tiny distances)."""
    d = (np.asarray(m1, dtype=float) - np.asarray(m2, dtype=float)).ravel()
    if isinstance(cov_factor, GaussianField):
        cov_factor = cov_factor.covariance_factor
    z = scipy.linalg.solve_triangular(np.atleast_2d(cov_factor), d, lower=True)
    return max(0.0, -math.expm1(-float(z @ z) / 8.0))


def relative_frobenius(m1, m2) -> float:
    """``||m1 - m2||_F / ||m2||_F`` with ``m2`` the reference."""
    m1 = np.asarray(m1, dtype=float)
    m2 = np.asarray(m2, dtype=float)
    ref = np.linalg.norm(m2)
    if ref == 0:
        raise ZeroReference("reference matrix is zero")
    return float(np.linalg.norm(m1 - m2) / ref)


def white_noise_perturb(image, sigma: float, seed: int) -> np.ndarray:
    """Add i.i.d. ``N(0, sigma^2)`` noise to every pixel.

    Draws come from NumPy's PCG64 bit generator seeded with ``seed`` and its
    standard-normal ziggurat sampler, so a seed always yields the same image.
    """
    image = np.asarray(image, dtype=float)
    if sigma < 0:
        raise WellposedError("sigma must be nonnegative")
    if sigma == 0:
        return image.copy()
    rng = np.random.Generator(np.random.PCG64(seed))
    return image + sigma * rng.standard_normal(image.shape)


def synthetic_image(n: int = 32) -> np.ndarray:
    """Deterministic test image in ``[0, 255]``: a smooth bump plus a
    checkerboard band across the middle rows."""
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    c = (n - 1) / 2
    r2 = ((i - c) ** 2 + (j - 0.6 * c) ** 2) / (0.35 * n) ** 2
    img = 60 + 150 * np.exp(-r2)
    band = (i >= 0.6 * n) & (i < 0.8 * n)
    block = max(1, n // 8)
    checker = ((i // block + j // block) % 2) * 2 - 1
    img = img + np.where(band, 40 * checker, 0)
    return np.clip(img, 0, 255)


def write_matrix_csv(matrix, path):
    matrix = np.asarray(matrix, dtype=float)
    lines = [",".join(f"{v:.17g}" for v in row) for row in matrix]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise WellposedError(f"{path}:{lineno}: {exc}") from None
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise WellposedError(f"{path}: ragged or empty matrix")
    return np.array(rows)


def write_pgm(matrix, path, vmin=0.0, vmax=255.0):
    """8-bit ASCII PGM (P2), values clipped to ``[vmin, vmax]``."""
    m = np.asarray(matrix, dtype=float)
    scaled = np.clip(np.rint((m - vmin) / (vmax - vmin) * 255), 0, 255).astype(int)
    lines = ["P2", f"{m.shape[1]} {m.shape[0]}", "255"]
    lines += [" ".join(str(v) for v in row) for row in scaled]
    Path(path).write_text("\n".join(lines) + "\n")


def read_pgm(path) -> np.ndarray:
    tokens = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0]
        tokens.extend(line.split())
    if not tokens or tokens[0] != "P2":
        raise WellposedError(f"{path}: not an ASCII PGM (P2) file")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    vals = np.array([int(t) for t in tokens[4:4 + w * h]], dtype=float)
    if vals.size != w * h:
        raise WellposedError(f"{path}: truncated pixel data")
    return vals.reshape(h, w) * (255.0 / maxval)
