"""Exact Gaussian-process regression over grid cells and monotone confidence bounds."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cholesky, solve_triangular, LinAlgError

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class GpNumericalError(RuntimeError):
    """Cholesky factorization failed even after the jitter ladder."""

    def __init__(self, message, condition_number=None, size=None):
        super().__init__(message)
        self.condition_number = condition_number
        self.size = size


def matern52(d, lengthscale: float, output_scale: float = 1.0):
    s = math.sqrt(5.0) * np.asarray(d, dtype=float) / lengthscale
    return output_scale * (1.0 + s + s * s / 3.0) * np.exp(-s)


def rbf(d, lengthscale: float, output_scale: float = 1.0):
    d = np.asarray(d, dtype=float)
    return output_scale * np.exp(-0.5 * (d / lengthscale) ** 2)


_FAMILIES = {"matern52": matern52, "rbf": rbf}


@dataclass(frozen=True)
class KernelSpec:
    family: str = "matern52"
    lengthscale: float = 2.0
    output_scale: float = 1.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if not self.lengthscale > 0 or not self.output_scale > 0:
            raise ValueError("lengthscale and output_scale must be positive")

    def from_distance(self, d):
        return _FAMILIES[self.family](d, self.lengthscale, self.output_scale)

    def __call__(self, xa: np.ndarray, xb: np.ndarray) -> np.ndarray:
        diff = np.asarray(xa, float)[:, None, :] - np.asarray(xb, float)[None, :, :]
        return self.from_distance(np.sqrt((diff ** 2).sum(-1)))


def _cholesky_with_jitter(m: np.ndarray) -> np.ndarray:
    scale = max(float(np.mean(np.diag(m))), 1e-300) if m.size else 1.0
    for jitter in JITTER_LADDER:
        try:
            return cholesky(m + jitter * scale * np.eye(len(m)), lower=True)
        except LinAlgError:
            continue
    try:
        cond = float(np.linalg.cond(m))
    except LinAlgError:
        cond = float("inf")
    raise GpNumericalError(
        f"Cholesky failed for {len(m)}x{len(m)} matrix (cond={cond:.3e}) after jitter up to {JITTER_LADDER[-1]:g}",
        condition_number=cond, size=len(m))


class GpModel:
    """Zero-mean GP on a fixed finite set of cell coordinates.

    The model never changes after construction; :meth:`add_observations`
    returns a new model that reuses the existing factor and extends it by the
    new rows (identical in exact arithmetic to refactoring from scratch).

    Cached quantities, for ``T`` observations over ``n`` cells:

    * ``factor``: lower Cholesky factor of ``K_T + noise_var * I`` (T x T)
    * ``_proj``: ``factor^{-1} K_{T,V}`` (T x n)
    * ``_white``: ``factor^{-1} y`` (T,)
    """

    def __init__(self, kernel: KernelSpec, noise_var: float, coords: np.ndarray,
                 obs_locations: Sequence[int] = (), obs_values: Sequence[float] = (),
                 _prior_cov: np.ndarray | None = None):
        if not noise_var > 0:
            raise ValueError("noise_var must be positive")
        self.kernel = kernel
        self.noise_var = float(noise_var)
        self.coords = np.asarray(coords, dtype=float)
        self._prior_cov = kernel(self.coords, self.coords) if _prior_cov is None else _prior_cov
        n = len(self.coords)
        self.obs_locations = np.zeros(0, dtype=np.int64)
        self.obs_values = np.zeros(0)
        self.factor = np.zeros((0, 0))
        self._proj = np.zeros((0, n))
        self._white = np.zeros(0)
        self._mean = np.zeros(n)
        self._var = np.diag(self._prior_cov).copy()
        if len(obs_locations):
            self._extend(np.asarray(obs_locations, dtype=np.int64), np.asarray(obs_values, dtype=float))

    @property
    def n_obs(self) -> int:
        return len(self.obs_locations)

    @property
    def prior_variance(self) -> np.ndarray:
        return np.diag(self._prior_cov)

    def _child(self) -> "GpModel":
        new = GpModel.__new__(GpModel)
        new.kernel, new.noise_var, new.coords = self.kernel, self.noise_var, self.coords
        new._prior_cov = self._prior_cov
        for name in ("obs_locations", "obs_values", "factor", "_proj", "_white", "_mean", "_var"):
            setattr(new, name, getattr(self, name))
        return new

    def _extend(self, locs: np.ndarray, values: np.ndarray):
        if locs.shape != values.shape or locs.ndim != 1:
            raise ValueError("locations and values must be 1-d and of equal length")
        if not np.all(np.isfinite(values)):
            raise ValueError("observation values must be finite")
        if locs.size and (locs.min() < 0 or locs.max() >= len(self.coords)):
            raise IndexError("observation location out of range")
        k_new_all = self._prior_cov[locs]                      # (k, n)
        k_new_new = k_new_all[:, locs] + self.noise_var * np.eye(len(locs))
        if self.n_obs:
            cross = solve_triangular(self.factor, k_new_all[:, self.obs_locations].T, lower=True).T
            schur = k_new_new - cross @ cross.T
        else:
            cross = np.zeros((len(locs), 0))
            schur = k_new_new
        lower = _cholesky_with_jitter(0.5 * (schur + schur.T))
        proj_new = solve_triangular(lower, k_new_all - cross @ self._proj, lower=True)
        white_new = solve_triangular(lower, values - cross @ self._white, lower=True)

        t = self.n_obs
        factor = np.zeros((t + len(locs), t + len(locs)))
        factor[:t, :t] = self.factor
        factor[t:, :t] = cross
        factor[t:, t:] = lower
        self.factor = factor
        self._proj = np.vstack([self._proj, proj_new])
        self._white = np.concatenate([self._white, white_new])
        self._mean = self._mean + proj_new.T @ white_new
        self._var = self._var - (proj_new ** 2).sum(0)
        self.obs_locations = np.concatenate([self.obs_locations, locs])
        self.obs_values = np.concatenate([self.obs_values, values])

    def add_observations(self, locations: Sequence[int], values: Sequence[float]) -> "GpModel":
        locs = np.atleast_1d(np.asarray(locations, dtype=np.int64))
        vals = np.atleast_1d(np.asarray(values, dtype=float))
        new = self._child()
        if locs.size:
            new._extend(locs, vals)
        return new

    def add_observation(self, at: int, value: float) -> "GpModel":
        return self.add_observations([at], [value])

    def posterior(self, query: Sequence[int] | None = None):
        """Posterior means and marginal variances at ``query`` (all cells if None)."""
        if query is None:
            return self._mean.copy(), np.maximum(self._var, 0.0)
        q = np.asarray(query, dtype=np.int64)
        return self._mean[q], np.maximum(self._var[q], 0.0)

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def stddev(self) -> np.ndarray:
        return np.sqrt(np.maximum(self._var, 0.0))

    def covariance(self, a: Sequence[int], b: Sequence[int]) -> np.ndarray:
        a = np.asarray(a, dtype=np.int64)
        b = np.asarray(b, dtype=np.int64)
        return self._prior_cov[np.ix_(a, b)] - self._proj[:, a].T @ self._proj[:, b]

    def conditioned_variance(self, query: Sequence[int], sites: Sequence[int]) -> np.ndarray:
        """Variance at ``query`` after hypothetical noisy observations at ``sites``.

        Only the observation locations matter, never their values.
        """
        query = np.asarray(query, dtype=np.int64)
        sites = np.asarray(sites, dtype=np.int64)
        _, var = self.posterior(query)
        if sites.size == 0:
            return var
        c_ss = self.covariance(sites, sites) + self.noise_var * np.eye(len(sites))
        c_qs = self.covariance(query, sites)
        low = _cholesky_with_jitter(0.5 * (c_ss + c_ss.T))
        w = solve_triangular(low, c_qs.T, lower=True)
        return np.maximum(var - (w ** 2).sum(0), 0.0)


@dataclass(frozen=True)
class ConfidenceBounds:
    lower: np.ndarray
    upper: np.ndarray
    beta_sqrt: float

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def prior_bounds(model: GpModel, beta_sqrt: float) -> ConfidenceBounds:
    """Wide sentinel interval standing in for (-inf, inf)."""
    half = 10.0 * beta_sqrt * np.sqrt(model.prior_variance)
    return ConfidenceBounds(-half, half.copy(), float(beta_sqrt))


def update_bounds(bounds: ConfidenceBounds, model: GpModel, beta_sqrt: float) -> ConfidenceBounds:
    """Intersect the running interval with the current posterior interval.

    Where the two are disjoint both ends collapse to the midpoint of the gap,
    clipped into the previous interval so neither bound moves backwards.
    """
    mean, std = model.mean, model.stddev
    lower = np.maximum(bounds.lower, mean - beta_sqrt * std)
    upper = np.minimum(bounds.upper, mean + beta_sqrt * std)
    crossed = lower > upper
    if crossed.any():
        mid = 0.5 * (lower[crossed] + upper[crossed])
        mid = np.clip(mid, bounds.lower[crossed], bounds.upper[crossed])
        lower[crossed] = mid
        upper[crossed] = mid
    assert np.all(lower <= upper)
    return ConfidenceBounds(lower, upper, float(beta_sqrt))


def initial_bounds(model: GpModel, beta_sqrt: float) -> ConfidenceBounds:
    return update_bounds(prior_bounds(model, beta_sqrt), model, beta_sqrt)


def width(bounds: ConfidenceBounds, at: int) -> float:
    return float(bounds.upper[at] - bounds.lower[at])


def theoretical_beta_sqrt(norm_bound: float, noise_std: float, gamma: float, delta: float,
                          extra: float = 0.0) -> float:
    """``B + 4 sigma sqrt(gamma + extra + ln(1/delta))``; the information capacity is user supplied."""
    return norm_bound + 4.0 * noise_std * math.sqrt(gamma + extra + math.log(1.0 / delta))
