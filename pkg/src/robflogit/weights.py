"""Hard-rejection covariate weights.

Two families: a robust Mahalanobis distance of the projected scores built on
the Stahel--Donoho location/scatter estimator, and the functional boxplot
computed on the raw curves.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .funcbasis import CurveSet, LabeledSample

__all__ = [
    "WeightSpec",
    "RobustLocationScatter",
    "DegenerateDirectionsError",
    "InsufficientSampleError",
    "stahel_donoho",
    "sd_outlyingness",
    "mahalanobis_hr",
    "modified_band_depth",
    "band_depth",
    "fbplot_outliers",
    "compute_weights",
]

MAD_CONSISTENCY = 1.4826


class DegenerateDirectionsError(ValueError):
    pass


class InsufficientSampleError(ValueError):
    pass


@dataclass(frozen=True)
class WeightSpec:
    kind: str = "unit"
    quantile: float = 0.975
    n_directions: int = 500
    rng_seed: int = 0
    factor: float = 1.5

    def __post_init__(self):
        if self.kind not in ("unit", "mahalanobis_hr", "fbplot_hr"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if not 0 < self.quantile < 1:
            raise ValueError("quantile must lie in (0, 1)")
        if self.n_directions < 100:
            raise ValueError("use at least 100 projection directions")
        if not self.factor > 0:
            raise ValueError("fbplot factor must be positive")

    @classmethod
    def unit(cls) -> "WeightSpec":
        return cls("unit")

    @classmethod
    def mahalanobis_hr(cls, quantile=0.975, n_directions=500, rng_seed=0) -> "WeightSpec":
        return cls("mahalanobis_hr", quantile=quantile, n_directions=n_directions, rng_seed=rng_seed)

    @classmethod
    def fbplot_hr(cls, factor=1.5) -> "WeightSpec":
        return cls("fbplot_hr", factor=factor)


@dataclass(frozen=True, eq=False)
class RobustLocationScatter:
    location: np.ndarray
    scatter: np.ndarray
    outlyingness: np.ndarray

    def mahalanobis_sq(self, x: np.ndarray) -> np.ndarray:
        diff = np.atleast_2d(x) - self.location
        sol = np.linalg.solve(self.scatter, diff.T)
        return np.einsum("ij,ji->i", diff, sol)


def _subsets(n: int, k: int, n_directions: int, rng_seed: int) -> np.ndarray:
    total = math.comb(n, k)
    if total <= n_directions:
        return np.array(list(itertools.combinations(range(n), k)), dtype=np.intp)
    rng = np.random.Generator(np.random.Philox(key=rng_seed))
    chosen: dict[tuple, None] = {}
    while len(chosen) < n_directions:
        draw = np.sort(rng.random((n_directions, n)).argsort(axis=1)[:, :k], axis=1)
        for row in map(tuple, draw):
            chosen.setdefault(row, None)
            if len(chosen) == n_directions:
                break
    return np.array(list(chosen), dtype=np.intp)


def _directions(x: np.ndarray, n_directions: int, rng_seed: int) -> np.ndarray:
    """Unit normals of hyperplanes through k-point subsets of the data."""
    n, k = x.shape
    if k == 1:
        return np.ones((1, 1))
    idx = _subsets(n, k, n_directions, rng_seed)
    pts = x[idx]  # (D, k, k)
    spans = pts[:, 1:, :] - pts[:, :1, :]
    _, sv, vt = np.linalg.svd(spans, full_matrices=True)
    normals = vt[:, -1, :]
    ok = sv[:, -1] > 1e-12 * np.maximum(sv[:, 0], 1e-300)
    return normals[ok]


def sd_outlyingness(scores, n_directions: int = 500, rng_seed: int = 0) -> np.ndarray:
    """max_a |a'x_i - med(a'X)| / MAD(a'X) over the sampled directions."""
    x = np.asarray(scores, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    dirs = _directions(x, n_directions, rng_seed)
    proj = x @ dirs.T
    med = np.median(proj, axis=0)
    dev = np.abs(proj - med)
    mad = MAD_CONSISTENCY * np.median(dev, axis=0)
    keep = mad > 1e-12 * np.maximum(np.abs(med), 1.0)
    if not np.any(keep):
        raise DegenerateDirectionsError("every projection direction has zero MAD")
    return np.max(dev[:, keep] / mad[keep], axis=1)


def stahel_donoho(scores, n_directions: int = 500, rng_seed: int = 0) -> RobustLocationScatter:
    x = np.asarray(scores, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n, k = x.shape
    if n <= k:
        raise DegenerateDirectionsError(f"need n > k, got n={n}, k={k}")
    if np.linalg.matrix_rank(x - x.mean(axis=0)) < k:
        raise DegenerateDirectionsError("score matrix is rank deficient")
    out = sd_outlyingness(x, n_directions, rng_seed)
    cut = chi2.ppf(0.99, k)
    with np.errstate(divide="ignore"):
        w = np.minimum(1.0, cut / out**2)
    mu = w @ x / w.sum()
    diff = x - mu
    sigma = (w[:, None] * diff).T @ diff / w.sum()
    sigma = 0.5 * (sigma + sigma.T)
    # rescale so the median squared distance matches the chi-square median
    d2 = np.einsum("ij,ji->i", diff, np.linalg.solve(sigma, diff.T))
    sigma = sigma * np.median(d2) / chi2.ppf(0.5, k)
    return RobustLocationScatter(mu, sigma, out)


def mahalanobis_hr(scores, spec: WeightSpec | None = None) -> np.ndarray:
    spec = spec or WeightSpec.mahalanobis_hr()
    x = np.asarray(scores, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    est = stahel_donoho(x, spec.n_directions, spec.rng_seed)
    d2 = est.mahalanobis_sq(x)
    return (d2 <= chi2.ppf(spec.quantile, x.shape[1])).astype(float)


def _values(curves) -> np.ndarray:
    vals = curves.values if isinstance(curves, CurveSet) else np.asarray(curves, dtype=float)
    if vals.shape[0] < 3:
        raise InsufficientSampleError("band depths need at least 3 curves")
    return vals


def _mbd_counts(vals: np.ndarray) -> np.ndarray:
    # pairs with min <= x_i <= max = all pairs - pairs strictly below - strictly above
    n, G = vals.shape
    srt = np.sort(vals, axis=0)
    counts = np.zeros(n, dtype=np.int64)
    for g in range(G):
        col = vals[:, g]
        below = np.searchsorted(srt[:, g], col, side="left")
        above = n - np.searchsorted(srt[:, g], col, side="right")
        counts += n * (n - 1) // 2 - below * (below - 1) // 2 - above * (above - 1) // 2
    return counts


def modified_band_depth(curves) -> np.ndarray:
    vals = _values(curves)
    n, G = vals.shape
    return _mbd_counts(vals) / (math.comb(n, 2) * G)


def band_depth(curves) -> np.ndarray:
    """Fraction of curve pairs whose band contains X_i over the whole grid."""
    vals = _values(curves)
    n, G = vals.shape
    iu = np.triu_indices(n, 1)
    depth = np.empty(n)
    for i in range(n):
        strict = np.concatenate([vals > vals[i], vals < vals[i]], axis=1).astype(np.float32)
        clash = strict @ strict.T  # both above or both below somewhere
        depth[i] = np.count_nonzero(clash[iu] == 0)
    return depth / math.comb(n, 2)


def fbplot_outliers(curves, factor: float = 1.5) -> np.ndarray:
    """Functional boxplot outlier flags (1 = outlier)."""
    vals = curves.values if isinstance(curves, CurveSet) else np.asarray(curves, dtype=float)
    n = vals.shape[0]
    if n < 4:
        raise InsufficientSampleError("the functional boxplot needs at least 4 curves")
    bd = band_depth(vals)
    mbd = modified_band_depth(vals)
    order = np.lexsort((-mbd, -bd))
    central = vals[order[: math.ceil(n / 2)]]
    lo, hi = central.min(axis=0), central.max(axis=0)
    width = hi - lo
    if not np.any(width > 0):
        return np.zeros(n)
    if not np.isfinite(factor):
        return np.zeros(n)
    out = np.any((vals < lo - factor * width) | (vals > hi + factor * width), axis=1)
    return out.astype(float)


def compute_weights(sample: LabeledSample, scores, spec: WeightSpec) -> np.ndarray:
    if spec.kind == "unit":
        return np.ones(sample.n)
    if spec.kind == "mahalanobis_hr":
        scores = np.asarray(scores, dtype=float)
        if scores.shape[0] != sample.n:
            raise ValueError("score rows do not match the sample size")
        return mahalanobis_hr(scores, spec)
    return 1.0 - fbplot_outliers(sample.curves, spec.factor)
