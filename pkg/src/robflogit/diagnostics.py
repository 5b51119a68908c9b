"""Deviance residuals, the deviance QQ-plot machinery and prediction errors."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .funcbasis import (
    BasisMatrix,
    CurveSet,
    IncompatibleGridError,
    project,
    trapezoid_weights,
)
from .loss import logistic

__all__ = [
    "ResidualReport",
    "predict_probs",
    "deviance_residuals",
    "fhat_D",
    "fhat_D_quantile",
    "flag_outliers",
    "diagnose",
    "pi_p_hat",
    "pi_tilde_hat",
]

PROB_CLAMP = 1e-12


@dataclass(eq=False)
class ResidualReport:
    probs: np.ndarray
    residuals: np.ndarray
    cutoff_low: float
    cutoff_high: float
    outlier_flags: np.ndarray
    qq_pairs: np.ndarray  # (n, 2): theoretical quantile, sorted residual
    clamped: np.ndarray


def predict_probs(fit, basis: BasisMatrix | None, curves: CurveSet) -> np.ndarray:
    basis = basis if basis is not None else fit.basis
    return logistic(fit.linear_predictor(project(curves, basis)))


def _clamp(probs):
    p = np.asarray(probs, dtype=float)
    clamped = (p < PROB_CLAMP) | (p > 1 - PROB_CLAMP)
    if np.any(clamped):
        warnings.warn(f"{int(clamped.sum())} fitted probabilities clamped away from 0/1", stacklevel=3)
    return np.clip(p, PROB_CLAMP, 1 - PROB_CLAMP), clamped


def deviance_residuals(responses, probs) -> np.ndarray:
    """sign(y - p) sqrt(-2 [y log p + (1 - y) log(1 - p)])."""
    y = np.asarray(responses, dtype=float)
    p, _ = _clamp(probs)
    pos = np.sqrt(-2.0 * np.log(p))
    neg = -np.sqrt(-2.0 * np.log1p(-p))
    return np.where(y == 1, pos, neg)


def _atoms(probs):
    # residual value if y were 1 (weight p) and if y were 0 (weight 1 - p)
    p, _ = _clamp(probs)
    loc = np.concatenate([np.sqrt(-2.0 * np.log(p)), -np.sqrt(-2.0 * np.log1p(-p))])
    mass = np.concatenate([p, 1.0 - p])
    order = np.argsort(loc, kind="stable")
    loc, mass = loc[order], mass[order]
    cum = np.cumsum(mass)
    return loc, cum / cum[-1]


def fhat_D(d, probs):
    """Model-based distribution function of the signed deviance residual."""
    probs = np.asarray(probs, dtype=float)
    if probs.size == 0:
        raise ValueError("need at least one fitted probability")
    loc, cdf = _atoms(probs)
    idx = np.searchsorted(loc, np.asarray(d, dtype=float), side="right")
    return np.where(idx == 0, 0.0, cdf[np.maximum(idx - 1, 0)])


def fhat_D_quantile(level, probs):
    """Generalised inverse inf{d : F_D(d) >= level}."""
    loc, cdf = _atoms(probs)
    level = np.asarray(level, dtype=float)
    idx = np.searchsorted(cdf, level, side="left")
    out = loc[np.minimum(idx, loc.size - 1)]
    return np.where(level <= 0, -np.inf, out)


def flag_outliers(responses, probs, levels=(0.005, 0.995)) -> ResidualReport:
    y = np.asarray(responses, dtype=float)
    probs = np.asarray(probs, dtype=float)
    _, clamped = _clamp(probs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        d = deviance_residuals(y, probs)
        lo, hi = (float(v) for v in fhat_D_quantile(np.array(levels), probs))
        n = y.size
        theo = fhat_D_quantile((np.arange(1, n + 1) - 0.5) / n, probs)
    flags = ((d < lo) | (d > hi)).astype(int)
    qq = np.column_stack([theo, np.sort(d)])
    return ResidualReport(probs, d, lo, hi, flags, qq, clamped)


def diagnose(fit, sample, levels=(0.005, 0.995)) -> ResidualReport:
    probs = predict_probs(fit, fit.basis, sample.curves)
    return flag_outliers(sample.responses, probs, levels)


def _predictors(fit, truth, curves: CurveSet):
    alpha0, beta0 = truth
    beta0 = np.asarray(beta0, dtype=float)
    if beta0.size != len(curves.grid):
        raise IncompatibleGridError("true slope and curves use different grids")
    if fit.basis is None or fit.basis.grid != curves.grid:
        raise IncompatibleGridError("fit basis and curves use different grids")
    w_q = trapezoid_weights(curves.grid.points)
    true_eta = alpha0 + curves.values @ (w_q * beta0)
    fit_eta = fit.linear_predictor(project(curves, fit.basis))
    return true_eta, fit_eta


def pi_p_hat(fit, truth, test_curves: CurveSet, w=None) -> float:
    """Weighted mean of squared differences between true and fitted probabilities."""
    true_eta, fit_eta = _predictors(fit, truth, test_curves)
    w = np.ones(test_curves.n) if w is None else np.asarray(w, dtype=float)
    return float(np.mean(w * (logistic(true_eta) - logistic(fit_eta)) ** 2))


def pi_tilde_hat(fit, truth, test_curves: CurveSet, w=None) -> float:
    """Same as pi_p_hat on the linear-predictor scale."""
    true_eta, fit_eta = _predictors(fit, truth, test_curves)
    w = np.ones(test_curves.n) if w is None else np.asarray(w, dtype=float)
    return float(np.mean(w * (true_eta - fit_eta) ** 2))
