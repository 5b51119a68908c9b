"""Loss calculus for weighted M-estimation in logistic regression.

All functions are vectorised over ``t`` (and ``y`` where it applies) and work
on the log scale wherever a probability can underflow, so they stay finite
for linear predictors in the hundreds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, expit

__all__ = [
    "LossSpec",
    "logistic",
    "deviance",
    "rho",
    "psi",
    "bigG",
    "phi",
    "nu",
    "score",
    "phi_and_score",
]

_DEVIANCE_CAP = 745.0
_SQRT_PI_2 = 0.5 * np.sqrt(np.pi)
_NEG_TOL = 1e-12


@dataclass(frozen=True)
class LossSpec:
    """Choice of rho applied to the deviance.

    ``kind="classical"`` is rho(t) = t (maximum likelihood up to a constant);
    ``kind="ch"`` is the bounded Croux--Haesbroeck family with tuning ``c``.
    """

    kind: str = "ch"
    c: float = 0.5

    def __post_init__(self):
        if self.kind not in ("classical", "ch"):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == "ch" and not self.c > 0:
            raise ValueError("tuning constant c must be positive")

    @classmethod
    def classical(cls) -> "LossSpec":
        return cls(kind="classical", c=0.5)

    @classmethod
    def croux_haesbroeck(cls, c: float = 0.5) -> "LossSpec":
        return cls(kind="ch", c=float(c))

    @property
    def rho_sup(self) -> float:
        if self.kind == "classical":
            return np.inf
        c = self.c
        return float(np.exp(-np.sqrt(c)) * (2.0 * (1.0 + np.sqrt(c)) + c))


def logistic(t):
    """F(t) = 1 / (1 + exp(-t)), stable for large |t|."""
    return expit(t)


def _log_F(t):
    return -np.logaddexp(0.0, -np.asarray(t, dtype=float))


def _log_1mF(t):
    return -np.logaddexp(0.0, np.asarray(t, dtype=float))


def deviance(y, t):
    """Bernoulli negative log-likelihood -y log F(t) - (1-y) log(1-F(t))."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    d = y * np.logaddexp(0.0, -t) + (1.0 - y) * np.logaddexp(0.0, t)
    return np.minimum(d, _DEVIANCE_CAP)


def _check_nonneg(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < -_NEG_TOL):
        raise ValueError("rho/psi are defined on [0, inf)")
    return np.maximum(t, 0.0)


def rho(spec: LossSpec, t):
    t = _check_nonneg(t)
    if spec.kind == "classical":
        return t
    c = spec.c
    ec = np.exp(-np.sqrt(c))
    st = np.sqrt(t)
    upper = -2.0 * np.exp(-st) * (1.0 + st) + ec * (2.0 * (1.0 + np.sqrt(c)) + c)
    return np.where(t <= c, t * ec, upper)


def psi(spec: LossSpec, t):
    """Derivative of rho."""
    t = _check_nonneg(t)
    if spec.kind == "classical":
        return np.ones_like(t)
    c = spec.c
    return np.where(t <= c, np.exp(-np.sqrt(c)), np.exp(-np.sqrt(t)))


def _G_tail(logu):
    # integral_0^u exp(-sqrt(-log v)) dv, written with s = sqrt(-log u)
    s = np.sqrt(-logu)
    with np.errstate(invalid="ignore"):
        val = np.exp(logu - s) * (1.0 - _SQRT_PI_2 * erfcx(s + 0.5))
    return np.where(np.isneginf(logu), 0.0, val)


def _G_from_log(spec: LossSpec, logu):
    """G evaluated at u = exp(logu); logu may be -inf."""
    logu = np.minimum(np.asarray(logu, dtype=float), 0.0)
    if spec.kind == "classical":
        return np.exp(logu)
    c = spec.c
    ec = np.exp(-np.sqrt(c))
    knot = np.exp(-c)
    below = _G_tail(np.minimum(logu, -c))
    above = _G_tail(np.array(-c)) + (np.exp(logu) - knot) * ec
    return np.where(logu <= -c, below, above)


def bigG(spec: LossSpec, t):
    """G(t) = integral_0^t psi(-log u) du for t in [0, 1]."""
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)) or np.any(np.isnan(t)):
        raise ValueError("G is defined on [0, 1]")
    with np.errstate(divide="ignore"):
        logt = np.log(t)
    return _G_from_log(spec, logt)


def phi(spec: LossSpec, y, t):
    """rho(d(y, t)) + G(F(t)) + G(1 - F(t))."""
    t = np.asarray(t, dtype=float)
    return (
        rho(spec, deviance(y, t))
        + _G_from_log(spec, _log_F(t))
        + _G_from_log(spec, _log_1mF(t))
    )


def nu(spec: LossSpec, t):
    t = np.asarray(t, dtype=float)
    if spec.kind == "classical":
        return np.ones_like(t)
    neg_logF = np.minimum(np.logaddexp(0.0, -t), _DEVIANCE_CAP)
    neg_log1mF = np.minimum(np.logaddexp(0.0, t), _DEVIANCE_CAP)
    return psi(spec, neg_logF) * expit(-t) + psi(spec, neg_log1mF) * expit(t)


def score(spec: LossSpec, y, t):
    """d phi(y, t) / dt = -(y - F(t)) nu(t)."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    # y - F(t) without cancellation: y=1 gives F(-t), y=0 gives -F(t)
    resid = y * expit(-t) - (1.0 - y) * expit(t)
    return -resid * nu(spec, t)


def phi_and_score(spec: LossSpec, y, t):
    """phi and its t-derivative in one pass; used by the optimiser."""
    y = np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    a = np.minimum(np.logaddexp(0.0, -t), _DEVIANCE_CAP)  # -log F
    b = np.minimum(np.logaddexp(0.0, t), _DEVIANCE_CAP)  # -log(1-F)
    F = expit(t)
    Fc = expit(-t)
    d = y * a + (1.0 - y) * b
    if spec.kind == "classical":
        value = d + 1.0
        grad = -(y * Fc - (1.0 - y) * F)
        return value, grad
    value = rho(spec, d) + _G_from_log(spec, -a) + _G_from_log(spec, -b)
    nu_t = psi(spec, a) * Fc + psi(spec, b) * F
    grad = -(y * Fc - (1.0 - y) * F) * nu_t
    return value, grad
