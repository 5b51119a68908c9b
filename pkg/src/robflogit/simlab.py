"""Synthetic functional logistic data, contamination schemes and replication studies.

Curves are Gaussian processes with cosine eigenfunctions
phi_1 = 1, phi_j = sqrt(2) cos((j-1) pi t) and score variances j^-2; the true
slope has coefficients 0.3 and 4 (-1)^(j+1) j^-2 in the same system. Because
the system is orthonormal, the true linear predictor of every generated curve
is available exactly from its scores.
"""
from __future__ import annotations

import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .diagnostics import pi_p_hat
from .fit import FitConfig, FitError, select_k
from .funcbasis import CurveSet, Grid, LabeledSample, fourier_design
from .loss import LossSpec
from .weights import WeightSpec

logger = logging.getLogger(__name__)

__all__ = [
    "GeneratorSpec",
    "ScenarioSpec",
    "EstimatorSummary",
    "ReplicationReport",
    "SCHEMES",
    "true_beta_coefficients",
    "true_beta",
    "gen_clean",
    "contaminate",
    "contaminate_detailed",
    "trimmed_metrics",
    "standard_estimators",
    "run_study",
]

SCHEMES = ("C0", "C1", "C2", "C3", "C4", "C5")
_ROLES = {"train": 0, "contamination": 1, "test": 2}


@dataclass(frozen=True)
class GeneratorSpec:
    n: int = 300
    n_terms: int = 50
    grid_size: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.n < 10:
            raise ValueError("n must be at least 10")
        if self.n_terms < 1:
            raise ValueError("n_terms must be at least 1")
        if self.grid_size < 2:
            raise ValueError("grid_size must be at least 2")

    @property
    def grid(self) -> Grid:
        return Grid.equispaced(self.grid_size)


@dataclass(frozen=True)
class ScenarioSpec:
    scheme: str = "C0"
    epsilon: float = 0.0
    m: float = 4.0
    mu_level: float = 25.0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown contamination scheme {self.scheme!r}")
        if not 0 <= self.epsilon <= 0.5:
            raise ValueError("epsilon must lie in [0, 0.5]")
        if self.scheme == "C0" and self.epsilon != 0:
            raise ValueError("C0 is the clean scenario; epsilon must be 0")
        if not self.m > 0:
            raise ValueError("m must be positive")

    @property
    def label(self) -> str:
        return "C0" if self.scheme == "C0" else f"{self.scheme}_{self.epsilon:.2f}"

    def to_dict(self) -> dict:
        return {"scheme": self.scheme, "epsilon": self.epsilon, "m": self.m, "mu_level": self.mu_level}


def true_beta_coefficients(n_terms: int = 50) -> np.ndarray:
    j = np.arange(1, n_terms + 1, dtype=float)
    b = 4.0 * (-1.0) ** (j + 1) / j**2
    b[0] = 0.3
    return b


def true_beta(grid: Grid, n_terms: int = 50) -> np.ndarray:
    return true_beta_coefficients(n_terms) @ fourier_design(grid, n_terms).evals


def _step_integral(T: np.ndarray, n_terms: int) -> np.ndarray:
    """integral_T^1 beta_0(t) dt, in closed form."""
    b = true_beta_coefficients(n_terms)
    f = np.arange(1, n_terms)  # frequency (j - 1) for j >= 2
    tail = -np.sqrt(2.0) * np.sin(np.outer(T, f) * np.pi) / (f * np.pi)
    return b[0] * (1.0 - T) + tail @ b[1:]


def _rng(seed: int, rep: int, role: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep, _ROLES[role]])))


def _sd(n_terms):
    return 1.0 / np.arange(1, n_terms + 1)


def gen_clean(spec: GeneratorSpec, rng: np.random.Generator | None = None):
    """Clean sample and its exact Karhunen--Loeve scores (n x n_terms)."""
    rng = rng if rng is not None else _rng(spec.seed, 0, "train")
    grid = spec.grid
    phi = fourier_design(grid, spec.n_terms).evals
    xi = rng.standard_normal((spec.n, spec.n_terms)) * _sd(spec.n_terms)
    eta = xi @ true_beta_coefficients(spec.n_terms)
    y = (rng.random(spec.n) < expit(eta)).astype(float)
    return LabeledSample(CurveSet(grid, xi @ phi), y), xi


def n_outliers(epsilon: float, n: int) -> int:
    return int(math.floor(epsilon * n + 1e-9))


def contaminate_detailed(sample: LabeledSample, scores, scenario: ScenarioSpec,
                         spec: GeneratorSpec, rng: np.random.Generator | None = None):
    """Replace the last floor(epsilon n) rows with atypical observations.

    Returns ``(sample, eta, mask)`` where ``eta`` holds the exact true linear
    predictor of every row and ``mask`` marks the replaced rows.
    """
    rng = rng if rng is not None else _rng(spec.seed, 0, "contamination")
    n = sample.n
    b = true_beta_coefficients(spec.n_terms)
    eta = np.asarray(scores) @ b
    mask = np.zeros(n, dtype=bool)
    n_out = n_outliers(scenario.epsilon, n) if scenario.scheme != "C0" else 0
    if n_out < 1:
        if scenario.scheme != "C0":
            warnings.warn("epsilon * n < 1: no observations contaminated", stacklevel=2)
        return sample, eta, mask

    grid = sample.curves.grid
    phi = fourier_design(grid, spec.n_terms).evals
    sd = _sd(spec.n_terms)
    z = rng.standard_normal((n_out, spec.n_terms))
    mu = scenario.mu_level
    extra = np.zeros((n_out, grid.points.size))
    extra_eta = np.zeros(n_out)
    scheme = scenario.scheme
    if scheme == "C1":
        xi = 5.0 * z * sd
    elif scheme == "C2":
        xi = scenario.m * b + 0.1 * z * sd
    elif scheme == "C3":
        xi = z * sd
        xi[:, 0] += mu
    elif scheme == "C4":
        xi = z * sd
        xi[:, 0] += mu * np.where(rng.random(n_out) < 0.5, 1.0, -1.0)
    else:  # C5
        xi = z * sd
        sign = np.where(rng.random(n_out) < 0.5, 1.0, -1.0)
        T = rng.random(n_out)
        extra = mu * sign[:, None] * (T[:, None] < grid.points[None, :])
        extra_eta = mu * sign * _step_integral(T, spec.n_terms)
    new_eta = xi @ b + extra_eta
    new_y = np.zeros(n_out) if scheme == "C2" else (new_eta < 0).astype(float)

    values = np.array(sample.curves.values)
    y = np.array(sample.responses)
    values[n - n_out:] = xi @ phi + extra
    y[n - n_out:] = new_y
    eta = eta.copy()
    eta[n - n_out:] = new_eta
    mask[n - n_out:] = True
    return LabeledSample(CurveSet(grid, values), y), eta, mask


def contaminate(sample, scores, scenario: ScenarioSpec, spec: GeneratorSpec, rng=None) -> LabeledSample:
    return contaminate_detailed(sample, scores, scenario, spec, rng)[0]


def trimmed_metrics(estimates, truth, q: int | None = None):
    """Trimmed squared bias and MISE over the central grid points.

    ``estimates`` is (n_R, M); ``q`` defaults to floor(0.05 M).
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    truth = np.asarray(truth, dtype=float)
    M = truth.size
    if est.shape[1] != M:
        raise ValueError("estimates and truth have different grid sizes")
    q = int(M * 0.05) if q is None else q
    if 2 * q >= M:
        raise ValueError("trimming removes the whole grid")
    sl = slice(q, M - q)
    err = est[:, sl] - truth[sl]
    bias2 = float(np.mean(np.mean(err, axis=0) ** 2))
    mise = float(np.mean(np.mean(err**2, axis=0)))
    return bias2, mise


def standard_estimators(n_directions: int = 500) -> list[FitConfig]:
    """CL, M and their Mahalanobis / functional-boxplot weighted versions."""
    cl, ch = LossSpec.classical(), LossSpec.croux_haesbroeck(0.5)
    hr = WeightSpec.mahalanobis_hr(n_directions=n_directions)
    fbb = WeightSpec.fbplot_hr()
    unit = WeightSpec.unit()
    return [
        FitConfig(loss=cl, weights=unit, name="CL"),
        FitConfig(loss=ch, weights=unit, name="M"),
        FitConfig(loss=cl, weights=hr, name="WCL-HR"),
        FitConfig(loss=ch, weights=hr, name="WM-HR"),
        FitConfig(loss=cl, weights=fbb, name="WCL-FBB"),
        FitConfig(loss=ch, weights=fbb, name="WM-FBB"),
    ]


@dataclass
class EstimatorSummary:
    scenario: str
    estimator: str
    alpha_bias: float
    alpha_sd: float
    bias2_trim: float
    mise_trim: float
    pmse: float
    mean_k: float
    n_ok: int
    n_failed: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(eq=False)
class ReplicationReport:
    rows: list[EstimatorSummary]
    n_R: int
    seed: int
    generator: GeneratorSpec
    scenarios: list[ScenarioSpec]
    estimators: list[FitConfig]
    # per (scenario label, estimator name): arrays over replications (nan = failed)
    replicates: dict = field(default_factory=dict, repr=False)
    failures: dict = field(default_factory=dict, repr=False)
    runtimes: dict = field(default_factory=dict, repr=False)

    def row(self, scenario: str, estimator: str) -> EstimatorSummary:
        for r in self.rows:
            if r.scenario == scenario and r.estimator == estimator:
                return r
        raise KeyError((scenario, estimator))

    def to_dict(self) -> dict:
        """Deterministic content; runtimes are deliberately left out."""
        return {
            "n_R": self.n_R,
            "seed": self.seed,
            "generator": self.generator.__dict__,
            "scenarios": [s.to_dict() for s in self.scenarios],
            "estimators": [e.to_dict() for e in self.estimators],
            "rows": [r.to_dict() for r in self.rows],
            "failures": {f"{k[0]}|{k[1]}": v for k, v in self.failures.items()},
        }


def _one_replication(args):
    scenarios, estimators, gen, seed, rep = args
    grid = gen.grid
    beta0 = true_beta(grid, gen.n_terms)
    test, test_scores = gen_clean(gen, _rng(seed, rep, "test"))
    test_truth = (0.0, beta0)
    clean, scores = gen_clean(gen, _rng(seed, rep, "train"))
    out = {}
    for sc in scenarios:
        train = contaminate(clean, scores, sc, gen, _rng(seed, rep, "contamination"))
        for cfg in estimators:
            t0 = time.perf_counter()
            try:
                fit = select_k(train, cfg)
                rec = {
                    "alpha": fit.alpha,
                    "beta": fit.slope(),
                    "pmse": pi_p_hat(fit, test_truth, test.curves, np.ones(test.n)),
                    "k": fit.k,
                    "converged": fit.converged,
                }
            except (FitError, ValueError, np.linalg.LinAlgError) as exc:
                rec = {"error": f"{type(exc).__name__}: {exc}"}
            rec["seconds"] = time.perf_counter() - t0
            out[(sc.label, cfg.name)] = rec
    return rep, out


def run_study(scenarios, estimators, n_R: int, seed: int,
              generator: GeneratorSpec | None = None, n_jobs: int = 1) -> ReplicationReport:
    """Monte Carlo study: per replication a contaminated training sample per
    scenario (sharing the clean draw) and a fresh clean test sample for PMSE.

    Random streams are keyed by (seed, replication, role), so the data do not
    depend on the estimator list or on how replications are scheduled.
    """
    if n_R < 1:
        raise ValueError("n_R must be at least 1")
    gen = generator or GeneratorSpec()
    scenarios = [s if isinstance(s, ScenarioSpec) else ScenarioSpec(*s) for s in scenarios]
    names = [e.name for e in estimators]
    if len(set(names)) != len(names) or any(not nm for nm in names):
        raise ValueError("estimators need distinct, non-empty names")
    jobs = [(scenarios, estimators, gen, seed, rep) for rep in range(n_R)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = dict(pool.map(_one_replication, jobs, chunksize=max(1, n_R // (4 * n_jobs))))
    else:
        results = dict(map(_one_replication, jobs))

    beta0 = true_beta(gen.grid, gen.n_terms)
    rows, replicates, failures, runtimes = [], {}, {}, {}
    for sc in scenarios:
        for cfg in estimators:
            key = (sc.label, cfg.name)
            recs = [results[r][key] for r in range(n_R)]
            ok = [r for r in recs if "error" not in r]
            failures[key] = [(i, r["error"]) for i, r in enumerate(recs) if "error" in r]
            runtimes[key] = float(sum(r["seconds"] for r in recs))
            alpha = np.array([r.get("alpha", np.nan) for r in recs])
            pmse = np.array([r.get("pmse", np.nan) for r in recs])
            ks = np.array([r.get("k", np.nan) for r in recs], dtype=float)
            replicates[key] = {"alpha": alpha, "pmse": pmse, "k": ks}
            if ok:
                betas = np.array([r["beta"] for r in ok])
                bias2, mise = trimmed_metrics(betas, beta0)
                a = alpha[~np.isnan(alpha)]
                summary = EstimatorSummary(
                    sc.label, cfg.name,
                    alpha_bias=float(np.mean(a)),
                    alpha_sd=float(np.std(a, ddof=1)) if a.size > 1 else 0.0,
                    bias2_trim=bias2, mise_trim=mise,
                    pmse=float(np.nanmean(pmse)),
                    mean_k=float(np.nanmean(ks)),
                    n_ok=len(ok), n_failed=len(recs) - len(ok),
                )
            else:
                summary = EstimatorSummary(sc.label, cfg.name, *([float("nan")] * 6), 0, len(recs))
            if failures[key]:
                logger.warning("%s/%s: %d failed fits", *key, len(failures[key]))
            rows.append(summary)
    return ReplicationReport(rows, n_R, seed, gen, scenarios, list(estimators),
                             replicates, failures, runtimes)
