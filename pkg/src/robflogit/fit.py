"""Weighted M-estimation over a basis-reduced slope, and RBIC selection of k."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .funcbasis import BasisMatrix, LabeledSample, evaluate_slope, make_basis, project
from .loss import LossSpec, phi_and_score
from .weights import WeightSpec, compute_weights

__all__ = [
    "FitConfig",
    "FitResult",
    "FitError",
    "SeparationError",
    "CollinearityError",
    "objective",
    "gradient",
    "irls_logistic",
    "fit_scores",
    "fit_fixed_k",
    "rbic",
    "default_k_range",
    "first_local_minimum",
    "select_k",
]


class FitError(RuntimeError):
    pass


class SeparationError(FitError):
    pass


class CollinearityError(FitError):
    pass


@dataclass(frozen=True)
class FitConfig:
    loss: LossSpec = field(default_factory=LossSpec.croux_haesbroeck)
    weights: WeightSpec = field(default_factory=WeightSpec.unit)
    basis_family: str = "bspline"
    order: int = 4
    k_range: tuple[int, int] | None = None
    grad_tol: float = 1e-8
    max_iter: int = 200
    n_starts: int = 1
    seed: int = 0
    name: str = ""

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.basis_family not in ("bspline", "fourier"):
            raise ValueError(f"unknown basis family {self.basis_family!r}")
        if self.k_range is not None:
            lo, hi = self.k_range
            if lo > hi:
                raise ValueError("k_min exceeds k_max")
            if self.basis_family == "bspline" and lo < self.order:
                raise ValueError("k_min must be at least the spline order")
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "loss": {"kind": self.loss.kind, "c": self.loss.c},
            "weights": {
                "kind": self.weights.kind,
                "quantile": self.weights.quantile,
                "n_directions": self.weights.n_directions,
                "rng_seed": self.weights.rng_seed,
                "factor": self.weights.factor,
            },
            "basis_family": self.basis_family,
            "order": self.order,
            "k_range": list(self.k_range) if self.k_range else None,
            "grad_tol": self.grad_tol,
            "max_iter": self.max_iter,
            "n_starts": self.n_starts,
            "seed": self.seed,
        }


@dataclass(eq=False)
class FitResult:
    alpha: float
    coeffs: np.ndarray
    k: int
    objective: float
    weights_used: np.ndarray
    gradient_norm: float
    iterations: int
    converged: bool
    rbic: float
    basis: BasisMatrix | None = field(default=None, repr=False)
    rbic_trace: dict = field(default_factory=dict)
    k_at_boundary: bool = False

    def slope(self) -> np.ndarray:
        """beta-hat evaluated on the basis grid."""
        return evaluate_slope(self.coeffs, self.basis)

    def linear_predictor(self, scores) -> np.ndarray:
        return self.alpha + np.asarray(scores) @ self.coeffs


def _terms(y, scores, alpha, coeffs, loss):
    t = alpha + scores @ coeffs
    return phi_and_score(loss, y, t)


def objective(sample: LabeledSample, scores, alpha, coeffs, loss: LossSpec, w) -> float:
    """L_n = mean of phi(y_i, alpha + x_i'b) w_i."""
    scores = np.asarray(scores, dtype=float)
    w = np.asarray(w, dtype=float)
    val, _ = _terms(sample.responses, scores, alpha, np.asarray(coeffs, dtype=float), loss)
    return float(np.mean(val * w))


def gradient(sample: LabeledSample, scores, alpha, coeffs, loss: LossSpec, w) -> np.ndarray:
    scores = np.asarray(scores, dtype=float)
    w = np.asarray(w, dtype=float)
    _, sc = _terms(sample.responses, scores, alpha, np.asarray(coeffs, dtype=float), loss)
    ws = w * sc
    n = scores.shape[0]
    return np.concatenate([[ws.sum() / n], ws @ scores / n])


def irls_logistic(design, y, w, tol: float = 1e-12, max_iter: int = 100):
    """Weighted logistic MLE by damped Newton steps.

    ``design`` must already contain the intercept column. Returns
    ``(coef, n_iter)``; raises SeparationError when the iterates diverge.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n = X.shape[0]
    beta = np.zeros(X.shape[1])
    ybar = np.sum(w * y) / np.sum(w)
    beta[0] = math.log(ybar / (1 - ybar))

    def nll(b):
        t = X @ b
        return np.sum(w * (y * np.logaddexp(0, -t) + (1 - y) * np.logaddexp(0, t))) / n

    f = nll(beta)
    for it in range(1, max_iter + 1):
        p = expit(X @ beta)
        g = X.T @ (w * (p - y)) / n
        if np.linalg.norm(g) <= tol:
            return _check_separation(X, y, w, beta), it - 1
        H = (X * (w * p * (1 - p))[:, None]).T @ X / n
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, g, rcond=None)[0]
        lam = 1.0
        while True:
            cand = beta - lam * step
            fc = nll(cand)
            if fc <= f + 1e-14 * abs(f) or lam < 1e-10:
                break
            lam *= 0.5
        if np.linalg.norm(cand) > 1e6:
            raise SeparationError("logistic coefficients diverge (separated responses)")
        if np.max(np.abs(cand - beta)) <= 1e-15 * (1 + np.max(np.abs(beta))):
            return _check_separation(X, y, w, cand), it
        beta, f = cand, fc
    return _check_separation(X, y, w, beta), max_iter


def _check_separation(X, y, w, beta):
    # gradient underflow can stop Newton early on separated data
    p = expit(X @ beta)
    fitted = w > 0
    if np.all(np.abs(p[fitted] - y[fitted]) < 1e-6):
        raise SeparationError("weighted responses are perfectly separated")
    return beta


def _bfgs(fun, x0, grad_norm, grad_tol, max_iter):
    """BFGS with backtracking (Armijo) line search.

    ``fun`` returns (value, gradient); ``grad_norm`` maps the working-space
    gradient to the norm used for the stopping rule.
    """
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    H = np.eye(x.size)
    fresh = True
    it = 0
    for it in range(max_iter + 1):
        if grad_norm(g) <= grad_tol or it == max_iter:
            break
        p = -H @ g
        slope = g @ p
        if not slope < 0:
            H = np.eye(x.size)
            p, slope, fresh = -g, -(g @ g), True
        step = 1.0
        # slack for objective values flat at machine precision near the optimum
        slack = 16 * np.finfo(float).eps * max(abs(f), 1.0)
        accepted = False
        while step > 1e-14:
            xn = x + step * p
            fn, gn = fun(xn)
            if np.isfinite(fn) and fn <= f + 1e-4 * step * slope + slack:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if fresh:
                break
            H = np.eye(x.size)
            fresh = True
            continue
        s = xn - x
        yv = gn - g
        sy = s @ yv
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if fresh:
                H = np.eye(x.size) * (sy / (yv @ yv))
            rho_ = 1.0 / sy
            Hy = H @ yv
            H = H - rho_ * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho_ * rho_ * (yv @ Hy) + rho_) * np.outer(s, s)
            fresh = False
        x, f, g = xn, fn, gn
    return x, f, g, it


@dataclass
class _Standardizer:
    center: np.ndarray
    scale: np.ndarray
    active: np.ndarray

    @classmethod
    def from_scores(cls, scores, w):
        scale = scores.std(axis=0)
        absmax = np.max(np.abs(scores), axis=0)
        active = absmax > 0
        if np.any(active & (scale <= 1e-12 * np.maximum(absmax, 1e-300))):
            raise CollinearityError("a score column is constant and aliases the intercept")
        center = np.where(active, scores.mean(axis=0), 0.0)
        scale = np.where(active, scale, 1.0)
        return cls(center, scale, active)

    def transform(self, scores):
        return ((scores - self.center) / self.scale)[:, self.active]

    def to_original(self, theta):
        # theta = (a', b'_active) in the standardized space
        b = np.zeros(self.center.size)
        b[self.active] = theta[1:] / self.scale[self.active]
        alpha = theta[0] - self.center @ b
        return alpha, b

    def to_working(self, alpha, b):
        bw = b[self.active] * self.scale[self.active]
        return np.concatenate([[alpha + self.center @ b], bw])

    def original_grad_norm(self, gw):
        gb = np.zeros(self.center.size)
        gb[self.active] = gw[1:] * self.scale[self.active]
        gb = gb + self.center * gw[0]
        return float(np.sqrt(gw[0] ** 2 + gb @ gb))


def _check_classes(y, w):
    pos = w > 0
    if not np.any(pos):
        raise SeparationError("every observation received weight zero")
    ys = y[pos]
    if ys.min() == ys.max():
        raise SeparationError("only one response class has positive weight")


def fit_scores(y, scores, w, config: FitConfig):
    """Core fit on a precomputed score matrix. Returns FitResult without basis."""
    y = np.asarray(y, dtype=float)
    scores = np.asarray(scores, dtype=float)
    w = np.asarray(w, dtype=float)
    n, k = scores.shape
    if n <= k + 1:
        raise FitError(f"need n > k + 1 observations, got n={n}, k={k}")
    _check_classes(y, w)
    std = _Standardizer.from_scores(scores, w)
    Z = std.transform(scores)
    design = np.column_stack([np.ones(n), Z])
    pos = w > 0
    if np.linalg.matrix_rank(design[pos]) < design.shape[1]:
        raise CollinearityError("score matrix is rank deficient on the weighted sample")

    warm, _ = irls_logistic(design, y, w)
    loss = config.loss

    def fun(theta):
        val, sc = phi_and_score(loss, y, design @ theta)
        ws = w * sc
        return np.sum(w * val) / n, design.T @ ws / n

    starts = [warm]
    if config.n_starts > 1:
        rng = np.random.default_rng([config.seed, k])
        spread = 0.5 * (1.0 + np.abs(warm))
        for _ in range(config.n_starts - 1):
            starts.append(warm + spread * rng.standard_normal(warm.size))

    best = None
    for x0 in starts:
        theta, f, g, iters = _bfgs(fun, x0, std.original_grad_norm, config.grad_tol, config.max_iter)
        gn = std.original_grad_norm(g)
        conv = gn <= config.grad_tol
        key = (not conv, f)
        if best is None or key < best[0]:
            best = (key, theta, f, gn, iters, conv)
    _, theta, f, gn, iters, conv = best
    alpha, b = std.to_original(theta)
    if np.max(np.abs(b)) > 1e6 and not conv:
        raise SeparationError("robust objective flat along a diverging direction")
    return FitResult(
        alpha=float(alpha),
        coeffs=b,
        k=k,
        objective=float(f),
        weights_used=w,
        gradient_norm=gn,
        iterations=int(iters),
        converged=bool(conv),
        rbic=float(f + k * math.log(n) / n),
    )


def fit_fixed_k(sample: LabeledSample, basis: BasisMatrix, config: FitConfig) -> FitResult:
    scores = project(sample.curves, basis)
    w = compute_weights(sample, scores, config.weights)
    res = fit_scores(sample.responses, scores, w, config)
    res.basis = basis
    return res


def rbic(result: FitResult, n: int) -> float:
    return result.objective + result.k * math.log(n) / n


def default_k_range(n: int, order: int = 4) -> tuple[int, int]:
    root = n ** 0.2
    lo = max(math.ceil(root / 2), 4, order)
    hi = math.floor(8 + 2 * root)
    return lo, max(hi, lo)


def first_local_minimum(ks, values) -> int:
    """Index of the first k whose RBIC is strictly below the next one."""
    for i in range(len(values) - 1):
        if values[i] < values[i + 1]:
            return i
    return len(values) - 1


def select_k(sample: LabeledSample, config: FitConfig) -> FitResult:
    """Scan k upward and stop at the first local minimum of RBIC.

    Weights that do not depend on k (unit, functional boxplot) are computed
    once and reused across the scan.
    """
    n = sample.n
    lo, hi = config.k_range or default_k_range(n, config.order)
    if config.basis_family == "bspline" and lo < config.order:
        raise ValueError("k_min must be at least the spline order")
    shared_w = None
    if config.weights.kind != "mahalanobis_hr":
        shared_w = compute_weights(sample, None, config.weights)

    trace: dict[int, float] = {}
    fits: dict[int, FitResult] = {}

    def run(k):
        basis = make_basis(sample.curves.grid, k, config.basis_family, config.order)
        scores = project(sample.curves, basis)
        w = shared_w if shared_w is not None else compute_weights(sample, scores, config.weights)
        try:
            res = fit_scores(sample.responses, scores, w, config)
        except FitError as exc:
            raise type(exc)(f"fit failed at k={k}: {exc}") from exc
        res.basis = basis
        return res

    chosen = None
    for k in range(lo, hi + 1):
        fits[k] = run(k)
        trace[k] = fits[k].rbic
        if k > lo and trace[k - 1] < trace[k]:
            chosen = k - 1
            break
    boundary = chosen is None
    if boundary:
        chosen = hi
    res = fits[chosen]
    res.rbic_trace = dict(trace)
    res.k_at_boundary = boundary
    return res
