"""Discretised curves, basis systems on [0, 1] and quadrature inner products."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "CurveSet",
    "LabeledSample",
    "BasisMatrix",
    "InvalidDimensionError",
    "IncompatibleGridError",
    "trapezoid_weights",
    "bspline_design",
    "fourier_design",
    "make_basis",
    "project",
    "evaluate_slope",
    "gram",
]


class InvalidDimensionError(ValueError):
    pass


class IncompatibleGridError(ValueError):
    pass


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    h = np.diff(points)
    w = np.zeros_like(points)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing observation points inside [0, 1]."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size < 2:
            raise ValueError("a grid needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise ValueError("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if pts[0] < 0 or pts[-1] > 1:
            raise ValueError("grid points must lie in [0, 1]")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def equispaced(cls, size: int) -> "Grid":
        return cls(np.linspace(0.0, 1.0, size))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid) and np.array_equal(self.points, other.points)

    def __hash__(self) -> int:
        return hash(self.points.tobytes())


@dataclass(frozen=True, eq=False)
class CurveSet:
    """n curves sampled on a common grid; row i holds X_i."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[None, :]
        if vals.ndim != 2 or vals.shape[1] != len(self.grid):
            raise InvalidDimensionError(
                f"curve matrix has {vals.shape[-1]} columns, grid has {len(self.grid)} points"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("curve values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def subset(self, idx) -> "CurveSet":
        return CurveSet(self.grid, self.values[idx])


@dataclass(frozen=True, eq=False)
class LabeledSample:
    curves: CurveSet
    responses: np.ndarray

    def __post_init__(self):
        y = np.array(self.responses, dtype=float).ravel()
        if y.size != self.curves.n:
            raise InvalidDimensionError(
                f"{y.size} responses for {self.curves.n} curves"
            )
        if not np.all((y == 0) | (y == 1)):
            raise ValueError("responses must be 0 or 1")
        y.setflags(write=False)
        object.__setattr__(self, "responses", y)

    @property
    def n(self) -> int:
        return self.curves.n


@dataclass(frozen=True, eq=False)
class BasisMatrix:
    """k basis functions evaluated on a grid, with trapezoid weights.

    ``family`` is ``"bspline"`` (with ``order``) or ``"fourier"``.
    """

    grid: Grid
    k: int
    family: str
    evals: np.ndarray
    quad_weights: np.ndarray = field(repr=False)
    order: int | None = None

    def describe(self) -> dict:
        return {"family": self.family, "k": self.k, "order": self.order}


def _cox_de_boor(x: np.ndarray, knots: np.ndarray, order: int) -> np.ndarray:
    n_basis = knots.size - order
    # order-1 indicators; the right end of [0, 1] joins the last nonempty span
    last = np.max(np.nonzero(knots[:-1] < knots[1:])[0])
    B = np.zeros((knots.size - 1, x.size))
    for i in range(knots.size - 1):
        if knots[i] < knots[i + 1]:
            B[i] = (knots[i] <= x) & (x < knots[i + 1])
    B[last, x == knots[-1]] = 1.0
    for p in range(2, order + 1):
        nxt = np.zeros((knots.size - p, x.size))
        for i in range(knots.size - p):
            left_den = knots[i + p - 1] - knots[i]
            right_den = knots[i + p] - knots[i + 1]
            if left_den > 0:
                nxt[i] += (x - knots[i]) / left_den * B[i]
            if right_den > 0:
                nxt[i] += (knots[i + p] - x) / right_den * B[i + 1]
        B = nxt
    return B[:n_basis]


def bspline_knots(k: int, order: int) -> np.ndarray:
    interior = np.linspace(0.0, 1.0, k - order + 2)[1:-1]
    return np.concatenate([np.zeros(order), interior, np.ones(order)])


def bspline_design(grid: Grid, k: int, order: int = 4) -> BasisMatrix:
    """B-splines of the given order with k - order equispaced interior knots."""
    if order < 2:
        raise InvalidDimensionError("spline order must be at least 2")
    if k < order:
        raise InvalidDimensionError(f"k={k} is smaller than the spline order {order}")
    evals = _cox_de_boor(grid.points, bspline_knots(k, order), order)
    evals.setflags(write=False)
    return BasisMatrix(grid, k, "bspline", evals, trapezoid_weights(grid.points), order)


def fourier_design(grid: Grid, k: int) -> BasisMatrix:
    """Cosine system 1, sqrt(2) cos(pi t), sqrt(2) cos(2 pi t), ..."""
    if k < 1:
        raise InvalidDimensionError("k must be at least 1")
    j = np.arange(k)[:, None]
    evals = np.sqrt(2.0) * np.cos(j * np.pi * grid.points[None, :])
    evals[0] = 1.0
    evals.setflags(write=False)
    return BasisMatrix(grid, k, "fourier", evals, trapezoid_weights(grid.points))


def make_basis(grid: Grid, k: int, family: str = "bspline", order: int = 4) -> BasisMatrix:
    if family == "bspline":
        return bspline_design(grid, k, order)
    if family == "fourier":
        return fourier_design(grid, k)
    raise ValueError(f"unknown basis family {family!r}")


def _check_grid(a: Grid, b: Grid):
    if a != b:
        raise IncompatibleGridError("curves and basis live on different grids")


def project(curves: CurveSet, basis: BasisMatrix) -> np.ndarray:
    """Scores x_ij = <X_i, B_j> by the trapezoid rule; shape (n, k)."""
    _check_grid(curves.grid, basis.grid)
    return curves.values @ (basis.evals * basis.quad_weights).T


def evaluate_slope(coeffs, basis: BasisMatrix) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=float).ravel()
    if coeffs.size != basis.k:
        raise InvalidDimensionError(f"{coeffs.size} coefficients for a basis of size {basis.k}")
    return coeffs @ basis.evals


def gram(basis: BasisMatrix) -> np.ndarray:
    return (basis.evals * basis.quad_weights) @ basis.evals.T
