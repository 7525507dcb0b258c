"""B-spline bases on [0, 1]: construction, evaluation, least-squares smoothing and derivatives."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import linalg
from scipy.interpolate import BSpline

from src.afrf.core.logging import log
from src.afrf.core.utils import InvalidInputError, NumericError, require
from src.afrf.functional.dataio import CurveSet

DEFAULT_ORDER = 4
DEFAULT_MAX_BASIS = 20


@dataclass(frozen=True, eq=False)
class BasisSystem:
    """Clamped B-spline basis of a given order (degree + 1) on [0, 1]."""

    order: int
    n_basis: int
    knots: np.ndarray

    @property
    def degree(self) -> int:
        return self.order - 1

    def breakpoints(self) -> np.ndarray:
        return np.unique(self.knots)

    def same_as(self, other: "BasisSystem") -> bool:
        return (
            self.order == other.order
            and self.n_basis == other.n_basis
            and self.knots.shape == other.knots.shape
            and np.array_equal(self.knots, other.knots)
        )

    def __repr__(self):
        return f"BasisSystem(order={self.order}, n_basis={self.n_basis})"


@dataclass(frozen=True, eq=False)
class SmoothedSet:
    """Per-curve coefficient matrix (N x S) in a basis, with labels carried over."""

    basis: BasisSystem
    coeffs: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...] = ()

    @property
    def n_curves(self) -> int:
        return self.coeffs.shape[0]


def default_n_basis(n_points: int, order: int = DEFAULT_ORDER) -> int:
    return max(order, min(DEFAULT_MAX_BASIS, n_points - order))


def build_basis(n_basis: int, order: int = DEFAULT_ORDER) -> BasisSystem:
    """Clamped knot vector with n_basis - order equally spaced interior knots."""
    require(order >= 1, f"spline order must be positive, got {order}")
    require(n_basis >= order, f"n_basis ({n_basis}) must be at least the spline order ({order})")
    n_interior = n_basis - order
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    knots = np.concatenate([np.zeros(order), interior, np.ones(order)])
    return BasisSystem(order=order, n_basis=n_basis, knots=knots)


def _check_grid(t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.size and (t.min() < 0.0 or t.max() > 1.0):
        raise InvalidInputError("evaluation points must lie in [0, 1]; the basis does not extrapolate")
    return t


def _unit_spline(basis: BasisSystem) -> BSpline:
    return BSpline(basis.knots, np.eye(basis.n_basis), basis.degree, extrapolate=False)


def eval_basis(basis: BasisSystem, t, deriv: int = 0) -> np.ndarray:
    """Matrix whose row j holds the deriv-th derivatives of all basis functions at t[j]."""
    require(0 <= deriv < basis.order, f"derivative order {deriv} not available for order-{basis.order} splines")
    t = _check_grid(t)
    values = _unit_spline(basis)(t, nu=deriv)
    # scipy returns nan only outside the base interval, which _check_grid excludes
    return np.nan_to_num(values, nan=0.0)


def evaluate(basis: BasisSystem, coeffs: np.ndarray, t, deriv: int = 0) -> np.ndarray:
    """Curve values (N x G) of coefficient rows on the grid t."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    return coeffs @ eval_basis(basis, t, deriv).T


def smooth(curves: CurveSet, basis: BasisSystem) -> SmoothedSet:
    """Least-squares basis coefficients of every curve.

    One economic QR factorization of the T x S design matrix is shared by all
    N right-hand sides.
    """
    n_points = curves.n_points
    if n_points < basis.n_basis:
        raise NumericError(
            f"{n_points} time points cannot determine {basis.n_basis} coefficients; lower n_basis"
        )
    design = eval_basis(basis, curves.domain)
    q, r = linalg.qr(design, mode="economic")
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-10 * diag.max():
        raise NumericError("design matrix is rank deficient on this grid; lower n_basis")
    coeffs = linalg.solve_triangular(r, q.T @ curves.values.T).T
    log("SMOOTH", n_curves=curves.n_curves, n_points=n_points, n_basis=basis.n_basis, order=basis.order)
    return SmoothedSet(basis=basis, coeffs=coeffs, labels=curves.labels, class_names=curves.class_names)


def derived_basis(basis: BasisSystem, r: int) -> BasisSystem:
    """Order-(order - r) basis on the same interior knots."""
    require(r >= 0, "derivative order must be non-negative")
    if r == 0:
        return basis
    require(r <= basis.order - 2, f"derivative order {r} too large for order-{basis.order} splines")
    return BasisSystem(order=basis.order - r, n_basis=basis.n_basis - r, knots=basis.knots[r : basis.knots.size - r])


def derive_coeffs(smoothed: SmoothedSet, r: int) -> tuple[np.ndarray, BasisSystem]:
    """Exact coefficients of the r-th derivative of every curve in the reduced-order basis."""
    basis = smoothed.basis
    if r == 0:
        return smoothed.coeffs, basis
    target = derived_basis(basis, r)
    spline = BSpline(basis.knots, smoothed.coeffs.T, basis.degree).derivative(r)
    coeffs = np.asarray(spline.c)[: target.n_basis].T
    return np.ascontiguousarray(coeffs), target


def _span_quadrature(breaks: np.ndarray, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on every non-empty span between breakpoints."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    lo, hi = breaks[:-1], breaks[1:]
    half = (hi - lo) / 2.0
    nodes = (lo[:, None] + half[:, None] * (x[None, :] + 1.0)).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


@lru_cache(maxsize=64)
def _gram_cached(order: int, n_basis: int, knots: bytes, deriv: int) -> np.ndarray:
    basis = BasisSystem(order=order, n_basis=n_basis, knots=np.frombuffer(knots, dtype=float))
    degree = max(basis.order - 1 - deriv, 0)
    nodes, weights = _span_quadrature(basis.breakpoints(), degree + 1)
    phi = eval_basis(basis, nodes, deriv)
    gram = phi.T @ (weights[:, None] * phi)
    gram = (gram + gram.T) / 2.0
    gram.setflags(write=False)
    return gram


def gram_matrix(basis: BasisSystem, deriv: int = 0) -> np.ndarray:
    """W[j, l] = integral over [0, 1] of the deriv-th derivatives of phi_j and phi_l.

    Gauss-Legendre quadrature per knot span is exact for the piecewise
    polynomial integrand.
    """
    require(0 <= deriv < basis.order, f"derivative order {deriv} not available for order-{basis.order} splines")
    return _gram_cached(basis.order, basis.n_basis, basis.knots.tobytes(), deriv).copy()


def cross_gram(a: BasisSystem, b: BasisSystem) -> np.ndarray:
    """C[j, l] = integral of phi^a_j * phi^b_l over [0, 1]."""
    breaks = np.union1d(a.breakpoints(), b.breakpoints())
    n_nodes = (a.degree + b.degree) // 2 + 1
    nodes, weights = _span_quadrature(breaks, n_nodes)
    return eval_basis(a, nodes).T @ (weights[:, None] * eval_basis(b, nodes))
