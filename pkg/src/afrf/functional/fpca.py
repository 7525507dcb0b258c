"""Functional principal components per derivative order, fitted in spline coefficient space."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from src.afrf.core.logging import log
from src.afrf.core.utils import InvalidInputError, NumericError, require
from src.afrf.functional.basis import (
    BasisSystem,
    SmoothedSet,
    derive_coeffs,
    evaluate,
    gram_matrix,
)

EIGEN_FLOOR = -1e-10


@dataclass(frozen=True, eq=False)
class FpcaModel:
    """Mean function and K orthonormal eigenfunctions of the r-th derivatives.

    eigen_coeffs[k] holds the basis coefficients of the (k+1)-th eigenfunction;
    eigenvalues are in variance units, non-increasing and clamped at 0.
    """

    deriv_order: int
    basis: BasisSystem
    mean_coeffs: np.ndarray
    eigen_coeffs: np.ndarray
    eigenvalues: np.ndarray
    gram: np.ndarray
    total_variance: float

    @property
    def n_components(self) -> int:
        return self.eigenvalues.size


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    scores: np.ndarray
    deriv_order: int
    column_meta: list[tuple[int, int]] = field(default_factory=list)


def _sqrt_and_inverse_sqrt(gram: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    values, vectors = linalg.eigh(gram)
    if values.min() <= 1e-13 * values.max():
        raise NumericError("Gram matrix is numerically singular")
    root = np.sqrt(values)
    return (vectors * root) @ vectors.T, (vectors / root) @ vectors.T


def _fix_signs(eigen_coeffs: np.ndarray) -> np.ndarray:
    """Flip each row so that its largest-magnitude coefficient is positive."""
    idx = np.argmax(np.abs(eigen_coeffs), axis=1)
    signs = np.sign(eigen_coeffs[np.arange(eigen_coeffs.shape[0]), idx])
    signs[signs == 0] = 1.0
    return eigen_coeffs * signs[:, None]


def fit_fpca(smoothed: SmoothedSet, deriv: int = 0, k_max: int = 10) -> FpcaModel:
    """Variance-maximizing orthonormal decomposition of the deriv-th derivatives.

    With centered coefficients C and Gram W the covariance operator is
    W^(1/2) (C'C / (N-1)) W^(1/2) in an orthonormal frame; its eigenvectors are
    mapped back to basis coefficients through W^(-1/2).
    """
    require(k_max >= 1, f"k_max must be at least 1, got {k_max}")
    n = smoothed.n_curves
    require(n >= 2, f"FPCA needs at least 2 curves, got {n}")
    coeffs, basis = derive_coeffs(smoothed, deriv)
    mean = coeffs.mean(axis=0)
    centered = coeffs - mean
    gram = gram_matrix(basis)
    w_half, w_inv_half = _sqrt_and_inverse_sqrt(gram)

    cov = centered.T @ centered / (n - 1)
    operator = w_half @ cov @ w_half
    operator = (operator + operator.T) / 2.0
    values, vectors = linalg.eigh(operator)
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    values = np.where(values < 0.0, 0.0, values)

    k = min(k_max, n - 1, basis.n_basis)
    eigen_coeffs = _fix_signs((w_inv_half @ vectors[:, :k]).T)
    model = FpcaModel(
        deriv_order=deriv,
        basis=basis,
        mean_coeffs=mean,
        eigen_coeffs=eigen_coeffs,
        eigenvalues=values[:k].copy(),
        gram=gram,
        total_variance=float(np.trace(operator)),
    )
    log("FPCA", r=deriv, n_curves=n, k=k, lead_eigenvalue=float(values[0]) if values.size else 0.0)
    return model


def fit_fpca_orders(smoothed: SmoothedSet, r_max: int, k_max: int) -> dict[int, FpcaModel]:
    """One independent decomposition per derivative order 0..r_max."""
    return {r: fit_fpca(smoothed, r, k_max) for r in range(r_max + 1)}


def score(model: FpcaModel, smoothed: SmoothedSet) -> ScoreMatrix:
    """Inner products of the centered (training mean) derivative curves with each eigenfunction."""
    coeffs, basis = derive_coeffs(smoothed, model.deriv_order)
    if not basis.same_as(model.basis):
        raise InvalidInputError(f"curves are in {basis!r}, the model expects {model.basis!r}")
    scores = (coeffs - model.mean_coeffs) @ model.gram @ model.eigen_coeffs.T
    meta = [(k + 1, model.deriv_order) for k in range(model.n_components)]
    return ScoreMatrix(scores=scores, deriv_order=model.deriv_order, column_meta=meta)


def explained_variance(model: FpcaModel, p: int) -> float:
    """Variance carried by the first p components."""
    require(1 <= p <= model.n_components, f"p must be in 1..{model.n_components}, got {p}")
    return float(model.eigenvalues[:p].sum())


def explained_variance_ratio(model: FpcaModel, p: int) -> float:
    total = model.total_variance
    if total <= 0.0:
        return 1.0
    return explained_variance(model, p) / total


def reconstruct(model: FpcaModel, scores: np.ndarray, n_components: int | None = None) -> np.ndarray:
    """Basis coefficients of mean + sum_k score_k * xi_k using the first n_components."""
    k = model.n_components if n_components is None else n_components
    require(0 <= k <= model.n_components, f"n_components must be in 0..{model.n_components}")
    scores = np.atleast_2d(scores)
    return model.mean_coeffs + scores[:, :k] @ model.eigen_coeffs[:k]


def eigenfunctions(model: FpcaModel, grid) -> np.ndarray:
    """K x G values of the eigenfunctions on the grid."""
    return evaluate(model.basis, model.eigen_coeffs, grid)


def mean_function(model: FpcaModel, grid) -> np.ndarray:
    return evaluate(model.basis, model.mean_coeffs, grid)[0]
