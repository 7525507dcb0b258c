"""Augmented feature matrices: FPC scores (or spline coefficients) pooled across derivative orders."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import linalg

from src.afrf.core.logging import log
from src.afrf.core.utils import FeatureKind, InvalidInputError, column_name, require
from src.afrf.functional.basis import SmoothedSet, cross_gram, derive_coeffs, derived_basis, gram_matrix
from src.afrf.functional.fpca import FpcaModel, score


@dataclass(frozen=True)
class ColumnMeta:
    k: int
    r: int
    name: str


@dataclass(frozen=True, eq=False)
class AugmentedFeatures:
    """N x P feature matrix laid out in blocks r = 0..r_max.

    groups[k] lists the columns that describe component k at every order.
    """

    matrix: np.ndarray
    column_meta: tuple[ColumnMeta, ...]
    labels: np.ndarray
    groups: dict[int, tuple[int, ...]] = field(default_factory=dict)
    kind: FeatureKind = FeatureKind.FPCA
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[1] != len(self.column_meta):
            raise InvalidInputError("feature matrix width does not match its column metadata")
        if self.labels is not None and np.asarray(self.labels).shape != (matrix.shape[0],):
            raise InvalidInputError("one label per feature row is required")
        covered = sorted(c for cols in self.groups.values() for c in cols)
        if self.groups and covered != list(range(matrix.shape[1])):
            raise InvalidInputError("column groups must partition the columns")
        object.__setattr__(self, "matrix", matrix)

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @property
    def column_names(self) -> list[str]:
        return [meta.name for meta in self.column_meta]

    @property
    def r_max(self) -> int:
        return max(meta.r for meta in self.column_meta)

    def block(self, r: int) -> np.ndarray:
        cols = [i for i, meta in enumerate(self.column_meta) if meta.r == r]
        return self.matrix[:, cols]

    def group_of(self, column: int) -> tuple[int, ...]:
        k = self.column_meta[column].k
        return self.groups.get(k, (column,))

    def with_matrix(self, matrix: np.ndarray) -> "AugmentedFeatures":
        return AugmentedFeatures(
            matrix=matrix,
            column_meta=self.column_meta,
            labels=self.labels,
            groups=self.groups,
            kind=self.kind,
            class_names=self.class_names,
        )

    def subset(self, rows) -> "AugmentedFeatures":
        rows = np.asarray(rows, dtype=np.intp)
        return AugmentedFeatures(
            matrix=self.matrix[rows],
            column_meta=self.column_meta,
            labels=self.labels[rows],
            groups=self.groups,
            kind=self.kind,
            class_names=self.class_names,
        )


def group_columns(column_meta) -> dict[int, tuple[int, ...]]:
    groups: dict[int, list[int]] = {}
    for i, meta in enumerate(column_meta):
        groups.setdefault(meta.k, []).append(i)
    return {k: tuple(cols) for k, cols in sorted(groups.items())}


def _assemble(blocks: list[tuple[int, np.ndarray]], smoothed: SmoothedSet, kind: FeatureKind) -> AugmentedFeatures:
    meta = tuple(
        ColumnMeta(k=k + 1, r=r, name=column_name(k + 1, r, kind))
        for r, block in blocks
        for k in range(block.shape[1])
    )
    matrix = np.hstack([block for _, block in blocks])
    features = AugmentedFeatures(
        matrix=matrix,
        column_meta=meta,
        labels=smoothed.labels,
        groups=group_columns(meta),
        kind=kind,
        class_names=smoothed.class_names,
    )
    log("AUGMENT", kind=kind.value, r_max=blocks[-1][0], n_rows=matrix.shape[0], n_columns=matrix.shape[1])
    return features


def build_augmented(
    models: Mapping[int, FpcaModel], smoothed: SmoothedSet, n_components: int, r_max: int
) -> AugmentedFeatures:
    """Block-concatenate the first K scores of every order r = 0..r_max; no standardization."""
    require(0 <= r_max <= 2, f"r_max must be 0, 1 or 2, got {r_max}")
    require(n_components >= 1, "K must be at least 1")
    blocks = []
    for r in range(r_max + 1):
        model = models.get(r)
        if model is None:
            raise InvalidInputError(f"no FPCA model for derivative order {r}")
        if model.n_components < n_components:
            raise InvalidInputError(
                f"order {r} has {model.n_components} components, {n_components} requested"
            )
        blocks.append((r, score(model, smoothed).scores[:, :n_components]))
    return _assemble(blocks, smoothed, FeatureKind.FPCA)


def _projection_to(smoothed: SmoothedSet, r: int) -> np.ndarray:
    """Map reduced-order derivative coefficients onto the original basis by L2 projection."""
    reduced = derived_basis(smoothed.basis, r)
    w = gram_matrix(smoothed.basis)
    return linalg.solve(w, cross_gram(smoothed.basis, reduced), assume_a="pos")


def build_augmented_spline(smoothed: SmoothedSet, r_max: int, projected: bool = True) -> AugmentedFeatures:
    """Blocks of spline coefficients of every derivative order, S columns each.

    Derivatives are L2-projected onto the original basis; projected=False keeps
    the exact reduced-order coefficients (S - r columns at order r).
    """
    require(0 <= r_max <= 2, f"r_max must be 0, 1 or 2, got {r_max}")
    blocks = []
    for r in range(r_max + 1):
        coeffs, _ = derive_coeffs(smoothed, r)
        if projected and r:
            coeffs = coeffs @ _projection_to(smoothed, r).T
        blocks.append((r, coeffs))
    return _assemble(blocks, smoothed, FeatureKind.SPLINE)
