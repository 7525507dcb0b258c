"""Permutation importance of augmented features, unconditional and conditional on the component group.

Importance of a column is the misclassification rate after permuting it minus
the rate before, averaged over repetitions. The conditional variant permutes
only within strata formed by quantile bins of the other columns that describe
the same component at other derivative orders.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from src.afrf.core.logging import branch, log
from src.afrf.core.utils import EvalSet, InvalidInputError, keyed_rng, require
from src.afrf.ensemble.cart import predict_matrix
from src.afrf.ensemble.forest import Forest, tree_predictions, vote_counts
from src.afrf.functional.augment import AugmentedFeatures

CONVENTION = "error_permuted-error_base"


@dataclass(frozen=True)
class ImportanceRow:
    feature: str
    k: int
    r: int
    conditional: float
    unconditional: float
    conditional_sd: float
    unconditional_sd: float
    reps: int
    eval_set: str
    convention: str = CONVENTION


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    rows: list[ImportanceRow]
    conditional_raw: np.ndarray
    unconditional_raw: np.ndarray
    baseline_error: float
    eval_set: EvalSet

    @property
    def conditional(self) -> np.ndarray:
        return self.conditional_raw.mean(axis=1)

    @property
    def unconditional(self) -> np.ndarray:
        return self.unconditional_raw.mean(axis=1)


class _Evaluator:
    """Forest error on a fixed set of votes and rows, recomputing only trees that split on a column."""

    def __init__(self, forest: Forest, features: AugmentedFeatures, eval_set: EvalSet):
        if tuple(features.column_meta) != tuple(forest.column_meta):
            raise InvalidInputError("feature layout does not match the forest's training layout")
        self.forest = forest
        self.features = features
        self.base = tree_predictions(forest, features.matrix)
        if eval_set == EvalSet.OOB:
            if forest.inbag.shape[1] != features.n_rows:
                raise InvalidInputError("out-of-bag importance needs the training rows")
            self.mask = forest.oob_mask
            self.rows = np.flatnonzero(self.mask.any(axis=0))
            if not self.rows.size:
                raise InvalidInputError("no row is out of bag; use the holdout or in-sample evaluation set")
        else:
            self.mask = None
            self.rows = np.arange(features.n_rows)
        self.users = {
            col: [h for h, tree in enumerate(forest.trees) if col in tree.used_features()]
            for col in range(features.n_columns)
        }
        self.baseline = self.error(self.base)

    def error(self, predictions: np.ndarray) -> float:
        votes = vote_counts(predictions, self.forest.n_classes, self.mask)
        labels = np.argmax(votes, axis=1)
        return float(np.mean(labels[self.rows] != self.features.labels[self.rows]))

    def permuted_error(self, column: int, values: np.ndarray) -> float:
        matrix = self.features.matrix.copy()
        matrix[:, column] = values
        predictions = self.base.copy()
        for h in self.users[column]:
            predictions[h] = predict_matrix(self.forest.trees[h], matrix)
        return self.error(predictions)


def quantile_codes(values: np.ndarray, bins: int) -> np.ndarray:
    """Bin index 0..bins-1 of every value using empirical quantile edges."""
    require(bins >= 2, f"bins must be at least 2, got {bins}")
    edges = np.quantile(values, np.linspace(0.0, 1.0, bins + 1)[1:-1])
    return np.searchsorted(edges, values, side="right")


def strata_for(features: AugmentedFeatures, column: int, bins: int) -> np.ndarray:
    """Stratum id per row: crossed quantile bins of the other columns in the column's group."""
    others = [c for c in features.group_of(column) if c != column]
    if not others:
        return np.zeros(features.n_rows, dtype=np.intp)
    codes = np.stack([quantile_codes(features.matrix[:, c], bins) for c in others], axis=1)
    _, strata = np.unique(codes, axis=0, return_inverse=True)
    return strata.reshape(-1).astype(np.intp)


def permute_within(values: np.ndarray, strata: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Shuffle values inside each stratum; singleton strata keep their value."""
    out = values.copy()
    for s in np.unique(strata):
        idx = np.flatnonzero(strata == s)
        if idx.size > 1:
            out[idx] = values[rng.permutation(idx)]
    return out


def _column_importance(
    evaluator: _Evaluator, column: int, strata: np.ndarray, reps: int, seed: int
) -> np.ndarray:
    if not evaluator.users[column]:
        return np.zeros(reps)
    rng = keyed_rng(seed, column)
    values = evaluator.features.matrix[:, column]
    return np.array(
        [evaluator.permuted_error(column, permute_within(values, strata, rng)) - evaluator.baseline for _ in range(reps)]
    )


def _raw_importance(
    evaluator: _Evaluator, strata: list[np.ndarray], reps: int, seed: int, n_jobs: int
) -> np.ndarray:
    rows = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_column_importance)(evaluator, col, strata[col], reps, seed) for col in range(len(strata))
    )
    return np.vstack(rows) if rows else np.zeros((0, reps))


def _unconditional_strata(features: AugmentedFeatures) -> list[np.ndarray]:
    return [np.zeros(features.n_rows, dtype=np.intp)] * features.n_columns


def _conditional_strata(features: AugmentedFeatures, bins: int) -> list[np.ndarray]:
    require(bins >= 2, f"bins must be at least 2, got {bins}")
    if not features.groups:
        raise InvalidInputError("conditional importance needs column group metadata")
    return [strata_for(features, col, bins) for col in range(features.n_columns)]


def unconditional_importance(
    forest: Forest,
    features: AugmentedFeatures,
    reps: int = 30,
    seed: int = 0,
    eval_set: EvalSet = EvalSet.OOB,
    n_jobs: int = 1,
) -> np.ndarray:
    """Mean error increase after permuting each whole column."""
    require(reps >= 1, f"reps must be at least 1, got {reps}")
    evaluator = _Evaluator(forest, features, EvalSet(eval_set))
    return _raw_importance(evaluator, _unconditional_strata(features), reps, seed, n_jobs).mean(axis=1)


def conditional_importance(
    forest: Forest,
    features: AugmentedFeatures,
    reps: int = 30,
    bins: int = 4,
    seed: int = 0,
    eval_set: EvalSet = EvalSet.OOB,
    n_jobs: int = 1,
) -> np.ndarray:
    """Mean error increase after permuting each column within its group strata."""
    require(reps >= 1, f"reps must be at least 1, got {reps}")
    strata = _conditional_strata(features, bins)
    evaluator = _Evaluator(forest, features, EvalSet(eval_set))
    return _raw_importance(evaluator, strata, reps, seed, n_jobs).mean(axis=1)


def importance_report(
    forest: Forest,
    features: AugmentedFeatures,
    reps: int = 30,
    bins: int = 4,
    seed: int = 0,
    eval_set: EvalSet = EvalSet.OOB,
    n_jobs: int = 1,
) -> ImportanceReport:
    """Both metrics on the same evaluation rows, seed and repetition count."""
    require(reps >= 1, f"reps must be at least 1, got {reps}")
    eval_set = EvalSet(eval_set)
    strata = _conditional_strata(features, bins)
    evaluator = _Evaluator(forest, features, eval_set)
    with branch("IMPORTANCE"):
        unconditional = _raw_importance(evaluator, _unconditional_strata(features), reps, seed, n_jobs)
        conditional = _raw_importance(evaluator, strata, reps, seed, n_jobs)
    rows = [
        ImportanceRow(
            feature=meta.name,
            k=meta.k,
            r=meta.r,
            conditional=float(conditional[col].mean()),
            unconditional=float(unconditional[col].mean()),
            conditional_sd=_sd(conditional[col]),
            unconditional_sd=_sd(unconditional[col]),
            reps=reps,
            eval_set=eval_set.value,
        )
        for col, meta in enumerate(features.column_meta)
    ]
    log(
        "IMPORTANCE",
        columns=features.n_columns,
        reps=reps,
        bins=bins,
        eval_set=eval_set.value,
        rows=int(evaluator.rows.size),
        baseline_error=evaluator.baseline,
    )
    return ImportanceReport(
        rows=rows,
        conditional_raw=conditional,
        unconditional_raw=unconditional,
        baseline_error=evaluator.baseline,
        eval_set=eval_set,
    )


def _sd(values: np.ndarray) -> float:
    return float(values.std(ddof=1)) if values.size > 1 else 0.0


def top_features(report: ImportanceReport, n: Optional[int] = None, conditional: bool = True) -> list[ImportanceRow]:
    """Rows sorted by decreasing importance."""
    key = (lambda row: row.conditional) if conditional else (lambda row: row.unconditional)
    ordered = sorted(report.rows, key=key, reverse=True)
    return ordered if n is None else ordered[:n]
