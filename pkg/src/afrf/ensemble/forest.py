"""Random forests of classification trees over augmented features."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from src.afrf.core.logging import log
from src.afrf.core.scheme import ColumnMetaModel, ForestManifest
from src.afrf.core.utils import FeatureKind, Impurity, InvalidInputError, child_seeds, require
from src.afrf.ensemble.cart import (
    Tree,
    grow,
    impurity_importance as tree_impurity_importance,
    load_tree,
    predict_matrix,
    save_tree,
)
from src.afrf.functional.augment import AugmentedFeatures, ColumnMeta

MANIFEST_NAME = "forest.json"


@dataclass(frozen=True, eq=False)
class Forest:
    """H trees with their in-bag membership (H x N, True = drawn at least once)."""

    trees: tuple[Tree, ...]
    inbag: np.ndarray
    m: int
    seed: int
    column_meta: tuple[ColumnMeta, ...]
    n_classes: int
    bootstrap: bool = True
    kind: FeatureKind = FeatureKind.FPCA

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def oob_mask(self) -> np.ndarray:
        return ~self.inbag


def default_mtry(n_columns: int) -> int:
    return max(1, int(round(math.sqrt(n_columns))))


def _fit_tree(
    features: AugmentedFeatures,
    seq: np.random.SeedSequence,
    m: Optional[int],
    bootstrap: bool,
    kind: Impurity,
    min_split: int,
    min_leaf: int,
    max_depth: Optional[int],
    n_classes: int,
) -> tuple[Tree, np.ndarray]:
    rng = np.random.default_rng(seq)
    n = features.n_rows
    rows = rng.integers(0, n, n) if bootstrap else np.arange(n)
    sampler = None
    if m is not None:
        def sampler(p: int) -> np.ndarray:
            return np.sort(rng.choice(p, m, replace=False))
    tree = grow(
        features,
        kind,
        min_split=min_split,
        min_leaf=min_leaf,
        max_depth=max_depth,
        candidate_sampler=sampler,
        rows=rows,
        n_classes=n_classes,
    )
    inbag = np.zeros(n, dtype=bool)
    inbag[rows] = True
    return tree, inbag


def _train(
    features: AugmentedFeatures,
    n_trees: int,
    m: Optional[int],
    seed: int,
    bootstrap: bool,
    n_jobs: int,
    kind: Impurity,
    min_split: int,
    min_leaf: int,
    max_depth: Optional[int],
) -> Forest:
    require(n_trees >= 1, f"the forest needs at least one tree, got H={n_trees}")
    require(features.n_rows >= 1, "cannot train on an empty feature set")
    n_classes = int(np.asarray(features.labels).max()) + 1
    seeds = child_seeds(seed, n_trees)
    fitted = Parallel(n_jobs=n_jobs)(
        delayed(_fit_tree)(features, seq, m, bootstrap, kind, min_split, min_leaf, max_depth, n_classes)
        for seq in seeds
    )
    trees = tuple(tree for tree, _ in fitted)
    inbag = np.vstack([mask for _, mask in fitted])
    forest = Forest(
        trees=trees,
        inbag=inbag,
        m=features.n_columns if m is None else m,
        seed=seed,
        column_meta=features.column_meta,
        n_classes=n_classes,
        bootstrap=bootstrap,
        kind=features.kind,
    )
    log(
        "FOREST",
        trees=n_trees,
        m=forest.m,
        columns=features.n_columns,
        bootstrap=bootstrap,
        mean_leaves=float(np.mean([t.n_leaves for t in trees])),
    )
    return forest


def train_forest(
    features: AugmentedFeatures,
    n_trees: int,
    m: Optional[int] = None,
    seed: int = 0,
    bootstrap: bool = True,
    n_jobs: int = 1,
    kind: Impurity = Impurity.GINI,
    min_split: int = 2,
    min_leaf: int = 1,
    max_depth: Optional[int] = None,
) -> Forest:
    """Trees grown on bootstrap resamples, each node drawing m candidate columns.

    Tree h draws from the substream spawned for index h of the master seed, so
    the result does not depend on n_jobs. m defaults to round(sqrt(P)).
    """
    p = features.n_columns
    m = default_mtry(p) if m is None else int(m)
    if not 1 <= m <= p:
        raise InvalidInputError(f"m must be in 1..{p}, got {m}")
    return _train(features, n_trees, m, seed, bootstrap, n_jobs, kind, min_split, min_leaf, max_depth)


def train_bagging(
    features: AugmentedFeatures,
    n_trees: int,
    seed: int = 0,
    n_jobs: int = 1,
    kind: Impurity = Impurity.GINI,
    min_split: int = 2,
    min_leaf: int = 1,
    max_depth: Optional[int] = None,
) -> Forest:
    """Bootstrap aggregation: every node considers every column."""
    return _train(features, n_trees, None, seed, True, n_jobs, kind, min_split, min_leaf, max_depth)


def _check_layout(forest: Forest, features: AugmentedFeatures) -> None:
    if tuple(features.column_meta) != tuple(forest.column_meta):
        raise InvalidInputError(
            f"feature layout ({features.n_columns} columns) does not match the training layout "
            f"({len(forest.column_meta)} columns)"
        )


def tree_predictions(forest: Forest, matrix: np.ndarray, trees=None) -> np.ndarray:
    """H x N label matrix, one row per tree (or per index in `trees`)."""
    indices = range(forest.n_trees) if trees is None else trees
    return np.vstack([predict_matrix(forest.trees[h], matrix) for h in indices])


def vote_counts(predictions: np.ndarray, n_classes: int, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """N x C vote tallies; mask (H x N) selects which tree votes count."""
    n = predictions.shape[1]
    counts = np.zeros((n, n_classes), dtype=np.int64)
    rows = np.broadcast_to(np.arange(n), predictions.shape)
    if mask is None:
        np.add.at(counts, (rows.ravel(), predictions.ravel()), 1)
    else:
        np.add.at(counts, (rows[mask], predictions[mask]), 1)
    return counts


def predict_proba(forest: Forest, features: AugmentedFeatures) -> np.ndarray:
    _check_layout(forest, features)
    votes = vote_counts(tree_predictions(forest, features.matrix), forest.n_classes)
    return votes / forest.n_trees


def predict(forest: Forest, features: AugmentedFeatures) -> np.ndarray:
    """Majority vote; exact ties go to the lowest class index."""
    return np.argmax(predict_proba(forest, features), axis=1)


def oob_votes(forest: Forest, predictions: np.ndarray) -> np.ndarray:
    return vote_counts(predictions, forest.n_classes, mask=forest.oob_mask)


def oob_predict(forest: Forest, features: AugmentedFeatures) -> tuple[np.ndarray, np.ndarray]:
    """(labels, covered): majority among trees that did not draw each row."""
    _check_layout(forest, features)
    if forest.inbag.shape[1] != features.n_rows:
        raise InvalidInputError("out-of-bag prediction needs the training rows")
    votes = oob_votes(forest, tree_predictions(forest, features.matrix))
    covered = votes.sum(axis=1) > 0
    return np.argmax(votes, axis=1), covered


def oob_error(forest: Forest, features: AugmentedFeatures) -> Optional[float]:
    """Misclassification over rows with at least one out-of-bag tree; None without coverage."""
    labels, covered = oob_predict(forest, features)
    if not covered.any():
        log("SKIP OOB", reason="no row is out of bag")
        return None
    error = float(np.mean(labels[covered] != features.labels[covered]))
    log("OOB", scored=int(covered.sum()), error=error)
    return error


def impurity_importance(forest: Forest) -> np.ndarray:
    """Mean normalized impurity decrease over trees (diagnostic only)."""
    return np.mean([tree_impurity_importance(tree) for tree in forest.trees], axis=0)


def save_forest(forest: Forest, directory: str | Path) -> None:
    """Manifest plus one JSON file per tree."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = [f"tree_{h:04d}.json" for h in range(forest.n_trees)]
    for tree, name in zip(forest.trees, names):
        save_tree(tree, directory / name)
    manifest = ForestManifest(
        seed=forest.seed,
        n_trees=forest.n_trees,
        m=forest.m,
        bootstrap=forest.bootstrap,
        n_classes=forest.n_classes,
        kind=forest.kind,
        column_meta=[ColumnMetaModel(k=c.k, r=c.r, name=c.name) for c in forest.column_meta],
        n_rows=forest.inbag.shape[1],
        inbag=[np.flatnonzero(row).tolist() for row in forest.inbag],
        tree_files=names,
    )
    (directory / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=1))
    log("WRITE", path=str(directory / MANIFEST_NAME), trees=forest.n_trees)


def load_forest(directory: str | Path) -> Forest:
    directory = Path(directory)
    manifest = ForestManifest.model_validate_json((directory / MANIFEST_NAME).read_text())
    if len(manifest.tree_files) != manifest.n_trees or len(manifest.inbag) != manifest.n_trees:
        raise InvalidInputError("forest manifest lists a different number of trees than it declares")
    trees = tuple(load_tree(directory / name) for name in manifest.tree_files)
    inbag = np.zeros((manifest.n_trees, manifest.n_rows), dtype=bool)
    for h, rows in enumerate(manifest.inbag):
        inbag[h, rows] = True
    return Forest(
        trees=trees,
        inbag=inbag,
        m=manifest.m,
        seed=manifest.seed,
        column_meta=tuple(ColumnMeta(k=c.k, r=c.r, name=c.name) for c in manifest.column_meta),
        n_classes=manifest.n_classes,
        bootstrap=manifest.bootstrap,
        kind=manifest.kind,
    )
