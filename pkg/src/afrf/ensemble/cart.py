"""Classification trees on augmented features.

Nodes are numbered like recursive-partitioning output: the root is 1 and the
children of node z are 2z (left, value < threshold) and 2z + 1 (right).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from sklearn.model_selection import StratifiedKFold

from src.afrf.core.logging import branch, log
from src.afrf.core.scheme import ColumnMetaModel, ComplexityRowModel, NodeModel, TreeModel
from src.afrf.core.utils import FeatureKind, Impurity, InvalidInputError, PruneRule, require
from src.afrf.functional.augment import AugmentedFeatures, ColumnMeta
from src.afrf.functional.fpca import FpcaModel, eigenfunctions

GAIN_TOL = 1e-12

CandidateSampler = Callable[[int], np.ndarray]


@dataclass
class Node:
    node_id: int
    counts: np.ndarray
    impurity: float
    depth: int
    feature: Optional[int] = None
    threshold: Optional[float] = None
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())

    @property
    def label(self) -> int:
        return int(np.argmax(self.counts))

    @property
    def left(self) -> int:
        return 2 * self.node_id

    @property
    def right(self) -> int:
        return 2 * self.node_id + 1


@dataclass(frozen=True)
class GrowParams:
    impurity: Impurity = Impurity.GINI
    min_split: int = 20
    min_leaf: int = 7
    max_depth: Optional[int] = 30


@dataclass(frozen=True)
class ComplexityRow:
    alpha: float
    n_leaves: int
    cv_error: float
    cv_se: float


@dataclass
class Tree:
    nodes: dict[int, Node]
    n_classes: int
    column_meta: tuple[ColumnMeta, ...]
    params: GrowParams = field(default_factory=GrowParams)
    kind: FeatureKind = FeatureKind.FPCA
    complexity_table: list[ComplexityRow] = field(default_factory=list)

    @property
    def root(self) -> Node:
        return self.nodes[1]

    @property
    def n_features(self) -> int:
        return len(self.column_meta)

    @property
    def impurity_kind(self) -> Impurity:
        return self.params.impurity

    def leaves(self) -> list[Node]:
        return [node for node in self.nodes.values() if node.is_leaf]

    def internal_nodes(self) -> list[Node]:
        return [node for node in self.nodes.values() if not node.is_leaf]

    @property
    def n_leaves(self) -> int:
        return len(self.leaves())

    @property
    def depth(self) -> int:
        return max(node.depth for node in self.nodes.values())

    def used_features(self) -> frozenset[int]:
        return frozenset(node.feature for node in self.internal_nodes())


@dataclass(frozen=True)
class SeparationCurve:
    node_id: int
    grid: np.ndarray
    values: np.ndarray
    terms: list[tuple[int, int, float]]


def _impurity_rows(counts: np.ndarray, kind: Impurity) -> np.ndarray:
    """Impurity of every row of a (M x C) count matrix."""
    counts = np.asarray(counts, dtype=float)
    totals = counts.sum(axis=1, keepdims=True)
    freqs = counts / totals
    if kind == Impurity.GINI:
        return 1.0 - np.sum(freqs * freqs, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(freqs > 0.0, freqs * np.log(freqs), 0.0)
    return -np.sum(terms, axis=1)


def impurity(counts, kind: Impurity = Impurity.GINI) -> float:
    """Gini 1 - sum f^2 or entropy -sum f ln f (0 ln 0 = 0) of a class count vector."""
    counts = np.asarray(counts, dtype=float)
    if counts.ndim != 1 or np.any(counts < 0):
        raise InvalidInputError("class counts must be a non-negative vector")
    if counts.sum() <= 0:
        raise InvalidInputError("impurity of an empty node is undefined")
    return float(_impurity_rows(counts[None, :], Impurity(kind))[0])


def _split_gain(n: int, parent: float, left: np.ndarray, right: np.ndarray, kind: Impurity) -> np.ndarray:
    n_left = left.sum(axis=1)
    n_right = right.sum(axis=1)
    return parent - (n_left / n) * _impurity_rows(left, kind) - (n_right / n) * _impurity_rows(right, kind)


def _midpoint(lo: float, hi: float) -> float:
    mid = (lo + hi) / 2.0
    # adjacent floats: the midpoint may round onto hi, which would route hi left
    return mid if lo < mid < hi else hi


def best_split(
    rows,
    features: AugmentedFeatures,
    candidate_cols: Sequence[int],
    kind: Impurity = Impurity.GINI,
    min_leaf: int = 1,
    labels: Optional[np.ndarray] = None,
    n_classes: Optional[int] = None,
) -> Optional[tuple[int, float, float]]:
    """Exhaustive search over midpoints of consecutive distinct values.

    Returns (column, threshold, gain) maximizing the weighted impurity
    decrease, ties going to the lower column then the lower threshold, or None
    when the node is pure or no split has positive gain.
    """
    rows = np.asarray(rows, dtype=np.intp)
    y = np.asarray(features.labels if labels is None else labels)[rows]
    n = rows.size
    n_classes = n_classes or int(np.asarray(features.labels).max()) + 1
    if n < 2 or not len(candidate_cols):
        return None
    onehot = np.eye(n_classes, dtype=np.int64)
    total = np.bincount(y, minlength=n_classes)
    if np.count_nonzero(total) <= 1:
        return None
    parent = impurity(total, kind)

    best: Optional[tuple[int, float, float]] = None
    for col in sorted(int(c) for c in candidate_cols):
        x = features.matrix[rows, col]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        left = np.cumsum(onehot[y[order]], axis=0)[:-1]
        n_left = np.arange(1, n)
        valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n - n_left >= min_leaf)
        if not valid.any():
            continue
        pos = np.flatnonzero(valid)
        gains = _split_gain(n, parent, left[pos], total - left[pos], kind)
        top = gains.max()
        if top <= GAIN_TOL:
            continue
        i = pos[np.flatnonzero(gains >= top - GAIN_TOL)[0]]
        if best is None or top > best[2] + GAIN_TOL:
            best = (col, _midpoint(float(xs[i]), float(xs[i + 1])), float(top))
    return best


def grow(
    features: AugmentedFeatures,
    kind: Impurity = Impurity.GINI,
    min_split: int = 20,
    min_leaf: int = 7,
    max_depth: Optional[int] = 30,
    candidate_sampler: Optional[CandidateSampler] = None,
    rows=None,
    n_classes: Optional[int] = None,
) -> Tree:
    """Recursive binary partitioning.

    rows may repeat indices (bootstrap resamples). With a candidate_sampler
    every node draws its own candidate columns.
    """
    require(min_leaf >= 1, f"min_leaf must be at least 1, got {min_leaf}")
    require(min_split >= 2, f"min_split must be at least 2, got {min_split}")
    require(max_depth is None or max_depth >= 0, f"max_depth must be non-negative, got {max_depth}")
    kind = Impurity(kind)
    labels = np.asarray(features.labels, dtype=np.intp)
    n_classes = n_classes or int(labels.max()) + 1
    rows = np.arange(features.n_rows) if rows is None else np.asarray(rows, dtype=np.intp)
    all_columns = np.arange(features.n_columns)
    params = GrowParams(impurity=kind, min_split=min_split, min_leaf=min_leaf, max_depth=max_depth)
    nodes: dict[int, Node] = {}

    stack = [(1, rows, 0)]
    while stack:
        node_id, node_rows, depth = stack.pop()
        counts = np.bincount(labels[node_rows], minlength=n_classes)
        node = Node(node_id=node_id, counts=counts, impurity=impurity(counts, kind), depth=depth)
        nodes[node_id] = node
        if (
            np.count_nonzero(counts) <= 1
            or node_rows.size < min_split
            or (max_depth is not None and depth >= max_depth)
        ):
            continue
        candidates = all_columns if candidate_sampler is None else candidate_sampler(features.n_columns)
        split = best_split(node_rows, features, candidates, kind, min_leaf, labels, n_classes)
        if split is None:
            continue
        col, threshold, gain = split
        node.feature, node.threshold, node.gain = col, threshold, gain
        goes_left = features.matrix[node_rows, col] < threshold
        stack.append((node.right, node_rows[~goes_left], depth + 1))
        stack.append((node.left, node_rows[goes_left], depth + 1))

    tree = Tree(
        nodes=dict(sorted(nodes.items())),
        n_classes=n_classes,
        column_meta=features.column_meta,
        params=params,
        kind=features.kind,
    )
    return tree


def _check_layout(tree: Tree, features: AugmentedFeatures) -> None:
    if tuple(features.column_meta) != tuple(tree.column_meta):
        raise InvalidInputError(
            f"feature layout ({features.n_columns} columns) does not match the training layout "
            f"({tree.n_features} columns)"
        )


def apply(tree: Tree, matrix: np.ndarray) -> np.ndarray:
    """Leaf node id reached by every row of a feature matrix."""
    matrix = np.asarray(matrix, dtype=float)
    out = np.empty(matrix.shape[0], dtype=np.int64)
    stack = [(1, np.arange(matrix.shape[0]))]
    while stack:
        node_id, idx = stack.pop()
        node = tree.nodes[node_id]
        if node.is_leaf:
            out[idx] = node_id
            continue
        goes_left = matrix[idx, node.feature] < node.threshold
        if goes_left.any():
            stack.append((node.left, idx[goes_left]))
        if not goes_left.all():
            stack.append((node.right, idx[~goes_left]))
    return out


def _leaf_labels(tree: Tree) -> dict[int, int]:
    return {node.node_id: node.label for node in tree.leaves()}


def predict_matrix(tree: Tree, matrix: np.ndarray) -> np.ndarray:
    leaves = apply(tree, matrix)
    lookup = _leaf_labels(tree)
    return np.fromiter((lookup[leaf] for leaf in leaves), dtype=np.intp, count=leaves.size)


def predict(tree: Tree, features: AugmentedFeatures) -> np.ndarray:
    _check_layout(tree, features)
    return predict_matrix(tree, features.matrix)


def predict_proba(tree: Tree, features: AugmentedFeatures) -> np.ndarray:
    """Leaf class frequencies for every row."""
    _check_layout(tree, features)
    leaves = apply(tree, features.matrix)
    out = np.empty((leaves.size, tree.n_classes))
    for i, leaf in enumerate(leaves):
        counts = tree.nodes[int(leaf)].counts
        out[i] = counts / counts.sum()
    return out


def accuracy(tree: Tree, features: AugmentedFeatures) -> float:
    return float(np.mean(predict(tree, features) == features.labels))


# ---------------------------------------------------------------------------
# cost-complexity pruning
# ---------------------------------------------------------------------------


def _collapse(tree: Tree, collapsed: frozenset[int]) -> Tree:
    """Copy of the tree with every node in `collapsed` turned into a leaf."""
    keep: dict[int, Node] = {}
    for node_id, node in tree.nodes.items():
        ancestor = node_id // 2
        dropped = False
        while ancestor >= 1:
            if ancestor in collapsed:
                dropped = True
                break
            ancestor //= 2
        if dropped:
            continue
        if node_id in collapsed and not node.is_leaf:
            node = dataclasses.replace(node, feature=None, threshold=None, gain=0.0)
        keep[node_id] = node
    return dataclasses.replace(tree, nodes=keep, complexity_table=list(tree.complexity_table))


def _subtree_stats(tree: Tree, node_id: int, collapsed: frozenset[int], n_total: int, out: dict):
    """(resubstitution error, leaf count) of the branch rooted at node_id; records g(t) in out."""
    node = tree.nodes[node_id]
    own_error = (node.n_samples - node.counts.max()) / n_total
    if node.is_leaf or node_id in collapsed:
        return own_error, 1
    left_err, left_leaves = _subtree_stats(tree, node.left, collapsed, n_total, out)
    right_err, right_leaves = _subtree_stats(tree, node.right, collapsed, n_total, out)
    branch_error = left_err + right_err
    leaves = left_leaves + right_leaves
    out[node_id] = (own_error - branch_error) / (leaves - 1)
    return branch_error, leaves


def cost_complexity_path(tree: Tree) -> list[tuple[float, frozenset[int]]]:
    """Weakest-link sequence: (alpha_k, collapsed node set) with alpha_0 = 0, ending at the root leaf."""
    n_total = tree.root.n_samples
    collapsed: frozenset[int] = frozenset()
    path: list[tuple[float, frozenset[int]]] = [(0.0, collapsed)]
    while True:
        links: dict[int, float] = {}
        _subtree_stats(tree, 1, collapsed, n_total, links)
        if not links:
            return path
        weakest = min(links.values())
        collapsed = collapsed | {z for z, g in links.items() if g <= weakest + GAIN_TOL}
        alpha = max(weakest, 0.0)
        if alpha <= path[-1][0]:
            path[-1] = (path[-1][0], collapsed)
        else:
            path.append((alpha, collapsed))


def prune_at(tree: Tree, alpha: float, path=None) -> Tree:
    """Smallest minimizing subtree for complexity parameter alpha."""
    path = path if path is not None else cost_complexity_path(tree)
    chosen = path[0][1]
    for a, collapsed in path:
        if a <= alpha:
            chosen = collapsed
        else:
            break
    return _collapse(tree, chosen)


def prune(
    tree: Tree,
    features: AugmentedFeatures,
    folds: int = 10,
    rule: PruneRule = PruneRule.MIN,
    seed: int = 0,
) -> Tree:
    """Cost-complexity pruning with stratified k-fold cross-validation.

    Each fold regrows a tree with the same parameters and is pruned at the
    geometric midpoints of the main alpha sequence; rule=min keeps the subtree
    with the lowest CV error, rule=1se the smallest one within one standard
    error of it.
    """
    rule = PruneRule(rule)
    require(folds >= 2, f"folds must be at least 2, got {folds}")
    n = features.n_rows
    require(n >= folds, f"{n} rows cannot be split into {folds} folds")
    require(
        np.bincount(features.labels).max() >= folds,
        f"no class has at least {folds} rows; lower the number of folds",
    )
    _check_layout(tree, features)
    path = cost_complexity_path(tree)
    alphas = [a for a, _ in path]
    midpoints = [math.sqrt(a * b) if b != math.inf else a for a, b in zip(alphas, alphas[1:] + [math.inf])]

    errors = np.zeros((len(path), n), dtype=bool)
    splitter = StratifiedKFold(n_splits=folds, shuffle=True, random_state=seed)
    p = tree.params
    with branch("PRUNE"):
        for train_idx, test_idx in splitter.split(np.zeros(n), features.labels):
            fold_tree = grow(
                features.subset(train_idx),
                p.impurity,
                p.min_split,
                p.min_leaf,
                p.max_depth,
                n_classes=tree.n_classes,
            )
            fold_path = cost_complexity_path(fold_tree)
            held_out = features.matrix[test_idx]
            truth = features.labels[test_idx]
            for j, beta in enumerate(midpoints):
                pred = predict_matrix(prune_at(fold_tree, beta, fold_path), held_out)
                errors[j, test_idx] = pred != truth

    cv_error = errors.mean(axis=1)
    cv_se = np.sqrt(cv_error * (1.0 - cv_error) / n)
    table = [
        ComplexityRow(alpha=a, n_leaves=_collapse(tree, c).n_leaves, cv_error=float(e), cv_se=float(s))
        for (a, c), e, s in zip(path, cv_error, cv_se)
    ]
    best = float(cv_error.min())
    # larger alpha = smaller tree; prefer the simplest among equals
    if rule == PruneRule.MIN:
        index = max(j for j, e in enumerate(cv_error) if e <= best + GAIN_TOL)
    else:
        bound = best + cv_se[int(np.argmin(cv_error))]
        index = max(j for j, e in enumerate(cv_error) if e <= bound + GAIN_TOL)
    pruned = _collapse(tree, path[index][1])
    pruned.complexity_table = table
    log("PRUNE", rule=rule.value, alpha=path[index][0], leaves=pruned.n_leaves, grown_leaves=tree.n_leaves, cv_error=float(cv_error[index]))
    return pruned


# ---------------------------------------------------------------------------
# explainability
# ---------------------------------------------------------------------------


def path_to(node_id: int) -> list[int]:
    """Node ids from the root down to node_id, inclusive."""
    ids = []
    while node_id >= 1:
        ids.append(node_id)
        node_id //= 2
    return ids[::-1]


def separation_curve(tree: Tree, node_id: int, models: Mapping[int, FpcaModel], grid) -> SeparationCurve:
    """psi_z(t): sum of threshold * xi_k^(r)(t) over the splits on the path to node z, z included."""
    if tree.kind != FeatureKind.FPCA:
        raise InvalidInputError("separation curves need a tree trained on FPC scores")
    node = tree.nodes.get(node_id)
    if node is None:
        raise InvalidInputError(f"node {node_id} is not in the tree")
    if node.is_leaf:
        raise InvalidInputError(f"node {node_id} is a leaf and has no separation curve")
    grid = np.asarray(grid, dtype=float)
    values = np.zeros(grid.size)
    terms: list[tuple[int, int, float]] = []
    for z in path_to(node_id):
        split = tree.nodes[z]
        meta = tree.column_meta[split.feature]
        model = models.get(meta.r)
        if model is None or model.n_components < meta.k:
            raise InvalidInputError(f"no eigenfunction {meta.k} of order {meta.r} available")
        values = values + split.threshold * eigenfunctions(model, grid)[meta.k - 1]
        terms.append((meta.k, meta.r, float(split.threshold)))
    return SeparationCurve(node_id=node_id, grid=grid, values=values, terms=terms)


def impurity_importance(tree: Tree) -> np.ndarray:
    """Weighted impurity decrease per column, normalized to sum 1 (diagnostic only)."""
    out = np.zeros(tree.n_features)
    n_total = tree.root.n_samples
    for node in tree.internal_nodes():
        out[node.feature] += node.gain * node.n_samples / n_total
    total = out.sum()
    return out / total if total > 0 else out


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def tree_to_model(tree: Tree) -> TreeModel:
    return TreeModel(
        n_classes=tree.n_classes,
        kind=tree.kind,
        impurity=tree.params.impurity,
        min_split=tree.params.min_split,
        min_leaf=tree.params.min_leaf,
        max_depth=tree.params.max_depth,
        column_meta=[ColumnMetaModel(k=m.k, r=m.r, name=m.name) for m in tree.column_meta],
        nodes=[
            NodeModel(
                node_id=node.node_id,
                counts=[int(c) for c in node.counts],
                impurity=node.impurity,
                depth=node.depth,
                feature=node.feature,
                threshold=node.threshold,
                gain=node.gain,
            )
            for node in tree.nodes.values()
        ],
        complexity_table=[ComplexityRowModel(**dataclasses.asdict(row)) for row in tree.complexity_table],
    )


def tree_from_model(model: TreeModel) -> Tree:
    nodes = {
        n.node_id: Node(
            node_id=n.node_id,
            counts=np.asarray(n.counts, dtype=np.int64),
            impurity=n.impurity,
            depth=n.depth,
            feature=n.feature,
            threshold=n.threshold,
            gain=n.gain,
        )
        for n in model.nodes
    }
    if 1 not in nodes:
        raise InvalidInputError("serialized tree has no root node")
    for node in nodes.values():
        if not node.is_leaf and (node.left not in nodes or node.right not in nodes):
            raise InvalidInputError(f"serialized node {node.node_id} is missing a child")
    return Tree(
        nodes=dict(sorted(nodes.items())),
        n_classes=model.n_classes,
        column_meta=tuple(ColumnMeta(k=m.k, r=m.r, name=m.name) for m in model.column_meta),
        params=GrowParams(
            impurity=model.impurity,
            min_split=model.min_split,
            min_leaf=model.min_leaf,
            max_depth=model.max_depth,
        ),
        kind=model.kind,
        complexity_table=[ComplexityRow(**row.model_dump()) for row in model.complexity_table],
    )


def save_tree(tree: Tree, path: str | Path) -> None:
    Path(path).write_text(tree_to_model(tree).model_dump_json(indent=1))
    log("WRITE", path=Path(path).name, nodes=len(tree.nodes))


def load_tree(path: str | Path) -> Tree:
    return tree_from_model(TreeModel.model_validate_json(Path(path).read_text()))
