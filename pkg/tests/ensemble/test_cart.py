import math

import numpy as np
import pytest

from src.afrf.core.utils import Impurity, InvalidInputError, PruneRule
from src.afrf.ensemble.cart import (
    GAIN_TOL,
    apply,
    best_split,
    cost_complexity_path,
    grow,
    impurity,
    impurity_importance,
    load_tree,
    path_to,
    predict,
    predict_proba,
    prune,
    prune_at,
    save_tree,
    separation_curve,
)
from src.afrf.functional.augment import build_augmented
from src.afrf.functional.basis import build_basis, smooth
from src.afrf.functional.fpca import eigenfunctions, fit_fpca_orders
from tests.factories import make_features


@pytest.fixture
def fitted(curves):
    smoothed = smooth(curves, build_basis(12))
    models = fit_fpca_orders(smoothed, r_max=2, k_max=4)
    return models, build_augmented(models, smoothed, n_components=4, r_max=2)


def _oracle(matrix, labels, n_classes, kind, min_leaf):
    """Every midpoint of every column, scanned in (column, threshold) order."""
    n = labels.size
    total = np.bincount(labels, minlength=n_classes)
    if np.count_nonzero(total) <= 1:
        return None
    parent = impurity(total, kind)
    candidates = []
    for col in range(matrix.shape[1]):
        values = np.unique(matrix[:, col])
        for lo, hi in zip(values[:-1], values[1:]):
            threshold = (lo + hi) / 2.0
            left = matrix[:, col] < threshold
            n_left = int(left.sum())
            if n_left < min_leaf or n - n_left < min_leaf:
                continue
            lc = np.bincount(labels[left], minlength=n_classes)
            rc = np.bincount(labels[~left], minlength=n_classes)
            gain = parent - n_left / n * impurity(lc, kind) - (n - n_left) / n * impurity(rc, kind)
            candidates.append((col, threshold, gain))
    if not candidates:
        return None
    top = max(g for _, _, g in candidates)
    if top <= GAIN_TOL:
        return None
    return next(c for c in candidates if c[2] >= top - GAIN_TOL)


def test_impurity_examples():
    assert impurity([2, 3, 5]) == pytest.approx(0.62)
    assert impurity([5, 5], Impurity.ENTROPY) == pytest.approx(math.log(2))
    assert impurity([4, 0], Impurity.ENTROPY) == 0.0
    assert impurity([7]) == 0.0
    with pytest.raises(InvalidInputError):
        impurity([0, 0])


def test_best_split_on_separated_values():
    features = make_features([[1.0], [2.0], [9.0], [10.0]], [0, 0, 1, 1])
    col, threshold, gain = best_split(np.arange(4), features, [0])
    assert col == 0
    assert threshold == 5.5
    assert gain == pytest.approx(0.5)


def test_best_split_prefers_lower_column_on_ties():
    features = make_features([[1.0, 1.0], [2.0, 2.0], [9.0, 9.0], [10.0, 10.0]], [0, 0, 1, 1])
    assert best_split(np.arange(4), features, [1, 0])[0] == 0


def test_best_split_none_when_pure_or_constant():
    pure = make_features([[1.0], [2.0], [3.0]], [1, 1, 1])
    assert best_split(np.arange(3), pure, [0], n_classes=2) is None
    flat = make_features([[4.0], [4.0], [4.0], [4.0]], [0, 1, 0, 1])
    assert best_split(np.arange(4), flat, [0]) is None


@pytest.mark.parametrize("kind", [Impurity.GINI, Impurity.ENTROPY])
def test_best_split_matches_exhaustive_scan(kind):
    rng = np.random.default_rng(42)
    for _ in range(200):
        n = int(rng.integers(4, 20))
        matrix = rng.integers(0, 6, size=(n, 3)).astype(float)
        labels = rng.integers(0, 3, size=n)
        min_leaf = int(rng.integers(1, 4))
        features = make_features(matrix, labels)
        got = best_split(np.arange(n), features, [0, 1, 2], kind, min_leaf, n_classes=3)
        want = _oracle(matrix, labels, 3, kind, min_leaf)
        if want is None:
            assert got is None
            continue
        assert got[0] == want[0]
        assert got[1] == want[1]
        assert got[2] == pytest.approx(want[2], abs=1e-10)


def test_grow_partitions_rows(fitted):
    _, features = fitted
    tree = grow(features, min_split=10, min_leaf=3)
    assert tree.root.n_samples == features.n_rows
    for node in tree.internal_nodes():
        left, right = tree.nodes[node.left], tree.nodes[node.right]
        assert np.array_equal(left.counts + right.counts, node.counts)
        assert left.depth == right.depth == node.depth + 1
        assert node.gain > 0
    assert all(leaf.n_samples >= 3 for leaf in tree.leaves())
    leaves = apply(tree, features.matrix)
    for leaf in tree.leaves():
        rows = leaves == leaf.node_id
        assert np.array_equal(np.bincount(features.labels[rows], minlength=2), leaf.counts)


def test_depth_zero_is_a_single_leaf(fitted):
    _, features = fitted
    tree = grow(features, max_depth=0)
    assert list(tree.nodes) == [1]
    assert np.all(predict(tree, features) == tree.root.label)


def test_pure_data_is_not_split():
    features = make_features(np.random.default_rng(0).normal(size=(30, 2)), [0] * 30)
    tree = grow(features, min_split=2, min_leaf=1, n_classes=2)
    assert tree.n_leaves == 1
    assert tree.root.counts.tolist() == [30, 0]


def test_monotone_transform_keeps_partition():
    rng = np.random.default_rng(7)
    matrix = rng.normal(size=(80, 4))
    labels = (matrix[:, 1] + 0.5 * matrix[:, 2] > 0).astype(int)
    a = grow(make_features(matrix, labels), min_split=4, min_leaf=2)
    b = grow(make_features(3.0 * matrix + 1.0, labels), min_split=4, min_leaf=2)
    assert sorted(a.nodes) == sorted(b.nodes)
    assert np.array_equal(apply(a, matrix), apply(b, 3.0 * matrix + 1.0))


def test_predict_proba_rows_sum_to_one(fitted):
    _, features = fitted
    tree = grow(features, min_split=10, min_leaf=3)
    proba = predict_proba(tree, features)
    assert np.allclose(proba.sum(axis=1), 1.0)
    assert np.array_equal(proba.argmax(axis=1), predict(tree, features))


def test_layout_mismatch_rejected(fitted):
    _, features = fitted
    tree = grow(features)
    other = make_features(features.matrix, features.labels)
    with pytest.raises(InvalidInputError):
        predict(tree, other)


def test_weakest_link_path(fitted):
    _, features = fitted
    tree = grow(features, min_split=4, min_leaf=1)
    path = cost_complexity_path(tree)
    alphas = [a for a, _ in path]
    assert alphas[0] == 0.0
    assert all(x < y for x, y in zip(alphas, alphas[1:]))
    assert 1 in path[-1][1]
    assert list(prune_at(tree, math.inf, path).nodes) == [1]
    assert prune_at(tree, 0.0, path).n_leaves <= tree.n_leaves
    sizes = [prune_at(tree, a, path).n_leaves for a in alphas]
    assert all(x > y for x, y in zip(sizes, sizes[1:]))


def test_cross_validated_pruning(fitted):
    _, features = fitted
    tree = grow(features, min_split=4, min_leaf=1)
    best = prune(tree, features, folds=5, rule=PruneRule.MIN, seed=3)
    simple = prune(tree, features, folds=5, rule=PruneRule.ONE_SE, seed=3)
    assert simple.n_leaves <= best.n_leaves <= tree.n_leaves
    table = best.complexity_table
    assert table[0].alpha == 0.0
    assert table[-1].n_leaves == 1
    assert all(0.0 <= row.cv_error <= 1.0 for row in table)
    assert all(row.cv_se == pytest.approx(math.sqrt(row.cv_error * (1 - row.cv_error) / features.n_rows)) for row in table)
    again = prune(tree, features, folds=5, rule=PruneRule.MIN, seed=3)
    assert sorted(again.nodes) == sorted(best.nodes)
    # pruned nodes are a prefix-closed subset of the grown tree
    for node_id in best.nodes:
        assert all(z in tree.nodes for z in path_to(node_id))


def test_pruning_needs_enough_rows_per_fold():
    features = make_features([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1])
    tree = grow(features, min_split=2, min_leaf=1)
    with pytest.raises(InvalidInputError):
        prune(tree, features, folds=5)
    with pytest.raises(InvalidInputError):
        prune(tree, features, folds=3)


def test_separation_curve_at_root(fitted):
    models, features = fitted
    tree = grow(features, min_split=10, min_leaf=3)
    grid = np.linspace(0.0, 1.0, 51)
    curve = separation_curve(tree, 1, models, grid)
    meta = features.column_meta[tree.root.feature]
    assert curve.terms == [(meta.k, meta.r, tree.root.threshold)]
    expected = tree.root.threshold * eigenfunctions(models[meta.r], grid)[meta.k - 1]
    assert np.allclose(curve.values, expected)


def test_separation_curve_sums_path_terms(fitted):
    models, features = fitted
    tree = grow(features, min_split=4, min_leaf=1)
    deep = max((n for n in tree.internal_nodes()), key=lambda n: n.depth)
    curve = separation_curve(tree, deep.node_id, models, np.linspace(0, 1, 11))
    assert len(curve.terms) == deep.depth + 1
    with pytest.raises(InvalidInputError):
        separation_curve(tree, tree.leaves()[0].node_id, models, np.linspace(0, 1, 11))
    with pytest.raises(InvalidInputError):
        separation_curve(tree, 10**6, models, np.linspace(0, 1, 11))


def test_impurity_importance_normalized(fitted):
    _, features = fitted
    tree = grow(features, min_split=10, min_leaf=3)
    scores = impurity_importance(tree)
    assert scores.sum() == pytest.approx(1.0)
    unused = set(range(features.n_columns)) - tree.used_features()
    assert all(scores[c] == 0.0 for c in unused)


def test_save_and_load(tmp_path, fitted):
    _, features = fitted
    tree = prune(grow(features, min_split=6, min_leaf=2), features, folds=4, seed=1)
    path = tmp_path / "tree.json"
    save_tree(tree, path)
    back = load_tree(path)
    assert sorted(back.nodes) == sorted(tree.nodes)
    for node_id, node in tree.nodes.items():
        other = back.nodes[node_id]
        assert other.feature == node.feature
        assert other.threshold == node.threshold
        assert np.array_equal(other.counts, node.counts)
    assert back.column_meta == tree.column_meta
    assert back.complexity_table == tree.complexity_table
    assert np.array_equal(predict(back, features), predict(tree, features))
