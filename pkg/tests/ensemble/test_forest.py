import numpy as np
import pytest

from src.afrf.core.utils import InvalidInputError
from src.afrf.ensemble import cart
from src.afrf.ensemble.forest import (
    MANIFEST_NAME,
    default_mtry,
    impurity_importance,
    load_forest,
    oob_error,
    oob_predict,
    predict,
    predict_proba,
    save_forest,
    train_bagging,
    train_forest,
    vote_counts,
)
from src.afrf.functional.augment import build_augmented
from src.afrf.functional.basis import build_basis, smooth
from src.afrf.functional.fpca import fit_fpca_orders


@pytest.fixture
def features(curves):
    smoothed = smooth(curves, build_basis(12))
    return build_augmented(fit_fpca_orders(smoothed, 2, 4), smoothed, n_components=4, r_max=2)


def _same_trees(a, b):
    if sorted(a.nodes) != sorted(b.nodes):
        return False
    return all(
        a.nodes[z].feature == b.nodes[z].feature and a.nodes[z].threshold == b.nodes[z].threshold for z in a.nodes
    )


def test_default_mtry():
    assert default_mtry(30) == 5
    assert default_mtry(12) == 3
    assert default_mtry(1) == 1


def test_single_tree_without_resampling_is_a_plain_tree(features):
    forest = train_forest(features, n_trees=1, m=features.n_columns, bootstrap=False)
    tree = cart.grow(features, min_split=2, min_leaf=1, max_depth=None)
    assert _same_trees(forest.trees[0], tree)
    assert np.array_equal(predict(forest, features), cart.predict(tree, features))
    assert forest.inbag.all()


def test_bagging_equals_full_mtry_forest(features):
    bagged = train_bagging(features, n_trees=5, seed=9)
    full = train_forest(features, n_trees=5, m=features.n_columns, seed=9)
    assert bagged.m == features.n_columns
    assert np.array_equal(bagged.inbag, full.inbag)
    assert all(_same_trees(a, b) for a, b in zip(bagged.trees, full.trees))


def test_same_seed_same_forest(features):
    a = train_forest(features, n_trees=8, seed=4)
    b = train_forest(features, n_trees=8, seed=4, n_jobs=2)
    assert np.array_equal(a.inbag, b.inbag)
    assert all(_same_trees(x, y) for x, y in zip(a.trees, b.trees))
    c = train_forest(features, n_trees=8, seed=5)
    assert not np.array_equal(a.inbag, c.inbag)


def test_probabilities_are_vote_fractions(features):
    forest = train_forest(features, n_trees=7, seed=1)
    proba = predict_proba(forest, features)
    assert np.allclose(proba.sum(axis=1), 1.0)
    assert np.allclose(proba * 7, np.round(proba * 7))
    assert np.array_equal(predict(forest, features), proba.argmax(axis=1))


def test_vote_ties_go_to_lowest_class():
    predictions = np.array([[0, 2, 1], [1, 1, 2]])
    votes = vote_counts(predictions, 3)
    assert votes.tolist() == [[1, 1, 0], [0, 1, 1], [0, 1, 1]]
    assert np.argmax(votes, axis=1).tolist() == [0, 1, 1]
    masked = vote_counts(predictions, 3, mask=np.array([[True, False, True], [False, True, True]]))
    assert masked.tolist() == [[1, 0, 0], [0, 1, 0], [0, 1, 1]]


def test_out_of_bag_error(features):
    forest = train_forest(features, n_trees=30, seed=2)
    assert forest.inbag.shape == (30, features.n_rows)
    labels, covered = oob_predict(forest, features)
    assert covered.all()
    error = oob_error(forest, features)
    assert error == pytest.approx(np.mean(labels != features.labels))
    assert 0.0 <= error < 0.5


def test_out_of_bag_without_resampling_is_skipped(features):
    forest = train_forest(features, n_trees=3, bootstrap=False)
    assert oob_error(forest, features) is None
    with pytest.raises(InvalidInputError):
        oob_predict(forest, features.subset(np.arange(10)))


def test_invalid_hyperparameters(features):
    with pytest.raises(InvalidInputError):
        train_forest(features, n_trees=0)
    with pytest.raises(InvalidInputError):
        train_forest(features, n_trees=3, m=features.n_columns + 1)
    with pytest.raises(InvalidInputError):
        train_forest(features, n_trees=3, m=0)


def test_impurity_importance_averages_trees(features):
    forest = train_forest(features, n_trees=6, seed=0)
    scores = impurity_importance(forest)
    assert scores.shape == (features.n_columns,)
    assert scores.sum() == pytest.approx(1.0)


def test_save_and_load(tmp_path, features):
    forest = train_forest(features, n_trees=4, seed=3)
    save_forest(forest, tmp_path / "forest")
    assert (tmp_path / "forest" / MANIFEST_NAME).exists()
    back = load_forest(tmp_path / "forest")
    assert back.n_trees == 4
    assert back.m == forest.m
    assert np.array_equal(back.inbag, forest.inbag)
    assert np.array_equal(predict_proba(back, features), predict_proba(forest, features))
    assert oob_error(back, features) == oob_error(forest, features)
