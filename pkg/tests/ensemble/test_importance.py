import numpy as np
import pytest

from src.afrf.core.utils import EvalSet, InvalidInputError
from src.afrf.ensemble.forest import train_forest
from src.afrf.ensemble.importance import (
    CONVENTION,
    conditional_importance,
    importance_report,
    permute_within,
    quantile_codes,
    strata_for,
    top_features,
    unconditional_importance,
)
from tests.factories import make_features


def _signal_features(n=120, seed=0, orders=None, copy_noise=None):
    """Column 0 decides the label; column 1 is noise or a near copy of column 0; column 2 is constant."""
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=n)
    x1 = rng.normal(size=n) if copy_noise is None else x0 + rng.normal(0.0, copy_noise, n)
    matrix = np.column_stack([x0, x1, np.full(n, 3.0)])
    return make_features(matrix, (x0 > 0).astype(int), orders)


def test_quantile_codes():
    codes = quantile_codes(np.arange(8, dtype=float), 4)
    assert codes.tolist() == [0, 0, 1, 1, 2, 2, 3, 3]
    with pytest.raises(InvalidInputError):
        quantile_codes(np.arange(8, dtype=float), 1)


def test_strata_cross_other_group_members():
    rng = np.random.default_rng(1)
    features = make_features(rng.normal(size=(40, 3)), [0, 1] * 20, orders=[0, 1, 2])
    assert features.group_of(0) == (0, 1, 2)
    strata = strata_for(features, 0, 2)
    assert strata.max() <= 3
    crossed = quantile_codes(features.matrix[:, 1], 2) * 2 + quantile_codes(features.matrix[:, 2], 2)
    for s in np.unique(strata):
        assert np.unique(crossed[strata == s]).size == 1
    single = make_features(rng.normal(size=(10, 2)), [0, 1] * 5)
    assert np.all(strata_for(single, 1, 4) == 0)


def test_permutation_keeps_stratum_multisets():
    rng = np.random.default_rng(2)
    values = rng.normal(size=50)
    strata = rng.integers(0, 5, size=50)
    strata[7] = 99
    shuffled = permute_within(values, strata, np.random.default_rng(3))
    for s in np.unique(strata):
        assert sorted(shuffled[strata == s]) == sorted(values[strata == s])
    assert shuffled[7] == values[7]
    assert not np.array_equal(shuffled, values)


def test_signal_column_dominates():
    features = _signal_features()
    forest = train_forest(features, n_trees=30, m=2, seed=0)
    scores = unconditional_importance(forest, features, reps=30, seed=1)
    assert scores[0] > 0.1
    assert scores[0] > scores[1]
    assert abs(scores[1]) <= 0.03
    assert scores[2] == 0.0


def test_singleton_groups_make_both_metrics_equal():
    features = _signal_features()
    forest = train_forest(features, n_trees=20, m=2, seed=4)
    report = importance_report(forest, features, reps=5, seed=7)
    assert np.array_equal(report.conditional_raw, report.unconditional_raw)
    assert np.array_equal(
        conditional_importance(forest, features, reps=5, seed=7),
        unconditional_importance(forest, features, reps=5, seed=7),
    )


def test_unused_column_scores_zero():
    features = _signal_features()
    forest = train_forest(features, n_trees=10, m=3, seed=2)
    unused = [c for c in range(3) if not any(c in t.used_features() for t in forest.trees)]
    assert 2 in unused
    report = importance_report(forest, features, reps=4, seed=0)
    for c in unused:
        assert np.all(report.conditional_raw[c] == 0.0)
        assert np.all(report.unconditional_raw[c] == 0.0)


def test_conditioning_on_a_near_copy_shrinks_importance():
    features = _signal_features(n=200, orders=[0, 1, 2], copy_noise=0.01, seed=5)
    assert features.group_of(0) == (0, 1, 2)
    forest = train_forest(features, n_trees=40, m=2, seed=3)
    report = importance_report(forest, features, reps=10, bins=4, seed=0)
    assert report.conditional[0] < report.unconditional[0]
    assert report.conditional[1] < report.unconditional[1]


def test_report_rows_and_determinism():
    features = _signal_features(orders=[0, 1, 0])
    forest = train_forest(features, n_trees=15, m=2, seed=1)
    report = importance_report(forest, features, reps=6, seed=3)
    again = importance_report(forest, features, reps=6, seed=3, n_jobs=2)
    assert np.array_equal(report.conditional_raw, again.conditional_raw)
    assert np.array_equal(report.unconditional_raw, again.unconditional_raw)
    assert [row.feature for row in report.rows] == ["c0", "c1", "c2"]
    assert [(row.k, row.r) for row in report.rows] == [(1, 0), (1, 1), (2, 0)]
    assert all(row.convention == CONVENTION and row.reps == 6 and row.eval_set == "oob" for row in report.rows)
    assert report.conditional_raw.shape == (3, 6)
    ranked = top_features(report, 2, conditional=False)
    assert len(ranked) == 2
    assert ranked[0].unconditional >= ranked[1].unconditional


def test_evaluation_sets():
    features = _signal_features()
    forest = train_forest(features, n_trees=10, seed=0)
    in_sample = importance_report(forest, features, reps=3, eval_set=EvalSet.IN_SAMPLE)
    assert in_sample.baseline_error < 0.1
    holdout = _signal_features(n=60, seed=9)
    report = importance_report(forest, holdout, reps=3, eval_set=EvalSet.HOLDOUT)
    assert report.eval_set == EvalSet.HOLDOUT
    with pytest.raises(InvalidInputError):
        importance_report(forest, holdout, reps=3, eval_set=EvalSet.OOB)


def test_out_of_bag_needs_coverage():
    features = _signal_features()
    forest = train_forest(features, n_trees=3, bootstrap=False)
    with pytest.raises(InvalidInputError):
        unconditional_importance(forest, features, reps=2)


def test_invalid_arguments():
    features = _signal_features()
    forest = train_forest(features, n_trees=3, seed=0)
    with pytest.raises(InvalidInputError):
        conditional_importance(forest, features, reps=2, bins=1)
    with pytest.raises(InvalidInputError):
        importance_report(forest, features, reps=0)
