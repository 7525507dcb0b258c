import numpy as np
import pytest

from src.afrf.core.utils import FeatureKind, InvalidInputError
from src.afrf.functional.augment import build_augmented, build_augmented_spline, group_columns
from src.afrf.functional.basis import build_basis, smooth
from src.afrf.functional.fpca import fit_fpca_orders, score


@pytest.fixture
def smoothed(curves):
    return smooth(curves, build_basis(12))


def test_block_layout_and_names(smoothed):
    models = fit_fpca_orders(smoothed, r_max=2, k_max=5)
    features = build_augmented(models, smoothed, n_components=3, r_max=2)
    assert features.matrix.shape == (smoothed.n_curves, 9)
    assert features.column_names == [
        "FPC_1", "FPC_2", "FPC_3",
        "FPCd_1", "FPCd_2", "FPCd_3",
        "FPCd2_1", "FPCd2_2", "FPCd2_3",
    ]
    assert [(m.k, m.r) for m in features.column_meta][:4] == [(1, 0), (2, 0), (3, 0), (1, 1)]
    assert features.groups == {1: (0, 3, 6), 2: (1, 4, 7), 3: (2, 5, 8)}
    assert features.group_of(4) == (1, 4, 7)
    assert features.r_max == 2
    assert np.array_equal(features.block(1), score(models[1], smoothed).scores[:, :3])
    assert features.class_names == ("1", "2")


def test_zero_order_only_has_singleton_groups(smoothed):
    models = fit_fpca_orders(smoothed, r_max=0, k_max=4)
    features = build_augmented(models, smoothed, n_components=4, r_max=0)
    assert features.n_columns == 4
    assert all(len(cols) == 1 for cols in features.groups.values())


def test_too_many_components_rejected(smoothed):
    models = fit_fpca_orders(smoothed, r_max=2, k_max=4)
    with pytest.raises(InvalidInputError):
        build_augmented(models, smoothed, n_components=5, r_max=2)
    with pytest.raises(InvalidInputError):
        build_augmented(models, smoothed, n_components=2, r_max=3)
    with pytest.raises(InvalidInputError):
        build_augmented({0: models[0]}, smoothed, n_components=2, r_max=1)


def test_spline_blocks(smoothed):
    features = build_augmented_spline(smoothed, r_max=2)
    assert features.kind == FeatureKind.SPLINE
    assert features.n_columns == 36
    assert features.column_names[:2] == ["B_1", "B_2"]
    assert features.column_names[12] == "Bd_1"
    assert np.array_equal(features.block(0), smoothed.coeffs)
    assert features.groups[12] == (11, 23, 35)

    exact = build_augmented_spline(smoothed, r_max=2, projected=False)
    assert exact.n_columns == 12 + 11 + 10
    assert np.array_equal(exact.block(0), features.block(0))


def test_spline_columns_are_basis_size_times_orders(curves):
    smoothed = smooth(curves, build_basis(20))
    assert build_augmented_spline(smoothed, r_max=2).n_columns == 60
    assert build_augmented_spline(smoothed, r_max=1).n_columns == 40


def test_subset_keeps_layout(smoothed):
    features = build_augmented(fit_fpca_orders(smoothed, 1, 3), smoothed, 3, 1)
    part = features.subset([0, 5, 7])
    assert part.n_rows == 3
    assert part.column_meta == features.column_meta
    assert part.labels.tolist() == features.labels[[0, 5, 7]].tolist()


def test_groups_must_partition_columns(smoothed):
    features = build_augmented(fit_fpca_orders(smoothed, 1, 2), smoothed, 2, 1)
    assert group_columns(features.column_meta) == features.groups
    with pytest.raises(InvalidInputError):
        features.with_matrix(features.matrix[:, :3])
