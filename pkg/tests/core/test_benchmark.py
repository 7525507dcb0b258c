import numpy as np
import pytest

from src.afrf.core.benchmark import BenchmarkCell, benchmark_files, benchmark_scenarios, derive_seed, overall, summarize
from src.afrf.core.database import ResultStore
from src.afrf.core.utils import FeatureKind, InvalidInputError
from src.afrf.functional.simgen import default_config, generate_split


def _cell(method, trees, k, accuracy, replicate=0):
    return BenchmarkCell(
        dataset="toy",
        method=method,
        features="fpca",
        forest_size=trees,
        k=k,
        replicate=replicate,
        seed=1,
        accuracy=accuracy,
        n_train=10,
        n_test=10,
    )


def test_derive_seed_is_stable_and_keyed():
    assert derive_seed(0, 1, 2) == derive_seed(0, 1, 2)
    assert derive_seed(0, 1, 2) != derive_seed(0, 1, 3)
    assert 0 <= derive_seed(5) < 2**32


def test_summaries():
    cells = [
        _cell("AFRF", 10, 5, 0.8),
        _cell("AFRF", 10, 10, 0.9),
        _cell("AFRF", 50, 5, 1.0),
        _cell("FRF", 10, 5, 0.6),
        _cell("FRF", 10, 10, 0.7),
    ]
    rows = summarize(cells)
    assert [(r.method, r.forest_size, r.n) for r in rows] == [("AFRF", 10, 2), ("AFRF", 50, 1), ("FRF", 10, 2)]
    assert rows[0].mean == pytest.approx(0.85)
    assert rows[0].median == pytest.approx(0.85)
    assert (rows[2].min, rows[2].max) == (0.6, 0.7)
    peaks = {r.method: (r.mean, r.peak) for r in overall(cells)}
    assert peaks["AFRF"] == (pytest.approx(0.9), 1.0)
    assert peaks["FRF"] == (pytest.approx(0.65), 0.7)


def test_scenario_sweep_and_resume():
    store = ResultStore()
    kwargs = dict(trees_grid=[3, 6], k_grid=[2], n_per_group=10, n_points=20, seed=4, store=store)
    cells = benchmark_scenarios([2], **kwargs)
    assert len(cells) == 2 * 2
    assert {c.method for c in cells} == {"FRF", "AFRF"}
    assert all(c.n_train == 10 and c.n_test == 10 for c in cells)
    assert all(0.0 <= c.accuracy <= 1.0 for c in cells)
    assert len({c.seed for c in cells}) == 1
    assert len(store) == 4
    again = benchmark_scenarios([2], **kwargs)
    assert again == cells
    assert len(store) == 4
    store.close()


def test_parallel_replicates_match_serial_run():
    kwargs = dict(trees_grid=[4], k_grid=[2, 3], replicates=2, n_per_group=8, n_points=20, seed=9)
    serial = benchmark_scenarios([1, 2], n_jobs=1, **kwargs)
    parallel = benchmark_scenarios([1, 2], n_jobs=2, **kwargs)
    assert parallel == serial
    assert [(c.dataset, c.replicate, c.method, c.k) for c in serial[:4]] == [
        ("sim1", 0, "FRF", 2),
        ("sim1", 0, "FRF", 3),
        ("sim1", 0, "AFRF", 2),
        ("sim1", 0, "AFRF", 3),
    ]


def test_partial_store_only_scores_missing_cells():
    store = ResultStore()
    kwargs = dict(trees_grid=[3], k_grid=[2], n_per_group=8, n_points=20, seed=2, store=store)
    first = benchmark_scenarios([1], replicates=1, **kwargs)
    assert len(store) == 2
    both = benchmark_scenarios([1], replicates=2, n_jobs=2, **kwargs)
    assert both[:2] == first
    assert len(store) == 4
    assert {c.replicate for c in both} == {0, 1}
    store.close()


def test_file_sweep_with_spline_features():
    train, test = generate_split(default_config(3, n_per_group=10, n_points=20, seed=1))
    cells = benchmark_files("sim3_files", train, test, trees_grid=[4], k_grid=[5], kind=FeatureKind.SPLINE)
    assert [(c.method, c.k, c.features) for c in cells] == [("FRF", 0, "spline"), ("AFRF", 0, "spline")]


def test_invalid_grids():
    with pytest.raises(InvalidInputError):
        benchmark_scenarios([1], trees_grid=[0], k_grid=[2], n_per_group=4, n_points=10)
    with pytest.raises(InvalidInputError):
        benchmark_scenarios([1], replicates=0)
