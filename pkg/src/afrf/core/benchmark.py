"""FRF vs AFRF accuracy sweeps over forest sizes, component counts and replicates."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.afrf.core.database import CellKey, ResultStore
from src.afrf.core.logging import branch, log
from src.afrf.core.pipeline import features_from_smoothed, fit_feature_map, resolve_n_basis, smooth_with
from src.afrf.core.utils import FeatureKind, Impurity, require
from src.afrf.ensemble.forest import predict, train_forest
from src.afrf.functional.dataio import CurveSet
from src.afrf.functional.simgen import ScenarioConfig, default_config, generate_split

METHODS = {"FRF": 0, "AFRF": 2}
DEFAULT_K_GRID = (5, 10, 15, 20)
DEFAULT_TREES_GRID = (10, 25, 50, 100, 200, 500)


@dataclass(frozen=True)
class BenchmarkCell:
    dataset: str
    method: str
    features: str
    forest_size: int
    k: int
    replicate: int
    seed: int
    accuracy: float
    n_train: int
    n_test: int


@dataclass(frozen=True)
class SummaryRow:
    dataset: str
    method: str
    forest_size: int
    n: int
    mean: float
    min: float
    q1: float
    median: float
    q3: float
    max: float


@dataclass(frozen=True)
class OverallRow:
    dataset: str
    method: str
    n: int
    mean: float
    peak: float


def derive_seed(*keys: int) -> int:
    """Stable 32-bit seed from integer keys."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


@dataclass(frozen=True)
class GridSettings:
    k_grid: tuple[int, ...]
    trees_grid: tuple[int, ...]
    kind: FeatureKind
    n_basis: Optional[int]
    order: int
    mtry: Optional[int]
    impurity: Impurity
    projected: bool = True

    def keys(self, dataset: str, replicate: int) -> tuple[CellKey, ...]:
        ks = self.k_grid if self.kind == FeatureKind.FPCA else (0,)
        return tuple(
            (dataset, method, self.kind.value, trees, k, replicate)
            for method in METHODS
            for k in ks
            for trees in self.trees_grid
        )


@dataclass(frozen=True)
class ReplicateJob:
    """Cells of one dataset replicate; simulated data is drawn in the worker when config is set."""

    dataset: str
    replicate: int
    forest_seed: int
    keys: tuple[CellKey, ...]
    todo: frozenset[CellKey]
    config: Optional[ScenarioConfig] = None
    train: Optional[CurveSet] = None
    test: Optional[CurveSet] = None

    def load(self) -> tuple[CurveSet, CurveSet]:
        if self.config is not None:
            return generate_split(self.config)
        return self.train, self.test


def _key_of(cell: BenchmarkCell) -> CellKey:
    return (cell.dataset, cell.method, cell.features, cell.forest_size, cell.k, cell.replicate)


def _score_replicate(job: ReplicateJob, settings: GridSettings, n_jobs: int) -> list[BenchmarkCell]:
    """Score the cells in job.todo; feature maps are fitted once per method."""
    train, test = job.load()
    kind = settings.kind
    k_needed = max(settings.k_grid) if kind == FeatureKind.FPCA else None
    # one basis for both methods so they differ only in the derivative blocks
    basis_size = resolve_n_basis(train.n_points, settings.order, settings.n_basis, k_needed, max(METHODS.values()))
    fitted: dict[str, tuple] = {}
    cells = []
    for key in job.keys:
        if key not in job.todo:
            continue
        _, method, _, trees, k, _ = key
        if method not in fitted:
            fmap = fit_feature_map(
                train,
                n_basis=basis_size,
                order=settings.order,
                r_max=METHODS[method],
                n_components=k_needed,
                kind=kind,
                projected=settings.projected,
            )
            fitted[method] = (fmap, smooth_with(fmap, train), smooth_with(fmap, test))
        fmap, smoothed_train, smoothed_test = fitted[method]
        cell_map = fmap.with_components(k) if kind == FeatureKind.FPCA else fmap
        x_train = features_from_smoothed(cell_map, smoothed_train)
        x_test = features_from_smoothed(cell_map, smoothed_test)
        forest = train_forest(
            x_train,
            trees,
            m=None if settings.mtry is None else min(settings.mtry, x_train.n_columns),
            seed=job.forest_seed,
            n_jobs=n_jobs,
            kind=settings.impurity,
        )
        cells.append(
            BenchmarkCell(
                dataset=job.dataset,
                method=method,
                features=kind.value,
                forest_size=trees,
                k=k,
                replicate=job.replicate,
                seed=job.forest_seed,
                accuracy=float(np.mean(predict(forest, x_test) == x_test.labels)),
                n_train=train.n_curves,
                n_test=test.n_curves,
            )
        )
    return cells


def _plan(
    dataset: str,
    replicate: int,
    forest_seed: int,
    settings: GridSettings,
    store: Optional[ResultStore],
    **data,
) -> tuple[ReplicateJob, dict[CellKey, BenchmarkCell]]:
    keys = settings.keys(dataset, replicate)
    hits = {}
    for key in keys:
        if store is not None and (hit := store.get(key)) is not None:
            log("SKIP cell", dataset=dataset, method=key[1], trees=key[3], k=key[4], replicate=replicate)
            hits[key] = _cell_of(hit)
    todo = frozenset(key for key in keys if key not in hits)
    job = ReplicateJob(dataset=dataset, replicate=replicate, forest_seed=forest_seed, keys=keys, todo=todo, **data)
    return job, hits


def _execute(
    plans: list[tuple[ReplicateJob, dict[CellKey, BenchmarkCell]]],
    settings: GridSettings,
    n_jobs: int,
    store: Optional[ResultStore],
) -> list[BenchmarkCell]:
    """Run pending replicates through joblib and return every cell in grid order.

    With several pending replicates the workers go to the replicates and each
    forest is grown serially; otherwise the forest gets the workers. Cells are
    stored from this process as each replicate finishes.
    """
    done: dict[CellKey, BenchmarkCell] = {}
    for _, hits in plans:
        done.update(hits)
    work = [job for job, _ in plans if job.todo]
    outer = n_jobs if len(work) > 1 else 1
    inner = 1 if outer != 1 else n_jobs
    results = Parallel(n_jobs=outer, return_as="generator")(
        delayed(_score_replicate)(job, settings, inner) for job in work
    )
    for cells in results:
        for cell in cells:
            if store is not None:
                store.put(**dataclasses.asdict(cell))
            log(
                "DONE cell",
                dataset=cell.dataset,
                method=cell.method,
                trees=cell.forest_size,
                k=cell.k,
                replicate=cell.replicate,
                accuracy=cell.accuracy,
            )
            done[_key_of(cell)] = cell
    return [done[key] for job, _ in plans for key in job.keys]


def _cell_of(record) -> BenchmarkCell:
    return BenchmarkCell(
        dataset=record.dataset,
        method=record.method,
        features=record.features,
        forest_size=record.forest_size,
        k=record.k,
        replicate=record.replicate,
        seed=record.seed,
        accuracy=record.accuracy,
        n_train=record.n_train,
        n_test=record.n_test,
    )


def benchmark_scenarios(
    scenarios: Iterable[int],
    trees_grid: Sequence[int] = DEFAULT_TREES_GRID,
    k_grid: Sequence[int] = DEFAULT_K_GRID,
    replicates: int = 1,
    seed: int = 0,
    n_per_group: int = 100,
    n_points: int = 50,
    kind: FeatureKind = FeatureKind.FPCA,
    n_basis: Optional[int] = None,
    order: int = 4,
    mtry: Optional[int] = None,
    impurity: Impurity = Impurity.GINI,
    projected: bool = True,
    n_jobs: int = 1,
    store: Optional[ResultStore] = None,
) -> list[BenchmarkCell]:
    """Regenerate every scenario per replicate and score both methods on its held-out half.

    Both methods of a replicate share the data and the forest seed. Replicates
    are independent and run in parallel when n_jobs allows.
    """
    require(replicates >= 1, f"replicates must be at least 1, got {replicates}")
    settings = _settings(trees_grid, k_grid, kind, n_basis, order, mtry, impurity, projected)
    plans = []
    for scenario in scenarios:
        with branch(f"SIM{scenario}"):
            for replicate in range(replicates):
                config = default_config(
                    scenario, n_per_group=n_per_group, n_points=n_points, seed=derive_seed(seed, scenario, replicate)
                )
                plans.append(
                    _plan(
                        f"sim{scenario}",
                        replicate,
                        derive_seed(seed, scenario, replicate, 1),
                        settings,
                        store,
                        config=config,
                    )
                )
    with branch("SCORE"):
        return _execute(plans, settings, n_jobs, store)


def benchmark_files(
    dataset: str,
    train: CurveSet,
    test: CurveSet,
    trees_grid: Sequence[int] = DEFAULT_TREES_GRID,
    k_grid: Sequence[int] = DEFAULT_K_GRID,
    replicates: int = 1,
    seed: int = 0,
    kind: FeatureKind = FeatureKind.FPCA,
    n_basis: Optional[int] = None,
    order: int = 4,
    mtry: Optional[int] = None,
    impurity: Impurity = Impurity.GINI,
    projected: bool = True,
    n_jobs: int = 1,
    store: Optional[ResultStore] = None,
) -> list[BenchmarkCell]:
    """Same grid on a fixed train/test pair; replicates vary only the forest seed."""
    require(replicates >= 1, f"replicates must be at least 1, got {replicates}")
    settings = _settings(trees_grid, k_grid, kind, n_basis, order, mtry, impurity, projected)
    with branch(dataset.upper()):
        plans = [
            _plan(dataset, replicate, derive_seed(seed, replicate), settings, store, train=train, test=test)
            for replicate in range(replicates)
        ]
        return _execute(plans, settings, n_jobs, store)


def _settings(trees_grid, k_grid, kind, n_basis, order, mtry, impurity, projected) -> GridSettings:
    require(all(h >= 1 for h in trees_grid), "forest sizes must be positive")
    require(all(k >= 1 for k in k_grid), "component counts must be positive")
    return GridSettings(
        k_grid=tuple(int(k) for k in k_grid),
        trees_grid=tuple(int(h) for h in trees_grid),
        kind=FeatureKind(kind),
        n_basis=n_basis,
        order=order,
        mtry=mtry,
        impurity=Impurity(impurity),
        projected=projected,
    )


def summarize(cells: Sequence[BenchmarkCell]) -> list[SummaryRow]:
    """Accuracy distribution per (dataset, method, forest size) over K and replicates."""
    frame = pd.DataFrame([dataclasses.asdict(c) for c in cells])
    rows = []
    for (dataset, method, trees), group in frame.groupby(["dataset", "method", "forest_size"], sort=True):
        acc = group["accuracy"].to_numpy()
        q1, median, q3 = np.quantile(acc, [0.25, 0.5, 0.75])
        rows.append(
            SummaryRow(
                dataset=dataset,
                method=method,
                forest_size=int(trees),
                n=int(acc.size),
                mean=float(acc.mean()),
                min=float(acc.min()),
                q1=float(q1),
                median=float(median),
                q3=float(q3),
                max=float(acc.max()),
            )
        )
    return rows


def overall(cells: Sequence[BenchmarkCell]) -> list[OverallRow]:
    """Mean and peak accuracy per (dataset, method) over the whole grid."""
    frame = pd.DataFrame([dataclasses.asdict(c) for c in cells])
    rows = []
    for (dataset, method), group in frame.groupby(["dataset", "method"], sort=True):
        acc = group["accuracy"].to_numpy()
        rows.append(OverallRow(dataset=dataset, method=method, n=int(acc.size), mean=float(acc.mean()), peak=float(acc.max())))
    return rows
