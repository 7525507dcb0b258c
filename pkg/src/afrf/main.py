#!/usr/bin/env python3
"""Command line: python -m src.afrf.main <command> [options].

Every command writes CSV/JSON files plus run_manifest.txt into --output.
Exit status: 0 success, 2 unreadable input, 3 invalid arguments, 4 numerical failure.
"""

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from pydantic import ValidationError

from src.afrf.core import logging as afrf_logging
from src.afrf.core.benchmark import benchmark_files, benchmark_scenarios, overall, summarize
from src.afrf.core.database import ResultStore
from src.afrf.core.logging import branch, log
from src.afrf.core.pipeline import (
    FeatureMap,
    confusion_matrix,
    fit_feature_map,
    load_feature_map,
    resolve_n_basis,
    save_feature_map,
    transform,
)
from src.afrf.core.scheme import RunConfig
from src.afrf.core.utils import (
    DataFormatError,
    EvalSet,
    FeatureKind,
    Impurity,
    InvalidInputError,
    NumericError,
    PruneRule,
    parse_int_list,
    require,
)
from src.afrf.ensemble import cart, forest as rf
from src.afrf.ensemble.importance import importance_report, top_features
from src.afrf.functional.augment import AugmentedFeatures
from src.afrf.functional.basis import build_basis, evaluate, smooth
from src.afrf.functional.dataio import CurveSet, load_ucr, write_curves, write_table
from src.afrf.functional.fpca import eigenfunctions, explained_variance_ratio, mean_function
from src.afrf.functional.simgen import SCENARIOS, default_config, generate_split

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_NUMERIC = 4

MANIFEST = "run_manifest.txt"
FEATURE_MAP = "feature_map.json"
TREE = "tree.json"
GROWN_TREE = "tree_grown.json"
FOREST_DIR = "forest"

LIST_COMMANDS = {"benchmark"}


class AfrfCli:
    """One method per subcommand; each receives the resolved RunConfig."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out = Path(config.output)
        self.out.mkdir(parents=True, exist_ok=True)

    # ------------------------------
    # helpers
    # ------------------------------

    def _resolve_basis(self, curves: CurveSet) -> None:
        c = self.config
        k_max = c.k if c.features == FeatureKind.FPCA and c.command != "smooth" else None
        n_basis = resolve_n_basis(curves.n_points, c.order, c.n_basis, k_max, c.r_max)
        self.config = c.model_copy(update={"n_basis": n_basis})

    def _write_manifest(self) -> None:
        (self.out / MANIFEST).write_text("\n".join(self.config.manifest_lines()) + "\n")

    def _write(self, rows, name: str, columns: Optional[Sequence[str]] = None) -> None:
        write_table(rows, self.out / name, columns=columns)
        log("WRITE", path=name)

    def _grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.config.grid_size)

    def _train_curves(self) -> CurveSet:
        require(self.config.train is not None, f"{self.config.command} needs --train")
        return load_ucr(self.config.train)

    def _test_curves(self) -> Optional[CurveSet]:
        return load_ucr(self.config.test) if self.config.test else None

    def _evaluation_name(self) -> str:
        c = self.config
        if c.test is None or (c.train is not None and Path(c.train).resolve() == Path(c.test).resolve()):
            return "apparent"
        return "test"

    def _fit_map(self, train: CurveSet) -> FeatureMap:
        c = self.config
        return fit_feature_map(
            train,
            n_basis=c.n_basis,
            order=c.order,
            r_max=c.r_max,
            n_components=c.k,
            kind=c.features,
            projected=c.projected,
        )

    def _grow_and_prune(self, x_train: AugmentedFeatures) -> tuple[cart.Tree, cart.Tree]:
        c = self.config
        with branch("TREE"):
            grown = cart.grow(x_train, c.impurity, c.min_split, c.min_leaf, c.max_depth)
            log("GROW", leaves=grown.n_leaves, depth=grown.depth, columns=x_train.n_columns)
            pruned = cart.prune(grown, x_train, folds=c.folds, rule=c.prune, seed=c.seed)
        return grown, pruned

    def _train_forest(self, x_train: AugmentedFeatures) -> rf.Forest:
        c = self.config
        return rf.train_forest(x_train, c.trees, m=c.mtry, seed=c.seed, n_jobs=c.n_jobs, kind=c.impurity)

    def _confusion_rows(self, truth, predicted, class_names) -> list[dict]:
        counts = confusion_matrix(truth, predicted, len(class_names))
        return [
            {"true": name, **{f"pred_{other}": int(counts[u, v]) for v, other in enumerate(class_names)}}
            for u, name in enumerate(class_names)
        ]

    def _separation_curves(self, tree: cart.Tree, fmap: FeatureMap, nodes: Optional[list[int]] = None) -> int:
        grid = self._grid()
        nodes = nodes or [node.node_id for node in tree.internal_nodes()]
        terms = []
        for z in nodes:
            curve = cart.separation_curve(tree, z, fmap.models, grid)
            self._write(
                ({"t": float(t), "psi": float(v)} for t, v in zip(curve.grid, curve.values)),
                f"separation_node{z}.csv",
            )
            terms += [
                {"node": z, "step": i + 1, "k": k, "r": r, "threshold": threshold}
                for i, (k, r, threshold) in enumerate(curve.terms)
            ]
        self._write(terms, "separation_terms.csv", columns=["node", "step", "k", "r", "threshold"])
        return len(nodes)

    def _importance(self, forest: rf.Forest, features: AugmentedFeatures, eval_set: EvalSet) -> None:
        c = self.config
        report = importance_report(forest, features, reps=c.reps, bins=c.bins, seed=c.seed, eval_set=eval_set, n_jobs=c.n_jobs)
        self._write(report.rows, "importance.csv")
        for row in top_features(report, 3):
            log("TOP", feature=row.feature, conditional=row.conditional, unconditional=row.unconditional)

    # ------------------------------
    # commands
    # ------------------------------

    def cmd_simulate(self) -> None:
        c = self.config
        require(c.scenario is not None, "simulate needs --scenario")
        config = default_config(c.scenario, n_per_group=c.n_per_group, n_points=c.n_points, seed=c.seed)
        train, test = generate_split(config, n_jobs=c.n_jobs)
        write_curves(train, self.out / "train.tsv")
        write_curves(test, self.out / "test.tsv")

    def cmd_smooth(self) -> None:
        c = self.config
        curves = self._train_curves()
        self._resolve_basis(curves)
        basis = build_basis(self.config.n_basis, c.order)
        smoothed = smooth(curves, basis)
        grid = self._grid()
        orders = range(min(2, basis.order - 1) + 1)
        values = {r: evaluate(basis, smoothed.coeffs, grid, r) for r in orders}
        names = {0: "value", 1: "d1", 2: "d2"}
        rows = [
            {
                "curve": i,
                "label": curves.class_names[curves.labels[i]],
                "t": float(t),
                **{names[r]: float(values[r][i, j]) for r in orders},
            }
            for i in range(curves.n_curves)
            for j, t in enumerate(grid)
        ]
        self._write(rows, "smoothed.csv")
        self._write(
            (
                {"curve": i, "label": curves.class_names[curves.labels[i]], **{f"B_{s + 1}": float(v) for s, v in enumerate(row)}}
                for i, row in enumerate(smoothed.coeffs)
            ),
            "coefficients.csv",
        )

    def cmd_fpca_dump(self) -> None:
        train = self._train_curves()
        self.config = self.config.model_copy(update={"features": FeatureKind.FPCA})
        self._resolve_basis(train)
        fmap = self._fit_map(train)
        grid = self._grid()
        eig_rows, value_rows, mean_rows = [], [], []
        for r, model in sorted(fmap.models.items()):
            values = eigenfunctions(model, grid)
            for k in range(model.n_components):
                eig_rows += [{"r": r, "k": k + 1, "t": float(t), "value": float(v)} for t, v in zip(grid, values[k])]
                value_rows.append(
                    {
                        "r": r,
                        "k": k + 1,
                        "eigenvalue": float(model.eigenvalues[k]),
                        "explained_ratio": float(model.eigenvalues[k] / model.total_variance) if model.total_variance > 0 else 0.0,
                        "cumulative_ratio": explained_variance_ratio(model, k + 1),
                    }
                )
            mean_rows += [{"r": r, "t": float(t), "value": float(v)} for t, v in zip(grid, mean_function(model, grid))]
        self._write(eig_rows, "eigenfunctions.csv")
        self._write(value_rows, "eigenvalues.csv")
        self._write(mean_rows, "mean_functions.csv")
        save_feature_map(fmap, self.out / FEATURE_MAP)

    def cmd_train_tree(self) -> None:
        train = self._train_curves()
        test = self._test_curves()
        self._resolve_basis(train)
        fmap = self._fit_map(train)
        x_train = transform(fmap, train)
        grown, pruned = self._grow_and_prune(x_train)
        metrics = []
        for name, tree in (("unpruned_tree", grown), ("pruned_tree", pruned)):
            metrics.append({"model": name, "evaluation": "apparent", "accuracy": cart.accuracy(tree, x_train), "leaves": tree.n_leaves})
            if test is not None and self._evaluation_name() == "test":
                x_test = transform(fmap, test)
                metrics.append({"model": name, "evaluation": "test", "accuracy": cart.accuracy(tree, x_test), "leaves": tree.n_leaves})
        save_feature_map(fmap, self.out / FEATURE_MAP)
        cart.save_tree(grown, self.out / GROWN_TREE)
        cart.save_tree(pruned, self.out / TREE)
        self._write(pruned.complexity_table, "complexity_table.csv", columns=["alpha", "n_leaves", "cv_error", "cv_se"])
        self._write(metrics, "metrics.csv")

    def cmd_train_forest(self) -> None:
        train = self._train_curves()
        test = self._test_curves()
        self._resolve_basis(train)
        fmap = self._fit_map(train)
        x_train = transform(fmap, train)
        forest = self._train_forest(x_train)
        metrics = self._forest_metrics(forest, fmap, x_train, test)
        save_feature_map(fmap, self.out / FEATURE_MAP)
        rf.save_forest(forest, self.out / FOREST_DIR)
        self._write(metrics, "metrics.csv")
        self._write(
            (
                {"feature": meta.name, "k": meta.k, "r": meta.r, "impurity_decrease": float(v)}
                for meta, v in zip(forest.column_meta, rf.impurity_importance(forest))
            ),
            "impurity_importance.csv",
        )

    def _forest_metrics(self, forest: rf.Forest, fmap: FeatureMap, x_train, test: Optional[CurveSet]) -> list[dict]:
        metrics = []
        oob = rf.oob_error(forest, x_train)
        if oob is not None:
            metrics.append({"model": "forest", "evaluation": "oob", "accuracy": 1.0 - oob})
        apparent = float(np.mean(rf.predict(forest, x_train) == x_train.labels))
        metrics.append({"model": "forest", "evaluation": "apparent", "accuracy": apparent})
        if test is not None and self._evaluation_name() == "test":
            x_test = transform(fmap, test)
            metrics.append(
                {"model": "forest", "evaluation": "test", "accuracy": float(np.mean(rf.predict(forest, x_test) == x_test.labels))}
            )
        return metrics

    def _load_model(self):
        require(self.config.model is not None, f"{self.config.command} needs --model")
        model_dir = Path(self.config.model)
        fmap = load_feature_map(model_dir / FEATURE_MAP)
        if (model_dir / FOREST_DIR / rf.MANIFEST_NAME).exists():
            return fmap, rf.load_forest(model_dir / FOREST_DIR)
        if (model_dir / TREE).exists():
            return fmap, cart.load_tree(model_dir / TREE)
        raise FileNotFoundError(f"no tree or forest in {model_dir}")

    def cmd_predict(self) -> None:
        fmap, model = self._load_model()
        test = self._test_curves()
        require(test is not None, "predict needs --test")
        features = transform(fmap, test)
        if isinstance(model, rf.Forest):
            proba = rf.predict_proba(model, features)
        else:
            proba = cart.predict_proba(model, features)
        predicted = np.argmax(proba, axis=1)
        names = fmap.class_names
        self._write(
            (
                {
                    "curve": i,
                    "label": names[features.labels[i]],
                    "predicted": names[predicted[i]],
                    **{f"p_{name}": float(proba[i, u]) for u, name in enumerate(names)},
                }
                for i in range(features.n_rows)
            ),
            "predictions.csv",
        )
        accuracy = float(np.mean(predicted == features.labels))
        self._write([{"model": "forest" if isinstance(model, rf.Forest) else "tree", "evaluation": "test", "accuracy": accuracy}], "metrics.csv")
        self._write(self._confusion_rows(features.labels, predicted, names), "confusion.csv")

    def cmd_importance(self) -> None:
        c = self.config
        fmap, model = self._load_model()
        require(isinstance(model, rf.Forest), "importance needs a trained forest")
        if c.eval_set == EvalSet.HOLDOUT:
            curves = self._test_curves()
            require(curves is not None, "holdout importance needs --test")
        else:
            curves = self._train_curves()
        self._importance(model, transform(fmap, curves), c.eval_set)

    def cmd_explain(self) -> None:
        fmap, model = self._load_model()
        if isinstance(model, rf.Forest):
            model = cart.load_tree(Path(self.config.model) / TREE)
        nodes = [self.config.node] if self.config.node is not None else None
        count = self._separation_curves(model, fmap, nodes)
        log("DONE explain", curves=count)

    def cmd_benchmark(self) -> None:
        c = self.config
        store = ResultStore(c.store) if c.store else None
        common = dict(
            trees_grid=c.trees_grid,
            k_grid=c.k_grid,
            replicates=c.replicates,
            seed=c.seed,
            kind=c.features,
            n_basis=c.n_basis,
            order=c.order,
            mtry=c.mtry,
            impurity=c.impurity,
            projected=c.projected,
            n_jobs=c.n_jobs,
            store=store,
        )
        if c.train or c.test:
            require(c.train is not None and c.test is not None, "file benchmarks need both --train and --test")
            dataset = c.dataset or Path(c.train).stem
            cells = benchmark_files(dataset, load_ucr(c.train), load_ucr(c.test), **common)
        else:
            unknown = [s for s in c.scenarios if s not in SCENARIOS]
            require(not unknown, f"unknown scenarios {unknown}; expected a subset of {list(SCENARIOS)}")
            cells = benchmark_scenarios(c.scenarios, n_per_group=c.n_per_group, n_points=c.n_points, **common)
        if store is not None:
            store.close()
        self._write(cells, "accuracy_grid.csv")
        self._write(summarize(cells), "accuracy_summary.csv")
        self._write(overall(cells), "accuracy_overall.csv")

    def cmd_pipeline(self) -> None:
        c = self.config
        train = self._train_curves()
        test = self._test_curves()
        require(test is not None, "pipeline needs --test")
        evaluation = self._evaluation_name()
        self._resolve_basis(train)
        fmap = self._fit_map(train)
        x_train = transform(fmap, train)
        x_test = transform(fmap, test)

        grown, pruned = self._grow_and_prune(x_train)
        forest = self._train_forest(x_train)
        metrics = []
        for name, tree in (("unpruned_tree", grown), ("pruned_tree", pruned)):
            metrics.append({"model": name, "evaluation": "apparent", "accuracy": cart.accuracy(tree, x_train)})
            if evaluation == "test":
                metrics.append({"model": name, "evaluation": "test", "accuracy": cart.accuracy(tree, x_test)})
        metrics += self._forest_metrics(forest, fmap, x_train, test)
        self._write(metrics, "metrics.csv")

        names = fmap.class_names
        self._write(self._confusion_rows(x_test.labels, cart.predict(pruned, x_test), names), f"confusion_tree_{evaluation}.csv")
        self._write(self._confusion_rows(x_test.labels, rf.predict(forest, x_test), names), f"confusion_forest_{evaluation}.csv")

        save_feature_map(fmap, self.out / FEATURE_MAP)
        cart.save_tree(grown, self.out / GROWN_TREE)
        cart.save_tree(pruned, self.out / TREE)
        rf.save_forest(forest, self.out / FOREST_DIR)
        self._write(pruned.complexity_table, "complexity_table.csv", columns=["alpha", "n_leaves", "cv_error", "cv_se"])
        if fmap.kind == FeatureKind.FPCA and pruned.internal_nodes():
            self._separation_curves(pruned, fmap)
        if c.eval_set == EvalSet.HOLDOUT:
            self._importance(forest, x_test, c.eval_set)
        else:
            self._importance(forest, x_train, c.eval_set)

    def run(self) -> None:
        handler = getattr(self, "cmd_" + self.config.command.replace("-", "_"))
        with branch(self.config.command.upper(), last=True):
            handler()
        self._write_manifest()
        log("DONE", command=self.config.command, output=str(self.out))


# ------------------------------
# argument parsing
# ------------------------------


def _parents() -> dict[str, argparse.ArgumentParser]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--output", required=True, help="Output directory")
    common.add_argument("--seed", type=int, help="Master seed (default: 0)")
    common.add_argument("--n-jobs", type=int, help="Parallel workers (default: 1)")
    common.add_argument("--quiet", action="store_true", help="Disable console logging")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--train", help="Training curves (UCR layout)")
    data.add_argument("--test", help="Test curves (UCR layout)")

    basis = argparse.ArgumentParser(add_help=False)
    basis.add_argument("--n-basis", type=int, help="B-spline basis size S (default: min(20, T - order), raised to fit K)")
    basis.add_argument("--order", type=int, help="Spline order (default: 4, cubic)")

    features = argparse.ArgumentParser(add_help=False)
    features.add_argument("--k", help="Components per derivative order (benchmark: comma list)")
    features.add_argument("--r-max", type=int, choices=[0, 1, 2], help="Highest derivative order (default: 2)")
    features.add_argument("--features", choices=[k.value for k in FeatureKind], help="fpca (default) or spline")
    features.add_argument(
        "--exact-derivatives",
        dest="projected",
        action="store_false",
        default=None,
        help="Keep reduced-order spline derivative coefficients (S - r columns) instead of projecting onto the original basis",
    )

    impurity = argparse.ArgumentParser(add_help=False)
    impurity.add_argument("--impurity", choices=[k.value for k in Impurity], help="Split criterion (default: gini)")

    tree = argparse.ArgumentParser(add_help=False)
    tree.add_argument("--min-split", type=int, help="Smallest node that may split (default: 20)")
    tree.add_argument("--min-leaf", type=int, help="Smallest leaf (default: 7)")
    tree.add_argument("--max-depth", type=int, help="Depth limit (default: 30)")
    tree.add_argument("--folds", type=int, help="Pruning cross-validation folds (default: 10)")
    tree.add_argument("--prune", choices=[k.value for k in PruneRule], help="Subtree selection rule (default: min)")

    forest = argparse.ArgumentParser(add_help=False)
    forest.add_argument("--trees", help="Forest size H (benchmark: comma list)")
    forest.add_argument("--mtry", type=int, help="Candidate columns per split (default: round(sqrt(P)))")

    importance = argparse.ArgumentParser(add_help=False)
    importance.add_argument("--reps", type=int, help="Permutation repetitions (default: 30)")
    importance.add_argument("--bins", type=int, help="Quantile bins per conditioning column (default: 4)")
    importance.add_argument("--eval-set", choices=[k.value for k in EvalSet], help="Evaluation rows (default: oob)")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--grid-size", type=int, help="Points of the output evaluation grid (default: 101)")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--model", required=True, help="Directory written by train-tree, train-forest or pipeline")

    return {
        "common": common,
        "data": data,
        "basis": basis,
        "features": features,
        "impurity": impurity,
        "tree": tree,
        "forest": forest,
        "importance": importance,
        "grid": grid,
        "model": model,
    }


def build_parser() -> argparse.ArgumentParser:
    p = _parents()
    parser = argparse.ArgumentParser(description="Augmented functional classification trees and random forests")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", parents=[p["common"]], help="Emit train/test curves of a simulated scenario")
    simulate.add_argument("--scenario", type=int, required=True, choices=list(SCENARIOS))
    simulate.add_argument("--n-per-group", type=int, help="Curves per group before the split (default: 100)")
    simulate.add_argument("--n-points", type=int, help="Grid points (default: 50)")

    sub.add_parser("smooth", parents=[p["common"], p["data"], p["basis"], p["grid"]], help="Smoothed curves and derivatives")
    sub.add_parser(
        "fpca-dump",
        parents=[p["common"], p["data"], p["basis"], p["features"], p["grid"]],
        help="Eigenfunctions, eigenvalues and mean functions per order",
    )
    sub.add_parser(
        "train-tree",
        parents=[p["common"], p["data"], p["basis"], p["features"], p["impurity"], p["tree"]],
        help="Grow and prune a classification tree",
    )
    sub.add_parser(
        "train-forest",
        parents=[p["common"], p["data"], p["basis"], p["features"], p["impurity"], p["forest"]],
        help="Train a random forest",
    )
    predict = sub.add_parser("predict", parents=[p["common"], p["model"]], help="Predict labels of new curves")
    predict.add_argument("--test", required=True, help="Curves to classify (UCR layout)")
    sub.add_parser(
        "importance",
        parents=[p["common"], p["model"], p["data"], p["importance"]],
        help="Conditional and unconditional permutation importance",
    )
    explain = sub.add_parser("explain", parents=[p["common"], p["model"], p["grid"]], help="Separation curves of tree nodes")
    explain.add_argument("--node", type=int, help="Internal node id (default: every internal node)")

    benchmark = sub.add_parser(
        "benchmark",
        parents=[p["common"], p["data"], p["basis"], p["features"], p["impurity"], p["forest"]],
        help="FRF vs AFRF accuracy grid",
    )
    benchmark.add_argument("--scenarios", help="Comma list of scenario ids (default: 1,2,3,4,5,6)")
    benchmark.add_argument("--replicates", type=int, help="Replicates per cell (default: 1)")
    benchmark.add_argument("--n-per-group", type=int)
    benchmark.add_argument("--n-points", type=int)
    benchmark.add_argument("--store", help="SQLite file of finished cells; reruns skip them")
    benchmark.add_argument("--dataset", help="Dataset name for file benchmarks (default: train file stem)")

    sub.add_parser(
        "pipeline",
        parents=[
            p["common"],
            p["data"],
            p["basis"],
            p["features"],
            p["impurity"],
            p["tree"],
            p["forest"],
            p["importance"],
            p["grid"],
        ],
        help="Features, pruned tree, forest, explanations and importance in one run",
    )
    return parser


def _single_int(text: str, flag: str) -> int:
    values = parse_int_list(text)
    if len(values) != 1:
        raise InvalidInputError(f"{flag} takes a single integer here, got {text!r}")
    return values[0]


def to_config(args: argparse.Namespace) -> RunConfig:
    values = {key: value for key, value in vars(args).items() if value is not None and key != "quiet"}
    k_text = values.pop("k", None)
    trees_text = values.pop("trees", None)
    scenarios_text = values.pop("scenarios", None)
    if args.command in LIST_COMMANDS:
        if k_text is not None:
            values["k_grid"] = parse_int_list(k_text)
        if trees_text is not None:
            values["trees_grid"] = parse_int_list(trees_text)
        if scenarios_text is not None:
            values["scenarios"] = parse_int_list(scenarios_text)
    else:
        if k_text is not None:
            values["k"] = _single_int(k_text, "--k")
        if trees_text is not None:
            values["trees"] = _single_int(trees_text, "--trees")
    return RunConfig(**values)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.quiet:
        afrf_logging.disable_logger()
    else:
        afrf_logging.init_logger(args.command)
    try:
        AfrfCli(to_config(args)).run()
    except (DataFormatError, FileNotFoundError) as exc:
        log("FAIL parse", error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (InvalidInputError, ValidationError) as exc:
        log("FAIL validation", error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericError, np.linalg.LinAlgError) as exc:
        log("FAIL numeric", error=str(exc))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
