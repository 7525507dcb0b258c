"""Train-fitted feature maps: smoothing basis plus per-order FPCA, applied unchanged to new curves."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from src.afrf.core.logging import branch, log
from src.afrf.core.scheme import BasisModel, FeatureMapModel, FpcaSchema
from src.afrf.core.utils import FeatureKind, InvalidInputError, require
from src.afrf.functional.augment import AugmentedFeatures, build_augmented, build_augmented_spline
from src.afrf.functional.basis import (
    DEFAULT_ORDER,
    BasisSystem,
    SmoothedSet,
    build_basis,
    default_n_basis,
    derived_basis,
    gram_matrix,
    smooth,
)
from src.afrf.functional.dataio import CurveSet
from src.afrf.functional.fpca import FpcaModel, fit_fpca_orders


@dataclass(frozen=True, eq=False)
class FeatureMap:
    kind: FeatureKind
    basis: BasisSystem
    r_max: int
    class_names: tuple[str, ...]
    n_components: Optional[int] = None
    projected: bool = True
    models: dict[int, FpcaModel] = field(default_factory=dict)

    def with_components(self, n_components: int) -> "FeatureMap":
        return dataclasses.replace(self, n_components=n_components)


def resolve_n_basis(
    n_points: int,
    order: int = DEFAULT_ORDER,
    requested: Optional[int] = None,
    k_max: Optional[int] = None,
    r_max: int = 0,
) -> int:
    """Basis size to use: the requested one, else the default raised to fit k_max components at order r_max."""
    if requested is not None:
        return requested
    n_basis = default_n_basis(n_points, order)
    if k_max is not None:
        n_basis = max(n_basis, min(k_max + r_max, n_points - order))
    return n_basis


def align_labels(curves: CurveSet, class_names: tuple[str, ...]) -> CurveSet:
    """Re-express labels of new curves in the training label numbering."""
    if tuple(curves.class_names) == tuple(class_names):
        return curves
    index = {name: u for u, name in enumerate(class_names)}
    unknown = sorted(set(curves.class_names) - set(index))
    if unknown:
        raise InvalidInputError(f"labels {unknown} were not seen in training (classes {list(class_names)})")
    mapping = np.array([index[name] for name in curves.class_names], dtype=np.intp)
    return CurveSet(
        values=curves.values,
        domain=curves.domain,
        labels=mapping[curves.labels],
        class_names=class_names,
    )


def fit_feature_map(
    curves: CurveSet,
    n_basis: Optional[int] = None,
    order: int = DEFAULT_ORDER,
    r_max: int = 2,
    n_components: Optional[int] = 10,
    kind: FeatureKind = FeatureKind.FPCA,
    projected: bool = True,
) -> FeatureMap:
    """Fit the basis layout and, for FPC features, one decomposition per order on training curves only."""
    kind = FeatureKind(kind)
    require(0 <= r_max <= 2, f"r_max must be 0, 1 or 2, got {r_max}")
    n_basis = resolve_n_basis(curves.n_points, order, n_basis)
    basis = build_basis(n_basis, order)
    with branch("FEATURES"):
        smoothed = smooth(curves, basis)
        models = {}
        if kind == FeatureKind.FPCA:
            require(n_components is not None and n_components >= 1, "FPC features need K >= 1")
            models = fit_fpca_orders(smoothed, r_max, n_components)
    return FeatureMap(
        kind=kind,
        basis=basis,
        r_max=r_max,
        class_names=curves.class_names,
        n_components=n_components if kind == FeatureKind.FPCA else None,
        projected=projected,
        models=models,
    )


def smooth_with(fmap: FeatureMap, curves: CurveSet) -> SmoothedSet:
    return smooth(align_labels(curves, fmap.class_names), fmap.basis)


def features_from_smoothed(fmap: FeatureMap, smoothed: SmoothedSet) -> AugmentedFeatures:
    if fmap.kind == FeatureKind.FPCA:
        return build_augmented(fmap.models, smoothed, fmap.n_components, fmap.r_max)
    return build_augmented_spline(smoothed, fmap.r_max, fmap.projected)


def transform(fmap: FeatureMap, curves: CurveSet) -> AugmentedFeatures:
    """Augmented features of any curves (train or test) under the fitted map."""
    return features_from_smoothed(fmap, smooth_with(fmap, curves))


def fit_transform(curves: CurveSet, **kwargs) -> tuple[FeatureMap, AugmentedFeatures]:
    fmap = fit_feature_map(curves, **kwargs)
    return fmap, transform(fmap, curves)


def confusion_matrix(truth: np.ndarray, predicted: np.ndarray, n_classes: int) -> np.ndarray:
    """counts[true, predicted]."""
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(truth), np.asarray(predicted)), 1)
    return counts


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def feature_map_to_model(fmap: FeatureMap) -> FeatureMapModel:
    return FeatureMapModel(
        kind=fmap.kind,
        basis=BasisModel(order=fmap.basis.order, n_basis=fmap.basis.n_basis, knots=fmap.basis.knots.tolist()),
        r_max=fmap.r_max,
        n_components=fmap.n_components,
        projected=fmap.projected,
        class_names=list(fmap.class_names),
        models=[
            FpcaSchema(
                deriv_order=model.deriv_order,
                mean_coeffs=model.mean_coeffs.tolist(),
                eigen_coeffs=model.eigen_coeffs.tolist(),
                eigenvalues=model.eigenvalues.tolist(),
                total_variance=model.total_variance,
            )
            for _, model in sorted(fmap.models.items())
        ],
    )


def feature_map_from_model(model: FeatureMapModel) -> FeatureMap:
    basis = BasisSystem(
        order=model.basis.order, n_basis=model.basis.n_basis, knots=np.asarray(model.basis.knots, dtype=float)
    )
    models = {}
    for item in model.models:
        reduced = derived_basis(basis, item.deriv_order)
        eigen = np.asarray(item.eigen_coeffs, dtype=float).reshape(-1, reduced.n_basis)
        models[item.deriv_order] = FpcaModel(
            deriv_order=item.deriv_order,
            basis=reduced,
            mean_coeffs=np.asarray(item.mean_coeffs, dtype=float),
            eigen_coeffs=eigen,
            eigenvalues=np.asarray(item.eigenvalues, dtype=float),
            gram=gram_matrix(reduced),
            total_variance=item.total_variance,
        )
    return FeatureMap(
        kind=model.kind,
        basis=basis,
        r_max=model.r_max,
        class_names=tuple(model.class_names),
        n_components=model.n_components,
        projected=model.projected,
        models=models,
    )


def save_feature_map(fmap: FeatureMap, path: str | Path) -> None:
    Path(path).write_text(feature_map_to_model(fmap).model_dump_json(indent=1))
    log("WRITE", path=Path(path).name, kind=fmap.kind.value, r_max=fmap.r_max)


def load_feature_map(path: str | Path) -> FeatureMap:
    return feature_map_from_model(FeatureMapModel.model_validate_json(Path(path).read_text()))
