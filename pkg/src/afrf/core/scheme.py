from typing import Optional

from pydantic import BaseModel, Field

from src.afrf.core.utils import EvalSet, FeatureKind, Impurity, PruneRule


class ColumnMetaModel(BaseModel):
    k: int
    r: int
    name: str


class NodeModel(BaseModel):
    node_id: int
    counts: list[int]
    impurity: float
    depth: int
    feature: Optional[int] = None
    threshold: Optional[float] = None
    gain: float = 0.0


class ComplexityRowModel(BaseModel):
    alpha: float
    n_leaves: int
    cv_error: float
    cv_se: float


class TreeModel(BaseModel):
    n_classes: int
    kind: FeatureKind
    impurity: Impurity
    min_split: int
    min_leaf: int
    max_depth: Optional[int]
    column_meta: list[ColumnMetaModel]
    nodes: list[NodeModel]
    complexity_table: list[ComplexityRowModel] = Field(default_factory=list)


class ForestManifest(BaseModel):
    seed: int
    n_trees: int
    m: int
    bootstrap: bool
    n_classes: int
    kind: FeatureKind
    column_meta: list[ColumnMetaModel]
    n_rows: int
    inbag: list[list[int]]
    tree_files: list[str]


class BasisModel(BaseModel):
    order: int
    n_basis: int
    knots: list[float]


class FpcaSchema(BaseModel):
    deriv_order: int
    mean_coeffs: list[float]
    eigen_coeffs: list[list[float]]
    eigenvalues: list[float]
    total_variance: float


class FeatureMapModel(BaseModel):
    kind: FeatureKind
    basis: BasisModel
    r_max: int
    n_components: Optional[int] = None
    projected: bool = True
    class_names: list[str]
    models: list[FpcaSchema] = Field(default_factory=list)


class RunConfig(BaseModel):
    """Fully resolved settings of one CLI run, echoed into run_manifest.txt."""

    command: str
    train: Optional[str] = None
    test: Optional[str] = None
    output: Optional[str] = None
    model: Optional[str] = None
    dataset: Optional[str] = None
    n_basis: Optional[int] = None
    order: int = 4
    k: int = 10
    k_grid: list[int] = Field(default_factory=lambda: [5, 10, 15, 20])
    r_max: int = Field(default=2, ge=0, le=2)
    features: FeatureKind = FeatureKind.FPCA
    projected: bool = True
    trees: int = Field(default=100, ge=1)
    trees_grid: list[int] = Field(default_factory=lambda: [10, 25, 50, 100, 200, 500])
    mtry: Optional[int] = None
    impurity: Impurity = Impurity.GINI
    min_split: int = Field(default=20, ge=2)
    min_leaf: int = Field(default=7, ge=1)
    max_depth: Optional[int] = Field(default=30, ge=0)
    folds: int = Field(default=10, ge=2)
    prune: PruneRule = PruneRule.MIN
    reps: int = Field(default=30, ge=1)
    bins: int = Field(default=4, ge=2)
    eval_set: EvalSet = EvalSet.OOB
    scenario: Optional[int] = Field(default=None, ge=1, le=6)
    scenarios: list[int] = Field(default_factory=lambda: [1, 2, 3, 4, 5, 6])
    replicates: int = Field(default=1, ge=1)
    n_per_group: int = Field(default=100, ge=2)
    n_points: int = Field(default=50, ge=2)
    grid_size: int = Field(default=101, ge=2)
    seed: int = 0
    n_jobs: int = 1
    store: Optional[str] = None
    node: Optional[int] = None

    def manifest_lines(self) -> list[str]:
        data = self.model_dump(mode="json")
        lines = []
        for key in sorted(data):
            value = data[key]
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            lines.append(f"{key} = {'' if value is None else value}")
        return lines
