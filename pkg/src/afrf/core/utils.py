from enum import Enum
from typing import Optional, Sequence

import numpy as np


class DataFormatError(ValueError):
    """Input file that cannot be parsed into curves."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(f"{where}{message}")


class InvalidInputError(ValueError):
    """Violated precondition: bad hyperparameter, layout mismatch, out-of-range argument."""


class NumericError(ArithmeticError):
    """Rank deficiency, singular Gram matrix or failed factorization."""


class Impurity(str, Enum):
    GINI = "gini"
    ENTROPY = "entropy"


class PruneRule(str, Enum):
    MIN = "min"
    ONE_SE = "1se"


class EvalSet(str, Enum):
    OOB = "oob"
    HOLDOUT = "holdout"
    IN_SAMPLE = "in-sample"


class FeatureKind(str, Enum):
    FPCA = "fpca"
    SPLINE = "spline"


def child_seeds(seed: int, n: int, *keys: int) -> list[np.random.SeedSequence]:
    """Independent substreams keyed by (seed, *keys), one per index in range(n)."""
    return np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).spawn(n)


def keyed_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))


def column_name(k: int, r: int, kind: "FeatureKind" = FeatureKind.FPCA) -> str:
    """FPC_k / FPCd_k / FPCd2_k for scores, B_s / Bd_s / Bd2_s for spline coefficients."""
    stem = "FPC" if kind == FeatureKind.FPCA else "B"
    suffix = {0: "", 1: "d"}.get(r, f"d{r}")
    return f"{stem}{suffix}_{k}"


def parse_int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise InvalidInputError(f"expected a comma separated list of integers, got {text!r}")
    if not values:
        raise InvalidInputError("empty integer list")
    return values


def require(condition: bool, message: str) -> None:
    if not condition:
        raise InvalidInputError(message)
