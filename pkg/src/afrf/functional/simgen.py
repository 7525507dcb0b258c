"""Simulated two-, three- and four-class curve scenarios with exponential-covariance Gaussian noise.

Scenario groups:

    1  trend vs trend with a random jump
    2  harmonic amplitudes vs a Bernoulli mixture of two amplitude ranges
    3  trend vs trend with a level shift and a narrow peak
    4  scenario 3 under two configurations: A-1, A-2, B-1, B-2
    5  scenario 3 under two configurations: A-1, A-2, B-2
    6  scenario 1 under two configurations: A-1, A-2, B-2
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Union

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg

from src.afrf.core.logging import log
from src.afrf.core.utils import InvalidInputError, NumericError, child_seeds, require
from src.afrf.functional.dataio import CurveSet

SCENARIOS = (1, 2, 3, 4, 5, 6)
GROUP_COUNTS = {1: 2, 2: 2, 3: 2, 4: 4, 5: 3, 6: 3}

JITTER_START = 1e-10
JITTER_MAX = 1e-4

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


@dataclass(frozen=True)
class GpSpec:
    """Zero-mean Gaussian process with covariance alpha * exp(-beta |t - s|^nu_exp)."""

    alpha: float
    beta: float
    nu_exp: float
    grid: tuple[float, ...]

    def __post_init__(self):
        require(self.alpha >= 0.0, f"alpha must be non-negative, got {self.alpha}")
        require(self.beta > 0.0, f"beta must be positive, got {self.beta}")
        require(0.0 < self.nu_exp <= 2.0, f"nu_exp must be in (0, 2], got {self.nu_exp}")
        require(len(self.grid) >= 1, "grid must not be empty")

    def covariance(self) -> np.ndarray:
        t = np.asarray(self.grid, dtype=float)
        lag = np.abs(t[:, None] - t[None, :])
        return self.alpha * np.exp(-self.beta * lag**self.nu_exp)


def _rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_gp(spec: GpSpec, n: int, seed: SeedLike = 0) -> np.ndarray:
    """n draws (rows) from N(0, Gamma); the jitter grows tenfold until Cholesky succeeds."""
    require(n >= 0, f"n must be non-negative, got {n}")
    size = len(spec.grid)
    if spec.alpha == 0.0:
        return np.zeros((n, size))
    cov = spec.covariance()
    jitter = JITTER_START
    while True:
        try:
            lower = linalg.cholesky(cov + jitter * np.eye(size), lower=True)
            break
        except linalg.LinAlgError:
            jitter *= 10.0
            if jitter > JITTER_MAX:
                raise NumericError(
                    f"covariance (beta={spec.beta}, nu_exp={spec.nu_exp}) not factorizable on {size} points"
                )
    return _rng(seed).standard_normal((n, size)) @ lower.T


# ---------------------------------------------------------------------------
# mean structures
# ---------------------------------------------------------------------------


def jump_mean(t, mu: float, q: float = 0.0, k: float = 1.0, jump_at: float = np.inf) -> np.ndarray:
    """mu * t + q * k * I(jump_at <= t)."""
    t = np.asarray(t, dtype=float)
    return mu * t + q * k * (jump_at <= t)


def harmonic_mean(t, sin_amp: float, cos_amp: float) -> np.ndarray:
    """sin_amp * sin(theta) + cos_amp * cos(theta) with theta = 2 pi t."""
    theta = 2.0 * np.pi * np.asarray(t, dtype=float)
    return sin_amp * np.sin(theta) + cos_amp * np.cos(theta)


def _peak_power(d: np.ndarray, w: float) -> np.ndarray:
    if float(w).is_integer():
        return d ** int(w)
    return np.abs(d) ** w


def peak_mean(
    t, mu: float, q: float, u: int, v: float, r_peak: float, z_peak: float, w_peak: float
) -> np.ndarray:
    """mu t + (-1)^u q + (-1)^(1-u) exp(-z_peak (t - v)^w_peak) / sqrt(r_peak pi)."""
    t = np.asarray(t, dtype=float)
    peak = np.exp(-z_peak * _peak_power(t - v, w_peak)) / np.sqrt(r_peak * np.pi)
    return mu * t + (-1.0) ** u * q + (-1.0) ** (1 - u) * peak


# ---------------------------------------------------------------------------
# configurations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrendParams:
    """Linear trend; the shifted group adds q * k_i * I(T_i <= t), k_i = +-1, T_i ~ U[a, b]."""

    mu: float
    q: float
    a: float
    b: float
    alpha: float
    beta: float
    nu_exp: float


@dataclass(frozen=True)
class HarmonicParams:
    """Base group amplitudes ~ U[a1, a2]; the shifted group mixes U[b1, b2] and U[c1, c2] by u_i."""

    a1: float
    a2: float
    b1: float
    b2: float
    c1: float
    c2: float
    alpha: float
    beta: float
    nu_exp: float
    p_u: float = 0.5


@dataclass(frozen=True)
class PeakParams:
    """Linear trend; the shifted group adds a level shift and a peak centred at v ~ U[a, b]."""

    mu: float
    q: float
    a: float
    b: float
    alpha: float
    beta: float
    nu_exp: float
    r_peak: float
    z_peak: float
    w_peak: float
    p_u: float = 0.5


Params = Union[TrendParams, HarmonicParams, PeakParams]


@dataclass(frozen=True)
class GroupSpec:
    params: Params
    shifted: bool


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulated scenario: its groups, sample size per group, grid length and seed.

    Peak scenarios use peak_mean as written, so u = 0 gives +q with a downward
    peak and u = 1 gives -q with an upward one. The other reading of scenario 3,
    u = 0 at -q plus the peak height, is not used.
    """

    scenario: int
    groups: tuple[GroupSpec, ...]
    n_per_group: int = 100
    n_points: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InvalidInputError(f"unknown scenario {self.scenario}; expected one of {SCENARIOS}")
        require(self.n_per_group >= 1, f"n_per_group must be positive, got {self.n_per_group}")
        require(self.n_points >= 2, f"n_points must be at least 2, got {self.n_points}")
        require(len(self.groups) >= 2, "a scenario needs at least two groups")

    @property
    def grid(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_points)


SIM1 = TrendParams(mu=8.0, q=2.0, a=0.2, b=0.5, alpha=1.0, beta=1.0, nu_exp=1.0)
SIM2 = HarmonicParams(a1=2.0, a2=10.0, b1=1.5, b2=11.5, c1=1.0, c2=4.0, alpha=2.0, beta=0.5, nu_exp=1.0)
SIM3 = PeakParams(
    mu=8.0, q=1.8, a=0.45, b=0.55, alpha=1.0, beta=1.0, nu_exp=1.0, r_peak=0.02, z_peak=90.0, w_peak=2.0
)
SIM4_A = PeakParams(
    mu=0.0, q=1.0, a=0.45, b=0.45, alpha=1.3, beta=1.2, nu_exp=1.0, r_peak=0.02, z_peak=90.0, w_peak=2.0
)
SIM4_B = PeakParams(
    mu=-2.0, q=1.8, a=0.15, b=0.15, alpha=0.8, beta=0.8, nu_exp=1.0, r_peak=0.01, z_peak=90.0, w_peak=5.0
)
SIM5_A = PeakParams(
    mu=0.0, q=1.8, a=0.45, b=0.45, alpha=1.0, beta=1.0, nu_exp=1.0, r_peak=0.02, z_peak=90.0, w_peak=2.0
)
SIM5_B = PeakParams(
    mu=1.0, q=0.8, a=0.65, b=0.65, alpha=1.0, beta=1.0, nu_exp=1.0, r_peak=0.02, z_peak=90.0, w_peak=2.0
)
SIM6_A = TrendParams(mu=2.0, q=3.0, a=0.6, b=0.75, alpha=2.0, beta=1.0, nu_exp=0.5)
SIM6_B = TrendParams(mu=2.0, q=3.0, a=0.8, b=0.9, alpha=2.0, beta=1.0, nu_exp=0.5)


def _pair(params: Params) -> tuple[GroupSpec, GroupSpec]:
    return GroupSpec(params, shifted=False), GroupSpec(params, shifted=True)


def default_groups(scenario: int) -> tuple[GroupSpec, ...]:
    if scenario == 1:
        return _pair(SIM1)
    if scenario == 2:
        return _pair(SIM2)
    if scenario == 3:
        return _pair(SIM3)
    if scenario == 4:
        return _pair(SIM4_A) + _pair(SIM4_B)
    if scenario == 5:
        return _pair(SIM5_A) + (GroupSpec(SIM5_B, shifted=True),)
    if scenario == 6:
        return _pair(SIM6_A) + (GroupSpec(SIM6_B, shifted=True),)
    raise InvalidInputError(f"unknown scenario {scenario}; expected one of {SCENARIOS}")


def default_config(scenario: int, n_per_group: int = 100, n_points: int = 50, seed: int = 0) -> ScenarioConfig:
    return ScenarioConfig(
        scenario=scenario,
        groups=default_groups(scenario),
        n_per_group=n_per_group,
        n_points=n_points,
        seed=seed,
    )


def noiseless(config: ScenarioConfig) -> ScenarioConfig:
    """Same scenario with every noise scale set to zero."""
    groups = tuple(dataclasses.replace(g, params=dataclasses.replace(g.params, alpha=0.0)) for g in config.groups)
    return dataclasses.replace(config, groups=groups)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _group_means(group: GroupSpec, t: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    p = group.params
    if isinstance(p, TrendParams):
        if not group.shifted:
            return np.tile(jump_mean(t, p.mu), (n, 1))
        k = rng.choice([-1.0, 1.0], size=n)
        jump_at = rng.uniform(p.a, p.b, size=n)
        return np.stack([jump_mean(t, p.mu, p.q, k[i], jump_at[i]) for i in range(n)])

    if isinstance(p, HarmonicParams):
        if not group.shifted:
            amps = rng.uniform(p.a1, p.a2, size=(n, 2))
        else:
            low = rng.uniform(p.b1, p.b2, size=(n, 2))
            high = rng.uniform(p.c1, p.c2, size=(n, 2))
            u = rng.binomial(1, p.p_u, size=n).astype(bool)
            amps = np.where(u[:, None], high, low)
        return np.stack([harmonic_mean(t, amps[i, 0], amps[i, 1]) for i in range(n)])

    if isinstance(p, PeakParams):
        if not group.shifted:
            return np.tile(jump_mean(t, p.mu), (n, 1))
        u = rng.binomial(1, p.p_u, size=n)
        v = rng.uniform(p.a, p.b, size=n)
        return np.stack(
            [peak_mean(t, p.mu, p.q, int(u[i]), v[i], p.r_peak, p.z_peak, p.w_peak) for i in range(n)]
        )

    raise InvalidInputError(f"unsupported group parameters {type(p).__name__}")


def generate_group(group: GroupSpec, grid: np.ndarray, n: int, seed: SeedLike) -> np.ndarray:
    """n curves of one group: per-curve mean structure plus Gaussian process noise."""
    rng = _rng(seed)
    means = _group_means(group, grid, n, rng)
    p = group.params
    noise = sample_gp(GpSpec(p.alpha, p.beta, p.nu_exp, tuple(grid)), n, rng)
    return means + noise


def generate(config: ScenarioConfig, n_jobs: int = 1) -> CurveSet:
    """Labeled curves, n_per_group per group, groups in order with labels 1..G."""
    grid = config.grid
    seeds = child_seeds(config.seed, len(config.groups), config.scenario)
    blocks = Parallel(n_jobs=n_jobs)(
        delayed(generate_group)(group, grid, config.n_per_group, seq)
        for group, seq in zip(config.groups, seeds)
    )
    values = np.vstack(blocks)
    labels = np.repeat(np.arange(len(config.groups)), config.n_per_group)
    names = tuple(str(g + 1) for g in range(len(config.groups)))
    log(
        "SIMULATE",
        scenario=config.scenario,
        groups=len(config.groups),
        n_per_group=config.n_per_group,
        n_points=config.n_points,
        seed=config.seed,
    )
    return CurveSet(values=values, domain=grid, labels=labels, class_names=names)


def generate_split(config: ScenarioConfig, n_jobs: int = 1) -> tuple[CurveSet, CurveSet]:
    """Generate and halve every group: first half train, second half test."""
    require(config.n_per_group >= 2, "splitting needs at least 2 curves per group")
    curves = generate(config, n_jobs=n_jobs)
    half = config.n_per_group // 2
    starts = np.arange(len(config.groups)) * config.n_per_group
    train_rows = np.concatenate([s + np.arange(half) for s in starts])
    test_rows = np.concatenate([s + np.arange(half, config.n_per_group) for s in starts])
    return curves.subset(train_rows), curves.subset(test_rows)

