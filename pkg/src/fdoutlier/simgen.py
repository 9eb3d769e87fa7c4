"""Seeded simulators: synthetic telemetry and the Monte Carlo test studies.

Every generator is a pure function of its config; replication r of a study
draws from ``SeedSequence(seed).spawn(m)[r]`` so the output does not depend
on evaluation order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .curves import CurveSet
from .errors import DataError, DomainError, InsufficientDataError
from .selection import benjamini_hochberg
from .twosample import BridgeTables, check_kind, default_tables, two_sample_test

PATTERN_CHANGE = "PatternChange"
AMPLITUDE_CHANGE = "AmplitudeChange"
LOCAL_NOISE = "LocalNoise"
LOCAL_SPIKE = "LocalSpike"
DEFAULT_VALUE = "DefaultValue"
DOUBLE_PERIOD = "DoublePeriod"
ANOMALY_KINDS = (
    PATTERN_CHANGE,
    AMPLITUDE_CHANGE,
    LOCAL_NOISE,
    LOCAL_SPIKE,
    DEFAULT_VALUE,
    DOUBLE_PERIOD,
)
PATTERN_KINDS = (PATTERN_CHANGE, AMPLITUDE_CHANGE)
LOCAL_KINDS = (LOCAL_NOISE, LOCAL_SPIKE, DEFAULT_VALUE)


@dataclass(frozen=True)
class AnomalySpec:
    """One anomalous day.  ``start`` is the onset of local anomalies as a
    fraction of the day; local anomalies last ``1/16`` of the day."""

    day: int
    kind: str
    magnitude: float
    start: float = 0.5

    def __post_init__(self):
        if self.kind not in ANOMALY_KINDS:
            raise DataError(f"unknown anomaly kind {self.kind!r}")


# 1-based day numbers d are stored at 0-based index d - 1.
DEFAULT_ANOMALIES = (
    AnomalySpec(5, AMPLITUDE_CHANGE, 1.25),
    AnomalySpec(25, PATTERN_CHANGE, 0.4),
    AnomalySpec(69, PATTERN_CHANGE, 1.0),
    AnomalySpec(219, AMPLITUDE_CHANGE, 1.6),
    AnomalySpec(133, LOCAL_NOISE, 6.0, start=0.30),
    AnomalySpec(155, LOCAL_SPIKE, 0.8, start=0.75),
    AnomalySpec(200, DEFAULT_VALUE, -0.2, start=0.80),
    AnomalySpec(97, DOUBLE_PERIOD, 1.0),
)


@dataclass(frozen=True)
class TelemetryConfig:
    n_days: int = 480
    samples_per_day: int = 256
    noise_sd: float = 0.05
    year_length: int = 240
    anomaly_specs: tuple = DEFAULT_ANOMALIES
    seed: int = 0
    bump_amplitude: float = 1.0
    seasonal_modulation: float = 0.2
    baseline_drift: float = 0.2
    local_fraction: float = 1.0 / 16

    def __post_init__(self):
        if self.n_days < 2 or self.samples_per_day < 2:
            raise DataError("n_days and samples_per_day must be at least 2")
        p = self.samples_per_day
        if p & (p - 1):
            raise DataError(f"samples_per_day must be a power of two, got {p}")
        if self.year_length < 1:
            raise DataError("year_length must be positive")
        for spec in self.anomaly_specs:
            if not 0 <= spec.day < self.n_days:
                raise DomainError(f"anomaly day {spec.day} outside [0, {self.n_days})")


def _raised_cosine(t, center, rise, fall):
    """Smooth bump: raised-cosine rise of width ``rise`` then fall of width ``fall``."""
    out = np.zeros_like(t)
    up = (t > center - rise) & (t <= center)
    down = (t > center) & (t < center + fall)
    out[up] = 0.5 * (1 + np.cos(math.pi * (center - t[up]) / rise))
    out[down] = 0.5 * (1 + np.cos(math.pi * (t[down] - center) / fall))
    return out


def nominal_pattern(t):
    return _raised_cosine(t, 0.45, 0.18, 0.27)


def alternate_pattern(t):
    return _raised_cosine(t, 0.52, 0.10, 0.14) * 1.1 + 0.15 * _raised_cosine(t, 0.25, 0.08, 0.08)


def double_pattern(t):
    """Two half-length copies of the nominal bump."""
    return np.concatenate([nominal_pattern(2 * t[: t.size // 2]), nominal_pattern(2 * t[t.size // 2 :] - 1)])


def seasonal_terms(config: TelemetryConfig, day: int):
    phase = 2 * math.pi * (day % config.year_length) / config.year_length
    amplitude = config.bump_amplitude * (1 + config.seasonal_modulation * math.sin(phase))
    baseline = config.baseline_drift * config.bump_amplitude * math.cos(phase)
    return amplitude, baseline


def generate_telemetry(config: TelemetryConfig = TelemetryConfig()):
    """Return ``(CurveSet, sorted list of anomalous day indices)``."""
    n, p = config.n_days, config.samples_per_day
    t = np.arange(p) / p
    base = nominal_pattern(t)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed))
    noise = rng.standard_normal((n, p))
    values = np.empty((n, p))
    for i in range(n):
        amp, level = seasonal_terms(config, i)
        values[i] = level + amp * base
    sd = np.full((n, p), config.noise_sd)
    width = max(1, int(round(config.local_fraction * p)))
    for spec in config.anomaly_specs:
        i = spec.day
        amp, level = seasonal_terms(config, i)
        lo = min(int(spec.start * p), p - width)
        window = slice(lo, lo + width)
        if spec.kind == PATTERN_CHANGE:
            w = spec.magnitude
            values[i] = level + amp * ((1 - w) * base + w * alternate_pattern(t))
        elif spec.kind == AMPLITUDE_CHANGE:
            values[i] = level + amp * spec.magnitude * base
        elif spec.kind == DOUBLE_PERIOD:
            values[i] = level + amp * spec.magnitude * double_pattern(t)
        elif spec.kind == LOCAL_NOISE:
            sd[i, window] *= spec.magnitude
        elif spec.kind == LOCAL_SPIKE:
            values[i, window] += spec.magnitude * amp * np.hanning(width + 2)[1:-1]
        elif spec.kind == DEFAULT_VALUE:
            values[i, window] = spec.magnitude
            sd[i, window] = 0.0
    values = values + sd * noise
    truth = sorted({spec.day for spec in config.anomaly_specs})
    return CurveSet(values), truth


# -- test calibration and power ------------------------------------------------

GAUSSIAN = "gaussian"
EXPONENTIAL = "exponential"


@dataclass(frozen=True)
class StudyConfig:
    group_size: int = 1000
    replications: int = 5000
    alpha: float = 0.05
    distribution: str = GAUSSIAN
    mu: float = 0.1
    sigma2: float = 1.15
    rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.replications < 100:
            raise DataError(f"need at least 100 replications, got {self.replications}")
        if self.group_size < 2:
            raise DataError(f"group size must be at least 2, got {self.group_size}")
        if self.distribution not in (GAUSSIAN, EXPONENTIAL):
            raise DataError(f"unknown distribution {self.distribution!r}")


def _draw_null(rng, config: StudyConfig):
    if config.distribution == EXPONENTIAL:
        return rng.exponential(1.0 / config.rate, config.group_size)
    return rng.standard_normal(config.group_size)


def _draw_alternative(rng, config: StudyConfig):
    if config.distribution == EXPONENTIAL:
        return rng.exponential(1.0 / (config.rate * (1 + config.mu)), config.group_size)
    return config.mu + math.sqrt(config.sigma2) * rng.standard_normal(config.group_size)


def _replication_rngs(seed: int, m: int, groups: int):
    for child in np.random.SeedSequence(seed).spawn(m):
        yield [np.random.default_rng(g) for g in child.spawn(groups)]


@dataclass(frozen=True)
class LevelStudyResult:
    test_kind: str
    group_size: int
    replications: int
    alpha: float
    alpha_hat: float
    std_error: float
    distribution: str

    def row(self) -> dict:
        return {
            "n": self.group_size,
            "test": self.test_kind,
            "distribution": self.distribution,
            "replications": self.replications,
            "alpha": self.alpha,
            "alpha_hat": self.alpha_hat,
            "std_error": self.std_error,
        }


def null_pvalues(config: StudyConfig, test_kind: str, tables: BridgeTables = None) -> np.ndarray:
    kind = check_kind(test_kind)
    tables = tables or default_tables()
    out = np.empty(config.replications)
    for r, (gx, gy) in enumerate(_replication_rngs(config.seed, config.replications, 2)):
        x, y = _draw_null(gx, config), _draw_null(gy, config)
        out[r] = two_sample_test(x, y, kind, tables).p_value
    return out


def level_study(config: StudyConfig, test_kind: str, tables: BridgeTables = None) -> LevelStudyResult:
    """Fraction of same-distribution replications rejected at ``alpha``."""
    p = null_pvalues(config, test_kind, tables)
    a = float(np.mean(p < config.alpha))
    se = math.sqrt(a * (1 - a) / config.replications)
    return LevelStudyResult(
        check_kind(test_kind), config.group_size, config.replications, config.alpha, a, se,
        config.distribution,
    )


@dataclass(frozen=True)
class PowerStudyResult:
    alpha_grid: np.ndarray
    null_pvalues: dict  # kind -> (m,) p-values of F_X = F_Y
    alt_pvalues: dict  # kind -> (m,) p-values of F_X = F_Z

    def roc(self, kind: str):
        """(rejection rate under the null, rejection rate under the alternative) on the grid."""
        p0, p1 = self.null_pvalues[kind], self.alt_pvalues[kind]
        grid = self.alpha_grid[:, None]
        return (p0[None, :] < grid).mean(axis=1), (p1[None, :] < grid).mean(axis=1)

    def auc(self, kind: str) -> float:
        """P(p_alt < p_null) + P(tie)/2: the area under the full empirical ROC."""
        p0 = np.sort(self.null_pvalues[kind])
        p1 = self.alt_pvalues[kind]
        below = np.searchsorted(p0, p1, side="left")
        ties = np.searchsorted(p0, p1, side="right") - below
        greater = p0.size - below - ties
        return float((greater + 0.5 * ties).sum() / (p0.size * p1.size))

    def rows(self) -> list[dict]:
        out = []
        for kind in self.null_pvalues:
            fpr, tpr = self.roc(kind)
            for a, f, t in zip(self.alpha_grid, fpr, tpr):
                out.append({"test": kind, "alpha": float(a), "fpr": float(f), "tpr": float(t)})
        return out


def power_study(
    config: StudyConfig,
    test_kinds: Sequence[str] = ("ks", "w2", "winf"),
    tables: BridgeTables = None,
    grid_points: int = 200,
) -> PowerStudyResult:
    kinds = [check_kind(k) for k in test_kinds]
    tables = tables or default_tables()
    m = config.replications
    p0 = {k: np.empty(m) for k in kinds}
    p1 = {k: np.empty(m) for k in kinds}
    for r, (gx, gy, gz) in enumerate(_replication_rngs(config.seed, m, 3)):
        x, y, z = _draw_null(gx, config), _draw_null(gy, config), _draw_alternative(gz, config)
        for k in kinds:
            p0[k][r] = two_sample_test(x, y, k, tables).p_value
            p1[k][r] = two_sample_test(x, z, k, tables).p_value
    return PowerStudyResult(np.linspace(0.0, 1.0, grid_points), p0, p1)


# -- multiple testing under the full null ---------------------------------------

@dataclass(frozen=True)
class FDRStudyResult:
    m_hypotheses: int
    replications: int
    alpha: float
    fdr: float
    std_error: float
    U: np.ndarray
    V: np.ndarray
    R: np.ndarray

    def rows(self) -> list[dict]:
        return [
            {"replication": r, "U": int(u), "V": int(v), "R": int(rr),
             "fdp": float(v / max(rr, 1))}
            for r, (u, v, rr) in enumerate(zip(self.U, self.V, self.R))
        ]


def fdr_null_study(m_hypotheses: int = 256, replications: int = 2000, alpha: float = 0.05,
                   seed: int = 0) -> FDRStudyResult:
    """BH on independent uniform p-values with every hypothesis true (m0 = m)."""
    if replications < 100:
        raise InsufficientDataError("need at least 100 replications")
    if m_hypotheses < 1:
        raise InsufficientDataError("need at least one hypothesis")
    V = np.empty(replications, dtype=int)
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(replications)):
        p = np.random.default_rng(child).uniform(size=m_hypotheses)
        V[r] = benjamini_hochberg(p, alpha).k_star
    R = V.copy()  # every rejection is false under the full null
    U = m_hypotheses - R
    fdp = V / np.maximum(R, 1)
    return FDRStudyResult(
        m_hypotheses, replications, alpha, float(fdp.mean()),
        float(fdp.std(ddof=1) / math.sqrt(replications)), U, V, R,
    )


def union_bound_study(n_tests: int = 50, replications: int = 2000, alpha: float = 0.05,
                      seed: int = 0) -> tuple[float, float]:
    """Estimated P(at least one of ``n_tests`` independent null tests has p < alpha)."""
    hits = 0
    for child in np.random.SeedSequence(seed).spawn(replications):
        p = np.random.default_rng(child).uniform(size=n_tests)
        hits += bool(np.any(p < alpha))
    est = hits / replications
    return est, math.sqrt(est * (1 - est) / replications)


def with_overrides(config, **kwargs):
    """``dataclasses.replace`` ignoring keys whose value is None."""
    return replace(config, **{k: v for k, v in kwargs.items() if v is not None})
