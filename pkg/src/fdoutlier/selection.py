"""Level-wise two-sample testing and Benjamini-Hochberg selection."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .basis import PCA, FeatureMatrix, HaarIndex, pca_fit_indices
from .curves import SplitLabels
from .errors import ContaminationError, DataError, DomainError
from .twosample import W2, BridgeTables, check_kind, two_sample_test

P_FLOOR = 1e-16
BH = "bh"
UNCORRECTED = "none"


@dataclass(frozen=True)
class LevelSamples:
    level: object
    nominal_sample: np.ndarray
    test_sample: np.ndarray


def nominal_rows_for(features: FeatureMatrix, split: SplitLabels) -> list[int]:
    """Nominal rows usable for testing: the non-fit half for PCA, all of them otherwise."""
    if features.basis_kind != PCA:
        return list(split.nominal_indices)
    fit = set(pca_fit_indices(split))
    return [i for i in split.nominal_indices if i not in fit]


def split_features(features: FeatureMatrix, split: SplitLabels) -> list[LevelSamples]:
    if features.basis_kind == PCA:
        leaked = set(features.source_rows) & set(pca_fit_indices(split))
        if leaked:
            raise ContaminationError(
                f"PCA features include {len(leaked)} rows used to fit the basis, "
                f"e.g. row {min(leaked)}"
            )
    nominal = features.take(rows=nominal_rows_for(features, split)).coeffs
    test = features.take(rows=list(split.test_indices)).coeffs
    return [
        LevelSamples(lam, nominal[:, j], test[:, j])
        for j, lam in enumerate(features.level_index)
    ]


def test_all_levels(
    levels: Sequence[LevelSamples], test_kind: str = W2, tables: BridgeTables = None
) -> np.ndarray:
    kind = check_kind(test_kind)
    out = np.empty(len(levels))
    for j, lev in enumerate(levels):
        try:
            res = two_sample_test(lev.nominal_sample, lev.test_sample, kind, tables)
        except DataError as exc:
            raise DataError(f"level {_level_id(lev.level)}: {exc}") from exc
        out[j] = max(res.p_value, P_FLOOR)
    return out


@dataclass(frozen=True)
class SelectionResult:
    levels: tuple
    p_values: np.ndarray
    rejected: np.ndarray  # boolean mask aligned with ``levels``
    alpha: float
    k_star: int
    test_kind: str
    method: str = BH

    @property
    def rejected_levels(self) -> tuple:
        return tuple(lam for lam, r in zip(self.levels, self.rejected) if r)

    def to_records(self) -> list[dict]:
        return [
            {"level_id": _level_id(lam), "p_value": float(p), "rejected": bool(r)}
            for lam, p, r in zip(self.levels, self.p_values, self.rejected)
        ]

    def to_json(self) -> str:
        return json.dumps(
            {
                "test_kind": self.test_kind,
                "method": self.method,
                "alpha": self.alpha,
                "k_star": self.k_star,
                "levels": self.to_records(),
            },
            indent=2,
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["level_id", "p_value", "rejected"])
        for rec in self.to_records():
            writer.writerow([rec["level_id"], format(rec["p_value"], ".17g"), int(rec["rejected"])])
        return buf.getvalue()


def _level_id(level) -> str:
    return level.label if isinstance(level, HaarIndex) else str(level)


def _check_inputs(p_values, alpha):
    p = np.asarray(p_values, dtype=float).ravel()
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise DomainError("p-values must lie in [0, 1]")
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha={alpha} outside [0, 1]")
    return p


def benjamini_hochberg(
    p_values, alpha: float = 0.05, levels: Sequence = None, test_kind: str = W2
) -> SelectionResult:
    """Step-up rule: reject the k* smallest p-values, k* = max{k : p_(k) <= k alpha / m}."""
    p = _check_inputs(p_values, alpha)
    m = p.size
    levels = tuple(range(m)) if levels is None else tuple(levels)
    order = np.argsort(p, kind="stable")
    below = np.flatnonzero(p[order] <= np.arange(1, m + 1) * alpha / m)
    k_star = int(below[-1] + 1) if below.size else 0
    rejected = np.zeros(m, dtype=bool)
    rejected[order[:k_star]] = True
    return SelectionResult(levels, p, rejected, alpha, k_star, test_kind, BH)


def uncorrected_selection(
    p_values, alpha: float = 0.05, levels: Sequence = None, test_kind: str = W2
) -> SelectionResult:
    """Reject every level with p < alpha, ignoring multiplicity."""
    p = _check_inputs(p_values, alpha)
    levels = tuple(range(p.size)) if levels is None else tuple(levels)
    rejected = p < alpha
    return SelectionResult(levels, p, rejected, alpha, int(rejected.sum()), test_kind, UNCORRECTED)


def select_levels(
    features: FeatureMatrix,
    split: SplitLabels,
    test_kind: str = W2,
    alpha: float = 0.05,
    correction: bool = True,
    tables: BridgeTables = None,
) -> SelectionResult:
    kind = check_kind(test_kind)
    samples = split_features(features, split)
    p = test_all_levels(samples, kind, tables)
    rule = benjamini_hochberg if correction else uncorrected_selection
    return rule(p, alpha, [s.level for s in samples], kind)
