"""End-to-end experiment: project, select, score with LOF, compare with ground truth."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import __version__
from .basis import RAW, FeatureMatrix, haar_project, pca_fit, pca_project
from .curves import CurveSet, SplitLabels
from .errors import DataError, StageError
from .lof import DEFAULT_K, lof_scores
from .selection import (
    benjamini_hochberg,
    nominal_rows_for,
    split_features,
    test_all_levels,
    uncorrected_selection,
)
from .twosample import W2, WINF, BridgeTables

DEFAULT_THRESHOLDS = (2.0, 4.0)


@dataclass(frozen=True)
class FeatureSetSpec:
    id: int
    name: str
    basis: str  # "raw", "haar" or "pca"
    description: str


FEATURE_SETS = {
    0: FeatureSetSpec(0, "raw", "raw", "raw samples"),
    1: FeatureSetSpec(1, "pca-full", "pca", "all principal components"),
    2: FeatureSetSpec(2, "pca-95", "pca", "leading components carrying 95% of the variance"),
    3: FeatureSetSpec(3, "haar-full", "haar", "all Haar coefficients"),
    4: FeatureSetSpec(4, "haar-012", "haar", "scaling plus Haar levels 0, 1, 2"),
    5: FeatureSetSpec(5, "haar-3", "haar", "Haar level 3"),
    6: FeatureSetSpec(6, "haar-4", "haar", "Haar level 4"),
    7: FeatureSetSpec(7, "pca-w2", "pca", "components selected by the W2 test under BH"),
    8: FeatureSetSpec(8, "pca-winf", "pca", "components selected by the Winf test under BH"),
    9: FeatureSetSpec(9, "haar-w2", "haar", "Haar coefficients selected by the W2 test under BH"),
    10: FeatureSetSpec(10, "haar-winf", "haar", "Haar coefficients selected by the Winf test under BH"),
}
SELECTION_KIND = {7: W2, 8: WINF, 9: W2, 10: WINF}
FIXED_HAAR_LEVELS = {4: (None, 0, 1, 2), 5: (3,), 6: (4,)}


@dataclass
class SetResult:
    set_id: int
    name: str
    n_features: int
    levels: list
    scores: np.ndarray = None  # LOF per test row, None when no features were available
    detected: dict = field(default_factory=dict)  # threshold -> list of row indices
    true_positives: dict = field(default_factory=dict)
    false_alarms: dict = field(default_factory=dict)
    margin: float = None
    selection: dict = None
    note: str = ""


@dataclass
class PipelineReport:
    sets: list
    test_rows: list
    curve_ids: list
    truth: list
    thresholds: tuple
    lof_k: int
    metadata: dict

    def by_id(self, set_id: int) -> SetResult:
        return next(s for s in self.sets if s.set_id == set_id)

    def to_dict(self) -> dict:
        truth = set(self.truth or [])
        out_sets = []
        for s in self.sets:
            entry = {
                "set_id": s.set_id,
                "name": s.name,
                "n_features": s.n_features,
                "levels": [str(l) for l in s.levels],
                "detected": {
                    _fmt(t): [
                        {"index": r, "day": r + 1, "id": self.curve_ids[r], "true_anomaly": r in truth}
                        for r in rows
                    ]
                    for t, rows in s.detected.items()
                },
                "margin": s.margin,
                "note": s.note,
            }
            if self.truth is not None:
                entry["true_positives"] = {_fmt(t): v for t, v in s.true_positives.items()}
                entry["false_alarms"] = {_fmt(t): v for t, v in s.false_alarms.items()}
                entry["n_anomalies"] = len(self.truth)
            if s.selection is not None:
                entry["selection"] = s.selection
            out_sets.append(entry)
        return {
            "metadata": self.metadata,
            "lof_k": self.lof_k,
            "thresholds": list(self.thresholds),
            "n_test_rows": len(self.test_rows),
            "truth": None if self.truth is None else [
                {"index": r, "day": r + 1, "id": self.curve_ids[r]} for r in self.truth
            ],
            "feature_sets": out_sets,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def scores_csv(self) -> str:
        """Tidy LOF table: one line per (feature set, test row)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["set_id", "index", "id", "lof", "true_anomaly"])
        truth = set(self.truth or [])
        for s in self.sets:
            for j, r in enumerate(self.test_rows):
                lof = "" if s.scores is None else format(s.scores[j], ".17g")
                w.writerow([s.set_id, r, self.curve_ids[r], lof, int(r in truth)])
        return buf.getvalue()

    def summary_csv(self) -> str:
        """One line per feature set, in the layout of the usual detection table."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["set_id", "name", "n_features"]
        for t in self.thresholds:
            head += [f"detected_gt_{_fmt(t)}", f"true_pos_gt_{_fmt(t)}", f"false_alarm_gt_{_fmt(t)}"]
        w.writerow(head + ["margin"])
        for s in self.sets:
            row = [s.set_id, s.name, s.n_features]
            for t in self.thresholds:
                row += [len(s.detected[t]), s.true_positives.get(t, ""), s.false_alarms.get(t, "")]
            w.writerow(row + ["" if s.margin is None else format(s.margin, ".6g")])
        return buf.getvalue()


def _fmt(t: float) -> str:
    return format(t, "g")


def parse_sets(text) -> list[int]:
    if isinstance(text, str):
        if text.strip().lower() == "all":
            return sorted(FEATURE_SETS)
        ids = [int(tok) for tok in text.split(",") if tok.strip()]
    else:
        ids = [int(i) for i in text]
    bad = [i for i in ids if i not in FEATURE_SETS]
    if bad:
        raise DataError(f"unknown feature set {bad[0]}; valid ids are 0-10")
    return ids


class _Context:
    """Lazily computed, shared projections for one pipeline run."""

    def __init__(self, curves, split, pca_center, tables, alpha, correction):
        self.curves = curves
        self.split = split
        self.pca_center = pca_center
        self.tables = tables
        self.alpha = alpha
        self.correction = correction
        self._haar = None
        self._pca = None

    @property
    def haar(self) -> FeatureMatrix:
        if self._haar is None:
            self._haar = haar_project(self.curves)
        return self._haar

    @property
    def pca(self):
        if self._pca is None:
            basis = pca_fit(self.curves, self.split)
            fit = set(basis.fit_indices)
            rows = [i for i in range(self.curves.n) if i not in fit]
            self._pca = basis, pca_project(self.curves, basis, rows, center=self.pca_center)
        return self._pca


def _build(set_id: int, ctx: _Context):
    """Return (FeatureMatrix-like coordinates, levels, selection record or None)."""
    spec = FEATURE_SETS[set_id]
    if spec.basis == "raw":
        fm = FeatureMatrix(ctx.curves.values, range(1, ctx.curves.p + 1), RAW, range(ctx.curves.n))
        return fm, list(range(1, ctx.curves.p + 1)), None
    if spec.basis == "haar":
        fm = ctx.haar
        if set_id == 3:
            return fm, list(fm.level_index), None
        if set_id in FIXED_HAAR_LEVELS:
            wanted = FIXED_HAAR_LEVELS[set_id]
            levels = [lam for lam in fm.level_index if lam.level in wanted]
            if not levels:
                raise DataError(f"curves with p={ctx.curves.p} have no Haar level {wanted}")
            return fm.take(levels=levels), levels, None
    else:
        basis, fm = ctx.pca
        if set_id == 1:
            return fm, list(fm.level_index), None
        if set_id == 2:
            d = basis.variance_prefix(0.95)
            levels = list(fm.level_index[:d])
            return fm.take(levels=levels), levels, None
    kind = SELECTION_KIND[set_id]
    p = test_all_levels(split_features(fm, ctx.split), kind, ctx.tables)
    unc = uncorrected_selection(p, ctx.alpha, fm.level_index, kind)
    sel = benjamini_hochberg(p, ctx.alpha, fm.level_index, kind) if ctx.correction else unc
    levels = list(sel.rejected_levels)
    record = {
        "test_kind": kind,
        "alpha": ctx.alpha,
        "method": sel.method,
        "k_star": sel.k_star,
        "n_uncorrected": int(unc.rejected.sum()),
        "min_p_value": float(sel.p_values.min()) if sel.p_values.size else None,
    }
    return fm.take(levels=levels), levels, record


def run_pipeline(
    curves: CurveSet,
    split: SplitLabels,
    feature_sets: Sequence[int] = tuple(FEATURE_SETS),
    lof_k: int = DEFAULT_K,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    alpha: float = 0.05,
    truth: Sequence[int] = None,
    correction: bool = True,
    include_nominal: bool = False,
    standardize: bool = False,
    pca_center: bool = False,
    tables: BridgeTables = None,
    metadata: dict = None,
) -> PipelineReport:
    """Score the test rows of ``curves`` with LOF on each requested feature set.

    With ``include_nominal`` the usable nominal rows join the LOF point set as
    potential neighbors; they are scored but not reported.
    """
    if split.n != curves.n:
        raise DataError(f"split covers {split.n} rows, curve set has {curves.n}")
    thresholds = tuple(sorted(float(t) for t in thresholds))
    ctx = _Context(curves, split, pca_center, tables, alpha, correction)
    test_rows = list(split.test_indices)
    truth_set = None if truth is None else set(int(t) for t in truth)
    results = []
    for set_id in parse_sets(feature_sets):
        spec = FEATURE_SETS[set_id]
        try:
            fm, levels, selection = _build(set_id, ctx)
        except DataError as exc:
            raise StageError("features", set_id, exc) from exc
        res = SetResult(set_id, spec.name, fm.width, [getattr(l, "label", l) for l in levels],
                        selection=selection)
        for t in thresholds:
            res.detected[t] = []
        if fm.width == 0:
            res.note = "no features available; LOF not computed"
        else:
            nominal = nominal_rows_for(fm, split)
            rows = test_rows + (nominal if include_nominal else [])
            coords = fm.take(rows=rows).coeffs
            if standardize:
                sd = fm.take(rows=nominal).coeffs.std(axis=0)
                coords = coords / np.where(sd > 0, sd, 1.0)
            try:
                scores = lof_scores(coords, lof_k).scores[: len(test_rows)]
            except DataError as exc:
                raise StageError("lof", set_id, exc) from exc
            res.scores = scores
            for t in thresholds:
                res.detected[t] = [r for r, s in zip(test_rows, scores) if s > t]
            if truth_set:
                is_anom = np.array([r in truth_set for r in test_rows])
                if is_anom.any() and (~is_anom).any():
                    res.margin = float(scores[is_anom].min() - scores[~is_anom].max())
        if truth_set is not None:
            for t in thresholds:
                hits = [r for r in res.detected[t] if r in truth_set]
                res.true_positives[t] = len(hits)
                res.false_alarms[t] = len(res.detected[t]) - len(hits)
        results.append(res)
    meta = {"version": __version__, "numpy": np.__version__}
    meta.update(metadata or {})
    return PipelineReport(
        results, test_rows, list(curves.curve_ids),
        None if truth is None else sorted(truth_set), thresholds, lof_k, meta,
    )
