"""Haar wavelet and principal-component coefficients of sampled curves.

Both bases are orthonormal for the discrete inner product
``<u, v>_p = (1/p) sum_j u_j v_j``, so a coefficient is always
``(1/p) * X_i . phi`` and the two kinds of feature matrix are interchangeable
downstream.
"""
from __future__ import annotations

import functools
import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .curves import CurveSet, SplitLabels, sample_grid
from .errors import (
    DomainError,
    FormatError,
    IncompleteBasisError,
    InsufficientDataError,
    UnsupportedShapeError,
)

HAAR = "haar"
PCA = "pca"
RAW = "raw"
DROP_RELATIVE = 1e-12


@functools.total_ordering
@dataclass(frozen=True)
class HaarIndex:
    """Scaling function (``level is None``) or wavelet ``(level, position)``."""

    level: Optional[int] = None
    position: int = 0

    def __post_init__(self):
        if self.level is None:
            if self.position != 0:
                raise DomainError("the scaling function has no position")
        elif self.level < 0 or not 0 <= self.position < 2 ** self.level:
            raise DomainError(f"invalid wavelet index ({self.level}, {self.position})")

    @property
    def is_scaling(self) -> bool:
        return self.level is None

    @property
    def label(self) -> str:
        return "scaling" if self.level is None else f"{self.level}:{self.position}"

    @classmethod
    def parse(cls, label: str) -> "HaarIndex":
        if label == "scaling":
            return SCALING
        level, position = label.split(":")
        return cls(int(level), int(position))

    def __lt__(self, other):
        return _sort_key(self) < _sort_key(other)


def _sort_key(index: HaarIndex):
    return (-1, 0) if index.level is None else (index.level, index.position)


SCALING = HaarIndex()


def Wavelet(level: int, position: int) -> HaarIndex:
    return HaarIndex(level, position)


def haar_levels(p: int) -> int:
    """Return J such that p = 2**(J + 1)."""
    if p < 2 or p & (p - 1):
        raise UnsupportedShapeError(f"Haar projection needs p a power of two >= 2, got {p}")
    return p.bit_length() - 2


def haar_index_set(p: int) -> list[HaarIndex]:
    """Scaling first, then wavelets by level then position."""
    J = haar_levels(p)
    return [SCALING] + [HaarIndex(l, k) for l in range(J + 1) for k in range(2 ** l)]


def haar_eval(index: HaarIndex, t: float) -> float:
    if not 0.0 <= t < 1.0:
        raise DomainError(f"t={t} outside [0, 1)")
    if index.is_scaling:
        return 1.0
    u = 2.0 ** index.level * t - index.position
    scale = 2.0 ** (index.level / 2)
    if 0.0 <= u < 0.5:
        return scale
    if 0.5 <= u < 1.0:
        return -scale
    return 0.0


def haar_matrix(p: int) -> np.ndarray:
    """Rows are the basis functions of :func:`haar_index_set` sampled on the grid."""
    J = haar_levels(p)
    t = sample_grid(p)
    rows = [np.ones(p)]
    for l in range(J + 1):
        u = 2.0 ** l * t  # exact: powers of two times j / p
        cell = np.floor(u)
        sign = np.where(u - cell < 0.5, 1.0, -1.0)
        scale = 2.0 ** (l / 2)
        for k in range(2 ** l):
            rows.append(np.where(cell == k, scale * sign, 0.0))
    return np.vstack(rows)


@dataclass(frozen=True)
class FeatureMatrix:
    """Coefficients of a set of curves, one column per basis level.

    ``level_index`` holds a :class:`HaarIndex` per column for Haar features
    and the 1-based component rank for PCA features.
    """

    coeffs: np.ndarray
    level_index: tuple
    basis_kind: str
    source_rows: tuple

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.ndim != 2:
            raise FormatError("coefficient matrix must be 2-D")
        if coeffs.shape[1] != len(self.level_index):
            raise FormatError(
                f"{coeffs.shape[1]} columns but {len(self.level_index)} level descriptors"
            )
        if coeffs.shape[0] != len(self.source_rows):
            raise FormatError(f"{coeffs.shape[0]} rows but {len(self.source_rows)} source rows")
        if self.basis_kind not in (HAAR, PCA, RAW):
            raise FormatError(f"unknown basis kind {self.basis_kind!r}")
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "level_index", tuple(self.level_index))
        object.__setattr__(self, "source_rows", tuple(int(r) for r in self.source_rows))

    @property
    def width(self) -> int:
        return self.coeffs.shape[1]

    def level_labels(self) -> list[str]:
        if self.basis_kind == HAAR:
            return [lam.label for lam in self.level_index]
        return [str(lam) for lam in self.level_index]

    def row_positions(self, rows: Sequence[int]) -> list[int]:
        lookup = {r: i for i, r in enumerate(self.source_rows)}
        missing = [r for r in rows if r not in lookup]
        if missing:
            raise FormatError(f"row {missing[0]} not present in feature matrix")
        return [lookup[r] for r in rows]

    def take(self, rows: Sequence[int] = None, levels: Sequence = None) -> "FeatureMatrix":
        """Sub-matrix by original curve index and by level descriptor."""
        coeffs = self.coeffs
        source = self.source_rows
        index = self.level_index
        if rows is not None:
            pos = self.row_positions(rows)
            coeffs = coeffs[pos]
            source = tuple(rows)
        if levels is not None:
            lookup = {lam: j for j, lam in enumerate(index)}
            cols = [lookup[lam] for lam in levels]
            coeffs = coeffs[:, cols]
            index = tuple(levels)
        return FeatureMatrix(coeffs, index, self.basis_kind, source)


def haar_project(curves: CurveSet) -> FeatureMatrix:
    p = curves.p
    H = haar_matrix(p)
    coeffs = curves.values @ H.T / p
    return FeatureMatrix(coeffs, haar_index_set(p), HAAR, range(curves.n))


def haar_reconstruct(features: FeatureMatrix) -> CurveSet:
    if features.basis_kind != HAAR:
        raise IncompleteBasisError("haar_reconstruct needs Haar features")
    p = features.width
    try:
        full = haar_index_set(p)
    except UnsupportedShapeError:
        raise IncompleteBasisError(f"{p} Haar coefficients cannot form a complete basis") from None
    if list(features.level_index) != full:
        raise IncompleteBasisError("Haar feature matrix is truncated or reordered")
    return CurveSet(features.coeffs @ haar_matrix(p))


@dataclass(frozen=True)
class PCABasis:
    mean_curve: np.ndarray
    components: np.ndarray  # (n_components, p); unit norm under <.,.>_p
    eigenvalues: np.ndarray
    fit_indices: tuple

    @property
    def p(self) -> int:
        return self.mean_curve.shape[0]

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def variance_prefix(self, fraction: float = 0.95) -> int:
        """Smallest d whose leading eigenvalues carry ``fraction`` of the total."""
        total = self.eigenvalues.sum()
        if total <= 0:
            return 0
        cum = np.cumsum(self.eigenvalues) / total
        return int(np.searchsorted(cum, fraction - 1e-12) + 1)


def pca_fit_indices(split: SplitLabels) -> tuple:
    """Every second nominal index, starting from the second one."""
    return tuple(split.nominal_indices[1::2])


def pca_fit(curves: CurveSet, split: SplitLabels) -> PCABasis:
    fit = pca_fit_indices(split)
    if len(fit) < 2:
        raise InsufficientDataError(f"PCA fit set has {len(fit)} curves, need at least 2")
    X = curves.values[list(fit)]
    p = curves.p
    mean = X.mean(axis=0)
    centered = X - mean
    gamma = centered.T @ centered / len(fit)
    eigvals, eigvecs = np.linalg.eigh(gamma)
    order = np.argsort(eigvals, kind="stable")[::-1]
    eigvals = eigvals[order]
    eigvecs = eigvecs[:, order]
    lam_max = eigvals[0] if eigvals.size else 0.0
    if lam_max <= 0:
        keep = 0
    else:
        keep = int(np.sum(eigvals >= DROP_RELATIVE * lam_max))
    keep = min(keep, p, len(fit))
    eigvals = np.clip(eigvals[:keep], 0.0, None)
    vecs = eigvecs[:, :keep].T.copy()
    for row in vecs:
        nz = np.flatnonzero(np.abs(row) > 1e-12 * np.abs(row).max())
        if nz.size and row[nz[0]] < 0:
            row *= -1.0
    return PCABasis(mean, vecs * math.sqrt(p), eigvals, fit)


def pca_project(
    curves: CurveSet, basis: PCABasis, rows: Sequence[int] = None, center: bool = False
) -> FeatureMatrix:
    """Coefficients ``<X_i, Phi_lambda>_p`` for the requested rows.

    ``center=True`` subtracts the fitted mean curve first.
    """
    if rows is None:
        rows = range(curves.n)
    rows = [int(r) for r in rows]
    bad = [r for r in rows if not 0 <= r < curves.n]
    if bad:
        raise DomainError(f"row {bad[0]} out of range for {curves.n} curves")
    if curves.p != basis.p:
        raise FormatError(f"basis has width {basis.p}, curves have {curves.p} samples")
    overlap = set(rows) & set(basis.fit_indices)
    if overlap:
        warnings.warn(
            f"{len(overlap)} projected rows were used to fit the PCA basis", stacklevel=2
        )
    X = curves.values[rows]
    if center:
        X = X - basis.mean_curve
    coeffs = X @ basis.components.T / curves.p
    ranks = range(1, basis.n_components + 1)
    return FeatureMatrix(coeffs, ranks, PCA, rows)


# -- serialization -----------------------------------------------------------

def save_features(features: FeatureMatrix, path) -> Path:
    """Write coefficients to ``path`` (CSV) and metadata to ``path + '.json'``."""
    path = Path(path)
    np.savetxt(path, features.coeffs, delimiter=",", fmt="%.17g")
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(
        json.dumps(
            {
                "basis_kind": features.basis_kind,
                "level_index": features.level_labels(),
                "source_rows": list(features.source_rows),
            },
            indent=2,
        )
    )
    return sidecar


def load_features(path) -> FeatureMatrix:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    coeffs = np.loadtxt(path, delimiter=",", ndmin=2)
    if meta["basis_kind"] == HAAR:
        index = [HaarIndex.parse(s) for s in meta["level_index"]]
    else:
        index = [int(s) for s in meta["level_index"]]
    if not index:
        coeffs = coeffs.reshape(len(meta["source_rows"]), 0)
    return FeatureMatrix(coeffs, index, meta["basis_kind"], meta["source_rows"])


def save_pca_basis(basis: PCABasis, path) -> Path:
    """Components (one per row) to CSV, everything else to a JSON sidecar."""
    path = Path(path)
    np.savetxt(path, basis.components, delimiter=",", fmt="%.17g")
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(
        json.dumps(
            {
                "basis_kind": PCA,
                "level_index": list(range(1, basis.n_components + 1)),
                "eigenvalues": [float(v) for v in basis.eigenvalues],
                "fit_indices": list(basis.fit_indices),
                "mean_curve": [float(v) for v in basis.mean_curve],
            },
            indent=2,
        )
    )
    return sidecar


def load_pca_basis(path) -> PCABasis:
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    mean = np.array(meta["mean_curve"], dtype=float)
    comps = np.loadtxt(path, delimiter=",", ndmin=2).reshape(-1, mean.size)
    return PCABasis(mean, comps, np.array(meta["eigenvalues"]), tuple(meta["fit_indices"]))
