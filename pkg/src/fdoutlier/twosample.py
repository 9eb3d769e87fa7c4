"""One-dimensional two-sample tests with Brownian-bridge calibration.

Three statistics are available:

* ``ks``   -- sqrt(gamma) * sup_x |F(x) - G(x)|
* ``w2``   -- gamma * int_0^1 (G(F^{-1}(t)) - t)^2 dt
* ``winf`` -- sqrt(gamma) * sup_t |G(F^{-1}(t)) - t|

where F is the ECDF of the first (reference) sample, G the ECDF of the second
and gamma = n0 n1 / (n0 + n1).  ``F^{-1}`` is a step function, so the
composed process ``G(F^{-1}(t))`` is constant on each cell
``[(i-1)/n0, i/n0)`` and every statistic is evaluated exactly.

Null laws: ``ks`` and ``winf`` use the Kolmogorov distribution of
sup|B|; ``w2`` uses a seeded Monte Carlo table of int B^2 built from the
Karhunen-Loeve expansion of the bridge.
"""
from __future__ import annotations

import functools
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DomainError, EmptyInputError, InsufficientDataError

KS = "ks"
W2 = "w2"
WINF = "winf"
TEST_KINDS = (KS, W2, WINF)

DEFAULT_NUM_DRAWS = 1_000_000
DEFAULT_TRUNCATION = 10_000
DEFAULT_SEED = 20190417
PROB_STEP = 1e-4

_DATA_DIR = Path(__file__).parent / "data"


def check_kind(kind: str) -> str:
    kind = kind.lower().replace("-", "").replace("_", "")
    aliases = {"ks": KS, "w2": W2, "winf": WINF, "winfinity": WINF, "wi": WINF}
    if kind not in aliases:
        raise DataError(f"unknown test kind {kind!r}; choose from {', '.join(TEST_KINDS)}")
    return aliases[kind]


@dataclass(frozen=True)
class Sample:
    values: np.ndarray
    sorted_view: np.ndarray

    @property
    def n(self) -> int:
        return self.values.size


def as_sample(data) -> Sample:
    if isinstance(data, Sample):
        return data
    values = np.asarray(data, dtype=float).ravel()
    if values.size == 0:
        raise EmptyInputError("empty sample")
    if not np.all(np.isfinite(values)):
        raise DataError("sample contains non-finite values")
    return Sample(values, np.sort(values, kind="stable"))


@dataclass(frozen=True)
class TwoSampleResult:
    statistic_kind: str
    statistic: float
    p_value: float
    gamma: float


def ecdf(sample, t):
    """Right-continuous empirical CDF; ``t`` may be a scalar or an array."""
    s = as_sample(sample)
    counts = np.searchsorted(s.sorted_view, t, side="right")
    return counts / s.n


def empirical_quantile(sample, prob: float) -> float:
    if not 0.0 <= prob <= 1.0:
        raise DomainError(f"probability {prob} outside [0, 1]")
    s = as_sample(sample)
    i = min(int(math.floor(prob * s.n)), s.n - 1)
    return float(s.sorted_view[i])


def gamma_factor(n0: int, n1: int) -> float:
    return n0 * n1 / (n0 + n1)


def composed_steps(x, y) -> np.ndarray:
    """Values c_i = G(X_(i)) of G o F^{-1} on the cells [(i-1)/n0, i/n0)."""
    xs, ys = as_sample(x), as_sample(y)
    return np.searchsorted(ys.sorted_view, xs.sorted_view, side="right") / ys.n


def ks_statistic(x, y) -> TwoSampleResult:
    xs, ys = as_sample(x), as_sample(y)
    merged = np.concatenate([xs.sorted_view, ys.sorted_view])
    gap = np.abs(
        np.searchsorted(xs.sorted_view, merged, side="right") / xs.n
        - np.searchsorted(ys.sorted_view, merged, side="right") / ys.n
    ).max()
    g = gamma_factor(xs.n, ys.n)
    stat = math.sqrt(g) * float(gap)
    return TwoSampleResult(KS, stat, sup_bridge_pvalue(stat), g)


def w2_raw(x, y) -> float:
    """int_0^1 (G(F^{-1}(t)) - t)^2 dt without the gamma factor."""
    c = composed_steps(x, y)
    n0 = c.size
    a = np.arange(n0) / n0
    h = 1.0 / n0
    d = c - a
    # int_a^{a+h} (c - t)^2 dt = h (d^2 - d h + h^2 / 3), d = c - a
    return float(np.sum(h * (d * d - d * h + h * h / 3.0)))


def w2_statistic(x, y, tables: "BridgeTables" = None) -> TwoSampleResult:
    xs, ys = as_sample(x), as_sample(y)
    g = gamma_factor(xs.n, ys.n)
    stat = g * w2_raw(xs, ys)
    tables = tables or default_tables()
    return TwoSampleResult(W2, stat, tables.l2_pvalue(stat), g)


def winf_raw(x, y) -> float:
    c = composed_steps(x, y)
    n0 = c.size
    left = np.arange(n0) / n0
    right = np.arange(1, n0 + 1) / n0
    return float(max(np.abs(c - left).max(), np.abs(c - right).max()))


def winf_statistic(x, y) -> TwoSampleResult:
    xs, ys = as_sample(x), as_sample(y)
    g = gamma_factor(xs.n, ys.n)
    stat = math.sqrt(g) * winf_raw(xs, ys)
    return TwoSampleResult(WINF, stat, sup_bridge_pvalue(stat), g)


def two_sample_test(x, y, kind: str = W2, tables: "BridgeTables" = None) -> TwoSampleResult:
    kind = check_kind(kind)
    if kind == KS:
        return ks_statistic(x, y)
    if kind == WINF:
        return winf_statistic(x, y)
    return w2_statistic(x, y, tables)


def wq_equal_size_oracle(x, y, q: float) -> float:
    """W_q^q between two equal-size empirical measures via order statistics."""
    xs, ys = as_sample(x), as_sample(y)
    if xs.n != ys.n:
        raise DataError("order-statistic form needs equal sample sizes")
    return float(np.mean(np.abs(xs.sorted_view - ys.sorted_view) ** q))


# -- null distributions --------------------------------------------------------

def sup_bridge_cdf(x: float) -> float:
    """P(sup_t |B(t)| <= x) for a standard Brownian bridge (Kolmogorov law).

    Uses 1 - 2 sum (-1)^{k-1} exp(-2 k^2 x^2) for x >= 1.  Below 1 that series
    cancels badly, so the equivalent theta form
    sqrt(2 pi)/x sum exp(-(2k-1)^2 pi^2 / (8 x^2)) is summed instead.
    Both stop once a term drops below 1e-12.
    """
    if x <= 0.02:
        return 0.0
    total = 0.0
    k = 1
    if x < 1.0:
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8.0 * x * x))
            total += term
            if term < 1e-12:
                break
            k += 1
        return min(1.0, math.sqrt(2.0 * math.pi) / x * total)
    while True:
        term = math.exp(-2.0 * k * k * x * x)
        total += term if k % 2 else -term
        if term < 1e-12:
            break
        k += 1
    return min(1.0, max(0.0, 1.0 - 2.0 * total))


def sup_bridge_pvalue(stat: float) -> float:
    return 1.0 - sup_bridge_cdf(stat)


def sup_bridge_quantile(prob: float) -> float:
    from scipy.optimize import brentq

    if not 0.0 < prob < 1.0:
        raise DomainError(f"probability {prob} outside (0, 1)")
    return brentq(lambda c: sup_bridge_cdf(c) - prob, 0.02, 10.0, xtol=1e-14)


@dataclass(frozen=True)
class BridgeTables:
    """Quantile table of int_0^1 B(t)^2 dt plus the sup|B| series.

    ``draw_mean`` and ``draw_sd`` summarize the raw Monte Carlo draws so the
    table can be checked against E int B^2 = 1/6.
    """

    probs: np.ndarray
    l2_quantiles: np.ndarray
    num_draws: int
    truncation: int
    seed: int
    draw_mean: float
    draw_sd: float

    sup_cdf = staticmethod(sup_bridge_cdf)

    def l2_cdf(self, x):
        return np.interp(x, self.l2_quantiles, self.probs, left=0.0, right=1.0)

    def l2_pvalue(self, stat: float) -> float:
        return float(1.0 - self.l2_cdf(stat))

    def l2_quantile(self, prob: float) -> float:
        return float(np.interp(prob, self.probs, self.l2_quantiles))

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            probs=self.probs,
            l2_quantiles=self.l2_quantiles,
            meta=np.array(
                [self.num_draws, self.truncation, self.seed, self.draw_mean, self.draw_sd]
            ),
        )

    @classmethod
    def load(cls, path) -> "BridgeTables":
        with np.load(path) as f:
            meta = f["meta"]
            return cls(
                f["probs"],
                f["l2_quantiles"],
                int(meta[0]),
                int(meta[1]),
                int(meta[2]),
                float(meta[3]),
                float(meta[4]),
            )


def l2_bridge_draws(num_draws: int, truncation: int, seed: int, chunk: int = 500) -> np.ndarray:
    """Draws of sum_k Z_k^2 / (k pi)^2, k <= truncation; chunk c uses child seed c."""
    weights = 1.0 / (np.arange(1, truncation + 1) * math.pi) ** 2
    n_chunks = -(-num_draws // chunk)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    out = np.empty(num_draws)
    for c, child in enumerate(children):
        lo = c * chunk
        hi = min(lo + chunk, num_draws)
        z = np.random.default_rng(child).standard_normal((hi - lo, truncation))
        out[lo:hi] = (z * z) @ weights
    return out


def build_l2_bridge_table(
    num_draws: int = DEFAULT_NUM_DRAWS,
    truncation: int = DEFAULT_TRUNCATION,
    seed: int = DEFAULT_SEED,
) -> BridgeTables:
    if num_draws < 100_000:
        raise InsufficientDataError(f"need at least 1e5 draws, got {num_draws}")
    if truncation < 1000:
        raise InsufficientDataError(f"need a truncation of at least 1e3, got {truncation}")
    draws = l2_bridge_draws(num_draws, truncation, seed)
    probs = np.linspace(0.0, 1.0, int(round(1 / PROB_STEP)) + 1)
    quantiles = np.quantile(draws, probs)
    return BridgeTables(
        probs, quantiles, num_draws, truncation, seed, float(draws.mean()), float(draws.std(ddof=1))
    )


def cache_dir() -> Path:
    return Path(os.environ.get("FDOUTLIER_CACHE", Path.home() / ".cache" / "fdoutlier"))


def table_filename(num_draws: int, truncation: int, seed: int) -> str:
    return f"l2bridge_d{num_draws}_t{truncation}_s{seed}.npz"


def load_or_build_l2_table(
    num_draws: int = DEFAULT_NUM_DRAWS,
    truncation: int = DEFAULT_TRUNCATION,
    seed: int = DEFAULT_SEED,
) -> BridgeTables:
    """Return the table for these parameters, building and caching it if needed."""
    name = table_filename(num_draws, truncation, seed)
    for folder in (_DATA_DIR, cache_dir()):
        if (folder / name).exists():
            return BridgeTables.load(folder / name)
    tables = build_l2_bridge_table(num_draws, truncation, seed)
    try:
        cache_dir().mkdir(parents=True, exist_ok=True)
        tables.save(cache_dir() / name)
    except OSError:
        pass
    return tables


@functools.lru_cache(maxsize=1)
def default_tables() -> BridgeTables:
    return load_or_build_l2_table()
