"""Test statistics for one-sided sparse mixture detection.

Sign-based statistics take a :class:`~sparsefree.signs.SignSequence`; the
t-statistic, higher criticism and likelihood ratio take the raw sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Protocol

import numpy as np

from .distributions import MixtureModel
from .signs import SignSequence, build_sign_sequence


class Kind(str, Enum):
    SIGN = "sign"
    SIGNED_RANK = "signed_rank"
    SMIRNOV = "smirnov"
    CUSUM = "cusum"
    TAIL_RUN = "tail_run"
    LONGEST_RUN = "longest_run"
    NUM_RUNS = "num_runs"
    T = "t"
    HC = "hc"
    LRT = "lrt"

    @classmethod
    def parse(cls, name: str | Kind) -> Kind:
        if isinstance(name, Kind):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"wilcoxon": "signed_rank", "runs": "num_runs", "longest": "longest_run",
                   "tail": "tail_run", "ttest": "t", "t_test": "t"}
        return cls(aliases.get(key, key))

    @property
    def uses_signs(self) -> bool:
        return self not in (Kind.T, Kind.HC, Kind.LRT)

    @property
    def integer_valued(self) -> bool:
        return self.uses_signs and self is not Kind.CUSUM


class Direction(str, Enum):
    REJECT_LARGE = "reject_large"
    REJECT_SMALL = "reject_small"


SIGN_KINDS = tuple(k for k in Kind if k.uses_signs)


def direction(kind: Kind) -> Direction:
    return Direction.REJECT_SMALL if Kind.parse(kind) is Kind.NUM_RUNS else Direction.REJECT_LARGE


@dataclass(frozen=True)
class StatValue:
    kind: Kind
    value: float

    @property
    def direction(self) -> Direction:
        return direction(self.kind)


class DegenerateSampleError(ValueError):
    """Raised when a statistic is undefined for the sample (zero spread)."""


class HCVariant(str, Enum):
    PLUS = "plus"
    FULL = "full"


class SurvivalFunction(Protocol):
    def sf(self, x): ...


def _signs(seq: SignSequence | Iterable[int]) -> np.ndarray:
    if isinstance(seq, SignSequence):
        return seq.signs
    if isinstance(seq, np.ndarray) and seq.dtype == np.int8:
        return seq
    return SignSequence.from_list(list(seq)).signs


def sign_statistic(seq) -> int:
    return int(_signs(seq).sum(dtype=np.int64))


def signed_rank_statistic(seq) -> int:
    s = _signs(seq)
    ranks = np.arange(s.size, 0, -1, dtype=np.int64)
    return int(np.dot(ranks, s.astype(np.int64)))


def smirnov_statistic(seq) -> int:
    return int(np.cumsum(_signs(seq), dtype=np.int64).max())


def cusum_statistic(seq) -> float:
    s = _signs(seq)
    partial = np.cumsum(s, dtype=np.int64)
    return float((partial / np.sqrt(np.arange(1, s.size + 1))).max())


def tail_run_statistic(seq) -> int:
    s = _signs(seq)
    neg = np.flatnonzero(s < 0)
    return int(neg[0]) if neg.size else int(s.size)


def longest_run_statistic(seq) -> int:
    s = _signs(seq)
    plus = np.concatenate(([0], (s > 0).astype(np.int8), [0]))
    edges = np.diff(plus)
    starts = np.flatnonzero(edges == 1)
    if starts.size == 0:
        return 0
    ends = np.flatnonzero(edges == -1)
    return int((ends - starts).max())


def num_runs_statistic(seq) -> int:
    """Number of sign changes ``R``; the sequence has ``1 + R`` runs."""
    s = _signs(seq)
    return int(np.count_nonzero(s[1:] != s[:-1]))


def t_statistic(x) -> float:
    """``sum(x) / sqrt(sum((x - mean)^2))``, as a plain ratio (no sqrt(n) factor)."""
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        raise DegenerateSampleError("t-statistic needs at least two observations")
    ss = float(np.sum((x - x.mean()) ** 2))
    if ss <= 0:
        raise DegenerateSampleError("t-statistic undefined for a constant sample")
    return float(x.sum() / math.sqrt(ss))


def hc_statistic(x, null: SurvivalFunction, variant: HCVariant | str = HCVariant.PLUS) -> float:
    """Higher criticism against a known null with survival function ``null.sf``.

    With one-sided p-values ``p_i = 1 - F(x_i)`` sorted ascending, returns
    ``max_i sqrt(n) (i/n - p_(i)) / sqrt(p_(i) (1 - p_(i)))``. ``full`` clamps
    p-values into ``[1/(10n), 1 - 1/(10n)]`` and admits every index; ``plus``
    admits only ``1/n <= p_(i) < 1``. Returns ``-inf`` when nothing is admissible.
    """
    variant = HCVariant(variant)
    x = np.asarray(x, dtype=float)
    n = x.size
    if n == 0:
        raise ValueError("higher criticism needs a non-empty sample")
    p = np.sort(np.asarray(null.sf(x), dtype=float))
    frac = np.arange(1, n + 1) / n
    if variant is HCVariant.FULL:
        p = np.clip(p, 1.0 / (10 * n), 1.0 - 1.0 / (10 * n))
        keep = np.ones(n, dtype=bool)
    else:
        keep = (p >= 1.0 / n) & (p < 1.0)
    if not keep.any():
        return -math.inf
    p, frac = p[keep], frac[keep]
    return float((math.sqrt(n) * (frac - p) / np.sqrt(p * (1.0 - p))).max())


def lrt_statistic(x, m: MixtureModel) -> float:
    """Log likelihood ratio ``sum log(1 - eps + eps g(x - mu) / f(x))``."""
    x = np.asarray(x, dtype=float)
    eps = m.epsilon
    if eps == 0:
        return 0.0
    log_ratio = m.effect_dist.logpdf(x - m.mu) - m.null_dist.logpdf(x)
    if eps == 1:
        return float(np.sum(log_ratio))
    terms = np.logaddexp(math.log1p(-eps), math.log(eps) + log_ratio)
    return float(np.sum(terms))


def sign_statistics(signs: np.ndarray, kinds: Iterable[Kind]) -> dict[Kind, float]:
    """All requested sign statistics from a raw int8 sign array in one pass.

    Skips :class:`SignSequence` validation; used in the simulation hot loops.
    """
    kinds = [Kind.parse(k) for k in kinds]
    out: dict[Kind, float] = {}
    n = signs.size
    partial = None
    if Kind.SMIRNOV in kinds or Kind.CUSUM in kinds or Kind.SIGN in kinds:
        partial = np.cumsum(signs, dtype=np.int64)
    for kind in kinds:
        if kind is Kind.SIGN:
            out[kind] = int(partial[-1])
        elif kind is Kind.SMIRNOV:
            out[kind] = int(partial.max())
        elif kind is Kind.CUSUM:
            out[kind] = float((partial / np.sqrt(np.arange(1, n + 1))).max())
        elif kind is Kind.SIGNED_RANK:
            out[kind] = int(np.dot(np.arange(n, 0, -1, dtype=np.int64), signs.astype(np.int64)))
        elif kind is Kind.TAIL_RUN:
            neg = np.flatnonzero(signs < 0)
            out[kind] = int(neg[0]) if neg.size else n
        elif kind is Kind.LONGEST_RUN:
            out[kind] = longest_run_statistic(signs)
        elif kind is Kind.NUM_RUNS:
            out[kind] = int(np.count_nonzero(signs[1:] != signs[:-1]))
    return out


def compute_statistics(
    x,
    kinds: Iterable[Kind | str],
    *,
    seq: SignSequence | None = None,
    null: SurvivalFunction | None = None,
    model: MixtureModel | None = None,
    hc_variant: HCVariant | str = HCVariant.PLUS,
    rng: np.random.Generator | None = None,
) -> dict[Kind, float]:
    """Evaluate several statistics on one sample, building the sign sequence once.

    ``t`` raises :class:`DegenerateSampleError` on constant samples; callers
    decide how to record that.
    """
    kinds = [Kind.parse(k) for k in kinds]
    out: dict[Kind, float] = {}
    sign_kinds = [k for k in kinds if k.uses_signs]
    if sign_kinds:
        if seq is None:
            seq = build_sign_sequence(x, rng)
        out.update(sign_statistics(seq.signs, sign_kinds))
    for kind in kinds:
        if kind is Kind.T:
            out[kind] = t_statistic(x)
        elif kind is Kind.HC:
            if null is None:
                raise ValueError("higher criticism needs the null distribution")
            out[kind] = hc_statistic(x, null, hc_variant)
        elif kind is Kind.LRT:
            if model is None:
                raise ValueError("likelihood ratio needs the full mixture model")
            out[kind] = lrt_statistic(x, model)
    return {k: out[k] for k in kinds}
