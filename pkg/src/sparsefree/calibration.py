"""Null distributions, p-values and critical values for every statistic.

Under the null the sign sequence is i.i.d. Rademacher, which gives exact
laws for the sign, number-of-runs, tail-run and Smirnov statistics. The
t and signed-rank statistics use their normal limits; CUSUM, longest run,
higher criticism and the likelihood ratio are calibrated by simulation.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from statistics import NormalDist
from typing import Iterable, Mapping

import numpy as np
from scipy import stats

from . import streams
from .distributions import GeneralizedGaussian, MixtureModel
from .statistics import (
    DegenerateSampleError,
    Direction,
    HCVariant,
    Kind,
    direction,
    hc_statistic,
    lrt_statistic,
    sign_statistics,
    t_statistic,
)

EXACT_MAX_N = 10_000
ASYMPTOTIC_CROSSOVER = 10_000
CACHE_FORMAT = "sparsefree-null-table v1"

_STD_NORMAL = NormalDist()


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


class LawKind(str, Enum):
    EXACT_BINOMIAL_SIGN = "exact_binomial_sign"
    EXACT_BINOMIAL_RUNS = "exact_binomial_runs"
    EXACT_GEOMETRIC_TAIL = "exact_geometric_tail"
    EXACT_REFLECTION_SMIRNOV = "exact_reflection_smirnov"
    ASYMPTOTIC_NORMAL_T = "asymptotic_normal_t"
    ASYMPTOTIC_NORMAL_SIGNED_RANK = "asymptotic_normal_signed_rank"
    ASYMPTOTIC_HALFNORMAL_SMIRNOV = "asymptotic_halfnormal_smirnov"
    MONTE_CARLO = "monte_carlo"


class Calibration(str, Enum):
    EXACT_OR_ASYMPTOTIC = "exact_or_asymptotic"
    MONTE_CARLO = "monte_carlo"


# ---------------------------------------------------------------------------
# Exact Rademacher laws
# ---------------------------------------------------------------------------


@functools.lru_cache(maxsize=8)
def _upper_tail_counts(m: int) -> tuple[int, ...]:
    """``U[k] = sum_{j >= k} C(m, j)`` for ``k = 0..m+1`` as exact integers."""
    counts = [0] * (m + 2)
    c = 1
    coeffs = []
    for j in range(m + 1):
        coeffs.append(c)
        c = c * (m - j) // (j + 1)
    acc = 0
    for k in range(m, -1, -1):
        acc += coeffs[k]
        counts[k] = acc
    return tuple(counts)


def _binom_half_upper(k: int, m: int) -> float:
    """``P(Bin(m, 1/2) >= k)``, exact integer arithmetic."""
    if k <= 0:
        return 1.0
    if k > m:
        return 0.0
    return _upper_tail_counts(m)[k] / (1 << m)


def pvalue_sign(s: int, n: int) -> float:
    """``P(S >= s)`` where ``(S + n)/2 ~ Bin(n, 1/2)``.

    Exact summation up to ``n = 10^4``, normal approximation with
    continuity correction above.
    """
    s, n = int(s), int(n)
    if n < 1 or abs(s) > n or (s + n) % 2:
        raise ValueError(f"sign statistic {s} impossible for n = {n}")
    k = (s + n) // 2
    if n <= EXACT_MAX_N:
        return _binom_half_upper(k, n)
    return _normal_sf((k - 0.5 - n / 2) / math.sqrt(n / 4))


def pvalue_runs(r: int, n: int) -> float:
    """Lower tail ``P(R <= r)`` with ``R ~ Bin(n - 1, 1/2)``."""
    r, n = int(r), int(n)
    if n < 1 or not 0 <= r <= n - 1:
        raise ValueError(f"number of sign changes {r} impossible for n = {n}")
    m = n - 1
    if m <= EXACT_MAX_N:
        if r >= m:
            return 1.0
        return ((1 << m) - _upper_tail_counts(m)[r + 1]) / (1 << m)
    return float(stats.binom.cdf(r, m, 0.5))


def pvalue_tail_run(l: int) -> float:
    """``P(L >= l) = 2^-l`` for the leading run of pluses (Geom(1/2))."""
    l = int(l)
    if l < 0:
        raise ValueError(f"tail run must be nonnegative, got {l}")
    return math.ldexp(1.0, -l)


def pvalue_smirnov(s_star: int, n: int) -> float:
    """Reflection principle: ``P(S* >= k) = 2 P(S_n >= k+1) + P(S_n = k)``."""
    s_star, n = int(s_star), int(n)
    if n < 1 or s_star > n:
        raise ValueError(f"Smirnov statistic {s_star} impossible for n = {n}")
    if s_star <= 0:
        return 1.0
    k = s_star
    # S_n = 2B - n with B ~ Bin(n, 1/2)
    above = -(-(n + k + 1) // 2)
    if n <= EXACT_MAX_N:
        counts = _upper_tail_counts(n)
        total = 2 * (counts[above] if above <= n else 0)
        if (n + k) % 2 == 0:
            j = (n + k) // 2
            total += counts[j] - counts[j + 1]
        return min(1.0, total / (1 << n))
    p = 2.0 * float(stats.binom.sf(above - 1, n, 0.5))
    if (n + k) % 2 == 0:
        p += float(stats.binom.pmf((n + k) // 2, n, 0.5))
    return min(1.0, p)


def asymptotic_pvalue(kind: str, value: float, n: int) -> float:
    """Upper-tail p-value from the normal limit of ``t``, ``signed_rank``
    (scaled by ``sqrt(3/n^3)``) or ``smirnov_asymptotic`` (``S*/sqrt(n)``
    against ``|N(0,1)|``)."""
    key = str(getattr(kind, "value", kind)).replace("-", "_")
    if key == "t":
        return _normal_sf(value)
    if key == "signed_rank":
        return _normal_sf(value * math.sqrt(3.0 / float(n) ** 3))
    if key in ("smirnov_asymptotic", "smirnov"):
        if value <= 0:
            return 1.0
        return min(1.0, 2.0 * _normal_sf(value / math.sqrt(n)))
    raise ValueError(f"no asymptotic null law for {kind!r}")


# ---------------------------------------------------------------------------
# Null laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NullLaw:
    """Null distribution of one statistic at sample size ``n``.

    Monte Carlo laws carry the sorted simulated statistics in ``table``
    together with the ``reps``/``seed`` that reproduce them.
    """

    kind: LawKind
    statistic: Kind
    n: int
    table: np.ndarray | None = None
    reps: int | None = None
    seed: int | None = None
    params: Mapping = field(default_factory=dict)

    @property
    def direction(self) -> Direction:
        return direction(self.statistic)

    def pvalue(self, value: float) -> float:
        k, n = self.kind, self.n
        if k is LawKind.EXACT_BINOMIAL_SIGN:
            return pvalue_sign(value, n)
        if k is LawKind.EXACT_BINOMIAL_RUNS:
            return pvalue_runs(value, n)
        if k is LawKind.EXACT_GEOMETRIC_TAIL:
            return pvalue_tail_run(value)
        if k is LawKind.EXACT_REFLECTION_SMIRNOV:
            return pvalue_smirnov(value, n)
        if k is LawKind.ASYMPTOTIC_NORMAL_T:
            return asymptotic_pvalue("t", value, n)
        if k is LawKind.ASYMPTOTIC_NORMAL_SIGNED_RANK:
            return asymptotic_pvalue("signed_rank", value, n)
        if k is LawKind.ASYMPTOTIC_HALFNORMAL_SMIRNOV:
            return asymptotic_pvalue("smirnov_asymptotic", value, n)
        # Monte Carlo: (1 + #{as or more extreme}) / (reps + 1)
        table = self.table
        if self.direction is Direction.REJECT_SMALL:
            count = int(np.searchsorted(table, value, side="right"))
        else:
            count = table.size - int(np.searchsorted(table, value, side="left"))
        return (1 + count) / (table.size + 1)

    def quantile(self, q: float) -> float:
        if self.table is None:
            raise ValueError("quantiles are only stored for Monte Carlo laws")
        return float(np.quantile(self.table, q))

    def critical_value(self, level: float) -> float:
        return critical_value(self, level)

    def rejects(self, value: float, level: float) -> bool:
        t = critical_value(self, level)
        if self.direction is Direction.REJECT_SMALL:
            return value <= t
        return value >= t


def _smallest_int(lo: int, hi: int, ok) -> int:
    """Smallest integer in ``[lo, hi]`` satisfying monotone ``ok``; ``hi`` if none before it."""
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def critical_value(law: NullLaw, level: float) -> float:
    """Threshold ``t`` with rejection iff ``stat >= t`` (``stat <= t`` for runs).

    For exact laws ``t`` is the smallest value whose null tail probability is
    at most ``level``, so the realized level never exceeds it. A threshold
    outside the support (``n + 2`` for the sign, ``-1`` for runs, ``inf``)
    means the test can never reject at this level. For Monte Carlo laws the
    threshold rejects exactly the values whose Monte Carlo p-value
    ``(1 + #{as or more extreme}) / (reps + 1)`` is at most ``level``.
    """
    if not 0 < level < 1:
        raise ValueError(f"level must lie in (0, 1), got {level!r}")
    k, n = law.kind, law.n
    if k is LawKind.EXACT_BINOMIAL_SIGN:
        # search over B = (S + n)/2 in 0..n+1
        b = _smallest_int(0, n + 1, lambda b: b > n or pvalue_sign(2 * b - n, n) <= level)
        return float(2 * b - n)
    if k is LawKind.EXACT_REFLECTION_SMIRNOV:
        return float(_smallest_int(0, n + 1, lambda t: t > n or pvalue_smirnov(t, n) <= level))
    if k is LawKind.EXACT_GEOMETRIC_TAIL:
        return float(_smallest_int(0, 1100, lambda l: pvalue_tail_run(l) <= level))
    if k is LawKind.EXACT_BINOMIAL_RUNS:
        # largest r with P(R <= r) <= level
        first_bad = _smallest_int(0, n, lambda r: r > n - 1 or pvalue_runs(r, n) > level)
        return float(first_bad - 1)
    if k is LawKind.ASYMPTOTIC_NORMAL_T:
        return _STD_NORMAL.inv_cdf(1.0 - level)
    if k is LawKind.ASYMPTOTIC_NORMAL_SIGNED_RANK:
        return _STD_NORMAL.inv_cdf(1.0 - level) * math.sqrt(float(n) ** 3 / 3.0)
    if k is LawKind.ASYMPTOTIC_HALFNORMAL_SMIRNOV:
        return _STD_NORMAL.inv_cdf(1.0 - level / 2.0) * math.sqrt(n)
    return _mc_critical_value(law, level)


def _mc_critical_value(law: NullLaw, level: float) -> float:
    # Threshold agrees exactly with NullLaw.pvalue(value) <= level.
    table = law.table
    reps = table.size
    allowed = math.floor(level * (reps + 1) + 1e-9) - 1  # max #{as extreme}
    integer = law.statistic.integer_valued
    if law.direction is Direction.REJECT_SMALL:
        if allowed < 0:
            return -math.inf
        if allowed >= reps:
            return math.inf
        v = float(table[allowed])
        return v - 1.0 if integer else float(np.nextafter(v, -math.inf))
    if allowed < 0:
        return math.inf
    if allowed >= reps:
        return -math.inf
    v = float(table[reps - allowed - 1])
    return v + 1.0 if integer else float(np.nextafter(v, math.inf))


def exact_or_asymptotic_law(kind: Kind | str, n: int, crossover: int = ASYMPTOTIC_CROSSOVER) -> NullLaw | None:
    """Closed-form law for ``kind`` at ``n``, or ``None`` if it needs simulation."""
    kind = Kind.parse(kind)
    if kind is Kind.SIGN:
        return NullLaw(LawKind.EXACT_BINOMIAL_SIGN, kind, n)
    if kind is Kind.NUM_RUNS:
        return NullLaw(LawKind.EXACT_BINOMIAL_RUNS, kind, n)
    if kind is Kind.TAIL_RUN:
        return NullLaw(LawKind.EXACT_GEOMETRIC_TAIL, kind, n)
    if kind is Kind.SMIRNOV:
        if n >= crossover:
            return NullLaw(LawKind.ASYMPTOTIC_HALFNORMAL_SMIRNOV, kind, n)
        return NullLaw(LawKind.EXACT_REFLECTION_SMIRNOV, kind, n)
    if kind is Kind.SIGNED_RANK:
        return NullLaw(LawKind.ASYMPTOTIC_NORMAL_SIGNED_RANK, kind, n)
    if kind is Kind.T:
        return NullLaw(LawKind.ASYMPTOTIC_NORMAL_T, kind, n)
    return None


# ---------------------------------------------------------------------------
# Monte Carlo calibration
# ---------------------------------------------------------------------------


def _sign_chunk(kinds: tuple[Kind, ...], n: int, seed: int, start: int, stop: int) -> np.ndarray:
    out = np.empty((stop - start, len(kinds)))
    for row, i in enumerate(range(start, stop)):
        rng = streams.substream(seed, streams.CALIBRATION_SIGNS, n, i)
        signs = (rng.integers(0, 2, size=n, dtype=np.int8) * 2 - 1).astype(np.int8)
        values = sign_statistics(signs, kinds)
        out[row] = [values[k] for k in kinds]
    return out


def _sample_chunk(
    kinds: tuple[Kind, ...],
    n: int,
    seed: int,
    null: GeneralizedGaussian,
    model: MixtureModel | None,
    hc_variant: str,
    start: int,
    stop: int,
) -> np.ndarray:
    out = np.empty((stop - start, len(kinds)))
    for row, i in enumerate(range(start, stop)):
        rng = streams.substream(seed, streams.CALIBRATION_SAMPLES, n, i)
        x = null.sample(rng, n)
        for col, kind in enumerate(kinds):
            if kind is Kind.T:
                try:
                    out[row, col] = t_statistic(x)
                except DegenerateSampleError:
                    out[row, col] = -math.inf
            elif kind is Kind.HC:
                out[row, col] = hc_statistic(x, null, hc_variant)
            elif kind is Kind.LRT:
                out[row, col] = lrt_statistic(x, model)
    return out


def _law_params(kind: Kind, null, model, hc_variant) -> dict:
    params: dict = {}
    if kind in (Kind.T, Kind.HC, Kind.LRT):
        params["null_gamma"] = null.gamma
        params["null_scale"] = null.scale
    if kind is Kind.HC:
        params["hc_variant"] = HCVariant(hc_variant).value
    if kind is Kind.LRT:
        params["effect_gamma"] = model.effect_dist.gamma
        params["effect_scale"] = model.effect_dist.scale
        params["epsilon"] = model.epsilon
        params["mu"] = model.mu
    return params


def mc_calibrate_many(
    kinds: Iterable[Kind | str],
    n: int,
    reps: int,
    seed: int,
    *,
    null: GeneralizedGaussian | None = None,
    model: MixtureModel | None = None,
    hc_variant: HCVariant | str = HCVariant.PLUS,
    workers: int = 1,
    cache_dir: str | Path | None = None,
) -> dict[Kind, NullLaw]:
    """Simulate null tables for several statistics from shared null draws.

    Sign statistics are simulated from i.i.d. Rademacher sequences; ``t``,
    ``hc`` and ``lrt`` from null samples of ``null`` (``lrt`` also needs the
    alternative ``model``). Trial ``i`` always uses the substream keyed by
    ``(seed, n, i)``, so tables do not depend on ``workers`` or on which other
    statistics are calibrated alongside.
    """
    kinds = [Kind.parse(k) for k in kinds]
    if reps < 100:
        raise ValueError(f"Monte Carlo calibration needs reps >= 100, got {reps}")
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    hc_variant = HCVariant(hc_variant).value
    if model is not None and null is None:
        null = model.null_dist
    for kind in kinds:
        if kind in (Kind.T, Kind.HC, Kind.LRT) and null is None:
            raise ValueError(f"{kind.value} calibration needs the null distribution")
        if kind is Kind.LRT and model is None:
            raise ValueError("lrt calibration needs the mixture model")

    laws: dict[Kind, NullLaw] = {}
    todo: list[Kind] = []
    for kind in kinds:
        params = _law_params(kind, null, model, hc_variant)
        cached = load_cached(cache_dir, kind, n, reps, seed, params) if cache_dir else None
        if cached is not None:
            laws[kind] = cached
        else:
            todo.append(kind)

    sign_kinds = tuple(k for k in todo if k.uses_signs)
    sample_kinds = tuple(k for k in todo if not k.uses_signs)
    chunks = streams.split_range(reps, 4 * max(1, workers))
    tables: dict[Kind, np.ndarray] = {}
    if sign_kinds:
        parts = streams.run_chunks(
            functools.partial(_sign_chunk, sign_kinds, n, seed), chunks, workers
        )
        values = np.concatenate(parts)
        tables.update({k: values[:, j] for j, k in enumerate(sign_kinds)})
    if sample_kinds:
        parts = streams.run_chunks(
            functools.partial(_sample_chunk, sample_kinds, n, seed, null, model, hc_variant),
            chunks,
            workers,
        )
        values = np.concatenate(parts)
        tables.update({k: values[:, j] for j, k in enumerate(sample_kinds)})

    for kind in todo:
        table = np.sort(tables[kind])
        table.flags.writeable = False
        params = _law_params(kind, null, model, hc_variant)
        law = NullLaw(LawKind.MONTE_CARLO, kind, n, table, reps, seed, params)
        if cache_dir:
            save_table(law, cache_path(cache_dir, kind, n, reps, seed, params))
        laws[kind] = law
    return {k: laws[k] for k in kinds}


def mc_calibrate(kind: Kind | str, n: int, reps: int, seed: int, **kwargs) -> NullLaw:
    """Monte Carlo null law for one statistic; see :func:`mc_calibrate_many`."""
    return mc_calibrate_many([kind], n, reps, seed, **kwargs)[Kind.parse(kind)]


# ---------------------------------------------------------------------------
# On-disk cache
# ---------------------------------------------------------------------------


def _cache_key(kind: Kind, n: int, reps: int, seed: int, params: Mapping) -> dict:
    return {"kind": kind.value, "n": int(n), "reps": int(reps), "seed": int(seed),
            "params": {k: params[k] for k in sorted(params)}}


def cache_path(cache_dir, kind: Kind, n: int, reps: int, seed: int, params: Mapping) -> Path:
    key = json.dumps(_cache_key(kind, n, reps, seed, params), sort_keys=True)
    digest = hashlib.sha256(key.encode()).hexdigest()[:16]
    return Path(cache_dir) / f"{kind.value}-n{n}-r{reps}-s{seed}-{digest}.txt"


def save_table(law: NullLaw, path: str | Path) -> Path:
    """Write a Monte Carlo law as a text table.

    Format: ``#``-prefixed header lines (format tag, then ``key: value`` for
    kind, n, reps, seed and JSON params), then one sorted statistic value
    per line with 17 significant digits.
    """
    if law.table is None:
        raise ValueError("only Monte Carlo laws have a table to save")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [
        f"# {CACHE_FORMAT}",
        f"# kind: {law.statistic.value}",
        f"# n: {law.n}",
        f"# reps: {law.reps}",
        f"# seed: {law.seed}",
        f"# params: {json.dumps(dict(sorted(law.params.items())), sort_keys=True)}",
    ]
    lines.extend(format(float(v), ".17g") for v in law.table)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text("\n".join(lines) + "\n")
    tmp.replace(path)
    return path


def load_table(path: str | Path) -> NullLaw:
    header: dict[str, str] = {}
    values: list[float] = []
    with open(path) as fh:
        first = fh.readline().strip()
        if first != f"# {CACHE_FORMAT}":
            raise ValueError(f"{path}: not a null table ({first!r})")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                header[key.strip()] = value.strip()
            else:
                values.append(float(line))
    table = np.asarray(values)
    table.flags.writeable = False
    return NullLaw(
        LawKind.MONTE_CARLO,
        Kind.parse(header["kind"]),
        int(header["n"]),
        table,
        int(header["reps"]),
        int(header["seed"]),
        json.loads(header.get("params", "{}")),
    )


def load_cached(cache_dir, kind: Kind, n: int, reps: int, seed: int, params: Mapping) -> NullLaw | None:
    path = cache_path(cache_dir, kind, n, reps, seed, params)
    if not path.exists():
        return None
    law = load_table(path)
    if _cache_key(law.statistic, law.n, law.reps, law.seed, law.params) != _cache_key(
        kind, n, reps, seed, params
    ) or law.table.size != reps:
        return None
    return law
