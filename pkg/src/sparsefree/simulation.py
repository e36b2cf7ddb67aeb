"""Monte Carlo power studies over signal-strength grids.

Each trial draws one sample, builds its sign sequence once and applies
every configured test at the same level. Trial ``i`` at strength ``v`` and
sample size ``n`` uses the substream keyed by ``(master_seed, n, v, i)``,
so tables are identical for any number of workers.
"""

from __future__ import annotations

import csv
import dataclasses
import functools
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import streams
from .calibration import (
    ASYMPTOTIC_CROSSOVER,
    Calibration,
    NullLaw,
    critical_value,
    exact_or_asymptotic_law,
    mc_calibrate_many,
)
from .distributions import (
    GeneralizedGaussian,
    MixtureModel,
    Regime,
    SamplingMode,
    SparsityParam,
    effect_count,
    mixture_sample,
    mu_from_param,
)
from .signs import build_sign_sequence
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

log = logging.getLogger(__name__)

ALL_TESTS = tuple(Kind)
CSV_HEADER = ("strength", "test", "power", "stderr", "n", "beta", "regime", "seed")


class ConfigError(ValueError):
    """Invalid experiment configuration; ``errors`` lists every violated field."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    beta: float
    strength_grid: tuple[float, ...]
    regime: Regime
    gamma_null: float = 2.0
    gamma_effect: float | None = None
    scale_null: float = 1.0
    scale_effect: float | None = None
    reps: int = 400
    level: float = 0.05
    tests: tuple[Kind, ...] = ALL_TESTS
    sampling_mode: SamplingMode = SamplingMode.EXACT_COUNT
    master_seed: int = 0
    calibration: Mapping[Kind, Calibration] = field(default_factory=dict)
    calibration_reps: int = 2000
    calibration_seed: int | None = None
    crossover_n: int = ASYMPTOTIC_CROSSOVER
    count_rounding: str = "floor"
    hc_variant: HCVariant = HCVariant.PLUS
    force_null: bool = False
    n_list: tuple[int, ...] | None = None
    fixed_strength: float | None = None
    name: str = ""

    def __post_init__(self) -> None:
        errors = _validate(self)
        if errors:
            raise ConfigError(errors)

    @property
    def null_dist(self) -> GeneralizedGaussian:
        return GeneralizedGaussian(self.gamma_null, self.scale_null)

    @property
    def effect_dist(self) -> GeneralizedGaussian:
        gamma = self.gamma_null if self.gamma_effect is None else self.gamma_effect
        scale = self.scale_null if self.scale_effect is None else self.scale_effect
        return GeneralizedGaussian(gamma, scale)

    @property
    def cal_seed(self) -> int:
        return self.master_seed if self.calibration_seed is None else self.calibration_seed

    def model(self, strength: float, n: int | None = None) -> MixtureModel:
        """Alternative at ``strength`` (``r`` or ``s``); ``mu`` uses the null's gamma."""
        n = self.n if n is None else n
        p = SparsityParam(self.beta, strength, self.regime)
        mu = mu_from_param(self.gamma_null, n, p)
        return MixtureModel(self.null_dist, self.effect_dist, p.epsilon(n), mu)

    def calibration_for(self, kind: Kind) -> Calibration:
        return self.calibration.get(kind, Calibration.EXACT_OR_ASYMPTOTIC)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        errors = [f"{key}: unknown field" for key in data if key not in known]
        for key in ("n", "beta", "strength_grid", "regime"):
            if key not in data:
                errors.append(f"{key}: required")
        if errors:
            raise ConfigError(errors)
        kwargs: dict[str, Any] = {}
        for key, value in data.items():
            try:
                kwargs[key] = _coerce(key, value)
            except (TypeError, ValueError) as exc:
                errors.append(f"{key}: {exc}")
        if errors:
            raise ConfigError(errors)
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> ExperimentConfig:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError([f"<file>: not valid JSON ({exc})"]) from None
        if not isinstance(data, dict):
            raise ConfigError(["<file>: top level must be a JSON object"])
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "calibration":
                value = {k.value: v.value for k, v in value.items()}
            elif f.name == "tests":
                value = [k.value for k in value]
            elif isinstance(value, tuple):
                value = list(value)
            elif hasattr(value, "value"):
                value = value.value
            out[f.name] = value
        return out

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)


def _coerce(key: str, value: Any) -> Any:
    if key in ("strength_grid",):
        return tuple(float(v) for v in value)
    if key == "n_list":
        return None if value is None else tuple(_as_int(v) for v in value)
    if key == "tests":
        return tuple(Kind.parse(v) for v in value)
    if key == "calibration":
        return {Kind.parse(k): Calibration(v) for k, v in dict(value).items()}
    if key == "regime":
        return Regime(value)
    if key == "sampling_mode":
        return SamplingMode(value)
    if key == "hc_variant":
        return HCVariant(value)
    if key in ("n", "reps", "master_seed", "calibration_reps", "crossover_n"):
        return _as_int(value)
    if key == "calibration_seed":
        return None if value is None else _as_int(value)
    if key in ("gamma_effect", "scale_effect", "fixed_strength"):
        return None if value is None else float(value)
    if key in ("beta", "gamma_null", "scale_null", "level"):
        return float(value)
    if key == "force_null":
        if not isinstance(value, bool):
            raise TypeError("must be true or false")
        return value
    return value


def _as_int(value: Any) -> int:
    if isinstance(value, bool):
        raise TypeError("must be an integer")
    if isinstance(value, float):
        if not value.is_integer():
            raise ValueError(f"must be an integer, got {value!r}")
        return int(value)
    return int(value)


def _validate(cfg: ExperimentConfig) -> list[str]:
    errors = []

    def positive(name, value):
        if value is not None and not (value > 0 and math.isfinite(value)):
            errors.append(f"{name}: must be positive and finite, got {value!r}")

    if not cfg.n >= 2:
        errors.append(f"n: must be at least 2, got {cfg.n!r}")
    if not 0 < cfg.beta < 1:
        errors.append(f"beta: must lie in (0, 1), got {cfg.beta!r}")
    grid = list(cfg.strength_grid)
    if not grid:
        errors.append("strength_grid: must be non-empty")
    elif any(b < a for a, b in zip(grid, grid[1:])):
        errors.append("strength_grid: must be sorted ascending")
    elif any(not (v >= 0 and math.isfinite(v)) for v in grid):
        errors.append("strength_grid: values must be finite and nonnegative")
    elif cfg.regime is Regime.DENSE_S and grid[-1] > 0.5:
        errors.append("strength_grid: s values must lie in [0, 1/2]")
    for name in ("gamma_null", "gamma_effect", "scale_null", "scale_effect"):
        positive(name, getattr(cfg, name))
    if not cfg.reps >= 1:
        errors.append(f"reps: must be at least 1, got {cfg.reps!r}")
    if not 0 < cfg.level < 1:
        errors.append(f"level: must lie in (0, 1), got {cfg.level!r}")
    if not cfg.tests:
        errors.append("tests: must name at least one test")
    elif len(set(cfg.tests)) != len(cfg.tests):
        errors.append("tests: duplicate entries")
    if cfg.master_seed < 0:
        errors.append(f"master_seed: must be nonnegative, got {cfg.master_seed!r}")
    if cfg.calibration_seed is not None and cfg.calibration_seed < 0:
        errors.append(f"calibration_seed: must be nonnegative, got {cfg.calibration_seed!r}")
    if cfg.calibration_reps < 100:
        errors.append(f"calibration_reps: must be at least 100, got {cfg.calibration_reps!r}")
    if cfg.crossover_n < 1:
        errors.append(f"crossover_n: must be positive, got {cfg.crossover_n!r}")
    if cfg.count_rounding not in ("floor", "round"):
        errors.append(f"count_rounding: must be 'floor' or 'round', got {cfg.count_rounding!r}")
    if cfg.n_list is not None:
        if not cfg.n_list or any(m < 2 for m in cfg.n_list):
            errors.append("n_list: must be non-empty with every n >= 2")
        elif any(b < a for a, b in zip(cfg.n_list, cfg.n_list[1:])):
            errors.append("n_list: must be sorted ascending")
    if cfg.fixed_strength is not None and not cfg.fixed_strength >= 0:
        errors.append(f"fixed_strength: must be nonnegative, got {cfg.fixed_strength!r}")
    return errors


# ---------------------------------------------------------------------------
# Calibration of a configuration
# ---------------------------------------------------------------------------


def build_laws(
    cfg: ExperimentConfig,
    strength: float,
    *,
    workers: int = 1,
    cache_dir: str | Path | None = None,
    shared: dict[Kind, NullLaw] | None = None,
) -> dict[Kind, NullLaw]:
    """Null law of every configured test at ``cfg.n``.

    Laws that do not depend on ``strength`` may be passed in ``shared`` to
    avoid recalibrating them for each grid point; only ``lrt`` does.
    """
    laws: dict[Kind, NullLaw] = dict(shared or {})
    mc: list[Kind] = []
    for kind in cfg.tests:
        if kind in laws and kind is not Kind.LRT:
            continue
        law = None
        if cfg.calibration_for(kind) is Calibration.EXACT_OR_ASYMPTOTIC:
            law = exact_or_asymptotic_law(kind, cfg.n, cfg.crossover_n)
        if law is None:
            mc.append(kind)
        else:
            laws[kind] = law
    if mc:
        model = cfg.model(strength) if Kind.LRT in mc else None
        laws.update(
            mc_calibrate_many(
                mc,
                cfg.n,
                cfg.calibration_reps,
                cfg.cal_seed,
                null=cfg.null_dist,
                model=model,
                hc_variant=cfg.hc_variant,
                workers=workers,
                cache_dir=cache_dir,
            )
        )
    return {k: laws[k] for k in cfg.tests}


def thresholds(laws: Mapping[Kind, NullLaw], level: float) -> dict[Kind, float]:
    return {k: critical_value(law, level) for k, law in laws.items()}


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialOutcome:
    rejections: dict[Kind, bool]
    degenerate_t: bool = False
    effect_count: int | None = None


def _rejects(kind: Kind, value: float, threshold: float) -> bool:
    if direction(kind) is Direction.REJECT_SMALL:
        return value <= threshold
    return value >= threshold


def _trial(
    cfg: ExperimentConfig, strength: float, trial_index: int, cuts: Mapping[Kind, float]
) -> TrialOutcome:
    model = cfg.model(strength)
    rng = streams.substream(
        cfg.master_seed, streams.POWER_TRIAL, cfg.n, streams.float_key(strength), trial_index
    )
    data_model = dataclasses.replace(model, epsilon=0.0) if cfg.force_null else model
    x = mixture_sample(data_model, cfg.n, cfg.sampling_mode, rng, cfg.count_rounding)
    values: dict[Kind, float] = {}
    sign_kinds = [k for k in cfg.tests if k.uses_signs]
    if sign_kinds:
        seq = build_sign_sequence(x, rng)
        values.update(sign_statistics(seq.signs, sign_kinds))
    degenerate = False
    flags: dict[Kind, bool] = {}
    for kind in cfg.tests:
        if kind is Kind.T:
            try:
                values[kind] = t_statistic(x)
            except DegenerateSampleError:
                degenerate = True
                flags[kind] = False
                continue
        elif kind is Kind.HC:
            values[kind] = hc_statistic(x, cfg.null_dist, cfg.hc_variant)
        elif kind is Kind.LRT:
            values[kind] = lrt_statistic(x, model)
        flags[kind] = _rejects(kind, values[kind], cuts[kind])
    return TrialOutcome({k: flags[k] for k in cfg.tests}, degenerate)


def run_trial(
    cfg: ExperimentConfig,
    strength: float,
    trial_index: int,
    laws: Mapping[Kind, NullLaw] | None = None,
) -> TrialOutcome:
    """One trial: sample, compute every configured statistic, test at ``cfg.level``.

    Deterministic in ``(cfg.master_seed, cfg.n, strength, trial_index)``.
    With ``cfg.force_null`` the data come from the null while ``lrt`` still
    tests against the alternative at ``strength``.
    """
    if laws is None:
        laws = build_laws(cfg, strength)
    return _trial(cfg, strength, trial_index, thresholds(laws, cfg.level))


def _trial_chunk(
    cfg: ExperimentConfig, strength: float, cuts: Mapping[Kind, float], start: int, stop: int
) -> tuple[np.ndarray, int]:
    counts = np.zeros(len(cfg.tests), dtype=np.int64)
    degenerate = 0
    for i in range(start, stop):
        outcome = _trial(cfg, strength, i, cuts)
        counts += [outcome.rejections[k] for k in cfg.tests]
        degenerate += outcome.degenerate_t
    return counts, degenerate


# ---------------------------------------------------------------------------
# Power tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PowerRow:
    strength: float
    test: Kind
    power: float
    stderr: float
    n: int
    rejections: int
    reps: int


@dataclass
class PowerTable:
    rows: list[PowerRow]
    config: ExperimentConfig
    metadata: dict[str, Any] = field(default_factory=dict)

    def power(self, test: Kind | str, strength: float, n: int | None = None) -> float:
        return self.row(test, strength, n).power

    def row(self, test: Kind | str, strength: float, n: int | None = None) -> PowerRow:
        test = Kind.parse(test)
        for row in self.rows:
            if row.test is test and row.strength == strength and (n is None or row.n == n):
                return row
        raise KeyError((test, strength, n))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        cfg = self.config
        for r in self.rows:
            writer.writerow(
                [_fmt(r.strength), r.test.value, _fmt(r.power), _fmt(r.stderr), r.n,
                 _fmt(cfg.beta), cfg.regime.value, cfg.master_seed]
            )
        return buf.getvalue()

    def write(self, path: str | Path) -> tuple[Path, Path]:
        """Write the CSV and a ``.meta.json`` sidecar echoing the configuration."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv())
        meta_path = path.with_suffix(".meta.json")
        meta = {"config": self.config.to_dict(), **self.metadata}
        meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return path, meta_path


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def estimate_power(
    cfg: ExperimentConfig,
    *,
    workers: int = 1,
    cache_dir: str | Path | None = None,
    progress: Callable[[str], None] | None = None,
) -> PowerTable:
    """Empirical power of every configured test at every grid strength."""
    shared: dict[Kind, NullLaw] = {}
    rows: list[PowerRow] = []
    degenerate: dict[str, int] = {}
    counts_meta: dict[str, int] = {}
    chunks = streams.split_range(cfg.reps, 4 * max(1, workers))
    for strength in cfg.strength_grid:
        laws = build_laws(cfg, strength, workers=workers, cache_dir=cache_dir, shared=shared)
        shared.update({k: v for k, v in laws.items() if k is not Kind.LRT})
        cuts = thresholds(laws, cfg.level)
        results = streams.run_chunks(
            functools.partial(_trial_chunk, cfg, strength, cuts), chunks, workers
        )
        counts = sum((c for c, _ in results), np.zeros(len(cfg.tests), dtype=np.int64))
        n_degenerate = sum(d for _, d in results)
        if n_degenerate:
            log.warning("%d degenerate t samples at strength %g counted as non-rejections",
                        n_degenerate, strength)
        degenerate[_fmt(strength)] = int(n_degenerate)
        model = cfg.model(strength)
        counts_meta[_fmt(strength)] = (
            0 if cfg.force_null else effect_count(cfg.n, model.epsilon, cfg.count_rounding)
        )
        for kind, k in zip(cfg.tests, counts):
            p = int(k) / cfg.reps
            rows.append(PowerRow(strength, kind, p, math.sqrt(p * (1 - p) / cfg.reps),
                                 cfg.n, int(k), cfg.reps))
        if progress:
            summary = " ".join(f"{kind.value}={int(k) / cfg.reps:.3f}" for kind, k in zip(cfg.tests, counts))
            progress(f"n={cfg.n} strength={strength:g}: {summary}")
    meta: dict[str, Any] = {"degenerate_t": degenerate}
    if cfg.sampling_mode is SamplingMode.EXACT_COUNT:
        meta["effect_counts"] = counts_meta
    return PowerTable(rows, cfg, meta)


def varying_n_study(
    cfg_base: ExperimentConfig,
    n_list: Sequence[int] | None = None,
    fixed_strength: float | None = None,
    *,
    workers: int = 1,
    cache_dir: str | Path | None = None,
    progress: Callable[[str], None] | None = None,
) -> PowerTable:
    """Power of every test at one strength over a list of sample sizes."""
    n_list = list(n_list if n_list is not None else (cfg_base.n_list or ()))
    strength = fixed_strength if fixed_strength is not None else cfg_base.fixed_strength
    errors = []
    if not n_list:
        errors.append("n_list: required for a varying-n study")
    elif any(b < a for a, b in zip(n_list, n_list[1:])):
        errors.append("n_list: must be sorted ascending")
    if strength is None:
        errors.append("fixed_strength: required for a varying-n study")
    if errors:
        raise ConfigError(errors)
    rows: list[PowerRow] = []
    meta: dict[str, Any] = {"degenerate_t": {}, "effect_counts": {}}
    for n in n_list:
        cfg = cfg_base.replace(n=int(n), strength_grid=(float(strength),))
        table = estimate_power(cfg, workers=workers, cache_dir=cache_dir, progress=progress)
        rows.extend(table.rows)
        for key in ("degenerate_t", "effect_counts"):
            if key in table.metadata:
                meta[key][str(n)] = table.metadata[key][_fmt(strength)]
    config = cfg_base.replace(n_list=tuple(int(n) for n in n_list), fixed_strength=float(strength),
                              strength_grid=(float(strength),))
    return PowerTable(rows, config, meta)
