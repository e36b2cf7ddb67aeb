"""Distribution-free tests for sparse one-sided mixtures.

The tests act on the sign sequence of a sample ordered by decreasing
absolute value, which is i.i.d. Rademacher whenever the null is continuous
and symmetric about zero. The package provides the statistics, their null
calibration, detection-boundary formulas and a Monte Carlo power engine.
"""

from .calibration import (
    Calibration,
    LawKind,
    NullLaw,
    asymptotic_pvalue,
    critical_value,
    exact_or_asymptotic_law,
    mc_calibrate,
    mc_calibrate_many,
    pvalue_runs,
    pvalue_sign,
    pvalue_smirnov,
    pvalue_tail_run,
)
from .distributions import (
    GeneralizedGaussian,
    MixtureModel,
    Regime,
    SamplingMode,
    SparsityParam,
    effect_count,
    gg_cdf,
    gg_density,
    gg_quantile,
    gg_sample,
    mixture_sample,
    mu_from_param,
)
from .signs import SignSequence, build_sign_sequence
from .simulation import (
    ConfigError,
    ExperimentConfig,
    PowerTable,
    estimate_power,
    run_trial,
    varying_n_study,
)
from .statistics import (
    DegenerateSampleError,
    Direction,
    HCVariant,
    Kind,
    compute_statistics,
    cusum_statistic,
    hc_statistic,
    longest_run_statistic,
    lrt_statistic,
    num_runs_statistic,
    sign_statistic,
    signed_rank_statistic,
    smirnov_statistic,
    t_statistic,
    tail_run_statistic,
)
from .theory import (
    boundary_grid,
    classify_regime,
    cross_gamma_lower,
    dense_threshold_s,
    rho_long,
    rho_star,
    rho_tail,
    split_beta,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
