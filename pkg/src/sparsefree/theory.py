"""Detection boundaries for the generalized Gaussian mixture model.

With ``epsilon_n = n^-beta`` and ``mu_n = (gamma r log n)^(1/gamma)``, a
test is asymptotically powerful above its boundary curve ``r = rho(beta)``
and powerless below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Regime(str, Enum):
    DENSE = "dense"
    MODERATELY_SPARSE = "moderately_sparse"
    VERY_SPARSE = "very_sparse"


@dataclass(frozen=True)
class RegimeClassification:
    regime: Regime
    boundary_beta: float | None  # split point, only for gamma > 1


def _check_gamma(gamma: float) -> None:
    if not (gamma > 0 and math.isfinite(gamma)):
        raise ValueError(f"gamma must be positive and finite, got {gamma!r}")


def _check_beta(beta: float, lo: float, hi: float) -> None:
    # closed interval: the endpoints evaluate to the closed-form limits
    if not lo <= beta <= hi:
        raise ValueError(f"beta must lie in [{lo}, {hi}], got {beta!r}")


def split_beta(gamma: float) -> float | None:
    """``1 - 2^(-gamma/(gamma-1))`` separating moderately and very sparse (gamma > 1)."""
    _check_gamma(gamma)
    if gamma <= 1:
        return None
    return 1.0 - 2.0 ** (-gamma / (gamma - 1.0))


def classify_regime(gamma: float, beta: float) -> RegimeClassification:
    _check_beta(beta, 0.0, 1.0)
    split = split_beta(gamma)
    if beta < 0.5:
        return RegimeClassification(Regime.DENSE, split)
    if split is not None and beta < split:
        return RegimeClassification(Regime.MODERATELY_SPARSE, split)
    return RegimeClassification(Regime.VERY_SPARSE, split)


def _tail_curve(gamma: float, beta: float) -> float:
    return (1.0 - (1.0 - beta) ** (1.0 / gamma)) ** gamma


def rho_star(gamma: float, beta: float) -> float:
    """Optimal detection boundary in the sparse regime ``1/2 < beta < 1``."""
    _check_gamma(gamma)
    _check_beta(beta, 0.5, 1.0)
    if gamma <= 1:
        return 2.0 * (beta - 0.5)
    if beta >= split_beta(gamma):
        return _tail_curve(gamma, beta)
    # (2^(1/(g-1)) - 1)^(g-1) rewritten to avoid overflow as g -> 1+
    d = gamma - 1.0
    slope = 2.0 * (1.0 - 2.0 ** (-1.0 / d)) ** d
    return slope * (beta - 0.5)


def rho_tail(gamma: float, beta: float) -> float:
    """Boundary of the tail-run test (also that of the max test)."""
    _check_gamma(gamma)
    _check_beta(beta, 0.0, 1.0)
    return _tail_curve(gamma, beta)


def rho_long(gamma: float, beta: float) -> float:
    """Boundary of the longest-run test, ``min(beta, rho_tail)``."""
    _check_gamma(gamma)
    _check_beta(beta, 0.0, 1.0)
    if gamma <= 1:
        return beta
    return _tail_curve(gamma, beta)


def dense_threshold_s(gamma: float, beta: float) -> float:
    """Dense regime (``mu_n = n^(s - 1/2)``): the hypotheses merge for ``s`` below this."""
    _check_gamma(gamma)
    if not 0 < beta < 0.5:
        raise ValueError(f"beta must lie in (0, 1/2), got {beta!r}")
    if gamma >= 0.5:
        return beta
    return 0.5 - (1.0 - 2.0 * beta) / (1.0 + 2.0 * gamma)


def cross_gamma_lower(beta: float) -> float:
    """Merging bound ``2 beta - 1`` when F and G have shapes gamma < eta."""
    _check_beta(beta, 0.5, 1.0)
    return 2.0 * beta - 1.0


@dataclass(frozen=True)
class BoundaryRow:
    beta: float
    rho_star: float  # nan below beta = 1/2
    rho_tail: float
    rho_long: float


def boundary_grid(gamma: float, beta_grid) -> list[BoundaryRow]:
    """Tabulate the three boundaries over ``beta_grid`` (phase-diagram data)."""
    _check_gamma(gamma)
    rows = []
    for beta in np.asarray(beta_grid, dtype=float):
        beta = float(beta)
        star = rho_star(gamma, beta) if beta >= 0.5 else math.nan
        rows.append(BoundaryRow(beta, star, rho_tail(gamma, beta), rho_long(gamma, beta)))
    return rows
