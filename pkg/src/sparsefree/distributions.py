"""Generalized Gaussian distributions and sparse mixture sampling.

The generalized Gaussian with shape ``gamma`` and ``scale`` has density

    f(x) = exp(-|x/scale|^gamma / gamma) / (2 scale gamma^(1/gamma - 1) Gamma(1/gamma))

so ``gamma=2`` is the standard normal and ``gamma=1`` the double
exponential ``exp(-|x|)/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .special import gammainc_upper, gammainc_upper_inv

__all__ = [
    "GeneralizedGaussian",
    "MixtureModel",
    "Regime",
    "SamplingMode",
    "SparsityParam",
    "effect_count",
    "gg_cdf",
    "gg_density",
    "gg_quantile",
    "gg_sample",
    "mixture_sample",
    "mu_from_param",
]


@dataclass(frozen=True)
class GeneralizedGaussian:
    gamma: float
    scale: float = 1.0

    def __post_init__(self) -> None:
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"scale must be positive and finite, got {self.scale!r}")

    @property
    def shape(self) -> float:
        """Shape ``1/gamma`` of the gamma law of ``|X/scale|^gamma / gamma``."""
        return 1.0 / self.gamma

    @property
    def log_norm(self) -> float:
        g = self.gamma
        return math.log(2.0 * self.scale) + (1.0 / g - 1.0) * math.log(g) + math.lgamma(1.0 / g)

    def _z(self, x):
        return np.abs(np.asarray(x, dtype=float) / self.scale) ** self.gamma / self.gamma

    def logpdf(self, x):
        out = -self._z(x) - self.log_norm
        return out if np.ndim(out) else float(out)

    def pdf(self, x):
        out = np.exp(self.logpdf(x))
        return out if np.ndim(out) else float(out)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        half_tail = 0.5 * gammainc_upper(self.shape, self._z(x))
        out = np.where(x > 0, 1.0 - half_tail, half_tail)
        out = np.where(x == 0, 0.5, out)
        return out if out.ndim else float(out)

    def sf(self, x):
        """Survival function ``1 - F(x)``, accurate in the right tail."""
        x = np.asarray(x, dtype=float)
        return self.cdf(-x)

    def ppf(self, u):
        if np.ndim(u):
            return np.array([self.ppf(float(v)) for v in np.ravel(u)]).reshape(np.shape(u))
        if not 0 < u < 1:
            raise ValueError(f"quantile level must lie in (0, 1), got {u!r}")
        if u == 0.5:
            return 0.0
        tail = 2.0 * min(u, 1.0 - u)
        z = gammainc_upper_inv(self.shape, tail)
        x = self.scale * (self.gamma * z) ** (1.0 / self.gamma)
        return x if u > 0.5 else -x

    def variance(self) -> float:
        g = self.gamma
        return self.scale**2 * g ** (2.0 / g) * math.exp(math.lgamma(3.0 / g) - math.lgamma(1.0 / g))

    def sample(self, rng: np.random.Generator, size=None):
        # |X/scale|^gamma / gamma ~ Gamma(1/gamma); numpy's standard_gamma is
        # Marsaglia-Tsang squeeze rejection, boosted for shape < 1.
        u = rng.standard_gamma(self.shape, size=size)
        magnitude = self.scale * (self.gamma * u) ** (1.0 / self.gamma)
        sign = np.where(rng.random(size=size) < 0.5, -1.0, 1.0)
        out = sign * magnitude
        return out if size is not None else float(out)


def gg_density(d: GeneralizedGaussian, x):
    return d.pdf(x)


def gg_cdf(d: GeneralizedGaussian, x):
    return d.cdf(x)


def gg_quantile(d: GeneralizedGaussian, u):
    return d.ppf(u)


def gg_sample(d: GeneralizedGaussian, rng: np.random.Generator, size=None):
    return d.sample(rng, size)


class Regime(str, Enum):
    DENSE_S = "dense_s"
    SPARSE_R = "sparse_r"


class SamplingMode(str, Enum):
    BERNOULLI = "bernoulli"
    EXACT_COUNT = "exact_count"


@dataclass(frozen=True)
class SparsityParam:
    """Sparsity ``epsilon = n^-beta`` and signal strength (``r`` or ``s``)."""

    beta: float
    value: float
    regime: Regime = Regime.SPARSE_R

    def __post_init__(self) -> None:
        object.__setattr__(self, "regime", Regime(self.regime))
        if not 0 < self.beta < 1:
            raise ValueError(f"beta must lie in (0, 1), got {self.beta!r}")
        if self.regime is Regime.DENSE_S:
            if not 0 <= self.value <= 0.5:
                raise ValueError(f"s must lie in [0, 1/2], got {self.value!r}")
        elif not self.value >= 0:
            raise ValueError(f"r must be nonnegative, got {self.value!r}")

    def epsilon(self, n: int) -> float:
        return float(n) ** (-self.beta)


def mu_from_param(gamma: float, n: int, p: SparsityParam) -> float:
    """Signal magnitude: ``(gamma r log n)^(1/gamma)`` or ``n^(s - 1/2)``."""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n!r}")
    if p.regime is Regime.DENSE_S:
        return float(n) ** (p.value - 0.5)
    return (gamma * p.value * math.log(n)) ** (1.0 / gamma)


@dataclass(frozen=True)
class MixtureModel:
    """``(1 - epsilon) F + epsilon G(. - mu)``; ``epsilon = 0`` is the null."""

    null_dist: GeneralizedGaussian
    effect_dist: GeneralizedGaussian
    epsilon: float
    mu: float

    def __post_init__(self) -> None:
        if not 0 <= self.epsilon <= 1:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon!r}")
        if not (self.mu >= 0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be finite and nonnegative, got {self.mu!r}")


def effect_count(n: int, epsilon: float, rounding: str = "floor") -> int:
    """Number of non-null draws ``[n epsilon]`` under exact-count sampling.

    A relative slack of 1e-9 absorbs representation error in ``n * epsilon``
    (for example ``1e5 * 10**-1``) before rounding.
    """
    target = n * epsilon
    slack = 1e-9 * max(1.0, target)
    if rounding == "floor":
        k = math.floor(target + slack)
    elif rounding == "round":
        k = math.floor(target + 0.5 + slack)
    else:
        raise ValueError(f"unknown rounding {rounding!r}")
    return min(max(k, 0), n)


def mixture_sample(
    m: MixtureModel,
    n: int,
    mode: SamplingMode | str,
    rng: np.random.Generator,
    rounding: str = "floor",
) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be positive, got {n!r}")
    mode = SamplingMode(mode)
    if mode is SamplingMode.EXACT_COUNT:
        k = effect_count(n, m.epsilon, rounding)
        x = np.empty(n)
        x[: n - k] = m.null_dist.sample(rng, n - k)
        x[n - k :] = m.effect_dist.sample(rng, k) + m.mu
        return rng.permutation(x)
    is_effect = rng.random(n) < m.epsilon
    k = int(is_effect.sum())
    x = np.empty(n)
    x[~is_effect] = m.null_dist.sample(rng, n - k)
    x[is_effect] = m.effect_dist.sample(rng, k) + m.mu
    return x
