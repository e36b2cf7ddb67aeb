"""Sign sequence of a sample ordered by decreasing absolute value."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class SignSequence:
    """Signs ``xi_(1..n)`` (int8, each -1 or +1), largest ``|x|`` first."""

    signs: np.ndarray

    def __post_init__(self) -> None:
        signs = np.asarray(self.signs, dtype=np.int8)
        if signs.ndim != 1 or signs.size == 0:
            raise ValueError("sign sequence must be a non-empty 1-d array")
        if not np.all(np.abs(signs) == 1):
            raise ValueError("sign sequence entries must be -1 or +1")
        signs.flags.writeable = False
        object.__setattr__(self, "signs", signs)

    @property
    def n(self) -> int:
        return int(self.signs.size)

    def __len__(self) -> int:
        return self.n

    def __eq__(self, other) -> bool:
        if not isinstance(other, SignSequence):
            return NotImplemented
        return np.array_equal(self.signs, other.signs)

    def __hash__(self) -> int:
        return hash(self.signs.tobytes())

    def partial_sums(self) -> np.ndarray:
        return np.cumsum(self.signs, dtype=np.int64)

    @classmethod
    def from_list(cls, values) -> SignSequence:
        return cls(np.asarray(values, dtype=np.int8))


def build_sign_sequence(x, rng: np.random.Generator | None = None) -> SignSequence:
    """Order ``x`` by strictly decreasing ``|x|`` and keep the signs.

    Tied absolute values are put in uniformly random order and exact zeros
    get a Rademacher sign, both drawn from ``rng``; with continuous data
    neither happens and ``rng`` is never touched.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("sample must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    a = np.abs(x)
    order = np.argsort(-a, kind="stable")
    a_sorted = a[order]
    tied = a_sorted[1:] == a_sorted[:-1]
    if tied.any():
        if rng is None:
            raise ValueError("tied absolute values need a random stream to break ties")
        # random secondary key inside each tied block
        key = rng.random(x.size)
        order = np.lexsort((key, -a))
        a_sorted = a[order]
    signs = np.where(x[order] > 0, 1, -1).astype(np.int8)
    zeros = a_sorted == 0
    if zeros.any():
        if rng is None:
            raise ValueError("zero observations need a random stream for their sign")
        signs[zeros] = np.where(rng.random(int(zeros.sum())) < 0.5, -1, 1)
    return SignSequence(signs)
