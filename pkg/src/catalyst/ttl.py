"""TTL sources: the Luby counter sequence, fixed thresholds, and the two
universal random laws (zeta(2) and BIN), plus k-front geometry."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ._accel import njit

MAX_TTL = 2**63 - 1
ZETA2_C = 6.0 / math.pi**2
ZETA2_TABLE_SIZE = 1 << 16


class TtlOverflowError(OverflowError):
    """A counter or TTL left the signed 64-bit range."""


def _check_ttl(value: int) -> int:
    if value > MAX_TTL:
        raise TtlOverflowError(f"TTL {value} exceeds the 64-bit limit")
    return value


def bit_length(t: int) -> int:
    """Number of binary digits of a positive integer, ``1 + floor(log2 t)``."""
    t = int(t)
    if t < 1:
        raise ValueError(f"bit_length is defined for t >= 1, got {t}")
    return t.bit_length()


# --- Luby counter search -------------------------------------------------


@dataclass(frozen=True)
class LubyState:
    counter: int = 0
    pending: tuple[int, ...] = ()


def _powers_dividing(c: int) -> tuple[int, ...]:
    out = []
    p = 1
    while c % p == 0:
        out.append(p)
        p <<= 1
    return tuple(out)


def luby_next(state: LubyState) -> tuple[LubyState, int]:
    """Emit the next counter-search TTL.

    When the batch for the current counter is exhausted the counter is
    incremented and every power of two dividing it is queued, smallest first.
    """
    counter, pending = state.counter, state.pending
    if not pending:
        if counter >= MAX_TTL:
            raise TtlOverflowError("Luby counter overflow")
        counter += 1
        pending = _powers_dividing(counter)
    return LubyState(counter, pending[1:]), pending[0]


class LubySequence:
    """Mutable iterator over the counter sequence (1, 1, 2, 1, 1, 2, 4, 1, ...)."""

    def __init__(self, state: LubyState | None = None):
        self.state = state or LubyState()

    def __iter__(self) -> Iterator[int]:
        return self

    def __next__(self) -> int:
        self.state, value = luby_next(self.state)
        return value


def luby_prefix(n: int) -> np.ndarray:
    """First ``n`` elements of the counter sequence as an int64 array."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return _luby_prefix_kernel(n)


@njit
def _luby_prefix_kernel(n):
    out = np.empty(n, dtype=np.int64)
    c = 0
    k = 0
    while k < n:
        c += 1
        p = 1
        while c % p == 0 and k < n:
            out[k] = p
            k += 1
            p *= 2
    return out


def fixed_next(delta: int) -> int:
    """The fixed-threshold strategy emits ``delta`` forever."""
    delta = int(delta)
    if delta < 1:
        raise ValueError(f"fixed TTL must be >= 1, got {delta}")
    return _check_ttl(delta)


# --- random TTL laws -----------------------------------------------------


class RngStream:
    """Seeded uniform source on [0, 1); equal seeds give equal streams."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.default_rng(self.seed)

    def random(self) -> float:
        return float(self._gen.random())

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


def _zeta2_cdf_table(n: int) -> np.ndarray:
    i = np.arange(1, n + 1, dtype=np.float64)
    terms = ZETA2_C / (i * i)
    return np.cumsum(terms)


ZETA2_CDF = _zeta2_cdf_table(ZETA2_TABLE_SIZE)


@njit
def zeta2_tail(n):
    """P[X > n] for X ~ zeta(2), valid for n >= 1.

    Euler-Maclaurin expansion of sum_{l>n} 1/l^2; the truncation error is
    below 1e-20 relative for the range it is used in (n beyond the table).
    """
    x = float(n)
    return ZETA2_C * (1.0 / x - 0.5 / (x * x) + 1.0 / (6.0 * x * x * x) - 1.0 / (30.0 * x**5))


@njit
def zeta2_invert(u, cdf):
    """Smallest i with CDF(i) >= u."""
    n = cdf.shape[0]
    if u <= cdf[n - 1]:
        return np.searchsorted(cdf, u) + 1
    s = 1.0 - u
    i = int(ZETA2_C / s - 0.5)
    if i <= n:
        i = n + 1
    while i > n + 1 and zeta2_tail(i - 1) <= s:
        i -= 1
    while zeta2_tail(i) > s:
        i += 1
    return i


def zeta2_from_uniform(u: float) -> int:
    """Invert the zeta(2) CDF at a uniform variate ``u`` in [0, 1)."""
    if not 0.0 <= u < 1.0:
        raise ValueError(f"u must lie in [0, 1), got {u}")
    return int(zeta2_invert(float(u), ZETA2_CDF))


def sample_zeta2(rng) -> int:
    """Draw i >= 1 with P[i] = (6/pi^2)/i^2."""
    return zeta2_from_uniform(rng.random())


def sample_zeta2_many(rng: RngStream, n: int) -> np.ndarray:
    u = rng.generator.random(n)
    out = np.searchsorted(ZETA2_CDF, u).astype(np.int64) + 1
    for j in np.flatnonzero(u > ZETA2_CDF[-1]):
        out[j] = zeta2_invert(float(u[j]), ZETA2_CDF)
    return out


def sample_bin(rng) -> int:
    """Draw R ~ BIN by growing a bit string that starts with 1.

    Each step finalizes with probability 1/2 (uniform < 1/2); otherwise a
    fair bit (uniform >= 1/2 means 1) is appended.
    """
    value = 1
    while rng.random() >= 0.5:
        value = 2 * value + (1 if rng.random() >= 0.5 else 0)
        _check_ttl(value)
    return value


def sample_bin_many(rng: RngStream, n: int) -> np.ndarray:
    """Vectorised BIN: length k ~ Geom(1/2), then uniform among k-bit integers."""
    gen = rng.generator
    k = gen.geometric(0.5, size=n).astype(np.int64)
    if n and k.max() > 63:
        raise TtlOverflowError("BIN sample exceeds 63 bits")
    low = np.left_shift(np.int64(1), k - 1)
    return low + gen.integers(0, low, dtype=np.int64)


# --- k-fronts ------------------------------------------------------------


@dataclass(frozen=True)
class KFront:
    bars: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.bars)


def k_front(ttls: Sequence[int]) -> KFront:
    """Sort a TTL prefix non-increasingly into a unit-width bar graph."""
    if isinstance(ttls, KFront):
        ttls = ttls.bars
    if len(ttls) == 0:
        raise ValueError("k_front needs at least one TTL")
    return KFront(tuple(sorted((int(t) for t in ttls), reverse=True)))


def front_dominates(front: KFront, point: tuple[float, float]) -> bool:
    """True iff the profile point ``(x, y)`` lies under the front."""
    x, y = point
    col = math.ceil(x)
    if col < 1 or col > len(front.bars):
        return False
    return front.bars[col - 1] >= y
