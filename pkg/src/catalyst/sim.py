"""Seeded simulation of restart strategies against a known runtime law.

All strategies run in the kernels of :mod:`catalyst._kernels`; this module
holds the strategy description, the per-trial seeding scheme and the
reference wide-search scheduler used to check the slot invariant.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from . import _kernels as K
from . import _law
from ._accel import USING_NUMBA
from .profile import RuntimeDistribution
from .ttl import ZETA2_CDF, RngStream

KINDS = ("single", "parallel", "fixed", "counter", "zeta2", "bin", "wide", "counter-cache")
SLOT_POLICIES = ("unit", "doubling")
DEFAULT_CAP = 3000


class StrategyError(ValueError):
    pass


@dataclass(frozen=True)
class StrategySpec:
    """A restart strategy and its parameters.

    ``kind`` uses the command-line names: single, parallel, fixed, counter,
    zeta2 (random zeta(2)), bin (random counter), wide, counter-cache.
    """

    kind: str
    workers: int = 1
    delta: int | None = None
    slot_policy: str = "doubling"
    capacity: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise StrategyError(f"unknown strategy {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.workers < 1:
            raise StrategyError("workers must be >= 1")
        if self.kind == "single" and self.workers != 1:
            raise StrategyError("single runs exactly one worker")
        if self.kind == "fixed" and (self.delta is None or self.delta < 1):
            raise StrategyError("fixed needs a TTL >= 1")
        if self.kind == "counter-cache" and (self.capacity is None or self.capacity < 1):
            raise StrategyError("counter-cache needs capacity >= 1")
        if self.slot_policy not in SLOT_POLICIES:
            raise StrategyError(f"slot policy must be one of {SLOT_POLICIES}")

    @property
    def label(self) -> str:
        if self.kind == "fixed":
            return f"fixed({self.delta})"
        if self.kind == "wide":
            return f"wide({self.slot_policy})"
        if self.kind == "counter-cache":
            return f"counter-cache({self.capacity})"
        return self.kind

    def _kernel_code(self) -> tuple[int, int]:
        return {
            "single": (K.SINGLE, 0),
            "parallel": (K.PARALLEL, 0),
            "fixed": (K.FIXED, self.delta or 0),
            "counter": (K.COUNTER, 0),
            "zeta2": (K.ZETA2, 0),
            "bin": (K.BIN, 0),
            "wide": (K.WIDE_UNIT if self.slot_policy == "unit" else K.WIDE_DOUBLING, 0),
            "counter-cache": (K.COUNTER_CACHE, self.capacity or 0),
        }[self.kind]


@dataclass(frozen=True)
class SimOutcome:
    success: bool
    time_to_success: int
    total_work: int
    attempts: int
    seed: int
    peak_cache: int = 0


@dataclass
class BatchResult:
    """Column view of a batch of trials."""

    spec: StrategySpec
    cap: int
    seeds: np.ndarray
    success: np.ndarray
    time: np.ndarray
    work: np.ndarray
    attempts: np.ndarray
    peak_cache: np.ndarray

    def __len__(self) -> int:
        return len(self.seeds)

    def outcomes(self) -> list[SimOutcome]:
        return [
            SimOutcome(bool(s), int(t), int(w), int(a), int(sd), int(p))
            for s, t, w, a, sd, p in zip(
                self.success, self.time, self.work, self.attempts, self.seeds, self.peak_cache
            )
        ]

    @property
    def failure_fraction(self) -> float:
        return float(1.0 - self.success.mean())


_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def trial_seeds(base_seed: int, trials: int) -> np.ndarray:
    """Per-trial 32-bit MT seeds from ``base_seed + trial_index`` (splitmix64 finalizer)."""
    with np.errstate(over="ignore"):
        z = (np.uint64(base_seed & 0xFFFFFFFFFFFFFFFF) + np.arange(trials, dtype=np.uint64)) & _MASK64
        z = z + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(32)).astype(np.int64)


def _run(dist: RuntimeDistribution, spec: StrategySpec, cap: int, seeds: np.ndarray) -> np.ndarray:
    if cap < 1:
        raise StrategyError("cap must be >= 1")
    code, param = spec._kernel_code()
    ticks, cum = dist.inversion_arrays()
    if ticks.size == 0:
        ticks = np.zeros(1, dtype=np.int64)
        cum = np.zeros(1, dtype=np.float64)  # every draw lands past it
    cap = min(int(cap), int(K.INF_TICK) - 1)
    if USING_NUMBA:
        return K.run_batch(code, param, spec.workers, ticks, cum, ZETA2_CDF, cap, seeds)
    # the interpreted kernels reseed numpy's global legacy stream
    saved = np.random.get_state()
    try:
        return K.run_batch(code, param, spec.workers, ticks, cum, ZETA2_CDF, cap, seeds)
    finally:
        np.random.set_state(saved)


def simulate_batch(
    dist: RuntimeDistribution, spec: StrategySpec, cap: int = DEFAULT_CAP, trials: int = 1, seed: int = 0
) -> BatchResult:
    seeds = trial_seeds(seed, trials)
    res = _run(dist, spec, cap, seeds)
    return BatchResult(
        spec=spec,
        cap=cap,
        seeds=np.arange(trials, dtype=np.int64) + seed,
        success=res[:, 0].astype(bool),
        time=res[:, 1],
        work=res[:, 2],
        attempts=res[:, 3],
        peak_cache=res[:, 4],
    )


def _seed_of(rng) -> int:
    return rng.seed if isinstance(rng, RngStream) else int(rng)


def simulate(dist: RuntimeDistribution, spec: StrategySpec, cap: int = DEFAULT_CAP, rng=0) -> SimOutcome:
    """One seeded trial of any strategy."""
    seed = _seed_of(rng)
    return simulate_batch(dist, spec, cap, 1, seed).outcomes()[0]


def simulate_ttl_strategy(dist, spec: StrategySpec, cap: int = DEFAULT_CAP, rng=0) -> SimOutcome:
    if spec.kind not in ("single", "fixed", "counter", "zeta2", "bin"):
        raise StrategyError(f"{spec.kind} is not a stop/start TTL strategy")
    return simulate(dist, spec, cap, rng)


def simulate_parallel_or(dist, p: int, cap: int = DEFAULT_CAP, rng=0) -> SimOutcome:
    return simulate(dist, StrategySpec("parallel", workers=p), cap, rng)


def simulate_wide(dist, cap: int = DEFAULT_CAP, rng=0, slot_policy: str = "doubling") -> SimOutcome:
    return simulate(dist, StrategySpec("wide", slot_policy=slot_policy), cap, rng)


def simulate_counter_cache(dist, capacity: int, cap: int = DEFAULT_CAP, rng=0) -> SimOutcome:
    return simulate(dist, StrategySpec("counter-cache", capacity=capacity), cap, rng)


def sample_runtime(dist: RuntimeDistribution, rng) -> float:
    """Inversion draw: atoms in increasing order, then +inf."""
    u = rng.random() if hasattr(rng, "random") else float(rng)
    return _law.invert(dist.ticks, _law.cumulative(dist.probs, dist.infinite_mass), u)


# --- reference wide-search scheduler ------------------------------------


@dataclass
class WideState:
    """Unit-slot wide search: copy i is granted a tick whenever floor(t/i) grows."""

    run_ticks: dict[int, int] = field(default_factory=dict)
    agenda: list[tuple[int, int]] = field(default_factory=list)
    now: int = 0

    @property
    def copies(self) -> int:
        return len(self.run_ticks)

    def slots(self) -> dict[int, int]:
        return dict(self.run_ticks)


def wide_next_slot(state: WideState) -> tuple[WideState, int]:
    """Grant the next 1-tick slot; mutates and returns ``state`` with the copy id."""
    fresh = state.copies + 1
    if not state.agenda or (fresh, fresh) < state.agenda[0]:
        key, cid = fresh, fresh
        state.run_ticks[cid] = 0
    else:
        key, cid = heapq.heappop(state.agenda)
    state.now = max(state.now, key)
    state.run_ticks[cid] += 1
    heapq.heappush(state.agenda, (cid * (state.run_ticks[cid] + 1), cid))
    return state, cid


def wide_rounds(until: int) -> Iterable[tuple[int, dict[int, int]]]:
    """Yield ``(t, slots)`` after every completed lead time t <= ``until``."""
    state = WideState()
    while True:
        fresh = state.copies + 1
        nxt = min(state.agenda[0][0], fresh) if state.agenda else fresh
        if nxt > state.now and state.now > 0:
            yield state.now, state.run_ticks
            if state.now >= until:
                return
        wide_next_slot(state)


def with_workers(spec: StrategySpec, workers: int) -> StrategySpec:
    return replace(spec, workers=workers)


def mc_sigma(values: np.ndarray) -> float:
    """Standard error of the mean of ``values``."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return math.inf
    return float(v.std(ddof=1) / math.sqrt(v.size))
