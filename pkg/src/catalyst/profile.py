"""Runtime laws and the full-information restart quantities computed from them.

For a threshold ``t`` on a runtime ``X``:

* proxy runtime ``R(t) = t / P[X <= t]``
* expected runtime of fixed-TTL restarts
  ``f(t) = E[X | X <= t] + t * P[X > t] / P[X <= t]``

Both are minimised on support atoms of a discrete law, so the optimisers
below only scan the atoms.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import _law

MASS_TOL = 1e-9
INF = math.inf


class DistributionError(ValueError):
    pass


class UndefinedThresholdError(ValueError):
    """P[X <= t] = 0, so neither f(t) nor R(t) exists."""


@dataclass(frozen=True)
class RuntimeDistribution:
    """Discrete runtime law over positive integer ticks plus a mass at +inf."""

    ticks: tuple[int, ...]
    probs: tuple[float, ...]
    infinite_mass: float = 0.0

    def __post_init__(self):
        if len(self.ticks) != len(self.probs):
            raise DistributionError("ticks and probs differ in length")
        if any(t < 1 for t in self.ticks):
            raise DistributionError("ticks must be positive integers")
        if list(self.ticks) != sorted(set(self.ticks)):
            raise DistributionError("ticks must be strictly increasing")
        if any(not 0.0 <= p <= 1.0 for p in (*self.probs, self.infinite_mass)):
            raise DistributionError("probabilities must lie in [0, 1]")
        total = math.fsum(self.probs) + self.infinite_mass
        if abs(total - 1.0) > MASS_TOL:
            raise DistributionError(f"total mass {total!r} differs from 1")
        if not self.ticks and self.infinite_mass < 1.0:
            raise DistributionError("no finite atoms")

    @classmethod
    def from_mapping(cls, mass: Mapping[float, float]) -> "RuntimeDistribution":
        """Build from ``{tick: p}``; a key of ``math.inf`` carries the never-halts mass."""
        inf_mass = 0.0
        finite = {}
        for k, p in mass.items():
            if k == INF:
                inf_mass += float(p)
            else:
                if int(k) != k:
                    raise DistributionError(f"tick {k!r} is not an integer")
                if p > 0:
                    finite[int(k)] = finite.get(int(k), 0.0) + float(p)
        ticks = tuple(sorted(finite))
        return cls(ticks, tuple(finite[t] for t in ticks), inf_mass)

    @classmethod
    def from_text(cls, text: str) -> "RuntimeDistribution":
        try:
            ticks, probs, inf_mass = _law.parse_law(text)
        except _law.LawFormatError as exc:
            raise DistributionError(str(exc)) from None
        return cls(tuple(ticks), tuple(probs), inf_mass)

    @classmethod
    def load(cls, path) -> "RuntimeDistribution":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        lines = [f"{t} {p!r}" for t, p in zip(self.ticks, self.probs)]
        if self.infinite_mass > 0:
            lines.append(f"inf {self.infinite_mass!r}")
        return "\n".join(lines) + "\n"

    def as_mapping(self) -> dict:
        out = dict(zip(self.ticks, self.probs))
        if self.infinite_mass > 0:
            out[INF] = self.infinite_mass
        return out

    @property
    def has_finite_atom(self) -> bool:
        return len(self.ticks) > 0

    def cdf(self, t: float) -> float:
        """P[X <= t]."""
        return math.fsum(p for s, p in zip(self.ticks, self.probs) if s <= t)

    def scaled(self, s: int) -> "RuntimeDistribution":
        return RuntimeDistribution(tuple(t * s for t in self.ticks), self.probs, self.infinite_mass)

    def inversion_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """``(ticks, cumulative)`` arrays for inversion sampling in the kernels."""
        cum = _law.cumulative(self.probs, self.infinite_mass)
        return np.asarray(self.ticks, dtype=np.int64), np.asarray(cum, dtype=np.float64)


def _below(dist: RuntimeDistribution, t: float):
    idx = [j for j, s in enumerate(dist.ticks) if s <= t]
    return [dist.ticks[j] for j in idx], [dist.probs[j] for j in idx]


def proxy_runtime(dist: RuntimeDistribution, t: float) -> float:
    p = dist.cdf(t)
    if p <= 0.0:
        raise UndefinedThresholdError(f"P[X <= {t}] = 0")
    return t / p


def expected_ttl_runtime(dist: RuntimeDistribution, t: float) -> float:
    """Expected time to first success when restarting every ``t`` ticks."""
    ticks, probs = _below(dist, t)
    p = math.fsum(probs)
    if p <= 0.0:
        raise UndefinedThresholdError(f"P[X <= {t}] = 0")
    cond_mean = math.fsum(s * q for s, q in zip(ticks, probs)) / p
    return cond_mean + (1.0 - p) / p * t


def _argmin_on_support(dist, fn):
    if not dist.has_finite_atom:
        raise UndefinedThresholdError("law has no finite atom")
    best_t, best_v = None, INF
    for t in dist.ticks:
        v = fn(dist, t)
        # keep the earlier (smaller) threshold unless strictly better beyond rounding
        if best_t is None or v < best_v - 1e-12 * abs(best_v):
            best_t, best_v = t, v
    return best_t, best_v


def optimal_threshold(dist: RuntimeDistribution) -> tuple[int, float]:
    """``(delta, f(delta))`` minimising the fixed-TTL expected runtime."""
    return _argmin_on_support(dist, expected_ttl_runtime)


@dataclass(frozen=True)
class Profile:
    inv_p: float
    t_star: int
    work: float
    opt_threshold: int
    opt_expected: float


def compute_profile(dist: RuntimeDistribution) -> Profile:
    t_star, _ = _argmin_on_support(dist, proxy_runtime)
    inv_p = 1.0 / dist.cdf(t_star)
    delta, opt = optimal_threshold(dist)
    return Profile(inv_p=inv_p, t_star=t_star, work=t_star * inv_p, opt_threshold=delta, opt_expected=opt)


# --- empirical data ------------------------------------------------------


@dataclass
class SampleSet:
    successes: list[int] = field(default_factory=list)
    censored_at: int | None = None
    n_censored: int = 0

    def __post_init__(self):
        if self.censored_at is not None and any(s > self.censored_at for s in self.successes):
            raise DistributionError("a success exceeds the censoring cap")

    @property
    def n(self) -> int:
        return len(self.successes) + self.n_censored

    @property
    def censored_fraction(self) -> float:
        return self.n_censored / self.n if self.n else 0.0


def empirical_distribution(samples: SampleSet) -> RuntimeDistribution:
    """Frequency law of the successes; censored runs are treated as never halting."""
    if not samples.successes:
        raise DistributionError("no successful runs in the sample")
    n = samples.n
    counts: dict[int, int] = {}
    for s in samples.successes:
        s = int(s)
        if s < 1:
            raise DistributionError(f"runtime {s} is not a positive tick count")
        counts[s] = counts.get(s, 0) + 1
    ticks = tuple(sorted(counts))
    return RuntimeDistribution(ticks, tuple(counts[t] / n for t in ticks), samples.n_censored / n)


def read_samples(path) -> SampleSet:
    """Read a ``runtime_ticks,censored`` CSV."""
    successes: list[int] = []
    censored: list[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["runtime_ticks", "censored"]:
            raise DistributionError(f"{path}: expected header 'runtime_ticks,censored'")
        for lineno, row in enumerate(reader, 2):
            try:
                rt = int(float(row["runtime_ticks"]))
                flag = int(row["censored"])
            except (TypeError, ValueError):
                raise DistributionError(f"{path}:{lineno}: malformed row {row!r}") from None
            if flag not in (0, 1):
                raise DistributionError(f"{path}:{lineno}: censored must be 0 or 1")
            (censored if flag else successes).append(rt)
    cap = max(censored) if censored else None
    return SampleSet(successes, cap, len(censored))


def write_samples(path, runtimes: Sequence[int], censored: Sequence[bool]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["runtime_ticks", "censored"])
        for r, c in zip(runtimes, censored):
            w.writerow([int(r), int(bool(c))])
