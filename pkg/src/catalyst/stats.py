"""Success-only descriptive statistics in the Succs/Fails/Mean/Median/... layout."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

CSV_HEADER = ["simulation", "n", "succs", "fails", "mean", "median", "std_dev", "min", "max"]


@dataclass(frozen=True)
class Report:
    label: str
    n: int
    successes: int
    failures: int
    mean: float | None = None
    median: float | None = None
    std_dev: float | None = None
    min: float | None = None
    max: float | None = None

    def csv_row(self) -> list[str]:
        def fmt(v):
            return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.2f}"

        return [self.label, str(self.n), str(self.successes), str(self.failures),
                fmt(self.mean), fmt(self.median), fmt(self.std_dev), fmt(self.min), fmt(self.max)]


def alpha_median(samples: Sequence[float], alpha: float) -> float:
    """Smallest t with P[X < t] <= alpha and P[X > t] <= 1 - alpha (empirical law)."""
    xs = sorted(samples)
    if not xs:
        raise ValueError("alpha_median of an empty sample")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    n = len(xs)
    eps = 1e-12 * n
    below = 0
    i = 0
    while i < n:
        t = xs[i]
        j = i
        while j < n and xs[j] == t:
            j += 1
        above = n - j
        if below <= alpha * n + eps and above <= (1.0 - alpha) * n + eps:
            return t
        below = j
        i = j
    return xs[-1]


def _outcome(rec, cap):
    """Normalise a record to ``(succeeded, time)``."""
    if isinstance(rec, tuple):
        ok, t = rec
    elif hasattr(rec, "elapsed_ticks"):
        ok, t = rec.success, rec.elapsed_ticks
    elif hasattr(rec, "time_to_success"):
        ok, t = rec.success, rec.time_to_success
    elif rec is None:
        ok, t = False, None
    else:
        ok, t = True, rec
    if ok and cap is not None and t is not None and t > cap:
        ok = False
    return bool(ok), t


def summarize(label: str, records: Iterable, cap: float | None = None) -> Report:
    """Counts over all records, statistics over the successful ones only.

    A record is an ``ExperimentRecord``, a ``SimOutcome``, a ``(success,
    time)`` pair, a bare success time, or ``None`` for a failure.
    """
    times = []
    n = 0
    for rec in records:
        n += 1
        ok, t = _outcome(rec, cap)
        if ok:
            times.append(float(t))
    k = len(times)
    if k == 0:
        return Report(label, n, 0, n)
    mean = math.fsum(times) / k
    std = math.sqrt(math.fsum((x - mean) ** 2 for x in times) / (k - 1)) if k > 1 else math.nan
    return Report(label, n, k, n - k, mean, alpha_median(times, 0.5), std, min(times), max(times))


def summarize_batch(label: str, batch) -> Report:
    """Report for a :class:`catalyst.sim.BatchResult` without materialising outcomes."""
    return summarize(label, zip(batch.success.tolist(), batch.time.tolist()), batch.cap)


def reports_csv(reports: Iterable[Report]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def write_reports_csv(path, reports: Iterable[Report]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(reports_csv(reports))
