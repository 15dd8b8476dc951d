"""Supervise real processes under restart strategies.

Each run lives in its own process group and working directory. The
supervised program signals success by writing the file named in
``CATALYST_SUCCESS_FILE`` (or, in exit-code mode, by exiting 0). Expired
runs are killed (stop/start strategies) or frozen with SIGSTOP and kept for
later extension (wide search, counter + cache).
"""
from __future__ import annotations

import heapq
import itertools
import json
import logging
import math
import os
import shutil
import signal
import subprocess
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .sim import StrategySpec
from .ttl import LubySequence, RngStream, sample_bin, sample_zeta2

log = logging.getLogger(__name__)

ENV_WORKDIR = "CATALYST_WORKDIR"
ENV_SUCCESS_FILE = "CATALYST_SUCCESS_FILE"
ENV_SPAWN_TIME = "CATALYST_SPAWN_TIME"
ENV_TICK = "CATALYST_TICK"
ENV_RUN_SEED = "CATALYST_RUN_SEED"

SUCCESS_FILENAME = "CATALYST_SUCCESS"
KILL_GRACE = 2.0
MAX_POLL = 0.1

SUSPEND_SUPPORTED = os.name == "posix" and hasattr(signal, "SIGSTOP")

RUNNING, SUSPENDED, SUCCEEDED, KILLED = "running", "suspended", "succeeded", "killed"
KILL_ON_EXPIRY, SUSPEND_ON_EXPIRY = "kill", "suspend"
SENTINEL, EXIT_CODE = "sentinel", "exit-code"


class ExecutorError(RuntimeError):
    pass


def default_workers() -> int:
    """Three quarters of the hardware threads, at least one."""
    return max(1, (3 * (os.cpu_count() or 1)) // 4)


def poll_interval(tick: float) -> float:
    return min(MAX_POLL, tick / 20.0)


@dataclass(eq=False)
class ManagedRun:
    popen: subprocess.Popen
    workdir: Path
    success_file: Path
    run_seed: int = 0
    accumulated_ticks: int = 0
    accumulated_seconds: float = 0.0
    status: str = RUNNING
    success_mode: str = SENTINEL
    _logs: list = field(default_factory=list, repr=False)

    @property
    def pgid(self) -> int:
        return self.popen.pid


def spawn_run(
    command: Sequence[str],
    workdir: Path | str,
    *,
    tick: float = 1.0,
    run_seed: int = 0,
    success_mode: str = SENTINEL,
    extra_env: dict | None = None,
) -> ManagedRun:
    """Start ``command`` in a fresh process group with ``workdir`` as its cwd."""
    workdir = Path(workdir).resolve()
    workdir.mkdir(parents=True, exist_ok=True)
    success_file = workdir / SUCCESS_FILENAME
    success_file.unlink(missing_ok=True)
    env = dict(os.environ)
    env.update(extra_env or {})
    env[ENV_WORKDIR] = str(workdir)
    env[ENV_SUCCESS_FILE] = str(success_file)
    env[ENV_TICK] = repr(float(tick))
    env[ENV_RUN_SEED] = str(run_seed)
    env[ENV_SPAWN_TIME] = repr(time.time())
    out = open(workdir / "stdout.log", "wb")
    err = open(workdir / "stderr.log", "wb")
    try:
        popen = subprocess.Popen(
            list(command), cwd=workdir, env=env, stdout=out, stderr=err,
            stdin=subprocess.DEVNULL, start_new_session=True,
        )
    except OSError as exc:
        out.close()
        err.close()
        raise ExecutorError(f"cannot spawn {command[0]!r}: {exc}") from exc
    return ManagedRun(popen, workdir, success_file, run_seed=run_seed, success_mode=success_mode, _logs=[out, err])


def detect_success(run: ManagedRun) -> bool:
    if run.success_file.exists():
        return True
    return run.success_mode == EXIT_CODE and run.popen.poll() == 0


def _signal_group(run: ManagedRun, sig) -> None:
    try:
        os.killpg(run.pgid, sig)
    except ProcessLookupError:
        pass
    except OSError as exc:
        _force_kill(run)
        raise ExecutorError(f"signal {sig} to group {run.pgid} failed: {exc}") from exc


def _force_kill(run: ManagedRun) -> None:
    try:
        os.killpg(run.pgid, signal.SIGKILL)
    except OSError:
        pass
    try:
        run.popen.wait(timeout=KILL_GRACE)
    except subprocess.TimeoutExpired:
        pass


def suspend_run(run: ManagedRun) -> None:
    if not SUSPEND_SUPPORTED:
        raise ExecutorError("suspend/resume is not available on this platform")
    _signal_group(run, signal.SIGSTOP)
    run.status = SUSPENDED


def resume_run(run: ManagedRun) -> None:
    if not SUSPEND_SUPPORTED:
        raise ExecutorError("suspend/resume is not available on this platform")
    _signal_group(run, signal.SIGCONT)
    run.status = RUNNING


def kill_run(run: ManagedRun, grace: float = KILL_GRACE) -> None:
    """SIGTERM the whole group, SIGKILL after ``grace`` seconds, reap the leader."""
    if run.popen.returncode is None:
        _signal_group(run, signal.SIGTERM)
        if SUSPEND_SUPPORTED:
            # stopped processes only act on SIGTERM once continued
            _signal_group(run, signal.SIGCONT)
        try:
            run.popen.wait(timeout=grace)
        except subprocess.TimeoutExpired:
            _signal_group(run, signal.SIGKILL)
            run.popen.wait()
    # stragglers that outlived the leader
    try:
        os.killpg(run.pgid, signal.SIGKILL)
    except OSError:
        pass
    for fh in run._logs:
        fh.close()
    run._logs.clear()
    if run.status != SUCCEEDED:
        run.status = KILLED


def _live_members_procfs(pgid: int) -> bool | None:
    """True if a non-zombie process belongs to ``pgid``; None without /proc."""
    proc = Path("/proc")
    if not proc.is_dir():
        return None
    for entry in proc.iterdir():
        if not entry.name.isdigit():
            continue
        try:
            stat = (entry / "stat").read_text()
        except OSError:
            continue
        # fields after the parenthesised command: state ppid pgrp ...
        fields = stat[stat.rfind(")") + 2 :].split()
        if len(fields) > 2 and int(fields[2]) == pgid and fields[0] not in ("Z", "X"):
            return True
    return False


def group_alive(pgid: int) -> bool:
    """Whether any live (non-zombie) process remains in group ``pgid``.

    Killed orphans are reparented to init; an init that never reaps leaves
    zombies that still answer signal 0, so /proc is consulted when present.
    """
    try:
        os.killpg(pgid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    live = _live_members_procfs(pgid)
    return True if live is None else live


def _ticks_used(seconds: float, tick: float) -> int:
    return max(1, math.ceil(seconds / tick - 1e-9))


def enforce_ttl(
    run: ManagedRun,
    grant: int,
    mode: str = KILL_ON_EXPIRY,
    *,
    tick: float = 1.0,
    stop: threading.Event | None = None,
    deadline: float | None = None,
) -> str:
    """Let ``run`` execute for up to ``grant`` more ticks.

    Returns ``"succeeded"``, ``"expired"``, ``"exited"`` (terminated without
    success) or ``"stopped"`` (``stop`` was set or ``deadline`` passed first).
    Succeeded and exited runs are reaped; an expired run is killed or
    suspended according to ``mode``; a stopped run is left to the caller.
    """
    if grant < 1:
        raise ValueError(f"grant must be >= 1 tick, got {grant}")
    if run.status == SUSPENDED:
        resume_run(run)
    elif run.status != RUNNING:
        raise ValueError(f"cannot grant time to a {run.status} run")
    poll = poll_interval(tick)
    t0 = time.monotonic()
    end = t0 + grant * tick
    truncated = deadline is not None and deadline < end
    if truncated:
        end = deadline

    def charge(ticks=None):
        used = time.monotonic() - t0
        run.accumulated_seconds += used
        run.accumulated_ticks += ticks if ticks is not None else min(grant, _ticks_used(used, tick))

    while True:
        if detect_success(run):
            charge()
            run.status = SUCCEEDED
            kill_run(run)
            return "succeeded"
        if run.popen.poll() is not None:
            charge()
            kill_run(run)
            return "exited"
        now = time.monotonic()
        if now >= end:
            break
        if stop is not None and stop.is_set():
            charge()
            return "stopped"
        time.sleep(min(poll, end - now))
    if detect_success(run):
        charge()
        run.status = SUCCEEDED
        kill_run(run)
        return "succeeded"
    if truncated:
        charge()
        return "stopped"
    charge(grant)
    if mode == SUSPEND_ON_EXPIRY:
        suspend_run(run)
    else:
        kill_run(run)
    return "expired"


# --- assignment dispensers ----------------------------------------------


@dataclass
class Assignment:
    ttl: int
    resumed: ManagedRun | None = None

    @property
    def grant(self) -> int:
        return self.ttl - (self.resumed.accumulated_ticks if self.resumed else 0)


class Dispenser:
    """Hands out TTLs (and possibly suspended runs) to workers."""

    suspends = False

    def __init__(self):
        self.lock = threading.Lock()

    def next_assignment(self, rng: RngStream) -> Assignment:
        raise NotImplementedError

    def park(self, run: ManagedRun) -> list[ManagedRun]:
        """Store an expired suspended run; returns runs evicted to make room."""
        return [run]

    def drain(self) -> list[ManagedRun]:
        return []


class FixedDispenser(Dispenser):
    def __init__(self, ttl: int):
        super().__init__()
        self.ttl = ttl

    def next_assignment(self, rng):
        return Assignment(self.ttl)


class CounterDispenser(Dispenser):
    def __init__(self):
        super().__init__()
        self.seq = LubySequence()

    def next_assignment(self, rng):
        with self.lock:
            return Assignment(next(self.seq))


class RandomDispenser(Dispenser):
    """Worker-local draws; nothing shared."""

    def __init__(self, sampler):
        super().__init__()
        self.sampler = sampler

    def next_assignment(self, rng):
        return Assignment(self.sampler(rng))


class Cache:
    """Bounded pool of suspended runs ordered by accumulated ticks."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("cache capacity must be >= 1")
        self.capacity = capacity
        self.entries: list[ManagedRun] = []
        self.peak = 0

    def __len__(self):
        return len(self.entries)

    def take_below(self, ttl: int) -> ManagedRun | None:
        """Remove and return the heaviest run with accumulated ticks < ``ttl``."""
        best = None
        for run in self.entries:
            if run.accumulated_ticks < ttl and (best is None or run.accumulated_ticks > best.accumulated_ticks):
                best = run
        if best is not None:
            self.entries.remove(best)
        return best

    def push(self, run: ManagedRun) -> list[ManagedRun]:
        if len(self.entries) < self.capacity:
            self.entries.append(run)
            self.peak = max(self.peak, len(self.entries))
            return []
        lightest = min(self.entries, key=lambda r: r.accumulated_ticks)
        if lightest.accumulated_ticks >= run.accumulated_ticks:
            return [run]
        self.entries.remove(lightest)
        self.entries.append(run)
        return [lightest]

    def drain(self) -> list[ManagedRun]:
        out, self.entries = self.entries, []
        return out


class CounterCacheDispenser(Dispenser):
    suspends = True

    def __init__(self, capacity: int):
        super().__init__()
        self.seq = LubySequence()
        self.cache = Cache(capacity)

    def next_assignment(self, rng):
        with self.lock:
            ttl = next(self.seq)
            return Assignment(ttl, self.cache.take_below(ttl))

    def park(self, run):
        with self.lock:
            return self.cache.push(run)

    def drain(self):
        with self.lock:
            return self.cache.drain()


class WideDispenser(Dispenser):
    """Doubling wide search: copy i with r ticks is next due at lead time i * 2r.

    Fresh copy i is due at time i and first runs for one tick. At most
    ``max_suspended`` runs stay frozen; beyond that the lightest is killed.
    """

    suspends = True

    def __init__(self, max_suspended: int):
        super().__init__()
        self.max_suspended = max_suspended
        self.agenda: list[tuple[int, int]] = []
        self.runs: dict[int, ManagedRun] = {}
        self.copy_of: dict[int, int] = {}
        self.copies = 0
        self._pending_copy: dict[int, int] = {}

    def next_assignment(self, rng):
        with self.lock:
            fresh = self.copies + 1
            if not self.agenda or (fresh, fresh) < self.agenda[0]:
                self.copies += 1
                self._pending_copy[threading.get_ident()] = fresh
                return Assignment(1)
            _, cid = heapq.heappop(self.agenda)
            run = self.runs.pop(cid)
            return Assignment(max(1, 2 * run.accumulated_ticks), run)

    def bind(self, run: ManagedRun) -> None:
        """Attach a freshly spawned run to the copy id handed to this thread."""
        with self.lock:
            cid = self._pending_copy.pop(threading.get_ident(), None)
            if cid is not None:
                self.copy_of[id(run)] = cid

    def park(self, run):
        with self.lock:
            cid = self.copy_of[id(run)]
            self.runs[cid] = run
            heapq.heappush(self.agenda, (cid * 2 * run.accumulated_ticks, cid))
            evicted = []
            while len(self.runs) > self.max_suspended:
                victim = min(self.runs, key=lambda c: (self.runs[c].accumulated_ticks, c))
                evicted.append(self.runs.pop(victim))
                self.agenda = [(k, c) for k, c in self.agenda if c != victim]
                heapq.heapify(self.agenda)
            return evicted

    def drain(self):
        with self.lock:
            out = list(self.runs.values())
            self.runs.clear()
            self.agenda.clear()
            return out


class SingleDispenser(Dispenser):
    def __init__(self, cap: int):
        super().__init__()
        self.cap = cap

    def next_assignment(self, rng):
        return Assignment(self.cap)


def make_dispenser(spec: StrategySpec, cap_ticks: int, workers: int) -> Dispenser:
    if spec.kind in ("wide", "counter-cache") and not SUSPEND_SUPPORTED:
        raise ExecutorError(f"{spec.kind} needs suspend/resume, which this platform lacks")
    if spec.kind in ("single", "parallel"):
        return SingleDispenser(cap_ticks)
    if spec.kind == "fixed":
        return FixedDispenser(spec.delta)
    if spec.kind == "counter":
        return CounterDispenser()
    if spec.kind == "zeta2":
        return RandomDispenser(sample_zeta2)
    if spec.kind == "bin":
        return RandomDispenser(sample_bin)
    if spec.kind == "counter-cache":
        return CounterCacheDispenser(spec.capacity)
    if spec.kind == "wide":
        return WideDispenser(4 * workers)
    raise ExecutorError(f"unknown strategy {spec.kind!r}")


def next_assignment(dispenser: Dispenser, rng: RngStream) -> Assignment:
    return dispenser.next_assignment(rng)


# --- experiments ---------------------------------------------------------


@dataclass
class ExperimentRecord:
    strategy: str
    seed: int
    success: bool
    elapsed_ticks: float | None
    cap: int
    attempts: list[dict] = field(default_factory=list)
    wall_seconds: float = 0.0
    error: str | None = None
    pgids: list[int] = field(default_factory=list, repr=False)
    peak_suspended: int = 0

    @property
    def outcome(self) -> dict:
        if self.success:
            return {"kind": "success", "elapsed_ticks": self.elapsed_ticks}
        return {"kind": "failure", "cap": self.cap}

    def to_json(self) -> str:
        return json.dumps({
            "strategy": self.strategy,
            "seed": self.seed,
            "outcome": self.outcome,
            "attempts": self.attempts,
            "wall_seconds": round(self.wall_seconds, 6),
            "error": self.error,
        })


@dataclass
class _Trial:
    spec: StrategySpec
    command: Sequence[str]
    workers: int
    cap_ticks: int
    seed: int
    tick: float
    workdir: Path
    success_mode: str
    stop: threading.Event = field(default_factory=threading.Event)
    lock: threading.Lock = field(default_factory=threading.Lock)
    success_at: float | None = None
    attempts: list = field(default_factory=list)
    pgids: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    run_counter: itertools.count = field(default_factory=itertools.count)


def _worker(trial: _Trial, dispenser: Dispenser, index: int, t0: float, deadline: float) -> None:
    rng = RngStream(trial.seed * 7919 + index)
    mode = SUSPEND_ON_EXPIRY if dispenser.suspends else KILL_ON_EXPIRY
    while not trial.stop.is_set() and time.monotonic() < deadline:
        a = dispenser.next_assignment(rng)
        run = a.resumed
        if run is None:
            with trial.lock:
                k = next(trial.run_counter)
                if trial.stop.is_set():
                    return
            try:
                run = spawn_run(
                    trial.command, trial.workdir / f"run-{k:05d}", tick=trial.tick,
                    run_seed=trial.seed * 1_000_003 + k, success_mode=trial.success_mode,
                )
            except ExecutorError as exc:
                with trial.lock:
                    trial.errors.append(str(exc))
                trial.stop.set()
                return
            with trial.lock:
                trial.pgids.append(run.pgid)
            if isinstance(dispenser, WideDispenser):
                dispenser.bind(run)
        grant = a.ttl - run.accumulated_ticks
        try:
            result = enforce_ttl(run, grant, mode, tick=trial.tick, stop=trial.stop, deadline=deadline)
        except ExecutorError as exc:
            with trial.lock:
                trial.errors.append(str(exc))
            result = "error"
        with trial.lock:
            trial.attempts.append({"worker": index, "ttl": a.ttl, "granted": grant,
                                   "resumed": a.resumed is not None, "result": result})
        if result == "succeeded":
            with trial.lock:
                if trial.success_at is None:
                    trial.success_at = time.monotonic()
            trial.stop.set()
            return
        if isinstance(dispenser, SingleDispenser):
            # one run per worker, never restarted
            if result in ("stopped", "error"):
                kill_run(run)
            return
        if result == "expired" and mode == SUSPEND_ON_EXPIRY:
            for victim in dispenser.park(run):
                kill_run(victim)
        elif result in ("stopped", "error"):
            kill_run(run)


def run_trial(
    command: Sequence[str],
    spec: StrategySpec,
    *,
    workers: int = 1,
    cap_ticks: int = 3000,
    seed: int = 0,
    tick: float = 1.0,
    workdir: Path,
    success_mode: str = SENTINEL,
) -> ExperimentRecord:
    if spec.kind == "single":
        workers = 1
    trial = _Trial(spec, command, workers, cap_ticks, seed, tick, Path(workdir), success_mode)
    dispenser = make_dispenser(spec, cap_ticks, workers)
    t0 = time.monotonic()
    deadline = t0 + cap_ticks * tick
    threads = [threading.Thread(target=_worker, args=(trial, dispenser, i, t0, deadline), daemon=True)
               for i in range(workers)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    for run in dispenser.drain():
        kill_run(run)
    peak = dispenser.cache.peak if isinstance(dispenser, CounterCacheDispenser) else 0
    wall = time.monotonic() - t0
    success = trial.success_at is not None
    return ExperimentRecord(
        strategy=spec.label,
        seed=seed,
        success=success,
        elapsed_ticks=(trial.success_at - t0) / tick if success else None,
        cap=cap_ticks,
        attempts=trial.attempts,
        wall_seconds=wall,
        error="; ".join(trial.errors) or None,
        pgids=trial.pgids,
        peak_suspended=peak,
    )


def run_experiment(
    command: Sequence[str],
    spec: StrategySpec,
    *,
    workers: int | None = None,
    cap_ticks: int = 3000,
    trials: int = 1,
    seed: int = 0,
    tick: float = 1.0,
    workdir_root: Path | str | None = None,
    keep_failed: bool = False,
    success_mode: str = SENTINEL,
    concurrent_trials: int = 1,
    log_path: Path | str | None = None,
) -> list[ExperimentRecord]:
    """Run ``trials`` independent trials; trial i uses seed ``seed + i``."""
    workers = workers or default_workers()
    if workers < 1 or cap_ticks < 1:
        raise ValueError("workers and cap_ticks must be >= 1")
    own_root = workdir_root is None
    root = Path(tempfile.mkdtemp(prefix="catalyst-")) if own_root else Path(workdir_root)
    root.mkdir(parents=True, exist_ok=True)
    log_lock = threading.Lock()

    def one(i: int) -> ExperimentRecord:
        tdir = root / f"trial-{seed + i}"
        try:
            rec = run_trial(command, spec, workers=workers, cap_ticks=cap_ticks, seed=seed + i,
                            tick=tick, workdir=tdir, success_mode=success_mode)
        except (ExecutorError, OSError) as exc:
            rec = ExperimentRecord(spec.label, seed + i, False, None, cap_ticks, error=str(exc))
        if rec.success or not keep_failed:
            shutil.rmtree(tdir, ignore_errors=True)
        if log_path is not None:
            with log_lock, open(log_path, "a", encoding="utf-8") as fh:
                fh.write(rec.to_json() + "\n")
        return rec

    try:
        if concurrent_trials <= 1:
            records = [one(i) for i in range(trials)]
        else:
            with ThreadPoolExecutor(max_workers=concurrent_trials) as pool:
                records = list(pool.map(one, range(trials)))
    finally:
        if own_root and not keep_failed:
            shutil.rmtree(root, ignore_errors=True)
    return records
