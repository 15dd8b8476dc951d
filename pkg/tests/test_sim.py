import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from catalyst import sim
from catalyst.profile import RuntimeDistribution, expected_ttl_runtime
from catalyst.sim import StrategyError, StrategySpec, simulate, simulate_batch, trial_seeds
from catalyst.ttl import luby_prefix

pytestmark = pytest.mark.usefixtures("warm_kernels")


def ref_draw(rs, dist):
    """Inversion draw against an independently built cumulative table."""
    u = rs.random_sample()
    acc = 0.0
    for t, p in zip(dist.ticks, dist.probs):
        acc += p
        if u < acc:
            return t
    return math.inf


def ref_counter(dist, seed, cap):
    """Single-worker counter search, charged TTL on failure and X on success."""
    rs = np.random.RandomState(seed)
    work = 0
    for n, t in enumerate(luby_prefix(4000).tolist(), 1):
        x = ref_draw(rs, dist)
        step = min(x, t)
        if work + step > cap:
            return False, cap, n
        work += step
        if x <= t:
            return True, work, n
    raise AssertionError("sequence too short")


def ref_counter_cache(dist, seed, cap, capacity):
    rs = np.random.RandomState(seed)
    cache = []  # [accumulated, hidden]
    work, peak = 0, 0
    for n, t in enumerate(luby_prefix(4000).tolist(), 1):
        below = [c for c in cache if c[0] < t]
        if below:
            run = max(below, key=lambda c: c[0])
            cache.remove(run)
            acc, x = run
        else:
            acc, x = 0, ref_draw(rs, dist)
        if x <= t:
            if work + x - acc > cap:
                return False, cap, peak
            return True, work + x - acc, peak
        if work + t - acc > cap:
            return False, cap, peak
        work += t - acc
        if len(cache) < capacity:
            cache.append([t, x])
        else:
            # lightest dies; ties kill the newcomer, then the oldest parked run
            oldest_light = min(cache, key=lambda c: c[0])
            if oldest_light[0] < t:
                cache.remove(oldest_light)
                cache.append([t, x])
        peak = max(peak, len(cache))
    raise AssertionError("sequence too short")


MIXED = RuntimeDistribution.from_mapping({2: 0.1, 7: 0.2, 40: 0.1, math.inf: 0.6})


def test_trial_seeds_are_deterministic_and_distinct():
    a = trial_seeds(5, 1000)
    assert np.array_equal(a, trial_seeds(5, 1000))
    assert len(set(a.tolist())) == 1000
    assert a.min() >= 0 and a.max() < 2**32
    assert np.array_equal(trial_seeds(5, 10)[3:], trial_seeds(8, 7))


def test_parallel_matches_reference_replay(example_law):
    batch = simulate_batch(example_law, StrategySpec("parallel", workers=64), cap=3000, trials=300, seed=9)
    for s, ok, t in zip(trial_seeds(9, 300), batch.success, batch.time):
        rs = np.random.RandomState(int(s))
        best = min(ref_draw(rs, example_law) for _ in range(64))
        assert ok == (best <= 3000)
        assert t == (best if ok else 3000)


@pytest.mark.parametrize("cap", [20, 300])
def test_counter_matches_reference(cap):
    batch = simulate_batch(MIXED, StrategySpec("counter"), cap=cap, trials=300, seed=3)
    for s, ok, t, a in zip(trial_seeds(3, 300), batch.success, batch.work, batch.attempts):
        rok, rt, ra = ref_counter(MIXED, int(s), cap)
        assert (bool(ok), int(t)) == (rok, rt)
        if rok:
            assert a == ra


@pytest.mark.parametrize("capacity", [1, 2, 4])
def test_counter_cache_matches_reference(capacity):
    spec = StrategySpec("counter-cache", capacity=capacity)
    batch = simulate_batch(MIXED, spec, cap=400, trials=300, seed=4)
    for s, ok, w, pk in zip(trial_seeds(4, 300), batch.success, batch.work, batch.peak_cache):
        assert (bool(ok), int(w), int(pk)) == ref_counter_cache(MIXED, int(s), 400, capacity)


def test_counter_on_deterministic_law():
    d = RuntimeDistribution.from_mapping({5: 1.0})
    out = simulate(d, StrategySpec("counter"), cap=3000, rng=0)
    # TTLs 1,1,2,1,1,2,4,1,1,2,1,1,2,4 fail, then 8 succeeds after 5 ticks
    assert out.success and out.attempts == 15
    assert out.total_work == sum(luby_prefix(14).tolist()) + 5 == 29


def test_counter_cache_on_deterministic_law():
    d = RuntimeDistribution.from_mapping({5: 1.0})
    out = simulate(d, StrategySpec("counter-cache", capacity=4), cap=3000, rng=0)
    assert out.success
    assert out.total_work <= 29
    assert out.peak_cache <= 4


def test_fixed_mean_matches_closed_form():
    d = RuntimeDistribution.from_mapping({1: 0.5, 10: 0.5})
    b = simulate_batch(d, StrategySpec("fixed", delta=1), cap=3000, trials=20000, seed=1)
    assert b.success.all()
    assert abs(b.time.mean() - expected_ttl_runtime(d, 1)) < 4 * sim.mc_sigma(b.time)


def test_parallel_two_workers_mean():
    # min of two draws is 1 w.p. 3/4, else 10
    d = RuntimeDistribution.from_mapping({1: 0.5, 10: 0.5})
    b = simulate_batch(d, StrategySpec("parallel", workers=2), cap=100, trials=20000, seed=2)
    assert abs(b.time.mean() - 3.25) < 4 * sim.mc_sigma(b.time)
    assert np.all(b.work == 2 * b.time)


def test_counter_attempts_geometric():
    d = RuntimeDistribution.from_mapping({1: 0.5, math.inf: 0.5})
    b = simulate_batch(d, StrategySpec("counter"), cap=10**6, trials=20000, seed=3)
    assert b.success.all()
    assert abs(b.attempts.mean() - 2.0) < 4 * sim.mc_sigma(b.attempts)


def test_single_failure_fraction():
    d = RuntimeDistribution.from_mapping({1: 0.2, 30: 0.8})
    b = simulate_batch(d, StrategySpec("single"), cap=20, trials=20000, seed=4)
    assert abs(b.failure_fraction - 0.8) < 0.02
    assert set(b.time[~b.success].tolist()) == {20}


def test_lockstep_workers_split_time():
    d = RuntimeDistribution.from_mapping({1: 0.01, math.inf: 0.99})
    one = simulate_batch(d, StrategySpec("fixed", delta=1), cap=10**6, trials=5000, seed=5)
    four = simulate_batch(d, StrategySpec("fixed", workers=4, delta=1), cap=10**6, trials=5000, seed=5)
    assert four.time.mean() < one.time.mean() / 2.5
    assert np.all(four.work == 4 * four.time)


@pytest.mark.parametrize("kind", ["zeta2", "bin"])
def test_random_strategies_finish_on_easy_law(kind):
    d = RuntimeDistribution.from_mapping({1: 1.0})
    b = simulate_batch(d, StrategySpec(kind), cap=10, trials=100, seed=0)
    assert b.success.all() and np.all(b.time == 1) and np.all(b.attempts == 1)


def test_wide_unit_worked_example():
    d = RuntimeDistribution.from_mapping({3: 1.0})
    out = sim.simulate_wide(d, cap=100, rng=0, slot_policy="unit")
    # copies 1..3 hold 3, 1, 1 ticks when copy 1 completes at lead time 3
    assert out.success and out.time_to_success == 5


def test_wide_rounds_slot_invariant():
    for t, slots in sim.wide_rounds(2000):
        assert slots == {i: t // i for i in range(1, t + 1)}


def test_wide_next_slot_order():
    state = sim.WideState()
    ids = [sim.wide_next_slot(state)[1] for _ in range(8)]
    assert ids == [1, 1, 2, 1, 3, 1, 2, 4]


def test_wide_mean_copies_on_coin_law():
    d = RuntimeDistribution.from_mapping({1: 0.5, math.inf: 0.5})
    b = simulate_batch(d, StrategySpec("wide", slot_policy="unit"), cap=10**4, trials=20000, seed=6)
    assert b.success.all()
    assert abs(b.attempts.mean() - 2.0) < 4 * sim.mc_sigma(b.attempts)


def test_wide_doubling_not_worse_than_cap():
    d = RuntimeDistribution.from_mapping({1: 0.01, math.inf: 0.99})
    b = simulate_batch(d, StrategySpec("wide"), cap=3000, trials=2000, seed=7)
    assert np.all(b.time <= 3000)
    assert b.success.mean() > 0.9


@pytest.mark.parametrize(
    "kwargs",
    [
        {"kind": "nope"},
        {"kind": "fixed"},
        {"kind": "fixed", "delta": 0},
        {"kind": "single", "workers": 2},
        {"kind": "counter-cache"},
        {"kind": "counter", "workers": 0},
        {"kind": "wide", "slot_policy": "half"},
    ],
)
def test_invalid_specs(kwargs):
    with pytest.raises(StrategyError):
        StrategySpec(**kwargs)


def test_ttl_wrapper_rejects_non_ttl_kind(example_law):
    with pytest.raises(StrategyError):
        sim.simulate_ttl_strategy(example_law, StrategySpec("parallel", workers=2))


def test_batch_reproducible(example_law):
    spec = StrategySpec("zeta2")
    a = simulate_batch(example_law, spec, trials=500, seed=11)
    b = simulate_batch(example_law, spec, trials=500, seed=11)
    assert np.array_equal(a.time, b.time) and np.array_equal(a.work, b.work)
    assert simulate(example_law, spec, rng=11) == a.outcomes()[0]


def test_sample_runtime_inversion():
    d = RuntimeDistribution.from_mapping({1: 0.25, 4: 0.25, math.inf: 0.5})
    assert sim.sample_runtime(d, 0.1) == 1
    assert sim.sample_runtime(d, 0.25) == 4
    assert sim.sample_runtime(d, 0.6) == math.inf


_FALLBACK_SCRIPT = """
import json, math
from catalyst._accel import USING_NUMBA
from catalyst.profile import RuntimeDistribution
from catalyst.sim import KINDS, StrategySpec, simulate_batch
assert not USING_NUMBA
d = RuntimeDistribution.from_mapping({2: 0.1, 7: 0.2, 40: 0.1, math.inf: 0.6})
out = {}
for kind in KINDS:
    for policy in ("unit", "doubling"):
        spec = StrategySpec(kind, workers=2 if kind in ("parallel", "fixed", "counter") else 1,
                            delta=3, capacity=3, slot_policy=policy)
        b = simulate_batch(d, spec, cap=500, trials=40, seed=13)
        out[spec.label + policy] = [b.success.tolist(), b.time.tolist(), b.work.tolist(), b.peak_cache.tolist()]
print(json.dumps(out))
"""


def test_interpreted_fallback_is_bit_identical():
    env = dict(os.environ, CATALYST_DISABLE_NUMBA="1")
    proc = subprocess.run(
        [sys.executable, "-c", _FALLBACK_SCRIPT], env=env, capture_output=True, text=True, timeout=300
    )
    assert proc.returncode == 0, proc.stderr
    fallback = json.loads(proc.stdout)
    for kind in sim.KINDS:
        for policy in ("unit", "doubling"):
            spec = StrategySpec(
                kind,
                workers=2 if kind in ("parallel", "fixed", "counter") else 1,
                delta=3,
                capacity=3,
                slot_policy=policy,
            )
            b = simulate_batch(MIXED, spec, cap=500, trials=40, seed=13)
            got = [b.success.tolist(), b.time.tolist(), b.work.tolist(), b.peak_cache.tolist()]
            assert got == fallback[spec.label + policy], spec.label
