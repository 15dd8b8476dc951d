import json
import os
import sys
import time

import pytest

from catalyst import executor as ex
from catalyst.fixtures import sleeper_command
from catalyst.sim import StrategySpec
from catalyst.ttl import RngStream

from conftest import posix_only

pytestmark = posix_only

TICK = 0.05


@pytest.fixture
def one_tick_law(law_file):
    return law_file("1 1.0\n")


def fake_run(ticks):
    class P:
        pid = -1
        returncode = 0

    return ex.ManagedRun(P(), None, None, accumulated_ticks=ticks)


def test_spawn_missing_program(tmp_path):
    with pytest.raises(ex.ExecutorError):
        ex.spawn_run(["/nonexistent/program"], tmp_path / "w")


def test_grant_must_be_positive(tmp_path):
    run = ex.spawn_run([sys.executable, "-c", "import time; time.sleep(5)"], tmp_path / "w")
    try:
        with pytest.raises(ValueError):
            ex.enforce_ttl(run, 0, tick=TICK)
    finally:
        ex.kill_run(run, grace=0.5)
    assert not ex.group_alive(run.pgid)


def test_sentinel_success(tmp_path, law_file):
    law = law_file("2 1.0\n")
    run = ex.spawn_run(sleeper_command(law, tick=TICK), tmp_path / "w", tick=TICK)
    assert ex.enforce_ttl(run, 40, tick=TICK) == "succeeded"
    assert 1 <= run.accumulated_ticks <= 4
    assert not ex.group_alive(run.pgid)


def test_exit_code_mode(tmp_path):
    ok = ex.spawn_run([sys.executable, "-c", "pass"], tmp_path / "a", success_mode=ex.EXIT_CODE)
    assert ex.enforce_ttl(ok, 100, tick=TICK) == "succeeded"
    bad = ex.spawn_run([sys.executable, "-c", "raise SystemExit(3)"], tmp_path / "b", success_mode=ex.EXIT_CODE)
    assert ex.enforce_ttl(bad, 100, tick=TICK) == "exited"
    plain = ex.spawn_run([sys.executable, "-c", "pass"], tmp_path / "c")
    assert ex.enforce_ttl(plain, 100, tick=TICK) == "exited"


def test_expiry_kills_whole_group(tmp_path):
    # the child forks a grandchild that would otherwise outlive it
    script = "import subprocess, sys, time; subprocess.Popen([sys.executable, '-c', 'import time; time.sleep(60)']); time.sleep(60)"
    run = ex.spawn_run([sys.executable, "-c", script], tmp_path / "w", tick=TICK)
    time.sleep(0.3)
    assert ex.enforce_ttl(run, 2, tick=TICK) == "expired"
    assert run.accumulated_ticks == 2
    time.sleep(0.1)
    assert not ex.group_alive(run.pgid)


def test_environment_and_workdir(tmp_path):
    script = (
        "import json, os; json.dump({k: os.environ[k] for k in "
        "('CATALYST_WORKDIR', 'CATALYST_SUCCESS_FILE')} | {'cwd': os.getcwd()}, open('env.json', 'w'))"
    )
    wd = tmp_path / "w"
    run = ex.spawn_run([sys.executable, "-c", script], wd)
    assert ex.enforce_ttl(run, 100, tick=TICK) == "exited"
    env = json.loads((wd / "env.json").read_text())
    assert env["CATALYST_WORKDIR"] == env["cwd"] == str(wd.resolve())
    assert env["CATALYST_SUCCESS_FILE"] == str(wd.resolve() / ex.SUCCESS_FILENAME)


def test_stale_sentinel_is_cleared(tmp_path):
    wd = tmp_path / "w"
    wd.mkdir()
    (wd / ex.SUCCESS_FILENAME).write_text("")
    run = ex.spawn_run([sys.executable, "-c", "import time; time.sleep(5)"], wd, tick=TICK)
    assert ex.enforce_ttl(run, 2, tick=TICK) == "expired"


def test_suspend_preserves_progress(tmp_path, law_file):
    law = law_file("6 1.0\n")
    run = ex.spawn_run(sleeper_command(law, tick=TICK), tmp_path / "w", tick=TICK)
    assert ex.enforce_ttl(run, 2, ex.SUSPEND_ON_EXPIRY, tick=TICK) == "expired"
    assert run.status == ex.SUSPENDED and ex.group_alive(run.pgid)
    time.sleep(1.0)
    assert ex.enforce_ttl(run, 200, ex.SUSPEND_ON_EXPIRY, tick=TICK) == "succeeded"
    assert 5 <= run.accumulated_ticks <= 8


def test_cannot_grant_to_finished_run(tmp_path):
    run = ex.spawn_run([sys.executable, "-c", "pass"], tmp_path / "w")
    ex.enforce_ttl(run, 100, tick=TICK)
    with pytest.raises(ValueError):
        ex.enforce_ttl(run, 1, tick=TICK)


def test_cache_rules():
    cache = ex.Cache(2)
    a, b, c, d = fake_run(1), fake_run(3), fake_run(2), fake_run(1)
    assert cache.push(a) == [] and cache.push(b) == []
    assert cache.push(c) == [a]
    assert cache.push(d) == [d]
    assert len(cache) == 2 and cache.peak == 2
    assert cache.take_below(3) is c
    assert cache.take_below(3) is None
    assert cache.take_below(4) is b
    with pytest.raises(ValueError):
        ex.Cache(0)


def test_counter_dispenser_sequence():
    disp = ex.make_dispenser(StrategySpec("counter"), 100, 1)
    assert [disp.next_assignment(None).ttl for _ in range(8)] == [1, 1, 2, 1, 1, 2, 4, 1]


def test_counter_cache_dispenser_resumes_below_ttl():
    disp = ex.make_dispenser(StrategySpec("counter-cache", capacity=3), 100, 1)
    rng = RngStream(0)
    got = []
    for _ in range(3):
        a = disp.next_assignment(rng)
        got.append((a.ttl, a.resumed))
        if a.resumed is None:
            disp.park(fake_run(a.ttl))
    assert [t for t, _ in got] == [1, 1, 2]
    assert got[2][1] is not None and got[2][1].accumulated_ticks == 1
    assert ex.Assignment(2, got[2][1]).grant == 1


def test_random_and_fixed_dispensers():
    rng = RngStream(3)
    assert ex.make_dispenser(StrategySpec("fixed", delta=4), 100, 1).next_assignment(rng).ttl == 4
    assert ex.make_dispenser(StrategySpec("single"), 77, 1).next_assignment(rng).ttl == 77
    z = ex.make_dispenser(StrategySpec("zeta2"), 100, 1)
    assert all(z.next_assignment(rng).ttl >= 1 for _ in range(100))


def test_wide_dispenser_order():
    disp = ex.WideDispenser(max_suspended=10)
    order = []
    for _ in range(6):
        a = disp.next_assignment(None)
        if a.resumed is None:
            run = fake_run(0)
            disp.bind(run)
            cid = disp.copy_of[id(run)]
        else:
            run = a.resumed
            cid = disp.copy_of[id(run)]
        order.append((cid, a.ttl))
        run.accumulated_ticks = a.ttl
        disp.park(run)
    assert order == [(1, 1), (1, 2), (2, 1), (3, 1), (1, 4), (2, 2)]


def test_fixed_experiment_end_to_end(tmp_path, one_tick_law):
    log = tmp_path / "trials.jsonl"
    recs = ex.run_experiment(
        sleeper_command(one_tick_law), StrategySpec("fixed", delta=2), workers=1, cap_ticks=100,
        trials=4, seed=0, tick=TICK, workdir_root=tmp_path / "runs", log_path=log,
    )
    assert all(r.success for r in recs)
    assert all(0 < r.elapsed_ticks < 6 for r in recs)
    assert not any(ex.group_alive(p) for r in recs for p in r.pgids)
    lines = [json.loads(x) for x in log.read_text().splitlines()]
    assert [x["seed"] for x in lines] == [0, 1, 2, 3]
    assert all(x["outcome"]["kind"] == "success" for x in lines)
    assert not any((tmp_path / "runs").iterdir())


def test_parallel_workers_get_distinct_groups(tmp_path, law_file):
    law = law_file("1000 1.0\n")
    recs = ex.run_experiment(
        sleeper_command(law), StrategySpec("fixed", workers=3, delta=2), workers=3, cap_ticks=6,
        trials=1, tick=TICK, workdir_root=tmp_path / "runs", keep_failed=True,
    )
    rec = recs[0]
    assert not rec.success and rec.outcome == {"kind": "failure", "cap": 6}
    assert len(rec.pgids) == len(set(rec.pgids)) >= 3
    dirs = list((tmp_path / "runs" / "trial-0").iterdir())
    assert len(dirs) == len(rec.pgids)
    assert not any(ex.group_alive(p) for p in rec.pgids)


def test_spawn_failure_is_recorded(tmp_path):
    recs = ex.run_experiment(["/nonexistent/program"], StrategySpec("fixed", delta=1), workers=1,
                             cap_ticks=5, trials=1, tick=TICK, workdir_root=tmp_path)
    assert not recs[0].success and "cannot spawn" in recs[0].error


def test_default_workers():
    assert ex.default_workers() == max(1, 3 * (os.cpu_count() or 1) // 4)


def test_single_never_restarts(tmp_path):
    recs = ex.run_experiment([sys.executable, "-c", "pass"], StrategySpec("single"), workers=1,
                             cap_ticks=20, trials=1, tick=TICK, workdir_root=tmp_path)
    assert not recs[0].success
    assert len(recs[0].attempts) == 1 and recs[0].attempts[0]["result"] == "exited"


def test_counter_cache_experiment(tmp_path, law_file):
    law = law_file("3 1.0\n")
    recs = ex.run_experiment(sleeper_command(law), StrategySpec("counter-cache", capacity=2), workers=1,
                             cap_ticks=200, trials=2, tick=0.1, workdir_root=tmp_path)
    for rec in recs:
        assert rec.success and 1 <= rec.peak_suspended <= 2
        assert any(a["resumed"] for a in rec.attempts)
        assert not any(ex.group_alive(p) for p in rec.pgids)
