"""Test fixture: a fake Las Vegas program with a known runtime law.

Usage: sleeper.py LAW_FILE --seed N [--tick SECONDS] [--hidden TICKS]

Draws a hidden runtime of H ticks from LAW_FILE (``<tick> <probability>``
lines, optional ``inf <p>``), finishes midway through its H-th tick counted
from the moment the supervisor spawned it, writes ``$CATALYST_SUCCESS_FILE``
and exits 0. A supervisor rounding used time up to whole ticks therefore
observes exactly H ticks.
Progress is counted in small sleep steps so SIGSTOP freezes it.

Standard library only, so the interpreter starts in milliseconds.
"""
import argparse
import importlib.util
import os
import random
import sys
import time
from pathlib import Path

_LAW_PATH = Path(__file__).resolve().parent.parent / "_law.py"


def _load_law():
    spec = importlib.util.spec_from_file_location("_catalyst_law", _LAW_PATH)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def draw_hidden(law_text, seed, run_seed):
    law = _load_law()
    ticks, probs, inf_mass = law.parse_law(law_text)
    rng = random.Random(f"{seed}:{run_seed}")
    return law.invert(ticks, law.cumulative(probs, inf_mass), rng.random())


def main(argv=None):
    ap = argparse.ArgumentParser(prog="sleeper")
    ap.add_argument("law")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tick", type=float, default=None)
    ap.add_argument("--hidden", type=float, default=None, help="override the drawn runtime (ticks)")
    args = ap.parse_args(argv)

    tick = args.tick if args.tick is not None else float(os.environ.get("CATALYST_TICK", "1.0"))
    spawned = float(os.environ.get("CATALYST_SPAWN_TIME", time.time()))
    if args.hidden is not None:
        hidden = args.hidden
    else:
        hidden = draw_hidden(Path(args.law).read_text(encoding="utf-8"), args.seed,
                             os.environ.get("CATALYST_RUN_SEED", "0"))

    need = (hidden - 0.5) * tick
    step = max(min(tick / 20.0, 0.05), 0.001)
    progress = max(0.0, time.time() - spawned)
    while progress < need:
        chunk = min(step, need - progress)
        t0 = time.monotonic()
        time.sleep(chunk)
        # a stop/continue inside the sleep credits at most half a step extra
        progress += min(time.monotonic() - t0, 1.5 * chunk)

    target = os.environ.get("CATALYST_SUCCESS_FILE")
    if target:
        with open(target, "w") as fh:
            fh.write(f"hidden={hidden}\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
