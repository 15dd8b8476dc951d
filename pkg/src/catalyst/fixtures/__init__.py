"""Bundled fixture programs."""
import sys
from pathlib import Path

SLEEPER = Path(__file__).resolve().parent / "sleeper.py"


def sleeper_command(law_path, seed=0, tick=None, hidden=None):
    """Argument vector that runs the sleeper fixture with a fast-starting interpreter."""
    cmd = [sys.executable, "-S", "-E", str(SLEEPER), str(law_path), "--seed", str(seed)]
    if tick is not None:
        cmd += ["--tick", repr(float(tick))]
    if hidden is not None:
        cmd += ["--hidden", repr(float(hidden))]
    return cmd
