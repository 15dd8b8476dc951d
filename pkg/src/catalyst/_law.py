"""Runtime-law text format and inversion sampling, standard library only.

The sleeper fixture imports this module directly from its own directory so
that a fixture process starts in a few milliseconds (no numpy import).
"""
import bisect
import math

INF = math.inf
FILE_MASS_TOL = 1e-6


class LawFormatError(ValueError):
    pass


def parse_law(text):
    """Parse ``<tick> <probability>`` lines into ``(ticks, probs, inf_mass)``.

    Ticks are returned in increasing order; zero-mass atoms are dropped. ``inf <p>`` sets the
    never-terminates mass; ``#`` starts a comment.
    """
    atoms = {}
    inf_mass = 0.0
    seen_inf = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise LawFormatError(f"line {lineno}: expected '<tick> <probability>', got {raw!r}")
        key, val = parts
        try:
            p = float(val)
        except ValueError:
            raise LawFormatError(f"line {lineno}: bad probability {val!r}") from None
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            raise LawFormatError(f"line {lineno}: probability {p} outside [0, 1]")
        if key.lower() in ("inf", "+inf", "infinity"):
            if seen_inf:
                raise LawFormatError(f"line {lineno}: duplicate inf line")
            seen_inf = True
            inf_mass = p
            continue
        try:
            tick = int(key)
        except ValueError:
            raise LawFormatError(f"line {lineno}: tick must be a positive integer, got {key!r}") from None
        if tick < 1:
            raise LawFormatError(f"line {lineno}: tick must be >= 1, got {tick}")
        if tick in atoms:
            raise LawFormatError(f"line {lineno}: duplicate tick {tick}")
        atoms[tick] = p
    total = math.fsum(atoms.values()) + inf_mass
    if abs(total - 1.0) > FILE_MASS_TOL:
        raise LawFormatError(f"probabilities sum to {total!r}, expected 1")
    ticks = sorted(t for t in atoms if atoms[t] > 0.0)
    return ticks, [atoms[t] for t in ticks], inf_mass


def cumulative(probs, inf_mass=0.0):
    """Running sums of ``probs``; with no infinite mass the last entry is pinned
    above every uniform variate so rounding can never yield ``INF``."""
    out = []
    acc = 0.0
    for p in probs:
        acc += p
        out.append(acc)
    if out and inf_mass == 0.0:
        out[-1] = 2.0
    return out


def invert(ticks, cum, u):
    """Smallest atom whose cumulative mass exceeds ``u``; ``INF`` past the last one."""
    j = bisect.bisect_right(cum, u)
    if j >= len(ticks):
        return INF
    return ticks[j]
