"""Shared oracles for the test suite."""
import itertools
import math

from firmshock.sarima import SarimaSpec
from firmshock.selection import score_spec


def exhaustive_best(y, d, D, m, max_order=2, constants=(False, True)):
    """Minimum AICc over the full (p, q[, P, Q]) grid with orders <= max_order."""
    best = (math.inf, None)
    seasonal = range(max_order + 1) if m > 1 else (0,)
    for p, q, P, Q, c in itertools.product(range(max_order + 1), range(max_order + 1),
                                           seasonal, seasonal, constants):
        if c and d + D >= 2:
            continue
        spec = SarimaSpec(p, d, q, P, D, Q, m, c)
        _, score, _ = score_spec(y, spec)
        if score < best[0]:
            best = (score, spec)
    return best
