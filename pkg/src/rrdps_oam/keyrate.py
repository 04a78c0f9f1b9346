"""Entropies and asymptotic secret-key rates for RRDPS and d-dimensional BB84.

Rates are in bits per sifted photon. ``0 * log2(0)`` is taken as 0 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

INV_GOLDEN = (math.sqrt(5) - 1) / 2
GRID_POINTS = 1000
OPT_TOL = 1e-10
BISECT_TOL = 1e-9
BOUNDS = ("original", "improved")


def _xlog2x(x: float) -> float:
    return x * math.log2(x) if x > 0 else 0.0


def h2(x: float) -> float:
    """Binary Shannon entropy in bits."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"h2 needs a probability in [0, 1], got {x!r}")
    return -_xlog2x(x) - _xlog2x(1.0 - x)


def hd(x: float, d: int) -> float:
    """Entropy of a d-ary symmetric error channel with total error ``x``."""
    if d < 2:
        raise ValueError(f"hd needs d >= 2, got {d!r}")
    return h2(x) + x * math.log2(d - 1)


def phi(x: float, y: float) -> float:
    """-x log2 x - y log2 y + (x+y) log2(x+y)."""
    if x < 0 or y < 0:
        raise ValueError(f"phi needs nonnegative arguments, got ({x!r}, {y!r})")
    return -_xlog2x(x) - _xlog2x(y) + _xlog2x(x + y)


def _check(L: int, e_b: float, hi: float = 0.5) -> None:
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L!r}")
    if not 0.0 <= e_b <= hi:
        raise ValueError(f"e_b must lie in [0, {hi}], got {e_b!r}")


def rate_original(L: int, e_b: float) -> float:
    """1 - h2(e_b) - h2(1/(L-1)). May be negative."""
    _check(L, e_b)
    return 1.0 - h2(e_b) - h2(1.0 / (L - 1))


def penalty_objective(L: int) -> Callable[[float], float]:
    """x -> phi[(L-1)x, 1-x] / (L-1)."""
    n = L - 1
    return lambda x: phi(n * x, 1.0 - x) / n


def golden_section_max(f: Callable[[float], float], a: float, b: float, tol: float = OPT_TOL) -> float:
    """Argmax of a unimodal ``f`` on ``[a, b]`` to within ``tol``."""
    c = b - INV_GOLDEN * (b - a)
    d = a + INV_GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INV_GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INV_GOLDEN * (b - a)
            fd = f(d)
    return (a + b) / 2


def maximize(f: Callable[[float], float], lo: float = 0.0, hi: float = 1.0,
             grid_points: int = GRID_POINTS, tol: float = OPT_TOL) -> tuple[float, float]:
    """Coarse grid scan, then golden-section refinement around the best grid cell.

    Returns ``(x_best, f(x_best))``; the grid's best point wins if the
    refinement somehow does worse.
    """
    xs = np.linspace(lo, hi, grid_points + 1)
    values = np.array([f(x) for x in xs])
    k = int(np.argmax(values))
    a, b = xs[max(k - 1, 0)], xs[min(k + 1, grid_points)]
    x = float(golden_section_max(f, float(a), float(b), tol))
    fx = float(f(x))
    if values[k] > fx:
        return float(xs[k]), float(values[k])
    return x, fx


@lru_cache(maxsize=None)
def improved_penalty(L: int) -> float:
    """max over x in [0,1] of phi[(L-1)x, 1-x] / (L-1)."""
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L!r}")
    return maximize(penalty_objective(L))[1]


def rate_improved(L: int, e_b: float) -> float:
    _check(L, e_b)
    return 1.0 - h2(e_b) - improved_penalty(L)


def rate_bb84(d: int, e_b: float) -> float:
    """log2(d) - 2 hd(e_b) for the d-dimensional BB84 protocol."""
    if not 0.0 <= e_b <= 1.0:
        raise ValueError(f"e_b must lie in [0, 1], got {e_b!r}")
    return math.log2(d) - 2 * hd(e_b, d)


def rate(L: int, e_b: float, bound: str) -> float:
    if bound == "original":
        return rate_original(L, e_b)
    if bound == "improved":
        return rate_improved(L, e_b)
    raise ValueError(f"bound must be one of {BOUNDS}, got {bound!r}")


def threshold(L: int, bound: str = "improved", tol: float = BISECT_TOL) -> float:
    """Smallest e_b in [0, 0.5] at which the rate drops to zero or below.

    Returns 0 when no key is possible even without errors.
    """
    f = lambda e: rate(L, e, bound)
    if f(0.0) <= 0:
        return 0.0
    lo, hi = 0.0, 0.5
    if f(hi) > 0:
        return hi
    while hi - lo > tol:
        mid = (lo + hi) / 2
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass(frozen=True)
class KeyRateReport:
    L: int
    e_b: float
    R_original: float
    R_improved: float
    threshold_original: float
    threshold_improved: float

    @property
    def R_original_clamped(self) -> float:
        return max(self.R_original, 0.0)

    @property
    def R_improved_clamped(self) -> float:
        return max(self.R_improved, 0.0)


def key_rate_report(L: int, e_b: float) -> KeyRateReport:
    return KeyRateReport(
        L=L,
        e_b=e_b,
        R_original=rate_original(L, e_b),
        R_improved=rate_improved(L, e_b),
        threshold_original=threshold(L, "original"),
        threshold_improved=threshold(L, "improved"),
    )
