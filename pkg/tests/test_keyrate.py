import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rrdps_oam import keyrate as kr

# frozen from mpmath at 40 digits (independent of the float code paths)
H2_0069 = 0.36218071725715643612
PHI_15_09 = 2.29064160701991591489
PENALTY = {  # max_x phi[(L-1)x, 1-x] / (L-1)
    3: 0.69424191363061730174,
    4: 0.55146308974559554712,
    8: 0.32817339704190490589,
    16: 0.19768179414889314338,
    32: 0.11829274581168367076,
    64: 0.06988122580240055397,
}


def brute_penalty(L, points=1_000_001):
    x = np.linspace(0.0, 1.0, points)
    n = L - 1
    a, b = n * x, 1 - x
    with np.errstate(divide="ignore", invalid="ignore"):
        xl = lambda z: np.where(z > 0, z * np.log2(np.where(z > 0, z, 1)), 0.0)
        return float(np.max((-xl(a) - xl(b) + xl(a + b)) / n))


def test_h2_examples():
    assert kr.h2(0.5) == 1.0
    assert kr.h2(0.0) == 0.0 == kr.h2(1.0)
    assert kr.h2(0.069) == pytest.approx(0.3622, abs=5e-5)
    assert kr.h2(0.069) == pytest.approx(H2_0069, abs=1e-14)


@pytest.mark.parametrize("x", [-0.1, 1.1, math.nan])
def test_h2_domain(x):
    with pytest.raises(ValueError):
        kr.h2(x)


@given(st.floats(0, 1))
def test_hd_reduces_to_binary(x):
    assert kr.hd(x, 2) == kr.h2(x)


@pytest.mark.parametrize("d", [2, 3, 4, 7, 16, 64])
def test_hd_extremes(d):
    assert kr.hd(0.0, d) == 0.0
    assert kr.hd((d - 1) / d, d) == pytest.approx(math.log2(d), abs=1e-12)


def test_hd_domain():
    with pytest.raises(ValueError):
        kr.hd(0.1, 1)


@given(st.floats(0, 1e6))
def test_phi_identities(x):
    assert kr.phi(x, 0.0) == pytest.approx(0.0, abs=1e-9)
    assert kr.phi(x, x) == pytest.approx(2 * x, rel=1e-12, abs=1e-300)


def test_phi_value_and_domain():
    assert kr.phi(1.5, 0.9) == pytest.approx(2.291, abs=5e-4)
    assert kr.phi(1.5, 0.9) == pytest.approx(PHI_15_09, abs=1e-14)
    with pytest.raises(ValueError):
        kr.phi(-1, 1)


@pytest.mark.parametrize("L", [2, 3, 5, 16, 64])
def test_rate_original_at_zero_error(L):
    assert kr.rate_original(L, 0.0) == 1 - kr.h2(1 / (L - 1))


@given(st.floats(0, 0.5))
def test_rate_original_L3_never_positive(e):
    assert kr.rate_original(3, e) <= 0


def test_rate_original_L6_positive():
    assert kr.rate_original(6, 0.039) > 0


@pytest.mark.parametrize("L, e, R", [(16, 0.069, 0.440), (3, 0.016, 0.188)])
def test_rate_improved_published(L, e, R):
    assert kr.rate_improved(L, e) == pytest.approx(R, abs=0.002)


def test_rate_improved_L2():
    assert kr.improved_penalty(2) == pytest.approx(1.0, abs=1e-12)
    assert kr.rate_improved(2, 0.0) == pytest.approx(0.0, abs=1e-12)
    x, _ = kr.maximize(kr.penalty_objective(2))
    assert x == pytest.approx(0.5, abs=1e-8)


@pytest.mark.parametrize("L", sorted(PENALTY))
def test_penalty_against_mpmath(L):
    assert kr.improved_penalty(L) == pytest.approx(PENALTY[L], abs=1e-12)


@pytest.mark.parametrize("L", [3, 8, 16, 64])
def test_optimizer_matches_brute_force_grid(L):
    assert kr.improved_penalty(L) == pytest.approx(brute_penalty(L), abs=1e-8)
    assert kr.improved_penalty(L) >= brute_penalty(L) - 1e-15


@pytest.mark.parametrize("L", [3, 4, 8, 16, 33, 64])
def test_objective_vanishes_at_ends_with_interior_max(L):
    f = kr.penalty_objective(L)
    assert f(0.0) == pytest.approx(0, abs=1e-15)
    assert f(1.0) == pytest.approx(0, abs=1e-15)
    x, _ = kr.maximize(f)
    assert 0 < x < 1


def test_golden_section_on_known_function():
    assert kr.golden_section_max(lambda x: -(x - 0.3) ** 2, 0, 1) == pytest.approx(0.3, abs=1e-9)


def test_rate_bb84():
    assert kr.rate_bb84(2, 0) == 1.0
    for d in (3, 4, 8, 64):
        assert kr.rate_bb84(d, 0) == pytest.approx(math.log2(d))
    assert kr.rate_bb84(2, 0.11) == pytest.approx(0.0, abs=0.01)
    # bisection on the formula itself puts the qubit threshold near 11%
    lo, hi = 0.0, 0.5
    for _ in range(60):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if kr.rate_bb84(2, mid) > 0 else (lo, mid)
    assert lo == pytest.approx(0.110, abs=0.001)
    with pytest.raises(ValueError):
        kr.rate_bb84(1, 0.1)
    with pytest.raises(ValueError):
        kr.rate_bb84(2, 1.5)


@pytest.mark.parametrize("bad", [(1, 0.1), (4, -0.1), (4, 0.6)])
def test_rate_domains(bad):
    with pytest.raises(ValueError):
        kr.rate_original(*bad)
    with pytest.raises(ValueError):
        kr.rate_improved(*bad)


def test_threshold_examples():
    assert kr.threshold(3, "original") == 0.0
    assert kr.threshold(5, "original") < 0.034
    assert kr.threshold(6, "original") > 0.039
    for L, e in [(3, 0.016), (4, 0.019), (5, 0.034), (6, 0.039), (7, 0.053), (8, 0.056),
                 (16, 0.069), (32, 0.139), (64, 0.315)]:
        assert kr.threshold(L, "improved") > e


@pytest.mark.parametrize("L", [3, 4, 8, 16, 64])
@pytest.mark.parametrize("bound", kr.BOUNDS)
def test_threshold_is_a_root(L, bound):
    t = kr.threshold(L, bound)
    if t == 0:
        assert kr.rate(L, 0.0, bound) <= 0
        return
    assert kr.rate(L, t, bound) <= 0 < kr.rate(L, t - 1e-9, bound)


def test_threshold_rejects_unknown_bound():
    with pytest.raises(ValueError):
        kr.threshold(4, "optimistic")


@pytest.mark.parametrize("L", [2, 3, 4, 8, 16, 64])
@pytest.mark.parametrize("bound", kr.BOUNDS)
def test_monotone_in_error(L, bound):
    rates = [kr.rate(L, e, bound) for e in np.linspace(0, 0.5, 100)]
    assert all(b < a for a, b in zip(rates, rates[1:]))


def test_improved_dominates_original():
    for L in range(3, 65):
        for e in np.linspace(0, 0.3, 31):
            assert kr.rate_improved(L, e) >= kr.rate_original(L, e) - 1e-12


def test_report():
    rep = kr.key_rate_report(3, 0.016)
    assert rep.R_original < 0 and rep.R_original_clamped == 0
    assert rep.R_improved_clamped == rep.R_improved == pytest.approx(0.188, abs=0.002)
    assert rep.threshold_original == 0
