import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qplab.contfrac import (
    BridgeSelection,
    PrecisionExhausted,
    SelectionFailed,
    check_diophantine,
    expand,
    is_cd_bridge,
    select_bridges,
)


def test_golden_fibonacci():
    e = expand("golden", 7)
    assert e.a[1:] == [1] * 7
    assert e.q[:7] == [1, 1, 2, 3, 5, 8, 13]


def test_sqrt2m1_quotients():
    e = expand("sqrt2m1", 5)
    assert e.a[1:] == [2] * 5
    assert e.q[:5] == [1, 2, 5, 12, 29]


def test_rational_reproduces_itself():
    e = expand("5/7")
    assert e.a[1:] == [1, 2, 2]
    assert e.p[-1] == 5 and e.q[-1] == 7
    assert e.rational
    assert e.beta[-1] == 0.0


def test_expand_deterministic():
    a = expand(0.37281911, 20)
    b = expand(0.37281911, 20)
    assert a.a == b.a and a.q == b.q
    assert a.log_beta == b.log_beta


def test_expand_requires_unit_interval():
    with pytest.raises(ValueError):
        expand(1.5, 5)


def test_mp_expansion_matches_exact_euclid():
    # a float input is a dyadic rational; exact Euclid on that rational is an
    # independent oracle for the Gauss-map quotients
    for alpha in (0.721, 0.123456789):
        e = expand(alpha, 12)
        exact = expand(Fraction(alpha), 12)
        n = min(len(e.a), len(exact.a))
        assert e.a[:n] == exact.a[:n]


def test_golden_invariants(golden_cf):
    inv = golden_cf.check_invariants(n_limit=20)
    assert all(inv.values()), inv


def test_cd_bridge_golden_examples(golden_cf):
    # chain 3<=8, 5<=27, 8<=125 and 8 in [2^3, 2^3]
    assert is_cd_bridge(golden_cf, 2, 5, 3, 3, 3)
    assert not is_cd_bridge(golden_cf, 2, 5, 3, 4, 4)
    assert is_cd_bridge(golden_cf, 0, 0, 2, 3, 5)  # q=1, empty chain


def test_cd_bridge_index_errors(golden_cf):
    with pytest.raises(IndexError):
        is_cd_bridge(golden_cf, 0, 10**6, 2, 2, 2)
    with pytest.raises(ValueError):
        is_cd_bridge(golden_cf, 0, 3, 3, 2, 2)


def test_select_bridges_golden(golden_cf):
    sel = select_bridges(golden_cf, 25.0)
    assert sel.Q[0] == 1
    assert sel.all_ok()


def test_select_bridges_sqrt2m1():
    sel = select_bridges(expand("sqrt2m1", 60), 25.0)
    assert sel.all_ok()


def test_select_bridges_degenerate():
    e = expand("golden", 1)
    sel = select_bridges(e, 25.0)
    assert sel.Q == [1] and sel.exhausted


def test_bridge_reverification_catches_bad_selection(golden_cf):
    sel = BridgeSelection(golden_cf, 25.0, [1, 4], exhausted=True)
    checks = sel.check_invariants()
    assert not checks["disjunction"]


def test_diophantine_frequency_golden(golden_cf):
    out = check_diophantine(golden_cf, "frequency", 1000, v=0.2, tau=1.5)
    assert out["holds"]


def test_diophantine_rational_fails():
    e = expand("5/7")
    out = check_diophantine(e, "frequency", 10, v=0.05, tau=2.0)
    assert not out["holds"]
    assert out["worst"][0] == 7


def test_diophantine_rotation_rho_zero(golden_cf):
    out = check_diophantine(golden_cf, "rotation", 10, rho=0.0, gamma=0.3, tau=1.5)
    assert not out["holds"]
    assert out["worst"][0] == 0
    assert out["worst"][1] == pytest.approx(-0.3)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 400), st.integers(1, 399))
def test_rational_roundtrip(q, p):
    p = p % q
    if p == 0 or math.gcd(p, q) != 1:
        return
    e = expand(Fraction(p, q), 50)
    assert e.p[-1] == p and e.q[-1] == q
    inv = e.check_invariants()
    assert inv["recurrence"]


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 2**60 - 1))
def test_random_mid_precision_invariants(mant):
    import mpmath as mp

    alpha = mp.mpf(mant) / 2**60
    if not 0 < alpha < 1:
        return
    try:
        e = expand(alpha, 12, prec=300)
    except PrecisionExhausted:
        # a 60-bit dyadic can terminate inside 12 steps; that must be flagged,
        # not silently mangled
        return
    inv = e.check_invariants(n_limit=10, exhaustive_q_cap=200)
    assert inv["recurrence"] and inv["sandwich"]
