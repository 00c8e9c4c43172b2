import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from escapedim.critexp import (DimensionEstimate, SeriesProfile, bk_upper_bound, converges,
                               critical_exponent, field_critical_exponent, order_of_function,
                               profile_from_field, restricted_critical_exponent,
                               restricted_sequence)
from escapedim.errors import BadParameter, EmptyRestriction, Inconclusive
from escapedim.polefield import Decision, TailModel, custom, lattice_power, single_pole

J = np.arange(1, 2001, dtype=float)
LINE = SeriesProfile(J ** -2.0, (TailModel("power_law_line", exponent=2.0),))


def test_p_series_decisions():
    assert converges(LINE, 0.6) is Decision.CONVERGES
    assert converges(LINE, 0.4) is Decision.DIVERGES


def test_p_series_exponent():
    est = critical_exponent(LINE, 1e-3)
    assert abs(est.value - 0.5) <= 1e-3


def test_lattice_boundary_diverges(lattice31):
    prof = profile_from_field(lattice31)
    assert converges(prof, 0.4) is Decision.DIVERGES
    assert converges(prof, 0.4 + 1e-9) is Decision.CONVERGES


def test_lattice_closed_forms(lattice31, lattice152):
    assert abs(field_critical_exponent(lattice31).value - 0.4) <= 1e-3
    assert abs(field_critical_exponent(lattice152).value - 2 / 3) <= 1e-3


def test_zero_cases(lat_exp, logp, gam):
    assert field_critical_exponent(lat_exp).value == 0.0
    assert field_critical_exponent(logp).value == 0.0
    assert restricted_critical_exponent(gam, 1).value == 0.0


def test_restriction_all_included():
    f = lattice_power(3.0, 2, radius=60)
    assert restricted_critical_exponent(f, 2).value == field_critical_exponent(f).value


def _mixed():
    # multiplicity 1 poles on the positive axis with b = j^-2 (weights j^-4),
    # multiplicity 2 poles on the negative axis with b = exp(-j)
    j = np.arange(1, 401, dtype=float)
    loc = np.concatenate([j, -j])
    b = np.concatenate([j ** -2.0, np.exp(-j)])
    m = np.concatenate([np.ones(j.size, int), np.full(j.size, 2)])
    tails = {1: TailModel("power_law_line", exponent=4.0, base_mu=1),
             2: TailModel("exponential", rate=1.0, base_mu=2)}
    return custom(loc, b, m, tail=tails)


def test_mixed_restriction():
    f = _mixed()
    d1 = restricted_critical_exponent(f, 1, 1e-4).value
    # oracle: sum j^(-4t) diverges iff 4t <= 1
    assert abs(d1 - 0.25) <= 1e-4
    seq = restricted_sequence(f, 1e-4)
    assert [M for M, _ in seq] == [1, 2]
    assert seq[0][1].value <= seq[1][1].value + 1e-12


def test_empty_restriction():
    f = custom([1, 2], [1, 1], [3, 3])
    with pytest.raises(EmptyRestriction):
        restricted_critical_exponent(f, 2)


def test_finite_family_degenerate():
    est = field_critical_exponent(single_pole(1, 1, 1))
    assert est.value == 0.0 and est.degenerate


def test_regression_fallback():
    j = np.arange(1, 5001, dtype=float)
    prof = SeriesProfile(j ** -2.0, (TailModel("custom_hint"),), planar=True)
    est = critical_exponent(prof)
    assert est.method == "regression" and est.confidence == "regression_only"
    assert abs(est.value - 0.5) < 0.02
    with pytest.raises(Inconclusive):
        critical_exponent(prof, fallback=False)


def test_custom_hint_with_value_uses_bisection():
    prof = SeriesProfile(J ** -1.0, (TailModel("custom_hint", critical_t=0.3),))
    est = critical_exponent(prof, 1e-3)
    assert est.method == "bisection" and est.contains(0.3) and est.width <= 1e-3


def test_orders(lattice31, lat_exp, logp, gam):
    assert order_of_function(lattice31).rho == pytest.approx(2.0, abs=0.05)
    assert order_of_function(lat_exp).rho == pytest.approx(2.0, abs=0.05)
    assert order_of_function(logp).infinite
    assert order_of_function(gam).rho == pytest.approx(1.0, abs=0.05)


def test_order_on_ray():
    j = np.arange(1, 301, dtype=float)
    f = custom(j, np.full(j.size, 0.1), np.ones(j.size, int),
               tail=TailModel("exponential", rate=1.0),
               order_tail=TailModel("power_law_line", exponent=1.0))
    assert abs(order_of_function(f).rho - 1.0) <= 1e-3


def test_bk_bound():
    assert bk_upper_bound(2, 2.0) == pytest.approx(4 / 3)
    assert bk_upper_bound(1, 0.0) == 0.0
    assert bk_upper_bound(3, math.inf) == 2.0
    with pytest.raises(BadParameter):
        bk_upper_bound(0, 1.0)


def test_trace_rows():
    buf = io.StringIO()
    critical_exponent(LINE, 1e-2, trace=buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "t,decision,partial_sum_head,tail_bound"
    assert len(rows) > 5


def test_estimate_validation():
    with pytest.raises(BadParameter):
        DimensionEstimate(0.5, 0.4, "bisection", 1e-3)
    with pytest.raises(BadParameter):
        DimensionEstimate(0.4, 0.5, "guess", 1e-3)


@given(st.floats(1e-6, 1e6), st.floats(0.01, 3.0))
def test_scaling_invariance(c, t):
    assert converges(LINE.scaled(c), t) is converges(LINE, t)


@given(st.floats(0.0, 4.0), st.floats(0.0, 4.0), st.floats(0.5, 6.0))
def test_monotone_in_t(t1, t2, p):
    prof = SeriesProfile(J ** -p, (TailModel("power_law", exponent=p),))
    lo, hi = sorted((t1, t2))
    if converges(prof, lo) is Decision.CONVERGES:
        assert converges(prof, hi) is Decision.CONVERGES


@given(st.floats(2.05, 8.0), st.integers(1, 3))
def test_bk_consistency_lattice_tail(alpha_m, M):
    alpha = alpha_m / M + 0.01
    tail = TailModel("power_law", exponent=alpha + 1 + 1 / M, base_mu=M)
    d = tail.critical_value()
    assert 0 <= d <= bk_upper_bound(M, 2.0) + 1e-3
