import io
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from escapedim import nais
from escapedim.errors import BadParameter, PoolExhausted

LOG2 = math.log(2)


def test_blocks_of_four():
    sched = nais.build_schedule(np.full(400, 0.5), 1.0, 32)
    assert all(lv.block for lv in sched.levels)
    assert sched.sizes == [4] * 32
    assert [lv.start for lv in sched.levels[:3]] == [0, 1, 2]


def test_first_block_three():
    w = np.array([1.5] + [0.3] * 200)
    sched = nais.build_schedule(w, 1.0, 1)
    assert (sched.levels[0].start, sched.levels[0].stop) == (0, 3)


def test_interpolation_levels():
    # blocks: [0, 2) of size 2, then [1, 5) of size 4, then [2, 7) of size 5
    w = np.array([1.0, 1.0, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4])
    sched = nais.build_schedule(w, 1.0, 4)
    assert sched.sizes == [2, 3, 4, 5]
    assert [lv.block for lv in sched.levels] == [True, False, True, True]
    assert (sched.levels[1].label, sched.levels[1].start, sched.levels[1].stop) == (1, 0, 3)


def test_pool_exhausted():
    with pytest.raises(PoolExhausted):
        nais.build_schedule(np.full(10, 0.1), 1.0, 4)


def test_schedule_validation():
    with pytest.raises(BadParameter):
        nais.build_schedule(np.full(10, 0.5), 1.0, 0)
    with pytest.raises(BadParameter):
        nais.build_schedule(np.full(10, 0.5), -1.0, 4)
    with pytest.raises(BadParameter):
        nais.ArrayPool([0.5, 0.0])


def test_growth_constant_passes():
    rep = nais.growth_check(nais.IndexSchedule.constant(7, 64))
    assert rep.passed
    assert rep.curve[4] == pytest.approx(math.log(7) / 5)


def test_growth_exponential_fails():
    levels = [nais.Level(1, 0, 2 ** n) for n in range(1, 65)]
    rep = nais.growth_check(nais.IndexSchedule(levels))
    assert not rep.passed and rep.statistic == pytest.approx(LOG2)


def test_growth_needs_levels():
    with pytest.raises(BadParameter):
        nais.growth_check(nais.IndexSchedule.constant(3, 5))


def test_growth_lattice_schedule(family31):
    # the first block holds ~e^458 indices, so growth only shows beyond ~5000 levels
    sched = nais.build_schedule(family31.pool, 0.35, 8192)
    assert math.log(sched.sizes[0]) > 400
    assert nais.growth_check(sched).passed
    short = nais.build_schedule(family31.pool, 0.35, 64)
    assert not nais.growth_check(short).passed


@pytest.mark.parametrize("n,c,t", [(4, 0.5, 0.7), (2, 1 / 3, 0.2), (9, 0.1, 1.3)])
def test_pressure_autonomous(n, c, t):
    fam = nais.ContractionFamily.autonomous(n, c, maps=False)
    pc = nais.lower_pressure(fam, nais.IndexSchedule.constant(n, 64), t)
    want = math.log(n * c ** t)
    assert pc.pressure_bracket == pytest.approx((want, want), abs=1e-12)
    assert pc.monotone_tail and pc.depth == 64


def test_moran_dimensions():
    f4 = nais.ContractionFamily.autonomous(4, 0.5, maps=False)
    est = nais.bowen_dimension(f4, lambda t: nais.IndexSchedule.constant(4, 16), 1e-4)
    assert abs(est.value - 2.0) <= 1e-3
    assert any("beyond 2" in n for n in est.notes)
    f2 = nais.ContractionFamily.autonomous(2, 1 / 3, maps=False)
    est = nais.bowen_dimension(f2, lambda t: nais.IndexSchedule.constant(2, 16), 1e-4)
    assert abs(est.value - math.log(2) / math.log(3)) <= 1e-3


def test_lattice_bowen_lower(family31):
    est = nais.bowen_dimension(family31, lambda t: nais.build_schedule(family31.pool, t, 64),
                               1e-3, t_max=2.0)
    assert est.lo >= 0.4 - 0.05
    assert est.method == "pressure_lower"


def test_pressure_bound_lattice(family31):
    t = 0.35
    pc = nais.lower_pressure(family31, nais.build_schedule(family31.pool, t, 64), t)
    assert pc.pressure_bracket[0] >= LOG2 - 0.1
    assert pc.pressure_bracket[0] <= pc.pressure_bracket[1]


def test_contraction_required():
    with pytest.raises(BadParameter):
        nais.ContractionFamily(nais.ArrayPool([0.5, 1.2]))
    assert nais.ContractionFamily.autonomous(3, 0.4).contraction == pytest.approx(0.4)


def test_pressure_csv():
    fam = nais.ContractionFamily.autonomous(2, 0.5, maps=False)
    curves = [nais.lower_pressure(fam, nais.IndexSchedule.constant(2, 4), t) for t in (0.5, 1)]
    buf = io.StringIO()
    nais.write_pressure_csv(buf, curves)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "t,depth,lo,hi" and len(rows) == 9


def test_schedule_json():
    sched = nais.build_schedule(np.full(100, 0.5), 1.0, 5)
    assert '"levels"' in sched.to_json()


def test_sample_moran_cantor():
    fam = nais.ContractionFamily.autonomous(2, 1 / 3)
    smp = nais.sample_limit_set(fam, nais.IndexSchedule.constant(2, 10), 8, max_points=1000)
    assert smp.points.size == 256
    assert np.all(np.abs(smp.points.imag) < 1e-12)
    assert np.all(np.abs(smp.points) <= 1 + 1e-12)
    # nesting: depth-8 points lie in the depth-1 cylinders [1/3, 1] and [-1, -1/3]
    assert np.all(np.abs(smp.points.real) >= 1 / 3 - 1e-12)


def test_sample_subsampling_deterministic():
    fam = nais.ContractionFamily.autonomous(3, 0.3)
    sched = nais.IndexSchedule.constant(3, 12)
    a = nais.sample_limit_set(fam, sched, 10, max_points=50, breadth=3, seed=4)
    b = nais.sample_limit_set(fam, sched, 10, max_points=50, breadth=3, seed=4)
    assert len(a.words) == 50 and a.words == b.words
    np.testing.assert_array_equal(a.points, b.points)


def test_sample_conjugated(system31, family31):
    sched = nais.build_schedule(family31.pool, 0.35, 16)
    smp = nais.sample_limit_set(family31, sched, 4, max_points=16, breadth=2)
    assert smp.points.size == 16
    assert np.all(system31.omega.in_hull(smp.points))
    deeper = nais.sample_limit_set(family31, sched, 5, max_points=32, breadth=2)
    # each depth-5 point refines the depth-4 point with the same prefix
    for w, p in zip(deeper.words, deeper.points):
        q = smp.points[smp.words.index(w[:4])]
        assert abs(p - q) <= system31.omega.diameter * 0.25 ** 4


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 0.95), min_size=40, max_size=120), st.floats(0.05, 1.5))
def test_block_and_plus_one_rules(weights, t):
    w = np.sort(np.array(weights))[::-1]
    pool = nais.ArrayPool(w)
    try:
        sched = nais.build_schedule(pool, t, 12)
    except PoolExhausted:
        assume(False)
    for lv in sched.levels:
        assert pool.log_mass(lv.label, lv.start, lv.stop, t) >= LOG2 - 1e-12
    s = sched.sizes
    assert all(b <= a + 1 for a, b in zip(s, s[1:]))
    for prev, lv in zip(sched.levels, sched.levels[1:]):
        if not lv.block:
            assert lv.size == prev.size + 1
    pc = nais.lower_pressure(pool, sched, t)
    assert min(pc.running_lo) >= LOG2 - 1e-12


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 0.9), min_size=3, max_size=30), st.floats(0, 3), st.floats(0, 3))
def test_pressure_monotone_in_t(weights, t1, t2):
    pool = nais.ArrayPool(weights, shifted=False)
    sched = nais.IndexSchedule.constant(len(weights), 8)
    lo, hi = sorted((t1, t2))
    a = nais.lower_pressure(pool, sched, lo).pressure_bracket
    b = nais.lower_pressure(pool, sched, hi).pressure_bracket
    assert b[0] <= a[0] + 1e-12 and b[1] <= a[1] + 1e-12
    if hi > lo + 1e-9:
        assert b[0] < a[0]


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.floats(0.02, 0.7))
def test_bowen_contains_moran(n, c):
    d = math.log(n) / -math.log(c)
    assume(d < 1.95)
    fam = nais.ContractionFamily.autonomous(n, c, maps=False)
    est = nais.bowen_dimension(fam, lambda t: nais.IndexSchedule.constant(n, 8), 1e-4)
    assert est.lo - 1e-9 <= d <= est.hi + 1e-9
