import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from escapedim.errors import BadParameter, PoleHit, RadiusTooSmall, TailUnbounded, UnknownPole
from escapedim.polefield import (TailModel, base_radius, custom, derivative_comparison_stats,
                                 evaluate, evaluate_derivative, evaluate_many,
                                 evaluate_with_bound, inverse_branch, inverse_branch_offset,
                                 inverse_branches,
                                 lattice_power, lattice_start_index, local_coeff_check,
                                 local_eval, make_family, pole_neighborhood, read_pole_csv,
                                 single_pole, write_pole_csv)


def nearest_index(f, z):
    return int(f.indices[np.argmin(np.abs(f.locations - z))])


# -- evaluation -------------------------------------------------------------

def test_single_pole_value():
    assert evaluate(single_pole(1, 1, 1), 2) == pytest.approx(1.0 + 0j, abs=1e-15)


def test_single_pole_derivative():
    assert evaluate_derivative(single_pole(0, 1, 1), 2) == pytest.approx(-0.25, abs=1e-15)


def test_pole_hit():
    with pytest.raises(PoleHit):
        evaluate(single_pole(1, 1, 1), 1)


def test_lattice_pole_hit_beyond_head(lattice31):
    with pytest.raises(PoleHit):
        evaluate(lattice31, 500 + 300j)


def test_finite_field_has_zero_tail_bound():
    r = evaluate_with_bound(single_pole(0, 1, 2), 3)
    assert r.value == pytest.approx(1 / 9)
    assert r.tail_bound == 0.0


def test_unbounded_custom_tail():
    f = custom([1, 2], [0.1, 0.1], [1, 1], tail=TailModel("power_law", exponent=3.0))
    with pytest.raises(TailUnbounded):
        evaluate_with_bound(f, 5j)


def test_lattice_bounded_outside_disks(lattice31):
    # complement of the disks D(a, b); the disks have radius |a|^-3 < 1e-3
    rng = np.random.default_rng(1)
    z = rng.uniform(-60, 60, 10_000) + 1j * rng.uniform(-60, 60, 10_000)
    d, i = lattice31.nearest(z)
    z = z[d > np.abs(lattice31.coeffs[i])]
    assert z.size > 9_900
    f, _ = evaluate_many(lattice31, z)
    assert np.abs(f).max() <= 2.0


def test_lattice_derivative_nonzero_in_disks(lattice31):
    rng = np.random.default_rng(2)
    idx = lattice31.indices[rng.integers(0, len(lattice31), 10_000)]
    b = np.abs(lattice31.coeffs[[lattice31.position(int(i)) for i in idx]])
    delta = b * np.sqrt(rng.uniform(1e-6, 1, idx.size)) * np.exp(2j * np.pi * rng.random(idx.size))
    _, df = local_eval(lattice31, idx, delta)
    assert np.all(np.abs(df) > 0)


def test_log_poles_bounded(logp):
    rng = np.random.default_rng(3)
    z = rng.uniform(1.5, 8, 4000) + 1j * rng.uniform(-1, 1, 4000)
    j = logp.indices.astype(float)
    ok = np.all(np.abs(z[:, None] - logp.locations[None, :]) >= 1 / (3 * j[None, :]), axis=1)
    f, _ = evaluate_many(logp, z[ok])
    assert ok.sum() > 1000
    assert np.abs(f).max() <= 1.0


@pytest.mark.parametrize("name", ["lattice31", "lattice152", "lat_exp", "logp", "gam"])
def test_derivative_matches_finite_differences(name, request):
    f = request.getfixturevalue(name)
    rng = np.random.default_rng(4)
    lo = f.locations[np.argmin(np.abs(f.locations))]
    z = lo + rng.uniform(-3, 3, 50) + 1j * rng.uniform(-3, 3, 50)
    d, _ = f.nearest(z)
    h = 1e-4 * np.minimum(d, 1.0)  # truncation error ~ (h/d)^2
    fp, _ = evaluate_many(f, z + h)
    fm, _ = evaluate_many(f, z - h)
    _, df = evaluate_many(f, z)
    fd = (fp - fm) / (2 * h)
    assert np.all(np.abs(fd - df) <= 1e-6 * np.abs(df) + 1e-12)


# -- neighbourhoods -----------------------------------------------------------

def test_neighborhood_formula():
    br = pole_neighborhood(single_pole(0, 1, 1), 0, 100.0, 12.0)
    assert br.inner_radius == pytest.approx(1 / 1200, rel=1e-12)
    assert br.outer_radius == pytest.approx(0.12, rel=1e-12)
    assert br.inner_radius == pytest.approx(8.333e-4, rel=1e-3)


def test_neighborhood_threshold():
    with pytest.raises(RadiusTooSmall):
        pole_neighborhood(single_pole(0, 1, 1), 0, 7.9)
    with pytest.raises(BadParameter):
        pole_neighborhood(single_pole(0, 1, 1), 0, 100, K=0.5)


@given(st.floats(8.0, 1e12), st.floats(1.01, 1e6), st.integers(1, 3))
def test_neighborhood_nesting(R, factor, m):
    f = single_pole(0.5, 0.3, m)
    R = R * 2.0 ** (m - 1)
    a = pole_neighborhood(f, 0, R)
    b = pole_neighborhood(f, 0, R * factor)
    assert 0 < b.inner_radius < a.inner_radius
    assert 0 < b.outer_radius < a.outer_radius
    assert b.kappa <= a.kappa


def test_level_set_between_circles(lattice31):
    j = nearest_index(lattice31, 10 + 10j)
    R = 50.0
    br = pole_neighborhood(lattice31, j, R)
    ang = np.exp(2j * np.pi * np.arange(256) / 256)
    lo = np.full(256, br.inner_radius / 4)
    hi = np.full(256, br.outer_radius * 4)
    for _ in range(60):
        mid = np.sqrt(lo * hi)
        f, _ = local_eval(lattice31, np.full(256, j), mid * ang)
        inside = np.abs(f) > R
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    r = np.sqrt(lo * hi)
    assert np.all(r >= br.inner_radius) and np.all(r <= br.outer_radius)


# -- inverse branches ---------------------------------------------------------

def test_inverse_simple_pole_closed_form():
    f = single_pole(1.5 - 2j, 1, 1)
    for w in (10, -37 + 4j, 1e6j):
        assert abs(inverse_branch(f, 0, w) - (1.5 - 2j + 1 / w)) <= 1e-12


def test_inverse_double_pole_closed_form():
    a, b, w = 2 + 1j, 0.7, 64 - 20j
    f = single_pole(a, b, 2)
    got = inverse_branches(f, 0, w)
    want = [a + b / np.sqrt(w), a - b / np.sqrt(w)]
    for z in want:
        assert min(abs(z - g) for g in got) <= 1e-12
    assert abs(got[0] - got[1]) > 0.1 * b / math.sqrt(abs(w))


def test_inverse_lattice_residual(lattice31):
    j = nearest_index(lattice31, 30 + 0j)
    w = 50 + 0j
    delta = inverse_branch_offset(lattice31, j, w)
    f, df = local_eval(lattice31, [j], [delta])
    assert abs(f[0] - w) <= 1e-10 * abs(w)
    z = inverse_branch(lattice31, j, w)
    assert pole_neighborhood(lattice31, j, 50).contains(z)
    # the rounded point z cannot do better than |f'| * ulp(|z|)
    assert abs(evaluate(lattice31, z) - w) <= 4 * abs(df[0]) * np.spacing(abs(z))


def test_inverse_rejects_small_target_and_bad_branch():
    f = single_pole(0, 1, 2)
    with pytest.raises(RadiusTooSmall):
        inverse_branch(f, 0, 1.0)
    with pytest.raises(BadParameter):
        inverse_branch(f, 0, 100.0, branch=2)
    with pytest.raises(UnknownPole):
        inverse_branch(f, 7, 100.0)


@settings(max_examples=60, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.05, 3), st.integers(1, 4),
       st.floats(2, 12), st.floats(0, 2 * math.pi))
def test_branch_correctness(ar, ai, b, m, logw, theta):
    f = single_pole(complex(ar, ai), b, m)
    w = 2.0 ** m * 4 * math.exp(logw) * complex(math.cos(theta), math.sin(theta))
    zs = inverse_branches(f, 0, w)
    br = pole_neighborhood(f, 0, abs(w))
    for k, z in enumerate(zs):
        delta = inverse_branch_offset(f, 0, w, k)
        fz, _ = local_eval(f, [0], [delta])
        assert abs(fz[0] - w) <= 1e-10 * abs(w)
        assert br.contains(z)
    d = [abs(x - y) for i, x in enumerate(zs) for y in zs[i + 1:]]
    assert all(x > 0 for x in d)


def test_branches_distinct_lattice(lattice152):
    j = nearest_index(lattice152, 25 + 5j)
    zs = inverse_branches(lattice152, j, 1e3j)
    assert len(zs) == 2 and abs(zs[0] - zs[1]) > 0


# -- local checks -------------------------------------------------------------

def test_local_coeff_single_pole():
    assert local_coeff_check(single_pole(0, 2, 1), 0) <= 1e-10


def test_local_coeff_gamma(gam):
    for j in (1, 2, 3, 7, 20):
        assert local_coeff_check(gam, j) <= 1e-4
        assert gam.pole(j).coeff.real == pytest.approx((-1) ** j / math.factorial(j), rel=1e-12)


@pytest.mark.parametrize("name", ["lat_exp", "lattice31", "lattice152", "logp"])
def test_local_coeff_builtin(name, request):
    f = request.getfixturevalue(name)
    for j in f.indices[:: max(1, len(f) // 7)][:8]:
        assert local_coeff_check(f, int(j)) <= 1e-4


def test_derivative_comparison_exact_models():
    lo, hi = derivative_comparison_stats(single_pole(0, 1, 1), 0, 100.0)
    assert lo == pytest.approx(1.0, abs=1e-12) and hi == pytest.approx(1.0, abs=1e-12)
    lo, hi = derivative_comparison_stats(single_pole(1, 0.5, 2), 0, 100.0)
    assert lo == pytest.approx(2.0, abs=1e-12) and hi == pytest.approx(2.0, abs=1e-12)


def test_derivative_comparison_lattice(lattice152):
    K, M = 12.0, 2
    for z in (20 + 3j, -40 + 40j, 7 - 90j):
        lo, hi = derivative_comparison_stats(lattice152, nearest_index(lattice152, z), 1e3)
        assert 1 / (K * M) <= lo <= hi <= K * M


def test_derivative_comparison_needs_samples():
    with pytest.raises(BadParameter):
        derivative_comparison_stats(single_pole(0, 1, 1), 0, 100, samples=4)


# -- families -----------------------------------------------------------------

def test_lattice_power_data(lattice31):
    assert np.all(lattice31.mults == 1)
    np.testing.assert_allclose(np.abs(lattice31.coeffs), np.abs(lattice31.locations) ** -3.0,
                               rtol=1e-14)
    n = lattice31.params["start"]
    assert np.all(np.abs(lattice31.locations.real) >= n)
    assert np.all(np.abs(lattice31.locations.imag) >= n)


def test_lattice_start_index():
    assert lattice_start_index(3.0, 1) == 10
    assert lattice_start_index(1.5, 2) == 20


def test_log_poles_first(logp):
    p = logp.pole(8)
    assert p.location == pytest.approx(math.log(8)) and abs(p.location - 2.0794) < 1e-4
    assert p.coeff == pytest.approx(math.exp(-8), rel=1e-14)
    assert logp.indices[0] == 8


def test_gamma_b3(gam):
    assert gam.pole(3).coeff.real == pytest.approx(-1 / 6, rel=1e-14)
    assert gam.pole(3).location == -3


def test_bad_parameters():
    with pytest.raises(BadParameter):
        lattice_power(1.0, 2)
    with pytest.raises(BadParameter):
        make_family("weierstrass", {})
    with pytest.raises(BadParameter):
        make_family("gamma", {"a": -1})


def test_base_radius(lattice31, gam):
    assert base_radius(lattice31) == 4.0
    assert base_radius(gam) == 8.0


def test_csv_roundtrip(tmp_path):
    f = custom([1 + 2j, -3.5, 4j], [0.25, 1e-3j, 2 - 1j], [1, 2, 1], indices=[5, 9, 11])
    path = tmp_path / "poles.csv"
    write_pole_csv(path, f)
    idx, a, b, m = read_pole_csv(path)
    assert idx.tolist() == [5, 9, 11]
    np.testing.assert_array_equal(a, f.locations)
    np.testing.assert_array_equal(b, f.coeffs)
    assert m.tolist() == [1, 2, 1]


def test_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(BadParameter):
        read_pole_csv(path)


def test_field_validation():
    with pytest.raises(BadParameter):
        custom([1, 1], [1, 1], [1, 1])
    with pytest.raises(BadParameter):
        custom([1], [0], [1])
    with pytest.raises(BadParameter):
        custom([1], [1], [0])
