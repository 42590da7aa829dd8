import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ergolab.systems import (
    CATALOG,
    DyadicPoint,
    OrbitEscapeError,
    PhaseSpace,
    SystemSpec,
    iterate,
    iterate_many,
    jacobian_self_check,
    make_system,
    orbit_distance,
    parse_system,
    sample_points,
)


def test_rotation_zero_is_identity():
    orbit = iterate(make_system("rotation", theta=0.0), [0.3], 5)
    assert orbit[:, 0].tolist() == [0.3] * 6


def test_doubling_hand_iteration():
    orbit = iterate(make_system("doubling"), [0.1], 3)
    np.testing.assert_allclose(orbit[:, 0], [0.1, 0.2, 0.4, 0.8], rtol=0, atol=1e-15)


def test_cat_fixed_point():
    orbit = iterate(make_system("cat"), [0.0, 0.0], 7)
    assert orbit.shape == (8, 2)
    assert not orbit.any()


def test_orbit_distance_examples():
    dbl = make_system("doubling")
    assert orbit_distance(dbl, [0.1], [0.1 + 2**-10], 5) == pytest.approx(2**-6, rel=1e-9)
    assert orbit_distance(dbl, [0.37], [0.37], 20) == 0.0
    rot = make_system("rotation")
    for n in (1, 7, 100):
        assert orbit_distance(rot, [0.05], [0.93], n) == pytest.approx(0.12, abs=1e-12)


def test_orbit_distance_monotone_in_n():
    s = make_system("logistic", mu=3.9)
    d = [orbit_distance(s, [0.2], [0.2001], n) for n in range(1, 40)]
    assert all(b >= a for a, b in zip(d, d[1:]))


@pytest.mark.parametrize("name", ["doubling", "rotation", "logistic", "cat", "identity", "tent"])
def test_orbit_prefix_is_stable(name):
    s = make_system(name)
    x = sample_points(s, 1, 3, 60)[0]
    long = iterate(s, x, 60)
    short = iterate(s, x, 25)
    np.testing.assert_array_equal(long[:26], short)


@pytest.mark.parametrize("name", ["doubling", "rotation", "logistic", "cat", "identity", "tent"])
def test_jacobians_match_finite_differences(name):
    assert jacobian_self_check(make_system(name)) <= 1e-6


def test_counterexample_in_catalog_has_consistent_jacobian():
    s = make_system("counterexample")
    assert s.smoothness_class == "c_r" and s.r == 2
    x = np.array([[0.1], [0.3], [0.7], [0.95], [1.2]])
    h = 1e-7
    fd = (s.map(x + h) - s.map(x - h)) / (2 * h)
    np.testing.assert_allclose(s.jacobian(x)[:, 0, 0], fd[:, 0], rtol=1e-5, atol=1e-6)


def test_torus_points_reduced_into_unit_box():
    orbit = iterate(make_system("cat"), [0.999999, 0.5], 1000)
    assert orbit.min() >= 0.0 and orbit.max() < 1.0


def test_escape_is_reported_with_index():
    bad = SystemSpec("bad", PhaseSpace.interval(0, 1), map=lambda x: 1.5 * x,
                     jacobian=lambda x: np.full((len(x), 1, 1), 1.5))
    with pytest.raises(OrbitEscapeError) as info:
        iterate(bad, [0.5], 5)
    assert info.value.index == 2


def test_iterate_many_matches_iterate():
    s = make_system("logistic", mu=3.7)
    pts = np.array([[0.1], [0.25], [0.8]])
    many = iterate_many(s, pts, 30)
    for b in range(3):
        np.testing.assert_allclose(many[:, b], iterate(s, pts[b], 30), rtol=0, atol=1e-12)


def _exact_orbit(bits, steps, rule):
    x = sum(Fraction(int(b), 2 ** (i + 1)) for i, b in enumerate(bits))
    out = [x]
    for _ in range(steps):
        x = rule(x)
        out.append(x)
    return out


@pytest.mark.parametrize("name", ["doubling", "tent"])
def test_dyadic_orbits_follow_exact_rational_arithmetic(name):
    rules = {
        "doubling": lambda x: (2 * x) % 1,
        "tent": lambda x: 2 * x if x < Fraction(1, 2) else 2 - 2 * x,
    }
    rng = np.random.default_rng(11)
    p = DyadicPoint.random(rng, 700)
    steps = 500
    orbit = iterate(make_system(name), p, steps)[:, 0]
    exact = _exact_orbit(p.bits, steps, rules[name])
    err = max(abs(Fraction(float(a)) - b) for a, b in zip(orbit, exact))
    assert err <= Fraction(2, 2**52)


def test_float_doubling_collapses_but_dyadic_does_not():
    x = 0.1234567
    assert iterate(make_system("doubling"), [x], 80)[-1, 0] == 0.0
    p = sample_points(make_system("doubling"), 1, 0, 10_000)[0]
    tail = iterate(make_system("doubling"), p, 10_000)[-100:, 0]
    assert np.ptp(tail) > 0.5


def test_dyadic_point_needs_enough_bits():
    p = DyadicPoint(np.ones(60, dtype=np.uint8))
    with pytest.raises(ValueError):
        iterate(make_system("doubling"), p, 20)


def test_dyadic_from_float_round_trip():
    assert float(DyadicPoint.from_float(0.375)) == 0.375


def test_sampling_is_seeded():
    s = make_system("cat")
    a = np.array(sample_points(s, 5, 42))
    b = np.array(sample_points(s, 5, 42))
    c = np.array(sample_points(s, 5, 43))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_parse_system_tokens_and_string():
    s = parse_system("logistic mu=3.5")
    assert s.params["mu"] == 3.5
    s = parse_system(["rotation", "theta=0.61803398875"])
    assert s.params["theta"] == 0.61803398875
    with pytest.raises(ValueError):
        parse_system("nosuchmap")
    with pytest.raises(ValueError):
        parse_system("logistic mu")
    with pytest.raises(ValueError):
        parse_system("cat foo=1")


def test_catalog_entries_build():
    assert {"doubling", "rotation", "tent", "logistic", "cat", "identity", "counterexample"} <= set(CATALOG)


points = st.floats(min_value=0.0, max_value=0.999999, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(points, points, points, points, points, points)
def test_torus_distance_is_a_metric(a0, a1, b0, b1, c0, c1):
    sp = PhaseSpace.torus(2)
    a, b, c = np.array([a0, a1]), np.array([b0, b1]), np.array([c0, c1])
    dab, dbc, dac = sp.distance(a, b), sp.distance(b, c), sp.distance(a, c)
    assert dab >= 0 and dab == pytest.approx(sp.distance(b, a))
    assert dac <= dab + dbc + 1e-12
    assert sp.distance(a, a) == 0


@settings(max_examples=100, deadline=None)
@given(points, points)
def test_rotation_is_an_isometry(x, y):
    rot = make_system("rotation", theta=math.sqrt(2) - 1)
    d0 = PhaseSpace.torus(1).distance(np.array([x]), np.array([y]))
    assert orbit_distance(rot, [x], [y], 50) == pytest.approx(float(d0), abs=1e-9)
