import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hardylab.gridfn import (
    Extension,
    GridFunction,
    InputError,
    Kind,
    LogGrid,
    Segment,
    WeightSpec,
    cumulative,
    integrate,
    lp_energy,
    power_of_inverse,
    prefix_sup,
    sample,
    suffix_sup,
    weighted_lp,
)


def _u(r, v, ext=Extension.LINEAR0):
    return GridFunction.from_arrays(r, v, ext)


# integrate --------------------------------------------------------------


def test_integrate_inverse_square_tail():
    q = integrate(WeightSpec.power(1.0, -2.0), 1.0)
    assert q.value == pytest.approx(1.0, rel=1e-15)
    assert not q.divergent


def test_integrate_constant_diverges():
    q = integrate(WeightSpec.power(1.0, 0.0), 0.0)
    assert q.divergent and q.value == math.inf


def test_integrate_log_weight_against_trapezoid():
    w = WeightSpec.power(1.0, -2.0, -2.0, lo=math.e)
    # independent oracle: trapezoid in x = ln r at 10^7 points; e^{-60} tail negligible
    x = np.linspace(1.0, 60.0, 10**7)
    oracle = np.trapezoid(np.exp(-x) * x**-2.0, x)
    assert integrate(w, math.e).value == pytest.approx(oracle, rel=1e-8)


@pytest.mark.parametrize(
    "w, lo, hi",
    [
        (WeightSpec.power(1.0, -1.0, 0.0), 0.5, 2.0),
        (WeightSpec.power(2.0, -0.5, 0.7), 0.0, 3.0),
        (WeightSpec.power(1.0, 1.0, 2.0), 0.2, 5.0),
    ],
)
def test_integrate_matches_scipy_quad(w, lo, hi):
    from scipy.integrate import quad

    f = lambda r: float(w(np.array([r]))[0])
    ref, _ = quad(f, lo, hi, points=[1.0], epsabs=0, epsrel=1e-13, limit=400)
    assert integrate(w, lo, hi).value == pytest.approx(ref, rel=1e-11)


def test_integrate_divergence_at_origin_and_at_one():
    assert integrate(WeightSpec.power(1.0, -1.0), 0.0, 1.0).divergent
    assert integrate(WeightSpec.power(1.0, 0.0, -1.0), 0.5, 2.0).divergent
    assert not integrate(WeightSpec.power(1.0, 0.0, -0.5), 0.5, 2.0).divergent


def test_integrate_rejects_reversed_limits():
    with pytest.raises(InputError):
        integrate(WeightSpec.power(), 2.0, 1.0)


def test_malformed_tiling_rejected():
    with pytest.raises(InputError):
        WeightSpec((Segment(0.0, 1.0, 1.0), Segment(2.0, math.inf, 1.0)))
    with pytest.raises(InputError):
        WeightSpec.from_pieces([(0, 2, 1, 0, 0), (1, 3, 1, 0, 0)])


weights = st.builds(
    lambda c, a, b, br: WeightSpec.from_pieces([(0, br, c, a, 0.0), (br, math.inf, c, a - 1.5, b)]),
    st.floats(0.1, 5.0),
    st.floats(-0.9, 1.0),
    st.sampled_from([0.0, 1.0, 2.0, -0.5, 0.5]),
    st.floats(0.3, 3.0),
)


@settings(max_examples=60, deadline=None)
@given(weights, st.floats(0.05, 20.0), st.floats(1.01, 5.0), st.floats(1.01, 5.0))
def test_integrate_additive(w, a, f1, f2):
    b, c = a * f1, a * f1 * f2
    whole = integrate(w, a, c).value
    parts = integrate(w, a, b).value + integrate(w, b, c).value
    assert whole == pytest.approx(parts, rel=1e-12)


def test_cumulative_agrees_with_integrate():
    w = WeightSpec.power(3.0, -0.3, 1.0)
    r = np.geomspace(0.1, 10.0, 50)
    cum = cumulative(w, r)
    assert cum[-1] == pytest.approx(integrate(w, 0.1, 10.0).value, rel=1e-13)


# power_of_inverse / sample --------------------------------------------------


def test_power_of_inverse_examples():
    one = power_of_inverse(WeightSpec.power(1.0, 0.0), 2.0).segments[0]
    assert (one.c, one.a, one.b) == (1.0, 0.0, 0.0)
    sq = power_of_inverse(WeightSpec.power(1.0, 2.0), 2.0).segments[0]
    assert (sq.c, sq.a) == (1.0, -2.0)
    cube = power_of_inverse(WeightSpec.power(4.0, 3.0), 3.0).segments[0]
    assert cube.c == pytest.approx(0.5) and cube.a == -1.5


def test_power_of_inverse_of_zero_segment_is_infinite():
    V = WeightSpec.from_pieces([(0, 1, 1, 0, 0)])
    inv = power_of_inverse(V, 2.0)
    assert integrate(inv, 0.5, 2.0).divergent


def test_sample_examples():
    g = LogGrid([1.0, 2.0, 4.0])
    np.testing.assert_allclose(sample(WeightSpec.power(1.0, -2.0), g).values, [1.0, 0.25, 0.0625])
    assert np.all(sample(WeightSpec.zero(), g).values == 0)
    w = WeightSpec.from_pieces([(0, 1, 1, 0, 0), (1, math.inf, 1, -2, 0)])
    assert w(np.array([1.0]))[0] == 1.0
    assert w(np.array([2.0]))[0] == 0.25


@settings(max_examples=40, deadline=None)
@given(weights, st.floats(1.2, 4.0))
def test_sample_commutes_with_power_of_inverse(V, p):
    g = LogGrid.geometric(0.05, 20.0, 40)
    direct = sample(V, g).values ** (-1.0 / (p - 1.0))
    via = sample(power_of_inverse(V, p), g).values
    np.testing.assert_allclose(via, direct, rtol=1e-13)


# scans ----------------------------------------------------------------------


def test_scan_examples():
    f = GridFunction.from_arrays([1.0, 2.0, 3.0], [3.0, 1.0, 2.0])
    assert list(prefix_sup(f).values) == [3, 3, 3]
    assert list(suffix_sup(f).values) == [3, 2, 2]
    inc = f.with_values([1.0, 2.0, 5.0])
    assert prefix_sup(inc) == inc


def test_prefix_sup_brute_force():
    rng = np.random.default_rng(7)
    v = rng.normal(size=1000)
    f = GridFunction.from_arrays(np.arange(1.0, 1001.0), v)
    brute = np.array([v[: i + 1].max() for i in range(v.size)])
    brute_s = np.array([v[i:].max() for i in range(v.size)])
    np.testing.assert_array_equal(prefix_sup(f).values, brute)
    np.testing.assert_array_equal(suffix_sup(f).values, brute_s)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=2, max_size=40), st.floats(0, 3))
def test_scans_idempotent_and_monotone(vals, bump):
    f = GridFunction.from_arrays(np.arange(1.0, len(vals) + 1.0), vals)
    g = f.with_values(f.values + bump)
    for scan in (prefix_sup, suffix_sup):
        assert scan(scan(f)) == scan(f)
        assert np.all(scan(g).values >= scan(f).values)


# energies -------------------------------------------------------------------


def test_lp_energy_examples():
    r = np.geomspace(1e-3, 1e3, 61)
    r = np.union1d(r, [1.0])
    u = _u(r, np.minimum(r, 1.0))
    assert lp_energy(u, 2.0) == pytest.approx(1.0, rel=1e-13)
    const = GridFunction.from_arrays(r, np.full(r.size, 3.0), Extension.CONSTANT)
    assert lp_energy(const, 2.5, WeightSpec.power(2.0, 1.0)) == 0.0
    tent = _u([1.0, 2.0], [1.0, 0.0])
    assert lp_energy(tent, 3.0) == pytest.approx(2.0, rel=1e-15)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=20), st.floats(-4, 4), st.floats(1.1, 4.0))
def test_lp_energy_homogeneous(vals, t, p):
    r = np.geomspace(0.1, 10.0, len(vals))
    u = _u(r, vals)
    V = WeightSpec.power(1.5, 0.5)
    assert lp_energy(u.with_values(t * u.values), p, V) == pytest.approx(abs(t) ** p * lp_energy(u, p, V), rel=1e-12, abs=1e-300)


def test_weighted_lp_matches_closed_form():
    # u = min(r, 1), W = r^-2: int_0^1 1 + int_1^inf r^-2 = 2
    r = np.union1d(np.geomspace(1e-2, 1e2, 41), [1.0])
    u = _u(r, np.minimum(r, 1.0))
    assert weighted_lp(u, WeightSpec.power(1.0, -2.0), 2.0) == pytest.approx(2.0, rel=1e-12)


# formats ---------------------------------------------------------------------


def test_csv_round_trip():
    u = GridFunction.from_arrays([0.1, 0.2, 0.7], [1 / 3, -2.0, 1e-300])
    assert GridFunction.from_csv(u.to_csv()) == u


def test_json_round_trip():
    w = WeightSpec.from_pieces([(0, 1, 1.0, 0.5, 0), (1, math.inf, 2.0, -3, 2)])
    assert WeightSpec.from_json('{"segments":[{"lo":0,"hi":1,"c":1.0,"a":0.5,"b":0.0},'
                                '{"lo":1,"hi":"inf","c":2.0,"a":-3,"b":2}]}') == w
    import json

    assert WeightSpec.from_dict(json.loads(json.dumps(w.to_dict()))) == w


def test_grid_validation():
    with pytest.raises(InputError):
        LogGrid([1.0])
    with pytest.raises(InputError):
        LogGrid([1.0, 1.0])
    with pytest.raises(InputError):
        LogGrid([0.0, 1.0])
    with pytest.raises(InputError):
        GridFunction.from_arrays([1.0, 2.0], [1.0, 2.0], Extension.LINEAR0, Kind.STEP)
