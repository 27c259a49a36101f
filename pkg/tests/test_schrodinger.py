import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from hardylab.gridfn import GridFunction, InputError, LogGrid, WeightSpec
from hardylab.schrodinger import (
    Criterion,
    RadialPotential,
    Status,
    birman_margin,
    certify_finiteness,
    count_negative_eigenvalues_radial,
    count_table,
    form_value,
    improved_margin,
    multiplicity,
    outside_form_nonnegativity,
    robin_constant,
)


def inverse_square(c, d=3, lo=1.0):
    return RadialPotential(WeightSpec.power(c, -2.0, 0.0, lo), d)


@settings(max_examples=40, deadline=None)
@given(c=st.floats(0.01, 5.0), a=st.floats(-4.0, -1.2), r=st.floats(1.0, 1e3))
def test_birman_margin_closed_form_d3(c, a, r):
    P = RadialPotential(WeightSpec.power(c, a, 0.0, 1.0), 3)
    exact = c * r ** (a + 1) / -(a + 1) * 4 * r
    assert birman_margin(P, r) == pytest.approx(exact, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.01, 5.0), r=st.floats(1.01, 1e4))
def test_birman_margin_d2_and_d1(c, r):
    P = RadialPotential(WeightSpec.power(c, -3.0, 0.0, 1.0), 2)
    assert birman_margin(P, r) == pytest.approx(c / r * 4 * math.log(r), rel=1e-10)
    P = RadialPotential(WeightSpec.power(c, -3.0, 0.0, 1.0), 1)
    # int_r^inf c s^-3 s^0 ds over 1/(4 r)
    assert birman_margin(P, r) == pytest.approx(2 * c / r, rel=1e-10)


@pytest.mark.parametrize("c", [0.1, 0.5, 2.0])
def test_improved_margin_log_correction(c):
    P = RadialPotential([WeightSpec.power(0.25, -2.0, 0.0, 2.0), WeightSpec.power(c / 4, -2.0, -2.0, 2.0)], 3)
    for r in (2.0, 10.0, 1e6):
        assert improved_margin(P, r) == pytest.approx(c, rel=1e-9)


def test_improved_margin_partial_cancellation():
    # (Q - 1/(4 s^2))_+ s with Q = 0.3 s^-2 on (1, 10): 0.05 ln(10/r) against 1/(4 ln r)
    P = RadialPotential(WeightSpec.power(0.3, -2.0, 0.0, 1.0, 10.0), 3)
    r = 2.0
    assert improved_margin(P, r) == pytest.approx(0.05 * math.log(10 / r) * 4 * math.log(r), rel=1e-10)
    # Q below the critical curve contributes nothing
    assert improved_margin(inverse_square(0.2), 5.0) == 0.0


def test_margin_needs_log_radius_above_one():
    with pytest.raises(InputError):
        improved_margin(inverse_square(0.2), 1.0)
    with pytest.raises(InputError):
        birman_margin(inverse_square(0.2, d=2), 0.5)


def test_robin_constants():
    R = 3.0
    assert robin_constant(1, R) == pytest.approx(1 / R)
    assert robin_constant(2, R) == pytest.approx(1 / math.log(R))
    assert robin_constant(3, R) == 0.0 and robin_constant(7, R) == 0.0
    assert robin_constant(4, R, "improved") == pytest.approx((1 / math.log(R) - 1.0) * R**2)
    assert robin_constant(2, R, "improved") == pytest.approx(1 / math.log(R))


def test_examples_certified_and_undecided():
    cert = certify_finiteness(inverse_square(0.2))
    assert cert.status is Status.CERTIFIED and cert.criterion is Criterion.BIRMAN
    assert cert.R == 1.0 and cert.c_R == 0.0
    assert certify_finiteness(inverse_square(0.3)).status is Status.UNDECIDED
    assert certify_finiteness(RadialPotential(WeightSpec.zero(), 3)).R == 1.0


def test_improved_route_catches_critical_plus_log():
    P = RadialPotential([WeightSpec.power(0.25, -2.0, 0.0, math.e), WeightSpec.power(0.5 / 4, -2.0, -2.0, math.e)], 3)
    assert birman_margin(P, 10.0) > 1
    cert = certify_finiteness(P)
    assert cert.status is Status.CERTIFIED and cert.criterion is Criterion.IMPROVED
    assert cert.c_R == pytest.approx(robin_constant(3, cert.R, "improved"))


def test_growing_tail_is_not_certified():
    # Q ~ r^-1.5: every condition fails far out
    assert certify_finiteness(RadialPotential(WeightSpec.power(1e-3, -1.5, 0.0, 1.0), 3)).status is Status.UNDECIDED


@settings(max_examples=15, deadline=None)
@given(c=st.floats(0.0, 0.6), a=st.floats(-3.0, -2.0), d=st.integers(1, 5))
def test_certificate_is_consistent(c, a, d):
    P = RadialPotential(WeightSpec.power(c, a, 0.0, 2.0), d)
    cert = certify_finiteness(P)
    if cert.status is Status.CERTIFIED:
        assert np.all(cert.margin.values <= 1.0)
        assert cert.margin.r[0] == cert.R
        assert cert.outside_form_min_eig >= -1e-8
        m = birman_margin if cert.criterion is Criterion.BIRMAN else improved_margin
        assert m(P, cert.R * 1.7) <= 1.0


@pytest.mark.parametrize("L", [1e2, 1e3, 1e4])
def test_outside_form_at_critical_coupling(L):
    assert outside_form_nonnegativity(inverse_square(0.25), 1.0, L=L) >= -1e-8


def test_outside_form_supercritical_turns_negative():
    assert outside_form_nonnegativity(inverse_square(0.5), 1.0, L=1e4) < 0


def test_outside_form_rejects_d2_at_unit_radius():
    with pytest.raises(InputError):
        outside_form_nonnegativity(inverse_square(0.1, d=2), 1.0)


@pytest.mark.parametrize("d", [3, 4, 5])
def test_peel_consistency_of_forms(d):
    """Improved-route form of u in dimension d equals the planar-type form of r^k u."""
    k = (d - 2) / 2
    rng = np.random.default_rng(d)
    R = 1.5
    r = np.geomspace(R, 40.0, 9)
    vals = rng.normal(size=r.size)
    vals[-1] = 0.0
    u = GridFunction(LogGrid(r), vals)
    c = k * k + 0.3
    P = RadialPotential(WeightSpec.power(c, -2.0, 0.0, 1.0), d)
    lhs = form_value(P, u, R, robin_constant(d, R, "improved"))

    def ut(x):
        return x**k * float(u([x])[0])

    def ut_prime(x, j):
        slope = (vals[j + 1] - vals[j]) / (r[j + 1] - r[j])
        return k * x ** (k - 1) * float(u([x])[0]) + x**k * slope

    rhs = ut(R) ** 2 / math.log(R)
    for j in range(r.size - 1):
        a, b = r[j], r[j + 1]
        rhs += quad(lambda x: ut_prime(x, j) ** 2 * x, a, b, epsabs=0, epsrel=1e-13)[0]
        rhs -= quad(lambda x: (c - k * k) / x**2 * ut(x) ** 2 * x, a, b, epsabs=0, epsrel=1e-13)[0]
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-10)


@pytest.mark.parametrize("depth", [3.0, 30.0, 100.0])
def test_square_well_count(depth):
    # s-wave bound states of a ball of radius 1: floor(sqrt(V0)/pi + 1/2)
    P = RadialPotential(WeightSpec.power(depth, 0.0, 0.0, 0.0, 1.0), 3)
    expected = math.floor(math.sqrt(depth) / math.pi + 0.5)
    assert count_negative_eigenvalues_radial(P, 0, 100.0) == expected


def test_square_well_needs_room():
    # outside the well the zero-energy solution is linear and vanishes near r = 4.55
    P = RadialPotential(WeightSpec.power(3.0, 0.0, 0.0, 0.0, 1.0), 3)
    assert count_negative_eigenvalues_radial(P, 0, 4.0) == 0
    assert count_negative_eigenvalues_radial(P, 0, 5.0) == 1


def test_one_dimensional_sectors():
    # even and odd states of a well of half-width 1 and depth V0 on the line
    V0 = 20.0
    P = RadialPotential(WeightSpec.power(V0, 0.0, 0.0, 0.0, 1.0), 1)
    even = count_negative_eigenvalues_radial(P, 0, 200.0)
    odd = count_negative_eigenvalues_radial(P, 1, 200.0)
    k = math.sqrt(V0)
    assert even == math.floor(k / math.pi) + 1
    assert odd == math.floor(k / math.pi + 0.5)


def test_subcritical_counts_bounded_and_supercritical_grow():
    ladder = [1e2, 1e4, 1e8, 1e12]
    sub = [count_negative_eigenvalues_radial(inverse_square(0.2), 0, L) for L in ladder]
    assert sub == [0, 0, 0, 0]
    sup = [count_negative_eigenvalues_radial(inverse_square(0.5), 0, L) for L in ladder]
    assert all(b >= a for a, b in zip(sup, sup[1:]))
    for L, n in zip(ladder, sup):
        assert abs(n - 0.5 / math.pi * math.log(L)) <= 1.0


def test_count_table_totals():
    table = count_table(inverse_square(0.5), 2, [1e4])
    per = table["per_ell"][1e4]
    assert table["total"][1e4] == sum(multiplicity(3, ell) * n for ell, n in per.items())
    assert [multiplicity(3, ell) for ell in range(4)] == [1, 3, 5, 7]
    assert [multiplicity(2, ell) for ell in range(3)] == [1, 2, 2]
    assert [multiplicity(4, ell) for ell in range(3)] == [1, 4, 9]


def test_counter_input_errors():
    with pytest.raises(InputError):
        count_negative_eigenvalues_radial(inverse_square(0.2), -1, 10.0)
    with pytest.raises(InputError):
        count_negative_eigenvalues_radial(inverse_square(0.2), 0, math.inf)
    with pytest.raises(InputError):
        count_negative_eigenvalues_radial(inverse_square(0.5, lo=0.0), 0, 10.0)
    with pytest.raises(InputError):
        RadialPotential(WeightSpec.power(1.0, -1.0, -1.0, 1.0, 2.0), 3)
    with pytest.raises(InputError):
        RadialPotential(WeightSpec.zero(), 0)


@pytest.mark.parametrize("c", [0.35, 0.5, 1.0])
def test_counts_match_closed_form_zeros(c):
    # Q = 0 inside r = 1 gives y = e^(t/2); outside y = sin(w t + a) with w = sqrt(c - 1/4), cot a = 1/(2 w)
    w = math.sqrt(c - 0.25)
    a = math.atan2(2 * w, 1.0)
    P = inverse_square(c)
    for L in (1e2, 1e3, 1e4, 1e6):
        expected = math.floor((w * math.log(L) + a) / math.pi)
        assert count_negative_eigenvalues_radial(P, 0, L) == expected
