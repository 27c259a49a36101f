import math

import numpy as np
import pytest
from scipy.linalg import eigh
from scipy.optimize import brentq

from hardylab.gridfn import InputError, WeightSpec
from hardylab.sharp_estimator import (
    EstimatorConfig,
    _Discrete,
    best_constant_general_p,
    best_constant_p2,
    sandwich,
    truncated_hardy_oracle,
)
from helpers import random_weight_pair

ONE = WeightSpec.power()
INV2 = WeightSpec.power(1.0, -2.0)


def test_truncated_hardy_against_oracle():
    cfg = EstimatorConfig(1e-6, 1e6, 4000)
    est = best_constant_p2(ONE, INV2, cfg)
    oracle = truncated_hardy_oracle(1e-6, 1e6)
    assert oracle == pytest.approx(3.8276, abs=1e-4)
    assert est.converged
    assert est.value == pytest.approx(oracle, abs=1e-4)
    assert est.value <= 4.0


def test_indicator_weight_against_transcendental_oracle():
    # u linear on (eps, 1), cos(k (r - 2)) on (1, 2), constant after: k tan k = 1/(1 - eps), C = 1/k^2
    eps = 1e-3
    k = brentq(lambda k: k * math.tan(k) - 1.0 / (1.0 - eps), 0.1, 1.5)
    est = best_constant_p2(ONE, WeightSpec.indicator(1.0, 2.0), EstimatorConfig(eps, 1e3, 2000))
    assert est.value == pytest.approx(1.0 / k**2, rel=1e-5)


def test_against_dense_generalised_eigensolver():
    rng = np.random.default_rng(3)
    for _ in range(5):
        V, W = random_weight_pair(rng, 2.0)
        cfg = EstimatorConfig(1e-2, 1e2, 120)
        d = _Discrete(V, W, cfg)
        Md, Mo = d.mass_bands()
        Kd, Ko = d.stiffness_bands(d.kv)
        M = np.diag(Md[1:]) + np.diag(Mo[1:], 1) + np.diag(Mo[1:], -1)
        K = np.diag(Kd[1:]) + np.diag(Ko[1:], 1) + np.diag(Ko[1:], -1)
        top = eigh(M, K, eigvals_only=True)[-1]
        assert best_constant_p2(V, W, cfg).value == pytest.approx(top, rel=1e-9)


def test_zero_weight():
    assert best_constant_p2(ONE, WeightSpec.zero(), EstimatorConfig(N=100)).value == 0.0
    assert best_constant_general_p(ONE, WeightSpec.zero(), EstimatorConfig(N=100, p=3.0)).value == 0.0
    res = sandwich(ONE, WeightSpec.zero(), 2.0)
    assert (res.lower, res.estimate, res.upper) == (0.0, 0.0, 0.0)


def test_vanishing_v_is_rejected():
    V = WeightSpec.from_pieces([(0, 1, 1.0, 0, 0), (2, math.inf, 1.0, 0, 0)])
    with pytest.raises(InputError):
        best_constant_p2(V, INV2, EstimatorConfig(0.1, 10.0, 50))


@pytest.mark.parametrize("bad", [dict(eps=0.0), dict(eps=2.0, L=1.0), dict(N=8), dict(tol=0.0), dict(p=1.0)])
def test_config_validation(bad):
    with pytest.raises(InputError):
        EstimatorConfig(**bad)


def test_general_p_reduces_to_p2():
    cfg = EstimatorConfig(1e-4, 1e4, 1500)
    rng = np.random.default_rng(8)
    for V, W in [(ONE, INV2)] + [random_weight_pair(rng, 2.0) for _ in range(3)]:
        a = best_constant_p2(V, W, cfg).value
        b = best_constant_general_p(V, W, cfg).value
        assert b == pytest.approx(a, rel=1e-6)


def test_general_p_three_band_and_monotone_history():
    est = best_constant_general_p(ONE, WeightSpec.power(1.0, -3.0), EstimatorConfig(p=3.0))
    assert est.converged
    assert 0.6 * 1.5**3 < est.value <= 1.5**3
    assert all(b >= a for a, b in zip(est.history, est.history[1:]))


@pytest.mark.parametrize("p", [1.5, 2.5, 4.0])
def test_general_p_random_monotone_and_below_upper(p):
    rng = np.random.default_rng(int(10 * p))
    for _ in range(3):
        V, W = random_weight_pair(rng, p)
        res = sandwich(V, W, p, EstimatorConfig(1e-3, 1e3, 400, p))
        assert res.converged
        assert res.estimate <= res.upper * (1 + 1e-9)


def test_domain_monotonicity_on_nested_grids():
    # same geometric ratio, so the smaller grid is a subset of the larger one
    q = 10.0 ** (12 / 3999)
    small = EstimatorConfig(1e-6, 1e6, 4000)
    rng = np.random.default_rng(1)
    V, W = random_weight_pair(rng, 2.0)
    values = []
    for k in (0, 50, 200):
        cfg = EstimatorConfig(small.eps / q**k, small.L * q**k, 4000 + 2 * k)
        values.append(best_constant_p2(V, W, cfg).value)
    assert values[0] <= values[1] * (1 + 1e-12) and values[1] <= values[2] * (1 + 1e-12)


@pytest.mark.parametrize("p", [2.0, 3.0])
def test_scale_equivariance(p):
    rng = np.random.default_rng(2)
    V, W = random_weight_pair(rng, p)
    cfg = EstimatorConfig(1e-3, 1e3, 500, p)
    solve = best_constant_p2 if p == 2 else best_constant_general_p
    base = solve(V, W, cfg).value
    assert solve(V, W.scaled(7.3), cfg).value == pytest.approx(7.3 * base, rel=1e-10)


def test_sandwich_examples():
    res = sandwich(ONE, INV2, 2.0)
    assert res.lower == pytest.approx(2.0, rel=1e-9)
    assert res.upper == pytest.approx(4.0, rel=1e-9)
    assert res.estimate == pytest.approx(3.80, abs=0.05) and res.ordered
    res = sandwich(ONE, WeightSpec.indicator(1.0, 2.0), 2.0, EstimatorConfig(1e-3, 1e3, 2000))
    assert 0 < res.lower <= res.estimate <= res.upper < math.inf


def test_sandwich_with_infinite_upper_bound():
    res = sandwich(ONE, WeightSpec.power(1.0, -1.0), 2.0, EstimatorConfig(1e-3, 1e3, 200))
    assert math.isinf(res.upper) and math.isfinite(res.estimate)
