"""Shared random generators for property tests."""

import math

import numpy as np

from hardylab.gridfn import Extension, GridFunction, WeightSpec, integrate


def random_weight_pair(rng: np.random.Generator, p: float):
    """A (V, W) pair with both B-constants finite.

    V behaves like r**gamma at both ends with kappa = 1 - gamma/(p-1) > 0, so
    Phi ~ r**kappa.  W is integrable against Phi**p at the origin and decays
    faster than r**(-1 - kappa (p-1)) at infinity; in between both weights
    are random piecewise powers.
    """
    kappa = rng.uniform(0.2, 1.5)
    gamma = (1.0 - kappa) * (p - 1.0)
    n_mid = int(rng.integers(1, 4))
    bps = np.sort(rng.uniform(-1.5, 1.5, n_mid + 1))
    bps = 10.0**bps
    d0, d1 = rng.uniform(0.1, 1.0, 2)

    v_pieces = [(0.0, bps[0], 1.0, gamma, 0.0)]
    w_pieces = [(0.0, bps[0], rng.uniform(0.2, 3.0), -1.0 - (p - 1.0) * kappa + d0, 0.0)]
    for lo, hi in zip(bps[:-1], bps[1:]):
        v_pieces.append((lo, hi, rng.uniform(0.2, 5.0), gamma + rng.uniform(-1.0, 1.0), 0.0))
        c = 0.0 if rng.uniform() < 0.2 else rng.uniform(0.1, 5.0)
        w_pieces.append((lo, hi, c, rng.uniform(-2.5, 1.0), 0.0))
    v_pieces.append((bps[-1], math.inf, rng.uniform(0.2, 5.0), gamma, 0.0))
    w_pieces.append((bps[-1], math.inf, rng.uniform(0.2, 3.0), -1.0 - (p - 1.0) * kappa - d1, 0.0))
    return WeightSpec.from_pieces(v_pieces), WeightSpec.from_pieces(w_pieces)


def random_u(rng: np.random.Generator, V: WeightSpec, W: WeightSpec) -> GridFunction:
    """Random linear u whose extension keeps both sides of the substitution finite."""
    r = np.geomspace(10 ** rng.uniform(-3, -1), 10 ** rng.uniform(1, 3), int(rng.integers(5, 40)))
    v = np.cumsum(rng.normal(size=r.size))
    ext = [Extension.LINEAR0, Extension.CONSTANT, Extension.ZERO][int(rng.integers(3))]
    if ext is Extension.CONSTANT and integrate(W, 0.0, r[0]).divergent:
        ext = Extension.LINEAR0
    if ext is Extension.LINEAR0 and integrate(V, 0.0, r[0]).divergent:
        v[0] = 0.0
    if ext is Extension.ZERO:
        v[-1] = 0.0
    return GridFunction.from_arrays(r, v, ext)


def random_compact(rng: np.random.Generator) -> GridFunction:
    """Random linear u on [1, r_N] vanishing at r_N."""
    r = np.geomspace(1.0, 10 ** rng.uniform(1, 3), int(rng.integers(3, 50)))
    v = rng.normal(size=r.size)
    v[-1] = 0.0
    return GridFunction.from_arrays(r, v)
