"""Changes of variables: the phi/psi reparametrisation, the mirror r -> 1/r,
the logarithmic map x = ln r and the peeling u -> r**((d-2)/2) u."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .gridfn import (
    INF,
    Extension,
    GridFunction,
    InputError,
    Kind,
    LogGrid,
    Segment,
    WeightSpec,
    _legendre,
    cumulative,
    integrate,
    lp_energy,
    piece_integrals,
    power_of_inverse,
    slopes,
    weighted_lp,
)
from .hardy_core import check_p

SUB_STEP = 4e-4  # max ln-ratio of a cell in the resampled grid
HEAD_TOL = 1e-10  # energy fraction allowed to be left below the padded grid
HEAD_MAX_DECADES = 40.0
BISECT_STEPS = 64


# --------------------------------------------------------------------------
# phi / psi
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PhiMap:
    """phi(r) = int_0^r V**(-1/(p-1)) and its inverse psi on (0, L)."""

    V: WeightSpec
    p: float
    Vq: WeightSpec = field(init=False, repr=False)
    L: float = field(init=False)

    def __post_init__(self):
        check_p(self.p)
        Vq = power_of_inverse(self.V, self.p)
        finite = [s.hi for s in self.V.segments if math.isfinite(s.hi)]
        probe = 2.0 * max([1.0] + finite)
        if integrate(Vq, 0.0, probe).divergent:
            raise InputError("V**(-1/(p-1)) is not locally integrable at the origin")
        object.__setattr__(self, "Vq", Vq)
        object.__setattr__(self, "L", integrate(Vq, 0.0, INF).value)

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        flat = r.ravel()
        if flat.size == 0:
            return r.copy()
        if np.any(~(flat > 0)) or np.any(~np.isfinite(flat)):
            raise InputError("phi needs finite positive radii")
        order = np.argsort(flat)
        rs = flat[order]
        vals = integrate(self.Vq, 0.0, rs[0]).value + cumulative(self.Vq, rs)
        out = np.empty_like(flat)
        out[order] = vals
        return out.reshape(r.shape)

    def psi(self, rho):
        """Inverse of phi by bisection in ln r."""
        rho = np.asarray(rho, dtype=float)
        flat = rho.ravel()
        if np.any(~(flat > 0)) or np.any(~(flat < self.L)):
            raise InputError("psi needs 0 < rho < L")
        lo = np.zeros_like(flat)
        hi = np.zeros_like(flat)
        # bracket: decades below and above r = 1
        while True:
            bad = self.phi(np.exp(lo)) >= flat
            if not np.any(bad):
                break
            lo = np.where(bad, lo - math.log(10.0), lo)
            if lo.min() < -700:
                raise InputError("psi bracket left the double range")
        while True:
            bad = self.phi(np.exp(hi)) < flat
            if not np.any(bad):
                break
            hi = np.where(bad, hi + math.log(10.0), hi)
            if hi.max() > 700:
                raise InputError("psi bracket left the double range")
        for _ in range(BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            below = self.phi(np.exp(mid)) < flat
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
            if np.all(hi - lo <= 1e-15):
                break
        return np.exp(0.5 * (lo + hi)).reshape(rho.shape)


def phi(m: PhiMap, r):
    return m.phi(r)


def psi(m: PhiMap, rho):
    return m.psi(rho)


# --------------------------------------------------------------------------
# substitution rho = phi(r)
# --------------------------------------------------------------------------


class Substituted(NamedTuple):
    u_tilde: GridFunction
    W_tilde: GridFunction


def _head_pad(m: PhiMap, r0: float) -> float:
    """Lowest radius needed so the linear head below it carries a negligible V-mass."""
    total = integrate(m.V, 0.0, r0)
    if total.divergent:
        return r0
    lo = r0
    while math.log10(r0 / lo) < HEAD_MAX_DECADES:
        lo /= 10.0
        if integrate(m.V, 0.0, lo).value <= HEAD_TOL * total.value:
            break
    return lo


def _abs_power_mean(a: np.ndarray, b: np.ndarray, p: float) -> np.ndarray:
    """Mean of |t|**p for t running linearly from a to b."""
    x, y = np.abs(a), np.abs(b)
    lo, hi = np.minimum(x, y), np.maximum(x, y)
    opposite = a * b < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        ell = np.log(hi / lo)
        same = np.where(
            ell < 1e-300,
            lo**p,
            lo**p * np.expm1((p + 1) * ell) / ((p + 1) * np.expm1(ell)),
        )
        same = np.where(lo == 0.0, hi**p / (p + 1), same)
        across = (x ** (p + 1) + y ** (p + 1)) / ((p + 1) * (x + y))
    return np.where(opposite, across, np.where(hi == 0.0, 0.0, same))


def step_weighted_lp(w: GridFunction, u: GridFunction, p: float) -> float:
    """Integral of w |u|**p for a step w and a linear u on the same grid."""
    if w.kind is not Kind.STEP or u.kind is not Kind.LINEAR or w.grid != u.grid:
        raise InputError("need a step weight and a linear function on one grid")
    r, v = u.r, u.values
    cells = np.diff(r) * _abs_power_mean(v[:-1], v[1:], p)
    total = float(np.sum(w.values[1:] * cells))
    if u.extension is Extension.LINEAR0:
        total += w.values[0] * r[0] * abs(v[0]) ** p / (p + 1)
    elif u.extension is Extension.CONSTANT:
        total += w.values[0] * r[0] * abs(v[0]) ** p
    if w.extension is Extension.CONSTANT and u.tail_value() != 0.0:
        return INF
    return total


def _match_head(m: PhiMap, r0: float, nodes, u_vals, w_vals, W: WeightSpec, p: float):
    """Split the linear head (0, rho_0] at rho_0/2 so its energy is exact.

    A head linear in rho has the least energy among functions with the same
    end value, so when V-mass below r_0 is not negligible the exact energy
    exceeds it and a midpoint value reproducing it exists.  W_tilde keeps
    one value on both halves, scaled to the exact weighted head integral.
    """
    v0, rho0 = float(u_vals[0]), float(nodes[0])
    exact = abs(v0 / r0) ** p * integrate(m.V, 0.0, r0).value
    half = 0.5 * rho0
    scale = half ** (1.0 - p)

    def excess(z):
        return (abs(0.5 * v0 + z) ** p + abs(0.5 * v0 - z) ** p) * scale - exact

    if excess(0.0) >= 0.0:
        return nodes, u_vals, w_vals
    hi = abs(v0)
    while excess(math.copysign(hi, v0)) < 0.0:
        hi *= 2.0
    z = brentq(lambda t: excess(math.copysign(t, v0)), 0.0, hi, xtol=1e-15 * hi, rtol=4 * np.finfo(float).eps)
    y = 0.5 * v0 + math.copysign(z, v0)
    weighted = abs(v0 / r0) ** p * integrate(W.times_power(p), 0.0, r0).value
    base = half * abs(y) ** p / (p + 1) + half * float(_abs_power_mean(np.array([y]), np.array([v0]), p)[0])
    c = weighted / base if base > 0 else 0.0
    nodes = np.concatenate(([half], nodes))
    u_vals = np.concatenate(([y], u_vals))
    w_vals = np.concatenate(([c, c], w_vals[1:]))
    return nodes, u_vals, w_vals


def substitute(u: GridFunction, V: WeightSpec, W: WeightSpec, p: float, step: float = SUB_STEP) -> Substituted:
    """Move u and W to the variable rho = phi(r).

    The result lives on the phi-images of a refined copy of u's grid: cells
    are at most ``step`` wide in ln r, and a nonzero linear head is padded
    downwards until its V-mass is negligible.  ``W_tilde`` is a step function
    holding the exact W-mass of every cell, so ``int W_tilde |u_tilde|^p``
    differs from ``int W |u|^p`` only by the linearisation of u o psi.  Beyond
    the last node of u the constant tail is carried by one extra cell ending
    at L (or at phi(10 r_N) when L is infinite) that holds all remaining
    W-mass; past L, u_tilde stays constant and W_tilde vanishes.
    """
    if u.kind is not Kind.LINEAR:
        raise InputError("substitute needs a piecewise-linear u")
    m = PhiMap(V, p)
    r, v = u.r, u.values
    head_live = u.extension is Extension.LINEAR0 and v[0] != 0.0
    lo = _head_pad(m, r[0]) if head_live else r[0]
    n = max(2, int(math.ceil(math.log(r[-1] / lo) / step)) + 1)
    extra = [b for b in V.breakpoints() + W.breakpoints() if lo < b < r[-1]]
    keep = np.unique(np.concatenate((r, extra, [lo])))
    geo = np.geomspace(lo, r[-1], n)
    # drop filler points that nearly coincide with a kept node
    j = np.clip(np.searchsorted(keep, geo), 1, keep.size - 1)
    gap = np.minimum(np.abs(np.log(geo / keep[j - 1])), np.abs(np.log(keep[j] / geo)))
    fine = np.union1d(keep, geo[gap > 0.1 * step])
    vals = u(fine)

    drho = piece_integrals(m.Vq, fine[:-1], fine[1:])
    rho = integrate(m.Vq, 0.0, fine[0]).value + np.concatenate(([0.0], np.cumsum(drho)))
    mass = piece_integrals(W, fine[:-1], fine[1:])

    # head cell (0, rho_0]
    head_mass = integrate(W, 0.0, fine[0])
    if u.extension is Extension.LINEAR0:
        if vals[0] == 0.0:
            head = 0.0 if head_mass.divergent else head_mass.value / rho[0]
        else:
            exact = abs(vals[0] / fine[0]) ** p * integrate(W.times_power(p), 0.0, fine[0]).value
            head = exact / (rho[0] * abs(vals[0]) ** p / (p + 1))
    elif u.extension is Extension.CONSTANT and vals[0] != 0.0:
        if head_mass.divergent:
            raise InputError("int W |u|^p diverges at the origin")
        head = head_mass.value / rho[0]
    else:
        head = 0.0 if head_mass.divergent else head_mass.value / rho[0]

    cell_w = np.where(drho > 0, mass / np.where(drho > 0, drho, 1.0), 0.0)
    w_vals = np.concatenate(([head], cell_w))
    u_vals = vals
    nodes = rho
    if head_live:
        nodes, u_vals, w_vals = _match_head(m, fine[0], nodes, u_vals, w_vals, W, p)

    tail = u.tail_value()
    if u.extension is not Extension.ZERO:
        end = m.L if math.isfinite(m.L) else float(m.phi(10.0 * fine[-1]))
        rest = integrate(W, fine[-1], INF)
        if rest.divergent and tail != 0.0:
            raise InputError("int W |u|^p diverges at infinity")
        rest_val = 0.0 if rest.divergent else rest.value
        if end > nodes[-1]:
            nodes = np.append(nodes, end)
            u_vals = np.append(u_vals, tail)
            w_vals = np.append(w_vals, rest_val / (end - rho[-1]))

    grid = LogGrid(nodes)
    ut = GridFunction(grid, u_vals, u.extension, Kind.LINEAR)
    wt = GridFunction(grid, w_vals, Extension.ZERO, Kind.STEP)
    return Substituted(ut, wt)


def conservation(u: GridFunction, V: WeightSpec, W: WeightSpec, p: float) -> dict:
    """Both sides of the two substitution identities."""
    ut, wt = substitute(u, V, W, p)
    return {
        "energy": (lp_energy(u, p, V), lp_energy(ut, p)),
        "weighted": (weighted_lp(u, W, p), step_weighted_lp(wt, ut, p)),
    }


# --------------------------------------------------------------------------
# mirror r -> 1/r
# --------------------------------------------------------------------------


def _mirror(spec: WeightSpec, shift) -> WeightSpec:
    segs = []
    for s in reversed(spec.segments):
        lo = 0.0 if s.hi == INF else 1.0 / s.hi
        hi = INF if s.lo == 0.0 else 1.0 / s.lo
        if s.is_zero:
            segs.append(Segment(lo, hi, 0.0))
        else:
            segs.append(Segment(lo, hi, s.c, shift(s.a), s.b))
    return WeightSpec(tuple(segs))


def invert_halfline(V: WeightSpec, W: WeightSpec, p: float) -> tuple[WeightSpec, WeightSpec]:
    """V(1/rho) rho**(2p-2) and W(1/rho) rho**-2, segment by segment.

    |ln(1/rho)| = |ln rho|, so log exponents carry over unchanged.  Applying
    the map twice returns the input up to one rounding in each breakpoint
    and exponent; dyadic data comes back bit for bit.
    """
    check_p(p)
    V_inv = _mirror(V, lambda a: -a + 2.0 * p - 2.0)
    W_inv = _mirror(W, lambda a: -a - 2.0)
    return V_inv, W_inv


# --------------------------------------------------------------------------
# logarithmic map x = ln r
# --------------------------------------------------------------------------

_X_PANEL = 0.05
_X_ORDER = 20


def _gauss_cells(edges: np.ndarray, f) -> float:
    """Sum of Gauss-Legendre integrals of f over consecutive [edges[i], edges[i+1]]."""
    a, b = edges[:-1], edges[1:]
    m = np.maximum(1, np.ceil((b - a) / _X_PANEL)).astype(int)
    owner = np.repeat(np.arange(a.size), m)
    j = np.arange(m.sum()) - np.repeat(np.cumsum(m) - m, m)
    h = ((b - a) / m)[owner]
    left = a[owner] + j * h
    xi, wi = _legendre(_X_ORDER)
    X = left[:, None] + 0.5 * h[:, None] * (xi + 1.0)
    F = f(X, owner[:, None])
    return float(np.sum(0.5 * h * (F @ wi)))


def _restrict(u: GridFunction, R: float) -> GridFunction:
    """u on [R, inf) as a linear function starting at R; its tail stays as in u."""
    r = u.r
    inner = r[r > R]
    tail = u.tail_value()
    if inner.size == 0:
        inner = np.array([math.e * R])
    nodes = np.concatenate(([R], inner))
    vals = u(nodes)
    if inner.size == 1 and r[-1] <= R:
        vals[-1] = tail
    ext = Extension.ZERO if u.extension is Extension.ZERO else Extension.CONSTANT
    return GridFunction(LogGrid(nodes), vals, ext)


@dataclass(frozen=True)
class LogMap:
    f: GridFunction  # u(e^x) at x = ln r_j, linear in x between nodes
    w: GridFunction  # e^{2x} W(e^x) sampled at the same x
    X: float
    c_R: float
    lhs: float
    rhs: float
    potential_lhs: float
    potential_rhs: float

    def to_dict(self) -> dict:
        return {
            "X": self.X,
            "c_R": self.c_R,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "potential_lhs": self.potential_lhs,
            "potential_rhs": self.potential_rhs,
            "x": self.f.r.tolist(),
            "f": self.f.values.tolist(),
            "w": self.w.values.tolist(),
        }


def log_map(u: GridFunction, W: WeightSpec, R: float) -> LogMap:
    """Pull u on (R, inf) back to x = ln r, with the identity checked both ways.

    The r side uses the closed-form cell energies; the x side integrates the
    exact composition f = u o exp by Gauss-Legendre in x.  Both sides also
    carry the potential term: int W |u|^2 r dr against int w |f|^2 dx.
    """
    if not (R > 1.0 and math.isfinite(R)):
        raise InputError("the log map needs a finite R > 1")
    if u.kind is not Kind.LINEAR:
        raise InputError("log_map needs a piecewise-linear u")
    for s in W.segments:
        if not s.is_zero and s.lo < R:
            raise InputError("W must vanish on (0, R)")
    ur = _restrict(u, R)
    r, v = ur.r, ur.values
    X = math.log(R)
    c_R = 1.0 / X
    lhs = lp_energy(ur, 2.0, WeightSpec.power(1.0, 1.0)) + c_R * v[0] ** 2
    pot_lhs = weighted_lp(ur, W.times_power(1.0), 2.0)

    x = np.log(r)
    beta = slopes(ur)
    grad = _gauss_cells(x, lambda t, i: (beta[i] * np.exp(t)) ** 2)
    rhs = grad + v[0] ** 2 / X

    cuts = [math.log(b) for b in W.breakpoints() if r[0] < b < r[-1]]
    edges = np.unique(np.concatenate((x, cuts)))
    pot = _gauss_cells(edges, lambda t, i: np.exp(2 * t) * W(np.exp(t)) * ur(np.exp(t)) ** 2)
    tail = ur.tail_value()
    if tail != 0.0:
        pot += tail**2 * integrate(W.times_power(1.0), r[-1], INF).value

    f = GridFunction(LogGrid(x), v, ur.extension)
    w = GridFunction(LogGrid(x), np.exp(2 * x) * W(r), Extension.ZERO)
    return LogMap(f, w, X, c_R, float(lhs), float(rhs), float(pot_lhs), float(pot))


# --------------------------------------------------------------------------
# peeling u -> r**((d-2)/2) u
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PeelCheck:
    lhs: float
    gradient: float
    potential: float
    boundary: float

    @property
    def rhs(self) -> float:
        return self.gradient + self.potential + self.boundary


def _peel_input(u: GridFunction, d: int, R: float) -> GridFunction:
    if int(d) != d or d < 1:
        raise InputError("dimension must be a positive integer")
    if not (R > 0 and math.isfinite(R)):
        raise InputError("R must be a finite positive radius")
    if u.kind is not Kind.LINEAR:
        raise InputError("peel_hardy needs a piecewise-linear u")
    if u.values[-1] != 0.0:
        raise InputError("u must vanish at its last node")
    if u.r[-1] <= R:
        raise InputError("u has no nodes beyond R")
    return _restrict(u, R)


def peel_hardy(u: GridFunction, d: int, R: float) -> GridFunction:
    """r**((d-2)/2) u on [R, r_N], zero beyond."""
    ur = _peel_input(u, d, R)
    k = (d - 2) / 2.0
    return GridFunction(ur.grid, ur.r**k * ur.values, Extension.ZERO)


def peel_identity(u: GridFunction, d: int, R: float) -> PeelCheck:
    """Both sides of the peeled energy identity on (R, inf).

    The left side is exact; the right side integrates the exact peeled
    function (not its linear interpolant) by Gauss-Legendre in ln r.
    """
    ur = _peel_input(u, d, R)
    r, v = ur.r, ur.values
    k = (d - 2) / 2.0
    beta = slopes(ur)
    lhs = float(np.sum(beta**2 * (r[1:] ** d - r[:-1] ** d) / d))
    x = np.log(r)

    def parts(t, i):
        s = np.exp(t)
        uu = v[i] + beta[i] * (s - r[i])
        du = k * s ** (k - 1) * uu + s**k * beta[i]
        return du, s**k * uu, s

    grad = _gauss_cells(x, lambda t, i: (lambda du, ut, s: du**2 * s * s)(*parts(t, i)))
    pot = _gauss_cells(x, lambda t, i: (lambda du, ut, s: k * k * ut**2)(*parts(t, i)))
    boundary = k * (R**k * v[0]) ** 2
    return PeelCheck(lhs, grad, pot, boundary)
