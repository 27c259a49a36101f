"""Sup-type functionals, their duals and the extremizer families.

For ``alpha, beta > 0`` and nonnegative ``f, g``:

    mu_lower_alpha(f) = int  (sup_{s<=r} f(s)) r**(-1-alpha) dr
    mu_upper_beta(f)  = int  (sup_{s>=r} f(s)) r**(beta-1)  dr
    nu_upper_alpha(g) = sup_r r**alpha  int_r^inf g
    nu_lower_beta(g)  = sup_r r**-beta  int_0^r   g

Every grid function is first cut into affine cells ``a + b r`` covering
``(0, inf)`` (a head cell from 0 and a tail cell to infinity included), so
the running suprema are affine-or-constant on at most two pieces per cell
and every integral above is a closed form.  The nu-objectives are
``r**e`` times a quadratic on each cell and are maximized through the
roots of the derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .gridfn import INF, Extension, GridFunction, InputError, Kind, LogGrid, primitive


class Family(str, Enum):
    MU_LOWER = "mu_lower"
    MU_UPPER = "mu_upper"
    NU_UPPER = "nu_upper"
    NU_LOWER = "nu_lower"


class Side(str, Enum):
    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class DualityFunctional:
    family: Family
    parameter: float

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if not (self.parameter > 0 and math.isfinite(self.parameter)):
            raise InputError("the parameter must be a positive real")


# --------------------------------------------------------------------------
# affine cells
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class _Cells:
    lo: np.ndarray
    hi: np.ndarray
    a: np.ndarray
    b: np.ndarray

    @property
    def left(self):
        return self.a + self.b * self.lo

    @property
    def right(self):
        with np.errstate(invalid="ignore"):
            return np.where(self.b == 0.0, self.a, self.a + self.b * self.hi)


def _cells(f: GridFunction) -> _Cells:
    r, v = f.r, f.values
    lo = np.concatenate(([0.0], r))
    hi = np.concatenate((r, [INF]))
    if f.kind is Kind.STEP:
        a = np.append(v, f.tail_value())
        return _Cells(lo, hi, a, np.zeros(a.size))
    slope = np.diff(v) / np.diff(r)
    inner_a = v[:-1] - slope * r[:-1]
    if f.extension is Extension.LINEAR0:
        head_a, head_b = 0.0, v[0] / r[0]
    elif f.extension is Extension.CONSTANT:
        head_a, head_b = v[0], 0.0
    else:
        head_a, head_b = 0.0, 0.0
    a = np.concatenate(([head_a], inner_a, [f.tail_value()]))
    b = np.concatenate(([head_b], slope, [0.0]))
    return _Cells(lo, hi, a, b)


def _check_nonnegative(f: GridFunction) -> None:
    if np.any(f.values < 0) or f.tail_value() < 0:
        raise InputError("the functionals are defined for nonnegative functions")


def _power_integral(c: np.ndarray, k: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Elementwise int_lo^hi c r**k dr, with inf where it diverges and c > 0."""
    c, k, lo, hi = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (c, k, lo, hi)))
    out = np.zeros(c.shape)
    live = (c != 0.0) & (hi > lo)
    diverge = live & (((lo == 0.0) & (k <= -1.0)) | (np.isinf(hi) & (k >= -1.0)))
    ok = live & ~diverge
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        kk = k[ok] + 1.0
        l, h = lo[ok], hi[ok]
        log_case = kk == 0.0
        safe = np.where(log_case, 1.0, kk)
        top = np.where(np.isinf(h), 0.0, h**safe)
        bottom = np.where(l == 0.0, 0.0, l**safe)
        val = np.where(log_case, np.log(np.where(log_case, h / np.where(l > 0, l, 1.0), 1.0)), (top - bottom) / safe)
    out[ok] = c[ok] * val
    out[diverge] = np.sign(c[diverge]) * INF
    return out


def _affine_power(a, b, e, lo, hi) -> np.ndarray:
    """int_lo^hi (a + b r) r**e dr elementwise (a + b r >= 0 on the piece)."""
    e = np.full(np.shape(a), float(e))
    return _power_integral(a, e, lo, hi) + _power_integral(b, e + 1.0, lo, hi)


# --------------------------------------------------------------------------
# mu functionals
# --------------------------------------------------------------------------


def _mu_lower(c: _Cells, alpha: float) -> float:
    ends = np.maximum(c.left, c.right)
    prev = np.concatenate(([0.0], np.maximum.accumulate(ends)[:-1]))
    rising = c.b > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(rising, np.clip((prev - c.a) / np.where(rising, c.b, 1.0), c.lo, c.hi), c.hi)
    const = np.where(rising, prev, np.maximum(prev, c.left))
    part1 = _affine_power(const, np.zeros_like(const), -1.0 - alpha, c.lo, m)
    part2 = _affine_power(np.where(rising, c.a, 0.0), np.where(rising, c.b, 0.0), -1.0 - alpha, m, c.hi)
    return float(np.sum(part1) + np.sum(part2))


def _mu_upper(c: _Cells, beta: float) -> float:
    ends = np.maximum(c.left, c.right)
    nxt = np.concatenate((np.maximum.accumulate(ends[::-1])[::-1][1:], [0.0]))
    falling = c.b < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        m = np.where(falling, np.clip((nxt - c.a) / np.where(falling, c.b, 1.0), c.lo, c.hi), c.lo)
    part1 = _affine_power(np.where(falling, c.a, 0.0), np.where(falling, c.b, 0.0), beta - 1.0, c.lo, m)
    const = np.where(falling, nxt, np.maximum(nxt, c.right))
    part2 = _affine_power(const, np.zeros_like(const), beta - 1.0, m, c.hi)
    return float(np.sum(part1) + np.sum(part2))


# --------------------------------------------------------------------------
# nu functionals
# --------------------------------------------------------------------------


def _cell_mass(c: _Cells) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        mass = c.a * (c.hi - c.lo) + 0.5 * c.b * (c.hi**2 - c.lo**2)
    return np.where((c.a == 0.0) & (c.b == 0.0), 0.0, mass)


def _edge_limit(coeffs: list[float], e: float, at_zero: bool) -> float:
    """Limit of r**e (h0 + h1 r + h2 r**2) at 0 or at infinity."""
    order = range(3) if at_zero else range(2, -1, -1)
    for k in order:
        h = coeffs[k]
        if h == 0.0:
            continue
        power = k + e
        if at_zero:
            return INF if power < 0 else (h if power == 0 else 0.0)
        return INF if power > 0 else (h if power == 0 else 0.0)
    return 0.0


def _nu(c: _Cells, e: float, upper: bool) -> tuple[float, float]:
    """sup_r r**e F(r) with F the tail (upper) or head (lower) integral of g."""
    mass = _cell_mass(c)
    if upper:
        if mass[-1] > 0:
            return INF, INF
        base = np.concatenate((np.cumsum(mass[::-1])[::-1][1:], [0.0]))  # int_{hi}^inf
        with np.errstate(invalid="ignore"):
            h0 = base + c.a * c.hi + 0.5 * c.b * c.hi**2
        h1, h2 = -c.a, -0.5 * c.b
        h0[-1] = 0.0
    else:
        base = np.concatenate(([0.0], np.cumsum(mass)[:-1]))  # int_0^{lo}
        h0 = base - c.a * c.lo - 0.5 * c.b * c.lo**2
        h1, h2 = c.a, 0.5 * c.b

    best, arg = 0.0, float("nan")
    lim0 = _edge_limit([h0[0], h1[0], h2[0]], e, at_zero=True)
    liminf = _edge_limit([h0[-1], h1[-1], h2[-1]], e, at_zero=False)
    if lim0 > best:
        best, arg = lim0, 0.0
    if liminf > best:
        best, arg = liminf, INF

    # derivative of r**e (h0 + h1 r + h2 r^2) vanishes where
    # (e + 2) h2 r^2 + (e + 1) h1 r + e h0 = 0
    A, B, C = (e + 2.0) * h2, (e + 1.0) * h1, e * h0
    with np.errstate(divide="ignore", invalid="ignore"):
        disc = np.sqrt(np.maximum(B * B - 4 * A * C, 0.0))
        quad = np.abs(A) > 1e-300
        # stable roots of the quadratic, or the linear root
        qq = -0.5 * (B + np.copysign(disc, B))
        r1 = np.where(quad, qq / np.where(quad, A, 1.0), -C / np.where(B != 0, B, np.nan))
        r2 = np.where(quad, C / np.where(qq != 0, qq, np.nan), np.nan)
    cand_r = np.concatenate((c.lo[1:], r1, r2))
    cell = np.concatenate((np.arange(1, c.lo.size), np.arange(c.lo.size), np.arange(c.lo.size)))
    ok = np.isfinite(cand_r) & (cand_r > 0)
    ok &= (cand_r >= c.lo[cell]) & (cand_r <= c.hi[cell])
    cand_r, cell = cand_r[ok], cell[ok]
    F = h0[cell] + h1[cell] * cand_r + h2[cell] * cand_r**2
    vals = cand_r**e * np.maximum(F, 0.0)
    if vals.size:
        j = int(np.argmax(vals))
        if vals[j] > best:
            best, arg = float(vals[j]), float(cand_r[j])
    return best, arg


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


def evaluate_with_argmax(F: DualityFunctional, f: GridFunction) -> tuple[float, float]:
    """Value of the functional and, for the nu-families, the maximizing radius."""
    _check_nonnegative(f)
    c = _cells(f)
    t = float(F.parameter)
    if F.family is Family.MU_LOWER:
        return _mu_lower(c, t), float("nan")
    if F.family is Family.MU_UPPER:
        return _mu_upper(c, t), float("nan")
    if F.family is Family.NU_UPPER:
        return _nu(c, t, upper=True)
    return _nu(c, -t, upper=False)


def evaluate(F: DualityFunctional, f: GridFunction) -> float:
    return evaluate_with_argmax(F, f)[0]


def extremizer(side: Side | str, s: float, parameter: float) -> GridFunction:
    """``alpha s**alpha 1_(s,inf)`` (lower) or ``beta s**-beta 1_(0,s)`` (upper)."""
    side = Side(side)
    if not s > 0:
        raise InputError("s must be positive")
    t = float(parameter)
    grid = LogGrid([s, 2.0 * s])
    if side is Side.LOWER:
        return GridFunction(grid, [0.0, t * s**t], Extension.CONSTANT, Kind.STEP)
    return GridFunction(grid, [t * s**-t, 0.0], Extension.ZERO, Kind.STEP)


def _affine_on(f: GridFunction, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients (a, b) of f = a + b r on sub-intervals inside single cells."""
    c = _cells(f)
    mid = np.where(np.isinf(hi), lo + 1.0, 0.5 * (lo + hi))
    j = np.searchsorted(c.hi, mid, side="left")
    return c.a[j], c.b[j]


def pair_integral(f: GridFunction, g: GridFunction) -> float:
    """Exact int_0^inf f g for grid functions of either kind."""
    cuts = np.union1d(f.r, g.r)
    lo = np.concatenate(([0.0], cuts))
    hi = np.concatenate((cuts, [INF]))
    fa, fb = _affine_on(f, lo, hi)
    ga, gb = _affine_on(g, lo, hi)
    # (fa + fb r)(ga + gb r) = c0 + c1 r + c2 r^2
    c0, c1, c2 = fa * ga, fa * gb + fb * ga, fb * gb
    total = _power_integral(c0, np.zeros_like(c0), lo, hi)
    total += _power_integral(c1, np.ones_like(c1), lo, hi)
    total += _power_integral(c2, np.full_like(c2, 2.0), lo, hi)
    return float(np.sum(total))


def _golden_cells(obj, lo: np.ndarray, hi: np.ndarray, steps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized golden-section maximization of obj on each [lo_i, hi_i] (log scale)."""
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = np.log(lo), np.log(hi)
    c, d = b - inv * (b - a), a + inv * (b - a)
    fc, fd = obj(np.exp(c)), obj(np.exp(d))
    for _ in range(steps):
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        nc = np.where(left, b - inv * (b - a), d)
        nd = np.where(left, c, a + inv * (b - a))
        fnew = obj(np.exp(np.where(left, nc, nd)))
        fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
        c, d = nc, nd
    x = np.where(fc >= fd, c, d)
    return np.exp(x), np.maximum(fc, fd)


def duality_gap(g: GridFunction, side: Side | str, parameter: float, s_grid=None) -> tuple[float, float]:
    """(sup of the pairing over the extremizer family, parameter * dual nu-functional).

    The pairing ``int f_s g`` is evaluated through the primitive of ``g``
    (``t s**t int_s^inf g`` or ``t s**-t int_0^s g``) and maximized by
    golden section on every cell of ``s_grid`` (default: the nodes of g),
    independently of the closed-form nu evaluation.
    """
    _check_nonnegative(g)
    side = Side(side)
    t = float(parameter)
    if side is Side.LOWER:
        dual = t * evaluate(DualityFunctional(Family.NU_UPPER, t), g)
    else:
        dual = t * evaluate(DualityFunctional(Family.NU_LOWER, t), g)
    if g.tail_value() > 0 and side is Side.LOWER:
        return INF, dual
    s = np.asarray(g.r if s_grid is None else s_grid, dtype=float)
    s = np.unique(np.concatenate((s, g.r)))
    total = float(primitive(g, g.r[-1:])[0])

    def pairing(x):
        x = np.asarray(x, dtype=float)
        G = primitive(g, x.ravel()).reshape(x.shape)
        if side is Side.LOWER:
            return t * x**t * np.maximum(total - G, 0.0)
        return t * x**-t * G

    lo = np.concatenate(([s[0] * 1e-8], s))
    hi = np.concatenate((s, [s[-1] * 1e8]))
    _, best = _golden_cells(pairing, lo, hi)
    return float(max(np.max(best), np.max(pairing(s)))), dual


def pairing_bound_check(f: GridFunction, g: GridFunction, side: Side | str, parameter: float) -> float:
    """Slack of the pairing bound: t * mu(f) * nu(g) - int f g (never below zero in exact arithmetic)."""
    _check_nonnegative(f)
    _check_nonnegative(g)
    side = Side(side)
    t = float(parameter)
    if side is Side.LOWER:
        mu = evaluate(DualityFunctional(Family.MU_LOWER, t), f)
        nu = evaluate(DualityFunctional(Family.NU_UPPER, t), g)
    else:
        mu = evaluate(DualityFunctional(Family.MU_UPPER, t), f)
        nu = evaluate(DualityFunctional(Family.NU_LOWER, t), g)
    bound = 0.0 if (mu == 0.0 or nu == 0.0) else t * mu * nu
    fg = pair_integral(f, g)
    if math.isinf(fg):
        return 0.0 if math.isinf(bound) else -INF
    return bound - fg
