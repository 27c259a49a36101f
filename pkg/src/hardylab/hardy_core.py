"""Both sides of the classical, improved and one-sided Hardy inequalities.

For a piecewise-linear ``u`` the improved integrand on a cell
``[r_i, r_{i+1}]`` is

    max(M_i**p * r**-p,  S_i,  |u(r)/r|**p)

with ``M_i`` the largest ``|u|`` at nodes up to ``r_i`` and ``S_i`` the
largest ``|u(s)/s|**p`` at nodes from ``r_{i+1}`` on.  This holds because
``|u|`` and ``|u(s)/s|`` are both extremal at cell endpoints.  All pairwise
crossings of the three terms are available in closed form, so each cell is
cut into pieces on which one term is the maximum and integrated exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gridfn import (
    INF,
    Extension,
    GridFunction,
    InputError,
    Kind,
    LogGrid,
    _legendre,
    _jacobi,
    _panels,
    lp_energy,
    primitive,
)

P_MAX = 64.0
HOLD_RTOL = 1e-9


def check_p(p: float) -> float:
    p = float(p)
    if not p > 1:
        raise InputError("p must exceed 1")
    if p > P_MAX:
        raise InputError(f"p must not exceed {P_MAX:g}")
    return p


def sharp_factor(p: float) -> float:
    return (p / (p - 1.0)) ** p


# --------------------------------------------------------------------------
# per-piece integrals
# --------------------------------------------------------------------------


def _log_gl(alpha, beta, lo, hi, p):
    """Gauss-Legendre in ln r on pieces where u keeps a strict sign."""
    out = np.zeros(lo.size)
    if lo.size == 0:
        return out
    xi, wi = _legendre(24)
    owner, left, h = _panels(np.log(lo), np.log(hi), 0.25)
    X = left[:, None] + 0.5 * h[:, None] * (xi + 1.0)
    a, b = alpha[owner][:, None], beta[owner][:, None]
    F = np.abs(a * np.exp(-X) + b) ** p * np.exp(X)
    return np.bincount(owner, weights=0.5 * h * (F @ wi), minlength=lo.size)


def _jacobi_end(beta, lo, hi, p, at_left):
    """|beta|**p int |r - r0|**p r**-p over a short piece ending at the zero r0."""
    xj, wj = _jacobi(32, 0.0, p) if at_left else _jacobi(32, p, 0.0)
    R = lo[:, None] + 0.5 * (hi - lo)[:, None] * (1.0 + xj)
    return np.abs(beta) ** p * (0.5 * (hi - lo)) ** (p + 1.0) * ((R**-p) @ wj)


_JACOBI_SPAN = 1.5


def _classical_piece(alpha, beta, lo, hi, p, zero_lo, zero_hi):
    """Integral of |alpha/r + beta|**p over [lo, hi]; sign of u fixed inside."""
    if p == 2.0:
        return alpha**2 * (1.0 / lo - 1.0 / hi) + 2.0 * alpha * beta * np.log(hi / lo) + beta**2 * (hi - lo)
    out = np.zeros(lo.size)
    plain = ~(zero_lo | zero_hi)
    out[plain] = _log_gl(alpha[plain], beta[plain], lo[plain], hi[plain], p)
    # a zero of u at an end: a Jacobi panel of bounded ratio next to it, GL beyond
    for mask, at_left in ((zero_lo & ~zero_hi, True), (zero_hi & ~zero_lo, False)):
        if not np.any(mask):
            continue
        al, be, l, h = alpha[mask], beta[mask], lo[mask], hi[mask]
        if at_left:
            m = np.minimum(h, l * _JACOBI_SPAN)
            out[mask] = _jacobi_end(be, l, m, p, True) + _log_gl(al, be, m, h, p)
        else:
            m = np.maximum(l, h / _JACOBI_SPAN)
            out[mask] = _jacobi_end(be, m, h, p, False) + _log_gl(al, be, l, m, p)
    return out


def _power_piece(M, lo, hi, p):
    """Integral of M**p r**-p over [lo, hi]."""
    with np.errstate(invalid="ignore"):
        val = M**p * lo ** (1.0 - p) * -np.expm1((1.0 - p) * np.log(hi / lo)) / (p - 1.0)
    return np.where(M == 0.0, 0.0, val)


@dataclass(frozen=True)
class _Sides:
    classical: float
    left: float
    right: float
    improved: float


def _sides(u: GridFunction, p: float) -> _Sides:
    p = check_p(p)
    if u.kind is not Kind.LINEAR:
        raise InputError("Hardy functionals need a piecewise-linear u")
    r, v = u.r, u.values
    av = np.abs(v)
    if u.extension is Extension.CONSTANT and v[0] != 0.0:
        return _Sides(INF, INF, INF, INF)

    lo_c, hi_c = r[:-1], r[1:]
    beta = np.diff(v) / np.diff(r)
    alpha = v[:-1] - beta * lo_c
    M = np.maximum.accumulate(av)[:-1]
    q = (av / r) ** p
    S_all = np.maximum.accumulate(q[::-1])[::-1]
    S = S_all[1:]
    sigma = S ** (1.0 / p)

    with np.errstate(divide="ignore", invalid="ignore"):
        cand = np.stack(
            [
                -alpha / beta,
                M / sigma,
                alpha / (sigma - beta),
                alpha / (-sigma - beta),
                (M - alpha) / beta,
                (-M - alpha) / beta,
            ],
            axis=1,
        )
    inside = np.isfinite(cand) & (cand > lo_c[:, None]) & (cand < hi_c[:, None])
    cand = np.where(inside, cand, np.nan)
    edges = np.sort(np.concatenate((lo_c[:, None], cand, hi_c[:, None]), axis=1), axis=1)
    a, b = edges[:, :-1], edges[:, 1:]
    ok = np.isfinite(a) & np.isfinite(b) & (b > a)
    cell = np.broadcast_to(np.arange(lo_c.size)[:, None], a.shape)[ok]
    a, b = a[ok], b[ok]
    al, be, Mc, Sc = alpha[cell], beta[cell], M[cell], S[cell]

    root = np.where(be != 0.0, -al / np.where(be != 0.0, be, 1.0), np.nan)
    zero_lo = (a == root) | ((a == lo_c[cell]) & (v[:-1][cell] == 0.0))
    zero_hi = (b == root) | ((b == hi_c[cell]) & (v[1:][cell] == 0.0))
    zero_lo &= ~((be == 0.0) & (al == 0.0))
    zero_hi &= ~((be == 0.0) & (al == 0.0))

    I0 = _classical_piece(al, be, a, b, p, zero_lo, zero_hi)
    I1 = _power_piece(Mc, a, b, p)
    I2 = Sc * (b - a)

    mid = np.sqrt(a * b)
    T0 = np.abs(al / mid + be) ** p
    T1 = Mc**p * mid**-p
    T2 = Sc
    left_piece = np.maximum(I0, np.where(T1 > T0, I1, I0))
    right_piece = np.maximum(I0, np.where(T2 > T0, I2, I0))
    top = np.argmax(np.stack([T0, T1, T2]), axis=0)
    chosen = np.choose(top, [I0, I1, I2])
    imp_piece = np.maximum(np.maximum(left_piece, right_piece), chosen)

    classical = np.sum(I0)
    left = np.sum(left_piece)
    right = np.sum(right_piece)
    improved = np.sum(imp_piece)

    # head (0, r_1)
    if u.extension is Extension.LINEAR0:
        h0 = r[0] * q[0]
        hS = r[0] * S_all[0]
        classical += h0
        left += h0
        right += hS
        improved += hS
    else:
        # zero at the origin side, u jumps to v[0] at r_1
        hS = r[0] * S_all[0]
        right += hS
        improved += hS

    # tail (r_N, inf)
    Mtot = av.max()
    t_max = Mtot**p * r[-1] ** (1.0 - p) / (p - 1.0)
    if u.extension is Extension.ZERO:
        left += t_max
        improved += t_max
    else:
        t_end = av[-1] ** p * r[-1] ** (1.0 - p) / (p - 1.0)
        classical += t_end
        right += t_end
        left += t_max
        improved += t_max
    return _Sides(float(classical), float(left), float(right), float(improved))


# --------------------------------------------------------------------------
# public evaluators
# --------------------------------------------------------------------------


def classical_lhs(u: GridFunction, p: float) -> float:
    """Integral of |u|**p r**-p."""
    return _sides(u, p).classical


def improved_lhs(u: GridFunction, p: float) -> float:
    """Integral of the max of the backward and forward suprema."""
    return _sides(u, p).improved


def one_sided_lhs(u: GridFunction, p: float, side: str) -> float:
    s = _sides(u, p)
    if side == "left":
        return s.left
    if side == "right":
        return s.right
    raise InputError("side must be 'left' or 'right'")


def antiderivative(f: GridFunction) -> GridFunction:
    """G(s) = int_0^s f as a piecewise-linear function (f read as a step function)."""
    if f.kind is Kind.LINEAR:
        vals, _ = f.cells()
        f = GridFunction(f.grid, vals[:-1], Extension.CONSTANT if f.tail_value() else Extension.ZERO, Kind.STEP)
    G = primitive(f, f.r)
    return GridFunction(f.grid, G, Extension.LINEAR0, Kind.LINEAR)


def integral_form_lhs(f: GridFunction, p: float) -> float:
    """Integral over r of sup_s |min(1/r, 1/s) int_0^s f|**p.

    The supremum splits at s = r into the backward and forward suprema of
    ``G = int_0^s f``, so this is the improved functional of ``G``.
    Piecewise-linear input is read through its cell-mean step shadow.
    """
    p = check_p(p)
    if f.tail_value() != 0.0:
        return INF
    return improved_lhs(antiderivative(f), p)


def decreasing_rearrangement(f: GridFunction) -> GridFunction:
    """Nonincreasing rearrangement of |f| on its step shadow."""
    vals, lengths = f.cells()
    vals = np.abs(vals)
    order = np.argsort(-vals, kind="stable")
    vals, lengths = vals[order], lengths[order]
    keep = vals > 0
    vals, lengths = vals[keep], lengths[keep]
    order = order[keep]
    tail = 0.0
    inf_at = np.flatnonzero(~np.isfinite(lengths))
    if inf_at.size:
        tail = vals[inf_at[0]]
        vals, lengths, order = vals[: inf_at[0]], lengths[: inf_at[0]], order[: inf_at[0]]
    if vals.size == 0:
        if tail:
            return GridFunction(LogGrid([1.0, 2.0]), [tail, tail], Extension.CONSTANT, Kind.STEP)
        return GridFunction(LogGrid([1.0, 2.0]), [0.0, 0.0], Extension.ZERO, Kind.STEP)
    nodes = np.cumsum(lengths)
    # keep the original node positions on an unpermuted prefix (exact fixed point)
    prefix = int(np.argmin(np.append(order == np.arange(order.size), False)))
    nodes[:prefix] = f.r[:prefix]
    if tail:
        nodes = np.append(nodes, nodes[-1] * 2.0)
        vals = np.append(vals, tail)
        return GridFunction(LogGrid(nodes), vals, Extension.CONSTANT, Kind.STEP)
    if nodes.size == 1:
        nodes = np.append(nodes, nodes[-1] * 2.0)
        vals = np.append(vals, 0.0)
    return GridFunction(LogGrid(nodes), vals, Extension.ZERO, Kind.STEP)


def sup_kernel_identity_check(fstar: GridFunction, r: float) -> tuple[float, float]:
    """Both sides of sup_s min(1/r, 1/s) F(s) = F(r)/r with F = int_0^s f*."""
    vals, _ = fstar.cells()
    nodes = np.append(fstar.values, fstar.tail_value())
    if fstar.kind is Kind.LINEAR and fstar.extension is not Extension.CONSTANT:
        nodes = np.append(0.0, nodes)
    shadow_bad = np.any(vals < 0) or np.any(np.diff(vals) > 0)
    if fstar.kind is Kind.LINEAR:
        shadow_bad = shadow_bad or np.any(np.diff(nodes[1:]) > 0) or nodes[0] < nodes[1]
    if shadow_bad:
        raise InputError("f* must be nonnegative and nonincreasing")
    r = float(r)
    s = np.append(fstar.r, r)
    F = primitive(fstar, s)
    kernel = np.minimum(1.0 / r, 1.0 / s)
    lhs = float(np.max(kernel * F))
    rhs = float(F[-1] / r)
    return lhs, rhs


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HardyReport:
    p: float
    classical_lhs: float
    improved_lhs: float
    left_sided_lhs: float
    right_sided_lhs: float
    rhs_energy: float

    @property
    def sharp_factor(self) -> float:
        return sharp_factor(self.p)

    @property
    def bound(self) -> float:
        return self.sharp_factor * self.rhs_energy

    @property
    def holds(self) -> dict[str, bool]:
        bound = self.bound
        slack = bound * (1.0 + HOLD_RTOL) if math.isfinite(bound) else bound

        def ok(x):
            return bool(x <= slack) or (math.isinf(bound) and math.isinf(x))

        return {
            "classical": ok(self.classical_lhs),
            "improved": ok(self.improved_lhs),
            "left_sided": ok(self.left_sided_lhs),
            "right_sided": ok(self.right_sided_lhs),
        }

    @property
    def divergent(self) -> bool:
        return any(math.isinf(x) for x in (self.classical_lhs, self.improved_lhs, self.rhs_energy))

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "classical_lhs": self.classical_lhs,
            "improved_lhs": self.improved_lhs,
            "left_sided_lhs": self.left_sided_lhs,
            "right_sided_lhs": self.right_sided_lhs,
            "rhs_energy": self.rhs_energy,
            "sharp_factor": self.sharp_factor,
            "bound": self.bound,
            "holds": self.holds,
            "divergent": self.divergent,
        }


def verify(u: GridFunction, p: float) -> HardyReport:
    s = _sides(u, p)
    energy = float(lp_energy(u, p))
    return HardyReport(float(p), s.classical, s.improved, s.left, s.right, energy)
