"""Finiteness of the negative spectrum of -Laplace - Q for radial Q.

Two integral conditions on the tail of Q are evaluated as margins (a value
of at most 1 means the condition holds at that radius), the outside
quadratic form is checked for nonnegativity on a truncated grid, and an
independent Sturm oscillation counter gives negative-eigenvalue counts of
truncated angular sectors.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh
from scipy.optimize import brentq

from .gridfn import INF, Extension, GridFunction, InputError, LogGrid, WeightSpec, _end_behaviour, _legendre, integrate, piece_integrals

PER_DECADE = 64
HORIZON = 1e12
FORM_DECADES = 4.0
FORM_TOL = 1e-8
_GAUSS = 16


class Status(str, Enum):
    CERTIFIED = "finite-certified"
    UNDECIDED = "undecided"


class Criterion(str, Enum):
    BIRMAN = "birman"
    IMPROVED = "improved"


@dataclass(frozen=True)
class RadialPotential:
    """Q(x) = sum of the terms evaluated at |x|, in dimension d."""

    terms: tuple[WeightSpec, ...]
    d: int

    def __init__(self, Q: WeightSpec | Sequence[WeightSpec], d: int):
        terms = (Q,) if isinstance(Q, WeightSpec) else tuple(Q)
        if not terms or not all(isinstance(t, WeightSpec) for t in terms):
            raise InputError("Q must be a weight or a list of weights")
        if int(d) != d or d < 1:
            raise InputError("dimension must be a positive integer")
        for t in terms:
            if any(math.isinf(s.c) for s in t.segments):
                raise InputError("Q must be finite almost everywhere")
            cuts = np.array(sorted({1.0, *t.breakpoints()}))
            lo = np.concatenate((cuts / 2, cuts))
            hi = np.concatenate((cuts, cuts * 2))
            if not np.all(np.isfinite(piece_integrals(t, lo, hi))):
                raise InputError("Q must be locally integrable away from the origin")
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "d", int(d))

    def __call__(self, r) -> np.ndarray:
        return sum(t(r) for t in self.terms)

    def breakpoints(self) -> list[float]:
        return sorted({b for t in self.terms for b in t.breakpoints()})

    def to_dict(self) -> dict:
        return {"d": self.d, "terms": [t.to_dict() for t in self.terms]}


# --------------------------------------------------------------------------
# tail integrals of power-log sums
# --------------------------------------------------------------------------


def _monomials(P: RadialPotential, lo: float, hi: float, shift: float, minus: float):
    """Monomials (c, a, b) of Q(s) s**shift - minus s**(shift-2) on (lo, hi), like terms merged."""
    mid = math.sqrt(lo * hi) if hi < INF and lo > 0 else (2.0 * lo if lo > 0 else min(hi / 2, 1.0))
    acc: dict[tuple[float, float], float] = {}
    for t in P.terms:
        s = t.segment_at(mid)
        if not s.is_zero:
            key = (s.a + shift, s.b)
            acc[key] = acc.get(key, 0.0) + s.c
    if minus:
        key = (shift - 2.0, 0.0)
        acc[key] = acc.get(key, 0.0) - minus
    return [(c, a, b) for (a, b), c in sorted(acc.items()) if c != 0.0]


def _eval(mono, s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    for c, a, b in mono:
        term = c * s**a
        if b:
            term = term * np.abs(np.log(s)) ** b
        out = out + term
    return out


def _dominant(mono, at_infinity: bool):
    key = (lambda m: (m[1], m[2])) if at_infinity else (lambda m: (-m[1], m[2]))
    return max(mono, key=key)


def _positive_pieces(P: RadialPotential, r_from: float, shift: float, minus: float):
    """Maximal intervals in (r_from, inf) where the integrand is positive, with their monomials."""
    cuts = [r_from] + [b for b in P.breakpoints() if b > r_from] + [INF]
    pieces = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mono = _monomials(P, lo, hi, shift, minus)
        if not mono:
            continue
        top = hi if hi < INF else max(lo, 1.0) * 1e30
        xs = np.geomspace(lo, top, max(3, int(16 * math.log10(top / lo)) + 1))
        vals = _eval(mono, xs)
        if hi == INF:
            dom = _dominant(mono, True)
            vals = np.append(vals, math.copysign(1.0, dom[0]))
            xs = np.append(xs, INF)
        edges = [lo]
        for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0):
            if math.isinf(xs[i + 1]):
                continue
            edges.append(brentq(lambda x: float(_eval(mono, [x])[0]), xs[i], xs[i + 1], xtol=1e-15 * xs[i], rtol=1e-15))
        edges.append(hi)
        for a, b in zip(edges[:-1], edges[1:]):
            probe = math.sqrt(a * b) if b < INF else 2.0 * a
            if float(_eval(mono, [probe])[0]) > 0:
                pieces.append((a, b, mono))
    return pieces


def _tail_integrals(pieces, r: np.ndarray) -> np.ndarray:
    """int_{r_i}^inf of the positive part, for ascending samples r."""
    cells = np.zeros(r.size - 1)
    beyond = 0.0
    for a, b, mono in pieces:
        dom = _dominant(mono, True) if b == INF else None
        for c, ea, eb in mono:
            spec = WeightSpec.power(abs(c), ea, eb, a, b)
            sign = math.copysign(1.0, c)
            cells += sign * piece_integrals(spec, r[:-1], r[1:])
            tail = integrate(spec, max(a, r[-1]), b) if b > r[-1] else None
            if tail is None:
                continue
            if tail.divergent:
                if dom is not None and (c, ea, eb) == dom:
                    beyond = INF
                continue
            beyond += sign * tail.value
    out = np.concatenate((np.cumsum(cells[::-1])[::-1], [0.0])) + beyond
    return np.maximum(out, 0.0)


def _shift_minus(P: RadialPotential, criterion: Criterion):
    d = P.d
    if criterion is Criterion.IMPROVED:
        return 1.0, (d - 2) ** 2 / 4.0
    return (1.0 if d == 2 else 1.0 - abs(d - 2)), 0.0


def _denominator(d: int, criterion: Criterion, r: np.ndarray) -> np.ndarray:
    if criterion is Criterion.BIRMAN and d != 2:
        return abs(d - 2) / (4.0 * r ** abs(d - 2))
    return 1.0 / (4.0 * np.log(r))


def _needs_log(d: int, criterion: Criterion) -> bool:
    return criterion is Criterion.IMPROVED or d == 2


def _margins(P: RadialPotential, criterion: Criterion, r) -> np.ndarray:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(~(r > 0)):
        raise InputError("radii must be positive")
    if _needs_log(P.d, criterion) and np.any(~(r > 1)):
        raise InputError("this condition needs r > 1")
    order = np.argsort(r)
    rs = r[order]
    shift, minus = _shift_minus(P, criterion)
    num = _tail_integrals(_positive_pieces(P, rs[0], shift, minus), rs) if rs.size > 1 else None
    if num is None:
        num = _tail_integrals(_positive_pieces(P, rs[0], shift, minus), np.array([rs[0], 2 * rs[0]]))[:1]
    with np.errstate(invalid="ignore"):
        m = np.where(num == 0.0, 0.0, num / _denominator(P.d, criterion, rs))
    out = np.empty_like(m)
    out[order] = m
    return out


def birman_margin(P: RadialPotential, r: float) -> float:
    """Tail integral of the Birman-type condition over its allowed bound."""
    return float(_margins(P, Criterion.BIRMAN, [r])[0])


def improved_margin(P: RadialPotential, r: float) -> float:
    """Same for the condition on (Q - (d-2)^2/(4 s^2))_+ against 1/(4 ln r)."""
    return float(_margins(P, Criterion.IMPROVED, [r])[0])


def _tail_law(P: RadialPotential, criterion: Criterion):
    """(k, b): margin ~ r**k |ln r|**b far out; None if it tends to zero exactly."""
    shift, minus = _shift_minus(P, criterion)
    last = max([1.0] + P.breakpoints())
    mono = _monomials(P, last, INF, shift, minus)
    if not mono:
        return None
    c, a, b = _dominant(mono, True)
    if c < 0:
        return None
    k = a + 1.0
    if not _end_behaviour(k, b, at_zero=False):
        return (INF, 0.0)
    law = (k, b) if k != 0 else (0.0, b + 1.0)
    if _needs_log(P.d, criterion):
        return (law[0], law[1] + 1.0)
    return (law[0] + abs(P.d - 2), law[1])


def robin_constant(d: int, R: float, criterion: Criterion | str = Criterion.BIRMAN) -> float:
    criterion = Criterion(criterion)
    if criterion is Criterion.IMPROVED:
        return (1.0 / math.log(R) - (d - 2) / 2.0) * R ** (d - 2)
    if d == 1:
        return 1.0 / R
    if d == 2:
        return 1.0 / math.log(R)
    return 0.0


# --------------------------------------------------------------------------
# outside form
# --------------------------------------------------------------------------


def _form_matrices(P: RadialPotential, R: float, grid: LogGrid | None, L: float | None):
    d = P.d
    if grid is None:
        L = L if L is not None else R * 10.0**FORM_DECADES
        n = max(16, int(round(PER_DECADE * math.log10(L / R))) + 1)
        nodes = np.union1d(np.geomspace(R, L, n), [b for b in P.breakpoints() if R < b < L])
    else:
        nodes = grid.nodes
        if nodes[0] != R:
            raise InputError("the form grid must start at R")
    r, h = nodes, np.diff(nodes)
    lo, hi = r[:-1], r[1:]
    for t in P.terms:
        if not np.all(np.isfinite(piece_integrals(t.times_power(d - 1), lo, hi))):
            raise InputError("int Q r^(d-1) diverges on a grid cell")
    stiff = (hi**d - lo**d) / d / h**2
    x, w = _legendre(_GAUSS)
    t = 0.5 * (x + 1.0)
    w = 0.5 * w
    pts = lo[:, None] + h[:, None] * t
    jac = pts ** (d - 1) * h[:, None]
    q = P(pts) * jac

    def bands(f):
        a = (f * (1 - t) ** 2) @ w
        b = (f * t**2) @ w
        c = (f * t * (1 - t)) @ w
        diag = np.zeros(r.size)
        diag[:-1] += a
        diag[1:] += b
        return diag, c

    Kd = np.zeros(r.size)
    Kd[:-1] += stiff
    Kd[1:] += stiff
    Ko = -stiff
    Pd, Po = bands(q)
    Md, Mo = bands(jac)
    return r, (Kd, Ko), (Pd, Po), (Md, Mo)


def _dense(diag, off):
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def outside_form_matrix(P: RadialPotential, R: float, c_R: float, grid: LogGrid | None = None, L: float | None = None):
    """(nodes, A, M): form int (|u'|^2 - Q|u|^2) r^(d-1) + c_R |u(R)|^2 and mass, all nodes kept."""
    r, (Kd, Ko), (Pd, Po), (Md, Mo) = _form_matrices(P, R, grid, L)
    A = _dense(Kd - Pd, Ko - Po)
    A[0, 0] += c_R
    return r, A, _dense(Md, Mo)


def outside_form_nonnegativity(
    P: RadialPotential,
    R: float,
    grid: LogGrid | None = None,
    c_R: float | None = None,
    L: float | None = None,
) -> float:
    """Smallest generalised eigenvalue of the outside form against the r^(d-1) mass.

    Trial functions are piecewise linear on the grid, free at R and zero at
    the truncation radius.  ``c_R`` defaults to the Birman-route constant.
    """
    if not (R > 0 and math.isfinite(R)):
        raise InputError("R must be a finite positive radius")
    if P.d == 2 and not R > 1:
        raise InputError("d = 2 needs R > 1")
    if c_R is None:
        c_R = robin_constant(P.d, R)
    _, A, M = outside_form_matrix(P, R, c_R, grid, L)
    A, M = A[:-1, :-1], M[:-1, :-1]
    # scale rows and columns by the mass diagonal so eigh sees O(1) entries
    s = 1.0 / np.sqrt(np.diag(M))
    A, M = A * s[:, None] * s, M * s[:, None] * s
    return float(eigh(A, M, eigvals_only=True, subset_by_index=[0, 0])[0])


def form_value(P: RadialPotential, u: GridFunction, R: float, c_R: float) -> float:
    """Outside form at a piecewise-linear u whose nodes start at R."""
    _, A, _ = outside_form_matrix(P, R, c_R, grid=u.grid)
    return float(u.values @ A @ u.values)


# --------------------------------------------------------------------------
# certificate
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    status: Status
    criterion: Criterion | None
    R: float
    c_R: float
    margin: GridFunction | None
    outside_form_min_eig: float

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "criterion": None if self.criterion is None else self.criterion.value,
            "R": self.R,
            "c_R": self.c_R,
            "outside_form_min_eig": self.outside_form_min_eig,
            "margin_max": None if self.margin is None else float(self.margin.values.max()),
            "margin": None if self.margin is None else {"r": self.margin.r.tolist(), "value": self.margin.values.tolist()},
        }


def _first_radius(P: RadialPotential, criterion: Criterion, r_min: float, horizon: float):
    law = _tail_law(P, criterion)
    if law is not None:
        k, b = law
        if k > 0 or (k == 0 and b > 0):
            return None
        if k < 0 and b > 0:
            # r^k |ln r|^b peaks at ln r = b/|k|: sample past it
            horizon = max(horizon, min(1e300, math.exp(min(690.0, 2.0 * b / -k))))
    lo = r_min
    if _needs_log(P.d, criterion):
        lo = max(lo, 1.0) * 10.0 ** (1.0 / PER_DECADE)
    n = max(2, int(math.ceil(PER_DECADE * math.log10(horizon / lo))) + 1)
    r = np.union1d(np.geomspace(lo, horizon, n), [b for b in P.breakpoints() if lo < b < horizon])
    m = _margins(P, criterion, r)
    worst = np.maximum.accumulate(m[::-1])[::-1]
    ok = np.flatnonzero(worst <= 1.0)
    if ok.size == 0:
        return None
    i = int(ok[0])
    return float(r[i]), GridFunction(LogGrid(r[i:]), m[i:], Extension.ZERO)


def certify_finiteness(
    P: RadialPotential,
    r_min: float = 1.0,
    horizon: float = HORIZON,
    form_tol: float = FORM_TOL,
) -> Certificate:
    """Try the Birman-type condition, then the improved one.

    The margin is sampled at 64 points per decade from ``r_min`` to
    ``horizon``; beyond it the leading power-log term of Q decides whether
    the margin can come back above 1.
    """
    for criterion in (Criterion.BIRMAN, Criterion.IMPROVED):
        found = _first_radius(P, criterion, r_min, horizon)
        if found is None:
            continue
        R, margin = found
        c_R = robin_constant(P.d, R, criterion)
        eig = outside_form_nonnegativity(P, R, c_R=c_R)
        if eig >= -form_tol:
            return Certificate(Status.CERTIFIED, criterion, R, c_R, margin, eig)
    return Certificate(Status.UNDECIDED, None, math.nan, math.nan, None, math.nan)


# --------------------------------------------------------------------------
# oscillation counter
# --------------------------------------------------------------------------


def _nu(P: RadialPotential, ell: int) -> float:
    """Growth exponent of the regular solution in t = ln r, including an inverse-square head of Q."""
    nu = ell + (P.d - 2) / 2.0
    c0 = 0.0
    for t in P.terms:
        s = t.segments[0]
        if s.is_zero:
            continue
        if s.a < -2 or (s.a == -2 and s.b != 0):
            raise InputError("Q is too singular at the origin for the oscillation counter")
        if s.a == -2:
            c0 += s.c
    if c0 > nu * nu:
        raise InputError("Q is supercritical at the origin")
    return math.sqrt(nu * nu - c0) if c0 else nu


def count_negative_eigenvalues_radial(
    P: RadialPotential,
    ell: int,
    L: float,
    N: int = 2000,
    rtol: float = 1e-10,
) -> int:
    """Zeros in (0, L) of the zero-energy regular solution of the reduced equation.

    With phi = r^(1/2) y(ln r) the sector equation becomes
    y'' = (nu^2 - Q(e^t) e^(2t)) y, nu = ell + (d-2)/2, and the Prufer phase
    theta = atan2(y, y') obeys theta' = cos^2 + (Q e^(2t) - nu^2) sin^2.
    The count of Dirichlet negative eigenvalues on (0, L) equals the number
    of times theta passes a multiple of pi.  ``N`` bounds the step length
    to (ln L - t0)/N.
    """
    if int(ell) != ell or ell < 0:
        raise InputError("ell must be a nonnegative integer")
    if not (L > 0 and math.isfinite(L)):
        raise InputError("L must be a finite positive radius")
    if P.d == 1 and ell > 1:
        raise InputError("in d = 1 the sectors are ell = 0 (even) and ell = 1 (odd)")
    nu = _nu(P, ell)
    nu0 = ell + (P.d - 2) / 2.0

    def kappa(t):
        r = math.exp(t)
        return float(P([r])[0]) * r * r - nu0 * nu0

    bps = [b for b in P.breakpoints() if b < L]
    first = min(bps + [1.0, L])
    t0 = math.log(first) - 40.0
    T = math.log(L)
    theta = math.atan2(1.0, nu)
    cuts = [t0] + [math.log(b) for b in bps if math.log(b) > t0] + [T]
    max_step = (T - t0) / max(int(N), 1)
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue

        def rhs(t, th):
            k = kappa(t)
            s = math.sin(th[0])
            c = math.cos(th[0])
            return [c * c + k * s * s]

        sol = solve_ivp(rhs, (a, b), [theta], method="LSODA", rtol=rtol, atol=rtol, max_step=max_step)
        if not sol.success:
            raise RuntimeError(f"Prufer integration failed: {sol.message}")
        theta = float(sol.y[0, -1])
    return max(0, int(math.ceil(theta / math.pi)) - 1)


def multiplicity(d: int, ell: int) -> int:
    """Dimension of the degree-ell spherical harmonics in d dimensions."""
    if d == 1:
        return 1
    if d == 2:
        return 1 if ell == 0 else 2
    return math.comb(ell + d - 1, d - 1) - (math.comb(ell + d - 3, d - 1) if ell >= 2 else 0)


def _threads() -> int:
    env = os.environ.get("HARDYLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError("HARDYLAB_THREADS must be an integer") from None
    return os.cpu_count() or 1


def count_table(P: RadialPotential, lmax: int, ladder: Iterable[float], N: int = 2000) -> dict:
    """Counts per sector and truncation, plus multiplicity-weighted totals."""
    ladder = [float(x) for x in ladder]
    ells = range(0, (min(lmax, 1) if P.d == 1 else lmax) + 1)
    jobs = [(ell, L) for L in ladder for ell in ells]
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        counts = list(pool.map(lambda job: count_negative_eigenvalues_radial(P, job[0], job[1], N), jobs))
    per = {L: {} for L in ladder}
    for (ell, L), n in zip(jobs, counts):
        per[L][ell] = n
    totals = {L: sum(multiplicity(P.d, ell) * n for ell, n in per[L].items()) for L in ladder}
    return {"per_ell": per, "total": totals}
