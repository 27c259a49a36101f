"""B-type constants of the doubly weighted Hardy inequalities.

With ``Vq = V**(-1/(p-1))`` every constant is a supremum over ``s`` of one
of two objectives built from a potential ``Phi``:

* origin anchor:   ``Phi(s) = M + int_a^s Vq``, far part ``int_s^b W``,
  near part ``int_a^s W Phi**p``;
* infinity anchor: ``Phi(s) = M + int_s^b Vq``, far part ``int_a^s W``,
  near part ``int_s^b W Phi**p``.

The overline objective is ``Phi**(p-1) * far`` and the underline objective
is ``near / Phi``.  ``(a, b)`` is the half-line or the chosen interval, with
``W`` extended by zero outside it, and ``M`` is the base (zero unless the
interval form carries one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import integrate as _sint

from .gridfn import (
    INF,
    InputError,
    Segment,
    WeightSpec,
    _end_behaviour,
    integrate,
    piece_integrals,
    power_of_inverse,
)

PER_DECADE = 512
PAD_DECADES = 4.0
GOLDEN_STEPS = 80


class BKind(str, Enum):
    OVERLINE = "overline"
    UNDERLINE = "underline"


class Anchor(str, Enum):
    ORIGIN = "origin"
    INFINITY = "infinity"


class Interval(str, Enum):
    FULL = "full"
    ORIGIN_INTERVAL = "origin-interval"
    TAIL_INTERVAL = "tail-interval"


def prefactor(kind: BKind, p: float) -> float:
    if BKind(kind) is BKind.OVERLINE:
        return p**p / (p - 1.0) ** (p - 1.0)
    return (p / (p - 1.0)) ** p


@dataclass(frozen=True)
class ConstantVariant:
    """Which constant to compute.

    ``M`` is required exactly for the two interval forms whose boundary
    condition sits at the finite end ``R`` (origin anchor on ``(R, inf)``
    and infinity anchor on ``(0, R)``) and forbidden otherwise.
    """

    kind: BKind = BKind.OVERLINE
    anchor: Anchor = Anchor.ORIGIN
    interval: Interval = Interval.FULL
    R: float | None = None
    M: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", BKind(self.kind))
        object.__setattr__(self, "anchor", Anchor(self.anchor))
        object.__setattr__(self, "interval", Interval(self.interval))
        if self.interval is Interval.FULL:
            if self.R is not None:
                raise InputError("R only applies to interval variants")
        elif self.R is None or not (0.0 < self.R < INF):
            raise InputError("interval variants need a finite R > 0")
        if self.needs_base:
            if self.M is None or not (0.0 < self.M < INF):
                raise InputError("this variant needs a base M in (0, inf)")
        elif self.M is not None:
            raise InputError("this variant takes no base M")

    @property
    def needs_base(self) -> bool:
        return (self.anchor, self.interval) in (
            (Anchor.ORIGIN, Interval.TAIL_INTERVAL),
            (Anchor.INFINITY, Interval.ORIGIN_INTERVAL),
        )

    @property
    def domain(self) -> tuple[float, float]:
        if self.interval is Interval.ORIGIN_INTERVAL:
            return 0.0, float(self.R)
        if self.interval is Interval.TAIL_INTERVAL:
            return float(self.R), INF
        return 0.0, INF

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "anchor": self.anchor.value,
            "interval": self.interval.value,
            "R": self.R,
            "M": self.M,
        }


@dataclass(frozen=True)
class ConstantResult:
    value: float
    argmax_s: float
    variant: ConstantVariant
    p: float
    divergent: bool = False

    @property
    def upper_bound_on_C(self) -> float:
        return self.value * prefactor(self.variant.kind, self.p) if self.value else 0.0

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "argmax_s": self.argmax_s,
            "variant": self.variant.to_dict(),
            "p": self.p,
            "upper_bound_on_C": self.upper_bound_on_C,
            "divergent": self.divergent,
        }


# --------------------------------------------------------------------------
# profile: Phi, far and near integrals on a log grid
# --------------------------------------------------------------------------


def _search_grid(V: WeightSpec, W: WeightSpec, a: float, b: float, pad: tuple[float, float]) -> np.ndarray:
    """Log grid over the breakpoint hull, widened by ``pad`` decades on each side.

    The inner hull gets ``PER_DECADE`` points per decade, the padding a
    quarter of that.
    """
    bps = [x for x in V.breakpoints() + W.breakpoints() if 0.0 < x < INF]
    bps += [x for x in (a, b) if 0.0 < x < INF]
    core_lo = min(bps) if bps else 1.0
    core_hi = max(bps) if bps else 1.0
    lo = max(core_lo * 10 ** -max(pad[0], PAD_DECADES), a)
    hi = min(core_hi * 10 ** max(pad[1], PAD_DECADES), b)
    parts = []
    for x1, x2, dens in (
        (lo, core_lo * 10**-PAD_DECADES, PER_DECADE // 4),
        (core_lo * 10**-PAD_DECADES, core_hi * 10**PAD_DECADES, PER_DECADE),
        (core_hi * 10**PAD_DECADES, hi, PER_DECADE // 4),
    ):
        x1, x2 = max(x1, lo), min(x2, hi)
        if x2 > x1:
            n = max(2, int(math.ceil(dens * math.log10(x2 / x1))) + 1)
            parts.append(np.geomspace(x1, x2, n))
    inner = [x for x in bps if lo < x < hi]
    grid = np.unique(np.concatenate(parts + [np.array([lo, hi] + inner)]))
    return grid[(grid >= lo) & (grid <= hi)]


def _growth(seg: Segment) -> tuple[float, float]:
    """(k, b) such that int of seg toward its singular end behaves like r**k |ln r|**b."""
    k = seg.a + 1.0
    if k == 0.0:
        return 0.0, seg.b + 1.0
    return k, seg.b


def _revcumsum(x: np.ndarray) -> np.ndarray:
    return np.concatenate((np.cumsum(x[::-1])[::-1], [0.0]))


class _Profile:
    def __init__(self, V: WeightSpec, W: WeightSpec, p: float, variant: ConstantVariant, pad=(PAD_DECADES, PAD_DECADES)):
        if not p > 1:
            raise InputError("p must exceed 1")
        self.p = p
        self.variant = variant
        self.origin = variant.anchor is Anchor.ORIGIN
        a, b = variant.domain
        self.a, self.b = a, b
        self.base = float(variant.M or 0.0)
        self.Vq = power_of_inverse(V, p)
        self.W = W.restricted(a, b)
        g = _search_grid(V, W, a, b, pad)
        self.grid = g
        Vq, Wr = self.Vq, self.W

        pv = piece_integrals(Vq, g[:-1], g[1:])
        pw = piece_integrals(Wr, g[:-1], g[1:])
        head_v = integrate(Vq, a, g[0]).value
        tail_v = integrate(Vq, g[-1], b).value
        if self.origin:
            phi = self.base + head_v + np.concatenate(([0.0], np.cumsum(pv)))
            self.far = integrate(Wr, g[-1], b).value + _revcumsum(pw)
        else:
            phi = self.base + tail_v + _revcumsum(pv)
            self.far = integrate(Wr, a, g[0]).value + np.concatenate(([0.0], np.cumsum(pw)))
        # the hypothesis: Phi finite strictly inside the domain
        interior = phi[1:-1] if g.size > 2 else phi[:0]
        edge = phi[0] if self.origin else phi[-1]
        if not (np.all(np.isfinite(interior)) and math.isfinite(edge)):
            raise InputError("V**(-1/(p-1)) is not integrable up to the anchor")
        self.phi = phi
        self._near = None

    # -- Phi at arbitrary radii -------------------------------------------

    def phi_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g, phi = self.grid, self.phi
        out = np.empty(x.shape)
        inside = (x >= g[0]) & (x <= g[-1])
        xi = x[inside]
        j = np.clip(np.searchsorted(g, xi, side="right") - 1, 0, g.size - 2)
        if self.origin:
            out[inside] = phi[j] + piece_integrals(self.Vq, g[j], xi)
        else:
            out[inside] = phi[j + 1] + piece_integrals(self.Vq, xi, g[j + 1])
        for idx in np.flatnonzero(~inside):
            r = float(x.flat[idx])
            if r < g[0]:
                if self.origin:
                    out.flat[idx] = self.base + integrate(self.Vq, self.a, r).value
                else:
                    out.flat[idx] = phi[0] + integrate(self.Vq, r, g[0]).value
            elif self.origin:
                out.flat[idx] = phi[-1] + integrate(self.Vq, g[-1], r).value
            else:
                out.flat[idx] = self.base + integrate(self.Vq, r, self.b).value
        return out

    def _phi_p(self, x):
        return self.phi_at(x) ** self.p

    # -- near integral ------------------------------------------------------

    def _outer_near(self) -> float:
        """int W Phi**p over the part of the domain outside the grid."""
        g, p = self.grid, self.p
        if self.origin:
            lo, hi, at_zero = self.a, g[0], True
        else:
            lo, hi, at_zero = g[-1], self.b, False
        if not lo < hi:
            return 0.0
        w_seg = self.W.segment_at(hi if at_zero else lo * (1 + 1e-12))
        if w_seg.is_zero:
            return 0.0
        k, b = w_seg.a + 1.0, w_seg.b
        kv, bv = 0.0, 0.0
        if self.base == 0.0:
            v_seg = self.Vq.segment_at(hi if at_zero else lo * (1 + 1e-12))
            kv, bv = _growth(v_seg)
            k, b = k + p * kv, b + p * bv
        if not _end_behaviour(k, b, at_zero):
            return INF
        x1, x2 = (-INF, math.log(hi)) if at_zero else (math.log(lo), INF)

        def log_phi(x):
            # past the double range Phi follows its power-log law from the edge
            x0 = max(min(x, 700.0), -700.0)
            phi = float(self.phi_at(np.array([math.exp(x0)]))[0])
            if phi <= 0.0:
                return -INF
            out = math.log(phi)
            if x != x0:
                out += kv * (x - x0) + (bv * math.log(abs(x) / abs(x0)) if bv else 0.0)
            return out

        def f(x):
            # assembled in logs so that r**a cannot overflow against a vanishing Phi
            lp = log_phi(x)
            if lp == -INF:
                return 0.0
            log_f = math.log(w_seg.c) + (w_seg.a + 1.0) * x + p * lp
            if w_seg.b:
                log_f += w_seg.b * math.log(abs(x))
            return math.exp(min(log_f, 700.0))

        val, _ = _sint.quad(f, x1, x2, epsabs=0.0, epsrel=1e-12, limit=400)
        return val

    @property
    def near(self) -> np.ndarray:
        if self._near is None:
            g = self.grid
            pieces = piece_integrals(self.W, g[:-1], g[1:], g=self._phi_p)
            outer = self._outer_near()
            if self.origin:
                self._near = outer + np.concatenate(([0.0], np.cumsum(pieces)))
            else:
                self._near = outer + _revcumsum(pieces)
        return self._near

    # -- objectives ---------------------------------------------------------

    def _combine(self, kind: BKind, phi, far, near):
        p = self.p
        if kind is BKind.OVERLINE:
            with np.errstate(invalid="ignore", over="ignore"):
                val = phi ** (p - 1.0) * far
            return np.where((phi == 0.0) | (far == 0.0), 0.0, val)
        with np.errstate(invalid="ignore", divide="ignore"):
            val = near / phi
        return np.where(near == 0.0, 0.0, val)

    def on_grid(self, kind: BKind) -> np.ndarray:
        near = self.near if kind is BKind.UNDERLINE else None
        return self._combine(kind, self.phi, self.far, near)

    def at(self, kind: BKind, s: float) -> float:
        """Objective at a single radius between grid nodes."""
        g = self.grid
        j = int(np.clip(np.searchsorted(g, s, side="right") - 1, 0, g.size - 2))
        lo, hi = np.array([g[j]]), np.array([g[j + 1]])
        sa = np.array([s])
        phi = self.phi_at(sa)
        if self.origin:
            far = self.far[j + 1] + piece_integrals(self.W, sa, hi)
        else:
            far = self.far[j] + piece_integrals(self.W, lo, sa)
        near = None
        if kind is BKind.UNDERLINE:
            if self.origin:
                near = self.near[j] + piece_integrals(self.W, lo, sa, g=self._phi_p)
            else:
                near = self.near[j + 1] + piece_integrals(self.W, sa, hi, g=self._phi_p)
        return float(self._combine(kind, phi, far, near)[0])

    def sup(self, kinds: tuple[BKind, ...]) -> tuple[float, float]:
        """sup over s of the sum of the given objectives, with its argmax."""
        vals = sum(self.on_grid(k) for k in kinds)
        g = self.grid
        self.rising = (False, False)
        if np.any(np.isinf(vals)):
            j = int(np.argmax(np.isinf(vals)))
            return INF, float(g[j])
        j = int(np.argmax(vals))
        best, arg = float(vals[j]), float(g[j])
        # still rising toward a padded edge: the caller may widen the grid
        self.rising = (
            j == 0 and g[0] > self.a and vals.size > 1 and vals[0] > vals[1] * (1 + 1e-12),
            j == g.size - 1 and g[-1] < self.b and vals.size > 1 and vals[-1] > vals[-2] * (1 + 1e-12),
        )
        if best == 0.0:
            return 0.0, arg
        lo = math.log(g[max(j - 1, 0)])
        hi = math.log(g[min(j + 1, g.size - 1)])
        obj = lambda x: sum(self.at(k, math.exp(x)) for k in kinds)
        x, fx = _golden_max(obj, lo, hi)
        if fx > best:
            best, arg = fx, math.exp(x)
        return best, arg


def _golden_max(f, lo: float, hi: float) -> tuple[float, float]:
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - inv * (hi - lo), lo + inv * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(GOLDEN_STEPS):
        if hi - lo < 1e-14 * max(1.0, abs(lo)):
            break
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - inv * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv * (hi - lo)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------


WIDEN_DECADES = (12.0, 36.0)


def _blows_up(k: float, b: float, at_zero: bool) -> bool:
    """s**k |ln s|**b tends to infinity at the edge."""
    return (k < 0 if at_zero else k > 0) or (k == 0 and b > 0)


def _integral_law(k: float, b: float, at_zero: bool, toward_edge: bool):
    """Power-log law of an integral whose integrand is e^{kx}|x|^b in x = ln r.

    ``toward_edge``: the integral runs from s to the edge (None if it
    diverges); otherwise it runs from a fixed point to s.
    """
    integrable = _end_behaviour(k, b, at_zero)
    grown = (k, b) if k != 0 else (0.0, b + 1.0)
    if toward_edge:
        return grown if integrable else None
    return (0.0, 0.0) if integrable else grown


def _edge_diverges(prof: "_Profile", kinds, at_zero: bool) -> bool:
    """Does the objective grow without bound toward the 0 or infinity edge?"""
    pick = (lambda w: w.segments[0]) if at_zero else (lambda w: w.segments[-1])
    v_seg, w_seg = pick(prof.Vq), pick(prof.W)
    if w_seg.is_zero:
        return False
    p = prof.p
    # Phi accumulates toward the edge when it is anchored at the far side
    phi_toward = prof.origin == at_zero
    phi = _integral_law(v_seg.a + 1.0, v_seg.b, at_zero, phi_toward)
    if phi is None:
        return True
    if prof.base > 0.0 and not _blows_up(*phi, at_zero):
        phi = (0.0, 0.0)
    far = _integral_law(w_seg.a + 1.0, w_seg.b, at_zero, not phi_toward)
    near = _integral_law(w_seg.a + 1.0 + p * phi[0], w_seg.b + p * phi[1], at_zero, phi_toward)
    for kind in kinds:
        if kind is BKind.OVERLINE:
            law = None if far is None else ((p - 1) * phi[0] + far[0], (p - 1) * phi[1] + far[1])
        else:
            law = None if near is None else (near[0] - phi[0], near[1] - phi[1])
        if law is None or _blows_up(*law, at_zero):
            return True
    return False


def _widening_sup(V, W, p, variant, kinds):
    """Sup on the default grid; widen a side where the objective still rises at the edge.

    If it is still rising after the widest grid, the edge laws decide
    between an infinite supremum and a finite limit approached slowly.
    """
    pad = [PAD_DECADES, PAD_DECADES]
    prof = _Profile(V, W, p, variant, tuple(pad))
    value, arg = prof.sup(kinds)
    for extra in WIDEN_DECADES:
        if math.isinf(value) or not any(prof.rising):
            break
        pad = [extra if prof.rising[0] else pad[0], extra if prof.rising[1] else pad[1]]
        prof = _Profile(V, W, p, variant, tuple(pad))
        value, arg = prof.sup(kinds)
    if math.isfinite(value):
        for at_zero, rising in zip((True, False), prof.rising):
            if rising and _edge_diverges(prof, kinds, at_zero):
                return INF, 0.0 if at_zero else INF
    return value, arg


def constant(V: WeightSpec, W: WeightSpec, p: float, variant: ConstantVariant | None = None) -> ConstantResult:
    """Supremum defining the requested B-constant."""
    variant = variant or ConstantVariant()
    p = float(p)
    if W.restricted(*variant.domain).is_zero:
        if not p > 1:
            raise InputError("p must exceed 1")
        return ConstantResult(0.0, float("nan"), variant, p)
    value, arg = _widening_sup(V, W, p, variant, (variant.kind,))
    return ConstantResult(value, arg, variant, p, divergent=math.isinf(value))


def converse_lower_bound(V: WeightSpec, W: WeightSpec, p: float) -> float:
    """sup over s of the underline plus overline objectives (origin anchor, half-line).

    Testing the weighted inequality on ``u = int_0^min(r,s) Vq`` shows that
    any admissible constant is at least this large.
    """
    p = float(p)
    if W.is_zero:
        return 0.0
    value, _ = _widening_sup(V, W, p, ConstantVariant(), (BKind.OVERLINE, BKind.UNDERLINE))
    return value


def comparability_check(V: WeightSpec, W: WeightSpec, p: float, rtol: float = 1e-9) -> tuple[bool, tuple[float, float]]:
    """Check that each of the two constants bounds the other up to the prefactors.

    Returns ``ok`` together with the ratios of each constant to the bound
    implied by the other one (both at most 1 when ``ok``).
    """
    over = constant(V, W, p, ConstantVariant(BKind.OVERLINE)).value
    under = constant(V, W, p, ConstantVariant(BKind.UNDERLINE)).value
    if math.isinf(over) or math.isinf(under):
        ok = math.isinf(over) and math.isinf(under)
        return ok, (float("nan"), float("nan"))
    if over == 0.0 and under == 0.0:
        return True, (0.0, 0.0)
    b1 = prefactor(BKind.UNDERLINE, p) * under
    b2 = prefactor(BKind.OVERLINE, p) * over
    r1 = over / b1 if b1 else INF
    r2 = under / b2 if b2 else INF
    return bool(r1 <= 1.0 + rtol and r2 <= 1.0 + rtol), (r1, r2)
