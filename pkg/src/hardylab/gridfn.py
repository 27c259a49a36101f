"""Function carriers, power-log weights and exact piecewise quadrature.

Everything else in the package is built from three objects:

* ``LogGrid``      strictly increasing positive radii,
* ``GridFunction`` node values on a grid, read either as a continuous
  piecewise-linear function or as a step function,
* ``WeightSpec``   a piecewise weight ``c * r**a * |ln r|**b`` tiling (0, inf).

Integrals of weights are done in closed form where possible and with
Gauss-Legendre / Gauss-Jacobi rules in the log variable ``x = ln r``
otherwise.  Divergent integrals return ``inf`` rather than raising.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy import integrate as _sint
from scipy.special import roots_jacobi, roots_legendre

INF = math.inf

_GL_ORDER = 24
_PANEL_WIDTH = 0.5  # max width in ln r of a single Gauss panel


class InputError(ValueError):
    """Malformed input or violated precondition."""


class Extension(str, Enum):
    ZERO = "zero-outside"
    CONSTANT = "constant-outside"
    LINEAR0 = "linear-to-zero-at-origin"


class Kind(str, Enum):
    LINEAR = "linear"
    STEP = "step"


class Quad(NamedTuple):
    value: float
    err: float
    divergent: bool = False


# --------------------------------------------------------------------------
# grids and grid functions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LogGrid:
    nodes: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.nodes, dtype=float).copy()
        if r.ndim != 1 or r.size < 2:
            raise InputError("a grid needs at least two nodes")
        if not np.all(np.isfinite(r)) or np.any(r <= 0):
            raise InputError("grid nodes must be finite and positive")
        if np.any(np.diff(r) <= 0):
            raise InputError("grid nodes must be strictly increasing")
        r.setflags(write=False)
        object.__setattr__(self, "nodes", r)

    @classmethod
    def geometric(cls, lo: float, hi: float, n: int, include: Iterable[float] = ()) -> "LogGrid":
        """Geometric progression from lo to hi (n nodes), plus any extra nodes."""
        r = np.geomspace(lo, hi, n)
        extra = [x for x in include if lo <= x <= hi]
        if extra:
            r = np.union1d(r, extra)
        return cls(r)

    def __len__(self):
        return self.nodes.size

    def __eq__(self, other):
        return isinstance(other, LogGrid) and np.array_equal(self.nodes, other.nodes)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Node values on a grid.

    ``kind="linear"``: continuous, linear between nodes; left of ``r_1`` and
    right of ``r_N`` per ``extension`` (linear-to-zero-at-origin extends
    linearly to 0 at the origin and by a constant beyond ``r_N``).

    ``kind="step"``: ``values[i]`` holds on ``(r_{i-1}, r_i]`` with
    ``r_0 = 0``; beyond ``r_N`` the function is 0 (zero-outside) or
    ``values[-1]`` (constant-outside).
    """

    grid: LogGrid
    values: np.ndarray
    extension: Extension = Extension.ZERO
    kind: Kind = Kind.LINEAR

    def __post_init__(self):
        if not isinstance(self.grid, LogGrid):
            object.__setattr__(self, "grid", LogGrid(self.grid))
        v = np.asarray(self.values, dtype=float).copy()
        if v.shape != self.grid.nodes.shape:
            raise InputError("values must match the grid length")
        if not np.all(np.isfinite(v)):
            raise InputError("grid function values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "extension", Extension(self.extension))
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.kind is Kind.STEP and self.extension is Extension.LINEAR0:
            raise InputError("step functions support zero- or constant-outside extension only")

    @classmethod
    def from_arrays(cls, r, values, extension=Extension.ZERO, kind=Kind.LINEAR) -> "GridFunction":
        return cls(LogGrid(r), values, extension, kind)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.grid, values, self.extension, self.kind)

    def left_value(self) -> float:
        """Value on the region left of the first node (origin side)."""
        if self.kind is Kind.STEP:
            return float(self.values[0])
        if self.extension is Extension.CONSTANT:
            return float(self.values[0])
        return 0.0 if self.extension is Extension.ZERO else float("nan")

    def tail_value(self) -> float:
        """Value beyond the last node."""
        if self.extension is Extension.ZERO:
            return 0.0
        return float(self.values[-1])

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r, v = self.r, self.values
        if self.kind is Kind.STEP:
            idx = np.searchsorted(r, x, side="left")
            ext = np.append(v, self.tail_value())
            return ext[idx]
        out = np.interp(x, r, v)
        left = x < r[0]
        if self.extension is Extension.LINEAR0:
            out = np.where(left, v[0] * x / r[0], out)
        elif self.extension is Extension.ZERO:
            out = np.where(left | (x > r[-1]), 0.0, out)
        return out

    def cells(self) -> tuple[np.ndarray, np.ndarray]:
        """Piecewise-constant shadow: (values, lengths) including the tail.

        Linear functions are shadowed by the mean of the two endpoint values
        per cell; the head cell ``(0, r_1]`` and the tail ``(r_N, inf)`` are
        read off the extension.  The tail carries length ``inf``.
        """
        r, v = self.r, self.values
        if self.kind is Kind.STEP:
            vals = np.append(v, self.tail_value())
        else:
            if self.extension is Extension.LINEAR0:
                head = 0.5 * v[0]
            else:
                head = self.left_value()
            vals = np.concatenate(([head], 0.5 * (v[:-1] + v[1:]), [self.tail_value()]))
        lengths = np.concatenate(([r[0]], np.diff(r), [INF]))
        return vals, lengths

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "value"])
        for ri, vi in zip(self.r, self.values):
            w.writerow([repr(float(ri)), repr(float(vi))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, extension=Extension.ZERO, kind=Kind.LINEAR) -> "GridFunction":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [c.strip().lower() for c in rows[0]] != ["r", "value"]:
            raise InputError("grid function CSV needs the header 'r,value'")
        try:
            data = [(float(a), float(b)) for a, b in (row for row in rows[1:] if row)]
        except ValueError as exc:
            raise InputError(f"bad CSV row: {exc}") from None
        if not data:
            raise InputError("grid function CSV has no rows")
        r, v = zip(*data)
        return cls(LogGrid(r), v, extension, kind)

    def __eq__(self, other):
        return (
            isinstance(other, GridFunction)
            and self.grid == other.grid
            and np.array_equal(self.values, other.values)
            and self.extension == other.extension
            and self.kind == other.kind
        )

    __hash__ = None


# --------------------------------------------------------------------------
# weights
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    lo: float
    hi: float
    c: float
    a: float = 0.0
    b: float = 0.0

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.c == 0.0:
            return np.zeros_like(r)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            val = self.c * r**self.a
            if self.b != 0.0:
                val = val * np.abs(np.log(r)) ** self.b
        return val

    @property
    def is_zero(self) -> bool:
        return self.c == 0.0


@dataclass(frozen=True)
class WeightSpec:
    """Piecewise ``c * r**a * |ln r|**b`` on a tiling of (0, inf).

    The log factor uses ``|ln r|`` so every segment is nonnegative; on
    segments lying in ``r > 1`` this is the usual ``(ln r)**b``.
    A coefficient ``c = inf`` marks a segment where the weight is infinite
    (produced by ``power_of_inverse`` on a vanishing weight).
    """

    segments: tuple[Segment, ...]

    def __post_init__(self):
        segs = tuple(self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise InputError("a weight needs at least one segment")
        if segs[0].lo != 0.0 or segs[-1].hi != INF:
            raise InputError("segments must tile (0, inf)")
        for s, t in zip(segs, segs[1:]):
            if s.hi != t.lo:
                raise InputError("segments must be contiguous and ordered")
        for s in segs:
            if not s.lo < s.hi:
                raise InputError("empty or reversed segment")
            if not s.c >= 0 or math.isnan(s.a) or math.isnan(s.b) or math.isinf(s.a) or math.isinf(s.b):
                raise InputError("segment coefficients must be c >= 0 with finite exponents")

    # construction -------------------------------------------------------

    @classmethod
    def from_pieces(cls, pieces: Iterable[Sequence[float]]) -> "WeightSpec":
        """Build from (lo, hi, c, a, b) tuples; gaps are filled with zero."""
        segs = sorted((Segment(*map(float, p)) for p in pieces), key=lambda s: s.lo)
        out: list[Segment] = []
        pos = 0.0
        for s in segs:
            if s.lo < pos:
                raise InputError("segments overlap")
            if s.lo > pos:
                out.append(Segment(pos, s.lo, 0.0))
            out.append(s)
            pos = s.hi
        if pos < INF:
            out.append(Segment(pos, INF, 0.0))
        return cls(tuple(out))

    @classmethod
    def power(cls, c: float = 1.0, a: float = 0.0, b: float = 0.0, lo: float = 0.0, hi: float = INF) -> "WeightSpec":
        return cls.from_pieces([(lo, hi, c, a, b)])

    @classmethod
    def zero(cls) -> "WeightSpec":
        return cls((Segment(0.0, INF, 0.0),))

    @classmethod
    def indicator(cls, lo: float, hi: float, c: float = 1.0) -> "WeightSpec":
        return cls.power(c, 0.0, 0.0, lo, hi)

    @classmethod
    def from_dict(cls, d: dict) -> "WeightSpec":
        try:
            pieces = []
            for s in d["segments"]:
                hi = s["hi"]
                hi = INF if isinstance(hi, str) and hi.lower() in ("inf", "infinity") else float(hi)
                pieces.append((float(s["lo"]), hi, float(s["c"]), float(s.get("a", 0.0)), float(s.get("b", 0.0))))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed weight JSON: {exc!r}") from None
        return cls.from_pieces(pieces)

    @classmethod
    def from_json(cls, text: str) -> "WeightSpec":
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {
            "segments": [
                {"lo": s.lo, "hi": "inf" if s.hi == INF else s.hi, "c": s.c, "a": s.a, "b": s.b}
                for s in self.segments
            ]
        }

    # algebra -------------------------------------------------------------

    def scaled(self, t: float) -> "WeightSpec":
        return WeightSpec(tuple(Segment(s.lo, s.hi, s.c * t, s.a, s.b) for s in self.segments))

    def times_power(self, k: float) -> "WeightSpec":
        """Multiply by r**k."""
        return WeightSpec(tuple(Segment(s.lo, s.hi, s.c, s.a + k, s.b) for s in self.segments))

    def restricted(self, lo: float = 0.0, hi: float = INF) -> "WeightSpec":
        """Same weight on (lo, hi), zero elsewhere."""
        pieces = []
        for s in self.segments:
            a, b = max(s.lo, lo), min(s.hi, hi)
            if a < b and not s.is_zero:
                pieces.append((a, b, s.c, s.a, s.b))
        return WeightSpec.from_pieces(pieces)

    def breakpoints(self) -> list[float]:
        return [s.lo for s in self.segments[1:]]

    @property
    def is_zero(self) -> bool:
        return all(s.is_zero for s in self.segments)

    def segment_at(self, r: float) -> Segment:
        """Segment owning r; boundary points belong to the left segment."""
        for s in self.segments:
            if r <= s.hi:
                return s
        return self.segments[-1]

    def __call__(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for s in reversed(self.segments):
            # left tie-break: (lo, hi] owns hi
            mask = (r > s.lo) & (r <= s.hi)
            if np.any(mask):
                out = np.where(mask, s(r) if not s.is_zero else 0.0, out)
        return out


def power_of_inverse(V: WeightSpec, p: float) -> WeightSpec:
    """Return V**(-1/(p-1)) segment-wise; zero segments become infinite."""
    if not p > 1:
        raise InputError("p must exceed 1")
    q = -1.0 / (p - 1.0)
    segs = []
    for s in V.segments:
        if s.c == 0.0:
            segs.append(Segment(s.lo, s.hi, INF, 0.0, 0.0))
        elif s.c == INF:
            segs.append(Segment(s.lo, s.hi, 0.0, 0.0, 0.0))
        else:
            segs.append(Segment(s.lo, s.hi, s.c**q, s.a * q, s.b * q))
    return WeightSpec(tuple(segs))


def sample(w: WeightSpec, grid: LogGrid) -> GridFunction:
    vals = w(grid.nodes)
    if not np.all(np.isfinite(vals)):
        raise InputError("weight is not finite at every grid node")
    return GridFunction(grid, vals, Extension.ZERO)


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _legendre(n: int):
    return roots_legendre(n)


@lru_cache(maxsize=None)
def _jacobi(n: int, alpha: float, beta: float):
    return roots_jacobi(n, alpha, beta)


def _panels(x1: np.ndarray, x2: np.ndarray, width: float):
    """Split [x1, x2] into equal panels no wider than ``width``."""
    span = x2 - x1
    m = np.maximum(1, np.ceil(span / width)).astype(int)
    owner = np.repeat(np.arange(x1.size), m)
    j = np.arange(m.sum()) - np.repeat(np.cumsum(m) - m, m)
    h = (span / m)[owner]
    return owner, x1[owner] + j * h, h


def _grade(x1: np.ndarray, x2: np.ndarray):
    """Split intervals on one side of 0 so that |x| grows by at most 2x per piece."""
    near = np.minimum(np.abs(x1), np.abs(x2))
    far = np.maximum(np.abs(x1), np.abs(x2))
    with np.errstate(divide="ignore"):
        m = np.where(near > 0, np.ceil(np.log2(far / np.where(near > 0, near, 1.0))), 1)
    m = np.maximum(1, m).astype(int)
    owner = np.repeat(np.arange(x1.size), m)
    j = np.arange(m.sum()) - np.repeat(np.cumsum(m) - m, m)
    ratio = (far / np.where(near > 0, near, far))[owner] ** (1.0 / m[owner])
    lo_abs = near[owner] * ratio**j
    hi_abs = np.where(j == m[owner] - 1, far[owner], near[owner] * ratio ** (j + 1))
    sign = np.sign(x1 + x2)[owner]
    lo = np.where(sign > 0, lo_abs, -hi_abs)
    hi = np.where(sign > 0, hi_abs, -lo_abs)
    return owner, lo, hi


def _log_factor(x: np.ndarray, b: float) -> np.ndarray:
    if b == 0.0:
        return np.ones_like(x)
    with np.errstate(divide="ignore"):
        return np.abs(x) ** b


def _gauss_x(seg: Segment, x1, x2, g=None) -> np.ndarray:
    """Integral of seg(r) * g(r) dr over [e^x1, e^x2] with x1..x2 not straddling 0."""
    if x1.size == 0:
        return np.zeros(0)
    k = seg.a + 1.0
    if seg.b != 0.0 and not (seg.b > 0 and float(seg.b).is_integer()):
        # |x|**b is singular at x = 0: grade panels geometrically toward it
        go, gl, gh = _grade(x1, x2)
        po, left, h = _panels(gl, gh, _PANEL_WIDTH)
        owner = go[po]
    else:
        owner, left, h = _panels(x1, x2, _PANEL_WIDTH)
    xi, wi = _legendre(_GL_ORDER)
    X = left[:, None] + 0.5 * h[:, None] * (xi + 1.0)
    F = seg.c * np.exp(k * X) * _log_factor(X, seg.b)
    if g is not None:
        F = F * g(np.exp(X))
    panel = 0.5 * h * (F @ wi)
    return np.bincount(owner, weights=panel, minlength=x1.size)


def _jacobi_at_one(seg: Segment, xend, g=None) -> np.ndarray:
    """Integral over the x-interval between 0 and xend (|xend| <= panel width).

    The |x|**b singularity at x = 0 (r = 1) is absorbed into a Gauss-Jacobi
    weight.  Returns inf when b <= -1.
    """
    if xend.size == 0:
        return np.zeros(0)
    if seg.b <= -1.0:
        return np.full(xend.size, INF)
    k = seg.a + 1.0
    half = np.abs(xend) / 2.0
    out = np.empty(xend.size)
    for sign in (1.0, -1.0):
        m = np.sign(xend) == sign
        if not np.any(m):
            continue
        if sign > 0:
            xi, wi = _jacobi(_GL_ORDER, 0.0, seg.b)
            X = (xend[m] / 2.0)[:, None] * (1.0 + xi)
        else:
            xi, wi = _jacobi(_GL_ORDER, seg.b, 0.0)
            X = (xend[m] / 2.0)[:, None] * (1.0 - xi)
        F = seg.c * np.exp(k * X)
        if g is not None:
            F = F * g(np.exp(X))
        out[m] = half[m] ** (seg.b + 1.0) * (F @ wi)
    return out


def _seg_finite(seg: Segment, lo: np.ndarray, hi: np.ndarray, g=None) -> np.ndarray:
    """Integral of seg * g over [lo, hi] (arrays, 0 < lo <= hi < inf, inside seg)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    out = np.zeros(lo.shape)
    if seg.c == 0.0 or lo.size == 0:
        return out
    if seg.c == INF:
        return np.where(hi > lo, INF, 0.0)
    if seg.b == 0.0 and g is None:
        k = seg.a + 1.0
        ratio = np.log(hi / lo)
        if k == 0.0:
            return seg.c * ratio
        return seg.c * lo**k * np.expm1(k * ratio) / k
    x1, x2 = np.log(lo), np.log(hi)
    if seg.b == 0.0:
        return _gauss_x(seg, x1, x2, g)
    # split at x = 0; pieces touching 0 get a Jacobi panel next to it
    for side in (-1.0, 1.0):
        if side < 0:
            a, b = x1, np.minimum(x2, 0.0)
        else:
            a, b = np.maximum(x1, 0.0), x2
        m = a < b
        if not np.any(m):
            continue
        a, b = a[m], b[m]
        part = np.zeros(a.size)
        near = (b == 0.0) if side < 0 else (a == 0.0)
        if np.any(near):
            if side < 0:
                xj = np.maximum(a[near], -_PANEL_WIDTH)
                part[near] = _jacobi_at_one(seg, xj, g) + _gauss_x(seg, a[near], xj, g)
            else:
                xj = np.minimum(b[near], _PANEL_WIDTH)
                part[near] = _jacobi_at_one(seg, xj, g) + _gauss_x(seg, xj, b[near], g)
        far = ~near
        part[far] = _gauss_x(seg, a[far], b[far], g)
        out[m] += part
    return out


def piece_integrals(w: WeightSpec, lo, hi, g=None) -> np.ndarray:
    """Vectorized integral of w (times g, if given) over finite [lo_i, hi_i]."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    out = np.zeros(lo.shape)
    for s in w.segments:
        a = np.maximum(lo, s.lo)
        b = np.minimum(hi, s.hi)
        m = a < b
        if np.any(m) and not s.is_zero:
            out[m] += _seg_finite(s, a[m], b[m], g)
    return out


def cumulative(w: WeightSpec, r, g=None) -> np.ndarray:
    """Running integral from r[0] to r[i] (r ascending, finite, positive)."""
    r = np.asarray(r, dtype=float)
    pieces = piece_integrals(w, r[:-1], r[1:], g)
    return np.concatenate(([0.0], np.cumsum(pieces)))


def _end_behaviour(k: float, b: float, at_zero: bool) -> bool:
    """True if c e^{kx}|x|^b is integrable toward x = -inf (at_zero) or +inf."""
    lead = -k if at_zero else k
    if lead < 0:
        return True
    if lead == 0:
        return b < -1
    return False


def _quad_x(seg: Segment, x1: float, x2: float, g=None) -> tuple[float, float]:
    k = seg.a + 1.0

    def f(x):
        v = seg.c * math.exp(k * x) * (abs(x) ** seg.b if seg.b else 1.0)
        if g is not None:
            v *= float(g(np.array([math.exp(x)]))[0])
        return v

    val, err = _sint.quad(f, x1, x2, epsabs=0.0, epsrel=1e-13, limit=400)
    return val, err


def integrate(w: WeightSpec, lo: float = 0.0, hi: float = INF, g=None) -> Quad:
    """Integral of w (times the optional callable g) over (lo, hi).

    Pure-power segments without g are done in closed form; everything else
    by Gauss rules in ln r, with scipy.quad on unbounded log ranges.  Tails
    are classified analytically (ignoring g, which callers keep bounded)
    and a divergent integral is returned as ``Quad(inf, inf, True)``.
    """
    lo = float(lo)
    hi = float(hi)
    if not (0.0 <= lo <= hi):
        raise InputError("integration limits must satisfy 0 <= lo <= hi")
    if lo == hi:
        return Quad(0.0, 0.0)
    total, err = 0.0, 0.0
    for s in w.segments:
        l, h = max(lo, s.lo), min(hi, s.hi)
        if not l < h or s.is_zero:
            continue
        if s.c == INF:
            return Quad(INF, INF, True)
        k = s.a + 1.0
        if l == 0.0:
            if not _end_behaviour(k, s.b, at_zero=True):
                return Quad(INF, INF, True)
            if s.b == 0.0 and g is None:
                h_fin = h if h < INF else 1.0
                total += s.c * h_fin**k / k
                l = h_fin
            else:
                h0 = min(h, math.exp(-1.0))
                v, e = _quad_x(s, -INF, math.log(h0), g)
                total, err = total + v, err + e
                l = h0
        if h == INF:
            if not _end_behaviour(k, s.b, at_zero=False):
                return Quad(INF, INF, True)
            if s.b == 0.0 and g is None:
                total += -s.c * l**k / k
                h = l
            else:
                l0 = max(l, math.e)
                v, e = _quad_x(s, math.log(l0), INF, g)
                total, err = total + v, err + e
                h = l0
        if l < h:
            v = float(_seg_finite(s, np.array([l]), np.array([h]), g)[0])
            if math.isinf(v):
                return Quad(INF, INF, True)
            total += v
    err += 64 * np.finfo(float).eps * abs(total)
    return Quad(float(total), float(err))


def _times(scale: float, integral: float) -> float:
    # 0 * inf counts as 0: a vanishing factor kills a divergent weight
    return 0.0 if scale == 0.0 else scale * integral


# --------------------------------------------------------------------------
# scans and energies
# --------------------------------------------------------------------------


def prefix_sup(f: GridFunction) -> GridFunction:
    """Running maximum of the node values from the left."""
    return f.with_values(np.maximum.accumulate(f.values))


def suffix_sup(f: GridFunction) -> GridFunction:
    """Running maximum of the node values from the right."""
    return f.with_values(np.maximum.accumulate(f.values[::-1])[::-1])


def slopes(u: GridFunction) -> np.ndarray:
    if u.kind is not Kind.LINEAR:
        raise InputError("derivatives need a piecewise-linear function")
    return np.diff(u.values) / np.diff(u.r)


def lp_energy(u: GridFunction, p: float, V: WeightSpec | None = None) -> float:
    """Integral of V |u'|**p; V = None means V = 1."""
    if not p > 1:
        raise InputError("p must exceed 1")
    r, v = u.r, u.values
    beta = slopes(u)
    if V is None:
        cell = np.diff(r)
    else:
        cell = piece_integrals(V, r[:-1], r[1:])
    mag = np.abs(beta) ** p
    with np.errstate(invalid="ignore"):
        terms = np.where(mag == 0.0, 0.0, mag * cell)
    total = float(np.sum(terms))
    if u.extension is Extension.LINEAR0 and v[0] != 0.0:
        head = r[0] if V is None else integrate(V, 0.0, r[0]).value
        total += _times(abs(v[0] / r[0]) ** p, head)
    return total


def _zero_split(u: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    """Cell endpoints of a linear u, split at interior sign changes."""
    r, v = u.r, u.values
    lo, hi = r[:-1], r[1:]
    cross = (v[:-1] * v[1:]) < 0
    if not np.any(cross):
        return lo, hi
    z = lo[cross] - v[:-1][cross] * (hi[cross] - lo[cross]) / (v[1:][cross] - v[:-1][cross])
    edges = np.sort(np.concatenate((r, z)))
    return edges[:-1], edges[1:]


def weighted_lp(u: GridFunction, W: WeightSpec, p: float) -> float:
    """Integral of W |u|**p over (0, inf)."""
    r, v = u.r, u.values
    if u.kind is Kind.STEP:
        vals, _ = u.cells()
        lo = np.concatenate(([0.0], r))
        hi = np.concatenate((r, [INF]))
        total = 0.0
        for val, a, b in zip(vals, lo, hi):
            if val != 0.0:
                total += _times(abs(val) ** p, integrate(W, a, b).value)
        return total
    lo, hi = _zero_split(u)
    total = float(np.sum(piece_integrals(W, lo, hi, g=lambda x: np.abs(u(x)) ** p)))
    if u.extension is Extension.LINEAR0:
        total += _times(abs(v[0] / r[0]) ** p, integrate(W.times_power(p), 0.0, r[0]).value)
    elif u.extension is Extension.CONSTANT:
        total += _times(abs(v[0]) ** p, integrate(W, 0.0, r[0]).value)
    total += _times(abs(u.tail_value()) ** p, integrate(W, r[-1], INF).value)
    return total


def primitive(f: GridFunction, s) -> np.ndarray:
    """Integral of f from 0 to s (vectorized in s)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    r, v = f.r, f.values
    if f.kind is Kind.STEP:
        lengths = np.diff(np.concatenate(([0.0], r)))
        node_cum = np.cumsum(v * lengths)
        i = np.searchsorted(r, s, side="left")
        left_edge = np.concatenate(([0.0], r))[i]
        before = np.concatenate(([0.0], node_cum))[i]
        vals = np.append(v, f.tail_value())[i]
        return before + vals * (s - left_edge)
    if f.extension is Extension.LINEAR0:
        head_total = 0.5 * v[0] * r[0]
    else:
        head_total = f.left_value() * r[0]
    node_cum = head_total + np.concatenate(([0.0], np.cumsum(0.5 * (v[:-1] + v[1:]) * np.diff(r))))
    out = np.empty_like(s)
    inner = (s >= r[0]) & (s <= r[-1])
    i = np.clip(np.searchsorted(r, s[inner], side="right") - 1, 0, r.size - 2)
    out[inner] = node_cum[i] + 0.5 * (s[inner] - r[i]) * (v[i] + f(s[inner]))
    head = s < r[0]
    if f.extension is Extension.LINEAR0:
        out[head] = 0.5 * v[0] * s[head] ** 2 / r[0]
    else:
        out[head] = f.left_value() * s[head]
    tail = s > r[-1]
    out[tail] = node_cum[-1] + f.tail_value() * (s[tail] - r[-1])
    return out
