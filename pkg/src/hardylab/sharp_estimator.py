"""Variational estimates of the best constant in int W |u|^p <= C int V |u'|^p.

The problem is truncated to [eps, L] with u(eps) = 0 and u free at L, and
discretised by continuous piecewise-linear u on a geometric grid.  At p = 2
the largest generalised eigenvalue of (mass, stiffness) is found by inverse
iteration; other p use a preconditioned ascent on the Rayleigh quotient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .gridfn import InputError, WeightSpec, _legendre, cumulative, piece_integrals, power_of_inverse
from .hardy_core import check_p
from .weighted_constants import ConstantVariant, constant, converse_lower_bound

_GAUSS = 16
_MAX_HALVINGS = 60


@dataclass(frozen=True)
class EstimatorConfig:
    eps: float = 1e-6
    L: float = 1e6
    N: int = 4000
    p: float = 2.0
    max_iter: int = 5000
    tol: float = 1e-12

    def __post_init__(self):
        if not (0.0 < self.eps < self.L < math.inf):
            raise InputError("need 0 < eps < L < inf")
        if int(self.N) != self.N or self.N < 16:
            raise InputError("N must be an integer >= 16")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InputError("max_iter must be a positive integer")
        check_p(self.p)


@dataclass(frozen=True)
class Estimate:
    value: float
    converged: bool
    iterations: int
    history: tuple[float, ...] = field(repr=False)
    r: np.ndarray = field(repr=False)
    u: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SandwichResult:
    lower: float
    estimate: float
    upper: float
    converged: bool
    iterations: int

    @property
    def ordered(self) -> bool:
        return self.lower <= self.estimate * (1 + 1e-9) and self.estimate <= self.upper * (1 + 1e-9)

    def to_dict(self) -> dict:
        return {
            "lower": self.lower,
            "estimate": self.estimate,
            "upper": self.upper,
            "converged": self.converged,
            "iterations": self.iterations,
            "ordered": self.ordered,
        }


# --------------------------------------------------------------------------
# discretisation
# --------------------------------------------------------------------------


class _Discrete:
    """Cell data of the truncated problem; node 0 (at eps) is pinned to zero."""

    def __init__(self, V: WeightSpec, W: WeightSpec, cfg: EstimatorConfig):
        inner = [b for b in V.breakpoints() + W.breakpoints() if cfg.eps < b < cfg.L]
        r = np.union1d(np.geomspace(cfg.eps, cfg.L, int(cfg.N)), inner)
        self.r, self.h, self.p = r, np.diff(r), cfg.p
        self.kv = piece_integrals(V, r[:-1], r[1:])
        if np.any(~(self.kv > 0)) or np.any(~np.isfinite(self.kv)):
            raise InputError("V must be positive and locally integrable on every cell")
        t, wq = _legendre(_GAUSS)
        self.t = 0.5 * (t + 1.0)
        self.wq = 0.5 * wq
        pts = r[:-1, None] + self.h[:, None] * self.t
        self.Wq = W(pts)
        if not np.all(np.isfinite(self.Wq)):
            raise InputError("W must be finite on [eps, L]")
        Vq = power_of_inverse(V, cfg.p)
        self.phi = cumulative(Vq, r)

    def start(self) -> np.ndarray:
        # Phi-shaped profile, the shape of the converse test functions
        return self.phi ** ((self.p - 1.0) / self.p)

    def energy(self, u) -> float:
        s = np.diff(u) / self.h
        return float(np.sum(self.kv * np.abs(s) ** self.p))

    def values_at_gauss(self, u) -> np.ndarray:
        return u[:-1, None] * (1.0 - self.t) + u[1:, None] * self.t

    def potential(self, u) -> float:
        U = self.values_at_gauss(u)
        return float(np.sum(self.h * ((self.Wq * np.abs(U) ** self.p) @ self.wq)))

    def gradients(self, u):
        p = self.p
        U = self.values_at_gauss(u)
        G = self.Wq * p * np.abs(U) ** (p - 1.0) * np.sign(U) * self.h[:, None]
        gA = np.zeros_like(u)
        gA[:-1] += G @ (self.wq * (1.0 - self.t))
        gA[1:] += G @ (self.wq * self.t)
        s = np.diff(u) / self.h
        flux = p * self.kv * np.abs(s) ** (p - 1.0) * np.sign(s) / self.h
        gB = np.zeros_like(u)
        gB[:-1] -= flux
        gB[1:] += flux
        return gA, gB

    def solve_energy_gradient(self, g) -> np.ndarray:
        """v with v(eps) = 0 and grad B(v) = g at the free nodes.

        The flux through cell c must equal the sum of g over the nodes to
        its right (free end at L), which fixes each slope in closed form.
        """
        p = self.p
        flux = np.cumsum(g[::-1])[::-1][1:]
        s = np.sign(flux) * (np.abs(flux) * self.h / (p * self.kv)) ** (1.0 / (p - 1.0))
        return np.concatenate(([0.0], np.cumsum(s * self.h)))

    def mass_bands(self):
        """Tridiagonal mass matrix int W phi_i phi_j (p = 2)."""
        a = self.h * ((self.Wq * (1.0 - self.t) ** 2) @ self.wq)
        b = self.h * ((self.Wq * self.t**2) @ self.wq)
        c = self.h * ((self.Wq * self.t * (1.0 - self.t)) @ self.wq)
        diag = np.zeros(self.r.size)
        diag[:-1] += a
        diag[1:] += b
        return diag, c

    def stiffness_bands(self, cell_weight):
        k = cell_weight / self.h**2
        diag = np.zeros(self.r.size)
        diag[:-1] += k
        diag[1:] += k
        return diag, -k


def _banded(diag, off):
    """Banded storage for solve_banded of the system without node 0."""
    n = diag.size - 1
    ab = np.zeros((3, n))
    ab[0, 1:] = off[1:]
    ab[1] = diag[1:]
    ab[2, :-1] = off[1:]
    return ab


def _tri_mul(diag, off, u):
    out = diag * u
    out[:-1] += off * u[1:]
    out[1:] += off * u[:-1]
    return out


# --------------------------------------------------------------------------
# solvers
# --------------------------------------------------------------------------


def best_constant_p2(V: WeightSpec, W: WeightSpec, cfg: EstimatorConfig) -> Estimate:
    """Largest eigenvalue of M u = lambda K u by inverse iteration."""
    if cfg.p != 2.0:
        raise InputError("best_constant_p2 needs p = 2")
    d = _Discrete(V, W, cfg)
    Md, Mo = d.mass_bands()
    Kd, Ko = d.stiffness_bands(d.kv)
    ab = _banded(Kd, Ko)
    u = d.start()
    u[0] = 0.0

    def rayleigh(u):
        return float(u @ _tri_mul(Md, Mo, u)) / float(u @ _tri_mul(Kd, Ko, u))

    q = rayleigh(u)
    history = [q]
    if q == 0.0:
        return Estimate(0.0, True, 0, (0.0,), d.r, u)
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        rhs = _tri_mul(Md, Mo, u)
        u = np.concatenate(([0.0], solve_banded((1, 1), ab, rhs[1:])))
        u /= np.max(np.abs(u))
        q_new = rayleigh(u)
        history.append(q_new)
        done = abs(q_new - q) <= cfg.tol * abs(q_new)
        q = q_new
        if done:
            converged = True
            break
    return Estimate(q, converged, it, tuple(history), d.r, u)


def best_constant_general_p(V: WeightSpec, W: WeightSpec, cfg: EstimatorConfig) -> Estimate:
    """Monotone ascent on Q(u) = int W|u|^p / int V|u'|^p.

    Each step normalises the energy to 1 and moves toward the v solving
    grad B(v) = grad A(u), i.e. the gradient of A measured in the metric of
    the energy (a nonlinear inverse-power step).  The step is halved until
    Q increases.  At p = 2 the full step is one inverse-iteration step.
    """
    d = _Discrete(V, W, cfg)
    p = cfg.p
    u = d.start()
    u[0] = 0.0

    def normalise(u):
        return u / d.energy(u) ** (1.0 / p)

    u = normalise(u)
    q = d.potential(u)
    history = [q]
    if q == 0.0:
        return Estimate(0.0, True, 0, (0.0,), d.r, u)
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        gA, _ = d.gradients(u)
        target = normalise(d.solve_energy_gradient(gA))
        t = 1.0
        accepted = False
        for _ in range(_MAX_HALVINGS):
            trial = normalise(u + t * (target - u))
            q_trial = d.potential(trial)
            if q_trial > q:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            converged = True  # no ascent left at machine precision
            break
        assert q_trial >= history[-1]
        done = q_trial - q <= cfg.tol * q_trial
        u, q = trial, q_trial
        history.append(q)
        if done:
            converged = True
            break
    return Estimate(q, converged, it, tuple(history), d.r, u)


def estimate(V: WeightSpec, W: WeightSpec, cfg: EstimatorConfig) -> Estimate:
    if cfg.p == 2.0:
        return best_constant_p2(V, W, cfg)
    return best_constant_general_p(V, W, cfg)


def sandwich(V: WeightSpec, W: WeightSpec, p: float, cfg: EstimatorConfig | None = None) -> SandwichResult:
    """Converse lower bound, truncated estimate and the better of the two upper bounds."""
    cfg = cfg or EstimatorConfig(p=p)
    if cfg.p != p:
        cfg = EstimatorConfig(cfg.eps, cfg.L, cfg.N, p, cfg.max_iter, cfg.tol)
    if W.is_zero:
        return SandwichResult(0.0, 0.0, 0.0, True, 0)
    lower = converse_lower_bound(V, W, p)
    upper = min(
        constant(V, W, p, ConstantVariant("overline")).upper_bound_on_C,
        constant(V, W, p, ConstantVariant("underline")).upper_bound_on_C,
    )
    est = estimate(V, W, cfg)
    return SandwichResult(lower, est.value, upper, est.converged, est.iterations)


def truncated_hardy_oracle(eps: float, L: float) -> float:
    """V = 1, W = r^-2, p = 2 on [eps, L], u(eps) = 0, free at L.

    Solutions r^(1/2) sin(nu ln(r/eps)) satisfy the free end when
    nu ln(L/eps) = pi - arctan(2 nu); the quotient is 1/(1/4 + nu^2).
    """
    from scipy.optimize import brentq

    T = math.log(L / eps)
    nu = brentq(lambda n: n * T - math.pi + math.atan(2.0 * n), 1e-12, math.pi / T)
    return 1.0 / (0.25 + nu * nu)
