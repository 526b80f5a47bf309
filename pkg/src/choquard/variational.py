"""Energy functionals, fibering maps, Nehari projection and constraint scaling.

With A = int |grad u|^2, B = int (I_alpha * |u|^p)|u|^p, C = int |u|^q and
D = int u^2:

    I(u) = (A + D)/2 - B/(2p) - C/q         action
    J(u) = A + D - B - C                     Nehari functional <I'(u), u>
    H(u) = B/(2p) + C/q - D/2                constraint functional
    T(u) = A/2

Gradients are exact derivatives of the discrete energies, so finite
differences of I agree with <gradient_I(u), v> to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .constants import ProblemParams
from .errors import BracketError, DegenerateInputError, DomainError, InfeasibleError
from .radial import RadialField, dilate, dirichlet_energy, lebesgue_norm
from .riesz import KernelMatrix, apply_riesz, choquard_energy

__all__ = [
    "EnergyBreakdown",
    "FiberingResult",
    "energy_breakdown",
    "ray_energy",
    "nehari_time",
    "fibering_g",
    "fibering_from_breakdown",
    "fibering_root",
    "nehari_project",
    "peak_two_term",
    "constraint_sigma",
    "constraint_scale",
    "gradient_I",
    "raw_gradient_I",
    "el_residual",
    "h1_norm_sq",
]


@dataclass(frozen=True)
class EnergyBreakdown:
    a: float
    b: float
    c: float
    d: float
    p: float = field(repr=False)
    q: float = field(repr=False)

    def __post_init__(self):
        for name in ("a", "b", "c", "d", "p", "q"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @property
    def action_I(self) -> float:
        return 0.5 * (self.a + self.d) - self.b / (2 * self.p) - self.c / self.q

    @property
    def nehari_J(self) -> float:
        return self.a + self.d - self.b - self.c

    @property
    def constraint_H(self) -> float:
        return self.b / (2 * self.p) + self.c / self.q - 0.5 * self.d

    @property
    def half_dirichlet_T(self) -> float:
        return 0.5 * self.a

    def scaled(self, t: float) -> "EnergyBreakdown":
        """Breakdown of t*u."""
        return EnergyBreakdown(
            a=t * t * self.a,
            b=t ** (2 * self.p) * self.b,
            c=t**self.q * self.c,
            d=t * t * self.d,
            p=self.p,
            q=self.q,
        )

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "d": self.d,
            "I": self.action_I,
            "J": self.nehari_J,
            "H": self.constraint_H,
            "T": self.half_dirichlet_T,
        }


def energy_breakdown(u: RadialField, K: KernelMatrix, params: ProblemParams) -> EnergyBreakdown:
    if u.grid.N != params.N:
        raise DomainError(f"field dimension {u.grid.N} differs from params N={params.N}")
    if K.alpha != params.alpha:
        raise DomainError(f"kernel alpha {K.alpha} differs from params alpha={params.alpha}")
    return EnergyBreakdown(
        a=dirichlet_energy(u),
        b=choquard_energy(K, u, params.p),
        c=lebesgue_norm(u, params.q),
        d=lebesgue_norm(u, 2.0),
        p=params.p,
        q=params.q,
    )


# -- fibering map -----------------------------------------------------------


def ray_energy(t: float, br: EnergyBreakdown) -> float:
    """I(t u) from the integrals of u."""
    p, q = br.p, br.q
    return 0.5 * t * t * (br.a + br.d) - t ** (2 * p) * br.b / (2 * p) - t**q * br.c / q


def fibering_g(t: float, ad: float, b: float, c: float, p: float, q: float) -> float:
    """g(t) with d/dt J(t u) = t g(t)."""
    return 2 * ad - 2 * p * t ** (2 * p - 2) * b - q * t ** (q - 2) * c


def _decreasing_root(f, df, lo=1e-8, hi=1e8, bracket_rtol=1e-6, tol=1e-12):
    """Root of a strictly decreasing f on (lo, hi): log-bisection, then Newton."""
    flo, fhi = f(lo), f(hi)
    if not (flo > 0 > fhi):
        raise BracketError(f"no sign change on [{lo:g}, {hi:g}] (f(lo)={flo:g}, f(hi)={fhi:g})")
    while hi / lo > 1.0 + bracket_rtol:
        mid = math.sqrt(lo * hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    t = math.sqrt(lo * hi)
    scale = abs(flo)
    for _ in range(10):
        ft = f(t)
        if abs(ft) <= tol * scale:
            break
        step = ft / df(t)
        t_new = t - step
        if not lo * 0.5 < t_new < hi * 2.0:
            break
        t = t_new
    return t


def nehari_time(ad: float, b: float, c: float, p: float, q: float) -> float:
    """Unique t > 0 with t^2 ad = t^{2p} b + t^q c (i.e. J(t u) = 0)."""
    if b <= 0.0 and c <= 0.0:
        raise DegenerateInputError("B(u) = C(u) = 0: the ray never meets the Nehari manifold")

    def phi(t):
        return ad - b * t ** (2 * p - 2) - c * t ** (q - 2)

    def dphi(t):
        return -(2 * p - 2) * b * t ** (2 * p - 3) - (q - 2) * c * t ** (q - 3)

    return _decreasing_root(phi, dphi)


@dataclass(frozen=True)
class FiberingResult:
    t_root: float  # Nehari time t_u
    t_one: float  # sign change of g
    g_samples: list
    bracket_lo: float
    bracket_hi: float

    def to_dict(self) -> dict:
        return {
            "tRoot": self.t_root,
            "tOne": self.t_one,
            "bracketLo": self.bracket_lo,
            "bracketHi": self.bracket_hi,
            "gSamples": [list(pair) for pair in self.g_samples],
        }


def fibering_from_breakdown(br: EnergyBreakdown, n_samples: int = 41) -> FiberingResult:
    ad, b, c, p, q = br.a + br.d, br.b, br.c, br.p, br.q
    if b <= 0.0 and c <= 0.0:
        raise DegenerateInputError("u = 0 (B = C = 0): fibering map is degenerate")
    t_u = nehari_time(ad, b, c, p, q)

    def g(t):
        return fibering_g(t, ad, b, c, p, q)

    def dg(t):
        return -2 * p * (2 * p - 2) * t ** (2 * p - 3) * b - q * (q - 2) * t ** (q - 3) * c

    t1 = _decreasing_root(g, dg)
    lo, hi = t1 * (1 - 1e-3), t1 * (1 + 1e-3)
    ts = t_u * np.logspace(-2, 2, n_samples)
    samples = [(float(t), float(g(t))) for t in ts]
    return FiberingResult(t_root=t_u, t_one=t1, g_samples=samples, bracket_lo=lo, bracket_hi=hi)


def fibering_root(u: RadialField, K: KernelMatrix, params: ProblemParams) -> FiberingResult:
    if u.is_zero:
        raise DegenerateInputError("fibering map of the zero field")
    return fibering_from_breakdown(energy_breakdown(u, K, params))


def nehari_project(u: RadialField, K: KernelMatrix, params: ProblemParams) -> RadialField:
    """t_u u, the unique point of the ray through u on the Nehari manifold."""
    if u.is_zero:
        raise DegenerateInputError("cannot project the zero field onto the Nehari manifold")
    br = energy_breakdown(u, K, params)
    t = nehari_time(br.a + br.d, br.b, br.c, br.p, br.q)
    return u.scaled(t)


def peak_two_term(a: float, b: float, p: float) -> float:
    """max_{t >= 0} (t^2 a/2 - t^{2p} b/(2p)) = ((p-1)/(2p)) (a^p/b)^{1/(p-1)}."""
    if not (a > 0 and b > 0):
        raise DomainError(f"need a > 0 and b > 0, got a={a}, b={b}")
    if not p > 1:
        raise DomainError(f"need p > 1, got {p}")
    return (p - 1) / (2 * p) * (a**p / b) ** (1.0 / (p - 1))


# -- constraint manifold ----------------------------------------------------


def constraint_sigma(br: EnergyBreakdown, N: int, alpha: float) -> float:
    """sigma > 0 with sigma^{N+alpha} B/(2p) + sigma^N (C/q - D/2) = 1."""
    bq = br.b / (2 * br.p)
    rest = br.c / br.q - 0.5 * br.d
    if bq <= 0.0 and rest <= 0.0:
        raise InfeasibleError("H(u_sigma) <= 0 for every sigma > 0: no point on the constraint set")

    def h(s):
        return s**N * (s**alpha * bq + rest) - 1.0

    lo, hi = 1.0, 1.0
    while h(lo) > 0:
        lo *= 0.5
        if lo < 1e-12:
            raise BracketError("constraint scaling: no lower bracket")
    while h(hi) < 0:
        hi *= 2.0
        if hi > 1e12:
            raise BracketError("constraint scaling: no upper bracket")
    if h(1.0) == 0.0:
        return 1.0
    return brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def constraint_scale(
    u: RadialField, K: KernelMatrix, params: ProblemParams, tol: float = 1e-10
) -> tuple[float, RadialField]:
    """Dilate u so that H(u_sigma) = 1.

    The scaling laws of B, C, D give sigma in closed form up to a 1D root; the
    final sigma is polished on the actually resampled field.
    """
    br = energy_breakdown(u, K, params)
    if abs(br.constraint_H - 1.0) <= tol:
        return 1.0, u
    sigma0 = constraint_sigma(br, params.N, params.alpha)

    def resid(s):
        return energy_breakdown(dilate(u, s), K, params).constraint_H - 1.0

    r0 = resid(sigma0)
    if abs(r0) <= tol:
        return sigma0, dilate(u, sigma0)
    step = 1e-4
    lo = hi = sigma0
    for _ in range(40):
        lo, hi = sigma0 * (1 - step), sigma0 * (1 + step)
        if resid(lo) < 0 < resid(hi):
            break
        step *= 2
    else:
        raise BracketError("could not bracket the polished constraint scale")
    sigma = brentq(resid, lo, hi, xtol=1e-15 * sigma0, rtol=4 * np.finfo(float).eps)
    return sigma, dilate(u, sigma)


# -- gradients --------------------------------------------------------------


def _signed_power(v: np.ndarray, e: float) -> np.ndarray:
    """|v|^{e-1} v without 0 * inf at v = 0."""
    return np.sign(v) * np.abs(v) ** e


def nonlinear_term(u: RadialField, K: KernelMatrix, params: ProblemParams) -> np.ndarray:
    """(I_alpha * |u|^p)|u|^{p-2}u + |u|^{q-2}u at the nodes."""
    v = u.values
    pot = apply_riesz(K, u.with_values(np.abs(v) ** params.p)).values
    return pot * _signed_power(v, params.p - 1) + _signed_power(v, params.q - 1)


def raw_gradient_I(u: RadialField, K: KernelMatrix, params: ProblemParams) -> np.ndarray:
    """Partial derivatives dI_h/du_i of the discrete action."""
    g = u.grid
    v = u.values
    return g.sphere_area * (g.stiffness @ v + g.weights * (v - nonlinear_term(u, K, params)))


def gradient_I(u: RadialField, K: KernelMatrix, params: ProblemParams) -> RadialField:
    """L^2 representative of I'(u): <gradient_I(u), v> = integrate(gradient_I(u) * v)."""
    g = u.grid
    return u.with_values(raw_gradient_I(u, K, params) / (g.sphere_area * g.weights))


def h1_norm_sq(u: RadialField) -> float:
    g = u.grid
    return float(u.values @ (g.h1_gram @ u.values))


def el_residual(u: RadialField, K: KernelMatrix, params: ProblemParams) -> tuple[float, bool]:
    """(||I'(u)||_{H^{-1}} / ||u||_{H^1}, trivial) -- trivial flags u = 0."""
    if u.is_zero:
        return 0.0, True
    raw = raw_gradient_I(u, K, params)
    dual = float(raw @ u.grid.h1_solver(raw))
    return math.sqrt(max(dual, 0.0) / h1_norm_sq(u)), False
