"""Energy-level verification and descent solvers.

The Nehari level c = inf over the Nehari manifold of I is bounded above by
the ray maxima max_t I(t U_eps); the constraint level inf{T(u) : H(u) = 1}
is bounded above by T(t_eps v_eps) for normalized bubbles v_eps.  Both upper
bounds are compared with the compactness thresholds of constants.py.  The
descent solvers are explicit substitutes for the non-constructive existence
arguments and return discrete critical points with their residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .bubbles import (
    BubbleSpec,
    bubble,
    bubble_breakdown,
    bubble_critical_norm,
    check_s_exponent,
    default_s_exponent,
)
from .constants import (
    ProblemParams,
    choquard_constant,
    constraint_level_bound,
    nehari_level_bound,
    sobolev_constant,
)
from .errors import (
    ConfigError,
    ConvergenceError,
    DataError,
    DegenerateInputError,
    DomainError,
    InfeasibleError,
    StagnationError,
)
from .radial import RadialField, RadialGrid, lp_norm, schwarz_rearrange
from .riesz import KernelMatrix, choquard_energy
from .variational import (
    EnergyBreakdown,
    constraint_scale,
    el_residual,
    energy_breakdown,
    h1_norm_sq,
    nehari_project,
    nehari_time,
    nonlinear_term,
    raw_gradient_I,
    ray_energy,
)

__all__ = [
    "LevelReport",
    "SolverOptions",
    "max_energy_along_ray",
    "max_energy_from_breakdown",
    "verify_nehari_level",
    "minimize_nehari",
    "constraint_time",
    "verify_constraint_level",
    "minimize_constraint",
    "BrezisLiebReport",
    "brezis_lieb_check",
    "subadditivity_gap",
    "contradiction_level",
    "nehari_limit_time",
    "MARGIN_RTOL",
]

MARGIN_RTOL = 1e-4


@dataclass
class LevelReport:
    level: float
    bound: float
    margin: float
    eps_used: float
    iterations: int
    residual: float
    breakdown: EnergyBreakdown | None
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "bound": self.bound,
            "margin": self.margin,
            "epsUsed": self.eps_used,
            "iterations": self.iterations,
            "residual": self.residual,
            "breakdown": None if self.breakdown is None else self.breakdown.to_dict(),
            "passed": self.passed,
            "details": self.details,
        }


@dataclass(frozen=True)
class SolverOptions:
    max_iter: int = 2000
    tol_I: float = 1e-10
    tol_residual: float = 1e-4
    eta0: float = 1.0

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigError(f"maxIter must be >= 1, got {self.max_iter}")
        for name in ("tol_I", "tol_residual", "eta0"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")


# -- Nehari level -----------------------------------------------------------


def max_energy_from_breakdown(br: EnergyBreakdown) -> tuple[float, float]:
    """(t*, I(t* u)); t* is the Nehari time, the unique critical point of t -> I(t u)."""
    t = nehari_time(br.a + br.d, br.b, br.c, br.p, br.q)
    return t, ray_energy(t, br)


def max_energy_along_ray(u: RadialField, K: KernelMatrix, params: ProblemParams) -> tuple[float, float]:
    if u.is_zero:
        raise DegenerateInputError("the ray through 0 has no maximizer")
    return max_energy_from_breakdown(energy_breakdown(u, K, params))


def nehari_limit_time(params: ProblemParams) -> float:
    """Limit of the Nehari time of U_eps as eps -> 0: C0^{-1/(2(p-1))} S^{-alpha/(4(p-1))}."""
    p = params.p
    C0 = choquard_constant(params.N, params.alpha)
    S = sobolev_constant(params.N)
    return C0 ** (-1.0 / (2 * (p - 1))) * S ** (-params.alpha / (4 * (p - 1)))


def _resolve_s(params: ProblemParams, s_exponent: float | None) -> float | None:
    if params.N != 4:
        return None
    s = default_s_exponent(params.q) if s_exponent is None else s_exponent
    check_s_exponent(params.q, s)
    return s


def _specs(params: ProblemParams, eps_list, s_exponent):
    eps = [float(e) for e in eps_list]
    if not eps:
        raise DataError("eps list is empty")
    if any(not e > 0 for e in eps):
        raise DataError("eps values must be positive")
    s = _resolve_s(params, s_exponent)
    return [BubbleSpec.for_scan(params.N, e, params.q, s) for e in eps], s


def verify_nehari_level(
    params: ProblemParams,
    grid: RadialGrid,
    K: KernelMatrix,
    eps_list,
    s_exponent: float | None = None,
) -> LevelReport:
    """Upper-bound c by min over eps of max_t I(t U_eps) and compare with the threshold."""
    params.require_regime()
    specs, s = _specs(params, eps_list, s_exponent)
    bound = nehari_level_bound(params)
    rows, best = [], None
    for spec in specs:
        br = bubble_breakdown(grid, K, params, spec)
        t, val = max_energy_from_breakdown(br)
        rows.append({"eps": spec.eps, "sigma": spec.sigma, "tStar": t, "value": val})
        if best is None or val < best[1]:
            best = (spec, val, br)
    spec, level, br = best
    margin = bound - level
    return LevelReport(
        level=level,
        bound=bound,
        margin=margin,
        eps_used=spec.eps,
        iterations=0,
        residual=0.0,
        breakdown=br,
        passed=bool(margin > MARGIN_RTOL * bound),
        details={"rows": rows, "sExponent": s, "tLimit": nehari_limit_time(params)},
    )


def _nehari_coercivity(params: ProblemParams) -> float:
    return 0.5 - max(1.0 / (2 * params.p), 1.0 / params.q)


def minimize_nehari(
    params: ProblemParams,
    grid: RadialGrid,
    K: KernelMatrix,
    start: RadialField,
    opts: SolverOptions = SolverOptions(),
) -> tuple[RadialField, LevelReport]:
    """Projected descent on the Nehari manifold.

    Each step moves against the H^1 Riesz representative of I'(u) and
    projects back along the ray; the step halves whenever I would increase.
    """
    params.require_regime()
    if start.is_zero:
        raise DegenerateInputError("minimizeNehari needs a nonzero start")
    u = nehari_project(start, K, params)
    br = energy_breakdown(u, K, params)
    I = br.action_I
    kappa = _nehari_coercivity(params)
    norms = [br.a + br.d]
    values = [I]
    eta = opts.eta0
    converged = False
    it = 0
    res = math.inf
    for it in range(1, opts.max_iter + 1):
        direction = grid.h1_solver(raw_gradient_I(u, K, params))
        accepted = False
        while eta > 1e-12:
            trial = u.with_values(u.values - eta * direction)
            if not trial.is_zero:
                trial = nehari_project(trial, K, params)
                tbr = energy_breakdown(trial, K, params)
                if tbr.action_I <= I:
                    accepted = True
                    break
            eta *= 0.5
        if not accepted:
            res, _ = el_residual(u, K, params)
            if res < opts.tol_residual:
                converged = True
                break
            raise StagnationError(
                "minimizeNehari: no descent step available",
                {"iteration": it, "I": I, "residual": res},
            )
        dI = I - tbr.action_I
        u, br, I = trial, tbr, tbr.action_I
        norms.append(br.a + br.d)
        values.append(I)
        eta = min(opts.eta0, eta * 1.5)
        if dI < opts.tol_I * abs(I):
            res, _ = el_residual(u, K, params)
            if res < opts.tol_residual:
                converged = True
                break
    if not converged:
        res, _ = el_residual(u, K, params)
        raise ConvergenceError(
            f"minimizeNehari did not converge in {opts.max_iter} iterations",
            {"I": I, "residual": res, "lastValues": values[-5:]},
        )
    bound = nehari_level_bound(params)
    c_est = I
    norm_bound = (c_est + 1.0) / kappa
    monitored = [n for n, v in zip(norms, values) if v <= c_est + 1.0]
    delta0_sq = min(norms)
    norm_sq = br.a + br.d
    details = {
        "history": values,
        "normBound": norm_bound,
        "maxNormSq": max(monitored),
        "normBoundHolds": bool(max(monitored) <= norm_bound),
        "nehariDefect": br.nehari_J / norm_sq,
        "delta0Sq": delta0_sq,
        "lowerBound": kappa * delta0_sq,
        "lowerBoundHolds": bool(I >= kappa * delta0_sq > 0),
    }
    margin = bound - I
    report = LevelReport(
        level=I,
        bound=bound,
        margin=margin,
        eps_used=math.nan,
        iterations=it,
        residual=res,
        breakdown=br,
        passed=bool(margin > MARGIN_RTOL * bound and res < opts.tol_residual),
        details=details,
    )
    return u, report


# -- constraint level -------------------------------------------------------


def _constraint_h(t: float, br: EnergyBreakdown) -> float:
    return br.scaled(t).constraint_H


def constraint_time(br: EnergyBreakdown) -> float:
    """t > 0 with H(t v) = 1 (the smallest such t)."""
    if br.b <= 0 and br.c <= 0:
        raise InfeasibleError("H(t v) <= 0 for all t")
    ts = np.logspace(-4, 4, 801)
    hv = np.array([_constraint_h(t, br) - 1.0 for t in ts])
    idx = np.flatnonzero((hv[:-1] < 0) & (hv[1:] >= 0))
    if idx.size == 0:
        raise InfeasibleError("no t in [1e-4, 1e4] with H(t v) = 1")
    i = int(idx[0])
    return brentq(
        lambda t: _constraint_h(t, br) - 1.0,
        ts[i],
        ts[i + 1],
        xtol=1e-15,
        rtol=4 * np.finfo(float).eps,
    )


def constraint_bracket(params: ProblemParams) -> tuple[float, float]:
    """[(p/C0)^{1/(2p)}, (2p/C0)^{1/(2p)}]."""
    p = params.p
    C0 = choquard_constant(params.N, params.alpha)
    return (p / C0) ** (1.0 / (2 * p)), (2 * p / C0) ** (1.0 / (2 * p))


def verify_constraint_level(
    params: ProblemParams,
    grid: RadialGrid,
    K: KernelMatrix,
    eps_list,
    s_exponent: float | None = None,
) -> LevelReport:
    """Upper-bound the constraint level by T(t_eps v_eps), v_eps = U_eps / ||U_eps||_{2*}.

    The root t_eps of H(t v_eps) = 1 is solved on (0, inf); eps whose root
    falls outside the a-priori bracket are reported as infeasible and do not
    enter the level.
    """
    params.require_regime()
    specs, s = _specs(params, eps_list, s_exponent)
    bound = constraint_level_bound(params)
    t_lo, t_hi = constraint_bracket(params)
    rows, best = [], None
    for spec in specs:
        br_u = bubble_breakdown(grid, K, params, spec)
        nrm = bubble_critical_norm(grid, spec)
        br_v = br_u.scaled(1.0 / nrm)
        row = {
            "eps": spec.eps,
            "sigma": spec.sigma,
            "Tv": br_v.half_dirichlet_T,
            "Bv": br_v.b,
        }
        try:
            t = constraint_time(br_v)
        except InfeasibleError as exc:
            row.update(tEps=math.nan, inBracket=False, feasible=False, reason=str(exc))
            rows.append(row)
            continue
        br_t = br_v.scaled(t)
        inside = bool(t_lo <= t <= t_hi)
        row.update(
            tEps=t,
            inBracket=inside,
            feasible=inside,
            H=br_t.constraint_H,
            T=br_t.half_dirichlet_T,
        )
        rows.append(row)
        if inside and (best is None or br_t.half_dirichlet_T < best[1]):
            best = (spec, br_t.half_dirichlet_T, br_t, abs(br_t.constraint_H - 1.0))
    details = {"rows": rows, "sExponent": s, "bracket": [t_lo, t_hi]}
    if best is None:
        details["infeasible"] = True
        return LevelReport(
            level=math.nan,
            bound=bound,
            margin=math.nan,
            eps_used=math.nan,
            iterations=0,
            residual=math.nan,
            breakdown=None,
            passed=False,
            details=details,
        )
    spec, level, br_t, h_err = best
    margin = bound - level
    return LevelReport(
        level=level,
        bound=bound,
        margin=margin,
        eps_used=spec.eps,
        iterations=0,
        residual=h_err,
        breakdown=br_t,
        passed=bool(margin > 0),
        details=details,
    )


def _constraint_gradients(u: RadialField, K: KernelMatrix, params: ProblemParams):
    """Raw derivatives of T and H at u."""
    g = u.grid
    v = u.values
    raw_T = g.sphere_area * (g.stiffness @ v)
    raw_H = g.sphere_area * g.weights * (nonlinear_term(u, K, params) - v)
    return raw_T, raw_H


def _mass_bound_ratio(br: EnergyBreakdown, params: ProblemParams, S: float) -> float:
    """D / (S^{-p} A^p + S^{-2*/2} A^{2*/2}); on {H = 1} the mass is bounded by this combination."""
    N, alpha = params.N, params.alpha
    A = br.a
    denom = S ** (-(N + alpha) / (N - 2)) * A ** ((N + alpha) / (N - 2)) + S ** (-N / (N - 2)) * A ** (
        N / (N - 2)
    )
    return br.d / denom


def minimize_constraint(
    params: ProblemParams,
    grid: RadialGrid,
    K: KernelMatrix,
    start: RadialField,
    opts: SolverOptions = SolverOptions(),
) -> tuple[RadialField, LevelReport]:
    """Minimize T on {H = 1}: tangential H^1 gradient step, rearrangement, dilation back to H = 1."""
    params.require_regime()
    if start.is_zero or choquard_energy(K, start, params.p) <= 0:
        raise InfeasibleError("minimizeConstraint needs a start with B > 0")
    S = sobolev_constant(params.N)
    _, u = constraint_scale(start, K, params)
    br = energy_breakdown(u, K, params)
    T = br.half_dirichlet_T
    history = [T]
    mass_c = _mass_bound_ratio(br, params, S)
    eta = opts.eta0
    converged = False
    it = 0
    tang = math.inf
    for it in range(1, opts.max_iter + 1):
        raw_T, raw_H = _constraint_gradients(u, K, params)
        gT = grid.h1_solver(raw_T)
        gH = grid.h1_solver(raw_H)
        mu = float(raw_T @ gH) / float(raw_H @ gH)
        d = gT - mu * gH
        tang = math.sqrt(max(float(d @ (grid.h1_gram @ d)), 0.0) / h1_norm_sq(u))
        accepted = False
        while eta > 1e-12:
            trial = schwarz_rearrange(u.with_values(u.values - eta * d))
            if not trial.is_zero and choquard_energy(K, trial, params.p) > 0:
                _, trial = constraint_scale(trial, K, params)
                tbr = energy_breakdown(trial, K, params)
                if tbr.half_dirichlet_T <= T:
                    accepted = True
                    break
            eta *= 0.5
        if not accepted:
            if tang < opts.tol_residual:
                converged = True
                break
            raise StagnationError(
                "minimizeConstraint: rearrangement and rescaling increase T for every step",
                {"iteration": it, "T": T, "tangentialGradient": tang},
            )
        dT = T - tbr.half_dirichlet_T
        u, br, T = trial, tbr, tbr.half_dirichlet_T
        history.append(T)
        mass_c = max(mass_c, _mass_bound_ratio(br, params, S))
        eta = min(opts.eta0, eta * 1.5)
        if dT < opts.tol_I * T:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"minimizeConstraint did not converge in {opts.max_iter} iterations",
            {"T": T, "tangentialGradient": tang, "lastValues": history[-5:]},
        )
    bound = constraint_level_bound(params)
    margin = bound - T
    monotone = all(b <= a for a, b in zip(history, history[1:]))
    details = {
        "history": history,
        "monotone": monotone,
        "H": br.constraint_H,
        "tangentialGradient": tang,
        "massBoundConstant": mass_c,
    }
    report = LevelReport(
        level=T,
        bound=bound,
        margin=margin,
        eps_used=math.nan,
        iterations=it,
        residual=abs(br.constraint_H - 1.0),
        breakdown=br,
        passed=bool(margin > 0 and monotone and abs(br.constraint_H - 1.0) <= 1e-8),
        details=details,
    )
    return u, report


# -- splitting, subadditivity, threshold algebra ----------------------------


@dataclass(frozen=True)
class BrezisLiebReport:
    eps: list
    deltas: list
    b_u0: float
    decreasing: bool
    passed: bool

    def to_dict(self) -> dict:
        return {
            "eps": list(self.eps),
            "deltas": list(self.deltas),
            "Bu0": self.b_u0,
            "decreasing": self.decreasing,
            "passed": self.passed,
        }


def brezis_lieb_check(
    params: ProblemParams,
    grid: RadialGrid,
    K: KernelMatrix,
    u0: RadialField,
    eps_list,
    bubble_norm: float | None = None,
    rel_floor: float = 0.05,
) -> BrezisLiebReport:
    """delta_n = |B(u0 + w_n) - B(w_n) - B(u0)| along concentrating bubbles w_n.

    w_n is the bubble rescaled to ||w_n||_{2*} = ``bubble_norm`` (default
    ||u0||_{2*}; 0 gives u_n = u0).
    """
    eps = [float(e) for e in eps_list]
    if not eps or any(not e > 0 for e in eps):
        raise DataError("eps list must be nonempty and positive")
    p = params.p
    crit = 2.0 * params.N / (params.N - 2)
    if bubble_norm is None:
        bubble_norm = lp_norm(u0, crit)
    if bubble_norm < 0:
        raise DomainError("bubble_norm must be >= 0")
    b0 = choquard_energy(K, u0, p)
    deltas = []
    for e in eps:
        spec = BubbleSpec(N=params.N, eps=e)
        w = bubble(grid, spec)
        w = w.scaled(bubble_norm / bubble_critical_norm(grid, spec))
        un = u0 + w
        deltas.append(abs(choquard_energy(K, un, p) - choquard_energy(K, un - u0, p) - b0))
    if all(d == 0.0 for d in deltas):
        return BrezisLiebReport(eps, deltas, b0, True, True)
    decreasing = all(b < a for a, b in zip(deltas, deltas[1:]))
    passed = decreasing and deltas[-1] < rel_floor * b0
    return BrezisLiebReport(eps, deltas, b0, bool(decreasing), bool(passed))


def subadditivity_gap(lam: float, N: int) -> float:
    """lam^{(N-2)/N} + (1 - lam)^{(N-2)/N} - 1."""
    if not 0.0 <= lam <= 1.0:
        raise DomainError(f"lambda must lie in [0, 1], got {lam}")
    if int(N) != N or N < 3:
        raise DomainError(f"N must be an integer >= 3, got {N}")
    e = (N - 2.0) / N
    return lam**e + (1.0 - lam) ** e - 1.0


def contradiction_level(params: ProblemParams) -> dict:
    """Solve l = C0 S^{-p} l^p for l > 0 and convert via c = ((p-1)/(2p)) l.

    If the local term vanished along a minimizing sequence, ||u_n||^2 and
    B(u_n) would both tend to l = (2p/(p-1)) c, and the Sobolev and HLS
    inequalities force l <= C0 S^{-p} l^p, i.e. c at or above the threshold.
    """
    p = params.p
    C0 = choquard_constant(params.N, params.alpha)
    S = sobolev_constant(params.N)
    k = C0 * S ** (-p)

    # log form: log l - log k - p log l = 0, monotone in log l
    def f(y):
        return y - math.log(k) - p * y

    y = brentq(f, -200.0, 200.0, xtol=1e-14, rtol=4 * np.finfo(float).eps)
    ell = math.exp(y)
    c_numeric = (p - 1) / (2 * p) * ell
    c_formula = nehari_level_bound(params)
    return {
        "ell": ell,
        "cNumeric": c_numeric,
        "cFormula": c_formula,
        "relDiff": abs(c_numeric - c_formula) / c_formula,
    }
