import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from choquard.bubbles import BubbleSpec, bubble
from choquard.constants import ProblemParams, choquard_constant, nehari_level_bound, sobolev_constant
from choquard.errors import ConfigError, DataError, DegenerateInputError, DomainError, InfeasibleError
from choquard.levels import (
    SolverOptions,
    brezis_lieb_check,
    constraint_bracket,
    constraint_time,
    contradiction_level,
    max_energy_from_breakdown,
    minimize_constraint,
    minimize_nehari,
    nehari_limit_time,
    subadditivity_gap,
    verify_constraint_level,
    verify_nehari_level,
)
from choquard.radial import make_grid
from choquard.riesz import build_kernel
from choquard.variational import EnergyBreakdown, peak_two_term, ray_energy

positive = st.floats(1e-2, 1e2)


@pytest.fixture(scope="module")
def coarse():
    g = make_grid(5, 1e-4, 1e3, 512)
    return g, build_kernel(g, 2.0)


@settings(max_examples=60, deadline=None)
@given(positive, positive, positive, positive)
def test_ray_maximum_dominates_samples(a, b, c, d):
    br = EnergyBreakdown(a, b, c, d, 3.5, 3.0)
    t, val = max_energy_from_breakdown(br)
    ts = np.geomspace(t / 50, t * 50, 201)
    assert val >= max(ray_energy(s, br) for s in ts) * (1 - 1e-12)


@settings(max_examples=60, deadline=None)
@given(positive, positive, positive, positive)
def test_ray_maximum_below_two_term_chain(a, b, c, d):
    br = EnergyBreakdown(a, b, c, d, 3.5, 3.0)
    t, val = max_energy_from_breakdown(br)
    chain = peak_two_term(a, b, br.p) + t**2 * d / 2 - t**br.q * c / br.q
    assert val <= chain * (1 + 1e-12) + 1e-12


@settings(max_examples=60, deadline=None)
@given(positive, positive, positive, positive)
def test_ray_maximum_decreases_with_local_term(a, b, c, d):
    _, v1 = max_energy_from_breakdown(EnergyBreakdown(a, b, c, d, 3.5, 3.0))
    _, v2 = max_energy_from_breakdown(EnergyBreakdown(a, b, 2 * c, d, 3.5, 3.0))
    assert v2 < v1


def test_two_term_ray_closed_form():
    br = EnergyBreakdown(2.0, 3.0, 0.0, 0.0, 3.5, 3.0)
    _, val = max_energy_from_breakdown(br)
    assert val == pytest.approx(peak_two_term(2.0, 3.0, 3.5), rel=1e-12)


def test_nehari_limit_time_solves_limit_equation():
    P = ProblemParams(5, 2.0, 3.0)
    t = nehari_limit_time(P)
    S, C0 = sobolev_constant(5), choquard_constant(5, 2.0)
    A, B = S**2.5, C0 * S**3.5
    assert t ** (2 * P.p - 2) * B == pytest.approx(A, rel=1e-12)


def test_verify_nehari_level_n5(grid5, kernel5, params5):
    rep = verify_nehari_level(params5, grid5, kernel5, [0.1, 0.05, 0.025])
    assert rep.passed
    assert rep.level < rep.bound
    assert rep.level == min(r["value"] for r in rep.details["rows"])
    assert rep.eps_used in (0.1, 0.05, 0.025)


def test_verify_nehari_level_requires_regime(grid4, kernel4):
    with pytest.raises(ConfigError):
        verify_nehari_level(ProblemParams(4, 2.0, 2.5), grid4, kernel4, [0.1, 0.05, 0.025])


def test_verify_nehari_level_empty(grid5, kernel5, params5):
    with pytest.raises(DataError):
        verify_nehari_level(params5, grid5, kernel5, [])


def test_constraint_bracket_contains_limit():
    P = ProblemParams(5, 2.0, 3.0)
    lo, hi = constraint_bracket(P)
    C0 = choquard_constant(5, 2.0)
    assert lo < hi
    # with C = D = 0 and B = C0 the root of H = 1 is the upper end
    br = EnergyBreakdown(1.0, C0, 0.0, 0.0, P.p, P.q)
    assert constraint_time(br) == pytest.approx(hi, rel=1e-10)


def test_constraint_time_infeasible():
    with pytest.raises(InfeasibleError):
        constraint_time(EnergyBreakdown(1.0, 0.0, 0.0, 1.0, 3.5, 3.0))


def test_verify_constraint_level_n5(grid5, kernel5, params5):
    rep = verify_constraint_level(params5, grid5, kernel5, [0.1, 0.0125, 0.00625, 0.003125])
    feasible = [r for r in rep.details["rows"] if r["feasible"]]
    assert feasible
    for r in feasible:
        assert r["H"] == pytest.approx(1.0, abs=1e-12)
    assert rep.passed and rep.level < rep.bound
    assert not rep.details["rows"][0]["inBracket"]


def test_verify_constraint_level_all_infeasible(grid5, kernel5, params5):
    rep = verify_constraint_level(params5, grid5, kernel5, [0.1, 0.05])
    assert not rep.passed and rep.details["infeasible"]
    assert math.isnan(rep.level)


def test_minimize_nehari_below_threshold(coarse, params5):
    g, K = coarse
    u, rep = minimize_nehari(params5, g, K, bubble(g, BubbleSpec(5, 0.3)))
    assert rep.passed
    assert rep.details["normBoundHolds"] and rep.details["lowerBoundHolds"]
    assert abs(rep.details["nehariDefect"]) < 1e-8
    hist = rep.details["history"]
    assert all(b <= a for a, b in zip(hist, hist[1:]))
    # restarting from the minimizer is a fixed point
    _, again = minimize_nehari(params5, g, K, u)
    assert again.iterations <= 2
    assert again.level == pytest.approx(rep.level, rel=1e-9)


def test_minimize_nehari_zero_start(coarse, params5):
    g, K = coarse
    with pytest.raises(DegenerateInputError):
        minimize_nehari(params5, g, K, bubble(g, BubbleSpec(5, 1.0)).scaled(0.0))


def test_solver_options_validation():
    with pytest.raises(ConfigError):
        SolverOptions(max_iter=0)
    with pytest.raises(ConfigError):
        SolverOptions(tol_I=-1.0)


def test_minimize_constraint_zero_start(coarse, params5):
    g, K = coarse
    with pytest.raises(InfeasibleError):
        minimize_constraint(params5, g, K, bubble(g, BubbleSpec(5, 1.0)).scaled(0.0))


def test_brezis_lieb_trivial_cases(grid5, kernel5, params5):
    u0 = bubble(grid5, BubbleSpec(5, 1.0))
    rep = brezis_lieb_check(params5, grid5, kernel5, u0, [0.1, 0.05], bubble_norm=0.0)
    assert rep.deltas == [0.0, 0.0] and rep.passed
    rep = brezis_lieb_check(params5, grid5, kernel5, u0.scaled(0.0), [0.1, 0.05])
    assert rep.deltas == [0.0, 0.0]


def test_brezis_lieb_decreasing(grid5, kernel5, params5):
    u0 = bubble(grid5, BubbleSpec(5, 1.0))
    rep = brezis_lieb_check(params5, grid5, kernel5, u0, [0.1, 0.01, 0.001])
    assert rep.decreasing


def test_brezis_lieb_validation(grid5, kernel5, params5):
    u0 = bubble(grid5, BubbleSpec(5, 1.0))
    with pytest.raises(DataError):
        brezis_lieb_check(params5, grid5, kernel5, u0, [])
    with pytest.raises(DomainError):
        brezis_lieb_check(params5, grid5, kernel5, u0, [0.1], bubble_norm=-1.0)


def test_subadditivity_values():
    assert subadditivity_gap(0.5, 5) == pytest.approx(2 * 0.5**0.6 - 1, rel=1e-14)
    assert subadditivity_gap(0.5, 5) == pytest.approx(0.3195, abs=1e-4)
    assert subadditivity_gap(0.0, 5) == 0.0
    assert subadditivity_gap(1.0, 4) == 0.0


@given(st.floats(1e-6, 1 - 1e-6), st.integers(3, 12))
def test_subadditivity_positive(lam, N):
    assert subadditivity_gap(lam, N) > 0


def test_subadditivity_domain():
    with pytest.raises(DomainError):
        subadditivity_gap(1.5, 5)
    with pytest.raises(DomainError):
        subadditivity_gap(0.5, 2)


def test_contradiction_level_symbolic():
    ell, k, p = sp.symbols("ell k p", positive=True)
    sol = sp.solve(sp.Eq(ell, k * ell**p).subs(p, sp.Rational(7, 3)), ell)
    assert len(sol) == 1
    P = ProblemParams(5, 2.0, 3.0)
    k_val = choquard_constant(5, 2.0) * sobolev_constant(5) ** (-P.p)
    out = contradiction_level(P)
    assert out["ell"] == pytest.approx(float(sol[0].subs(k, k_val)), rel=1e-12)
    assert out["cNumeric"] == pytest.approx(nehari_level_bound(P), rel=1e-12)
    assert out["relDiff"] < 1e-12
