import math

import mpmath as mp
import numpy as np
import pytest

from choquard.bubbles import (
    SCAN_COLUMNS,
    BubbleSpec,
    bubble,
    bubble_breakdown,
    bubble_critical_norm,
    bubble_scan,
    bubble_tails,
    default_s_exponent,
    instanton,
    power_tail,
    scan_slopes,
    sigma_perturbation_check,
    slope_fit,
    worker_count,
)
from choquard.constants import ProblemParams, choquard_constant, sobolev_constant
from choquard.errors import ConfigError, DataError
from choquard.radial import dirichlet_energy, lebesgue_norm


def test_instanton_at_origin(grid5):
    U = instanton(grid5)
    assert U.values[0] == pytest.approx(15 ** 0.75, rel=1e-11)


def test_unit_bubble_is_instanton(grid5):
    assert np.array_equal(bubble(grid5, BubbleSpec(5, 1.0)).values, instanton(grid5).values)


def test_sobolev_identities_n5(grid5):
    S = sobolev_constant(5)
    U = instanton(grid5)
    assert dirichlet_energy(U) == pytest.approx(S**2.5, rel=5e-3)
    assert bubble_critical_norm(grid5, BubbleSpec(5, 1.0)) ** (10 / 3) == pytest.approx(S**2.5, rel=5e-3)


def test_critical_norm_n4_with_tail(grid4):
    S = sobolev_constant(4)
    spec = BubbleSpec(4, 1.0)
    with_tail = bubble_critical_norm(grid4, spec) ** 4
    assert with_tail == pytest.approx(S**2, rel=5e-3)
    tail = bubble_tails(spec, 4.0, grid4.r_max)["c"]
    assert tail / with_tail < 1e-4


@pytest.mark.parametrize("eps", [0.1, 0.5])
def test_n4_perturbed_scale_invariance(eps, grid4, kernel4):
    P = ProblemParams(4, 2.0, 3.5)
    a = bubble_breakdown(grid4, kernel4, P, BubbleSpec(4, eps, 0.05))
    b = bubble_breakdown(grid4, kernel4, P, BubbleSpec(4, 1.0, 0.05))
    assert a.a == pytest.approx(b.a, rel=5e-3)
    assert a.b == pytest.approx(b.b, rel=5e-3)


def test_critical_norm_eps_invariant(grid5):
    ref = bubble_critical_norm(grid5, BubbleSpec(5, 1.0))
    for eps in (0.3, 0.1, 0.01):
        assert bubble_critical_norm(grid5, BubbleSpec(5, eps)) == pytest.approx(ref, rel=5e-3)


def test_hls_extremal_energy(grid5, kernel5, params5):
    target = choquard_constant(5, 2.0) * sobolev_constant(5) ** 3.5
    for eps in (0.1, 0.3, 1.0):
        assert bubble_breakdown(grid5, kernel5, params5, BubbleSpec(5, eps)).b == pytest.approx(target, rel=5e-3)


def test_tiny_eps_sampled_exactly(grid5):
    spec = BubbleSpec(5, 1e-9)
    u = bubble(grid5, spec)
    r = grid5.nodes[10]
    exact = 15**0.75 * 1e-9 ** (-1.5) * (1 + (r / 1e-9) ** 2) ** (-1.5)
    assert u.values[10] == pytest.approx(exact, rel=1e-12)
    assert np.all(np.isfinite(u.values))


@pytest.mark.parametrize("N,beta,Y", [(5, 3.0, 10.0), (4, 2.1, 100.0), (6, 4.5, 1.0), (5, 4.5, 1e5)])
def test_power_tail_against_quadrature(N, beta, Y):
    # log substitution keeps the quadrature accurate for slowly decaying tails
    f = lambda t: mp.e ** (N * t) * (1 + mp.e ** (2 * t)) ** (-beta)
    lo = mp.log(Y)
    oracle = float(mp.quad(f, [lo, lo + 20, lo + 200, mp.inf]))
    assert power_tail(N, beta, Y) == pytest.approx(oracle, rel=1e-10)


def test_power_tail_divergent():
    assert power_tail(4, 2.0, 10.0) == math.inf


def test_tail_excluded_when_divergent(grid4, kernel4):
    P = ProblemParams(4, 2.0, 3.5)
    spec = BubbleSpec(4, 1.0)
    assert bubble_tails(spec, 2.0, grid4.r_max)["d"] == math.inf
    with_tail = bubble_breakdown(grid4, kernel4, P, spec)
    without = bubble_breakdown(grid4, kernel4, P, spec, tail=False)
    assert with_tail.d == without.d
    assert with_tail.c > without.c


def test_scan_slopes_n5(grid5, kernel5, params5):
    rows = bubble_scan(grid5, kernel5, params5, [0.1, 0.05, 0.025])
    slopes = scan_slopes(rows)
    assert slopes["d"]["slope"] == pytest.approx(2.0, abs=0.05)
    assert slopes["c"]["slope"] == pytest.approx(0.5, abs=0.05)
    assert [r.eps for r in rows] == [0.1, 0.05, 0.025]
    assert tuple(rows[0].to_row()) == SCAN_COLUMNS


def test_scan_slopes_n4(grid4, kernel4, params4):
    rows = bubble_scan(grid4, kernel4, params4, [0.025, 0.0125, 0.00625, 0.003125], 0.75)
    slopes = scan_slopes(rows)
    assert slopes["d"]["slope"] == pytest.approx(1.25, abs=0.1)
    assert slopes["c"]["slope"] == pytest.approx(0.5, abs=0.1)
    assert rows[-1].sigma == pytest.approx(0.003125**0.75)


@pytest.mark.parametrize("eps", [[0.1, 0.05], [0.1, 0.2, 0.05], [0.1, 0.05, -0.01]])
def test_scan_validation(eps, grid5, kernel5, params5):
    with pytest.raises(DataError):
        bubble_scan(grid5, kernel5, params5, eps)


def test_scan_is_deterministic_across_workers(monkeypatch, grid5, kernel5, params5):
    monkeypatch.setenv("CHOQUARD_THREADS", "1")
    a = bubble_scan(grid5, kernel5, params5, [0.1, 0.05, 0.025])
    monkeypatch.setenv("CHOQUARD_THREADS", "3")
    b = bubble_scan(grid5, kernel5, params5, [0.1, 0.05, 0.025])
    assert [r.to_row() for r in a] == [r.to_row() for r in b]


def test_worker_count(monkeypatch):
    monkeypatch.setenv("CHOQUARD_THREADS", "2")
    assert worker_count() == 2
    monkeypatch.setenv("CHOQUARD_THREADS", "zero")
    with pytest.raises(ConfigError):
        worker_count()


@pytest.mark.parametrize(
    "kwargs", [dict(N=2, eps=1.0), dict(N=5, eps=0.0), dict(N=5, eps=1.0, sigma=-0.1)]
)
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        BubbleSpec(**kwargs)


def test_scan_spec_exponent_range():
    assert BubbleSpec.for_scan(4, 0.1, 3.5, 0.75).sigma == pytest.approx(0.1**0.75)
    with pytest.raises(ConfigError):
        BubbleSpec.for_scan(4, 0.1, 3.5, 0.4)
    with pytest.raises(ConfigError):
        BubbleSpec.for_scan(4, 0.1, 2.9, 0.75)
    with pytest.raises(ConfigError):
        BubbleSpec.for_scan(5, 0.1, 3.0, 0.75)
    assert default_s_exponent(3.5) == pytest.approx(1.0)


def test_slope_fit_exact_power():
    xs = [0.1, 0.2, 0.4, 0.8]
    slope, r2 = slope_fit([(x, x * x) for x in xs])
    assert slope == pytest.approx(2.0, abs=1e-12)
    assert r2 == pytest.approx(1.0, abs=1e-12)
    slope, _ = slope_fit([(x, 3 * x**0.5) for x in xs])
    assert slope == pytest.approx(0.5, abs=1e-12)


def test_slope_fit_noisy():
    rng = np.random.default_rng(0)
    xs = np.geomspace(0.01, 1, 12)
    ys = xs**2 * (1 + rng.uniform(-0.01, 0.01, xs.size))
    slope, r2 = slope_fit(zip(xs, ys))
    assert abs(slope - 2.0) < 0.03
    assert r2 > 0.999


@pytest.mark.parametrize("pts", [[(1, 1), (2, 4)], [(1, 1), (2, 0), (3, 9)], [(-1, 1), (2, 4), (3, 9)]])
def test_slope_fit_errors(pts):
    with pytest.raises(DataError):
        slope_fit(pts)


def test_sigma_perturbation(grid4, kernel4, params4):
    rep = sigma_perturbation_check(grid4, kernel4, params4, [0.1, 0.05, 0.025, 0.0125])
    assert rep.a_slope >= 0.9 and rep.b_slope >= 0.9
    assert all(b > 0 for b in rep.b_diff)
    # A and B both increase towards their unperturbed values as sigma decreases
    assert all(x < y for x, y in zip(rep.a_diff, rep.a_diff[1:]))
    assert all(x > y for x, y in zip(rep.b_diff, rep.b_diff[1:]))
    assert rep.passed


def test_sigma_zero_gives_zero_differences(grid4, kernel4, params4):
    rep = sigma_perturbation_check(grid4, kernel4, params4, [0.0])
    assert rep.a_diff == [0.0] and rep.b_diff == [0.0]


def test_sigma_check_requires_n4(grid5, kernel5, params5):
    with pytest.raises(ConfigError):
        sigma_perturbation_check(grid5, kernel5, params5, [0.1, 0.05, 0.025])


def test_mass_tail_matches_truncation_difference():
    # analytic tail equals the difference between a short and a long grid
    from choquard.radial import make_grid

    spec = BubbleSpec(5, 1.0)
    short, long_ = make_grid(5, 1e-6, 1e2, 1024), make_grid(5, 1e-6, 1e6, 3072)
    d_short = lebesgue_norm(bubble(short, spec), 2.0)
    d_long = lebesgue_norm(bubble(long_, spec), 2.0)
    tail_short = bubble_tails(spec, 3.0, 1e2)["d"]
    tail_long = bubble_tails(spec, 3.0, 1e6)["d"]
    assert d_short + tail_short == pytest.approx(d_long + tail_long, rel=1e-6)
