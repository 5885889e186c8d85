import math
import warnings

import mpmath
import numpy as np
import pytest

from oracles import exit_second_moments, exit_times, harmonic
from sinai.env import DistSpec, Environment, PotentialView, derived_scales
from sinai.errors import BadInterval, GammaTooSmall, LevelOutOfRange, PrecisionLoss
from sinai.exact import (TailBoundInputs, exit_prob, expected_exit_time, expected_exit_times,
                         level_bound, return_tail_bound, second_moment_bound,
                         second_moment_exit_adjacent, solve_exit_times, tail_bound_inputs,
                         theorem_bounds)
from sinai.valleys import find_basic_valley, ordered_chopping


def flat(lo=-50, hi=50):
    return PotentialView(Environment.from_alphas(np.full(hi - lo + 1, 0.5), lo=lo), 1e6)


def random_pot(seed, lo=-300, hi=300, c=0.1):
    rng = np.random.default_rng(seed)
    return PotentialView(Environment.from_alphas(rng.uniform(c, 1 - c, hi - lo + 1), lo=lo), 1e6)


# --- exit probabilities ----------------------------------------------------

def test_flat_gamblers_ruin():
    pB, pA = exit_prob(flat(), 0, 3, 10)
    assert pB == pytest.approx(0.3, abs=1e-15)
    assert pA == pytest.approx(0.7, abs=1e-15)


def test_single_interior_state():
    pot = random_pot(1)
    pB, pA = exit_prob(pot, 0, 1, 2)
    assert pB == pytest.approx(pot.env.alpha_at(1), abs=1e-15)
    assert pA == pytest.approx(1 - pot.env.alpha_at(1), abs=1e-15)


def test_bad_interval():
    pot = flat()
    for a, x, b in ((0, 0, 5), (0, 5, 5), (3, 2, 1)):
        with pytest.raises(BadInterval):
            exit_prob(pot, a, x, b)
        with pytest.raises(BadInterval):
            expected_exit_time(pot, a, x, b)


@pytest.mark.parametrize("seed", range(10))
def test_exit_prob_against_oracle(seed):
    pot = random_pot(seed)
    rng = np.random.default_rng(100 + seed)
    a = int(rng.integers(-100, 0))
    b = int(rng.integers(1, 101))
    ref = harmonic(pot.env.alphas(a + 1, b - 1))
    for x in range(a + 1, b):
        pB, pA = exit_prob(pot, a, x, b)
        assert abs(pB - float(ref[x - a - 1])) < 1e-10
        assert abs(pA - float(1 - ref[x - a - 1])) < 1e-10


def test_exit_prob_monotone_in_x():
    pot = random_pot(3)
    vals = [exit_prob(pot, -80, x, 90)[0] for x in range(-79, 90)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_complementarity_in_deep_potentials():
    # drifting potential: differences of ~600 overflow exp() in double precision
    rng = np.random.default_rng(9)
    eps = rng.normal(1.5, 2.0, size=401)
    pot = PotentialView(Environment.from_eps(eps, lo=-200), 1e6)
    assert np.ptp(pot.raw(-200, 200)) > 500
    for x in range(-199, 200, 7):
        pB, pA = exit_prob(pot, -200, x, 200, clamp=False)
        assert abs(pB + pA - 1) < 1e-10


# --- expected exit times ---------------------------------------------------

def test_flat_exit_times():
    pot = flat()
    assert expected_exit_time(pot, 0, 1, 2) == pytest.approx(1.0)
    assert expected_exit_time(pot, 0, 3, 10) == pytest.approx(21.0)
    u = expected_exit_times(pot, -20, 20)
    xs = np.arange(-19, 20)
    assert np.allclose(u, (xs + 20) * (20 - xs), rtol=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_exit_times_against_oracle(seed):
    pot = random_pot(seed, c=0.2)
    rng = np.random.default_rng(200 + seed)
    a = int(rng.integers(-100, -1))
    b = int(rng.integers(1, 100))
    ref = exit_times(pot.env.alphas(a + 1, b - 1))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PrecisionLoss)
        u = expected_exit_times(pot, a, b)
    for k, r in enumerate(ref):
        assert abs(u[k] - float(r)) <= 1e-8 * float(r)


def test_tridiagonal_solver_matches_oracle():
    rng = np.random.default_rng(5)
    al = rng.uniform(0.2, 0.8, 60)
    ref = exit_times(al)
    assert np.allclose(solve_exit_times(al), [float(r) for r in ref], rtol=1e-9)


def test_precision_loss_fallback_is_announced_and_correct():
    # strong drift towards the left end: u(x) = u(a+1) P(x) - B(x) cancels badly
    alpha = np.full(301, 0.2)
    pot = PotentialView(Environment.from_alphas(alpha, lo=-150), 1e6)
    with pytest.warns(PrecisionLoss):
        u = expected_exit_times(pot, -150, 150)
    ref = exit_times(alpha[1:-1])
    assert np.allclose(u, [float(r) for r in ref], rtol=1e-8)


# --- second moment ---------------------------------------------------------

def test_second_moment_trivial_case():
    pot = flat()
    # bottom 0, top 1: start at 1, exits {0, 2} after exactly one step
    assert second_moment_exit_adjacent(pot, 0, 1, "right") == pytest.approx(1.0)
    assert second_moment_exit_adjacent(pot, 0, -1, "left") == pytest.approx(1.0)


@pytest.mark.parametrize("top", [2, 5, 17, 49])
def test_second_moment_flat_against_oracle(top):
    pot = flat()
    ref = exit_second_moments(np.full(top, 0.5))
    assert second_moment_exit_adjacent(pot, 0, top, "right") == pytest.approx(
        float(ref[0]), rel=1e-8)
    assert second_moment_exit_adjacent(pot, 0, -top, "left") == pytest.approx(
        float(ref[-1]), rel=1e-8)


@pytest.mark.parametrize("seed", range(6))
def test_second_moment_random_against_oracle_and_jensen(seed):
    pot = random_pot(seed, c=0.25)
    rng = np.random.default_rng(300 + seed)
    bottom = int(rng.integers(-50, 50))
    top = bottom + int(rng.integers(1, 60))
    ref = exit_second_moments(pot.env.alphas(bottom + 1, top))
    m2 = second_moment_exit_adjacent(pot, bottom, top, "right", warn=False)
    assert m2 == pytest.approx(float(ref[0]), rel=1e-8)
    u = expected_exit_time(pot, bottom, bottom + 1, top + 1, warn=False)
    assert m2 >= u * u * (1 - 1e-12)
    top = bottom - int(rng.integers(1, 60))
    ref = exit_second_moments(pot.env.alphas(top, bottom - 1))
    m2 = second_moment_exit_adjacent(pot, bottom, top, "left", warn=False)
    assert m2 == pytest.approx(float(ref[-1]), rel=1e-8)


def test_second_moment_bad_interval():
    with pytest.raises(BadInterval):
        second_moment_exit_adjacent(flat(), 0, 0, "right")
    with pytest.raises(BadInterval):
        second_moment_exit_adjacent(flat(), 0, 1, "left")


# --- bounds ----------------------------------------------------------------

def test_tail_bound_at_hinge_and_limit():
    inp = TailBoundInputs(level=0, side="right", D=50.0, delta_next=0.4, eta=0.4, delta_i0=1.2)
    n = 1e6
    assert inp.exponent == 0.0
    assert return_tail_bound(inp, n, 7.0) == pytest.approx(50 / 49 + n**-1.2, rel=1e-13)
    assert return_tail_bound(inp, n, 1e150) == pytest.approx(n**-1.2, rel=1e-12)
    hinge = TailBoundInputs(0, "right", 50.0, 0.7, 0.4, 1.2)
    assert hinge.exponent == pytest.approx(0.3)
    assert return_tail_bound(hinge, n, 7.0) == pytest.approx(
        50 * n**0.3 / 49 + n**-1.2, rel=1e-12)
    with pytest.raises(ValueError):
        return_tail_bound(inp, n, 0.0)


def _chain(seed, n=1e6, thr=16):
    env = Environment(DistSpec.two_point(0.3), seed, -64, 64)
    sc = derived_scales(n, 3, 1, env.sigma2)
    pot = PotentialView(env, n)
    v = find_basic_valley(pot, sc, cap=1 << 20)
    return pot, ordered_chopping(pot, v, sc, threshold=thr, strict=False)


def test_tail_bound_inputs_structure():
    pot, chain = _chain(4)
    for side in ("right", "left"):
        inputs = tail_bound_inputs(pot, chain, side)
        sd = chain.right if side == "right" else chain.left
        assert len(inputs) == sd.r + 1
        D = [i.D for i in inputs]
        assert all(b <= a for a, b in zip(D, D[1:]))  # segments shrink
        m0, M0 = chain.bottom, sd.maxima[0]
        al = pot.env.alphas(min(m0, M0), max(m0, M0))
        worst = np.max(1 / al) if side == "right" else np.max(1 / (1 - al))
        assert inputs[0].D == pytest.approx(abs(M0 - m0) ** 5 * worst**2)
        with pytest.raises(LevelOutOfRange):
            level_bound(pot, chain, sd.r + 1, 10.0, side)


def test_second_moment_bound_holds_on_sampled_chains():
    for seed in range(15):
        pot, chain = _chain(seed)
        for side in ("right", "left"):
            sd = chain.right if side == "right" else chain.left
            for inp in tail_bound_inputs(pot, chain, side):
                m2 = second_moment_exit_adjacent(pot, chain.bottom, sd.maxima[inp.level],
                                                 side, warn=False)
                assert m2 <= second_moment_bound(inp, pot.n)


def test_theorem_bounds():
    sc = derived_scales(1e6, 3.0, 1.0, 0.7)
    with pytest.raises(GammaTooSmall):
        theorem_bounds(derived_scales(1e6, 2.0, 1.0, 0.7))
    tb = theorem_bounds(sc)
    assert tb.containment == pytest.approx(2 * sc.log2_n / (0.7 * sc.log_n))
    assert tb.localization is None and tb.last_return is None
    with pytest.raises(GammaTooSmall):
        theorem_bounds(sc, require_localization=True)
    # sanity point n = e^{e^e}: containment = 2e / (sigma^2 (e^e)^(gamma-2))
    from sinai.env import scales_from_log
    s2 = scales_from_log(math.e**math.e, 3.0, 1.0, 0.7)
    assert theorem_bounds(s2).containment == pytest.approx(2 * math.e / (0.7 * math.e**math.e))
    # localization bound positive and decreasing for gamma > gamma0
    vals = [theorem_bounds(scales_from_log(L, 30.0, 1.0, 0.7)).localization
            for L in (10.0, 20.0, 40.0, 80.0)]
    assert all(v > 0 for v in vals)
    assert all(b < a for a, b in zip(vals, vals[1:]))
    tb = theorem_bounds(scales_from_log(20.0, 30.0, 1.0, 0.7))
    l2 = math.log(20.0)
    assert tb.half_width == pytest.approx(1600**2 * 30 * l2**4.5 / math.sqrt(20.0))
    assert tb.last_return == pytest.approx(2 * l2**4.5 / (math.sqrt(30) * 20.0 ** (30 - 22.5)))


def test_mpmath_oracle_precision_is_independent():
    assert mpmath.mp.dps >= 50
