import math

import numpy as np
import pytest

from sinai.env import DistSpec, Environment, PotentialView
from sinai.errors import BudgetExceeded, WindowExhausted
from sinai.exact import exit_prob
from sinai.walk import (CENSORED, RecordMode, WalkerConfig, estimate_return_tail,
                        exit_frequency, last_return_event, run_endpoints, run_hitting,
                        simulate, walker_keys)


def sampled(seed=1):
    return Environment(DistSpec.two_point(0.3), seed, -64, 64)


def test_config_validation():
    with pytest.raises(ValueError):
        WalkerConfig(max_steps=0)
    with pytest.raises(ValueError):
        WalkerConfig(max_steps=10**8, record="full")


def test_forced_drift_right():
    env = Environment.from_alphas(np.full(400, 1 - 1e-15), lo=-10)
    traj = simulate(env, WalkerConfig(0, 300, seed=3, record=RecordMode.FULL), replicas=2)
    assert np.array_equal(traj[0], np.arange(301))
    env1 = Environment.from_alphas(np.ones(400), lo=-10, allow_degenerate=True)
    traj = simulate(env1, WalkerConfig(0, 300, seed=3, record=RecordMode.FULL))
    assert np.array_equal(traj[0], np.arange(301))


def test_full_trajectory_invariants_and_determinism():
    env = sampled()
    cfg = WalkerConfig(5, 20_000, seed=11, record=RecordMode.FULL)
    a = simulate(env, cfg, replicas=4)
    b = simulate(sampled(), cfg, replicas=4)
    assert np.array_equal(a, b)
    steps = np.diff(a, axis=1)
    assert np.all(np.abs(steps) == 1)
    k = np.arange(a.shape[1])
    assert np.all((a - 5 - k) % 2 == 0)


def test_endpoint_mode_agrees_with_full_trajectories():
    env = sampled(2)
    full = simulate(env, WalkerConfig(0, 5000, seed=4, record="full"), replicas=16)
    st = simulate(env, WalkerConfig(0, 5000, seed=4, record="endpoint"), replicas=16,
                  checkpoints=[10, 1000], mark=0)
    assert np.array_equal(st.positions[:, 0], full[:, 10])
    assert np.array_equal(st.positions[:, 1], full[:, 1000])
    assert np.array_equal(st.endpoints, full[:, -1])
    assert np.array_equal(st.running_min[:, -1], full.min(axis=1))
    assert np.array_equal(st.running_max[:, -1], full.max(axis=1))
    # last visit to 0 recomputed by scanning the trajectory
    for i in range(16):
        hits = np.flatnonzero(full[i] == 0)
        assert st.last_visit[i, -1] == hits.max()


def test_results_independent_of_batching():
    env = sampled(3)
    keys = walker_keys(7, 40)
    whole = run_endpoints(env, 0, [10_000], keys)
    parts = [run_endpoints(sampled(3), 0, [10_000], keys[i:i + 7]) for i in range(0, 40, 7)]
    assert np.array_equal(whole.endpoints, np.concatenate([p.endpoints for p in parts]))
    # offsets address the same replicas
    assert np.array_equal(walker_keys(7, 5, offset=10), keys[10:15])


def test_hitting_times_and_censoring():
    env = sampled(4)
    hs = run_hitting(env, 0, -30, 30, 200, walker_keys(1, 200))
    done = ~hs.censored
    assert np.all(hs.times[done] <= 200)
    assert np.all(hs.times[hs.censored] == CENSORED)
    assert np.all(np.isin(hs.endpoints[hs.which == 1], [-30]))
    assert np.all(np.isin(hs.endpoints[hs.which == 2], [30]))
    assert np.all((hs.times[done] - 30) % 2 == 0)


def test_fixed_window_exhaustion():
    env = Environment.from_alphas(np.full(21, 0.9), lo=-10)
    with pytest.raises(WindowExhausted):
        run_endpoints(env, 0, [1000], walker_keys(1, 2))


def test_flat_gamblers_ruin_mc():
    env = Environment.from_alphas(np.full(41, 0.5), lo=-20)
    p, se, cens = exit_frequency(env, -10, 0, 20, 100_000, seed=5, max_steps=10_000)
    # P[hit -10 before +20] = 2/3
    assert abs((1 - p) - 2 / 3) < 3 * se
    assert cens < 100


def test_random_env_exit_frequency_vs_exact():
    env = sampled(6)
    pot = PotentialView(env, 1e6)
    pB, _ = exit_prob(pot, -20, 0, 25)
    p, se, cens = exit_frequency(env, -20, 0, 25, 50_000, seed=8)
    assert cens == 0
    assert abs(p - pB) < 3 * max(se, 1e-4)


def test_return_tail_properties():
    env = sampled(7)
    te = estimate_return_tail(env, 0, 1, [0, 1, 3, 10, 100, 1000], 4000, seed=2)
    assert te.tail[0] == 1.0
    assert np.all(np.diff(te.tail) <= 0)
    assert te.start == 1
    with pytest.raises(ValueError):
        estimate_return_tail(env, 0, 2, [1], 10, seed=1)


def test_last_return_monotone_in_q_and_budget():
    env = sampled(8)
    vals = [last_return_event(env, 2000, q, 0, 500, seed=3).fraction_missing
            for q in (10, 100, 1000, 2000)]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    with pytest.raises(BudgetExceeded):
        last_return_event(env, 10**6, 10, 0, 1, seed=1, budget=1000)
    with pytest.raises(ValueError):
        last_return_event(env, 100, 0, 0, 1, seed=1)
