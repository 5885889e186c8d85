import math

import numpy as np
import pytest

from sinai.env import DistSpec, Environment, derived_scales
from sinai.goodenv import (CHAIN_CLAUSES, CLAUSES, CONTAINMENT_CLAUSES, FAIL, PASS, PREREQ,
                           UNDETERMINED, check_good_environment, estimate_good_probability)

N, GAMMA, KAPPA = 1e6, 3.0, 1.0


def env_for(seed):
    return Environment(DistSpec.two_point(0.3), seed, -64, 64)


def test_flat_environment_fails_existence_and_marks_prereqs():
    env = Environment.from_alphas(np.full(2001, 0.5), lo=-1000, sigma2=1.0)
    rep = check_good_environment(env, N, GAMMA, KAPPA)
    assert rep.clauses["existence"].verdict == FAIL
    for k in CLAUSES[1:]:
        assert rep.clauses[k].verdict == PREREQ
        assert rep.clauses[k].cause == "existence"
    assert not rep.overall and rep.conclusive


@pytest.mark.parametrize("seed", range(1, 9))
def test_valley_clause_witnesses_recomputed_from_raw_sums(seed):
    env = env_for(seed)
    rep = check_good_environment(env, N, GAMMA, KAPPA)
    v = rep.valley
    sc = rep.scales
    S = env.potentials(v.m_left, v.m_right)
    off = v.m_left
    ln = math.log(N)
    d_r = (S[v.m_right - off] - S[v.bottom - off]) / ln
    d_l = (S[v.m_left - off] - S[v.bottom - off]) / ln
    w = rep.clauses["depth"].witness
    assert w["delta00"] == pytest.approx(d_r, abs=1e-12)
    assert w["delta00p"] == pytest.approx(d_l, abs=1e-12)
    assert (rep.clauses["depth"].verdict == PASS) == (min(d_r, d_l) >= sc.depth_level)
    ok_int = v.m_right <= sc.extent and -v.m_left <= sc.extent
    assert (rep.clauses["superint"].verdict == PASS) == ok_int
    assert rep.clauses["containment"].verdict == PASS
    a = env.alphas(v.m_left, v.m_right)
    assert rep.clauses["supermax"].witness["value"] == pytest.approx(np.max(1 / a))


def test_barrier_clause_is_undetermined_within_budget():
    rep = check_good_environment(env_for(3), N, GAMMA, KAPPA, barrier_budget=1000)
    assert rep.clauses["superMsup"].verdict == UNDETERMINED
    assert rep.clauses["superMsup"].witness["scanned"] == 1000
    # an undetermined clause alone cannot make the verdict conclusive
    assert not rep.overall


def test_barrier_clause_passes_with_small_q():
    # with q = 1 the barrier level is gamma log_2 n / log n and L_n is modest
    rep = check_good_environment(env_for(3), N, GAMMA, KAPPA, q=1.0)
    c = rep.clauses["superMsup"]
    assert c.verdict in (PASS, FAIL)
    kl, kr = rep.barrier
    if c.verdict == PASS:
        assert kl < rep.valley.bottom < kr


def test_default_threshold_blocks_chain_clauses():
    rep = check_good_environment(env_for(4), N, GAMMA, KAPPA)
    assert rep.clauses["chopping"].verdict == FAIL
    assert all(rep.clauses[k].verdict == PREREQ for k in CHAIN_CLAUSES)
    assert rep.chain is None


def test_small_threshold_evaluates_chain_clauses():
    rep = check_good_environment(env_for(5), N, GAMMA, KAPPA, chop_threshold=16)
    assert rep.clauses["chopping"].verdict == PASS
    assert rep.chain is not None
    assert all(rep.clauses[k].verdict in (PASS, FAIL) for k in CHAIN_CLAUSES)
    g = rep.scales.gamma_n
    right = rep.chain.right
    if right.r > 0:
        eta = min(right.eta(i, i + 1) for i in range(right.r))
        assert rep.clauses["supereta"].witness["min"] == eta
        assert (rep.clauses["supereta"].verdict == PASS) == (eta >= g)


def test_strict_normalization_flag_changes_only_side_dominance():
    env = env_for(6)
    a = check_good_environment(env, N, GAMMA, KAPPA)
    b = check_good_environment(env, N, GAMMA, KAPPA, strict_normalization=True)
    for k in CLAUSES:
        if k != "side_dominance":
            assert a.clauses[k].verdict == b.clauses[k].verdict


def test_report_row_and_dict():
    rep = check_good_environment(env_for(7), N, GAMMA, KAPPA)
    row = rep.row()
    assert set(CLAUSES) <= set(row)
    assert row["overall"] == int(rep.overall)
    d = rep.to_dict()
    assert d["valley"]["bottom"] == rep.valley.bottom
    assert rep.failing() == [k for k in CLAUSES if rep.clauses[k].verdict != PASS]


def test_estimate_bookkeeping_and_worker_independence():
    a = estimate_good_probability(DistSpec.two_point(0.3), 1e4, GAMMA, KAPPA, 100, 9, 1,
                                  barrier_budget=1 << 12)
    b = estimate_good_probability(DistSpec.two_point(0.3), 1e4, GAMMA, KAPPA, 100, 9, 2,
                                  barrier_budget=1 << 12)
    assert a.rows == b.rows
    assert a.replicas == 100 and len(a.rows) == 100
    for k in CLAUSES:
        assert a.clause_failures[k] == sum(r[k] != PASS for r in a.rows)
    assert a.p == sum(r["overall"] for r in a.rows) / 100
    assert 0 <= a.p_subset <= 1
    with pytest.raises(ValueError):
        estimate_good_probability(DistSpec.two_point(0.3), 1e4, GAMMA, KAPPA, 10, 1)


def test_containment_subset_matches_rows():
    est = estimate_good_probability(DistSpec.two_point(0.3), 1e5, GAMMA, KAPPA, 100, 2, 1,
                                    barrier_budget=1 << 10)
    sub = sum(all(r[k] == PASS for k in CONTAINMENT_CLAUSES) for r in est.rows)
    assert sub == est.subset_successes
