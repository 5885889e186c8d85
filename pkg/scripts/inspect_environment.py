"""Print the basic valley, its refinement chain and inner barriers for one environment.

Usage::

    python scripts/inspect_environment.py [--seed 7] [--n 1e6] [--threshold 16]

Also evaluates the good-environment clauses and the exit quantities from the
first right-side refinement back to the bottom.
"""

from __future__ import annotations

import argparse
import math

from sinai import (DistSpec, Environment, PotentialView, check_good_environment,
                   derived_scales, find_basic_valley, inner_barrier, ordered_chopping)
from sinai.exact import exit_prob, second_moment_exit_adjacent


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--dist", default="twopoint:0.3")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n", type=float, default=1e6)
    p.add_argument("--gamma", type=float, default=3.0)
    p.add_argument("--threshold", type=float, default=16.0)
    a = p.parse_args(argv)

    env = Environment(DistSpec.parse(a.dist), a.seed, -64, 64)
    sc = derived_scales(a.n, a.gamma, 1.0, env.sigma2)
    pot = PotentialView(env, a.n)
    v = find_basic_valley(pot, sc, cap=1 << 20)
    print(f"log n = {sc.log_n:.3f}, depth level 1+gamma(n) = {sc.depth_level:.4f}")
    print(f"basic valley: M0' = {v.m_left}, m0 = {v.bottom}, M0 = {v.m_right}, "
          f"depth = {v.depth:.4f}")
    chain = ordered_chopping(pot, v, sc, threshold=a.threshold)
    for sd in (chain.right, chain.left):
        drops = ", ".join(f"{sd.delta(i, i):.3f}" for i in range(sd.r + 1))
        print(f"{sd.side:5s} r = {sd.r}: maxima {sd.maxima}, minima {sd.minima}, "
              f"drops [{drops}]")
    ib = inner_barrier(pot, v.bottom, sc, q=a.n, cap=1 << 22)
    print(f"inner barriers (q = n): [{ib.m_less}, {ib.m_greater}] at level {ib.level:.4f}")
    top = chain.right.maxima[min(1, chain.r)]
    if top > v.bottom:
        pb, pa = exit_prob(pot, v.bottom, v.bottom + 1, top + 1)
        m2 = second_moment_exit_adjacent(pot, v.bottom, top, "right", warn=False)
        print(f"from m0+1: P[reach {top + 1} first] = {pb:.3e}, E[T^2] = {m2:.4e} "
              f"(sqrt = {math.sqrt(m2):.4e})")
    rep = check_good_environment(env, a.n, a.gamma, 1.0, chop_threshold=a.threshold)
    print("clauses:", ", ".join(f"{k}={c.verdict}" for k, c in rep.clauses.items()))


if __name__ == "__main__":
    main()
