"""Command-line entry point: ``sinai gen|analyze|goodenv|exact|simulate|experiment``.

Exit codes: 0 success (all assertions passed), 2 assertion/bound violations,
1 operational error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys

import numpy as np

from .env import DistSpec, Environment, PotentialView, derived_scales
from .errors import SinaiError, ValleyTooNarrow, WindowExhausted
from .parallel import default_workers


def _num(text: str) -> int:
    """Integer from ``1e6``-style text."""
    v = float(text)
    if v != math.floor(v):
        raise argparse.ArgumentTypeError(f"{text} is not an integer")
    return int(v)


def _window(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi)


def _dump(obj, out):
    text = json.dumps(obj, indent=2, default=_default)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _default(x):
    if isinstance(x, (np.integer, np.floating, np.bool_)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(a):
    env = Environment(DistSpec.parse(a.dist), a.seed, *a.window)
    env.save(a.out) if a.out else print(json.dumps(env.to_dict()))
    return 0


def cmd_analyze(a):
    from .valleys import find_basic_valley, inner_barrier, ordered_chopping
    env = Environment.load(a.env)
    sc = derived_scales(a.n, a.gamma, a.kappa, env.sigma2)
    pot = PotentialView(env, a.n)
    v = find_basic_valley(pot, sc, cap=a.cap)
    out = {"n": a.n, "gamma": a.gamma, "kappa": a.kappa, "valley": v.to_dict()}
    try:
        chain = ordered_chopping(pot, v, sc, threshold=a.chop_threshold, strict=True)
        out["chain"] = chain.to_dict()
    except ValleyTooNarrow as exc:
        out["chain"] = None
        out["chain_error"] = str(exc)
    try:
        q = None if a.q is None else a.q
        ib = inner_barrier(pot, v.bottom, sc, q=q, cap=a.cap)
        out["barrier"] = {"m_less": ib.m_less, "m_greater": ib.m_greater, "level": ib.level}
    except WindowExhausted as exc:
        out["barrier"] = None
        out["barrier_error"] = str(exc)
    _dump(out, a.out)
    return 0


def cmd_goodenv(a):
    from .goodenv import estimate_good_probability
    est = estimate_good_probability(DistSpec.parse(a.dist), a.n, a.gamma, a.kappa,
                                    a.replicas, a.seed, a.threads or default_workers(),
                                    chop_threshold=a.chop_threshold)
    if a.out:
        est.write_csv(a.out)
    print(json.dumps({"n": a.n, "replicas": est.replicas, "p": est.p, "se": est.se,
                      "p_containment_subset": est.p_subset,
                      "clause_failures": est.clause_failures}))
    return 0


def cmd_exact(a):
    from .exact import exit_prob, expected_exit_time, second_moment_exit_adjacent
    env = Environment.load(a.env)
    pot = PotentialView(env, a.n)
    pB, pA = exit_prob(pot, a.a, a.x, a.b)
    out = {"pB": pB, "pA": pA, "eT": expected_exit_time(pot, a.a, a.x, a.b)}
    if a.x == a.a + 1:
        out["eT2"] = second_moment_exit_adjacent(pot, a.a, a.b - 1, "right")
    elif a.x == a.b - 1:
        out["eT2"] = second_moment_exit_adjacent(pot, a.b, a.a + 1, "left")
    _dump(out, a.out)
    return 0


def cmd_simulate(a):
    from .walk import CENSORED, run_endpoints, run_hitting, walker_keys
    env = Environment.load(a.env)
    keys = walker_keys(a.seed, a.replicas)
    with open(a.out, "w", newline="") if a.out else _Stdout() as fh:
        w = csv.writer(fh, lineterminator="\n")
        if a.record == "endpoints":
            st = run_endpoints(env, a.start, [a.steps], keys)
            w.writerow(["replica", "endpoint", "running_min", "running_max"])
            for i in range(a.replicas):
                w.writerow([i, st.positions[i, -1], st.running_min[i, -1],
                            st.running_max[i, -1]])
        else:
            hs = run_hitting(env, a.start, a.a, a.b, a.steps, keys)
            w.writerow(["replica", "endpoint", "censored", "hitting_time", "hit"])
            names = {0: "", 1: "a", 2: "b"}
            for i in range(a.replicas):
                t = int(hs.times[i])
                w.writerow([i, hs.endpoints[i], int(t == CENSORED),
                            "" if t == CENSORED else t, names[int(hs.which[i])]])
    return 0


class _Stdout:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        return False


def cmd_experiment(a):
    from .harness import ExperimentConfig, run_experiment
    with open(a.config) as fh:
        d = json.load(fh)
    d["experiment"] = a.name
    if a.threads is not None:
        d["workers"] = a.threads
    elif d.get("workers") is None:
        d["workers"] = default_workers()
    if a.out:
        d["out_dir"] = a.out
    if a.all_envs:
        d["all_envs"] = True
    cfg = ExperimentConfig.from_dict(d)
    res = run_experiment(cfg)
    paths = res.write(plot=a.plot)
    for s in res.assertions:
        print(f"[{s['status'].upper():7s}] {s['name']}")
    print("wrote " + ", ".join(str(p) for p in paths))
    return res.exit_code


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sinai", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="realize an environment and save it as JSON")
    g.add_argument("--dist", default="twopoint:0.3")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--window", type=_window, default=(-1000, 1000),
                   help="lo:hi (write --window=-1000:1000 when lo is negative)")
    g.add_argument("--out")
    g.set_defaults(fn=cmd_gen)

    an = sub.add_parser("analyze", help="basic valley, refinement chain, inner barrier")
    an.add_argument("--env", required=True)
    an.add_argument("--n", type=float, required=True)
    an.add_argument("--gamma", type=float, default=3.0)
    an.add_argument("--kappa", type=float, default=1.0)
    an.add_argument("--chop-threshold", type=float)
    an.add_argument("--q", type=float)
    an.add_argument("--cap", type=_num, default=1 << 20)
    an.add_argument("--out")
    an.set_defaults(fn=cmd_analyze)

    ge = sub.add_parser("goodenv", help="estimate the probability of a good environment")
    ge.add_argument("--dist", default="twopoint:0.3")
    ge.add_argument("--n", type=float, required=True)
    ge.add_argument("--gamma", type=float, default=3.0)
    ge.add_argument("--kappa", type=float, default=1.0)
    ge.add_argument("--replicas", type=_num, default=1000)
    ge.add_argument("--seed", type=int, default=1)
    ge.add_argument("--chop-threshold", type=float)
    ge.add_argument("--threads", type=int)
    ge.add_argument("--out")
    ge.set_defaults(fn=cmd_goodenv)

    ex = sub.add_parser("exact", help="exit probabilities and exit-time moments")
    ex.add_argument("--env", required=True)
    ex.add_argument("--n", type=float, default=1e6)
    ex.add_argument("--a", type=int, required=True)
    ex.add_argument("--x", type=int, required=True)
    ex.add_argument("--b", type=int, required=True)
    ex.add_argument("--out")
    ex.set_defaults(fn=cmd_exact)

    si = sub.add_parser("simulate", help="simulate walkers in a saved environment")
    si.add_argument("--env", required=True)
    si.add_argument("--start", type=int, default=0)
    si.add_argument("--steps", type=_num, required=True)
    si.add_argument("--replicas", type=_num, default=1000)
    si.add_argument("--seed", type=int, default=1)
    si.add_argument("--record", choices=["endpoints", "hitting"], default="endpoints")
    si.add_argument("--a", type=int)
    si.add_argument("--b", type=int)
    si.add_argument("--out")
    si.set_defaults(fn=cmd_simulate)

    e = sub.add_parser("experiment", help="run an end-to-end experiment from a JSON config")
    e.add_argument("name", choices=["containment", "localization", "subdiff", "tails",
                                    "goodenv"])
    e.add_argument("--config", required=True)
    e.add_argument("--threads", type=int)
    e.add_argument("--out")
    e.add_argument("--plot", action="store_true")
    e.add_argument("--all-envs", action="store_true")
    e.set_defaults(fn=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (SinaiError, ValueError, OSError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
