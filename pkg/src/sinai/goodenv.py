"""Clause-by-clause verification of the good-environment conditions.

Each clause gets a verdict and a witness.  Verdicts are

* ``pass`` / ``fail`` -- measured on the environment;
* ``prereq`` -- not evaluable because a structural prerequisite (the basic
  valley, or the feasibility of ordered chopping) is missing; the report
  names the root cause;
* ``undetermined`` -- evaluable in principle but the required scan exceeds the
  configured budget (typically the inner-barrier clause, whose scale
  ``L_n`` is astronomically large at reachable ``n``).

The overall verdict is true only when every clause passes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .env import DerivedScales, DistSpec, Environment, PotentialView, derived_scales, stream_rise
from .errors import NotFound, WindowExhausted
from .rng import replica_seed
from .valleys import RefinementChain, Valley, find_basic_valley, ordered_chopping, stopping_time

PASS, FAIL, PREREQ, UNDETERMINED = "pass", "fail", "prereq", "undetermined"

CLAUSES = (
    "existence", "containment", "depth", "side_dominance",
    "supermax", "supermax1", "superint", "chopping", "superMsup",
    "superr", "superrpp",
    "supereta", "superdelta", "supermu", "superetap", "superdeltap", "supermup",
    "superdelta1", "superdelta1p", "superdeltarp", "superdeltar",
)

# clauses that only need the basic valley
VALLEY_CLAUSES = ("containment", "depth", "side_dominance", "supermax", "supermax1",
                  "superint", "superMsup")
# clauses that need the chopping construction
CHAIN_CLAUSES = ("superr", "superrpp", "supereta", "superdelta", "supermu",
                 "superetap", "superdeltap", "supermup",
                 "superdelta1", "superdelta1p", "superdeltarp", "superdeltar")
# the subset used by the argument that the walk stays in the basic valley
CONTAINMENT_CLAUSES = ("existence", "containment", "depth", "side_dominance", "superint")


@dataclass(frozen=True)
class ClauseResult:
    verdict: str
    witness: object = None
    cause: str | None = None

    @property
    def ok(self) -> bool:
        return self.verdict == PASS


@dataclass
class GoodEnvReport:
    n: float
    gamma: float
    kappa: float
    scales: DerivedScales
    clauses: dict[str, ClauseResult]
    valley: Valley | None = None
    chain: RefinementChain | None = None
    barrier: tuple[int | None, int | None] = (None, None)
    settings: dict = field(default_factory=dict)

    @property
    def overall(self) -> bool:
        return all(c.ok for c in self.clauses.values())

    @property
    def conclusive(self) -> bool:
        """False when the overall verdict hinges on an undetermined clause."""
        if self.overall:
            return True
        return any(c.verdict in (FAIL, PREREQ) for c in self.clauses.values())

    def holds(self, names) -> bool:
        """Conjunction over a subset of clauses."""
        return all(self.clauses[k].ok for k in names)

    def failing(self) -> list[str]:
        return [k for k, c in self.clauses.items() if not c.ok]

    def row(self) -> dict:
        v = self.valley
        return {
            "overall": int(self.overall),
            **{k: self.clauses[k].verdict for k in CLAUSES},
            "m0": v.bottom if v else "",
            "M0": v.m_right if v else "",
            "M0p": v.m_left if v else "",
            "r": self.chain.r if self.chain else "",
            "rp": self.chain.r_prime if self.chain else "",
        }

    def to_dict(self) -> dict:
        def w(x):
            if isinstance(x, (np.floating, np.integer)):
                return x.item()
            if isinstance(x, dict):
                return {k: w(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [w(v) for v in x]
            return x
        return {
            "n": self.n, "gamma": self.gamma, "kappa": self.kappa,
            "overall": self.overall, "conclusive": self.conclusive,
            "clauses": {k: {"verdict": c.verdict, "witness": w(c.witness), "cause": c.cause}
                        for k, c in self.clauses.items()},
            "valley": self.valley.to_dict() if self.valley else None,
            "barrier": list(self.barrier),
            "settings": w(self.settings),
        }


def _ge(x, bound):
    return PASS if x >= bound else FAIL


def _le(x, bound):
    return PASS if x <= bound else FAIL


def _barrier_side(env, pot, bottom, direction, level_norm, L_n, budget):
    """(verdict, index) for one side of the inner-barrier clause."""
    level_raw = level_norm * pot.log_n
    limit = int(min(L_n, budget))
    if env.extendable:
        k = stream_rise(env, bottom, direction, level_raw, limit)
    else:
        try:
            k = stopping_time(pot, level_norm, bottom, direction)
        except WindowExhausted:
            k = None
        if k is not None and abs(k - bottom) > limit:
            k = None
        if k is None:
            # a fixed window is all there is: beyond it nothing can be decided
            edge = env.hi - bottom if direction > 0 else bottom - env.lo
            if edge >= L_n:
                return FAIL, None
            return UNDETERMINED, None
    if k is not None:
        return _le(abs(k - bottom), L_n), k
    return (FAIL if limit >= L_n else UNDETERMINED), None


def check_good_environment(env: Environment, n: float, gamma: float, kappa: float, *,
                           strict_normalization: bool = False,
                           chop_threshold: float | None = None,
                           q: float | None = None,
                           barrier_budget: int = 1 << 20,
                           search_cap: int | None = None,
                           scales: DerivedScales | None = None) -> GoodEnvReport:
    """Evaluate every clause of the good-environment definition.

    Parameters
    ----------
    strict_normalization
        The side-dominance clause compares the flank against ``max S^n``.
        ``False`` (default) reads the flank normalized as well; ``True`` uses
        the raw ``S`` at the flank, literally as the clause is typeset.
    chop_threshold
        Distance from the bottom at which ordered chopping stops; default
        ``l_n b_n``.  Smaller values make the chain clauses testable at
        reachable ``n``.
    q
        Replaces ``q_n`` in the barrier level, ``L_n`` and the last-refinement
        cap (default: ``q_n`` itself).
    barrier_budget
        Maximum number of sites scanned per side for the inner barriers.
    search_cap
        Window cap for the basic-valley search (default ``max(2**16,
        64 * extent)``); beyond it every valley violates the extent clause.
    """
    sc = scales or derived_scales(n, gamma, kappa, env.sigma2)
    pot = PotentialView(env, n)
    ln, g, d = sc.log_n, sc.gamma_n, sc.depth_level
    log_q = sc.log_q_n if q is None else math.log(q)
    L_n = sc.L_n if q is None else (8 * (gamma * sc.log2_n + log_q) / sc.sigma) ** 2 * sc.log2_n
    thr = sc.chop_threshold if chop_threshold is None else max(float(chop_threshold), 0.0)
    if search_cap is None:
        search_cap = max(1 << 16, int(64 * sc.extent))
    settings = {"strict_normalization": strict_normalization, "chop_threshold": thr,
                "log_q": log_q, "L_n": L_n, "barrier_budget": barrier_budget,
                "search_cap": search_cap}
    res: dict[str, ClauseResult] = {}

    try:
        v = find_basic_valley(pot, sc, cap=search_cap)
    except NotFound as exc:
        res["existence"] = ClauseResult(FAIL, str(exc))
        for k in CLAUSES[1:]:
            res[k] = ClauseResult(PREREQ, None, "existence")
        return GoodEnvReport(n, gamma, kappa, sc, res, settings=settings)
    res["existence"] = ClauseResult(PASS, v.to_dict())
    S = env.potential
    m0, Mr, Ml = v.bottom, v.m_right, v.m_left

    res["containment"] = ClauseResult(PASS if Ml <= 0 <= Mr else FAIL, (Ml, Mr))
    d00 = (S(Mr) - S(m0)) / ln
    d00p = (S(Ml) - S(m0)) / ln
    res["depth"] = ClauseResult(PASS if min(d00, d00p) >= d else FAIL,
                                {"delta00": d00, "delta00p": d00p, "bound": d})
    if m0 == 0:
        res["side_dominance"] = ClauseResult(PASS, "bottom at 0")
    else:
        flank = Ml if m0 > 0 else Mr
        inner = env.potentials(min(0, m0), max(0, m0))
        lhs = S(flank) if strict_normalization else S(flank) / ln
        x = lhs - float(np.max(inner)) / ln
        res["side_dominance"] = ClauseResult(_ge(x, g), {"value": x, "bound": g})

    a = env.alphas(Ml, Mr)
    cap_t = ln ** (6.0 / kappa)
    inv_a, inv_b = float(np.max(1.0 / a)), float(np.max(1.0 / (1.0 - a)))
    res["supermax"] = ClauseResult(_le(inv_a, cap_t), {"value": inv_a, "bound": cap_t})
    res["supermax1"] = ClauseResult(_le(inv_b, cap_t), {"value": inv_b, "bound": cap_t})
    res["superint"] = ClauseResult(PASS if Mr <= sc.extent and -Ml <= sc.extent else FAIL,
                                   {"M0": Mr, "M0p": Ml, "bound": sc.extent})

    level = (log_q + gamma * sc.log2_n) / ln
    vl, kl = _barrier_side(env, pot, m0, -1, level, L_n, barrier_budget)
    vr, kr = _barrier_side(env, pot, m0, 1, level, L_n, barrier_budget)
    if FAIL in (vl, vr):
        vb = FAIL
    elif UNDETERMINED in (vl, vr):
        vb = UNDETERMINED
    else:
        vb = PASS
    res["superMsup"] = ClauseResult(vb, {"M_less": kl, "M_greater": kr, "L_n": L_n,
                                         "scanned": int(min(L_n, barrier_budget))})

    feasible = Mr - m0 >= thr and m0 - Ml >= thr
    res["chopping"] = ClauseResult(PASS if feasible else FAIL,
                                   {"right": Mr - m0, "left": m0 - Ml, "threshold": thr})
    chain = None
    if not feasible:
        for k in CHAIN_CLAUSES:
            res[k] = ClauseResult(PREREQ, None, "chopping")
    else:
        chain = ordered_chopping(pot, v, sc, threshold=thr, strict=True)
        _chain_clauses(res, chain, sc, log_q)
    return GoodEnvReport(n, gamma, kappa, sc, {k: res[k] for k in CLAUSES}, v, chain,
                         (kl, kr), settings)


def _chain_clauses(res, chain: RefinementChain, sc: DerivedScales, log_q: float):
    g = sc.gamma_n
    for s, sfx in ((chain.right, ""), (chain.left, "p")):
        r = s.r
        name = "superr" if sfx == "" else "superrpp"
        res[name] = ClauseResult(_le(r, sc.r_max), {"r": r, "bound": sc.r_max})
        if r == 0:
            for k in ("supereta", "superdelta", "supermu"):
                res[k + sfx] = ClauseResult(PASS, "vacuous (r = 0)")
        else:
            eta = min(s.eta(i, i + 1) for i in range(r))
            dl = min(s.delta(i + 1, i + 1) for i in range(r))
            mu = min(s.mu(i + 1, 0) for i in range(r))
            res["supereta" + sfx] = ClauseResult(_ge(eta, g), {"min": eta, "bound": g})
            res["superdelta" + sfx] = ClauseResult(_ge(dl, g), {"min": dl, "bound": g})
            res["supermu" + sfx] = ClauseResult(_ge(mu, g), {"min": mu, "bound": g})
        d11 = s.delta(1, 1)
        res["superdelta1" + sfx] = ClauseResult(_le(d11, 1 - g), {"value": d11, "bound": 1 - g})
        drr = s.delta(r, r)
        cap = log_q / sc.log_n
        res["superdeltarp" if sfx == "" else "superdeltar"] = ClauseResult(
            _le(drr, cap), {"value": drr, "bound": cap})


# ---------------------------------------------------------------------------
# sampling Q[G_n]

@dataclass
class GoodProbEstimate:
    n: float
    replicas: int
    successes: int
    clause_failures: dict[str, int]
    rows: list[dict]
    subset_successes: int = 0

    @property
    def p(self) -> float:
        return self.successes / self.replicas

    @property
    def se(self) -> float:
        p = self.p
        return math.sqrt(max(p * (1 - p), 0.0) / self.replicas)

    @property
    def p_subset(self) -> float:
        return self.subset_successes / self.replicas

    def write_csv(self, path):
        if not self.rows:
            return
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.rows[0]))
            w.writeheader()
            w.writerows(self.rows)


def _one_replica(args):
    spec_d, n, gamma, kappa, seed, idx, kw = args
    env = Environment(DistSpec.from_dict(spec_d), seed, -64, 64)
    rep = check_good_environment(env, n, gamma, kappa, **kw)
    row = {"replica": idx, "seed": seed, **rep.row()}
    return row, rep.holds(CONTAINMENT_CLAUSES)


def estimate_good_probability(spec: DistSpec, n: float, gamma: float, kappa: float,
                              replicas: int, master_seed: int, workers: int = 1,
                              **checker_kw) -> GoodProbEstimate:
    """Fraction of sampled environments that are good, with per-clause counts.

    Replica ``i`` uses the environment seed ``replica_seed(master_seed, i)``;
    results are merged in replica order, so the output does not depend on
    ``workers``.
    """
    if replicas < 100:
        raise ValueError("replicas must be at least 100")
    from .parallel import ordered_map
    jobs = [(spec.to_dict(), n, gamma, kappa, replica_seed(master_seed, i), i, checker_kw)
            for i in range(replicas)]
    out = ordered_map(_one_replica, jobs, workers)
    rows = [r for r, _ in out]
    fails = {k: sum(1 for r in rows if r[k] != PASS) for k in CLAUSES}
    succ = sum(r["overall"] for r in rows)
    sub = sum(1 for _, s in out if s)
    return GoodProbEstimate(n, replicas, succ, fails, rows, sub)
