"""Monte Carlo simulation of the quenched walk.

From site ``x`` the walker steps to ``x + 1`` with probability ``alpha_x`` and
to ``x - 1`` otherwise.  Walker ``i`` of a run with seed ``s`` draws its
``t``-th uniform from a splitmix64 sequence keyed by
``replica_seed(s, i)``, so trajectories depend only on ``(environment, seed,
replica index)`` -- never on batching, chunking or the number of workers.

Kernels advance walkers in lockstep groups of eight (independent dependency
chains run in parallel on one core) and return to Python whenever a walker
comes close to the edge of the realized window, which is then extended.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numba as nb
import numpy as np

from .env import Environment
from .errors import BudgetExceeded, WindowExhausted
from .rng import GOLDEN, WALK_STREAM, derive_key, nb_mix64, replica_seed

CENSORED = -1
FULL_TRAJECTORY_CAP = 10**7
STEP_BUDGET = 10**9
LANES = 8
MARGIN = 128  # steps run between window checks
_INV53 = 1.0 / 9007199254740992.0


class RecordMode(str, Enum):
    FULL = "full"
    ENDPOINT = "endpoint"
    HITTING = "hitting"


@dataclass(frozen=True)
class WalkerConfig:
    start: int = 0
    max_steps: int = 1000
    seed: int = 0
    record: RecordMode = RecordMode.ENDPOINT

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        object.__setattr__(self, "record", RecordMode(self.record))
        if self.record is RecordMode.FULL and self.max_steps > FULL_TRAJECTORY_CAP:
            raise ValueError(f"full trajectories are capped at {FULL_TRAJECTORY_CAP} steps")


def walker_keys(seed: int, replicas, offset: int = 0) -> np.ndarray:
    """Per-walker RNG keys for replicas ``offset .. offset + replicas - 1``."""
    idx = range(offset, offset + replicas) if isinstance(replicas, int) else replicas
    return np.array([derive_key(WALK_STREAM, replica_seed(seed, i)) for i in idx],
                    dtype=np.uint64)


@nb.njit(inline="always")
def _u(key, t):
    """t-th uniform of the walker keyed by ``key`` (t >= 0)."""
    z = nb_mix64(key + np.uint64(t + 1) * np.uint64(GOLDEN))
    return (z >> np.uint64(11)) * _INV53


# ---------------------------------------------------------------------------
# kernels

@nb.njit(cache=True)
def _advance(alpha, lo, keys, x, t, cps, pos, cmin, cmax, clast, nxt, xmin, xmax,
             last, mark):
    """Advance every walker to time cps[-1], recording at checkpoint times.

    Walkers run in groups of eight that share the clock.  State arrays (x, t,
    nxt, xmin, xmax, last) are updated in place.  Returns the index of a
    walker that stands outside the realized window, or -1 when done.
    """
    K = x.shape[0]
    hi = lo + alpha.shape[0] - 1
    T = cps[cps.shape[0] - 1]
    lx = np.empty(8, np.int64)
    lmn = np.empty(8, np.int64)
    lmx = np.empty(8, np.int64)
    lls = np.empty(8, np.int64)
    lk = np.empty(8, np.uint64)
    for b in range(0, K, 8):
        e = min(b + 8, K)
        L = e - b
        while t[b] < T:
            s0 = t[b]
            s1 = min(s0 + MARGIN, cps[nxt[b]])
            safe = True
            for w in range(b, e):
                if x[w] - MARGIN < lo or x[w] + MARGIN > hi:
                    safe = False
            if safe:
                for j in range(L):
                    lx[j] = x[b + j]
                    lmn[j] = xmin[b + j]
                    lmx[j] = xmax[b + j]
                    lls[j] = last[b + j]
                    lk[j] = keys[b + j]
                for s in range(s0, s1):
                    for j in range(L):
                        xi = lx[j]
                        xi += 2 * np.int64(_u(lk[j], s) < alpha[xi - lo]) - 1
                        lx[j] = xi
                        lmn[j] = min(lmn[j], xi)
                        lmx[j] = max(lmx[j], xi)
                        if xi == mark:
                            lls[j] = s + 1
                for j in range(L):
                    x[b + j] = lx[j]
                    xmin[b + j] = lmn[j]
                    xmax[b + j] = lmx[j]
                    last[b + j] = lls[j]
                    t[b + j] = s1
            else:
                # near the window edge: one step at a time with exact checks
                for w in range(b, e):
                    if x[w] < lo or x[w] > hi:
                        return w
                for w in range(b, e):
                    xi = x[w]
                    s = t[w]
                    xi += 2 * np.int64(_u(keys[w], s) < alpha[xi - lo]) - 1
                    x[w] = xi
                    xmin[w] = min(xmin[w], xi)
                    xmax[w] = max(xmax[w], xi)
                    if xi == mark:
                        last[w] = s + 1
                    t[w] = s + 1
                s1 = s0 + 1
            if s1 == cps[nxt[b]]:
                c = nxt[b]
                for w in range(b, e):
                    pos[w, c] = x[w]
                    cmin[w, c] = xmin[w]
                    cmax[w, c] = xmax[w]
                    clast[w, c] = last[w]
                    nxt[w] = c + 1
    return -1


@nb.njit(cache=True)
def _hit(alpha, lo, keys, x, t, done, a, b, max_steps):
    """Run walkers until they hit a or b (exclusive ends) or reach max_steps.

    ``done`` is 0 while running, 1 for a, 2 for b, 3 when censored.  Returns the
    index of a walker standing outside the realized window, or -1.
    """
    K = x.shape[0]
    hi = lo + alpha.shape[0] - 1
    for w in range(K):
        if done[w]:
            continue
        xi = x[w]
        s = t[w]
        k = keys[w]
        while True:
            if xi == a:
                done[w] = 1
                break
            if xi == b:
                done[w] = 2
                break
            if s >= max_steps:
                done[w] = 3
                break
            if xi < lo or xi > hi:
                x[w] = xi
                t[w] = s
                return w
            if xi - MARGIN < lo or xi + MARGIN > hi:
                stop = s + 1
            else:
                stop = min(s + MARGIN, max_steps)
            while s < stop:
                xi += 2 * np.int64(_u(k, s) < alpha[xi - lo]) - 1
                s += 1
                if xi == a or xi == b:
                    break
        x[w] = xi
        t[w] = s
    return -1


@nb.njit(cache=True)
def _trajectory(alpha, lo, key, x0, steps, out):
    """Fill out[0..steps] with one path; returns the number of steps done."""
    hi = lo + alpha.shape[0] - 1
    xi = x0
    out[0] = xi
    for s in range(steps):
        if xi < lo or xi > hi:
            return s
        u = _u(key, s)
        xi += 2 * np.int64(u < alpha[xi - lo]) - 1
        out[s + 1] = xi
    return steps


def _grow(env: Environment, lo_need: int, hi_need: int):
    if not env.extendable:
        raise WindowExhausted(f"walk left the fixed window [{env.lo}, {env.hi}]")
    env.realize(lo_need, hi_need)  # raises WindowExhausted past the cap


# ---------------------------------------------------------------------------
# results

@dataclass
class EndpointStats:
    """Positions (and running extremes) at the checkpoint times."""

    checkpoints: np.ndarray
    positions: np.ndarray  # [replica, checkpoint]
    running_min: np.ndarray
    running_max: np.ndarray
    last_visit: np.ndarray  # last time <= checkpoint at ``mark`` (-1: never)
    start: int
    mark: int | None

    @property
    def endpoints(self) -> np.ndarray:
        return self.positions[:, -1]


@dataclass
class HitStats:
    """Hitting times of {a, b}; ``times == CENSORED`` when not hit by ``max_steps``."""

    times: np.ndarray
    which: np.ndarray  # 'a', 'b' or '' per replica, stored as 0/1/2
    endpoints: np.ndarray
    max_steps: int
    a: int | None
    b: int | None
    start: int

    @property
    def censored(self) -> np.ndarray:
        return self.times == CENSORED

    def fraction_hit_b_first(self) -> float:
        return float(np.mean(self.which == 2))


# ---------------------------------------------------------------------------
# drivers

def run_endpoints(env: Environment, start: int, checkpoints, keys: np.ndarray,
                  mark: int | None = None) -> EndpointStats:
    """Simulate ``len(keys)`` walkers to ``max(checkpoints)`` steps."""
    cps = np.unique(np.asarray(checkpoints, dtype=np.int64))
    if cps[0] < 1:
        raise ValueError("checkpoints must be >= 1")
    K, C = len(keys), len(cps)
    x = np.full(K, start, np.int64)
    t = np.zeros(K, np.int64)
    nxt = np.zeros(K, np.int64)
    xmin = x.copy()
    xmax = x.copy()
    mk = np.int64(mark if mark is not None else np.iinfo(np.int64).min)
    last = np.where(x == mk, 0, -1).astype(np.int64)
    pos = np.zeros((K, C), np.int64)
    cmin, cmax, clast = pos.copy(), pos.copy(), pos.copy()
    _grow(env, start - 4 * MARGIN, start + 4 * MARGIN) if env.extendable else None
    while True:
        b = _advance(env.alpha, env.lo, keys, x, t, cps, pos, cmin, cmax, clast, nxt,
                     xmin, xmax, last, mk)
        if b < 0:
            break
        span = max(env.hi - env.lo, 1024)
        _grow(env, int(x[b]) - span // 2 - MARGIN, int(x[b]) + span // 2 + MARGIN)
    return EndpointStats(cps, pos, cmin, cmax, clast, start, mark)


def run_hitting(env: Environment, start: int, a: int | None, b: int | None,
                max_steps: int, keys: np.ndarray) -> HitStats:
    """Hitting times of the nearest of ``a`` < start < ``b`` (either may be None)."""
    lo_t = np.iinfo(np.int64).min if a is None else a
    hi_t = np.iinfo(np.int64).max if b is None else b
    if not lo_t < start < hi_t:
        raise ValueError("need a < start < b")
    K = len(keys)
    x = np.full(K, start, np.int64)
    t = np.zeros(K, np.int64)
    done = np.zeros(K, np.int64)
    if env.extendable:
        _grow(env, start - 4 * MARGIN, start + 4 * MARGIN)
    while True:
        w = _hit(env.alpha, env.lo, keys, x, t, done, lo_t, hi_t, np.int64(max_steps))
        if w < 0:
            break
        span = max(env.hi - env.lo, 1024)
        _grow(env, int(x[w]) - span // 2 - MARGIN, int(x[w]) + span // 2 + MARGIN)
    times = np.where(done == 3, CENSORED, t)
    which = np.where(done == 3, 0, done)
    return HitStats(times, which, x, int(max_steps), a, b, start)


def simulate(env: Environment, cfg: WalkerConfig, replicas: int = 1, *,
             checkpoints=None, a: int | None = None, b: int | None = None,
             mark: int | None = None, replica_offset: int = 0):
    """Simulate walkers according to ``cfg.record``.

    * ``FULL``: returns an int64 array of shape ``(replicas, max_steps + 1)``.
    * ``ENDPOINT``: :class:`EndpointStats` at ``checkpoints`` (default: only
      ``max_steps``), with running extremes and last visits to ``mark``.
    * ``HITTING``: :class:`HitStats` for the targets ``a``/``b``, censored at
      ``max_steps``.
    """
    keys = walker_keys(cfg.seed, replicas, replica_offset)
    if cfg.record is RecordMode.FULL:
        out = np.zeros((replicas, cfg.max_steps + 1), np.int64)
        for i, k in enumerate(keys):
            done = 0
            while True:
                if env.extendable:
                    env.realize(cfg.start - 4 * MARGIN, cfg.start + 4 * MARGIN)
                buf = np.zeros(cfg.max_steps + 1, np.int64)
                done = _trajectory(env.alpha, env.lo, k, cfg.start, cfg.max_steps, buf)
                if done == cfg.max_steps:
                    out[i] = buf
                    break
                span = env.hi - env.lo
                _grow(env, env.lo - span, env.hi + span)
        return out
    if cfg.record is RecordMode.ENDPOINT:
        cps = [cfg.max_steps] if checkpoints is None else list(checkpoints) + [cfg.max_steps]
        cps = sorted(set(c for c in cps if c <= cfg.max_steps))
        return run_endpoints(env, cfg.start, cps, keys, mark)
    return run_hitting(env, cfg.start, a, b, cfg.max_steps, keys)


# ---------------------------------------------------------------------------
# estimators

def exit_frequency(env: Environment, a: int, x: int, b: int, replicas: int, seed: int,
                   max_steps: int = 10**9) -> tuple[float, float, int]:
    """(fraction hitting b before a, binomial SE, censored count)."""
    hs = run_hitting(env, x, a, b, max_steps, walker_keys(seed, replicas))
    done = ~hs.censored
    m = int(done.sum())
    p = float(np.mean(hs.which[done] == 2)) if m else math.nan
    return p, math.sqrt(p * (1 - p) / m) if m else math.nan, replicas - m


@dataclass
class TailEstimate:
    q: np.ndarray
    tail: np.ndarray
    se: np.ndarray
    replicas: int
    censored: int
    start: int
    target: int
    times: np.ndarray = field(repr=False, default=None)


def estimate_return_tail(env: Environment, bottom: int, side: int, q_grid, replicas: int,
                         seed: int, max_steps: int | None = None) -> TailEstimate:
    """Empirical ``P[T_bottom > q]`` for walkers started at ``bottom + side``.

    Walkers are censored after ``max_steps`` (default ``max(q_grid)``); a
    censored walker has ``T > max_steps >= q`` for every ``q`` on the grid, so
    censoring never biases the estimate.
    """
    if side not in (1, -1):
        raise ValueError("side must be +1 or -1")
    q = np.asarray(q_grid, dtype=np.int64)
    if np.any(q < 0):
        raise ValueError("q must be nonnegative")
    ms = int(q.max()) if max_steps is None else int(max_steps)
    if ms < q.max():
        raise ValueError("max_steps must cover the q grid")
    start = bottom + side
    a, b = (bottom, None) if side > 0 else (None, bottom)
    hs = run_hitting(env, start, a, b, max(ms, 1), walker_keys(seed, replicas))
    T = np.where(hs.censored, np.iinfo(np.int64).max, hs.times)
    tail = (T[None, :] > q[:, None]).mean(axis=1)
    se = np.sqrt(tail * (1 - tail) / replicas)
    return TailEstimate(q, tail, se, replicas, int(hs.censored.sum()), start, bottom, T)


@dataclass
class LastReturn:
    n: int
    q: int
    fraction_missing: float  # empirical P[A_q^c]
    se: float
    replicas: int


def last_return_event(env: Environment, n: int, q: int, bottom: int, replicas: int,
                      seed: int, start: int | None = None,
                      budget: int = STEP_BUDGET) -> LastReturn:
    """Fraction of walks (from ``start``, default ``bottom``) that do not visit
    ``bottom`` during the last ``q`` steps ``[n - q, n]``."""
    if not 1 <= q <= n:
        raise ValueError("need 1 <= q <= n")
    if n > budget:
        raise BudgetExceeded(f"{n} steps per replica exceeds the budget {budget}")
    s = bottom if start is None else start
    st = run_endpoints(env, s, [n], walker_keys(seed, replicas), mark=bottom)
    miss = st.last_visit[:, -1] < n - q
    p = float(miss.mean())
    return LastReturn(n, q, p, math.sqrt(p * (1 - p) / replicas), replicas)
