"""Valleys of the potential, refinement, the basic valley and ordered chopping.

All comparisons are done on normalized differences ``(S_j - S_l) / log n``
computed from the stored prefix sums, so that every routine (and every test
oracle) sees the same numbers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .env import DerivedScales, PotentialView
from .errors import EmptySegment, NotFound, ValleyTooNarrow, WindowExhausted


# ---------------------------------------------------------------------------
# data types

@dataclass(frozen=True)
class Valley:
    """A triplet ``{m_left, bottom, m_right}`` with its normalized depth."""

    m_left: int
    bottom: int
    m_right: int
    depth: float

    @property
    def width(self) -> int:
        return self.m_right - self.m_left

    def to_dict(self) -> dict:
        return {"m_left": self.m_left, "bottom": self.bottom,
                "m_right": self.m_right, "depth": self.depth}


@dataclass(frozen=True)
class RefinementPair:
    """Maximizer/minimizer of a refinement and their normalized drop (>= 0)."""

    maximizer: int
    minimizer: int
    drop: float


@dataclass
class ChainSide:
    """Maximizers ``M_0..M_r`` and minimizers ``m_0..m_r`` on one side of the bottom.

    ``m_0`` is the valley bottom and ``M_0`` the valley flank.  One extra
    refinement ``(M_{r+1}, m_{r+1})`` of the innermost segment is kept in
    ``next_pair`` because the level-r return-time bound uses it.
    """

    side: str
    maxima: list[int]
    minima: list[int]
    next_pair: RefinementPair
    S_max: np.ndarray  # normalized potential at maxima (incl. the extra one)
    S_min: np.ndarray
    reached: bool  # the stop rule was met (False only when chopping was infeasible)

    @property
    def r(self) -> int:
        return len(self.maxima) - 1

    def _i(self, i: int) -> int:
        if not 0 <= i <= self.r + 1:
            raise IndexError(f"level {i} outside 0..{self.r + 1}")
        return i

    def delta(self, i: int, j: int) -> float:
        """S^n at maximizer i minus S^n at minimizer j."""
        return float(self.S_max[self._i(i)] - self.S_min[self._i(j)])

    def eta(self, i: int, j: int) -> float:
        return float(self.S_max[self._i(i)] - self.S_max[self._i(j)])

    def mu(self, i: int, j: int) -> float:
        return float(self.S_min[self._i(i)] - self.S_min[self._i(j)])

    def arrays(self) -> dict:
        """Full delta/eta/mu matrices over levels 0..r."""
        k = self.r + 1
        Mx, mn = self.S_max[:k], self.S_min[:k]
        return {"delta": np.subtract.outer(Mx, mn), "eta": np.subtract.outer(Mx, Mx),
                "mu": np.subtract.outer(mn, mn)}


@dataclass
class RefinementChain:
    """Result of ordered chopping on both sides of the basic valley."""

    valley: Valley
    right: ChainSide
    left: ChainSide
    threshold: float
    flags: list[str] = field(default_factory=list)

    @property
    def bottom(self) -> int:
        return self.valley.bottom

    @property
    def r(self) -> int:
        return self.right.r

    @property
    def r_prime(self) -> int:
        return self.left.r

    @property
    def feasible(self) -> bool:
        return self.right.reached and self.left.reached

    def to_dict(self) -> dict:
        def side(s: ChainSide):
            arr = s.arrays()
            return {"r": s.r, "maxima": s.maxima, "minima": s.minima,
                    "next": [s.next_pair.maximizer, s.next_pair.minimizer],
                    **{k: v.tolist() for k, v in arr.items()}}
        return {"valley": self.valley.to_dict(), "threshold": self.threshold,
                "right": side(self.right), "left": side(self.left), "flags": self.flags}


@dataclass(frozen=True)
class InnerBarrier:
    m_less: int
    m_greater: int
    level: float  # normalized height above the bottom


# ---------------------------------------------------------------------------
# stopping times

@nb.njit(cache=True)
def _first_crossing(S, start, step, ref, level, up, log_n):
    """Index offset of the first site after ``start`` (along ``step``) crossing.

    ``up``: (S - ref)/log_n >= level; otherwise (S - ref)/log_n <= -level.
    Returns -1 when the array edge is reached first.
    """
    k = start + step
    n = S.shape[0]
    while 0 <= k < n:
        v = (S[k] - ref) / log_n
        if up:
            if v >= level:
                return k
        elif v <= -level:
            return k
        k += step
    return -1


def stopping_time(pot: PotentialView, a: float, start: int = 0, direction: int = 1,
                  up: bool = True, cap: int | None = None) -> int | None:
    """First site ``m`` beyond ``start`` along ``direction`` where the level is crossed.

    With ``up`` the level is ``S^n_m - S^n_start >= a``, otherwise
    ``S^n_m - S^n_start <= -a``.  From ``start = 0`` these are the usual
    ``U^+_a`` / ``U^-_a``.  Returns the absolute site index, or ``None`` when a
    fixed window ends first.  Extendable environments grow geometrically;
    running past ``cap`` sites (default: the environment cap) raises
    :class:`WindowExhausted`.
    """
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    env = pot.env
    pot.ensure(start, start)
    ref = env.potential(start)
    cap = env.cap if cap is None else cap
    while True:
        k = _first_crossing(env.S, start - env.lo, direction, ref, float(a), up, pot.log_n)
        if k >= 0:
            return int(k + env.lo)
        if not env.extendable:
            return None
        lo, hi = env.window
        span = hi - lo + 1
        if span >= cap:
            raise WindowExhausted(f"no crossing of level {a} within {cap} sites")
        grow = max(span, 16)
        try:
            if direction > 0:
                env.realize(lo, hi + grow)
            else:
                env.realize(lo - grow, hi)
        except WindowExhausted:
            raise WindowExhausted(f"no crossing of level {a} within the window cap") from None


# ---------------------------------------------------------------------------
# refinement

# Drops within TIE_TOL (raw potential units) are ties.  Mathematically equal
# drops computed from different sites differ in the last bits; without the
# tolerance the tie rule would act on rounding noise instead of on the ties.
TIE_TOL = 1e-9


@nb.njit(cache=True)
def _refine_right(S, tol):
    """Max of S[i] - S[j] over i <= j; ties: smallest j, then smallest i."""
    best = -1.0
    bi = 0
    bj = 0
    pmax = S[0]
    pidx = 0
    for j in range(S.shape[0]):
        if S[j] > pmax + tol:
            pmax = S[j]
            pidx = j
        d = pmax - S[j]
        if d > best + tol:
            best = d
            bi = pidx
            bj = j
    return bi, bj


def refine(pot: PotentialView, lo: int, hi: int, side: str = "right") -> RefinementPair:
    """Refinement of the segment [lo, hi].

    ``right``: the bottom is at ``lo``; returns the pair ``t' <= t''`` maximizing
    ``S^n_{t'} - S^n_{t''}`` (maximizer ``t'``).  ``left``: the bottom is at
    ``hi``; returns ``t' <= t''`` maximizing ``S^n_{t''} - S^n_{t'}`` (maximizer
    ``t''``).  Ties go to the pair whose minimizer, then maximizer, is closest to
    the bottom; drops (and heights) within ``TIE_TOL`` count as equal.  A
    one-site segment gives the trivial pair with drop 0.
    """
    if hi < lo:
        raise EmptySegment(f"empty segment [{lo}, {hi}]")
    S = np.asarray(pot.raw(lo, hi), float)
    if side == "right":
        i, j = _refine_right(S, TIE_TOL)
        mx, mn = lo + i, lo + j
    elif side == "left":
        i, j = _refine_right(S[::-1].copy(), TIE_TOL)
        mx, mn = hi - i, hi - j
    else:
        raise ValueError("side must be 'right' or 'left'")
    S_mx, S_mn = pot.env.potential(mx), pot.env.potential(mn)
    return RefinementPair(int(mx), int(mn), (S_mx - S_mn) / pot.log_n)


# ---------------------------------------------------------------------------
# basic valley

@nb.njit(cache=True)
def _candidates(S, z, log_n, d, g, width_cap):
    """Best basic-valley candidate on the window (0 sits at array index z).

    For every bottom m the flanks are computed by the sup/inf rules (first
    site on each side rising d above the bottom, with the extra gamma(n)
    condition on the side holding 0).  A candidate is valid when both flanks
    exist inside the window, 0 lies between them and m is the (tie-broken)
    minimum on the span.  The narrowest valid candidate wins; ties go to the
    bottom with smallest |m|, then the negative one.
    Returns (left, bottom, right) as array indices, or (-1, -1, -1).
    """
    n = S.shape[0]
    best_w = width_cap + 1
    bl = -1
    bm = -1
    br = -1
    # a bottom is the minimum of a span containing both 0 and itself, so only
    # strict running-minimum records outward from 0 can qualify
    rec = np.zeros(n, np.bool_)
    rec[z] = True
    run = S[z]
    for k in range(z + 1, n):
        if S[k] < run:
            run = S[k]
            rec[k] = True
    run = S[z]
    for k in range(z - 1, -1, -1):
        if S[k] < run:
            run = S[k]
            rec[k] = True
    for m in range(n):
        if not rec[m]:
            continue
        # right flank
        smax0 = -np.inf
        if m < z:
            for k in range(m, z + 1):
                if S[k] > smax0:
                    smax0 = S[k]
        elif m > z:
            for k in range(z, m + 1):
                if S[k] > smax0:
                    smax0 = S[k]
        R = -1
        k = max(m + 1, z) if m < z else m + 1
        while k < n and k - m <= width_cap:
            if (S[k] - S[m]) / log_n >= d:
                if m < z:
                    if (S[k] - smax0) / log_n >= g:
                        R = k
                        break
                else:
                    R = k
                    break
            k += 1
        if R < 0:
            continue
        L = -1
        k = min(m - 1, z) if m > z else m - 1
        while k >= 0 and R - k <= width_cap:
            if (S[k] - S[m]) / log_n >= d:
                if m > z:
                    if (S[k] - smax0) / log_n >= g:
                        L = k
                        break
                else:
                    L = k
                    break
            k -= 1
        if L < 0:
            continue
        w = R - L
        if w > best_w:
            continue
        # m must be the minimum on [L, R] with the smallest-|.| tie rule
        ok = True
        am = abs(m - z)
        for k in range(L, R + 1):
            if S[k] < S[m]:
                ok = False
                break
            if S[k] == S[m] and k != m:
                ak = abs(k - z)
                if ak < am or (ak == am and k < m):
                    ok = False
                    break
        if not ok:
            continue
        if w < best_w or (w == best_w and (am < abs(bm - z) or (am == abs(bm - z) and m < bm))):
            best_w = w
            bl = L
            bm = m
            br = R
    return bl, bm, br


def _depth(pot, L, m, R):
    S = pot.env.potential
    return min(S(L) - S(m), S(R) - S(m)) / pot.log_n


def find_basic_valley(pot: PotentialView, scales: DerivedScales,
                      cap: int | None = None) -> Valley:
    """The narrowest valley containing 0 of depth at least 1 + gamma(n).

    Flanks of a candidate bottom ``m`` follow the sup/inf rules: the nearest
    sites on each side rising ``1 + gamma(n)`` above ``S^n_m``, where on the
    side holding 0 the flank must in addition exceed ``max S^n`` between ``m``
    and 0 by ``gamma(n)``.  Candidates are enumerated on a window around 0
    that doubles until the narrowest one provably fits (every narrower valley
    containing 0 lies inside ``[-w, w]``).  Raises :class:`NotFound` when the
    window cap (default: the environment's) is hit first, or when a fixed
    window holds no candidate.
    """
    d, g = scales.depth_level, scales.gamma_n
    env = pot.env
    cap = env.cap if cap is None else cap
    radius = 32
    while True:
        if env.extendable:
            try:
                env.realize(-radius, radius)
            except WindowExhausted:
                raise NotFound("window cap reached before a valley was confirmed") from None
        lo, hi = env.window
        R = min(radius, hi) if env.extendable else hi
        Lw = max(-radius, lo) if env.extendable else lo
        S = np.ascontiguousarray(env.S[Lw - lo:R - lo + 1])
        l, m, r = _candidates(S, -Lw, pot.log_n, d, g, R - Lw)
        if m >= 0:
            l, m, r = l + Lw, m + Lw, r + Lw
            w = r - l
            if w <= min(-Lw, R) or not env.extendable:
                return Valley(int(l), int(m), int(r), _depth(pot, l, m, r))
        elif not env.extendable:
            raise NotFound("no valley containing 0 of the required depth in the window")
        radius *= 2
        if 2 * radius + 1 > cap:
            raise NotFound("window cap reached before a valley was confirmed")


def valley_clauses(pot: PotentialView, v: Valley, scales: DerivedScales) -> dict[str, bool]:
    """The valley clauses recomputed from raw sums (used by checks and tests)."""
    S = pot.env.potential
    ln = pot.log_n
    seg = np.asarray(pot.raw(v.m_left, v.m_right), float)
    i_m = v.bottom - v.m_left
    i_r = v.m_right - v.m_left
    out = {
        "left_is_max": bool(seg[0] >= seg[:i_m + 1].max()),
        "right_is_max": bool(seg[i_r] >= seg[i_m:].max()),
        "bottom_is_min": bool(seg[i_m] <= seg.min()),
        "contains_0": v.m_left <= 0 <= v.m_right,
        "depth": (min(S(v.m_left), S(v.m_right)) - S(v.bottom)) / ln >= scales.depth_level,
    }
    g = scales.gamma_n
    if v.bottom < 0:
        out["side"] = (S(v.m_right) - max(pot.raw(v.bottom, 0))) / ln >= g
    elif v.bottom > 0:
        out["side"] = (S(v.m_left) - max(pot.raw(0, v.bottom))) / ln >= g
    else:
        out["side"] = True
    return out


# ---------------------------------------------------------------------------
# ordered chopping

def _chop_side(pot: PotentialView, bottom: int, flank: int, side: str, thr: float) -> ChainSide:
    sgn = 1 if side == "right" else -1
    maxima, minima = [flank], [bottom]
    while sgn * (maxima[-1] - bottom) > thr:
        lo, hi = (bottom, maxima[-1]) if side == "right" else (maxima[-1], bottom)
        p = refine(pot, lo, hi, side)
        maxima.append(p.maximizer)
        minima.append(p.minimizer)
    lo, hi = (bottom, maxima[-1]) if side == "right" else (maxima[-1], bottom)
    nxt = refine(pot, lo, hi, side)
    S = pot.env.potential
    ln = pot.log_n
    S_max = np.array([(S(k) - S(bottom)) for k in maxima + [nxt.maximizer]]) / ln
    S_min = np.array([(S(k) - S(bottom)) for k in minima + [nxt.minimizer]]) / ln
    reached = sgn * (flank - bottom) >= thr
    return ChainSide(side, maxima, minima, nxt, S_max, S_min, reached)


def ordered_chopping(pot: PotentialView, valley: Valley, scales: DerivedScales | None = None,
                     threshold: float | None = None, strict: bool = True) -> RefinementChain:
    """Iterated refinement toward the bottom on both sides.

    On the right, ``[m_0, M_i]`` is refined until the first ``i = r`` with
    ``M_r - m_0 <= threshold``; the left side mirrors this.  The default
    threshold is ``l_n * b_n`` (negative values are treated as 0).  The
    construction needs both flanks at least ``threshold`` away from the
    bottom; when that fails ``strict`` raises :class:`ValleyTooNarrow`,
    otherwise the chain is returned with a flag and ``feasible = False``.

    Normalized values in the chain are stored relative to the bottom.
    """
    if threshold is None:
        if scales is None:
            raise ValueError("need scales or an explicit threshold")
        threshold = scales.chop_threshold
    thr = max(float(threshold), 0.0)
    m0 = valley.bottom
    if strict and (valley.m_right - m0 < thr or m0 - valley.m_left < thr):
        raise ValleyTooNarrow(
            f"valley [{valley.m_left}, {valley.m_right}] around {m0} is narrower than "
            f"the chopping threshold {thr:.4g} on at least one side")
    right = _chop_side(pot, m0, valley.m_right, "right", thr)
    left = _chop_side(pot, m0, valley.m_left, "left", thr)
    chain = RefinementChain(valley, right, left, thr)
    for s in (right, left):
        if not s.reached:
            chain.flags.append(f"{s.side} flank closer than the threshold; r = 0 by the stop rule")
    return chain


# ---------------------------------------------------------------------------
# inner barrier

def inner_barrier(pot: PotentialView, bottom: int, scales: DerivedScales,
                  q: float | None = None, cap: int | None = None) -> InnerBarrier:
    """Nearest sites on each side of ``bottom`` rising ``log(q (log n)^gamma)/log n``.

    ``q`` defaults to ``q_n``.  Raises :class:`WindowExhausted` when the level
    is not reached within the cap (or the fixed window).
    """
    log_q = scales.log_q_n if q is None else math.log(q)
    level = (log_q + scales.gamma * scales.log2_n) / scales.log_n
    hi = stopping_time(pot, level, bottom, 1, cap=cap)
    lo = stopping_time(pot, level, bottom, -1, cap=cap)
    if hi is None or lo is None:
        raise WindowExhausted("barrier level not reached inside the window")
    return InnerBarrier(int(lo), int(hi), level)
