"""Exact quenched computations for the nearest-neighbour chain.

Everything here is a closed-form sum of weights ``F(j, l) = exp(S_j - S_l)``
(the same quantity as ``n^(S^n_j - S^n_l)``; the horizon cancels), evaluated in
log space.  A tridiagonal solver backs up the one formula that subtracts two
large quantities.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba as nb
import numpy as np

from .env import DerivedScales, PotentialView
from .errors import BadInterval, GammaTooSmall, LevelOutOfRange, PrecisionLoss
from .logscalar import LogScalar, logcumsumexp, logsumexp

CANCEL_DIGITS = 6.0


# ---------------------------------------------------------------------------
# local views

def _local(pot: PotentialView, a: int, b: int, side: str = "right"):
    """(alpha, S) on sites a..b, relabelled 0..b-a; ``side='left'`` mirrors.

    Mirroring maps site j to a+b-j and swaps alpha with beta, which negates and
    reverses the increments of the potential (with a shift of one site, since
    eps_k sits between S_{k-1} and S_k).  Differences of the stored
    potential are used rather than re-summed increments, so callers comparing
    against ``S`` see the same numbers.
    """
    alpha = np.array(pot.env.alphas(a, b), float)
    raw = np.array(pot.env.potentials(a, b), float)
    if side == "left":
        # mirrored increments eps'_k = -eps_{b-k}, so S'_k = S_{b-1-k} - S_{b-1};
        # the last value needs eps_a, the increment into the left end
        alpha = 1.0 - alpha[::-1]
        S = np.empty_like(raw)
        S[:-1] = raw[-2::-1] - raw[-2]
        S[-1] = S[-2] - float(pot.env.eps[a - pot.env.lo])
    else:
        S = raw - raw[0]
    return alpha, S


# ---------------------------------------------------------------------------
# exit probabilities

def _exit_prob_local(S, x):
    b = len(S) - 1
    # P[T_a > T_b]: weights relative to the left end
    rel_a = S[1:b] - S[0]
    num_b = LogScalar.sum(np.concatenate(([0.0], rel_a[:x - 1])))
    den_b = LogScalar.sum(np.concatenate(([0.0], rel_a)))
    # P[T_a < T_b]: weights relative to the last interior site
    rel_b = S[0:b - 1] - S[b - 1]
    num_a = LogScalar.sum(np.concatenate(([0.0], rel_b[x:])))
    den_a = LogScalar.sum(np.concatenate(([0.0], rel_b)))
    return float(num_b / den_b), float(num_a / den_a)


def exit_prob(pot: PotentialView, a: int, x: int, b: int,
              clamp: bool = True) -> tuple[float, float]:
    """Exit probabilities from ``x`` for the interval (a, b).

    Returns ``(P_x[T_b < T_a], P_x[T_a < T_b])``, each computed from its own
    closed form so their sum is a genuine consistency check.
    """
    if not a < x < b:
        raise BadInterval(f"need a < x < b, got {a}, {x}, {b}")
    _, S = _local(pot, a, b)
    pb, pa = _exit_prob_local(S, x - a)
    if clamp:
        pb, pa = min(max(pb, 0.0), 1.0), min(max(pa, 0.0), 1.0)
    return pb, pa


# ---------------------------------------------------------------------------
# expected exit times

@nb.njit(cache=True)
def _tridiag(alpha, rhs, left, right):
    """Solve x_i - alpha_i x_{i+1} - (1-alpha_i) x_{i-1} = rhs_i on interior sites.

    ``alpha`` and ``rhs`` cover the interior only; ``left``/``right`` are the
    boundary values.  Thomas elimination, O(len).
    """
    m = alpha.shape[0]
    cp = np.empty(m)
    dp = np.empty(m)
    prev_c = 0.0
    prev_d = 0.0
    for i in range(m):
        sub = -(1.0 - alpha[i])
        sup = -alpha[i]
        r = rhs[i]
        if i == 0:
            r -= sub * left
            sub = 0.0
        if i == m - 1:
            r -= sup * right
            sup = 0.0
        denom = 1.0 - sub * prev_c
        prev_c = sup / denom
        prev_d = (r - sub * prev_d) / denom
        cp[i] = prev_c
        dp[i] = prev_d
    out = np.empty(m)
    out[m - 1] = dp[m - 1]
    for i in range(m - 2, -1, -1):
        out[i] = dp[i] - cp[i] * out[i + 1]
    return out


def solve_exit_times(alpha_interior: np.ndarray) -> np.ndarray:
    """Direct solve of u_i = 1 + alpha_i u_{i+1} + beta_i u_{i-1}, zero at both ends."""
    a = np.asarray(alpha_interior, float)
    return _tridiag(a, np.ones(len(a)), 0.0, 0.0)


def _exit_times_local(alpha, S, warn=True):
    """u(x) for every interior x of the local interval, formula first.

    u(a+1) = B(b) / P(b) and u(x) = u(a+1) P(x) - B(x), where
    P(x) = sum_{a <= j < x} F(j, a) and
    B(x) = sum_{a < l <= j < x} F(j, l) / alpha_l.
    """
    b = len(S) - 1
    inner = np.arange(1, b)
    # log P(x) for x = a+1..b
    logP = logcumsumexp(S[0:b] - S[0])
    # log W_j = log sum_{a < l <= j} exp(-S_l)/alpha_l ; log B(x) for x = a+2..b
    logW = logcumsumexp(-S[inner] - np.log(alpha[inner]))
    logB_tail = logcumsumexp(S[inner] + logW)
    logB = np.concatenate(([-math.inf], logB_tail))  # index x-a-1 -> B(x), x=a+1..b
    log_u1 = logB[b - 1] - logP[b - 1]
    u = np.empty(b - 1)
    worst = 0.0
    for k, x in enumerate(inner):
        A = LogScalar(log_u1 + logP[x - 1])
        val, digits = A.sub(LogScalar(min(logB[x - 1], A.log)))
        worst = max(worst, digits)
        u[k] = float(val)
    if worst > CANCEL_DIGITS:
        if warn:
            warnings.warn(f"closed-form exit time cancelled {worst:.1f} digits; "
                          "using the tridiagonal solve", PrecisionLoss, stacklevel=3)
        u = solve_exit_times(alpha[1:b])
    return u


def expected_exit_time(pot: PotentialView, a: int, x: int, b: int,
                       warn: bool = True) -> float:
    """E_x[T_a ^ T_b] for a < x < b."""
    if not a < x < b:
        raise BadInterval(f"need a < x < b, got {a}, {x}, {b}")
    alpha, S = _local(pot, a, b)
    return float(_exit_times_local(alpha, S, warn=warn)[x - a - 1])


def expected_exit_times(pot: PotentialView, a: int, b: int, warn: bool = True) -> np.ndarray:
    """Vector of E_x[T_a ^ T_b] for x = a+1..b-1."""
    if b - a < 2:
        raise BadInterval("interval has no interior site")
    alpha, S = _local(pot, a, b)
    return _exit_times_local(alpha, S, warn=warn)


# ---------------------------------------------------------------------------
# second moment

def _second_moment_local(alpha, S, warn=True):
    """E_{a+1}[(T_a ^ T_b)^2] from the exit-time vector.

    The second moment solves the same difference equation as the first with
    source 2u - 1 instead of 1, so the a+1 formula applies with that weight.
    """
    b = len(S) - 1
    u = _exit_times_local(alpha, S, warn=warn)
    inner = np.arange(1, b)
    # log sum_{j=l}^{b-1} exp(S_j - S_l)
    suffix = logcumsumexp(S[inner][::-1])[::-1] - S[inner]
    terms = np.log(2.0 * u - 1.0) - np.log(alpha[inner]) + suffix
    num = LogScalar(logsumexp(terms))
    den = LogScalar(logsumexp(S[0:b] - S[0]))
    return float(num / den)


def second_moment_exit_adjacent(pot: PotentialView, bottom: int, top: int,
                                side: str = "right", warn: bool = True) -> float:
    """Second moment of the exit time started next to ``bottom``.

    ``side='right'``: start at bottom+1, exit at bottom or top+1 (top > bottom).
    ``side='left'``: start at bottom-1, exit at bottom or top-1 (top < bottom).
    """
    if side == "right":
        if top < bottom + 1:
            raise BadInterval("right side needs top >= bottom + 1")
        alpha, S = _local(pot, bottom, top + 1)
    elif side == "left":
        if top > bottom - 1:
            raise BadInterval("left side needs top <= bottom - 1")
        alpha, S = _local(pot, top - 1, bottom, side="left")
    else:
        raise ValueError("side must be 'right' or 'left'")
    return _second_moment_local(alpha, S, warn=warn)


# ---------------------------------------------------------------------------
# bounds

@dataclass(frozen=True)
class TailBoundInputs:
    level: int
    side: str
    D: float  # |M_i - m0|^5 (max 1/alpha or 1/beta)^2
    delta_next: float  # delta_{i+1,i+1}
    eta: float  # eta_{i,i+1}
    delta_i0: float  # delta_{i,0}

    @property
    def exponent(self) -> float:
        """(delta_{i+1,i+1} - eta_{i,i+1}) v 0."""
        return max(self.delta_next - self.eta, 0.0)


def tail_bound_inputs(pot: PotentialView, chain, side: str = "right") -> list[TailBoundInputs]:
    """Per-level inputs of the return-time tail bound, levels 0..r (or 0..r')."""
    m0 = chain.bottom
    sd = chain.right if side == "right" else chain.left
    out = []
    for i in range(sd.r + 1):
        Mi = sd.maxima[i]
        if side == "right":
            worst = float(np.max(1.0 / pot.env.alphas(m0, Mi)))
        else:
            worst = float(np.max(1.0 / (1.0 - pot.env.alphas(Mi, m0))))
        out.append(TailBoundInputs(
            level=i, side=side,
            D=abs(Mi - m0) ** 5 * worst**2,
            delta_next=sd.delta(i + 1, i + 1),
            eta=sd.eta(i, i + 1),
            delta_i0=sd.delta(i, 0),
        ))
    return out


def return_tail_bound(inputs: TailBoundInputs, n: float, q: float) -> float:
    """D_i n^((delta_{i+1,i+1} - eta_{i,i+1}) v 0) q^-2 + n^(-delta_{i,0}).

    A bound on P[T > q] for the return to the bottom started next to it; it is
    not a probability and may exceed 1.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    log_n = math.log(n)
    first = LogScalar(math.log(inputs.D) + log_n * inputs.exponent - 2 * math.log(q)) \
        if inputs.D > 0 else LogScalar()
    second = LogScalar(-log_n * inputs.delta_i0)
    return float(first + second)


def level_bound(pot: PotentialView, chain, level: int, q: float, side: str = "right") -> float:
    """Convenience wrapper: bound at one level straight from a chain."""
    inputs = tail_bound_inputs(pot, chain, side)
    if not 0 <= level < len(inputs):
        raise LevelOutOfRange(f"level {level} outside 0..{len(inputs) - 1}")
    return return_tail_bound(inputs[level], pot.n, q)


def second_moment_bound(inputs: TailBoundInputs, n: float) -> float:
    """D_i n^((delta_{i+1,i+1} - eta_{i,i+1}) v 0), the claimed second-moment cap."""
    return float(LogScalar(math.log(inputs.D) + math.log(n) * inputs.exponent))


@dataclass(frozen=True)
class TheoremBounds:
    containment: float
    localization: float | None
    half_width: float  # in m0 units, i.e. lattice sites divided by (log n)^2
    half_width_sites: float
    last_return: float | None  # leading term only; the O(.) remainder is unspecified


def theorem_bounds(scales: DerivedScales, require_localization: bool = False) -> TheoremBounds:
    """Right-hand sides of the containment and localization statements.

    containment: 2 log2 n / (sigma^2 (log n)^(gamma-2)), needs gamma > 2;
    localization: 4 (log2 n)^(9/2) / (sigma^10 (gamma log n)^(gamma-gamma0)),
    needs gamma > gamma0 (``None`` otherwise unless ``require_localization``);
    half width Gamma gamma (log2 n)^(9/2) (log n)^(-1/2) in m0 units;
    last return (no visit to the bottom in the final q_n steps), leading
    term 2 (log2 n)^(9/2) / (gamma^(1/2) (log n)^(gamma-gamma0)), also only
    for gamma > gamma0.
    """
    g, s2, l1, l2 = scales.gamma, scales.sigma2, scales.log_n, scales.log2_n
    if g <= 2:
        raise GammaTooSmall("containment", g, 2)
    contain = 2 * l2 / (s2 * l1 ** (g - 2))
    if g > scales.gamma0:
        loc = 4 * l2**4.5 / (s2**5 * (g * l1) ** (g - scales.gamma0))
        last = 2 * l2**4.5 / (math.sqrt(g) * l1 ** (g - scales.gamma0))
    elif require_localization:
        raise GammaTooSmall("localization", g, scales.gamma0)
    else:
        loc = last = None
    half = scales.Gamma * g * l2**4.5 / math.sqrt(l1)
    return TheoremBounds(containment=contain, localization=loc, half_width=half,
                         half_width_sites=half * l1 * l1, last_return=last)
