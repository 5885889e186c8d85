"""Independent reference computations used by the test-suite.

Linear systems of the birth-death chain are solved by plain Gaussian
elimination in 50-digit arithmetic, so the references do not share any code or
floating-point behaviour with the closed forms under test.
"""

import mpmath
import numpy as np

mpmath.mp.dps = 50


def _solve(alpha_inner, rhs, left, right):
    """x_i - alpha_i x_{i+1} - beta_i x_{i-1} = rhs_i, with given boundary values."""
    m = len(alpha_inner)
    a = [mpmath.mpf(float(v)) for v in alpha_inner]
    sub = [-(1 - v) for v in a]
    sup = [-v for v in a]
    diag = [mpmath.mpf(1)] * m
    r = [mpmath.mpf(v) if not isinstance(v, mpmath.mpf) else v for v in rhs]
    r[0] -= sub[0] * left
    r[-1] -= sup[-1] * right
    for i in range(1, m):
        w = sub[i] / diag[i - 1]
        diag[i] = diag[i] - w * sup[i - 1]
        r[i] = r[i] - w * r[i - 1]
    x = [mpmath.mpf(0)] * m
    x[-1] = r[-1] / diag[-1]
    for i in range(m - 2, -1, -1):
        x[i] = (r[i] - sup[i] * x[i + 1]) / diag[i]
    return x


def harmonic(alpha_inner):
    """P_x[hit right end before left end] on the interior sites."""
    return _solve(alpha_inner, [0.0] * len(alpha_inner), mpmath.mpf(0), mpmath.mpf(1))


def exit_times(alpha_inner):
    return _solve(alpha_inner, [1.0] * len(alpha_inner), mpmath.mpf(0), mpmath.mpf(0))


def exit_second_moments(alpha_inner):
    u = exit_times(alpha_inner)
    return _solve(alpha_inner, [2 * v - 1 for v in u], mpmath.mpf(0), mpmath.mpf(0))


def dense_harmonic(alpha_inner):
    """Same harmonic system, double precision, dense numpy solve."""
    m = len(alpha_inner)
    A = np.eye(m)
    r = np.zeros(m)
    for i, a in enumerate(alpha_inner):
        if i > 0:
            A[i, i - 1] = -(1 - a)
        if i < m - 1:
            A[i, i + 1] = -a
        else:
            r[i] = a
    return np.linalg.solve(A, r)


def brute_refine(S, lo, side, tol=1e-9):
    """Best ordered pair by exhaustive search, with the package's tie rule.

    Right: maximize S[t'] - S[t''] over t' <= t''; among pairs within ``tol``
    of the best drop prefer the minimizer closest to ``lo`` (the segment's
    left end, i.e. the bottom), then the maximizer closest to it.  Left
    mirrors with ``hi`` as the bottom.  Indices are returned as absolute
    sites (``S[k]`` is site ``lo + k``).
    """
    S = np.asarray(S, float)
    m = len(S)
    pairs = []
    for i in range(m):
        for j in range(i, m):
            if side == "right":
                pairs.append((S[i] - S[j], (j, i), i, j))
            else:
                pairs.append((S[j] - S[i], (-i, -j), i, j))
    top = max(p[0] for p in pairs)
    drop, _, i, j = min((p for p in pairs if p[0] >= top - tol), key=lambda p: p[1])
    if side == "right":
        return lo + i, lo + j, drop  # maximizer, minimizer
    return lo + j, lo + i, drop


def basic_valley(S, lo, log_n, depth, g):
    """Narrowest valley containing 0 of the required depth, by direct search.

    For every bottom ``m`` the left flank is the largest ``p <= min(m - 1, 0)``
    that is the maximum of ``S[p..m]``, rises ``depth`` above ``m`` and, when
    ``m > 0``, exceeds ``max S[0..m]`` by ``g``; the right flank mirrors this.
    ``m`` must be the minimum of ``S[p..q]`` (ties: smaller ``|.|``, then the
    negative site).  The narrowest triplet wins, ties by ``(|m|, m)``.
    Returns absolute ``(p, m, q)`` or ``None``.
    """
    S = np.asarray(S, float) / log_n
    N = len(S)
    z = -lo
    best = None
    for m in range(N):
        # left flank
        hi_p = min(m - 1, z)
        if hi_p < 0:
            continue
        seg = S[:m + 1]
        suffix_max = np.maximum.accumulate(seg[::-1])[::-1]  # max S[p..m]
        ps = np.arange(hi_p + 1)
        ok = (seg[ps] >= suffix_max[ps]) & (seg[ps] - S[m] >= depth)
        if m > z:
            ok &= seg[ps] - S[z:m + 1].max() >= g
        if not ok.any():
            continue
        p = int(ps[ok].max())
        lo_q = max(m + 1, z)
        if lo_q >= N:
            continue
        seg = S[m:]
        prefix_max = np.maximum.accumulate(seg)  # max S[m..q]
        qs = np.arange(lo_q, N)
        ok = (S[qs] >= prefix_max[qs - m]) & (S[qs] - S[m] >= depth)
        if m < z:
            ok &= S[qs] - S[m:z + 1].max() >= g
        if not ok.any():
            continue
        q = int(qs[ok].min())
        span = S[p:q + 1]
        if span.min() < S[m]:
            continue
        ties = [k + p for k in np.flatnonzero(span == S[m])]
        if min(ties, key=lambda k: (abs(k - z), k)) != m:
            continue
        key = (q - p, abs(m - z), m)
        if best is None or key < best[0]:
            best = (key, (p + lo, m + lo, q + lo))
    return None if best is None else best[1]
