"""Random environments, the random potential and the n-dependent scales.

An environment is the two-sided i.i.d. sequence ``alpha_i`` in (0, 1); the walk
steps right from ``i`` with probability ``alpha_i`` and left with
``beta_i = 1 - alpha_i``.  With ``eps_i = log(beta_i / alpha_i)`` the potential
is the lattice function with ``S_0 = 0`` and ``S_k - S_{k-1} = eps_k`` for
every ``k``, so that ``S_j - S_l`` is the log of the product of
``beta/alpha`` over ``l < i <= j``.  All logarithms are natural; "log2 n" and
"log3 n" below are the iterated logarithms ``log log n`` and
``log log log n``, never base-2 logarithms.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from scipy import integrate

from .errors import HorizonTooSmall, InvalidSpec, OutOfWindow, WindowExhausted
from .rng import ENV_STREAM, derive_key, nb_uniform

TABLE_MEAN_TOL = 1e-12
DEFAULT_CAP = 1 << 26

FAMILIES = ("twopoint", "uniform", "table")


@dataclass(frozen=True)
class MomentReport:
    sigma2: float
    abs3: float
    m4: float
    # support of eps (values, weights) for tables; None for the uniform family
    _table: tuple | None = field(default=None, repr=False, compare=False)
    _c: float | None = field(default=None, repr=False, compare=False)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def exp_moment(self, kappa: float) -> float:
        """C(kappa) = max(E[exp(kappa eps)], E[exp(-kappa eps)])."""
        if self._table is not None:
            eps, w = self._table
            return max(float(np.sum(w * np.exp(kappa * eps))),
                       float(np.sum(w * np.exp(-kappa * eps))))
        c = self._c
        f = lambda a: math.exp(kappa * math.log((1 - a) / a))
        val = integrate.quad(f, c, 1 - c, epsabs=0, epsrel=1e-13, limit=200)[0]
        return val / (1 - 2 * c)  # symmetric law: both exponential moments agree


@dataclass(frozen=True)
class DistSpec:
    """Law of ``alpha_0``.

    ``twopoint`` with ``params=(p,)``: alpha in {p, 1-p}, probability 1/2 each.
    ``uniform`` with ``params=(c,)``: alpha uniform on (c, 1-c).
    ``table`` with ``params=(values, weights)``: discrete law, validated to
    have ``|E eps| <= 1e-12``.
    """

    family: str
    params: tuple

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidSpec(f"unknown family {self.family!r}")
        if self.family == "twopoint":
            (p,) = self.params
            if not 0 < p < 1:
                raise InvalidSpec("twopoint p must lie in (0, 1)")
            if p == 0.5:
                raise InvalidSpec("twopoint p = 1/2 gives sigma^2 = 0 (simple random walk)")
        elif self.family == "uniform":
            (c,) = self.params
            if not 0 < c < 0.5:
                raise InvalidSpec("uniform c must lie in (0, 1/2)")
        else:
            values, weights = self.params
            values = np.asarray(values, float)
            weights = np.asarray(weights, float)
            if values.shape != weights.shape or values.ndim != 1 or values.size == 0:
                raise InvalidSpec("table values and weights must be equal-length 1-d")
            if np.any(values <= 0) or np.any(values >= 1):
                raise InvalidSpec("table values must lie in (0, 1)")
            if np.any(weights <= 0):
                raise InvalidSpec("table weights must be positive")
            if abs(weights.sum() - 1.0) > 1e-12:
                raise InvalidSpec("table weights must sum to 1")
            eps = np.log((1 - values) / values)
            mean = math.fsum(weights * eps)
            if abs(mean) > TABLE_MEAN_TOL:
                raise InvalidSpec(f"table has E[eps] = {mean:.3e}, not 0")
            if math.fsum(weights * eps**2) <= 0:
                raise InvalidSpec("table has sigma^2 = 0")
            object.__setattr__(self, "params", (tuple(values.tolist()), tuple(weights.tolist())))

    @classmethod
    def two_point(cls, p: float) -> "DistSpec":
        return cls("twopoint", (float(p),))

    @classmethod
    def symmetric_uniform(cls, c: float) -> "DistSpec":
        return cls("uniform", (float(c),))

    @classmethod
    def discrete_table(cls, values, weights) -> "DistSpec":
        return cls("table", (tuple(values), tuple(weights)))

    @classmethod
    def parse(cls, text: str) -> "DistSpec":
        """Parse ``twopoint:0.3``, ``uniform:0.2`` or ``table:0.3,0.7:0.5,0.5``."""
        name, _, rest = text.partition(":")
        name = name.strip().lower()
        try:
            if name == "twopoint":
                return cls.two_point(float(rest))
            if name == "uniform":
                return cls.symmetric_uniform(float(rest))
            if name == "table":
                vals, _, wts = rest.partition(":")
                return cls.discrete_table([float(v) for v in vals.split(",")],
                                          [float(w) for w in wts.split(",")])
        except ValueError as exc:
            raise InvalidSpec(f"cannot parse distribution {text!r}: {exc}") from exc
        raise InvalidSpec(f"unknown distribution {text!r}")

    def to_dict(self) -> dict:
        if self.family == "table":
            return {"family": "table", "params": {"values": list(self.params[0]),
                                                  "weights": list(self.params[1])}}
        key = "p" if self.family == "twopoint" else "c"
        return {"family": self.family, "params": {key: self.params[0]}}

    @classmethod
    def from_dict(cls, d: dict) -> "DistSpec":
        fam, p = d["family"], d["params"]
        if fam == "twopoint":
            return cls.two_point(p["p"])
        if fam == "uniform":
            return cls.symmetric_uniform(p["c"])
        if fam == "table":
            return cls.discrete_table(p["values"], p["weights"])
        raise InvalidSpec(f"unknown family {fam!r}")

    def label(self) -> str:
        if self.family == "table":
            v, w = self.params
            return "table:" + ",".join(map(repr, v)) + ":" + ",".join(map(repr, w))
        return f"{self.family}:{self.params[0]!r}"

    # -- sampling tables -------------------------------------------------

    def _categorical(self):
        """(alpha values, eps values, cumulative weights) or None for uniform."""
        if self.family == "twopoint":
            p = self.params[0]
            vals = np.array([p, 1.0 - p])
            cum = np.array([0.5, 1.0])
        elif self.family == "table":
            vals = np.array(self.params[0])
            cum = np.cumsum(self.params[1])
            cum[-1] = 1.0
        else:
            return None
        eps = np.log((1.0 - vals) / vals)
        if self.family == "twopoint":
            eps[1] = -eps[0]  # exactly symmetric, so the potential lives on e * Z
        return vals, eps, cum

    @property
    def lattice_unit(self) -> float | None:
        """Step ``e`` when every eps is ``+e`` or ``-e`` (two-point law), else None.

        Potentials of such laws are stored as ``e * (integer walk)``, so equal
        heights compare equal exactly and tie rules act on genuine ties.
        """
        if self.family != "twopoint":
            return None
        p = self.params[0]
        return abs(math.log((1.0 - p) / p))

    def moments(self) -> MomentReport:
        cat = self._categorical()
        if cat is not None:
            vals, eps, _ = cat
            w = (np.array([0.5, 0.5]) if self.family == "twopoint"
                 else np.array(self.params[1]))
            return MomentReport(
                sigma2=math.fsum(w * eps**2),
                abs3=math.fsum(w * np.abs(eps) ** 3),
                m4=math.fsum(w * eps**4),
                _table=(eps, w),
            )
        c = self.params[0]

        def moment(k, absval=False):
            def f(a):
                e = math.log((1 - a) / a)
                return abs(e) ** k if absval else e**k
            # integrand is symmetric about 1/2
            half = integrate.quad(f, c, 0.5, epsabs=0, epsrel=1e-13, limit=200)[0]
            return 2 * half / (1 - 2 * c)

        return MomentReport(sigma2=moment(2), abs3=moment(3, True), m4=moment(4), _c=c)


@nb.njit(cache=True)
def _realize_table(key, lo, hi, vals, eps_vals, cum):
    n = hi - lo + 1
    alpha = np.empty(n)
    eps = np.empty(n)
    k = np.uint64(key)
    for j in range(n):
        u = nb_uniform(k, np.int64(lo + j))
        idx = np.searchsorted(cum, u, side="right")
        if idx >= vals.shape[0]:
            idx = vals.shape[0] - 1
        alpha[j] = vals[idx]
        eps[j] = eps_vals[idx]
    return alpha, eps


@nb.njit(cache=True)
def _realize_uniform(key, lo, hi, c):
    n = hi - lo + 1
    alpha = np.empty(n)
    eps = np.empty(n)
    k = np.uint64(key)
    for j in range(n):
        u = nb_uniform(k, np.int64(lo + j))
        a = c + (1.0 - 2.0 * c) * u
        alpha[j] = a
        eps[j] = math.log((1.0 - a) / a)
    return alpha, eps


def _prefix(eps: np.ndarray, lo: int) -> np.ndarray:
    """Potential on [lo, lo+len-1] given eps there; lo <= 0 <= hi required."""
    S = np.empty_like(eps)
    z = -lo
    S[z] = 0.0
    if z + 1 < len(eps):
        S[z + 1:] = np.cumsum(eps[z + 1:])
    if z > 0:
        # S_{k-1} = S_k - eps_k, accumulated outward from 0
        S[:z] = -np.cumsum(eps[z:0:-1])[::-1]
    return S


class Environment:
    """A realized window of the two-sided environment.

    Values at index ``i`` are a pure function of ``(spec, seed, i)``; growing
    the window never changes values already realized.  Stub environments built
    with :meth:`from_alphas` are fixed windows and cannot grow.
    """

    def __init__(self, spec: DistSpec | None, seed: int, lo: int, hi: int,
                 cap: int = DEFAULT_CAP):
        if not lo <= 0 <= hi:
            raise ValueError("window must contain 0")
        self.spec = spec
        self.seed = int(seed)
        self.cap = int(cap)
        self.extendable = spec is not None
        self.moments = spec.moments() if spec is not None else None
        self._key = derive_key(ENV_STREAM, self.seed)
        self._cat = spec._categorical() if spec is not None else None
        self.lo = self.hi = 0
        self.alpha = self.eps = self.S = None
        if spec is not None:
            self._fill(lo, hi)

    # -- construction ----------------------------------------------------

    @classmethod
    def from_alphas(cls, alphas, lo: int = 0, allow_degenerate: bool = False,
                    sigma2: float | None = None) -> "Environment":
        """Fixed-window environment from explicit ``alpha`` values (tests, stubs).

        ``allow_degenerate`` permits alpha in {0, 1}, which the walk handles but
        the potential does not (it becomes infinite).
        """
        a = np.asarray(alphas, float).copy()
        hi = lo + len(a) - 1
        if not lo <= 0 <= hi:
            raise ValueError("window must contain 0")
        bad = (a < 0) | (a > 1) if allow_degenerate else (a <= 0) | (a >= 1)
        if np.any(bad):
            raise InvalidSpec("alpha values out of range")
        env = cls.__new__(cls)
        env.spec = None
        env.seed = 0
        env.cap = len(a)
        env.extendable = False
        env._key = 0
        env._cat = None
        env.lo, env.hi = lo, hi
        env.alpha = a
        with np.errstate(divide="ignore"):
            env.eps = np.log((1 - a) / a)
        env.S = _prefix(env.eps, lo)
        if sigma2 is None:
            finite = env.eps[np.isfinite(env.eps)]
            sigma2 = float(np.mean(finite**2)) if finite.size else 0.0
        env.moments = MomentReport(sigma2=sigma2, abs3=float("nan"), m4=float("nan"))
        return env

    @classmethod
    def from_eps(cls, eps, lo: int = 0, sigma2: float | None = None) -> "Environment":
        """Fixed-window environment from explicit ``eps`` values."""
        eps = np.asarray(eps, float)
        return cls.from_alphas(1.0 / (1.0 + np.exp(eps)), lo=lo, sigma2=sigma2)

    @classmethod
    def from_potential(cls, S, lo: int = 0, sigma2: float | None = None) -> "Environment":
        """Fixed-window environment whose potential on [lo, lo+len-1] is ``S``.

        ``S`` must vanish at index 0.  The increment into the leftmost site is
        taken to be zero.
        """
        S = np.asarray(S, float)
        if S[-lo] != 0.0:
            raise ValueError("potential must vanish at 0")
        eps = np.empty_like(S)
        eps[0] = 0.0
        eps[1:] = np.diff(S)
        env = cls.from_eps(eps, lo=lo, sigma2=sigma2)
        env.S = S.copy()  # keep the exact values given
        return env

    def _fill(self, lo: int, hi: int):
        if self._cat is not None:
            vals, ev, cum = self._cat
            a, e = _realize_table(np.uint64(self._key), lo, hi, vals, ev, cum)
        else:
            a, e = _realize_uniform(np.uint64(self._key), lo, hi, self.spec.params[0])
        self.lo, self.hi = lo, hi
        self.alpha, self.eps = a, e
        unit = self.spec.lattice_unit
        if unit is None:
            self.S = _prefix(e, lo)
        else:
            self.S = _prefix(np.sign(e), lo) * unit  # integer walk, exact in float

    def realize(self, lo: int, hi: int) -> "Environment":
        """Make sure [lo, hi] is realized, growing the window geometrically."""
        lo, hi = min(lo, 0), max(hi, 0)
        if lo >= self.lo and hi <= self.hi:
            return self
        if not self.extendable:
            raise OutOfWindow(f"[{lo}, {hi}] outside fixed window [{self.lo}, {self.hi}]")
        new_lo, new_hi = self.lo, self.hi
        while new_lo > lo:
            new_lo = 2 * new_lo - 1
        while new_hi < hi:
            new_hi = 2 * new_hi + 1
        if new_hi - new_lo + 1 > self.cap:
            raise WindowExhausted(f"window [{new_lo}, {new_hi}] exceeds cap {self.cap}")
        self._fill(new_lo, new_hi)
        return self

    # -- access ----------------------------------------------------------

    @property
    def window(self) -> tuple[int, int]:
        return self.lo, self.hi

    @property
    def sigma2(self) -> float:
        return self.moments.sigma2

    def _check(self, lo, hi, extend):
        if lo < self.lo or hi > self.hi:
            if extend and self.extendable:
                self.realize(lo, hi)
            else:
                raise OutOfWindow(f"[{lo}, {hi}] outside window [{self.lo}, {self.hi}]")

    def alpha_at(self, i: int, extend: bool = True) -> float:
        self._check(i, i, extend)
        return float(self.alpha[i - self.lo])

    def alphas(self, lo: int, hi: int, extend: bool = True) -> np.ndarray:
        self._check(lo, hi, extend)
        return self.alpha[lo - self.lo:hi - self.lo + 1]

    def potentials(self, lo: int, hi: int, extend: bool = True) -> np.ndarray:
        self._check(lo, hi, extend)
        return self.S[lo - self.lo:hi - self.lo + 1]

    def potential(self, k: int, extend: bool = True) -> float:
        self._check(k, k, extend)
        return float(self.S[k - self.lo])

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        if self.spec is None:
            return {"family": "stub", "lo": self.lo, "alphas": self.alpha.tolist()}
        d = self.spec.to_dict()
        d.update(seed=self.seed, window=[self.lo, self.hi])
        return d

    @classmethod
    def from_dict(cls, d: dict, cap: int = DEFAULT_CAP) -> "Environment":
        if d["family"] == "stub":
            return cls.from_alphas(d["alphas"], lo=d["lo"])
        lo, hi = d["window"]
        return cls(DistSpec.from_dict(d), d["seed"], lo, hi, cap=cap)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    @classmethod
    def load(cls, path, cap: int = DEFAULT_CAP) -> "Environment":
        with open(path) as fh:
            return cls.from_dict(json.load(fh), cap=cap)


def build_environment(spec: DistSpec, seed: int, window: tuple[int, int],
                      cap: int = DEFAULT_CAP) -> Environment:
    """Realize ``spec`` with ``seed`` on ``window`` (which must contain 0)."""
    lo, hi = window
    return Environment(spec, seed, lo, hi, cap=cap)


def potential(env: Environment, k: int, extend: bool = True) -> float:
    """Raw potential S_k (S_0 = 0)."""
    return env.potential(k, extend=extend)


class PotentialView:
    """The potential of ``env`` seen at horizon ``n``: S^n_k = S_k / log n."""

    def __init__(self, env: Environment, n: float):
        if n <= 3:
            raise HorizonTooSmall("n must exceed 3")
        self.env = env
        self.n = n
        self.log_n = math.log(n)

    def S(self, k: int) -> float:
        return self.env.potential(k)

    def Sn(self, k: int) -> float:
        return self.env.potential(k) / self.log_n

    def raw(self, lo: int, hi: int) -> np.ndarray:
        return self.env.potentials(lo, hi)

    def normalized(self, lo: int, hi: int) -> np.ndarray:
        return self.env.potentials(lo, hi) / self.log_n

    def ensure(self, lo: int, hi: int):
        self.env._check(lo, hi, True)


@dataclass(frozen=True)
class DerivedScales:
    n: float
    gamma: float
    kappa: float
    sigma2: float
    D: float
    log_n: float
    log2_n: float
    log3_n: float
    gamma_n: float
    b_n: int
    k_n: float
    l_n: float
    log_q_n: float
    L_n: float
    gamma0: float
    Gamma: float
    extent: float
    r_max: float

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    @property
    def depth_level(self) -> float:
        """1 + gamma(n), the normalized depth a basic valley must reach."""
        return 1.0 + self.gamma_n

    @property
    def q_n(self) -> float:
        try:
            return math.exp(self.log_q_n)
        except OverflowError:
            return math.inf

    @property
    def chop_threshold(self) -> float:
        """l_n * b_n, the distance from the bottom at which chopping stops."""
        return self.l_n * self.b_n

    @property
    def barrier_level(self) -> float:
        """log(q_n (log n)^gamma) / log n."""
        return (self.log_q_n + self.gamma * self.log2_n) / self.log_n


def derived_scales(n: float, gamma: float, kappa: float, sigma2: float,
                   D: float = 1000.0) -> DerivedScales:
    """All n-dependent quantities used by the valley construction and the bounds."""
    if gamma <= 0 or kappa <= 0 or sigma2 <= 0:
        raise ValueError("gamma, kappa and sigma2 must be positive")
    if n <= math.e ** math.e:
        raise HorizonTooSmall(f"need n > e^e so that log3 n > 0, got {n}")
    return _scales_from_log(math.log(n), n, gamma, kappa, sigma2, D)


def scales_from_log(log_n: float, gamma: float, kappa: float, sigma2: float,
                    D: float = 1000.0) -> DerivedScales:
    """Same as :func:`derived_scales` but parameterized by ``log n`` (for huge n)."""
    if log_n <= math.e:
        raise HorizonTooSmall("need log n > e")
    try:
        n = math.exp(log_n)
    except OverflowError:
        n = math.inf
    return _scales_from_log(log_n, n, gamma, kappa, sigma2, D)


def _scales_from_log(l1, n, gamma, kappa, sigma2, D):
    l2 = math.log(l1)
    l3 = math.log(l2)
    sigma = math.sqrt(sigma2)
    extent = (l1 / sigma) ** 2 * l2
    b_n = math.floor(math.sqrt(gamma) * (l1 * l2) ** 1.5)
    k_n = extent / b_n
    l_n = D * sigma2 * math.log(k_n)
    log_q = math.sqrt((200 * sigma) ** 2 * gamma * l2**3.5 * l1**1.5)
    L_n = (8 * (gamma * l2 + log_q) / sigma) ** 2 * l2
    return DerivedScales(
        n=n, gamma=gamma, kappa=kappa, sigma2=sigma2, D=D,
        log_n=l1, log2_n=l2, log3_n=l3,
        gamma_n=gamma * l2 / l1,
        b_n=b_n, k_n=k_n, l_n=l_n, log_q_n=log_q, L_n=L_n,
        gamma0=12.0 / kappa + 10.5,
        Gamma=1600.0**2,
        extent=extent,
        r_max=2 * math.sqrt(l1) / math.sqrt(gamma * l2),
    )


# ---------------------------------------------------------------------------
# streaming scans far beyond the realized window

@nb.njit(cache=True)
def _stream_up_table(key, start, step, level_raw, max_sites, eps_vals, cum, unit):
    k = np.uint64(key)
    last = eps_vals.shape[0] - 1
    diff = 0.0
    walk = 0  # integer heights for lattice laws (unit > 0)
    for s in range(1, max_sites + 1):
        i = start + step * s
        j = i if step > 0 else i + 1  # increment between the two sites
        u = nb_uniform(k, np.int64(j))
        idx = 0
        for t in range(last):  # branch-free category lookup
            idx += u >= cum[t]
        if unit > 0.0:
            walk += (1 if eps_vals[idx] > 0 else -1) * step
            diff = walk * unit
        else:
            diff += eps_vals[idx] * step
        if diff >= level_raw:
            return i
    return start  # sentinel: not reached


@nb.njit(cache=True)
def _stream_up_uniform(key, start, step, level_raw, max_sites, c):
    k = np.uint64(key)
    diff = 0.0
    for s in range(1, max_sites + 1):
        i = start + step * s
        j = i if step > 0 else i + 1
        u = nb_uniform(k, np.int64(j))
        a = c + (1.0 - 2.0 * c) * u
        diff += math.log((1.0 - a) / a) * step
        if diff >= level_raw:
            return i
    return start


def stream_rise(env: Environment, start: int, direction: int, level_raw: float,
                max_sites: int) -> int | None:
    """First site beyond ``start`` where ``S - S_start >= level_raw``, scanning at
    most ``max_sites`` sites, without realizing them.

    Only for sampled environments; differences are accumulated from ``start``
    outward, which can differ from window prefix sums in the last bits.
    """
    if not env.extendable:
        raise ValueError("streaming needs a sampled environment")
    key = np.uint64(env._key)
    if env._cat is not None:
        _, ev, cum = env._cat
        unit = env.spec.lattice_unit or 0.0
        k = _stream_up_table(key, start, direction, level_raw, max_sites, ev, cum, unit)
    else:
        k = _stream_up_uniform(key, start, direction, level_raw, max_sites, env.spec.params[0])
    return None if k == start else int(k)
