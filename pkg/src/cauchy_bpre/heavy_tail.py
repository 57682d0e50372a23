"""Mean-zero step laws in the Cauchy domain of attraction.

A :class:`StepLaw` has *exact* regularly varying tails of index one,

    P(X > x) = p L(x) / x,    P(X < -x) = q L(x) / x,    x >= x0,

glued to a continuous core on ``[-x0, x0]`` made of two uniform pieces whose
masses are chosen so that ``E[X] = 0`` holds analytically.  Everything here is
closed form except the tail inversion used by the sampler, which is a
monotone Newton iteration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

__all__ = [
    "DomainError",
    "SlowlyVarying",
    "log_power",
    "constant",
    "StepLaw",
    "example1_law",
    "sv_eval",
    "l_star",
    "truncated_mean",
    "scale_a",
    "scale_h",
    "ScalingSequences",
    "sample_step",
]


class DomainError(ValueError):
    """Argument outside the domain where a formula is defined."""


@dataclass(frozen=True)
class SlowlyVarying:
    """``L(x) = c / log(x)**(m+1)`` (``kind='logpower'``) or ``L(x) = c``."""

    kind: str
    c: float
    m: float = 0.0
    x_min: float = 3.0

    def __post_init__(self):
        if self.kind not in ("logpower", "constant"):
            raise ValueError(f"unknown slowly varying kind {self.kind!r}")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.kind == "logpower":
            if not self.m > 0:
                raise ValueError("m must be positive for a log-power L")
            if not self.x_min > math.e:
                raise ValueError("log-power L needs x_min > e")
        elif not self.x_min > 0:
            raise ValueError("x_min must be positive")

    def __call__(self, x):
        return sv_eval(self, x)

    def tail_integral(self, z):
        """Closed-form ``l*(z) = int_z^inf L(y)/y dy``."""
        if self.kind == "constant":
            raise DomainError("l* undefined: integral diverges for constant L")
        z = np.asarray(z, dtype=float)
        if np.any(z < self.x_min):
            raise DomainError("z below the tail domain")
        out = self.c / (self.m * np.log(z) ** self.m)
        return out[()] if out.ndim == 0 else out

    def inverse_ratio(self, v):
        """Solve ``L(y)/y = v`` for ``y >= x_min`` (vectorised, ``v`` small).

        For the log-power family this is ``t + (m+1) log t = log(c/v)`` with
        ``t = log y``.  The left side is increasing and concave, so Newton's
        iterates are monotone from the left after the first step.
        """
        v = np.asarray(v, dtype=float)
        if self.kind == "constant":
            with np.errstate(divide="ignore"):
                out = self.c / v
            return out
        k = self.m + 1.0
        with np.errstate(divide="ignore"):
            rhs = math.log(self.c) - np.log(v)
        t_lo = math.log(self.x_min)
        t = np.maximum(rhs - k * np.log(np.maximum(rhs, t_lo)), t_lo)
        finite = np.isfinite(rhs)
        t = np.where(finite, t, t_lo)
        for _ in range(8):
            g = t + k * np.log(t) - rhs
            t = np.maximum(t - g / (1.0 + k / t), t_lo)
        with np.errstate(over="ignore"):
            out = np.where(finite, np.exp(t), np.inf)
        return out


def log_power(c: float, m: float, x_min: float = 3.0) -> SlowlyVarying:
    return SlowlyVarying("logpower", float(c), float(m), float(x_min))


def constant(c: float, x_min: float = 1.0) -> SlowlyVarying:
    return SlowlyVarying("constant", float(c), 0.0, float(x_min))


def sv_eval(spec: SlowlyVarying, x):
    """Evaluate ``L(x)``; raises :class:`DomainError` below ``x_min``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < spec.x_min):
        raise DomainError(f"x below the tail domain x_min={spec.x_min}")
    if spec.kind == "constant":
        out = np.full_like(x, spec.c)
    else:
        out = spec.c / np.log(x) ** (spec.m + 1.0)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class StepLaw:
    """Piecewise law: exact power tails beyond ``x0``, uniform core inside.

    The core puts mass ``w_neg`` uniformly on ``[-x0, 0)`` and ``w_pos``
    uniformly on ``[0, x0)``.  Those two numbers solve the pair of linear
    equations "total mass is one" and "total mean is zero".
    """

    p: float
    q: float
    sv: SlowlyVarying
    x0: float
    mean_tol: float = 1e-12
    w_neg: float = field(init=False)
    w_pos: float = field(init=False)
    tail_mass: float = field(init=False)

    def __post_init__(self):
        if self.p < 0 or self.q < 0 or abs(self.p + self.q - 1.0) > 1e-12:
            raise ValueError("need p, q >= 0 with p + q = 1")
        if self.x0 < self.sv.x_min:
            raise ValueError("x0 must lie in the domain of L")
        if self.sv.kind == "constant" and self.p != self.q:
            raise ValueError("constant L has no finite mean unless p == q")
        t = float(self.sv(self.x0)) / self.x0
        if not 0 < t < 1:
            raise ValueError(f"tail mass L(x0)/x0 = {t} must lie in (0, 1)")
        core = 1.0 - t
        tmean = self._tail_mean()
        diff = -2.0 * tmean / self.x0  # w_pos - w_neg
        if abs(diff) > core:
            raise ValueError(
                "core too light to cancel the tail mean; lower c or raise x0")
        object.__setattr__(self, "tail_mass", t)
        object.__setattr__(self, "w_pos", 0.5 * (core + diff))
        object.__setattr__(self, "w_neg", 0.5 * (core - diff))
        if abs(self.mean) > self.mean_tol:
            raise ValueError(f"analytic mean {self.mean} exceeds mean_tol")

    def _tail_mean(self) -> float:
        if self.sv.kind == "constant":
            return 0.0
        return (self.p - self.q) * (float(self.sv(self.x0))
                                    + float(self.sv.tail_integral(self.x0)))

    @property
    def mean(self) -> float:
        return 0.5 * self.x0 * (self.w_pos - self.w_neg) + self._tail_mean()

    @property
    def regime(self) -> str:
        if self.p > self.q:
            return "p>q"
        if self.p < self.q:
            return "p<q"
        return "symmetric"

    # -- distribution functions ------------------------------------------
    def _breaks(self):
        fl = self.q * self.tail_mass
        f0 = fl + self.w_neg
        fr = f0 + self.w_pos
        return fl, f0, fr

    def sf(self, x):
        """``P(X > x)``, exact (no cancellation) on the right tail."""
        arr = np.asarray(x, dtype=float)
        flat = arr.reshape(-1)
        out = 1.0 - np.atleast_1d(self.cdf(flat))
        right = flat >= self.x0
        if np.any(right):
            out[right] = self.p * self.sv(flat[right]) / flat[right]
        out = out.reshape(arr.shape)
        return out[()] if arr.ndim == 0 else out

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        fl, f0, _ = self._breaks()
        x0 = self.x0
        out = np.empty_like(x)
        left = x < -x0
        right = x >= x0
        mid_neg = (~left) & (x < 0)
        mid_pos = (x >= 0) & (~right)
        if np.any(left):
            y = -x[left]
            out[left] = self.q * self.sv(y) / y
        out[mid_neg] = fl + self.w_neg * (x[mid_neg] + x0) / x0
        out[mid_pos] = f0 + self.w_pos * x[mid_pos] / x0
        if np.any(right):
            y = x[right]
            out[right] = 1.0 - self.p * self.sv(y) / y
        return out[()] if out.ndim == 0 else out

    def quantile(self, u):
        """Inverse CDF; closed form in the core, Newton in the tails."""
        u = np.asarray(u, dtype=float)
        fl, f0, fr = self._breaks()
        x0 = self.x0
        out = np.empty_like(u)
        left = u < fl
        right = u >= fr
        mid_neg = (~left) & (u < f0)
        mid_pos = (u >= f0) & (~right)
        if np.any(left):
            out[left] = -self.sv.inverse_ratio(u[left] / self.q)
        out[mid_neg] = -x0 + x0 * (u[mid_neg] - fl) / self.w_neg
        out[mid_pos] = x0 * (u[mid_pos] - f0) / self.w_pos
        if np.any(right):
            out[right] = self.sv.inverse_ratio((1.0 - u[right]) / self.p)
        return out[()] if out.ndim == 0 else out

    def sample(self, rng: np.random.Generator, size):
        u = rng.random(size)
        u[u == 0.0] = 2.0 ** -60
        return self.quantile(u)

    def truncated_mean(self, x):
        return truncated_mean(self, x)

    def positive_quantile(self, level: float) -> float:
        """``level``-quantile of ``X`` conditioned on ``X > 0``."""
        _, f0, _ = self._breaks()
        return float(self.quantile(f0 + level * (1.0 - f0)))

    def size_biased_tail(self, t: float) -> float:
        """``E[X; X > t]`` for ``t >= x0`` (closed form)."""
        if t < self.x0:
            raise DomainError("t must be at least x0")
        if self.sv.kind == "constant":
            return math.inf
        return self.p * (float(self.sv(t)) + float(self.sv.tail_integral(t)))

    def sample_size_biased_tail(self, rng, size, t: float):
        """Draws from density proportional to ``y f(y)`` on ``y > t >= x0``.

        The survival function of that density is ``(L(y) + l*(y)) / (L(t) +
        l*(t))``, inverted on ``s = log y`` by bisection.
        """
        sv = self.sv
        g_t = float(sv(t)) + float(sv.tail_integral(t))
        target = g_t * (1.0 - rng.random(size))
        lo = np.full(target.shape, math.log(t))
        hi = lo + 1.0
        k, m, c = sv.m + 1.0, sv.m, sv.c

        def g(s):
            return c / s ** k + c / (m * s ** m)

        while True:
            bad = g(hi) > target
            if not np.any(bad):
                break
            hi = np.where(bad, 2.0 * hi, hi)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            above = g(mid) > target
            lo = np.where(above, mid, lo)
            hi = np.where(above, hi, mid)
        with np.errstate(over="ignore"):
            return np.exp(0.5 * (lo + hi))


def example1_law(p: float = 0.7, q: float = 0.3, m: float = 2.0,
                 x0: float = 3.0, tail_mass: float = 0.3) -> StepLaw:
    """Log-power law ``L(x) = c / log^{m+1} x`` with ``c`` set by tail mass.

    ``c`` is chosen so that ``P(|X| > x0) = tail_mass``.
    """
    c = tail_mass * x0 * math.log(x0) ** (m + 1.0)
    return StepLaw(p, q, log_power(c, m, x_min=x0), x0)


def l_star(law: StepLaw, z):
    """Tail integral ``l*(z)`` of ``L(y)/y``, defined for ``z >= x0``."""
    z = np.asarray(z, dtype=float)
    if np.any(z < law.x0):
        raise DomainError("z below x0")
    return law.sv.tail_integral(z)


def truncated_mean(law: StepLaw, x):
    """``mu(x) = E[X; |X| <= x]`` in closed form.

    Inside the core it is ``(w_pos - w_neg) x^2 / (2 x0)``; beyond ``x0`` the
    zero total mean collapses it to ``-(p - q)(L(x) + l*(x))``.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("x must be positive")
    out = np.empty_like(x)
    inner = x < law.x0
    out[inner] = (law.w_pos - law.w_neg) * x[inner] ** 2 / (2.0 * law.x0)
    outer = ~inner
    if np.any(outer):
        if law.sv.kind == "constant":
            out[outer] = 0.0
        else:
            xo = x[outer]
            out[outer] = -(law.p - law.q) * (law.sv(xo) + law.sv.tail_integral(xo))
    return out[()] if out.ndim == 0 else out


def scale_a(law, n: int, rel_tol: float = 1e-10) -> float:
    """Root ``a_n`` of ``L(a)/a = 1/n`` on the tail domain.

    ``law`` may be a :class:`StepLaw` (domain starts at ``x0``) or a bare
    :class:`SlowlyVarying` (domain starts at ``x_min``).
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    if isinstance(law, StepLaw):
        sv, lo = law.sv, law.x0
    else:
        sv, lo = law, law.x_min
    if float(sv(lo)) / lo < 1.0 / n:
        raise DomainError("n too small for tail domain")
    if sv.kind == "constant":
        return sv.c * n
    k = sv.m + 1.0
    logc, logn = math.log(sv.c), math.log(n)

    def f(t):
        return logc - k * math.log(t) - t + logn

    t_lo = math.log(lo)
    t_hi = max(2.0 * t_lo, logc + logn + 1.0)
    while f(t_hi) > 0:
        t_hi *= 2.0
    t = optimize.brentq(f, t_lo, t_hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                        maxiter=500)
    a = math.exp(t)
    resid = abs(float(sv(a)) / a * n - 1.0)
    if resid > rel_tol:
        raise ArithmeticError(f"scale_a residual {resid} above {rel_tol}")
    return a


def scale_h(law: StepLaw, n: int) -> float:
    """``h_n = n mu(a_n)``."""
    return n * float(truncated_mean(law, scale_a(law, n)))


class ScalingSequences:
    """Memoised ``a_n``, ``h_n``, ``b_n = 1/(n a_n)`` and ``L4(n) = a_n/n``."""

    def __init__(self, law: StepLaw):
        self.law = law
        self._a: dict[int, float] = {}

    def a(self, n: int) -> float:
        if n not in self._a:
            self._a[n] = scale_a(self.law, n)
        return self._a[n]

    def h(self, n: int) -> float:
        return n * float(truncated_mean(self.law, self.a(n)))

    def b(self, n: int) -> float:
        return 1.0 / (n * self.a(n))

    def l4(self, n: int) -> float:
        return self.a(n) / n


def sample_step(law, rng: np.random.Generator, size=None):
    """I.i.d. draws from ``law`` (anything exposing ``sample(rng, size)``)."""
    if size is None:
        return float(law.sample(rng, 1)[0])
    return law.sample(rng, size)
