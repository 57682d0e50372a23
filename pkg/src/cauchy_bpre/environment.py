"""Random offspring laws driven by the step law of the associated walk.

Offspring laws are stored by their log-mean ``x = log f'(1)`` rather than the
mean itself: environments built from heavy-tailed steps routinely produce
``|x|`` in the hundreds, where ``exp(x)`` over- or underflows.

Three families are supported.

``linear_fractional``
    ``P(xi = 0) = a0``, ``P(xi = k) = (1 - a0)(1 - b) b**(k-1)`` for ``k >= 1``;
    parametrised by ``(log_mean, eta)`` through the identity
    ``1/(1 - f(s)) = 1/(mean (1 - s)) + eta/2``.
``geometric``
    ``P(xi = k) = r (1 - r)**k``; the linear-fractional law with ``eta = 2``.
``poisson``
    ``eta = 1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "OffspringLaw",
    "linear_fractional",
    "geometric",
    "poisson",
    "log_mean",
    "eta",
    "zeta",
    "zeta_vec",
    "gf_complement_vec",
    "EnvironmentDriver",
    "EnvironmentSequence",
    "draw_environment",
    "condition_moment_report",
    "MomentReport",
]

FAMILIES = ("linear_fractional", "geometric", "poisson")


def _lf_logs(x, eta):
    """``log b``, ``log(1 - b)`` and ``log(1 - a0)`` for linear-fractional laws."""
    z = x + math.log(eta / 2.0) if eta > 0 else np.full_like(x, -np.inf)
    log_b = -np.logaddexp(0.0, -z)          # log expit(z)
    log_1mb = -np.logaddexp(0.0, z)         # log expit(-z)
    log_1ma0 = x + log_1mb                  # 1 - a0 = mean (1 - b)
    return log_b, log_1mb, log_1ma0


@dataclass(frozen=True)
class OffspringLaw:
    family: str
    log_mean: float
    eta: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")
        if self.family == "linear_fractional" and self.log_mean > 0 and self.eta < 2:
            # 1 - a0 = 2 mean / (2 + eta mean) must not exceed one
            if math.exp(self.log_mean) * (2.0 - self.eta) > 2.0 + 1e-12:
                raise ValueError("mean too large for this eta (need mean (2 - eta) <= 2)")

    @property
    def mean(self) -> float:
        return math.exp(self.log_mean)

    def gf(self, s):
        """Generating function ``f(s)`` on ``[0, 1]``."""
        s = np.asarray(s, dtype=float)
        return 1.0 - self.gf_complement(1.0 - s)

    def gf_complement(self, t):
        """``1 - f(1 - t)``; accurate when ``t`` is tiny."""
        t = np.asarray(t, dtype=float)
        return gf_complement_vec(self.family, np.full(t.shape, self.log_mean), self.eta, t)

    def pmf(self, k):
        k = np.asarray(k)
        x = self.log_mean
        if self.family == "poisson":
            lam = math.exp(x)
            return np.exp(k * x - lam - special.gammaln(k + 1.0)) if lam > 0 else (k == 0).astype(float)
        log_b, log_1mb, log_1ma0 = _lf_logs(np.float64(x), self.eta)
        a0 = -math.expm1(float(log_1ma0))
        with np.errstate(invalid="ignore"):
            tail = np.exp(log_1ma0 + log_1mb + (k - 1) * log_b) if self.eta > 0 else (k == 1) * (1.0 - a0)
        return np.where(k == 0, a0, np.where(k >= 1, tail, 0.0))

    def zeta(self, a: int) -> float:
        return float(zeta_vec(self.family, np.array([self.log_mean]), self.eta, a)[0])


def linear_fractional(mean: float, eta: float) -> OffspringLaw:
    return OffspringLaw("linear_fractional", math.log(mean), float(eta))


def geometric(r: float) -> OffspringLaw:
    if not 0 < r < 1:
        raise ValueError("r must lie in (0, 1)")
    return OffspringLaw("geometric", math.log1p(-r) - math.log(r), 2.0)


def poisson(lam: float) -> OffspringLaw:
    return OffspringLaw("poisson", math.log(lam) if lam > 0 else -math.inf, 1.0)


def log_mean(law: OffspringLaw) -> float:
    return law.log_mean


def eta(law: OffspringLaw) -> float:
    """``E[xi(xi-1)] / (E xi)^2``."""
    return law.eta


def zeta(law: OffspringLaw, a: int) -> float:
    """``sum_{y >= a} y^2 P(xi = y) / (E xi)^2``."""
    return law.zeta(a)


def gf_complement_vec(family: str, x, eta_: float, t):
    """Vectorised ``1 - f(1 - t)`` for log-means ``x``."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        if family == "poisson":
            out = -np.expm1(-np.exp(x) * t)
        else:
            # 1 - f(1 - t) = 1 / (e^{-x}/t + eta/2)
            out = 1.0 / (np.exp(-x) / t + 0.5 * eta_)
    return np.where(t > 0, out, 0.0)


def _zeta_lf(x, eta_, a):
    if a <= 1:
        with np.errstate(over="ignore"):
            return eta_ + np.exp(-x)
    if eta_ == 0:
        return np.zeros_like(x)
    log_b, log_1mb, _ = _lf_logs(x, eta_)
    b = np.exp(log_b)
    # zeta(a) = b^{a-1}/mean * [a^2 (1-b) + 2ab + (1+b) eta mean / 2]
    terms = np.stack([
        2 * math.log(a) + log_1mb,
        math.log(2 * a) + log_b,
        np.log1p(b) + math.log(eta_ / 2.0) + x,
    ])
    return np.exp((a - 1) * log_b - x + special.logsumexp(terms, axis=0))


def _zeta_poisson(x, a):
    """Poisson ``zeta(a)`` from terms ``t_y = y^2 lam^{y-2} e^{-lam} / y!``.

    Terms are built in log space from ``x = log lam``.  When ``a`` sits in the
    bulk or below it, the head ``sum_{y<a} t_y`` is subtracted from
    ``zeta(0) = 1 + 1/lam``; in the upper tail the series is summed upward
    with Kahan compensation until a term drops below ``1e-18`` of the sum.
    """
    x = np.asarray(x, dtype=float)
    lam = np.exp(x)
    with np.errstate(over="ignore"):
        z0 = 1.0 + np.exp(-x)
    if a <= 1:
        return z0

    def logterm(y):
        return 2 * math.log(y) + (y - 2) * x - lam - math.lgamma(y + 1.0)

    out = np.empty_like(x)
    head = lam >= a - 1
    if np.any(head):
        xs = x[head]
        acc = np.zeros_like(xs)
        lam_h = lam[head]
        for y in range(1, a):
            acc += np.exp(2 * math.log(y) + (y - 2) * xs - lam_h - math.lgamma(y + 1.0))
        out[head] = np.maximum(z0[head] - acc, 0.0)
    tail = ~head
    if np.any(tail):
        xs = x[tail]
        lam_t = lam[tail]
        total = np.zeros_like(xs)
        comp = np.zeros_like(xs)
        active = np.ones(xs.shape, dtype=bool)
        y = a
        while np.any(active) and y < a + 10_000:
            term = np.exp(2 * math.log(y) + (y - 2) * xs - lam_t - math.lgamma(y + 1.0))
            term = np.where(active, term, 0.0)
            yk = term - comp
            tk = total + yk
            comp = (tk - total) - yk
            total = tk
            active &= term > 1e-18 * total
            y += 1
        out[tail] = total
    return out


def zeta_vec(family: str, x, eta_: float, a: int):
    """Vectorised ``zeta(a)`` over an array of log-means."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    x = np.asarray(x, dtype=float)
    if family == "poisson":
        return _zeta_poisson(x, a)
    return _zeta_lf(x, eta_, a)


@dataclass(frozen=True)
class EnvironmentDriver:
    """Maps a step ``x`` of the associated walk to an offspring law of mean ``e^x``.

    ``step`` is any object exposing ``sample(rng, size)``: a
    :class:`~cauchy_bpre.heavy_tail.StepLaw`, a lattice walk, or a
    degenerate step.
    """

    family: str
    step: object
    eta0: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "linear_fractional":
            if self.eta0 is None:
                raise ValueError("linear_fractional driver needs eta0")
            if self.eta0 < 2:
                raise ValueError("eta0 >= 2 keeps every mean admissible")

    @property
    def eta(self) -> float:
        if self.family == "poisson":
            return 1.0
        if self.family == "geometric":
            return 2.0
        return float(self.eta0)

    def make(self, x: float) -> OffspringLaw:
        return OffspringLaw(self.family, float(x), self.eta)

    def draw_steps(self, rng, size):
        return self.step.sample(rng, size)


@dataclass(frozen=True)
class EnvironmentSequence:
    family: str
    eta: float
    X: np.ndarray

    @property
    def S(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.X)))

    @property
    def laws(self) -> list[OffspringLaw]:
        return [OffspringLaw(self.family, float(x), self.eta) for x in self.X]

    def __len__(self):
        return len(self.X)


def draw_environment(driver: EnvironmentDriver, n: int,
                     rng: np.random.Generator) -> EnvironmentSequence:
    if n < 0:
        raise ValueError("n must be nonnegative")
    X = np.asarray(driver.draw_steps(rng, n), dtype=float) if n else np.empty(0)
    return EnvironmentSequence(driver.family, driver.eta, X)


@dataclass
class MomentReport:
    beta: float
    a: int
    trials: int
    zeta_beta: float
    zeta_beta_se: float
    log_zeta: float
    log_zeta_se: float
    u_zeta_beta: float | None
    u_zeta_beta_se: float | None
    u_log_zeta: float | None
    u_log_zeta_se: float | None
    renewal_missing: bool
    # estimates on nested quarter/half/full samples; a stable moment should not drift
    stability: dict


def condition_moment_report(driver: EnvironmentDriver, beta: float, a: int,
                            trials: int, rng: np.random.Generator,
                            renewal=None) -> MomentReport:
    """Monte Carlo moment diagnostics behind the environment moment conditions.

    Estimates ``E[zeta_1(a)^beta]`` and ``E[(log+ zeta_1(a))^(1+beta)]``, plus
    the versions weighted by ``U(X_1)`` when a renewal table is supplied.
    This is a diagnostic: finiteness of a moment cannot be established by
    sampling.
    """
    if trials < 1000:
        raise ValueError("trials must be at least 1000")
    x = np.asarray(driver.draw_steps(rng, trials), dtype=float)
    z = zeta_vec(driver.family, x, driver.eta, a)
    with np.errstate(divide="ignore", over="ignore"):
        zb = z ** beta
        lz = np.log(np.maximum(z, 1.0)) ** (1.0 + beta)
    cols = {"zeta_beta": zb, "log_zeta": lz}
    if renewal is not None:
        u = renewal.U(np.maximum(x, 0.0), extrapolate=True) * (x >= 0)
        cols["u_zeta_beta"] = u * zb
        cols["u_log_zeta"] = u * lz

    def mean_se(v):
        return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(v.size))

    out = {}
    stability = {}
    for name, v in cols.items():
        out[name], out[name + "_se"] = mean_se(v)
        stability[name] = [float(np.mean(v[: trials // 4])),
                           float(np.mean(v[: trials // 2])), out[name]]
    for name in ("u_zeta_beta", "u_log_zeta"):
        out.setdefault(name, None)
        out.setdefault(name + "_se", None)
    return MomentReport(beta=beta, a=a, trials=trials, renewal_missing=renewal is None,
                        stability=stability, **out)
