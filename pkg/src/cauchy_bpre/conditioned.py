"""The walk conditioned to stay nonnegative (Doob transform by ``U``).

Two samplers realise the measure ``P+``:

* weighting: plain paths with weight ``U(S_n) 1{L_n >= 0}``;
* kernel: the Markov chain with transition ``P(x + X in dy) U(y) / U(x)``.

``U`` comes either from an exact function (lattice oracles) or from a
:class:`~cauchy_bpre.fluctuation.RenewalTable`.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import stats

from .fluctuation import (LatticeWalkSpec, RenewalTable, ladder_height_law,
                          _lattice_kernel)
from .heavy_tail import StepLaw

__all__ = [
    "EnvelopeError",
    "ExactU",
    "lattice_U",
    "PlusSampler",
    "WeightedPaths",
    "plus_expectation",
    "weighted_paths",
    "sample_plus_kernel",
    "kernel_row",
    "harmonicity_residual",
    "HarmonicityRow",
    "prospective_minima",
    "sample_first_prospective_min",
    "sample_first_weak_ascent",
    "TanakaReport",
    "tanaka_compare",
    "EtaSumReport",
    "eta_exponential_sum",
    "conditioning_gap",
]


class EnvelopeError(RuntimeError):
    """Observed ``U(y)`` above the rejection envelope."""


# ---------------------------------------------------------------------------
# sources of U
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExactU:
    """An exact renewal function ``U`` (vectorised callable, zero below 0)."""

    func: Callable
    name: str = "exact"

    def __call__(self, x, extrapolate: bool = True):
        x = np.asarray(x, dtype=float)
        out = np.where(x < 0, 0.0, self.func(np.maximum(x, 0.0)))
        return out[()] if out.ndim == 0 else out

    def U(self, x, extrapolate: bool = True):
        return self(x)


def lattice_U(spec: LatticeWalkSpec, x_max: int = 200) -> ExactU:
    """Exact ``U`` for a lattice walk.

    Skip-free-downward mean-zero walks (lowest step ``-1``) have
    ``U(x) = floor(x) + 1``.  Otherwise ``U`` is the renewal function of
    the strict descending ladder-height law from
    :func:`~cauchy_bpre.fluctuation.ladder_height_law`, tabulated on
    ``x = 0..x_max``; arguments above ``x_max`` raise.
    """
    if spec.support[0] == -1 and abs(spec.mean) < 1e-14:
        return ExactU(lambda x: np.floor(x) + 1.0, name="floor(x)+1")
    f = ladder_height_law(spec)
    u = np.zeros(x_max + 1)
    u[0] = 1.0
    for h in range(1, x_max + 1):
        j = np.arange(1, min(h, len(f)) + 1)
        u[h] = np.dot(f[j - 1], u[h - j])
    vals = np.cumsum(u)

    def func(x):
        x = np.asarray(x, dtype=float)
        if np.any(x > x_max):
            raise ValueError(f"exact lattice U tabulated up to {x_max}")
        return vals[np.floor(x).astype(int)]

    return ExactU(func, name="ladder renewal")


def _U_eval(U, x, extrapolate=True):
    if isinstance(U, RenewalTable):
        return U.U(x, extrapolate=extrapolate)
    return U(x)


@dataclass
class PlusSampler:
    """Step law (or lattice spec) with its ``U`` source and sampling mode."""

    step: object
    U: object
    mode: str = "kernel"
    x_cap: float | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.mode not in ("kernel", "weighting"):
            raise ValueError("mode must be 'kernel' or 'weighting'")
        if abs(float(_U_eval(self.U, 0.0)) - 1.0) > 1e-12:
            raise ValueError("U(0) must equal 1")
        if self.x_cap is None and isinstance(self.step, StepLaw):
            self.x_cap = max(self.step.x0, self.step.positive_quantile(0.9999))

    @property
    def exact_lattice(self) -> bool:
        return isinstance(self.step, LatticeWalkSpec) and not isinstance(self.U, RenewalTable)


# ---------------------------------------------------------------------------
# weighting sampler
# ---------------------------------------------------------------------------

@dataclass
class WeightedPaths:
    S: np.ndarray          # (trials, n + 1)
    weight: np.ndarray     # U(S_n) 1{L_n >= 0}


def weighted_paths(sampler: PlusSampler, n: int, trials: int,
                   rng: np.random.Generator) -> WeightedPaths:
    X = sampler.step.sample(rng, (trials, n))
    S = np.concatenate((np.zeros((trials, 1)), np.cumsum(X, axis=1)), axis=1)
    alive = S.min(axis=1) >= 0
    w = np.zeros(trials)
    if alive.any():
        w[alive] = _U_eval(sampler.U, S[alive, -1], extrapolate=False)
    return WeightedPaths(S, w)


def plus_expectation(functional: Callable, n: int, trials: int, sampler: PlusSampler,
                     rng: np.random.Generator, batch: int = 8192) -> tuple[float, float]:
    """``E+[Y_n]`` with standard error.

    ``functional`` maps a ``(B, n + 1)`` array of paths (column 0 is ``S_0``)
    to ``B`` values.  Weighting mode averages ``Y U(S_n) 1{L_n >= 0}``;
    kernel mode averages ``Y`` over kernel paths.  With a table ``U`` the
    weighting mode refuses to extrapolate beyond the grid.
    """
    s1 = s2 = 0.0
    done = 0
    while done < trials:
        B = min(batch, trials - done)
        if sampler.mode == "weighting":
            wp = weighted_paths(sampler, n, B, rng)
            v = np.zeros(B)
            nz = wp.weight > 0
            if nz.any():
                v[nz] = np.asarray(functional(wp.S[nz]), dtype=float) * wp.weight[nz]
        else:
            S = sample_plus_kernel(0.0, n, sampler, rng, size=B)
            v = np.asarray(functional(S), dtype=float)
        s1 += v.sum()
        s2 += np.dot(v, v)
        done += B
    mean = s1 / trials
    var = max(s2 / trials - mean ** 2, 0.0) * trials / max(trials - 1, 1)
    return mean, math.sqrt(var / trials)


# ---------------------------------------------------------------------------
# kernel sampler
# ---------------------------------------------------------------------------

def kernel_row(sampler: PlusSampler, x: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact lattice transition row from ``x``: ``(targets, probs)``."""
    if not isinstance(sampler.step, LatticeWalkSpec):
        raise TypeError("exact rows exist for lattice steps only")
    sup = np.asarray(sampler.step.support, dtype=float)
    pr = np.asarray(sampler.step.probs)
    y = x + sup
    p = pr * _U_eval(sampler.U, y) / float(_U_eval(sampler.U, x))
    return y, p


def _lattice_step(sampler, x, rng, constraint=None):
    sup = np.asarray(sampler.step.support, dtype=float)
    pr = np.asarray(sampler.step.probs)
    y = x[:, None] + sup[None, :]
    P = pr[None, :] * _U_eval(sampler.U, y) / _U_eval(sampler.U, x)[:, None]
    if constraint is not None:
        g = _dip_prob(sampler.U, y, constraint[:, None])
        P = P * g
    P /= P.sum(axis=1, keepdims=True)
    cum = np.cumsum(P, axis=1)
    k = (rng.random(len(x))[:, None] > cum).sum(axis=1)
    return y[np.arange(len(x)), np.minimum(k, len(sup) - 1)]


class _TwoRegion:
    """Exact rejection sampler for the continuous kernel with a table ``U``.

    Region A is ``y in [0, x + c]`` with the flat envelope ``max U`` there
    and proposal ``P(x + X in dy)``.  Region B is ``y > x + c`` with the
    envelope ``K y`` (``K = sup U(y)/y`` beyond ``x + c``, attained at grid
    points or by the tail slope) and proposal proportional to
    ``(x + X) P(X in dX)`` on ``X > c``: a mixture of the tail law and the
    size-biased tail law.
    """

    def __init__(self, law: StepLaw, table: RenewalTable, c: float):
        if c < law.x0:
            raise ValueError("x_cap must be at least x0")
        self.law, self.table, self.c = law, table, c
        g, u = table.grid, table.U_hat
        self.prefix_max = np.maximum.accumulate(u)
        ratio = np.where(g > 0, u / np.where(g > 0, g, 1.0), 0.0)
        self.suffix_ratio = np.maximum.accumulate(ratio[::-1])[::-1]
        self.slope = table.slope
        self.sf_c = float(law.sf(c))
        self.sb_c = law.size_biased_tail(c)
        self.F_c = float(law.cdf(c))

    def envelopes(self, x):
        g = self.table.grid
        top = x + self.c
        Utop = self.table.U(top, extrapolate=True)
        i = np.searchsorted(g, top, side="right")
        MA = np.maximum(Utop, self.prefix_max[np.clip(i - 1, 0, len(g) - 1)])
        suf = np.where(i < len(g), self.suffix_ratio[np.minimum(i, len(g) - 1)], 0.0)
        K = np.maximum.reduce([Utop / top, suf, np.full_like(x, self.slope)])
        K = np.maximum(K, MA / top)
        lo = self.law.cdf(-x)
        massA = MA * (self.F_c - lo)
        massB = K * (x * self.sf_c + self.sb_c)
        return MA, K, lo, massA, massB

    def step(self, x, rng, constraint=None):
        law, table = self.law, self.table
        out = np.empty_like(x)
        MA, K, lo, massA, massB = self.envelopes(x)
        pA = massA / (massA + massB)
        pending = np.arange(len(x))
        guard = 0
        while pending.size:
            guard += 1
            if guard > 100_000:
                raise RuntimeError("kernel rejection loop did not terminate")
            xs = x[pending]
            m = pending.size
            inA = rng.random(m) < pA[pending]
            y = np.empty(m)
            env = np.empty(m)
            if inA.any():
                a = pending[inA]
                u = lo[a] + rng.random(a.size) * (self.F_c - lo[a])
                y[inA] = xs[inA] + law.quantile(u)
                env[inA] = MA[a]
            nb = ~inA
            if nb.any():
                b = pending[nb]
                w_tail = xs[nb] * self.sf_c
                use_tail = rng.random(b.size) * (w_tail + self.sb_c) < w_tail
                Xb = np.empty(b.size)
                if use_tail.any():
                    v = rng.random(int(use_tail.sum())) * self.sf_c / law.p
                    Xb[use_tail] = law.sv.inverse_ratio(np.maximum(v, 1e-300))
                if (~use_tail).any():
                    Xb[~use_tail] = law.sample_size_biased_tail(rng, int((~use_tail).sum()), self.c)
                Xb = np.maximum(Xb, self.c)
                y[nb] = xs[nb] + Xb
                env[nb] = K[b] * y[nb]
            y = np.maximum(y, 0.0)
            Uy = table.U(y, extrapolate=True)
            if np.any(Uy > env * (1 + 1e-9)):
                bad = int(np.argmax(Uy - env))
                raise EnvelopeError(f"U({y[bad]:.6g}) = {Uy[bad]:.6g} exceeds envelope "
                                    f"{env[bad]:.6g} at x = {xs[bad]:.6g}")
            acc = rng.random(m) * env < Uy
            if constraint is not None:
                g = _dip_prob(table, y, constraint[pending])
                acc &= rng.random(m) < g
            out[pending[acc]] = y[acc]
            pending = pending[~acc]
        return out


def _dip_prob(U, y, c):
    """``P+_y(min of the future path < c)``: ``1 - U(y - c)/U(y)`` if ``y >= c``."""
    y = np.asarray(y, dtype=float)
    c = np.broadcast_to(np.asarray(c, dtype=float), y.shape)
    Uy = _U_eval(U, np.maximum(y, 0.0))
    Uyc = _U_eval(U, np.maximum(y - c, 0.0))
    with np.errstate(invalid="ignore", divide="ignore"):
        g = 1.0 - Uyc / Uy
    return np.where(y < c, 1.0, np.clip(g, 0.0, 1.0))


def _kernel_step(sampler, x, rng, constraint=None):
    if sampler.exact_lattice:
        return _lattice_step(sampler, x, rng, constraint)
    if isinstance(sampler.step, StepLaw) and isinstance(sampler.U, RenewalTable):
        two = sampler._cache.get("two")
        if two is None:
            two = sampler._cache["two"] = _TwoRegion(sampler.step, sampler.U, sampler.x_cap)
        return two.step(x, rng, constraint)
    raise TypeError("kernel sampling needs a lattice spec with exact U or a "
                    "step law with a renewal table")


def sample_plus_kernel(x0: float, n: int, sampler: PlusSampler,
                       rng: np.random.Generator, size: int | None = None):
    """Paths of the ``P+`` chain started at ``x0``.

    Returns an array of shape ``(size, n + 1)``, or a single 1-d path when
    ``size`` is None.
    """
    if x0 < 0:
        raise ValueError("x0 must be nonnegative")
    B = 1 if size is None else size
    S = np.empty((B, n + 1))
    S[:, 0] = x0
    for k in range(n):
        S[:, k + 1] = _kernel_step(sampler, S[:, k], rng)
    return S[0] if size is None else S


# ---------------------------------------------------------------------------
# harmonicity
# ---------------------------------------------------------------------------

@dataclass
class HarmonicityRow:
    x: float
    residual: float
    se_mc: float
    se_table: float

    @property
    def se(self) -> float:
        return math.hypot(self.se_mc, self.se_table)

    @property
    def z(self) -> float:
        return self.residual / self.se if self.se > 0 else (0.0 if self.residual == 0 else math.inf)


def harmonicity_residual(U, step, xs, trials: int = 10**6,
                         rng: np.random.Generator | None = None) -> list[HarmonicityRow]:
    """``E[U(x + X); x + X >= 0] - U(x)`` for each ``x`` in ``xs``.

    Lattice steps with an exact ``U`` are evaluated exactly.  Otherwise the
    expectation is a Monte Carlo mean over ``trials`` steps (common to all
    ``x``); with a table ``U`` carrying a covariance matrix, the table error
    is propagated through the linear weights of the functional.
    """
    rows = []
    if isinstance(step, LatticeWalkSpec) and not isinstance(U, RenewalTable):
        sup = np.asarray(step.support, dtype=float)
        pr = np.asarray(step.probs)
        for x in xs:
            val = float(np.dot(pr, _U_eval(U, x + sup)) - _U_eval(U, x))
            rows.append(HarmonicityRow(float(x), val, 0.0, 0.0))
        return rows
    if rng is None:
        raise ValueError("Monte Carlo residual needs an rng")
    X = step.sample(rng, trials)
    for x in xs:
        y = x + X
        u = np.where(y >= 0, _U_eval(U, np.maximum(y, 0.0), extrapolate=True), 0.0)
        res = float(u.mean() - _U_eval(U, x))
        se_mc = float(u.std(ddof=1) / math.sqrt(trials))
        se_t = 0.0
        if isinstance(U, RenewalTable) and U.U_cov is not None:
            w = U.mean_weights(y)
            w -= U.mean_weights(np.array([x]))
            se_t = float(math.sqrt(max(w @ U.U_cov @ w, 0.0)))
        rows.append(HarmonicityRow(float(x), res, se_mc, se_t))
    return rows


# ---------------------------------------------------------------------------
# prospective minima and the Tanaka comparison
# ---------------------------------------------------------------------------

@dataclass
class ProspectiveMinima:
    epochs: np.ndarray
    lookahead: np.ndarray
    censored: np.ndarray


def prospective_minima(S, horizon: int | None = None,
                       w_min: int | None = None) -> ProspectiveMinima:
    """Epochs ``m >= 1`` with ``S_{m+i} >= S_m`` for all ``i`` up to the horizon.

    Each epoch carries its lookahead ``H - m``; epochs with lookahead below
    ``w_min`` (default ``H // 4``) are flagged censored.
    """
    S = np.asarray(S, dtype=float)
    H = len(S) - 1 if horizon is None else min(horizon, len(S) - 1)
    if w_min is None:
        w_min = H // 4
    seg = S[: H + 1]
    suffix_min = np.minimum.accumulate(seg[::-1])[::-1]
    m = np.arange(1, H + 1)
    ok = seg[1:] <= suffix_min[1:]
    ep = m[ok]
    look = H - ep
    return ProspectiveMinima(ep, look, look < w_min)


def sample_first_prospective_min(sampler: PlusSampler, size: int, k_max: int,
                                 rng: np.random.Generator, method: str = "exact",
                                 horizon: int | None = None):
    """Draws of ``(nu, S_nu)`` under ``P+`` from 0.

    ``method='exact'`` decides at each step whether the current time is a
    prospective minimum, using ``P+_y(future min >= b) = U(y - b)/U(y)``,
    and conditions the continuation on the complementary event when it is
    not.  Draws with ``nu > k_max`` come back as ``k_max + 1`` (overflow,
    not censored).  ``method='lookahead'`` simulates to ``horizon`` and
    confirms epochs with at least ``horizon // 4`` lookahead; unconfirmed
    draws are censored and marked ``-1``.
    """
    if method == "lookahead":
        H = horizon or 8 * k_max
        S = sample_plus_kernel(0.0, H, sampler, rng, size=size)
        nu = np.full(size, -1)
        h = np.full(size, np.nan)
        for i in range(size):
            pm = prospective_minima(S[i], H)
            if pm.epochs.size == 0 or pm.censored[0]:
                continue
            e = pm.epochs[0]
            nu[i] = min(e, k_max + 1)
            h[i] = S[i, e]
        return nu, h
    if method != "exact":
        raise ValueError("method must be 'exact' or 'lookahead'")
    nu = np.full(size, k_max + 1)
    h = np.full(size, np.nan)
    x = np.zeros(size)
    c = np.full(size, -np.inf)                    # pending dip level (none)
    active = np.arange(size)
    for k in range(1, k_max + 1):
        xa, ca = x[active], c[active]
        constrained = np.isfinite(ca)
        y = np.empty(active.size)
        if (~constrained).any():
            y[~constrained] = _kernel_step(sampler, xa[~constrained], rng)
        if constrained.any():
            y[constrained] = _kernel_step(sampler, xa[constrained], rng, ca[constrained])
        ca = np.where(constrained & (y < ca), -np.inf, ca)
        free = ~np.isfinite(ca)
        hit = free & (rng.random(active.size) * _U_eval(sampler.U, y) < 1.0)
        nu[active[hit]] = k
        h[active[hit]] = y[hit]
        ca = np.where(free & ~hit, y, ca)
        x[active] = y
        c[active] = ca
        active = active[~hit]
        if not active.size:
            break
    return nu, h


def sample_first_weak_ascent(step, size: int, k_max: int, rng: np.random.Generator):
    """Draws of ``(iota, S_iota)``; ``iota > k_max`` comes back as ``k_max + 1``."""
    S = np.cumsum(step.sample(rng, (size, k_max)), axis=1)
    hit = S >= 0
    has = hit.any(axis=1)
    first = hit.argmax(axis=1)
    iota = np.where(has, first + 1, k_max + 1)
    h = np.where(has, S[np.arange(size), first], np.nan)
    return iota, h


@dataclass
class TanakaReport:
    k_max: int
    height_edges: np.ndarray
    hist_plus: np.ndarray
    hist_walk: np.ndarray
    statistic: float
    dof: int
    p_value: float
    censor_plus: float
    censor_walk: float

    def as_record(self) -> dict:
        return {"statistic": self.statistic, "dof": self.dof, "p_value": self.p_value,
                "censor_rate": max(self.censor_plus, self.censor_walk)}


def _joint_table(k, h, k_max, edges):
    K = k_max + 1
    hb = np.clip(np.searchsorted(edges, h, side="right") - 1, 0, len(edges) - 2)
    hb = np.where(k > k_max, 0, hb)
    nb = len(edges) - 1
    counts = np.zeros((K, nb))
    np.add.at(counts, (np.minimum(k, K) - 1, hb), 1)
    return counts.ravel()


def tanaka_compare(sampler: PlusSampler, trials: int, rng: np.random.Generator,
                   k_max: int = 16, n_height_bins: int = 6, method: str = "exact",
                   horizon: int | None = None) -> TanakaReport:
    """Chi-square comparison of ``(nu, S_nu)`` under ``P+`` with ``(iota, S_iota)``.

    Cells are ``k = 1..k_max`` crossed with height bins, plus one overflow
    cell ``k > k_max``; sparse cells (expected count below 5) are pooled.
    """
    if trials < 10**4:
        raise ValueError("trials must be at least 1e4")
    nu, hp = sample_first_prospective_min(sampler, trials, k_max, rng, method, horizon)
    io, hw = sample_first_weak_ascent(sampler.step, trials, k_max, rng)
    cens_p = float(np.mean(nu < 0))
    cens_w = 0.0
    if max(cens_p, cens_w) > 0.02:
        warnings.warn(f"censoring {cens_p:.2%} exceeds 2%; widen the horizon", RuntimeWarning)
    keep = nu > 0
    nu, hp = nu[keep], hp[keep]
    pooled = np.concatenate((hp[nu <= k_max], hw[io <= k_max]))
    if isinstance(sampler.step, LatticeWalkSpec):
        vals = np.unique(pooled)
        edges = np.concatenate((vals - 0.5, [vals[-1] + 0.5]))
    else:
        qs = np.quantile(pooled, np.linspace(0, 1, n_height_bins + 1))
        edges = np.unique(qs)
        edges[0] = -np.inf
        edges[-1] = np.inf
    a = _joint_table(nu, hp, k_max, edges)
    b = _joint_table(io, hw, k_max, edges)
    # pool sparse cells in order of decreasing size
    order = np.argsort(-(a + b))
    a, b = a[order], b[order]
    tot = a + b
    expected_min = np.minimum(tot * a.sum() / tot.sum(), tot * b.sum() / tot.sum())
    big = expected_min >= 5
    if (~big).any():
        a = np.append(a[big], a[~big].sum())
        b = np.append(b[big], b[~big].sum())
    keepc = (a + b) > 0
    table = np.vstack((a[keepc], b[keepc]))
    if table.shape[1] < 2:
        stat, p, dof = 0.0, 1.0, 0
    else:
        stat, p, dof, _ = stats.chi2_contingency(table, correction=False)
    hist_p = _joint_table(nu, hp, k_max, edges).reshape(k_max + 1, -1) / max(len(nu), 1)
    hist_w = _joint_table(io, hw, k_max, edges).reshape(k_max + 1, -1) / trials
    return TanakaReport(k_max, edges, hist_p, hist_w, float(stat), int(dof), float(p),
                        cens_p, cens_w)


# ---------------------------------------------------------------------------
# exponential sums along P+ environments
# ---------------------------------------------------------------------------

@dataclass
class EtaSumReport:
    checkpoints: np.ndarray
    partial: np.ndarray             # (trials, len(checkpoints))
    totals: np.ndarray
    median_total: float
    inc_median: float
    inc_p99: float
    drift_slope: float              # least-squares slope of the median path against k

    @property
    def stabilized(self) -> bool:
        return self.inc_p99 < 0.01 * self.median_total


def eta_exponential_sum(driver, sampler: PlusSampler, K: int, trials: int,
                        rng: np.random.Generator) -> EtaSumReport:
    """Partial sums ``sum_{k <= K'} eta_{k+1} e^{-S_k}`` along ``P+`` paths.

    The last-decade increment is the sum over ``K/10 < k <= K``.
    """
    S = sample_plus_kernel(0.0, K, sampler, rng, size=trials)
    eta_ = driver.eta
    terms = eta_ * np.exp(-S[:, :K])                # k = 0..K-1 uses eta_{k+1}
    cums = np.cumsum(terms, axis=1)
    cps = np.unique(np.round(np.geomspace(1, K, 25)).astype(int))
    partial = cums[:, cps - 1]
    totals = cums[:, -1]
    inc = totals - cums[:, max(K // 10 - 1, 0)]
    k = np.arange(K + 1)
    # the median path, since heavy tails make the mean path useless
    slope = float(np.polyfit(k, np.median(S, axis=0), 1)[0])
    return EtaSumReport(cps, partial, totals, float(np.median(totals)),
                        float(np.median(inc)), float(np.quantile(inc, 0.99)), slope)


# ---------------------------------------------------------------------------
# conditioning on L_n >= 0 versus P+ (exact, lattice)
# ---------------------------------------------------------------------------

def conditioning_gap(spec: LatticeWalkSpec, U: ExactU, k: int, ns,
                     Y: Callable = lambda s: np.exp(-s)) -> list[tuple[int, float, float, float]]:
    """Exact ``E[Y(S_k) | L_n >= 0]`` against ``E+[Y(S_k)]`` for each ``n``.

    Returns ``(n, conditional, plus, |gap|)`` rows.  The killed walk on
    ``[0, inf)`` is propagated forward to time ``k``; the probability of
    staying nonnegative for the remaining ``n - k`` steps is propagated
    backward from each reachable level.
    """
    lo, hi, ker = _lattice_kernel(spec)
    n_max = max(ns)
    width = hi * n_max + 1
    # forward: distribution of S_k on {L_k >= 0}
    dist = np.zeros(width)
    dist[0] = 1.0
    for _ in range(k):
        new = np.convolve(dist, ker)          # index shift by lo
        dist = np.zeros(width)
        seg = new[-lo: -lo + width]
        dist[: len(seg)] = seg
    levels = np.arange(width, dtype=float)
    plus = float(np.sum(dist * U(levels) * Y(levels)))
    rows = []
    for n in sorted(ns):
        # backward: h_j(y) = P_y(L_j >= 0)
        h = np.ones(width + (n - k) * hi + 1)
        for _ in range(n - k):
            pad = np.concatenate((np.zeros(-lo), h, np.zeros(hi)))
            h = np.convolve(pad, ker[::-1], mode="valid")[: len(h)]
        hk = h[:width]
        num = float(np.sum(dist * hk * Y(levels)))
        den = float(np.sum(dist * hk))
        cond = num / den
        rows.append((int(n), cond, plus, abs(cond - plus)))
    return rows
