"""Fluctuation theory of the associated walk.

Boundary conventions matter for the exact identities and are fixed
throughout: ``L_n >= 0`` and ``S_k >= 0`` are weak, ``M_n < 0`` is strict,
descending and ascending ladder epochs are strict, and ``iota`` (first weak
ascending epoch) is weak.  ``ell_0 = m_0 = 1`` by convention, which makes
``sum_k ell_k m_{n-k} = 1`` hold for every ``n >= 0``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize

from .heavy_tail import StepLaw, scale_h

__all__ = [
    "LatticeWalkSpec",
    "DegenerateStep",
    "WalkPath",
    "LadderSample",
    "RenewalTable",
    "SpitzerSeries",
    "simulate_path",
    "ladder_decompose",
    "estimate_U",
    "estimate_renewal",
    "exact_nonneg_probs",
    "killed_walk_probs",
    "ladder_height_law",
    "lower_min_probs",
    "spitzer_transform",
    "reconstruct_q",
    "lambda_eval",
    "example1_series",
    "condition_C_check",
    "lambda_lower_bound_check",
    "asymptotic_rhs",
    "estimate_nonneg_probs",
    "min_probabilities",
    "ratio_U_check",
    "duality_counts",
    "slowly_varying_parts",
]


# ---------------------------------------------------------------------------
# step samplers that are not heavy-tailed laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeWalkSpec:
    """Integer-valued step law with finite support."""

    support: tuple
    probs: tuple

    def __post_init__(self):
        sup = np.asarray(self.support)
        pr = np.asarray(self.probs, dtype=float)
        if sup.ndim != 1 or sup.shape != pr.shape or sup.size == 0:
            raise ValueError("support and probs must be matching 1-d sequences")
        if not np.all(sup == np.round(sup)):
            raise ValueError("support must be integers")
        if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to one")
        order = np.argsort(sup)
        object.__setattr__(self, "support", tuple(int(s) for s in sup[order]))
        object.__setattr__(self, "probs", tuple(float(p) for p in pr[order]))

    @property
    def oscillating_support(self) -> bool:
        return self.support[0] < 0 < self.support[-1]

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))

    @property
    def skip_free_down(self) -> bool:
        return self.support[0] == -1

    def sample(self, rng: np.random.Generator, size):
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, rng.random(size), side="right")
        return np.asarray(self.support, dtype=float)[idx]

    def step_prob(self, s) -> np.ndarray:
        lookup = dict(zip(self.support, self.probs))
        return np.array([lookup.get(int(v), 0.0) for v in np.ravel(s)])


@dataclass(frozen=True)
class DegenerateStep:
    """Constant step ``X = value`` (a deterministic environment)."""

    value: float = 0.0

    def sample(self, rng, size):
        return np.full(size, float(self.value))


def simple_walk(p_up: float = 0.5) -> LatticeWalkSpec:
    return LatticeWalkSpec((-1, 1), (1.0 - p_up, p_up))


# ---------------------------------------------------------------------------
# paths and ladders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WalkPath:
    S: np.ndarray

    @property
    def n(self) -> int:
        return len(self.S) - 1

    @property
    def running_min(self) -> np.ndarray:
        return np.minimum.accumulate(self.S)

    @property
    def running_max(self) -> np.ndarray:
        """``M_k = max(S_1..S_k)``; ``M_0 = -inf`` so that ``M_0 < 0``."""
        out = np.empty_like(self.S, dtype=float)
        out[0] = -np.inf
        if self.n:
            out[1:] = np.maximum.accumulate(self.S[1:])
        return out

    @property
    def tau(self) -> int:
        """First index attaining the minimum ``L_n``."""
        return int(np.argmin(self.S))


def simulate_path(step, n: int, rng: np.random.Generator) -> WalkPath:
    if n < 0:
        raise ValueError("n must be nonnegative")
    X = np.asarray(step.sample(rng, n), dtype=float) if n else np.empty(0)
    return WalkPath(np.concatenate(([0.0], np.cumsum(X))))


@dataclass(frozen=True)
class LadderSample:
    desc_epochs: np.ndarray
    desc_heights: np.ndarray
    asc_epochs: np.ndarray
    asc_heights: np.ndarray
    iota: int | None          # None: no weak ascent within the horizon
    S_iota: float | None
    horizon: int

    @property
    def censored(self) -> bool:
        return self.iota is None


def ladder_decompose(path: WalkPath) -> LadderSample:
    S = np.asarray(path.S, dtype=float)
    n = len(S) - 1
    if n == 0:
        e = np.empty(0, dtype=int)
        return LadderSample(e, np.empty(0), e, np.empty(0), None, None, 0)
    prev_min = np.minimum.accumulate(S)[:-1]
    prev_max = np.maximum.accumulate(S)[:-1]
    desc = np.flatnonzero(S[1:] < prev_min) + 1
    asc = np.flatnonzero(S[1:] > prev_max) + 1
    hit = np.flatnonzero(S[1:] >= 0)
    iota = int(hit[0] + 1) if hit.size else None
    return LadderSample(desc, S[desc], asc, S[asc], iota,
                        float(S[iota]) if iota is not None else None, n)


def duality_counts(S, x: float) -> tuple[int, int]:
    """Both sides of the duality step, for one finite path.

    Forward: strict descending ladder epochs ``n >= 1`` with ``S_n >= -x``.
    Reversed: indices ``n >= 1`` such that the reversed walk
    ``S'_i = S_n - S_{n-i}`` stays strictly negative for ``i = 1..n`` and
    ends at ``S'_n = S_n >= -x``.
    """
    S = np.asarray(S, dtype=float)
    forward = 0
    reverse = 0
    for n in range(1, len(S)):
        if S[n] < S[:n].min() and S[n] >= -x:
            forward += 1
        rev = S[n] - S[n - np.arange(1, n + 1)]
        if np.all(rev < 0) and S[n] >= -x:
            reverse += 1
    return forward, reverse


# ---------------------------------------------------------------------------
# renewal functions
# ---------------------------------------------------------------------------

@dataclass
class RenewalTable:
    """Gridded renewal function estimates with standard errors.

    ``kind='linear'`` interpolates linearly (continuous laws); ``kind='step'``
    uses the value at the largest grid point not exceeding ``x`` (lattice
    laws on an integer grid).  Values below zero are ``0``.
    """

    grid: np.ndarray
    U_hat: np.ndarray
    U_se: np.ndarray
    V_hat: np.ndarray | None = None
    V_se: np.ndarray | None = None
    trials: int = 0
    censored: np.ndarray | None = None
    kind: str = "linear"
    isotonic: bool = False
    raw_U: np.ndarray | None = field(default=None, repr=False)
    U_cov: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.grid[0] != 0 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("grid must start at 0 and increase")

    def _interp(self, values, x, extrapolate):
        x = np.asarray(x, dtype=float)
        g = self.grid
        if not extrapolate and np.any(x > g[-1]):
            raise ValueError(f"x beyond the renewal grid (max {g[-1]}); "
                             "pass extrapolate=True for linear extension")
        if self.kind == "step":
            idx = np.clip(np.searchsorted(g, x, side="right") - 1, 0, len(g) - 1)
            out = values[idx]
        else:
            out = np.interp(x, g, values)
        beyond = x > g[-1]
        if np.any(beyond):
            slope = self._tail_slope(values)
            out = np.where(beyond, values[-1] + slope * (x - g[-1]), out)
        out = np.where(x < 0, 0.0, out)
        return out[()] if out.ndim == 0 else out

    def _tail_slope(self, values) -> float:
        half = len(self.grid) // 2
        g, v = self.grid[half:], values[half:]
        if len(g) < 2:
            return 0.0
        return max(float(np.polyfit(g, v, 1)[0]), 0.0)

    def U(self, x, extrapolate: bool = False):
        return self._interp(self.U_hat, x, extrapolate)

    __call__ = U

    def U_stderr(self, x):
        return self._interp(self.U_se, np.minimum(x, self.grid[-1]), True)

    def V(self, x, extrapolate: bool = False):
        if self.V_hat is None:
            raise ValueError("table has no V estimate")
        return self._interp(self.V_hat, x, extrapolate)

    @property
    def slope(self) -> float:
        return self._tail_slope(self.U_hat)

    def monotone(self) -> "RenewalTable":
        """Copy with isotonic (PAVA) correction, for presentation."""
        fix = optimize.isotonic_regression(self.U_hat, increasing=True).x
        fix[0] = 1.0
        fix = np.maximum.accumulate(fix)
        out = RenewalTable(self.grid.copy(), fix, self.U_se.copy(), self.V_hat,
                           self.V_se, self.trials, self.censored, self.kind,
                           isotonic=not np.array_equal(fix, self.U_hat),
                           raw_U=self.U_hat.copy(), U_cov=self.U_cov)
        return out

    def mean_weights(self, y) -> np.ndarray:
        """Vector ``w`` with ``mean(U(y)) = w @ U_hat`` (``extrapolate=True``).

        ``U`` is linear in the table values (interpolation plus a least-squares
        tail slope), so ``w @ U_cov @ w`` is the table variance of any such
        average.  The slope clip at zero is ignored here.
        """
        y = np.asarray(y, dtype=float).ravel()
        g = self.grid
        G = len(g)
        w = np.zeros(G)
        n = max(len(y), 1)          # negative arguments contribute U = 0
        y = y[y >= 0]
        inside = y <= g[-1]
        yi = y[inside]
        if self.kind == "step":
            idx = np.clip(np.searchsorted(g, yi, side="right") - 1, 0, G - 1)
            w += np.bincount(idx, minlength=G)
        else:
            hi = np.clip(np.searchsorted(g, yi, side="right"), 1, G - 1)
            lo = hi - 1
            frac = np.clip((yi - g[lo]) / (g[hi] - g[lo]), 0.0, 1.0)
            w += np.bincount(lo, 1.0 - frac, minlength=G)
            w += np.bincount(hi, frac, minlength=G)
        out = y[~inside]
        if out.size:
            half = G // 2
            gt = g[half:]
            c = np.zeros(G)
            c[half:] = (gt - gt.mean()) / np.sum((gt - gt.mean()) ** 2)
            w[-1] += out.size
            w += c * np.sum(out - g[-1])
        return w / n


def _ladder_counts(step, grid, trials, horizon, rng, descending, batch=4096,
                   with_cov=False):
    """Per-grid mean/se of ladder counts, complete-case on censoring.

    Works on ``w = -S`` (descending) or ``w = S`` (ascending); ladder points
    are strict new maxima of ``w`` with value ``v``.  A point counts at grid
    value ``x`` iff ``v <= x`` (descending, i.e. ``S >= -x``) or ``v < x``
    (ascending).  Later ladder values exceed the current one, so counts at
    every ``x <= v`` are final once the running level reaches ``v``; a
    trajectory stops when that covers the whole grid.  If the horizon comes
    first with level ``v*``, the trajectory is used for ``x <= v*`` only and
    counts as censored above.
    """
    grid = np.asarray(grid, dtype=float)
    G = len(grid)
    x_max = grid[-1]
    side = "left" if descending else "right"
    sign = -1.0 if descending else 1.0
    s1 = np.zeros(G)
    s2 = np.zeros(G)
    n_ok = np.zeros(G)
    cross = np.zeros((G, G)) if with_cov else None
    n_full = 0
    done = 0
    while done < trials:
        B = min(batch, trials - done)
        diff = np.zeros((B, G + 1), dtype=np.int64)
        level = np.zeros(B)      # running max of w
        pos = np.zeros(B)        # current w
        t = np.zeros(B, dtype=np.int64)
        vfin = np.full(B, np.inf)
        active = np.arange(B) if x_max > 0 else np.empty(0, dtype=int)
        chunk = 32
        while active.size:
            C = int(min(chunk, horizon - t[active].min()))
            w = pos[active, None] + sign * np.cumsum(step.sample(rng, (active.size, C)), axis=1)
            cm = np.maximum.accumulate(np.concatenate((level[active, None], w), axis=1), axis=1)
            is_new = w > cm[:, :-1]
            tt = t[active, None] + np.arange(1, C + 1)[None, :]
            is_new &= tt <= horizon
            stop = is_new & (w >= x_max)
            has_stop = stop.any(axis=1)
            first_stop = np.where(has_stop, stop.argmax(axis=1), C)
            valid = is_new & (np.arange(C)[None, :] <= first_stop[:, None])
            r, c = np.nonzero(valid)
            np.add.at(diff, (active[r], np.searchsorted(grid, w[r, c], side=side)), 1)
            pos[active] = w[:, -1]
            level[active] = cm[:, -1]
            t[active] += C
            timed_out = (~has_stop) & (t[active] >= horizon)
            vfin[active[timed_out]] = level[active[timed_out]]
            active = active[~(has_stop | timed_out)]
            chunk = min(chunk * 2, max(32, 4_000_000 // max(active.size, 1)))
        counts = (1 + np.cumsum(diff[:, :G], axis=1)).astype(float)
        ok = grid[None, :] <= vfin[:, None]
        s1 += np.where(ok, counts, 0).sum(axis=0)
        s2 += np.where(ok, counts ** 2, 0).sum(axis=0)
        n_ok += ok.sum(axis=0)
        if with_cov:
            full = ok[:, -1]
            cross += counts[full].T @ counts[full]
            n_full += int(full.sum())
        done += B
    mean = s1 / np.maximum(n_ok, 1)
    var = np.maximum(s2 / np.maximum(n_ok, 1) - mean ** 2, 0.0) * n_ok / np.maximum(n_ok - 1, 1)
    se = np.sqrt(var / np.maximum(n_ok, 1))
    censored = 1.0 - n_ok / trials
    cov = None
    if with_cov:
        # covariance of the mean, from trajectories complete on the whole grid
        cov = (cross / max(n_full, 1) - np.outer(mean, mean)) / max(n_full - 1, 1)
        d = np.sqrt(np.maximum(np.diag(cov), 1e-300))
        cov = cov * np.outer(se / d, se / d)          # rescale to per-point se
    return mean, se, censored, cov


def estimate_renewal(step, grid, trials: int, rng: np.random.Generator,
                     horizon: int = 10**7, with_V: bool = True,
                     kind: str | None = None, with_cov: bool = False) -> RenewalTable:
    """Monte Carlo renewal table for ``U`` (and optionally ``V``).

    ``with_cov`` additionally stores the covariance matrix of ``U_hat``
    across grid points, used to propagate table error into functionals
    that are linear in ``U``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must start at 0 and increase")
    if kind is None:
        kind = "step" if isinstance(step, LatticeWalkSpec) else "linear"
    U, Use, cens, cov = _ladder_counts(step, grid, trials, horizon, rng, True,
                                       with_cov=with_cov)
    V = Vse = None
    if with_V:
        V, Vse, _, _ = _ladder_counts(step, grid, trials, horizon, rng, False)
    if cens.max() > 0.01:
        worst = int(np.argmax(cens))
        warnings.warn(
            f"renewal censoring {cens[worst]:.2%} at x={grid[worst]:g}; the "
            f"complete-case estimate there may be off by up to that fraction "
            f"of the mean count ({cens[worst] * U[worst]:.3g})", RuntimeWarning)
    return RenewalTable(grid, U, Use, V, Vse, trials, cens, kind, U_cov=cov)


def estimate_U(step, grid, trials: int, rng: np.random.Generator,
               horizon: int = 10**7, kind: str | None = None,
               with_cov: bool = False) -> RenewalTable:
    return estimate_renewal(step, grid, trials, rng, horizon, with_V=False,
                            kind=kind, with_cov=with_cov)


# ---------------------------------------------------------------------------
# exact lattice engine and Spitzer series
# ---------------------------------------------------------------------------

_MAX_SPAN = 50_000_000


def _lattice_kernel(spec: LatticeWalkSpec):
    lo, hi = spec.support[0], spec.support[-1]
    ker = np.zeros(hi - lo + 1)
    for s, p in zip(spec.support, spec.probs):
        ker[s - lo] += p
    return lo, hi, ker


def exact_nonneg_probs(spec: LatticeWalkSpec, N: int) -> np.ndarray:
    """``q_k = P(S_k >= 0)`` for ``k = 1..N`` by dynamic programming."""
    lo, hi, ker = _lattice_kernel(spec)
    if N * (hi - lo) + 1 > _MAX_SPAN:
        raise OverflowError("lattice span exceeds the addressable range")
    dist = np.array([1.0])
    origin = 0              # index of the value 0 in dist
    q = np.empty(N)
    for k in range(N):
        dist = np.convolve(dist, ker)
        origin -= lo
        q[k] = dist[max(origin, 0):].sum() if origin < len(dist) else 0.0
    return np.minimum(q, 1.0)


def killed_walk_probs(spec: LatticeWalkSpec, N: int, x: float) -> np.ndarray:
    """``d_j = P(S_j >= -x; S_1, ..., S_j < 0)`` for ``j = 0..N`` (``d_0 = 1``)."""
    lo, hi, ker = _lattice_kernel(spec)
    if N * (hi - lo) + 1 > _MAX_SPAN:
        raise OverflowError("lattice span exceeds the addressable range")
    xf = math.floor(x)
    dist = np.array([1.0])
    origin = 0
    out = np.empty(N + 1)
    out[0] = 1.0
    for j in range(1, N + 1):
        dist = np.convolve(dist, ker)
        origin -= lo
        if origin < len(dist):
            dist[max(origin, 0):] = 0.0    # killed on S_j >= 0
        start = origin - xf
        out[j] = dist[max(start, 0):].sum() if start < len(dist) else 0.0
    return out


def ladder_height_law(spec: LatticeWalkSpec) -> np.ndarray:
    """``f_j = P(S_T = -j)``, ``j = 1..d``, for ``T`` the first time ``S < 0``.

    The overshoot below zero is at most the largest down-jump ``d``, so the
    law is finite (defective when the walk drifts up).  ``h_j(s) = P_s(S_T = -j)``
    is bounded and harmonic on ``s >= 0``; it is a combination of ``z^s``
    over the roots of ``E z^X = 1`` inside the unit disk, plus a constant
    when the walk does not drift up.  The ``d`` boundary values
    ``h_j(-i) = 1{i = j}`` fix the coefficients.
    """
    lo, hi, ker = _lattice_kernel(spec)
    if lo >= 0:
        return np.zeros(0)
    d = -lo
    poly = ker.copy()           # coefficient of z^(k - lo), k = lo..hi
    poly[d] -= 1.0
    # divide out the root z = 1 (double when the mean vanishes) before root finding
    coeffs = poly[::-1]
    zero_mean = abs(spec.mean) <= 1e-12
    for _ in range(2 if zero_mean else 1):
        coeffs = np.polydiv(coeffs, [1.0, -1.0])[0]
    roots = np.roots(coeffs) if len(coeffs) > 1 else np.empty(0)
    basis = list(roots[np.abs(roots) < 1.0])
    if spec.mean <= 1e-12:
        basis.append(1.0 + 0j)
    if len(basis) != d:
        raise ArithmeticError(f"expected {d} bounded harmonic modes, found {len(basis)}")
    z = np.asarray(basis)
    A = z[None, :] ** (-np.arange(1, d + 1, dtype=float))[:, None]   # rows: s = -1..-d
    if np.linalg.cond(A) > 1e10:
        raise ArithmeticError("repeated characteristic roots; ladder law is ill-conditioned")
    f = np.linalg.solve(A.T, np.ones(d, dtype=complex)).real
    return np.clip(f, 0.0, 1.0)


def spitzer_transform(q) -> tuple[np.ndarray, np.ndarray]:
    """``(ell, m)`` from ``q_1..q_N`` via the exponential power-series recurrence.

    ``n ell_n = sum_{k=1}^n q_k ell_{n-k}`` and ``n m_n = sum (1 - q_k) m_{n-k}``,
    the coefficient form of ``sum s^n ell_n = exp(sum s^k q_k / k)``.
    """
    q = np.asarray(q, dtype=float)
    N = len(q)
    ell = np.empty(N + 1)
    m = np.empty(N + 1)
    ell[0] = m[0] = 1.0
    qc = 1.0 - q
    for n in range(1, N + 1):
        ell[n] = np.dot(q[:n], ell[n - 1::-1]) / n
        m[n] = np.dot(qc[:n], m[n - 1::-1]) / n
    return ell, m


def reconstruct_q(ell) -> np.ndarray:
    """Inverse of :func:`spitzer_transform` on ``ell`` (log-differentiation)."""
    ell = np.asarray(ell, dtype=float)
    N = len(ell) - 1
    q = np.empty(N)
    for n in range(1, N + 1):
        q[n - 1] = (n * ell[n] - np.dot(q[: n - 1], ell[n - 1:0:-1])) / ell[0]
    return q


def lower_min_probs(spec: LatticeWalkSpec, N: int, x: float,
                    ell: np.ndarray | None = None) -> np.ndarray:
    """``P(L_n >= -x)`` for ``n = 0..N`` as ``sum_j d_j ell_{n-j}``.

    This is the coefficient identity behind the renewal decomposition of
    the minimum, with ``d`` from :func:`killed_walk_probs`.
    """
    if ell is None:
        ell, _ = spitzer_transform(exact_nonneg_probs(spec, N))
    d = killed_walk_probs(spec, N, x)
    return np.convolve(d, ell[: N + 1])[: N + 1]


@dataclass
class SpitzerSeries:
    """``q_1..q_N`` with derived ``ell_0..ell_N`` and ``m_0..m_N``.

    ``q_func`` (optional, vectorised in ``k``) supplies ``q_k`` beyond ``N``
    for :func:`lambda_eval`; it is how synthetic series are represented.
    """

    q: np.ndarray
    ell: np.ndarray
    m: np.ndarray
    provenance: str = "exact"
    q_se: np.ndarray | None = None
    q_func: Callable | None = None
    lam_cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_q(cls, q, provenance="exact", q_se=None, q_func=None):
        q = np.asarray(q, dtype=float)
        ell, m = spitzer_transform(q)
        return cls(q, ell, m, provenance, q_se, q_func)

    @classmethod
    def from_lattice(cls, spec: LatticeWalkSpec, N: int):
        return cls.from_q(exact_nonneg_probs(spec, N), provenance="exact")

    @classmethod
    def from_function(cls, q_func, N: int, provenance="synthetic"):
        k = np.arange(1, N + 1, dtype=float)
        return cls.from_q(np.asarray(q_func(k), dtype=float), provenance, q_func=q_func)

    @classmethod
    def from_grid(cls, ks, q_grid, N: int, q_se=None):
        """Interpolate Monte Carlo ``q`` on a dyadic grid (linear in ``log k``).

        Beyond the last grid point the last value is held constant, which is
        how ``q`` is extended for :func:`lambda_eval` as well.
        """
        ks = np.asarray(ks, dtype=float)
        qg = np.asarray(q_grid, dtype=float)
        lk = np.log(ks)

        def q_func(k):
            return np.interp(np.log(np.asarray(k, dtype=float)), lk, qg)

        out = cls.from_function(q_func, N, provenance="monte-carlo")
        if q_se is not None:
            out.q_se = np.interp(np.log(np.arange(1, N + 1)), lk, np.asarray(q_se, float))
        return out

    @property
    def N(self) -> int:
        return len(self.q)

    def dual(self) -> "SpitzerSeries":
        """Series for ``-S``: ``q`` replaced by ``1 - q``."""
        f = None if self.q_func is None else (lambda k, g=self.q_func: 1.0 - g(k))
        return SpitzerSeries(1.0 - self.q, self.m.copy(), self.ell.copy(),
                             self.provenance, self.q_se, f)

    def convolution_residual(self) -> np.ndarray:
        """``sum_{k<=n} ell_k m_{n-k} - 1`` for ``n = 0..N``."""
        N = self.N
        conv = np.convolve(self.ell, self.m)[: N + 1]
        return conv - 1.0

    def lam(self, n: float) -> float:
        if n not in self.lam_cache:
            self.lam_cache[n] = lambda_eval(self, n)
        return self.lam_cache[n]


def slowly_varying_parts(series: SpitzerSeries, n: int) -> dict:
    """``L22 = n ell_n``, ``L33 = ell_n``, ``L44 = m_n``, ``L55 = n m_n`` and
    the partial-sum versions ``l_hat_ii(n) = sum_{k<=n} L_ii(k)/k``."""
    k = np.arange(1, n + 1)
    ell, m = series.ell[1: n + 1], series.m[1: n + 1]
    return {
        "L22": n * series.ell[n], "L33": series.ell[n],
        "L44": series.m[n], "L55": n * series.m[n],
        "l22_hat": float(np.sum(ell)), "l33_hat": float(np.sum(ell / k)),
        "l44_hat": float(np.sum(m / k)), "l55_hat": float(np.sum(m)),
    }


def _series_tail(q_func, k0: float, beta: float) -> tuple[float, float]:
    """``sum_{k >= k0} q(k) e^{-beta k} / k`` by Euler-Maclaurin on ``u = log k``."""
    def h(k):
        return float(q_func(np.array([k]))[0]) * math.exp(-beta * k) / k

    def integrand(u):
        k = math.exp(u)
        return float(q_func(np.array([k]))[0]) * math.exp(-beta * k)

    u0 = math.log(k0)
    u_cut = math.log(60.0 / beta) if beta > 0 else math.inf
    if u_cut <= u0:
        u_cut = u0 + 1.0
    knee = math.log(1.0 / beta)
    pts = [u0, min(max(knee, u0), u_cut), u_cut]
    total = 0.0
    err = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            val, e = integrate.quad(integrand, a, b, limit=400, epsabs=1e-14, epsrel=1e-12)
            total += val
            err += e
    d = 1e-3 * k0
    dh = (h(k0 + d) - h(k0 - d)) / (2 * d)
    total += 0.5 * h(k0) - dh / 12.0
    return total, err + abs(dh) / 12.0 * 1e-3


def lambda_eval(series: SpitzerSeries, n: float, full_output: bool = False):
    """``Lambda(n) = exp(sum_k (q_k/k) (1 - 1/n)^k)``.

    The sum is truncated at ``K = ceil(20 n)`` terms; the geometric tail bound
    ``max q * s^(K+1) / ((K+1)(1-s))`` on the exponent is returned with
    ``full_output``.  If ``K`` exceeds the stored series and ``q_func`` is
    available, the remainder is summed analytically instead.
    """
    if n < 2:
        raise ValueError("lambda_eval needs n >= 2")
    logs = math.log1p(-1.0 / n)
    beta = -logs
    K = math.ceil(20 * n)
    N = series.N
    if K <= N:
        k = np.arange(1, K + 1, dtype=float)
        expo = float(np.sum(series.q[:K] / k * np.exp(k * logs)))
        qmax = float(np.max(np.abs(series.q))) if N else 0.0
        bound = qmax * math.exp((K + 1) * logs) / ((K + 1) * beta)
    elif series.q_func is not None:
        k0 = min(N, 20_000) if N else 0
        k = np.arange(1, k0 + 1, dtype=float)
        q_head = series.q[:k0]
        expo = float(np.sum(q_head / k * np.exp(k * logs)))
        tail, bound = _series_tail(series.q_func, k0 + 1.0, beta)
        expo += tail
    else:
        raise ValueError(f"series too short: lambda_eval({n}) needs K={K} terms, have {N}")
    val = math.exp(expo)
    if full_output:
        return val, bound
    return val


def example1_series(p: float, q: float, m: float, N: int = 20_000) -> SpitzerSeries:
    """Synthetic ``q_k = pm / ((p - q) ln k)`` for ``k >= 2`` (``q_1 = 0``).

    Values above one for small ``k`` are kept as given; only ``Lambda`` is
    meant to be computed from this series.
    """
    A = p * m / (p - q)

    def q_func(k):
        k = np.asarray(k, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(k >= 2, A / np.log(np.maximum(k, 2.0)), 0.0)

    k = np.arange(1, N + 1, dtype=float)
    qv = q_func(k)
    return SpitzerSeries(qv, np.array([1.0]), np.array([1.0]), "synthetic", None, q_func)


def constant_series(rho: float, N: int = 20_000) -> SpitzerSeries:
    def q_func(k):
        return np.full(np.shape(k), float(rho))
    return SpitzerSeries.from_function(q_func, N)


@dataclass
class ConditionCReport:
    theta: float
    j: np.ndarray
    lam: np.ndarray
    partial_sums: np.ndarray
    exponent: float
    expected_exponent: float | None
    consistent: bool


def _g_lambda(series, theta, j):
    return np.array([lambda_eval(series, math.exp(float(jj) ** (1.0 - theta))) for jj in j])


def condition_C_check(series: SpitzerSeries, theta: float | None = 0.1,
                      p: float | None = None, q: float | None = None,
                      m: float | None = None, j_max: int = 200) -> ConditionCReport:
    """Partial sums of ``1/Lambda(g(j))`` with ``g(j) = exp(j^(1-theta))``.

    The decay exponent is fitted on ``j in [j_max/2, j_max]``; the series is
    declared consistent with convergence when it exceeds one.  With
    ``theta=None`` a ladder of thetas is tried and the first consistent one
    (or the last tried) is reported.
    """
    if theta is None:
        rep = None
        for th in (0.5, 0.25, 0.1, 0.05, 0.02, 0.01):
            rep = condition_C_check(series, th, p, q, m, j_max)
            if rep.consistent:
                return rep
        return rep
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    j = np.arange(1, j_max + 1)
    lam = _g_lambda(series, theta, j)
    inv = 1.0 / lam
    fit = j >= j_max // 2
    slope = np.polyfit(np.log(j[fit]), np.log(inv[fit]), 1)[0]
    expected = None
    if p is not None and q is not None and m is not None and p != q:
        expected = (1.0 - theta) * p * m / (p - q)
    return ConditionCReport(theta, j, lam, np.cumsum(inv), float(-slope), expected,
                            bool(-slope > 1.0))


def lambda_lower_bound_check(series: SpitzerSeries, p: float, q: float, m: float,
                             theta: float, eps: float, j_max: int = 200):
    """Smallest ``j0`` with ``Lambda(e^{j^(1-theta)}) >= j^((1-eps)(1-theta)pm/(p-q))``
    for every ``j in [j0, j_max]``; ``None`` if it fails at ``j_max``."""
    j = np.arange(1, j_max + 1)
    lam = _g_lambda(series, theta, j)
    expo = (1.0 - eps) * (1.0 - theta) * p * m / (p - q)
    ok = np.log(lam) >= expo * np.log(j)
    if not ok[-1]:
        return None, j, lam
    bad = np.flatnonzero(~ok)
    j0 = int(j[bad[-1] + 1]) if bad.size else 1
    return j0, j, lam


def asymptotic_rhs(law: StepLaw, series: SpitzerSeries, n: int, which: str) -> float:
    """Right-hand sides of the four minimum/maximum asymptotics.

    ``Ber1``: ``L(|h_n|)/|h_n| * Lambda(n)`` (p>q, for ``P(L_n >= 0)``);
    ``Ber2``: ``1/Lambda~(n)`` (p<q, ``P(L_n >= 0)``);
    ``Ber3``: ``1/Lambda(n)`` (p>q, ``P(M_n < 0)``);
    ``Ber4``: ``L(|h_n|)/|h_n| * Lambda~(n)`` (p<q, ``P(M_n < 0)``).
    """
    need = {"Ber1": "p>q", "Ber3": "p>q", "Ber2": "p<q", "Ber4": "p<q"}
    if which not in need:
        raise ValueError(f"unknown asymptotic {which!r}")
    if law.regime != need[which]:
        raise ValueError(f"{which} requires {need[which]}, law is {law.regime}")
    if which == "Ber3":
        return 1.0 / lambda_eval(series, n)
    if which == "Ber2":
        return 1.0 / lambda_eval(series.dual(), n)
    h = abs(scale_h(law, n))
    factor = float(law.sv(h)) / h
    if which == "Ber1":
        return factor * lambda_eval(series, n)
    return factor * lambda_eval(series.dual(), n)


# ---------------------------------------------------------------------------
# Monte Carlo on paths
# ---------------------------------------------------------------------------

def _path_batches(step, n_max, trials, rng, batch=None):
    if batch is None:
        batch = max(1, min(trials, 2_000_000 // max(n_max, 1)))
    done = 0
    while done < trials:
        B = min(batch, trials - done)
        S = np.cumsum(step.sample(rng, (B, n_max)), axis=1)
        yield S
        done += B


def estimate_nonneg_probs(step, ks, trials: int, rng: np.random.Generator):
    """``P(S_k >= 0)`` on a grid of ``k`` with common random numbers."""
    ks = np.asarray(ks, dtype=int)
    hits = np.zeros(len(ks))
    for S in _path_batches(step, int(ks.max()), trials, rng):
        hits += (S[:, ks - 1] >= 0).sum(axis=0)
    qh = hits / trials
    return qh, np.sqrt(qh * (1 - qh) / trials)


def min_probabilities(step, ns, xs, trials: int, rng: np.random.Generator,
                      track_max: bool = False, batch: int = 8192):
    """Counts of ``{L_n >= -x}`` (and optionally ``{M_n < 0}``) on grids.

    Returns ``(count_L, count_M)`` with ``count_L`` of shape
    ``(len(ns), len(xs))``; ``count_M`` is None unless ``track_max``.  Paths
    whose minimum falls below ``-max(xs)`` can no longer contribute to
    ``count_L`` and are dropped (exact), unless the maximum is tracked.
    """
    ns = np.asarray(sorted(ns), dtype=int)
    xs = np.asarray(xs, dtype=float)
    floor = -xs.max()
    cL = np.zeros((len(ns), len(xs)))
    cM = np.zeros(len(ns)) if track_max else None
    n_max = int(ns[-1])
    done = 0
    while done < trials:
        B = min(batch, trials - done)
        S = np.zeros(B)
        L = np.zeros(B)
        M = np.full(B, -np.inf)
        active = np.arange(B)
        k = 0
        j = 0
        while active.size and k < n_max:
            C = int(min(ns[j] - k, max(64, 2_000_000 // active.size)))
            W = S[active, None] + np.cumsum(step.sample(rng, (active.size, C)), axis=1)
            S[active] = W[:, -1]
            L[active] = np.minimum(L[active], W.min(axis=1))
            if track_max:
                M[active] = np.maximum(M[active], W.max(axis=1))
            k += C
            if k == ns[j]:
                cL[j] += (L[active, None] >= -xs[None, :]).sum(axis=0)
                if track_max:
                    cM[j] += (M[active] < 0).sum()
                j += 1
            if not track_max:
                active = active[L[active] >= floor]
        done += B
    return cL, cM


@dataclass
class RatioRow:
    n: int
    r: float
    r_se: float
    U_hat: float
    U_se: float
    gap: float
    gap_se: float
    events: int


def ratio_U_check(step, renewal: RenewalTable, x: float, ns, trials: int,
                  rng: np.random.Generator) -> list[RatioRow]:
    """``r_n(x) = P(L_n >= -x) / P(L_n >= 0)`` against ``U(x)``.

    The ratio standard error uses the delta method for ``1 + A/B`` with
    ``A = P(-x <= L_n < 0)`` and ``B = P(L_n >= 0)`` (disjoint events).
    """
    if x not in set(np.round(renewal.grid, 12)):
        raise ValueError("x must lie on the renewal grid")
    ns = np.asarray(ns, dtype=int)
    cL, _ = min_probabilities(step, ns, [0.0, x], trials, rng)
    u = float(renewal.U(x))
    use = float(renewal.U_stderr(x))
    rows = []
    for i, n in enumerate(ns):
        b = cL[i, 0] / trials
        a = (cL[i, 1] - cL[i, 0]) / trials
        if cL[i, 0] == 0:
            raise ZeroDivisionError(f"no path with L_n >= 0 at n={n}; increase trials")
        r = 1.0 + a / b
        var = (a * (1 - a) / b ** 2 + a ** 2 * b * (1 - b) / b ** 4
               + 2 * a * a * b / b ** 3) / trials   # cov(A,B) = -ab
        r_se = math.sqrt(max(var, 0.0))
        rows.append(RatioRow(int(n), r, r_se, u, use, abs(r - u),
                             math.hypot(r_se, use), int(cL[i, 0])))
    return rows
