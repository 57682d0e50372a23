"""Survival of the branching process in the random environment.

For linear-fractional laws ``1/(1 - f(s)) = e^{-x}/(1 - s) + eta/2``, so the
composition ``f_{0,n}`` is again linear-fractional and

    1 - f_{0,n}(0) = 1 / (e^{-S_n} + (eta/2) sum_{k<n} e^{-S_k}),

the product of the 2x2 matrices ``[[e^{-X_k}, eta/2], [0, 1]]``.  It is
evaluated with ``logaddexp`` so that single steps of size several hundred
neither overflow nor lose the other terms.  Other families go through
backward composition on the complement ``t = 1 - s``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .environment import (EnvironmentDriver, EnvironmentSequence, OffspringLaw,
                          draw_environment, gf_complement_vec, _lf_logs)

__all__ = [
    "GFComposer",
    "SurvivalEstimate",
    "RatioExperiment",
    "InsufficientTrials",
    "quenched_extinction",
    "quenched_survival",
    "survival_curve",
    "log_survival_lf",
    "survival_lower_bound",
    "annealed_survival",
    "survival_by_tau",
    "TauSplit",
    "theorem_ratio",
    "ratio_moments",
    "RatioMoments",
    "simulate_population",
    "PopulationRun",
]

_LF = ("linear_fractional", "geometric")


class InsufficientTrials(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# quenched quantities
# ---------------------------------------------------------------------------

def log_survival_lf(X, eta_: float) -> np.ndarray:
    """``log(1 - f_{0,n}(0))`` for every prefix length ``n = 0..N``.

    ``X`` has shape ``(N,)`` or ``(B, N)``; the result has one more column.
    """
    X = np.asarray(X, dtype=float)
    one = X.ndim == 1
    X = np.atleast_2d(X)
    B, N = X.shape
    S = np.concatenate((np.zeros((B, 1)), np.cumsum(X, axis=1)), axis=1)
    out = np.empty((B, N + 1))
    out[:, 0] = 0.0
    if N:
        if eta_ > 0:
            acc = np.logaddexp.accumulate(-S[:, :-1], axis=1) + math.log(eta_ / 2.0)
            out[:, 1:] = -np.logaddexp(-S[:, 1:], acc)
        else:
            out[:, 1:] = S[:, 1:]
    out = np.minimum(out, 0.0)
    return out[0] if one else out


def _generic_survival(family, X, eta_, n):
    """Backward composition of complements: ``t <- 1 - f_k(1 - t)``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    t = np.ones(X.shape[0])
    for k in range(n - 1, -1, -1):
        t = gf_complement_vec(family, X[:, k], eta_, t)
        if np.any((t < 0) | (t > 1) | ~np.isfinite(t)):
            raise FloatingPointError("generating function left [0, 1]")
    return t


@dataclass(frozen=True)
class GFComposer:
    """Composition ``f_{0,n}`` over an environment.

    ``mode`` is ``'moebius'`` (exact projective product, linear-fractional
    families only) or ``'generic'`` (backward numeric composition).
    """

    env: EnvironmentSequence
    mode: str = "auto"

    def __post_init__(self):
        mode = self.mode
        if mode == "auto":
            mode = "moebius" if self.env.family in _LF else "generic"
        if mode not in ("moebius", "generic"):
            raise ValueError("mode must be 'moebius', 'generic' or 'auto'")
        if mode == "moebius" and self.env.family not in _LF:
            raise ValueError("Moebius composition needs a linear-fractional family")
        object.__setattr__(self, "mode", mode)

    def survival(self, n: int) -> float:
        if n > len(self.env):
            raise ValueError("environment shorter than n")
        if n == 0:
            return 1.0
        if self.mode == "moebius":
            return float(np.exp(log_survival_lf(self.env.X[:n], self.env.eta)[-1]))
        return float(_generic_survival(self.env.family, self.env.X[:n], self.env.eta, n)[0])

    def extinction(self, n: int) -> float:
        return 1.0 - self.survival(n)

    def curve(self) -> np.ndarray:
        """Survival ``1 - f_{0,n}(0)`` for ``n = 0..len(env)``."""
        if self.mode == "moebius":
            return np.exp(log_survival_lf(self.env.X, self.env.eta))
        return np.array([self.survival(n) for n in range(len(self.env) + 1)])


def quenched_extinction(env: EnvironmentSequence, n: int, mode: str = "auto") -> float:
    """``f_{0,n}(0)``: extinction by generation ``n`` given the environment."""
    return GFComposer(env, mode).extinction(n)


def quenched_survival(env: EnvironmentSequence, n: int, mode: str = "auto") -> float:
    return GFComposer(env, mode).survival(n)


def survival_curve(env: EnvironmentSequence, mode: str = "auto") -> np.ndarray:
    return GFComposer(env, mode).curve()


def survival_lower_bound(env: EnvironmentSequence, n: int, start: int = 0) -> float:
    """``1 / (e^{-S_n} + sum_{k=start}^{n-1} eta_{k+1} e^{-S_k})``.

    The default ``start=0`` is the form implied by iterating
    ``1/(1 - f(s)) <= 1/(f'(1)(1 - s)) + eta``; ``start=1`` omits the
    ``k = 0`` term and can exceed the survival probability (already at
    ``n = 1`` it equals ``e^{S_1}``).
    """
    if n > len(env):
        raise ValueError("environment shorter than n")
    S = env.S[: n + 1]
    terms = [-S[n]]
    if env.eta > 0 and n > start:
        terms.extend(math.log(env.eta) - S[start:n])
    return float(math.exp(-np.logaddexp.reduce(np.asarray(terms))))


# ---------------------------------------------------------------------------
# annealed survival
# ---------------------------------------------------------------------------

@dataclass
class SurvivalEstimate:
    n: int
    value: float
    stderr: float
    trials: int
    method: str = "DirectGF"

    def __post_init__(self):
        if not -1e-12 <= self.value <= 1 + 1e-12:
            raise ValueError("survival estimate outside [0, 1]")
        if self.stderr < 0:
            raise ValueError("negative stderr")


def _lf_final_survival(X, eta_):
    """Survival at the last column only: one shifted log-sum-exp per row."""
    S = np.cumsum(X, axis=1)
    if eta_ <= 0:
        return np.exp(np.minimum(S[:, -1], 0.0))
    negprev = np.concatenate((np.zeros((len(S), 1)), -S[:, :-1]), axis=1)
    top = negprev.max(axis=1)
    acc = top + np.log(np.exp(negprev - top[:, None]).sum(axis=1)) + math.log(eta_ / 2.0)
    return np.exp(np.minimum(-np.logaddexp(-S[:, -1], acc), 0.0))


def _quenched_batch(driver: EnvironmentDriver, X, n):
    if driver.family in _LF:
        return _lf_final_survival(X[:, :n], driver.eta)
    return _generic_survival(driver.family, X, driver.eta, n)


def annealed_survival(driver: EnvironmentDriver, n: int, trials: int,
                      rng: np.random.Generator, batch: int | None = None) -> SurvivalEstimate:
    """Mean of the quenched survival ``1 - f_{0,n}(0)`` over environment draws.

    Conditioning on the environment removes the population noise entirely;
    the standard error is that of the quenched survivals.
    """
    if trials < 1000:
        raise ValueError("trials must be at least 1000")
    if batch is None:
        batch = max(1, min(trials, 4_000_000 // max(n, 1)))
    mean = m2 = 0.0
    done = 0
    while done < trials:
        B = min(batch, trials - done)
        X = np.asarray(driver.draw_steps(rng, (B, n)), dtype=float).reshape(B, n)
        v = _quenched_batch(driver, X, n) if n else np.ones(B)
        # merge centred batch moments (no cancellation for near-constant values)
        mb = float(v.mean())
        delta = mb - mean
        mean += delta * B / (done + B)
        m2 += float(np.sum((v - mb) ** 2)) + delta ** 2 * done * B / (done + B)
        done += B
    var = m2 / (trials - 1)
    return SurvivalEstimate(n, float(mean), math.sqrt(var / trials), trials, "DirectGF")


# ---------------------------------------------------------------------------
# streamed moments along environment paths
# ---------------------------------------------------------------------------

@dataclass
class RatioMoments:
    """Sums over paths of ``v = (s_{n_1}, ..., s_{n_J}, b_{n_1}, ..., b_{n_J})``.

    ``s_n`` is the quenched survival and ``b_n = 1{L_n >= 0}``; ``tau`` holds
    per-block sums of ``s_n 1{tau_n in block}`` when requested.  Moments add
    across independent chunks.
    """

    ns: np.ndarray
    trials: int
    total: np.ndarray
    cross: np.ndarray
    killed_bound: float = 0.0
    tau_blocks: np.ndarray | None = None
    tau_cross: np.ndarray | None = None

    def merge(self, other: "RatioMoments") -> "RatioMoments":
        if not np.array_equal(self.ns, other.ns):
            raise ValueError("cannot merge moments on different grids")

        def add(a, b):
            return None if a is None else a + b

        return RatioMoments(self.ns, self.trials + other.trials, self.total + other.total,
                            self.cross + other.cross,
                            max(self.killed_bound, other.killed_bound),
                            add(self.tau_blocks, other.tau_blocks),
                            add(self.tau_cross, other.tau_cross))


def ratio_moments(driver: EnvironmentDriver, ns, trials: int, rng: np.random.Generator,
                  kill: float = 40.0, batch: int = 4096,
                  tau_split: tuple[int, float] | None = None) -> RatioMoments:
    """Stream environment paths up to ``max(ns)`` and collect :class:`RatioMoments`.

    Linear-fractional families only.  A path is dropped once its running
    minimum is seen below ``-kill``: afterwards ``1{L_n >= 0} = 0`` exactly and
    the quenched survival is at most ``(2/eta) e^{-kill}``, the reported
    ``killed_bound``.  The check runs at the end of each block of steps, and
    blocks always end on grid points, so no path is dropped before its
    minimum has crossed.
    """
    if driver.family not in _LF:
        raise ValueError("streamed survival moments need a linear-fractional family")
    ns = np.asarray(sorted(ns), dtype=int)
    J = len(ns)
    n_max = int(ns[-1])
    leta = math.log(driver.eta / 2.0)
    total = np.zeros(2 * J)
    cross = np.zeros((2 * J, 2 * J))
    if tau_split is not None:
        N_split, eps = tau_split
        tb = np.zeros((J, 3))
        tc = np.zeros((J, 3, 3))
    done = 0
    while done < trials:
        B = min(batch, trials - done)
        S = np.zeros(B)
        L = np.zeros(B)
        A = np.full(B, -np.inf)     # log sum_{j<k} e^{-S_j}
        tau = np.zeros(B, dtype=np.int64)
        V = np.zeros((B, 2 * J))
        T3 = np.zeros((B, J, 3)) if tau_split is not None else None
        active = np.arange(B)
        k = 0
        j = 0
        while active.size and k < n_max:
            C = int(min(ns[j] - k, max(64, 2_000_000 // active.size)))
            X = np.asarray(driver.draw_steps(rng, (active.size, C)), dtype=float)
            W = S[active, None] + np.cumsum(X, axis=1)
            prev = np.concatenate((S[active, None], W[:, :-1]), axis=1)
            A_new = np.logaddexp(A[active], np.logaddexp.reduce(-prev, axis=1))
            runmin = np.minimum.accumulate(np.concatenate((L[active, None], W), axis=1), axis=1)
            if T3 is not None:
                # first index of the minimum: strictly new minima only
                newmin = W < runmin[:, :-1]
                has = newmin.any(axis=1)
                last = C - 1 - np.argmax(newmin[:, ::-1], axis=1)
                tau[active] = np.where(has, k + 1 + last, tau[active])
            S[active] = W[:, -1]
            L[active] = runmin[:, -1]
            A[active] = A_new
            k += C
            if k == ns[j]:
                s_n = np.exp(-np.logaddexp(-S[active], leta + A[active]))
                V[active, j] = s_n
                V[active, J + j] = L[active] >= 0
                if T3 is not None:
                    t = tau[active]
                    blk = np.where(t <= N_split, 0, np.where(t <= eps * ns[j], 1, 2))
                    T3[active, j, blk] = s_n
                j += 1
            active = active[L[active] >= -kill]
        total += V.sum(axis=0)
        cross += V.T @ V
        if T3 is not None:
            tb += T3.sum(axis=0)
            tc += np.einsum("bji,bjk->jik", T3, T3)
        done += B
    out = RatioMoments(ns, trials, total, cross, 2.0 / driver.eta * math.exp(-kill))
    if tau_split is not None:
        out.tau_blocks, out.tau_cross = tb, tc
    return out


@dataclass
class RatioExperiment:
    ns: np.ndarray
    survival: np.ndarray
    survival_se: np.ndarray
    nonneg: np.ndarray
    nonneg_se: np.ndarray
    r: np.ndarray
    r_se: np.ndarray
    slope: float
    slope_se: float
    slope_ci: tuple[float, float]
    K_hat: float
    K_se: float
    trials: int
    killed_bound: float

    def as_rows(self) -> list[dict]:
        return [{"n": int(n), "survival": s, "survival_se": sse, "nonneg": b, "nonneg_se": bse,
                 "r": r, "r_se": rse}
                for n, s, sse, b, bse, r, rse in zip(self.ns, self.survival, self.survival_se,
                                                     self.nonneg, self.nonneg_se, self.r, self.r_se)]


def ratio_from_moments(mom: RatioMoments, min_events: int = 25) -> RatioExperiment:
    """Ratios, their delta-method errors and the fitted log-log slope.

    The covariance of the ``2J`` means is estimated from the per-path cross
    moments, so the correlation between grid points (same paths) is kept in
    the slope's standard error.
    """
    ns = mom.ns
    J = len(ns)
    T = mom.trials
    events = mom.total[J:]
    for n, e in zip(ns, events):
        if e < min_events:
            raise InsufficientTrials(f"insufficient trials at n={n}: {int(e)} paths with L_n >= 0")
    mean = mom.total / T
    cov = (mom.cross / T - np.outer(mean, mean)) * T / (T - 1) / T
    s, b = mean[:J], mean[J:]
    logr = np.log(s) - np.log(b)
    G = np.hstack((np.diag(1.0 / s), -np.diag(1.0 / b)))        # d log r / d mean
    cov_lr = G @ cov @ G.T
    if J > 1:
        ln = np.log(ns)
        c = (ln - ln.mean()) / np.sum((ln - ln.mean()) ** 2)
        slope = float(c @ logr)
        slope_se = float(math.sqrt(max(c @ cov_lr @ c, 0.0)))
    else:
        slope = slope_se = math.nan
    r = np.exp(logr)
    r_se = r * np.sqrt(np.maximum(np.diag(cov_lr), 0.0))
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return RatioExperiment(ns, s, se[:J], b, se[J:], r, r_se, slope, slope_se,
                           (slope - 1.96 * slope_se, slope + 1.96 * slope_se),
                           float(r[-1]), float(r_se[-1]), T, mom.killed_bound)


def theorem_ratio(driver: EnvironmentDriver, ns, trials: int, rng: np.random.Generator,
                  kill: float = 40.0) -> RatioExperiment:
    """``r_n = P(Z_n > 0) / P(L_n >= 0)`` on a grid and its log-log slope.

    Both probabilities come from the same environment paths: the numerator
    is the mean quenched survival, the denominator the fraction with
    ``L_n >= 0``.  The last ratio is reported as the constant estimate.
    """
    return ratio_from_moments(ratio_moments(driver, ns, trials, rng, kill))


@dataclass
class TauSplit:
    n: int
    N_split: int
    eps: float
    blocks: np.ndarray
    blocks_se: np.ndarray
    total: float
    total_se: float
    first_share: float
    trials: int


def tau_split_from_moments(mom: RatioMoments, N_split: int, eps: float) -> list[TauSplit]:
    T = mom.trials
    out = []
    for j, n in enumerate(mom.ns):
        m = mom.tau_blocks[j] / T
        cov = (mom.tau_cross[j] / T - np.outer(m, m)) / max(T - 1, 1)
        tot = float(m.sum())
        tot_se = float(math.sqrt(max(cov.sum(), 0.0)))
        out.append(TauSplit(int(n), N_split, eps, m, np.sqrt(np.maximum(np.diag(cov), 0.0)),
                            tot, tot_se, float(m[0] / tot) if tot > 0 else math.nan, T))
    return out


def survival_by_tau(driver: EnvironmentDriver, n, trials: int, rng: np.random.Generator,
                    N_split: int = 32, eps: float = 0.125, kill: float = 40.0):
    """Split ``P(Z_n > 0)`` by the first time ``tau_n`` the minimum is attained.

    Blocks are ``tau_n <= N_split``, ``N_split < tau_n <= eps n`` and
    ``tau_n > eps n``.  ``n`` may be a single value or a grid.  When
    ``N_split >= eps n`` the middle block is empty; when ``n <= N_split``
    everything sits in the first block.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    grid = np.atleast_1d(n)
    mom = ratio_moments(driver, grid, trials, rng, kill, tau_split=(N_split, eps))
    res = tau_split_from_moments(mom, N_split, eps)
    return res[0] if np.ndim(n) == 0 else res


# ---------------------------------------------------------------------------
# population simulation
# ---------------------------------------------------------------------------

@dataclass
class PopulationRun:
    Z: np.ndarray
    extinction_time: int | None
    capped: bool
    capped_at: int | None = None


_SATURATE = 10**15      # stands in for any total far above the population cap


def _offspring_total(law: OffspringLaw, z: int, rng) -> int:
    if z == 0:
        return 0
    if law.family == "poisson":
        if law.log_mean + math.log(z) > math.log(_SATURATE):
            return _SATURATE
        return int(rng.poisson(z * math.exp(law.log_mean)))
    log_b, log_1mb, log_1ma0 = _lf_logs(np.float64(law.log_mean), law.eta)
    p_nonzero = min(math.exp(float(log_1ma0)), 1.0)
    j = int(rng.binomial(z, p_nonzero))
    if j == 0:
        return 0
    q = math.exp(float(log_1mb))          # success probability of the geometric part
    if q >= 1.0:
        return j
    if math.log(j) + float(log_b) - float(log_1mb) > math.log(_SATURATE):
        return _SATURATE
    return j + int(rng.negative_binomial(j, q))


def simulate_population(env: EnvironmentSequence, rng: np.random.Generator,
                        cap: float = 1e9, z0: int = 1) -> PopulationRun:
    """Direct simulation of ``Z_0 = z0, Z_1, ..., Z_n`` in a fixed environment.

    Once ``Z_k`` exceeds ``cap`` the run stops and is flagged capped; such
    runs count as surviving.
    """
    if not 1 <= cap < _SATURATE:
        raise ValueError("cap must lie in [1, 1e15)")
    n = len(env)
    Z = np.zeros(n + 1, dtype=np.int64)
    Z[0] = z0
    laws = env.laws
    for k in range(1, n + 1):
        Z[k] = _offspring_total(laws[k - 1], int(Z[k - 1]), rng)
        if Z[k] == 0:
            return PopulationRun(Z[: k + 1], k, False)
        if Z[k] > cap:
            return PopulationRun(Z[: k + 1], None, True, k)
    return PopulationRun(Z, None, False)


def population_survival(driver: EnvironmentDriver, n: int, trials: int,
                        rng: np.random.Generator, cap: float = 1e9) -> SurvivalEstimate:
    """Fraction of simulated populations alive at ``n`` (capped runs count as alive)."""
    alive = 0
    for _ in range(trials):
        run = simulate_population(draw_environment(driver, n, rng), rng, cap)
        alive += run.extinction_time is None
    p = alive / trials
    return SurvivalEstimate(n, p, math.sqrt(p * (1 - p) / trials), trials, "Population")
