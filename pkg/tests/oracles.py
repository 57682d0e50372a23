"""Independent brute-force oracles used to pin values in the test suite.

Nothing here imports the package; each routine is the slowest obvious way
of computing its quantity.
"""
from __future__ import annotations

import itertools
import math
from fractions import Fraction

import numpy as np


def enumerate_paths(support, probs, n):
    """All ``len(support)**n`` paths of a lattice walk.

    Returns ``(S, w)`` with ``S`` of shape ``(K, n + 1)`` (column 0 is 0)
    and ``w`` the path probabilities.
    """
    steps = np.array(list(itertools.product(support, repeat=n)), dtype=float).reshape(-1, n)
    logp = dict(zip(support, np.log(probs)))
    w = np.exp(np.array([sum(logp[s] for s in row) for row in
                         itertools.product(support, repeat=n)])) if n else np.ones(1)
    S = np.concatenate((np.zeros((len(steps), 1)), np.cumsum(steps, axis=1)), axis=1)
    return S, w


def min_prob(support, probs, n, x):
    """``P(L_n >= -x)`` by enumeration."""
    S, w = enumerate_paths(support, probs, n)
    return float(w[S.min(axis=1) >= -x].sum())


def nonneg_prob(support, probs, n):
    """``P(S_n >= 0)`` by enumeration."""
    S, w = enumerate_paths(support, probs, n)
    return float(w[S[:, -1] >= 0].sum())


def symmetric_ell(n):
    """``P(L_n >= 0)`` for the simple symmetric walk, exactly."""
    return Fraction(math.comb(n, n // 2), 2 ** n)


def duality_U(support, probs, x, n_max):
    """``sum_{n=0}^{n_max} P(S_1..S_n < 0, S_n >= -x)`` by enumeration."""
    total = 1.0
    for n in range(1, n_max + 1):
        S, w = enumerate_paths(support, probs, n)
        neg = (S[:, 1:] < 0).all(axis=1) & (S[:, -1] >= -x)
        total += float(w[neg].sum())
    return total


def lf_survival(X, eta):
    """Quenched survival for linear-fractional laws by scalar backward iteration.

    With mean ``mu`` and variance parameter ``eta`` the complement map is
    ``t -> mu t / (1 + eta mu t / 2)``; survival to ``n`` is the image of
    ``t = 1`` under the composition over generations ``n, ..., 1``.
    """
    t = 1.0
    for x in reversed(list(X)):
        mu = math.exp(x)
        t = mu * t / (1.0 + 0.5 * eta * mu * t)
    return t


def poisson_survival(X):
    t = 1.0
    for x in reversed(list(X)):
        t = -math.expm1(-math.exp(x) * t)
    return t


def geometric_extinction(rs):
    """``f_1(...f_n(0))`` for Geometric(r) laws ``f(s) = r / (1 - (1 - r) s)``."""
    s = 0.0
    for r in reversed(list(rs)):
        s = r / (1.0 - (1.0 - r) * s)
    return s


def pmf_composition_survival(pmfs):
    """Survival via iterated power series evaluated at 0 from truncated pmfs."""
    s = 0.0
    for p in reversed(pmfs):
        s = float(np.polynomial.polynomial.polyval(s, p))
    return 1.0 - s


def ladder_law_dp(support, probs, N):
    """``P(S_T = -j, T <= N)`` for ``T`` the first time ``S < 0``, by forward DP.

    For a walk with drift the neglected mass ``P(N < T < inf)`` decays
    geometrically in ``N``.
    """
    lo, hi = min(support), max(support)
    width = hi * N + 1
    dist = np.zeros(width)
    dist[0] = 1.0
    f = np.zeros(-lo)
    for _ in range(N):
        new = np.zeros(width + hi)
        for s, p in zip(support, probs):
            if s >= 0:
                new[s: s + width] += p * dist
            else:
                new[: width + s] += p * dist[-s:]
                for j in range(1, -s + 1):
                    # a step s from level y lands at y + s = -j
                    y = -j - s
                    if 0 <= y < width:
                        f[j - 1] += p * dist[y]
        dist = new[:width]
    return f
