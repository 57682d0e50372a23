import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cauchy_bpre import bpre
from cauchy_bpre.environment import EnvironmentDriver, EnvironmentSequence
from cauchy_bpre.fluctuation import DegenerateStep, simple_walk
from cauchy_bpre.heavy_tail import example1_law

import oracles

SYM = simple_walk()
steps = st.lists(st.floats(-4.0, 4.0), min_size=0, max_size=30)


def _env(family, X, eta=3.0):
    eta = {"geometric": 2.0, "poisson": 1.0}.get(family, eta)
    return EnvironmentSequence(family, eta, np.asarray(X, dtype=float))


# ---------------------------------------------------------------- quenched survival

@given(steps, st.floats(2.0, 8.0))
@settings(max_examples=100, deadline=None)
def test_moebius_matches_scalar_iteration(X, eta):
    env = _env("linear_fractional", X, eta)
    curve = bpre.survival_curve(env)
    for n in range(len(X) + 1):
        assert curve[n] == pytest.approx(oracles.lf_survival(X[:n], eta), rel=1e-10)


@given(steps)
@settings(max_examples=60, deadline=None)
def test_geometric_matches_direct_composition(X):
    # Geometric(r) has mean (1 - r)/r = e^x
    rs = [1.0 / (1.0 + math.exp(x)) for x in X]
    env = _env("geometric", X)
    assert bpre.quenched_extinction(env, len(X)) == pytest.approx(
        oracles.geometric_extinction(rs), abs=1e-12)


@given(steps, st.floats(2.0, 8.0))
@settings(max_examples=60, deadline=None)
def test_generic_mode_agrees_with_moebius(X, eta):
    env = _env("linear_fractional", X, eta)
    n = len(X)
    a = bpre.quenched_survival(env, n, mode="moebius")
    b = bpre.quenched_survival(env, n, mode="generic")
    assert b == pytest.approx(a, rel=1e-9, abs=1e-300)


@given(st.lists(st.floats(-3.0, 2.0), min_size=1, max_size=12))
@settings(max_examples=60, deadline=None)
def test_poisson_survival(X):
    env = _env("poisson", X)
    n = len(X)
    s = bpre.quenched_survival(env, n)
    assert s == pytest.approx(oracles.poisson_survival(X), rel=1e-12)
    pmfs = [stats.poisson.pmf(np.arange(80), math.exp(x)) for x in X]
    assert s == pytest.approx(oracles.pmf_composition_survival(pmfs), abs=1e-10)


def test_lf_pmf_composition():
    X = [0.4, -1.1, 0.9, 0.2, -0.3]
    env = _env("linear_fractional", X, 3.0)
    pmfs = [law.pmf(np.arange(400)) for law in env.laws]
    assert bpre.quenched_survival(env, 5) == pytest.approx(
        oracles.pmf_composition_survival(pmfs), abs=1e-12)


def test_huge_steps_do_not_overflow():
    X = np.array([800.0, -900.0, 5.0, 700.0])
    v = bpre.log_survival_lf(X, 3.0)
    assert np.all(np.isfinite(v)) and np.all(v <= 0)
    # after +800 survival is 1/(e^{-800} + 1.5)
    assert v[1] == pytest.approx(-math.log(1.5))
    assert v[2] == pytest.approx(-(900.0 - 800.0 + math.log1p(1.5 * math.exp(-100.0))), rel=1e-12)


def test_log_survival_shapes_and_zero_eta():
    X = np.random.default_rng(0).normal(size=(4, 7))
    out = bpre.log_survival_lf(X, 3.0)
    assert out.shape == (4, 8) and np.all(out[:, 0] == 0)
    assert np.all(np.diff(out, axis=1) <= 1e-15)        # survival is nonincreasing in n
    # eta = 0 is the deterministic-mean limit: survival min(1, e^{S_n})
    S = np.cumsum(X[0])
    assert np.allclose(bpre.log_survival_lf(X[0], 0.0)[1:], np.minimum(S, 0.0))


@given(st.lists(st.lists(st.floats(-50.0, 50.0), min_size=1, max_size=25), min_size=1,
                max_size=5).filter(lambda rows: len({len(r) for r in rows}) == 1),
       st.sampled_from([0.0, 2.0, 3.0, 7.5]))
@settings(max_examples=80, deadline=None)
def test_final_value_path_matches_curve(rows, eta):
    # the annealed estimator only needs the last column of the survival curve
    X = np.array(rows)
    d = EnvironmentDriver("linear_fractional", SYM, eta0=3.0)
    fast = bpre._lf_final_survival(X, eta)
    full = np.exp(bpre.log_survival_lf(X, eta)[:, -1])
    assert np.allclose(fast, full, rtol=1e-12, atol=0)
    assert np.allclose(bpre._quenched_batch(d, X, X.shape[1]),
                       np.exp(bpre.log_survival_lf(X, 3.0)[:, -1]), rtol=1e-12, atol=0)


def test_composer_validation():
    env = _env("poisson", [0.1, 0.2])
    with pytest.raises(ValueError):
        bpre.GFComposer(env, "moebius")
    with pytest.raises(ValueError):
        bpre.GFComposer(env, "other")
    with pytest.raises(ValueError):
        bpre.quenched_survival(env, 3)
    assert bpre.quenched_survival(env, 0) == 1.0
    assert bpre.GFComposer(_env("geometric", [0.0])).mode == "moebius"
    assert len(bpre.survival_curve(env)) == 3


# ---------------------------------------------------------------- pathwise lower bound

@given(st.sampled_from(["linear_fractional", "geometric", "poisson"]),
       st.lists(st.floats(-6.0, 6.0), min_size=1, max_size=40))
@settings(max_examples=200, deadline=None)
def test_lower_bound_holds(family, X):
    env = _env(family, X)
    curve = bpre.survival_curve(env)
    for n in range(len(X) + 1):
        assert bpre.survival_lower_bound(env, n) <= curve[n] * (1 + 1e-12)


def test_lower_bound_is_exact_for_linear_fractional():
    X = [0.3, -1.0, 2.0, 0.5]
    env = _env("linear_fractional", X, 2.0)
    # for eta = 2 the bound 1/(e^{-S_n} + eta sum e^{-S_k}) differs from the exact
    # 1/(e^{-S_n} + (eta/2) sum e^{-S_k}) by the factor on the sum only
    S = np.concatenate(([0.0], np.cumsum(X)))
    exact = 1.0 / (math.exp(-S[4]) + np.sum(np.exp(-S[:4])))
    bound = 1.0 / (math.exp(-S[4]) + 2.0 * np.sum(np.exp(-S[:4])))
    assert bpre.quenched_survival(env, 4) == pytest.approx(exact, rel=1e-12)
    assert bpre.survival_lower_bound(env, 4) == pytest.approx(bound, rel=1e-12)


def test_lower_bound_start_one_can_fail():
    env = _env("linear_fractional", [1.0], 3.0)
    assert bpre.survival_lower_bound(env, 1, start=1) == pytest.approx(math.e)
    assert bpre.survival_lower_bound(env, 1, start=1) > bpre.quenched_survival(env, 1)
    with pytest.raises(ValueError):
        bpre.survival_lower_bound(env, 2)


# ---------------------------------------------------------------- annealed survival

def test_geometric_half_pin():
    d = EnvironmentDriver("geometric", DegenerateStep(0.0))
    for n in (0, 1, 10, 1000, 10_000):
        est = bpre.annealed_survival(d, n, 1000, np.random.default_rng(0))
        assert abs(est.value - 1.0 / (n + 1)) <= 1e-10 and est.stderr < 1e-12


def test_annealed_against_enumeration():
    # +-1 environment, n = 8: average the exact quenched survival over all 256 paths
    d = EnvironmentDriver("linear_fractional", SYM, eta0=3.0)
    S, w = oracles.enumerate_paths((-1, 1), (0.5, 0.5), 8)
    exact = sum(wi * oracles.lf_survival(np.diff(Si), 3.0) for Si, wi in zip(S, w))
    est = bpre.annealed_survival(d, 8, 100_000, np.random.default_rng(5))
    assert abs(est.value - exact) < 4 * est.stderr
    assert est.method == "DirectGF" and est.trials == 100_000


def test_annealed_generic_family():
    d = EnvironmentDriver("poisson", SYM)
    S, w = oracles.enumerate_paths((-1, 1), (0.5, 0.5), 6)
    exact = sum(wi * oracles.poisson_survival(np.diff(Si)) for Si, wi in zip(S, w))
    est = bpre.annealed_survival(d, 6, 50_000, np.random.default_rng(6), batch=7000)
    assert abs(est.value - exact) < 4 * est.stderr


def test_survival_estimate_validation():
    with pytest.raises(ValueError):
        bpre.SurvivalEstimate(1, 1.5, 0.0, 10)
    with pytest.raises(ValueError):
        bpre.SurvivalEstimate(1, 0.5, -1.0, 10)
    d = EnvironmentDriver("geometric", SYM)
    with pytest.raises(ValueError):
        bpre.annealed_survival(d, 5, 999, np.random.default_rng(0))


# ---------------------------------------------------------------- ratio moments

def _ratio_oracle(n, eta, kill=None, seen=None):
    S, w = oracles.enumerate_paths((-1, 1), (0.5, 0.5), n)
    keep = np.ones(len(w), bool) if kill is None else S[:, : seen + 1].min(axis=1) >= -kill
    s = sum(wi * oracles.lf_survival(np.diff(Si), eta) for Si, wi, k in zip(S, w, keep) if k)
    b = float(oracles.symmetric_ell(n))
    return s, b


def test_ratio_moments_against_enumeration():
    d = EnvironmentDriver("linear_fractional", SYM, eta0=3.0)
    ns = [4, 8, 12]
    exp = bpre.theorem_ratio(d, ns, 200_000, np.random.default_rng(8), kill=100.0)
    for j, n in enumerate(ns):
        s, b = _ratio_oracle(n, 3.0)
        assert abs(exp.survival[j] - s) < 4 * exp.survival_se[j]
        assert abs(exp.nonneg[j] - b) < 4 * exp.nonneg_se[j]
        assert abs(exp.r[j] - s / b) < 4 * exp.r_se[j]
    assert exp.K_hat == exp.r[-1] and len(exp.as_rows()) == 3


def test_kill_drops_only_dead_paths():
    # blocks end on grid points: paths below -1 by n = 5 are gone at n = 10, the
    # rest (including later crossers) still contribute their exact survival
    d = EnvironmentDriver("linear_fractional", SYM, eta0=3.0)
    mom = bpre.ratio_moments(d, [5, 10], 200_000, np.random.default_rng(9), kill=1.0,
                             batch=50_000)
    exp = bpre.ratio_from_moments(mom)
    s5, _ = _ratio_oracle(5, 3.0)
    s10, b10 = _ratio_oracle(10, 3.0, kill=1, seen=5)
    assert abs(exp.survival[0] - s5) < 4 * exp.survival_se[0]
    assert abs(exp.survival[1] - s10) < 4 * exp.survival_se[1]
    assert abs(exp.nonneg[1] - b10) < 4 * exp.nonneg_se[1]
    assert mom.killed_bound == pytest.approx(2.0 / 3.0 * math.exp(-1.0))
    single = bpre.ratio_from_moments(bpre.ratio_moments(d, [5], 5000, np.random.default_rng(0)))
    assert math.isnan(single.slope)


def test_degenerate_negative_control():
    # zero steps: L_n >= 0 surely and survival 2/(2 + eta n), so r_n decays like 1/n;
    # the standard errors vanish up to cancellation in the one-pass variance
    eta = 3.0
    d = EnvironmentDriver("linear_fractional", DegenerateStep(0.0), eta0=eta)
    ns = [2 ** k for k in range(4, 11)]
    exp = bpre.theorem_ratio(d, ns, 2000, np.random.default_rng(0))
    assert np.allclose(exp.r, [2.0 / (2.0 + eta * n) for n in ns], rtol=1e-12)
    assert np.all(exp.r_se < 1e-7 * exp.r) and np.all(exp.nonneg == 1.0)
    assert exp.slope < -0.9 and not exp.slope_ci[0] <= 0.0 <= exp.slope_ci[1]


def test_ratio_moments_merge_and_validation():
    d = EnvironmentDriver("linear_fractional", SYM, eta0=3.0)
    a = bpre.ratio_moments(d, [4, 8], 3000, np.random.default_rng(1))
    b = bpre.ratio_moments(d, [4, 8], 5000, np.random.default_rng(2))
    m = a.merge(b)
    assert m.trials == 8000
    assert np.allclose(m.total, a.total + b.total) and np.allclose(m.cross, a.cross + b.cross)
    with pytest.raises(ValueError):
        a.merge(bpre.ratio_moments(d, [4, 16], 100, np.random.default_rng(3)))
    with pytest.raises(ValueError):
        bpre.ratio_moments(EnvironmentDriver("poisson", SYM), [4], 10, np.random.default_rng(0))
    with pytest.raises(bpre.InsufficientTrials):
        bpre.ratio_from_moments(bpre.ratio_moments(d, [64], 30, np.random.default_rng(0)))


def test_batching_does_not_change_moments_in_distribution():
    d = EnvironmentDriver("linear_fractional", example1_law(), eta0=3.0)
    ns = [16, 64]
    x = bpre.theorem_ratio(d, ns, 40_000, np.random.default_rng(4))
    y = bpre.ratio_from_moments(bpre.ratio_moments(d, ns, 40_000, np.random.default_rng(5), batch=997))
    for j in range(2):
        se = math.hypot(x.survival_se[j], y.survival_se[j])
        assert abs(x.survival[j] - y.survival[j]) < 4 * se


def test_moments_match_annealed_survival():
    d = EnvironmentDriver("linear_fractional", example1_law(), eta0=3.0)
    exp = bpre.theorem_ratio(d, [32], 50_000, np.random.default_rng(10), kill=1e9)
    est = bpre.annealed_survival(d, 32, 50_000, np.random.default_rng(11))
    assert abs(exp.survival[0] - est.value) < 4 * math.hypot(exp.survival_se[0], est.stderr)


# ---------------------------------------------------------------- tau split

@pytest.mark.parametrize("x,block", [(1.0, 0), (-1.0, 2)])
def test_tau_split_deterministic(x, block):
    eta = 3.0
    d = EnvironmentDriver("linear_fractional", DegenerateStep(x), eta0=eta)
    n = 10
    res = bpre.survival_by_tau(d, n, 1000, np.random.default_rng(0), N_split=4, eps=0.5, kill=1e9)
    exact = oracles.lf_survival([x] * n, eta)
    assert res.blocks[block] == pytest.approx(exact, rel=1e-12)
    assert res.blocks.sum() == pytest.approx(res.total)
    assert res.first_share == (1.0 if block == 0 else 0.0)


def test_tau_split_lattice_first_minimum():
    # path -1, +1, -1: minimum -1 first attained at 1; strict new minima only
    d = EnvironmentDriver("linear_fractional", SYM, eta0=3.0)
    res = bpre.survival_by_tau(d, [2, 40], 20_000, np.random.default_rng(3), N_split=4, eps=0.25)
    assert res[0].blocks[1] == 0 and res[0].blocks[2] == 0       # n <= N_split
    r40 = res[1]
    assert np.all(r40.blocks > 0)
    assert abs(r40.blocks.sum() - r40.total) < 1e-12
    moms = bpre.theorem_ratio(d, [40], 20_000, np.random.default_rng(3))
    assert abs(r40.total - moms.survival[0]) < 4 * math.hypot(r40.total_se, moms.survival_se[0])
    with pytest.raises(ValueError):
        bpre.survival_by_tau(d, 10, 100, np.random.default_rng(0), eps=1.5)


# ---------------------------------------------------------------- population simulation

def test_one_generation_offspring_law():
    for family, x in [("linear_fractional", 0.7), ("linear_fractional", -0.5),
                      ("poisson", 0.3), ("geometric", 0.0)]:
        env = _env(family, [x])
        rng = np.random.default_rng(12)
        Z1 = np.array([bpre.simulate_population(env, rng, cap=1e6).Z[-1] for _ in range(20_000)])
        law = env.laws[0]
        k = np.arange(0, 12)
        obs = np.array([np.sum(Z1 == i) for i in k] + [np.sum(Z1 >= 12)])
        p = np.append(law.pmf(k), 1 - law.pmf(k).sum())
        assert stats.chisquare(obs, 20_000 * p).pvalue > 1e-3


def test_population_matches_quenched():
    env = _env("linear_fractional", [0.5, -0.2, 0.1, 0.3, -0.4, 0.2], 3.0)
    rng = np.random.default_rng(13)
    runs = [bpre.simulate_population(env, rng) for _ in range(20_000)]
    alive = np.mean([r.extinction_time is None for r in runs])
    s = bpre.quenched_survival(env, 6)
    assert abs(alive - s) < 4 * math.sqrt(s * (1 - s) / 20_000)


def test_population_cap_and_extinction():
    env = _env("poisson", [5.0] * 10)
    run = bpre.simulate_population(env, np.random.default_rng(0), cap=1e6, z0=10)
    assert run.capped and run.Z[-1] > 1e6 and run.capped_at == len(run.Z) - 1
    dead = bpre.simulate_population(_env("poisson", [-30.0] * 5), np.random.default_rng(0))
    assert dead.extinction_time == 1 and list(dead.Z) == [1, 0]
    with pytest.raises(ValueError):
        bpre.simulate_population(env, np.random.default_rng(0), cap=1e16)
    # an enormous mean saturates rather than overflowing
    big = bpre.simulate_population(_env("linear_fractional", [60.0, 60.0], 3.0),
                                   np.random.default_rng(1))
    assert big.capped


def test_population_survival_estimate():
    d = EnvironmentDriver("geometric", DegenerateStep(0.0))
    est = bpre.population_survival(d, 4, 20_000, np.random.default_rng(2))
    assert est.method == "Population"
    assert abs(est.value - 0.2) < 4 * est.stderr
