import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cauchy_bpre import environment as env
from cauchy_bpre.fluctuation import DegenerateStep, simple_walk
from cauchy_bpre.heavy_tail import example1_law

K = np.arange(0, 4000)


def _moments_from_pmf(law):
    p = law.pmf(K)
    mu = float(np.dot(K, p))
    fact2 = float(np.dot(K * (K - 1.0), p))
    return p, mu, fact2 / mu ** 2


def _zeta_direct(law, a):
    p = law.pmf(K)
    mu = float(np.dot(K, p))
    return float(np.sum((K[K >= a] ** 2) * p[K >= a])) / mu ** 2


laws = st.one_of(
    st.builds(env.linear_fractional, st.floats(0.05, 5.0), st.floats(2.0, 6.0)),
    st.builds(env.poisson, st.floats(0.05, 8.0)),
    st.builds(env.geometric, st.floats(0.1, 0.9)),
)


@given(laws)
@settings(max_examples=60, deadline=None)
def test_pmf_moments(law):
    p, mu, eta_ = _moments_from_pmf(law)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert mu == pytest.approx(law.mean, rel=1e-10)
    assert eta_ == pytest.approx(env.eta(law), rel=1e-9)


@given(laws, st.integers(0, 25))
@settings(max_examples=80, deadline=None)
def test_zeta_matches_direct_sum(law, a):
    assert env.zeta(law, a) == pytest.approx(_zeta_direct(law, a), rel=1e-8, abs=1e-300)


@given(laws, st.floats(0.0, 1.0))
@settings(max_examples=60, deadline=None)
def test_gf_matches_power_series(law, s):
    direct = float(np.dot(law.pmf(K), s ** K))
    assert float(law.gf(s)) == pytest.approx(direct, abs=1e-12)


def test_gf_complement_small_t():
    law = env.linear_fractional(1.3, 3.0)
    t = 1e-300
    # 1 - f(1 - t) ~ mean * t as t -> 0, without cancellation
    assert float(law.gf_complement(t)) == pytest.approx(1.3 * t, rel=1e-12)
    pois = env.poisson(2.0)
    assert float(pois.gf_complement(1e-200)) == pytest.approx(2e-200, rel=1e-12)


def test_geometric_is_lf_with_eta_two():
    g = env.geometric(0.25)
    assert g.family == "geometric" and g.mean == pytest.approx(3.0)
    assert g.pmf(0) == pytest.approx(0.25)
    assert g.pmf(3) == pytest.approx(0.25 * 0.75 ** 3)


def test_poisson_pmf_scipy():
    law = env.poisson(3.7)
    assert np.allclose(law.pmf(np.arange(30)), stats.poisson.pmf(np.arange(30), 3.7))


def test_poisson_zeta_far_tail():
    # upper tail summed upward; compare with scipy's pmf
    lam, a = 0.5, 12
    y = np.arange(a, 200)
    oracle = float(np.sum(y ** 2 * stats.poisson.pmf(y, lam))) / lam ** 2
    assert env.poisson(lam).zeta(a) == pytest.approx(oracle, rel=1e-10)


def test_zeta_vec_extreme_log_means_finite():
    x = np.array([-30.0, -5.0, 0.0, 5.0, 30.0])
    etas = {"linear_fractional": 3.0, "geometric": 2.0, "poisson": 1.0}
    for fam in env.FAMILIES:
        z = env.zeta_vec(fam, x, etas[fam], 3)
        assert np.all(np.isfinite(z)) and np.all(z >= 0)


def test_lf_admissibility():
    with pytest.raises(ValueError):
        env.linear_fractional(3.0, 1.0)          # mean (2 - eta) > 2
    env.linear_fractional(3.0, 2.0)
    with pytest.raises(ValueError):
        env.OffspringLaw("negbin", 0.0, 2.0)
    with pytest.raises(ValueError):
        env.geometric(1.0)


def test_driver_validation():
    with pytest.raises(ValueError):
        env.EnvironmentDriver("linear_fractional", simple_walk())
    with pytest.raises(ValueError):
        env.EnvironmentDriver("linear_fractional", simple_walk(), eta0=1.5)
    d = env.EnvironmentDriver("poisson", simple_walk())
    assert d.eta == 1.0
    assert env.EnvironmentDriver("geometric", simple_walk()).eta == 2.0
    assert d.make(0.5).mean == pytest.approx(math.exp(0.5))


def test_draw_environment():
    d = env.EnvironmentDriver("linear_fractional", example1_law(), eta0=3.0)
    e = env.draw_environment(d, 50, np.random.default_rng(1))
    assert len(e) == 50 and e.S[0] == 0.0
    assert np.allclose(np.diff(e.S), e.X)
    assert all(law.eta == 3.0 for law in e.laws)
    assert len(env.draw_environment(d, 0, np.random.default_rng(1))) == 0
    with pytest.raises(ValueError):
        env.draw_environment(d, -1, np.random.default_rng(1))


def test_draw_is_reproducible():
    d = env.EnvironmentDriver("poisson", example1_law())
    a = env.draw_environment(d, 20, np.random.default_rng(9)).X
    b = env.draw_environment(d, 20, np.random.default_rng(9)).X
    assert np.array_equal(a, b)


def test_moment_report_degenerate():
    # critical Geometric(1/2) environment: zeta(a) is deterministic
    d = env.EnvironmentDriver("geometric", DegenerateStep(0.0))
    rep = env.condition_moment_report(d, beta=1.0, a=2, trials=2000, rng=np.random.default_rng(0))
    z = env.geometric(0.5).zeta(2)
    assert rep.zeta_beta == pytest.approx(z) and rep.zeta_beta_se == 0.0
    assert rep.log_zeta == pytest.approx(math.log(z) ** 2)
    assert rep.renewal_missing and rep.u_zeta_beta is None
    with pytest.raises(ValueError):
        env.condition_moment_report(d, 1.0, 2, 10, np.random.default_rng(0))
