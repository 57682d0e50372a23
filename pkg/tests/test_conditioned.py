import math

import numpy as np
import pytest
from scipy import integrate
from hypothesis import given, settings, strategies as st

from cauchy_bpre import conditioned as cd
from cauchy_bpre import fluctuation as fl
from cauchy_bpre.environment import EnvironmentDriver
from cauchy_bpre.heavy_tail import example1_law

import oracles

SYM = fl.simple_walk()
SKIPFREE = fl.LatticeWalkSpec((-1, 0, 2), (0.5, 0.25, 0.25))
JUMPDOWN = fl.LatticeWalkSpec((-2, 1), (1 / 3, 2 / 3))

# frozen from path enumeration (tests/oracles.py): E+[e^{-S_n}] = E[e^{-S_n} U(S_n); L_n >= 0]
PLUS_EXP_SYM_10 = 0.08402720430911279
PLUS_EXP_SKIPFREE_8 = 0.06958873340321113
COND_EXP_SYM_K2_N10 = 0.37551992678199797      # E[e^{-S_2} | L_10 >= 0]


def _sampler(spec, mode="kernel"):
    return cd.PlusSampler(spec, cd.lattice_U(spec, x_max=400), mode)


# ---------------------------------------------------------------- U sources

def test_exact_U_floor():
    U = cd.lattice_U(SYM)
    assert U.name == "floor(x)+1"
    assert np.array_equal(U(np.array([-1.0, 0.0, 0.5, 3.0])), [0.0, 1.0, 1.0, 4.0])
    assert U.U(2.0) == 3.0


def test_sampler_validation():
    with pytest.raises(ValueError):
        cd.PlusSampler(SYM, cd.ExactU(lambda x: x + 2.0))
    with pytest.raises(ValueError):
        cd.PlusSampler(SYM, cd.lattice_U(SYM), mode="other")
    assert _sampler(SYM).exact_lattice
    law = example1_law()
    tab = fl.RenewalTable(np.arange(0.0, 41.0), 1.0 + 0.5 * np.arange(41.0), np.zeros(41))
    s = cd.PlusSampler(law, tab)
    assert s.x_cap >= law.x0 and not s.exact_lattice


# ---------------------------------------------------------------- harmonicity

@pytest.mark.parametrize("spec", [SYM, SKIPFREE, JUMPDOWN, fl.LatticeWalkSpec((-3, -1, 0, 1), (0.1, 0.2, 0.2, 0.5))])
def test_lattice_harmonicity_exact(spec):
    rows = cd.harmonicity_residual(cd.lattice_U(spec, 100), spec, range(0, 40))
    assert max(abs(r.residual) for r in rows) < 1e-12
    assert all(r.se == 0 for r in rows)


@given(st.integers(0, 300))
@settings(max_examples=50)
def test_kernel_rows_are_stochastic(x):
    for spec in (SYM, SKIPFREE, JUMPDOWN):
        y, p = cd.kernel_row(_sampler(spec), float(x))
        assert np.all(p >= 0) and p.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(y[p > 0] >= 0)


def test_kernel_row_needs_lattice():
    law = example1_law()
    tab = fl.RenewalTable(np.arange(0.0, 41.0), 1.0 + 0.5 * np.arange(41.0), np.zeros(41))
    with pytest.raises(TypeError):
        cd.kernel_row(cd.PlusSampler(law, tab), 0.0)


def test_harmonicity_monte_carlo_needs_rng():
    tab = fl.RenewalTable(np.arange(0.0, 41.0), 1.0 + 0.5 * np.arange(41.0), np.zeros(41))
    with pytest.raises(ValueError):
        cd.harmonicity_residual(tab, example1_law(), [0.0])


def test_harmonicity_table_error_propagation():
    # with a covariance the table contribution enters se
    grid = np.arange(0.0, 41.0)
    cov = np.diag(np.full(41, 1e-4))
    tab = fl.RenewalTable(grid, 1.0 + 0.5 * grid, np.full(41, 1e-2), U_cov=cov)
    rows = cd.harmonicity_residual(tab, example1_law(), [0.0, 5.0], 20_000,
                                   np.random.default_rng(0))
    assert all(r.se_table > 0 and r.se >= r.se_mc for r in rows)


# ---------------------------------------------------------------- weighting and kernel samplers

def test_weighted_paths_shapes():
    wp = cd.weighted_paths(_sampler(SYM, "weighting"), 6, 100, np.random.default_rng(0))
    assert wp.S.shape == (100, 7) and np.all(wp.weight[wp.S.min(axis=1) < 0] == 0)


@pytest.mark.parametrize("mode", ["kernel", "weighting"])
def test_plus_expectation_against_enumeration(mode):
    f = lambda S: np.exp(-S[:, -1])
    for spec, n, exact in [(SYM, 10, PLUS_EXP_SYM_10), (SKIPFREE, 8, PLUS_EXP_SKIPFREE_8)]:
        m, se = cd.plus_expectation(f, n, 100_000, _sampler(spec, mode), np.random.default_rng(3))
        assert abs(m - exact) < 4 * se


def test_weighting_normalization():
    m, se = cd.plus_expectation(lambda S: np.ones(len(S)), 32, 100_000,
                                _sampler(JUMPDOWN, "weighting"), np.random.default_rng(1))
    assert abs(m - 1.0) < 4 * se


def test_kernel_paths_stay_nonnegative_and_use_exact_rows():
    S = cd.sample_plus_kernel(0.0, 1, _sampler(JUMPDOWN), np.random.default_rng(2), size=200_000)
    assert np.all(S >= 0)
    y, p = cd.kernel_row(_sampler(JUMPDOWN), 0.0)
    for yy, pp in zip(y, p):
        assert np.mean(S[:, 1] == yy) == pytest.approx(pp, abs=4 * math.sqrt(pp * (1 - pp) / 2e5) + 1e-12)
    single = cd.sample_plus_kernel(3.0, 5, _sampler(SYM), np.random.default_rng(2))
    assert single.shape == (6,) and single[0] == 3.0
    with pytest.raises(ValueError):
        cd.sample_plus_kernel(-1.0, 5, _sampler(SYM), np.random.default_rng(2))


def _kernel_tail_exact(law, tab, x0, a):
    """``int_{[a, inf)} U(y) P(x0 + X in dy)`` for a linear table ``U``.

    By parts: ``U(a) P(X > a - x0) + int_a^inf U'(y) P(X > y - x0) dy``, with
    ``U'`` constant on grid cells and equal to the tail slope beyond the
    grid, where the integral of the tail is ``p l*(.)`` in closed form.
    """
    g = tab.grid
    sf = lambda y: float(law.sf(y - x0))
    total = float(tab.U(a, extrapolate=True)) * sf(a)
    for lo_, hi_ in zip(g[:-1], g[1:]):
        lo_ = max(lo_, a)
        if hi_ <= lo_:
            continue
        slope = (tab.U(hi_) - tab.U(lo_)) / (hi_ - lo_)
        total += slope * integrate.quad(sf, lo_, hi_, epsabs=1e-13)[0]
    total += tab.slope * law.p * float(law.sv.tail_integral(max(g[-1], a) - x0))
    return total


def test_continuous_kernel_matches_quadrature():
    # the rejection sampler draws y ~ P(x + X in dy) U(y) 1{y >= 0}, normalised
    law = example1_law()
    grid = np.arange(0.0, 41.0)
    tab = fl.RenewalTable(grid, 1.0 + 0.7 * grid + 0.3 * np.sqrt(grid), np.zeros(41))
    sampler = cd.PlusSampler(law, tab)
    x0, T = 2.0, 200_000
    y = cd.sample_plus_kernel(x0, 1, sampler, np.random.default_rng(4), size=T)[:, 1]
    assert y.min() >= 0
    norm = _kernel_tail_exact(law, tab, x0, 0.0)
    for cut in (1.0, 5.0, 38.0, 50.0, 500.0):
        ref = _kernel_tail_exact(law, tab, x0, cut) / norm
        assert abs(np.mean(y > cut) - ref) < 4 * math.sqrt(ref * (1 - ref) / T)


def test_kernel_requires_exact_source():
    tab = fl.RenewalTable(np.arange(0.0, 5.0), np.arange(1.0, 6.0), np.zeros(5), kind="step")
    with pytest.raises(TypeError):
        cd.sample_plus_kernel(0.0, 2, cd.PlusSampler(SYM, tab), np.random.default_rng(0))


# ---------------------------------------------------------------- prospective minima and Tanaka

def test_prospective_minima_fixed_path():
    pm = cd.prospective_minima(np.array([0.0, 2.0, 1.0, 3.0, 1.0, 4.0, 5.0, 6.0, 7.0]))
    assert list(pm.epochs) == [2, 4, 5, 6, 7, 8]
    assert list(pm.lookahead) == [6, 4, 3, 2, 1, 0]
    assert list(pm.censored) == [False, False, False, False, True, True]


@pytest.mark.parametrize("spec", [SYM, SKIPFREE])
def test_tanaka_lattice(spec):
    rep = cd.tanaka_compare(_sampler(spec), 20_000, np.random.default_rng(11), k_max=12)
    assert rep.p_value > 1e-3 and rep.censor_plus == 0
    rec = rep.as_record()
    assert set(rec) == {"statistic", "dof", "p_value", "censor_rate"}
    with pytest.raises(ValueError):
        cd.tanaka_compare(_sampler(spec), 100, np.random.default_rng(0))


def test_first_prospective_min_symmetric_law():
    # for the +-1 walk the first weak ascent is at 1 w.p. 1/2 with height 1
    nu, h = cd.sample_first_prospective_min(_sampler(SYM), 40_000, 10, np.random.default_rng(3))
    p1 = np.mean(nu == 1)
    assert abs(p1 - 0.5) < 4 * math.sqrt(0.25 / 40_000)
    assert np.all(h[nu == 1] == 1.0)
    io, hw = cd.sample_first_weak_ascent(SYM, 40_000, 10, np.random.default_rng(4))
    assert abs(np.mean(io == 1) - 0.5) < 4 * math.sqrt(0.25 / 40_000)
    with pytest.raises(ValueError):
        cd.sample_first_prospective_min(_sampler(SYM), 10, 5, np.random.default_rng(0), method="x")


def test_lookahead_method_marks_censoring():
    nu, h = cd.sample_first_prospective_min(_sampler(SYM), 500, 10, np.random.default_rng(3),
                                            method="lookahead", horizon=40)
    assert np.all((nu == -1) | (nu >= 1)) and np.all(np.isnan(h[nu == -1]))


# ---------------------------------------------------------------- eta sums and conditioning

def test_eta_sum_geometric_family_on_lattice():
    # eta = 2 for every geometric law, so partial sums are twice the plain exponential sums
    d = EnvironmentDriver("geometric", SYM)
    rep = cd.eta_exponential_sum(d, _sampler(SYM), 400, 2000, np.random.default_rng(0))
    S = cd.sample_plus_kernel(0.0, 400, _sampler(SYM), np.random.default_rng(0), size=2000)
    plain = np.cumsum(np.exp(-S[:, :400]), axis=1)
    assert np.allclose(rep.partial, 2.0 * plain[:, rep.checkpoints - 1], rtol=1e-12)
    assert rep.partial.shape == (2000, len(rep.checkpoints))
    assert np.all(np.diff(rep.partial, axis=1) >= 0)
    # the conditioned walk drifts off, so a typical path has almost converged by K = 400;
    # the upper percentiles have not (returns to low levels stay likely at this horizon)
    assert rep.drift_slope > 0 and rep.inc_median < 0.05 * rep.median_total


def test_conditioning_gap_against_enumeration():
    rows = cd.conditioning_gap(SYM, cd.lattice_U(SYM), 2, [10, 40, 160])
    n, cond, plus, gap = rows[0]
    assert n == 10 and cond == pytest.approx(COND_EXP_SYM_K2_N10, abs=1e-14)
    # kernel rows: 0 -> 1 -> 0 w.p. 1/4 and 0 -> 1 -> 2 w.p. 3/4
    assert plus == pytest.approx(0.25 + 0.75 * math.exp(-2.0), abs=1e-14)
    gaps = [r[3] for r in rows]
    assert gaps[0] > gaps[1] > gaps[2]


@pytest.fixture(scope="module")
def heavy_eta_sum():
    law = example1_law()
    with pytest.warns(RuntimeWarning, match="renewal censoring"):
        tab = fl.estimate_U(law, np.arange(0.0, 40.125, 0.25), 20_000, np.random.default_rng(1),
                            horizon=10**4)
    d = EnvironmentDriver("linear_fractional", law, eta0=3.0)
    K = 10**4
    rep = cd.eta_exponential_sum(d, cd.PlusSampler(law, tab), K, 1000, np.random.default_rng(2))
    inc = rep.totals - rep.partial[:, list(rep.checkpoints).index(K // 10)]
    return rep, inc


def test_eta_sum_heavy_tail_typical_paths_settle(heavy_eta_sum):
    rep, inc = heavy_eta_sum
    assert np.all(np.diff(rep.partial, axis=1) >= 0)
    assert rep.drift_slope > 0
    assert rep.inc_median < 1e-6 * rep.median_total
    assert np.quantile(inc, 0.98) < 0.01 * rep.median_total


@pytest.mark.xfail(strict=True, reason="about 1.2% of conditioned paths still take a late "
                   "downward jump to near 0 within 1e3 < k <= 1e4, so the 99th percentile "
                   "of the last-decade increment sits just above the 1% threshold at this K")
def test_eta_sum_heavy_tail_p99_criterion(heavy_eta_sum):
    rep, _ = heavy_eta_sum
    assert rep.stabilized


# ---------------------------------------------------------------- hand-computed kernel values

def test_symmetric_kernel_rows():
    # U(x) = x + 1: from 1 the up-step has weight (1/2) U(2)/U(1) = 3/4
    y, p = cd.kernel_row(_sampler(SYM), 1.0)
    assert dict(zip(y, p)) == pytest.approx({0.0: 0.25, 2.0: 0.75}, abs=1e-15)
    y, p = cd.kernel_row(_sampler(SYM), 0.0)
    assert list(y[p > 0]) == [1.0] and p[p > 0][0] == pytest.approx(1.0)


def test_symmetric_kernel_empirical_at_three():
    T = 10**6
    S = cd.sample_plus_kernel(3.0, 1, _sampler(SYM), np.random.default_rng(21), size=T)
    up = np.mean(S[:, 1] == 4.0)
    assert np.all(np.isin(S[:, 1], [2.0, 4.0]))
    assert abs(up - 5 / 8) < 4 * math.sqrt(5 / 8 * 3 / 8 / T)


def test_one_step_survival_weight():
    # only the up-step survives and it carries weight U(1) = 2
    m, se = cd.plus_expectation(lambda S: (S[:, 1] >= 0).astype(float), 1, 100_000,
                                _sampler(SYM, "weighting"), np.random.default_rng(22))
    assert abs(m - 1.0) < 4 * se


def test_iota_law_against_enumeration():
    # iota = first m >= 1 with S_m >= 0; for the +-1 walk P(iota = 2) = 1/4 and,
    # by parity, P(iota = 3) = 0
    S, w = oracles.enumerate_paths((-1, 1), (0.5, 0.5), 6)
    first = np.argmax(S[:, 1:] >= 0, axis=1) + 1
    hit = (S[:, 1:] >= 0).any(axis=1)
    exact = {k: float(w[hit & (first == k)].sum()) for k in range(1, 7)}
    assert exact[1] == pytest.approx(0.5) and exact[2] == pytest.approx(0.25) and exact[3] == 0.0
    T = 200_000
    io, hw = cd.sample_first_weak_ascent(SYM, T, 6, np.random.default_rng(23))
    nu, hp = cd.sample_first_prospective_min(_sampler(SYM), T, 6, np.random.default_rng(24))
    for k, pk in exact.items():
        tol = 4 * math.sqrt(pk * (1 - pk) / T) + 1e-12
        assert abs(np.mean(io == k) - pk) <= tol
        assert abs(np.mean(nu == k) - pk) <= tol
    assert np.all(hw[io == 2] == 0.0) and np.all(hp[nu == 2] == 0.0)


def test_upward_only_walk_is_trivial():
    # a walk that never steps down has U = 1, nu = iota = 1 and both heights 1
    up = fl.LatticeWalkSpec((1,), (1.0,))
    U = cd.lattice_U(up, 20)
    assert np.array_equal(U(np.arange(5.0)), np.ones(5))
    nu, hp = cd.sample_first_prospective_min(cd.PlusSampler(up, U), 1000, 5,
                                             np.random.default_rng(0))
    io, hw = cd.sample_first_weak_ascent(up, 1000, 5, np.random.default_rng(0))
    assert np.all(nu == 1) and np.all(io == 1) and np.all(hp == 1) and np.all(hw == 1)
