import math
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import tiny_scenario
from oracles import quadratic_slack, rayleigh_siso_capacity, slack_bisection
from csun.model import Allocation, approx_rate, approx_rate_v
from csun.rates import (mc_ergodic_rate, mc_objectives, mc_rate_samples, slack_for,
                        slack_residual, solve_slack_fixed_point)


def test_slack_quadratic_case():
    t0 = time.perf_counter()
    w = solve_slack_fixed_point(np.array([3.0]), np.array([1.0]), 1, 1.0)
    assert time.perf_counter() - t0 < 1e-2
    assert w == pytest.approx(quadratic_slack(3.0), rel=1e-12)
    assert w == pytest.approx((1 + math.sqrt(13)) / 2, rel=1e-12)


def test_slack_zero_power_is_one():
    assert solve_slack_fixed_point(np.zeros(4), np.ones(4), 4, 1.0) == 1.0


@given(st.lists(st.floats(0.0, 1e4), min_size=1, max_size=8), st.integers(1, 8),
       st.floats(1e-3, 1e3))
def test_slack_matches_brent_and_is_scale_free(snr, M, scale):
    snr = np.array(snr)
    w = solve_slack_fixed_point(snr, np.ones_like(snr), M, 1.0)
    assert w == pytest.approx(slack_bisection(snr, M), rel=1e-9)
    assert slack_residual(w, snr, np.ones_like(snr), M, 1.0) < 1e-6
    # l^2 p and sigma^2 scaled together
    w2 = solve_slack_fixed_point(snr * scale, np.ones_like(snr), M, scale)
    assert w2 == pytest.approx(w, rel=1e-10)


def test_slack_rejects_negative_power():
    with pytest.raises(ValueError):
        solve_slack_fixed_point(np.array([-1.0]), np.ones(1), 1, 1.0)


def test_mc_siso_closed_form():
    samples = 100_000
    draws = mc_rate_samples(np.array([1.0]), np.array([1.0]), 1, 1.0, samples, seed=7)
    ref = rayleigh_siso_capacity(1.0)
    assert ref == pytest.approx(0.8603, abs=1e-4)
    se = draws.std(ddof=1) / math.sqrt(samples)
    assert abs(draws.mean() - ref) < 3 * se


def test_mc_zero_power_and_determinism():
    assert mc_ergodic_rate(np.zeros(3), np.ones(3), 4, 1.0, 100, seed=1) == 0.0
    a = mc_rate_samples(np.ones(3), np.ones(3), 4, 1.0, 5000, seed=3, key=(1, 2))
    b = mc_rate_samples(np.ones(3), np.ones(3), 4, 1.0, 5000, seed=3, key=(1, 2))
    c = mc_rate_samples(np.ones(3), np.ones(3), 4, 1.0, 5000, seed=3, key=(1, 3))
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    with pytest.raises(ValueError):
        mc_rate_samples(np.ones(1), np.ones(1), 1, 1.0, 0, seed=0)


def test_mc_monotone_per_draw():
    rng = np.random.default_rng(5)
    p = rng.random(4)
    lo = mc_rate_samples(p, np.ones(4), 4, 1.0, 2000, seed=9)
    hi = mc_rate_samples(p * 1.5, np.ones(4), 4, 1.0, 2000, seed=9)
    assert np.all(hi >= lo - 1e-12)


def test_mc_wide_and_tall_agree_with_direct_logdet():
    rng = np.random.default_rng(1)
    for M, K in ((2, 5), (5, 2)):
        p = rng.random(K)
        l = rng.random(K)
        fast = mc_rate_samples(p, l, M, 0.5, 10, seed=4)
        brng = np.random.default_rng(np.random.SeedSequence(4, spawn_key=(0,)))
        S = (brng.standard_normal((10, M, K)) + 1j * brng.standard_normal((10, M, K))) / math.sqrt(2)
        D = np.diag(l ** 2 * p / 0.5)
        direct = [np.linalg.slogdet(np.eye(M) + s @ D @ s.conj().T)[1] / math.log(2) for s in S]
        assert fast == pytest.approx(direct, rel=1e-10)


def test_approximation_close_to_mc():
    rng = np.random.default_rng(11)
    for M in (4, 6):
        p = rng.uniform(0, 0.3, M)
        l = 10 ** rng.uniform(-5.5, -5.0, M)
        w = solve_slack_fixed_point(p, l, M, 1e-14)
        ra = approx_rate(p, w, l, M, 1e-14)
        mc = mc_ergodic_rate(p, l, M, 1e-14, 10_000, seed=2)
        assert abs(ra - mc) / mc < 0.10


@given(st.integers(0, 2**32 - 1))
def test_fixed_point_minimises_rate_in_v(seed):
    rng = np.random.default_rng(seed)
    K = int(rng.integers(1, 6))
    M = int(rng.integers(1, 7))
    p = rng.uniform(0, 1, K)
    l = rng.uniform(0.1, 3, K)
    w = solve_slack_fixed_point(p, l, M, 1.0)
    base = approx_rate_v(p, math.log(w), l, M, 1.0)
    vs = rng.uniform(0, 2 * math.log(w) + 1, 20)
    vals = approx_rate_v(p[None, :], vs, l[None, :], M, 1.0)
    assert np.all(vals >= base - 1e-9)


def test_mc_objectives_bookkeeping():
    rng = np.random.default_rng(2)
    sc = tiny_scenario(rng, N=2, U=2, G=3, K=2)
    zero = mc_objectives(Allocation.zeros(sc), sc, 100, seed=0)
    assert zero.d_e == 0.0 and zero.d_min == 0.0 and np.all(zero.per_user == 0)

    x = np.zeros((2, 2, 3), np.int8)
    x[0, 0, 0] = 1
    sc1 = sc
    alloc = Allocation(x, np.full((2, 3, 2), 0.1), np.array([2.0, 3.0]))
    res = mc_objectives(alloc, sc1, 500, seed=1)
    assert res.d_e == pytest.approx(np.nansum(res.per_user), rel=1e-12)
    assert res.d_min == 0.0          # three users unserved
    direct = 2.0 * mc_ergodic_rate(alloc.power[0, 0], sc.gain[0, 0, 0], sc.num_antennas,
                                   sc.noise_power, 500, seed=1, key=(0, 0, 0))
    assert res.d_e == pytest.approx(direct, rel=1e-12)


def test_slack_for_shape():
    rng = np.random.default_rng(3)
    sc = tiny_scenario(rng, N=2, U=3, G=4, K=2)
    s = slack_for(np.full((2, 4, 2), 0.1), sc)
    assert s.w.shape == (2, 3, 4) and np.all(s.w >= 1)
