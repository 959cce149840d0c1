import csv
import io
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import mp
from restrace.model_ball import BallModel
from restrace.resonance_finder import find_resonances
from restrace.special_functions import ConeRegion, LogPoint
from restrace.weierstrass import (
    TruncationDominanceWarning,
    UnwrapError,
    WeierstrassProduct,
    elementary_factor,
    extract_residual,
    log_elementary_factor,
    log_product_P,
    product_P,
    residual_on_interval,
    synthetic_determinant,
)


@pytest.fixture(scope="module")
def cone_d2():
    return find_resonances(BallModel(2), ConeRegion(1.2, 0.5, 20.0))


def mp_log_product(zeros, weights, lam, p):
    """``sum m log E(lam/zeta, p)`` at 30 digits, summed from the largest zero down."""
    with mp.workdps(30):
        total = mp.mpc(0)
        for z, m in sorted(zip(zeros, weights), key=lambda q: -abs(q[0])):
            u = mp.mpc(lam) / mp.mpc(z)
            total += m * (mp.log(1 - u) + sum(u ** k / k for k in range(1, p + 1)))
        return complex(total)


# -- elementary factors ----------------------------------------------------


@pytest.mark.parametrize("p", [1, 2, 5])
def test_elementary_factor_fixed_points(p):
    assert elementary_factor(0, p) == 1
    assert elementary_factor(1, p) == 0


def test_elementary_factor_value():
    with mp.workdps(30):
        ref = float(mp.mpf("0.5") * mp.exp(mp.mpf("0.625")))
    assert elementary_factor(0.5, 2) == pytest.approx(ref, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 0.95), st.floats(-math.pi, math.pi), st.integers(1, 6))
def test_log_factor_is_the_tail_series(rho, phi, p):
    # log E(z, p) = -sum_{k > p} z^k / k inside the unit disc
    z = rho * complex(math.cos(phi), math.sin(phi))
    with mp.workdps(30):
        ref = complex(-mp.nsum(lambda k: mp.mpc(z) ** k / k, [p + 1, mp.inf]))
    value, winding = log_elementary_factor(z, p)
    assert abs(complex(value) - ref) < 1e-12 * max(1.0, abs(ref))
    assert winding == 0


def test_log_factor_large_argument():
    z = 7.0 - 3.0j
    value, winding = log_elementary_factor(z, 3)
    ref = elementary_factor(z, 3)
    assert abs(np.exp(complex(value)) - ref) < 1e-12 * abs(ref)
    assert complex(value).imag - np.angle(ref) == pytest.approx(2 * math.pi * int(winding), abs=1e-12)


# -- products --------------------------------------------------------------


def test_empty_product_is_one():
    prod = WeierstrassProduct(3, [], [])
    assert product_P(prod, 2.5 + 1j) == 1


def test_product_at_origin_is_one():
    prod = WeierstrassProduct(2, [1j, -2 + 3j], [1, 2])
    assert prod.log_value(0.0)[0] == 0


def test_product_vanishes_at_a_zero():
    prod = WeierstrassProduct(2, [1j, -2 + 3j], [1, 2])
    assert product_P(prod, LogPoint(1.0, 0.5 * math.pi)) == 0
    assert log_product_P(prod, -2 + 3j)[1]


def test_real_zeros_and_low_genus_are_rejected():
    with pytest.raises(ValueError):
        WeierstrassProduct(2, [1.0 + 0j], [1])
    with pytest.raises(ValueError):
        WeierstrassProduct(0, [1j], [1])
    with pytest.raises(ValueError):
        WeierstrassProduct(2, [1j], [1], counting_exponent=2.5)
    with pytest.raises(ValueError):
        WeierstrassProduct(2, [1j, 2j], [1])


@pytest.mark.parametrize("lam", [5.0, 3.0 - 2.0j])
def test_product_matches_reordered_high_precision_sum(cone_d2, lam):
    z = cone_d2.values()
    w = cone_d2.weights()
    prod = WeierstrassProduct(3, z, w)
    ours = complex(prod.log_value(lam)[0])
    ref = mp_log_product(z, w, lam, 3)
    # log P is holomorphic, the reference sums principal logs: compare P itself
    assert abs(np.exp(ours - ref) - 1) < 1e-10


def test_truncation_warning():
    zeros = [1j, 2 + 2j, -3 + 1j]
    prod = WeierstrassProduct(3, zeros, [1, 1, 1], truncation_radius=4.0, counting_exponent=2.0)
    with pytest.warns(TruncationDominanceWarning):
        product_P(prod, 3.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error", TruncationDominanceWarning)
        product_P(prod, 0.01)


@pytest.mark.parametrize("lam", [1.0, 3.0, 5.0])
def test_tail_bound_covers_omitted_zeros(cone_d2, lam):
    z, w = cone_d2.values(), cone_d2.weights()
    kappa = cone_d2.counting_exponent(5.0, 20.0)
    full = WeierstrassProduct(3, z, w, 20.0, kappa)
    cut = WeierstrassProduct(3, z, w, 10.0, kappa)
    assert abs(full.log_value(lam)[0] - cut.log_value(lam)[0]) <= cut.tail_bound(lam)


def test_genus_is_sufficient_for_the_cone_set(cone_d2):
    # sup over the grid of the change R -> 2R -> 4R shrinks by at least half
    z, w = cone_d2.values(), cone_d2.weights()
    lam = np.linspace(1.0, 4.0, 31)
    logs = [WeierstrassProduct(3, z, w, R).log_value(lam) for R in (5.0, 10.0, 20.0)]
    first = np.max(np.abs(logs[1] - logs[0]))
    second = np.max(np.abs(logs[2] - logs[1]))
    assert second <= 0.5 * first


def test_product_is_order_independent(cone_d2):
    z, w = cone_d2.values(), cone_d2.weights()
    perm = np.random.default_rng(3).permutation(z.size)
    a = WeierstrassProduct(3, z, w).log_value([2.0, 7.5 + 1j])
    b = WeierstrassProduct(3, z[perm], w[perm]).log_value([2.0, 7.5 + 1j])
    assert np.array_equal(a, b)


# -- residual --------------------------------------------------------------


def _random_product(seed=0, n=200, genus=3, radius=30.0):
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.uniform(0.05, 1.0, n))
    zeros = r * np.exp(1j * rng.uniform(0.2, math.pi - 0.2, n))
    return WeierstrassProduct(genus, zeros, np.ones(n))


def test_synthetic_round_trip():
    prod = _random_product()
    g = lambda lam: 0.3j * lam ** 3 / 900 + 0.1 * lam
    gp = lambda lam: 0.9j * lam ** 2 / 900 + 0.1
    lam = np.linspace(1.0, 30.0, 2000)
    log_s, dlog = synthetic_determinant(g, gp, prod, lam)
    res = extract_residual(None, prod, lam, log_s=log_s, s_log_derivative=dlog)
    # g is recovered up to the 2 pi i fixed by where the unwrapping starts
    offset = 2j * math.pi * round((res.g[0] - g(lam[0])).imag / (2 * math.pi))
    assert np.max(np.abs(res.g - offset - g(lam))) < 1e-9
    assert np.max(np.abs(res.g_prime - gp(lam))) < 1e-9


def test_extension_is_odd():
    prod = _random_product(1)
    lam = np.linspace(0.5, 10.0, 400)
    log_s, dlog = synthetic_determinant(lambda x: 0.2 * x + 0.05j * x ** 3, lambda x: 0.2 + 0.15j * x ** 2, prod, lam)
    x, g = extract_residual(None, prod, lam, log_s=log_s, s_log_derivative=dlog).extended()
    assert np.array_equal(x, -x[::-1])
    assert np.array_equal(g, -g[::-1])


def test_model_residual_and_csv(cone_d2):
    prod = WeierstrassProduct.from_resonances(cone_d2, 3)
    res = residual_on_interval(BallModel(2), prod, 1.0, 8.0, steps_per_radian=2.0)
    assert math.isfinite(res.growth_exponent(1))
    p, c = res.symbol_bound(1)
    assert np.all(np.abs(res.g_prime) <= c * np.abs(res.lam) ** (p - 1) * (1 + 1e-12))
    rows = list(csv.reader(io.StringIO(res.to_csv())))
    assert rows[0] == ["lambda_re", "lambda_im", "g_re", "g_im", "gprime_re", "gprime_im"]
    assert len(rows) == res.lam.size + 1
    assert float(rows[1][0]) == res.lam[0].real


def test_coarse_grid_refuses_to_unwrap(cone_d2):
    prod = WeierstrassProduct.from_resonances(cone_d2, 3)
    with pytest.raises(UnwrapError):
        extract_residual(BallModel(2), prod, [1.0, 15.0, 30.0])


def test_grid_through_a_zero_is_rejected():
    prod = WeierstrassProduct(2, [1j, 2 + 1e-10j], [1, 1])
    with pytest.raises(ValueError):
        extract_residual(None, prod, [1.0, 2.0], log_s=[0, 0], s_log_derivative=[0, 0])
