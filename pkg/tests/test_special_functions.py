import cmath
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from restrace.special_functions import (
    AccuracyLossWarning,
    ConeRegion,
    HankelOverflowError,
    LogPoint,
    Order,
    bessel_j,
    hankel,
    hankel_derivative,
    log_hankel,
    to_cut_plane,
)

# (kind, nu, r, theta) -> value, frozen from oracles.hankel_logplane (mpmath, 30 and 50 digits)
HANKEL_FIXTURES = {
    (1, 0, 0.3, 0.0): 0.9776262465382961 - 0.8072735778045195j,
    (2, 0, 1.0, 2.5): 2.2134287181775982 + 0.6088804274612054j,
    (1, 1, 2.0, -2.0): -1.8858550901242799 - 1.8986380107097778j,
    (2, 3, 5.0, 6.0): 2.6611089405963675 + 0.8421064671775631j,
    (1, 0.5, 1.0, 3.0): -0.4201982280482171 + 0.5509117461582734j,
    (2, 1.5, 4.0, -5.0): -4.149441464554486 - 13.487894855075705j,
    (1, 2.5, 0.8, 7.5): 0.625815382176562 - 3.8133355219781024j,
    (2, 7, 12.0, 1.2): 2363.440938968168 - 453.9563270371727j,
    (1, 10, 20.0, -0.3): 15.494165880033846 - 27.881011887693745j,
    (2, 0, 0.05, -8.0): -4.094937138120598 + 1.9832503487769826j,
    (1, 4, 30.0, 3.3): 9.848233089212046 - 12.530051263397288j,
    (2, 20.5, 25.0, 0.7): 2805.7441618999283 + 3948.52450514201j,
}

# H^(1)_0 continued once around |z| = 1, frozen from the ODE oracle
H1_0_FULL_TURN = -2.295593059675245 + 0.0882569642178644j
J0_AT_2 = 0.22389077914123567  # mpmath besselj(0, 2)


def rel(a, b):
    return abs(a - b) / abs(b)


# -- bessel_j --------------------------------------------------------------


def test_j0_at_origin():
    assert bessel_j(0, 0) == 1


def test_j_half_closed_form():
    assert bessel_j(0.5, math.pi / 2) == pytest.approx(2 / math.pi, rel=1e-14)


def test_j0_at_two_matches_oracle():
    assert oracles.escalate(lambda: oracles.mp.besselj(0, 2)).real == pytest.approx(J0_AT_2, rel=1e-15)
    assert abs(bessel_j(0, 2.0) - J0_AT_2) < 1e-12 * J0_AT_2


def test_j_half_integer_at_origin_is_a_domain_error():
    with pytest.raises(ValueError):
        bessel_j(1.5, 0)


def test_series_flags_cancellation():
    with pytest.warns(AccuracyLossWarning):
        bessel_j(0, 45.0, method="series")


def test_series_and_amos_agree_on_random_points():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        nu = rng.integers(0, 41) / 2
        z = rng.uniform(5, 15) * cmath.exp(1j * rng.uniform(-math.pi, math.pi))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AccuracyLossWarning)
            a = bessel_j(nu, z, "series")
        worst = max(worst, rel(a, bessel_j(nu, z, "amos")))
    assert worst < 1e-9


def test_bessel_j_matches_mpmath_up_to_order_60():
    for nu, z in [(0, 49.0), (12.5, 3 + 4j), (60, 50.0), (33, 20 - 10j), (0.5, 1e-3)]:
        ref = oracles.escalate(lambda: oracles.mp.besselj(nu, z))
        assert rel(bessel_j(nu, z), ref) < 1e-12


# -- hankel ----------------------------------------------------------------


def test_h1_half_closed_form():
    ref = -1j * math.sqrt(2 / math.pi) * cmath.exp(1j)
    assert abs(hankel(1, 0.5, LogPoint(1.0, 0.0)) - ref) < 1e-14


@pytest.mark.parametrize("key", sorted(HANKEL_FIXTURES))
def test_hankel_fixture(key):
    assert rel(hankel(*key[:2], LogPoint(*key[2:])), HANKEL_FIXTURES[key]) < 1e-10


def test_hankel_fixtures_reproduced_by_oracle():
    for key, val in HANKEL_FIXTURES.items():
        assert rel(oracles.hankel_logplane(*key), val) < 1e-14


def test_full_turn_matches_ode_continuation():
    assert rel(oracles.hankel_ode(1, 0, 1.0, 2 * math.pi), H1_0_FULL_TURN) < 1e-10
    assert rel(hankel(1, 0, LogPoint(1.0, 2 * math.pi)), H1_0_FULL_TURN) < 1e-10


def test_connection_formulas_match_path_continuation():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        kind = int(rng.integers(1, 3))
        nu = int(rng.integers(0, 21)) / 2
        r = float(rng.uniform(0.05, 5.0))
        th = float(rng.choice([-2 * math.pi, 2 * math.pi]))
        ref = oracles.hankel_ode(kind, nu, r, th)
        worst = max(worst, rel(hankel(kind, nu, LogPoint(r, th)), ref))
    assert worst < 1e-8


@pytest.mark.parametrize(
    "kind, nu, r, th",
    [(1, 1.5, 11.4, 2 * math.pi), (2, 0, 10.5, -2 * math.pi), (2, 7, 20.0, 2 * math.pi), (1, 20, 30.0, -2 * math.pi), (2, 4.5, 8.0, 4 * math.pi)],
)
def test_connection_formulas_far_from_origin(kind, nu, r, th):
    ref = oracles.hankel_ode_mp(kind, nu, r, th)
    assert rel(hankel(kind, nu, LogPoint(r, th)), ref) < 1e-8


@settings(max_examples=200, deadline=None)
@given(
    st.integers(0, 80).map(lambda k: k / 2),
    st.floats(0.05, 50.0),
    st.floats(-math.pi + 1e-6, math.pi - 1e-6),
)
def test_wronskian(nu, r, th):
    z = LogPoint(r, th)
    h1, h2 = hankel(1, nu, z), hankel(2, nu, z)
    d1, d2 = hankel_derivative(1, nu, z), hankel_derivative(2, nu, z)
    w = h1 * d2 - d1 * h2
    ref = -4j / (math.pi * z.project())
    scale = max(abs(h1 * d2), abs(d1 * h2), abs(ref))
    assert abs(w - ref) <= 1e-10 * scale


@pytest.mark.parametrize("nu", [0, 1, 2, 5, 17])
@pytest.mark.parametrize("lam", [0.1, 1.0, 7.3, 40.0])
def test_reflection_on_positive_reals(nu, lam):
    z = LogPoint(lam, 0.0)
    h1 = hankel(1, nu, z)
    assert abs(hankel(2, nu, z) - h1.conjugate()) <= 1e-12 * abs(h1)


def test_origin_is_a_domain_error():
    with pytest.raises(ValueError):
        hankel(1, 0, LogPoint(0.0, 0.0))


def test_overflow_is_reported_and_log_form_survives():
    z = LogPoint(800.0, 0.5 * math.pi)
    with pytest.raises(HankelOverflowError):
        hankel(2, 0, z)
    val = log_hankel(2, 0, z)
    assert val.real == pytest.approx(800 - 0.5 * math.log(400 * math.pi), rel=1e-6)


# -- derivatives -----------------------------------------------------------


def test_derivative_recurrence_order_zero():
    z = LogPoint(1.0, 0.0)
    assert abs(hankel_derivative(1, 0, z) + hankel(1, 1, z)) < 1e-15


def test_derivative_against_central_difference():
    z0 = 2 + 0.5j
    h = 1e-5
    for kind in (1, 2):
        f = lambda z: hankel(kind, 1.5, LogPoint.from_complex(z))
        fd = (f(z0 + h) - f(z0 - h)) / (2 * h)
        assert abs(hankel_derivative(kind, 1.5, LogPoint.from_complex(z0)) - fd) < 1e-7


def test_derivative_half_order_closed_form():
    # H2_{1/2}(z) = i sqrt(2/(pi z)) e^{-iz}
    z = 1.0
    ref = 1j * math.sqrt(2 / math.pi) * (-0.5 * z ** -1.5 - 1j * z ** -0.5) * cmath.exp(-1j * z)
    assert abs(hankel_derivative(2, 0.5, LogPoint(1.0, 0.0)) - ref) < 1e-14


# -- points and regions ----------------------------------------------------


def test_log_points_are_not_reduced():
    a, b = LogPoint(1.0, 0.3), LogPoint(1.0, 0.3 + 2 * math.pi)
    assert a != b
    assert abs(a.project() - b.project()) < 1e-15


@given(st.floats(0.01, 100), st.floats(-20, 20), st.integers(-3, 3))
def test_projection_invariant_under_full_turns(r, th, k):
    assert abs(LogPoint(r, th).project() - LogPoint(r, th + 2 * math.pi * k).project()) <= 1e-12 * r * (1 + abs(k) + abs(th))


def test_cut_plane_identification():
    assert to_cut_plane(LogPoint(1.0, 0.0)) == 1
    assert to_cut_plane(LogPoint(1.0, 0.5 * math.pi)) is None
    assert to_cut_plane(LogPoint(1.0, 2 * math.pi)) is None
    assert to_cut_plane(LogPoint(1.0, -math.pi)) == pytest.approx(-1)


def test_cone_membership():
    cone = ConeRegion(0.5, 1.0, 10.0)
    assert LogPoint(2.0, 0.4) in cone
    assert LogPoint(2.0, -math.pi + 0.4) in cone
    assert LogPoint(2.0, -math.pi - 0.4) in cone
    assert LogPoint(2.0, 0.6) not in cone
    assert LogPoint(11.0, 0.0) not in cone
    with pytest.raises(ValueError):
        ConeRegion(2.0, 1.0, 10.0)


def test_order_rejects_non_half_integers():
    assert Order.of(2.5).twice_nu == 5
    with pytest.raises(ValueError):
        Order.of(0.3)
    with pytest.raises(ValueError):
        Order(-1)
