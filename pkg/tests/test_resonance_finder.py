import cmath
import math
from collections import Counter

import numpy as np
import pytest

import oracles
from frozen import CONE_D2_COUNTS
from restrace.model_ball import BallModel, mode_function
from restrace.resonance_finder import (
    AnnularRegion,
    BoundaryZeroError,
    Box,
    ResonanceSet,
    count_zeros,
    find_resonances,
    refine_log_zero,
    refine_zero,
)
from restrace.special_functions import ConeRegion, LogPoint

# d = 2, ell = 5: zeros of H^(2)_5 with 3 < |z| < 12, 0.01 < arg z < pi - 0.01
# (oracles.newton_zeros from a dense seed grid, mpmath at 30 digits)
D2_L5_ROOTS = [
    -0.43311461687640085 + 3.2958487723953356j,
    1.3038823977137057 + 3.1351328447046436j,
    -2.1903794353823374 + 2.7941011920883203j,
    3.1130829449859485 + 2.218626274639876j,
    -4.12999941084948 + 1.2473690038906422j,
    -8.775723665129815 + 0.41727562644149474j,
]
# d = 2, ell = 0, same sheet, 1 < |z| < 10
D2_L0_ROOTS = [
    -2.4040911771553444 + 0.34050215295614106j,
    -5.519997520841833 + 0.3452250285456794j,
    -8.653705765841124 + 0.3460081927676729j,
]


def principal(z: complex) -> LogPoint:
    return LogPoint(abs(z), math.atan2(z.imag, z.real))


@pytest.fixture(scope="module")
def cone_d2():
    return find_resonances(BallModel(2), ConeRegion(1.2, 0.5, 20.0))


# -- counting --------------------------------------------------------------


def test_count_single_zero_in_square():
    assert count_zeros(lambda z: 1 / z, Box(-0.5, 0.5, -0.5, 0.5, "rect")) == 1


def test_count_quadratic():
    assert count_zeros(lambda z: 2 * z / (z * z + 1), Box(-2, 2, -2, 2, "rect")) == 2


def test_count_matches_oracle_roots():
    fn = mode_function(BallModel(2), 5)
    assert count_zeros(fn.log_derivative, Box(3, 12, 0.01, math.pi - 0.01)) == len(D2_L5_ROOTS)


def test_cover_is_additive():
    fn = mode_function(BallModel(2), 5)
    box = Box(3, 12, 0.01, math.pi - 0.01)
    for fa, fb in [(0.5, 0.5), (0.3, 0.7)]:
        assert sum(count_zeros(fn.log_derivative, c) for c in box.split(fa, fb)) == 6


def test_zero_on_contour_is_reported():
    # z = 1 sits on the right edge and on a quadrature node
    with pytest.raises(BoundaryZeroError):
        count_zeros(lambda z: 1 / (z - 1), Box(0, 1, -1, 1, "rect"), retries=0)
    assert count_zeros(lambda z: 1 / (z - 1), Box(0, 1, -1, 1, "rect")) in (0, 1)


# -- Newton ----------------------------------------------------------------


def test_refine_zero_sqrt_two():
    z = refine_zero(lambda z: z * z - 2, lambda z: 2 * z, 1.4)
    assert abs(z - math.sqrt(2)) < 1e-14


def test_refine_zero_closed_form_resonance():
    f = lambda z: cmath.exp(1j * z) * (z + 1j) / z ** 2
    fp = lambda z: cmath.exp(1j * z) * (1j * (z + 1j) / z ** 2 + 1 / z ** 2 - 2 * (z + 1j) / z ** 3)
    assert abs(refine_zero(f, fp, -0.9j) + 1j) < 1e-10


@pytest.mark.parametrize("root", D2_L0_ROOTS)
def test_refine_log_zero_from_coarse_seed(root):
    fn = mode_function(BallModel(2), 0)
    seed = principal(complex(round(root.real, 1) + 0.1, round(root.imag, 1) + 0.1))
    found, resid = refine_log_zero(fn, seed)
    assert abs(found.project() - root) < 1e-9 * abs(root)
    assert resid < 1e-12


# -- searches --------------------------------------------------------------


def test_d3_closed_form_family():
    rs = find_resonances(BallModel(3), AnnularRegion(0.1, 3.0, ((0.0, math.pi),)), per_mode_cap=1)
    assert len(rs) == 1
    (e,) = rs.entries
    assert (e.mode, e.multiplicity, e.weight) == (1, 1, 3)
    assert abs(e.value - 1j) < 1e-12


def test_d2_mode_search_matches_oracle_roots():
    region = AnnularRegion(3.0, 12.0, ((0.01, math.pi - 0.01),))
    rs = find_resonances(BallModel(2), region, per_mode_cap=5)
    found = sorted((e.value for e in rs if e.mode == 5), key=abs)
    assert len(found) == len(D2_L5_ROOTS)
    for a, b in zip(found, sorted(D2_L5_ROOTS, key=abs)):
        assert abs(a - b) < 1e-9 * abs(b)


def test_cone_counts_match_dense_oracle(cone_d2):
    per_mode = Counter(e.mode for e in cone_d2)
    assert dict(per_mode) == {ell: 2 * n for ell, n in CONE_D2_COUNTS.items()}
    assert cone_d2.total_multiplicity() == 2 * sum(2 * n if ell else n for ell, n in CONE_D2_COUNTS.items())


@pytest.mark.parametrize("ell", [4, 22])
def test_cone_roots_match_dense_oracle(cone_d2, ell):
    upper = oracles.dense_newton_sector(ell, 0, 0.5, 20.0, 0.0, 1.2)
    lower = oracles.dense_newton_sector(ell, -1, 0.5, 20.0, math.pi - 1.2, math.pi)
    assert len(upper) == len(lower) == CONE_D2_COUNTS[ell]
    ours = [e.location for e in cone_d2 if e.mode == ell]
    for q in upper:
        assert min(abs(p.project() - q) for p in ours if p.theta > 0) < 1e-9 * abs(q)
    for q in lower:
        # principal angle in (pi - rho, pi) is the log-plane angle one turn down
        target = LogPoint(abs(q), math.atan2(q.imag, q.real) - 2 * math.pi)
        assert min(abs(p.r - target.r) + abs(p.theta - target.theta) * p.r for p in ours) < 1e-9 * abs(q)


def test_resonance_free_strip_is_empty():
    assert len(find_resonances(BallModel(3), AnnularRegion(1.0, 30.0, ((0.001, 0.02),)))) == 0


def test_reported_roots_pass_newton_check(cone_d2):
    for e in cone_d2:
        g = complex(mode_function(BallModel(2), e.mode).log_derivative(e.location.r, e.location.theta))
        assert (1 / abs(g)) / max(1.0, e.location.r) < 1e-9


def test_cone_set_invariants(cone_d2):
    assert all(e.location in cone_d2.region for e in cone_d2)
    assert not cone_d2.flagged
    assert cone_d2.counting_exponent(5.0, 20.0) <= 2 + 0.3
    assert cone_d2.symmetry_defect() <= 1e-8


def test_json_round_trip(cone_d2):
    back = ResonanceSet.from_json(cone_d2.to_json())
    assert back.to_json() == cone_d2.to_json()
    assert np.array_equal(back.values(), cone_d2.values())
    assert back.region == cone_d2.region


def test_region_rejects_bad_radii():
    with pytest.raises(ValueError):
        AnnularRegion(2.0, 1.0, ((0.0, 1.0),))
