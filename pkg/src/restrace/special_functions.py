"""Bessel and Hankel functions of half-integer order on the logarithmic plane.

Points of the logarithmic plane are :class:`LogPoint` instances: a modulus and
an unreduced angle.  Principal-sheet values come from the AMOS routines in
:mod:`scipy.special`; other sheets are reached with the classical continuation
identities under ``z -> z * exp(i m pi)``, which are exact for every sheet
index ``m``.

Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import special as sp

__all__ = [
    "AccuracyLossWarning",
    "ConeRegion",
    "HankelOverflowError",
    "LogPoint",
    "Order",
    "bessel_j",
    "bessel_j_series",
    "hankel",
    "hankel_derivative",
    "hankel_log_derivative",
    "hankel_ratio",
    "hankel_values",
    "log_hankel",
    "log_hankel_values",
    "to_cut_plane",
]

TWO_PI = 2.0 * math.pi


class AccuracyLossWarning(RuntimeWarning):
    """Cancellation in a series exceeded the double-precision budget."""


class HankelOverflowError(ArithmeticError):
    """The requested value is not representable; use :func:`log_hankel`."""


@dataclass(frozen=True)
class LogPoint:
    """A point ``r * exp(i theta)`` of the logarithmic plane.

    ``theta`` is never reduced modulo ``2 pi``: points one turn apart are
    different points of the plane even though they project to the same
    complex number.
    """

    r: float
    theta: float

    def __post_init__(self) -> None:
        if not self.r >= 0.0:
            raise ValueError(f"modulus must be nonnegative, got {self.r}")

    def project(self) -> complex:
        return complex(self.r * math.cos(self.theta), self.r * math.sin(self.theta))

    @classmethod
    def from_complex(cls, z: complex, sheet: int = 0) -> "LogPoint":
        """Principal-angle point of ``z`` moved ``sheet`` full turns."""
        return cls(abs(z), math.atan2(z.imag, z.real) + TWO_PI * sheet)

    def scaled(self, factor: float) -> "LogPoint":
        return LogPoint(self.r * factor, self.theta)

    def rotated(self, angle: float) -> "LogPoint":
        return LogPoint(self.r, self.theta + angle)


@dataclass(frozen=True)
class ConeRegion:
    """Truncated conic neighbourhood of the real axis on the logarithmic plane.

    The physical half-plane is ``-pi < theta < 0``; it is bounded by the
    positive reals (``theta = 0``) and the negative reals (``theta = -pi``).
    The cone of aperture ``rho`` is the union of the two angular strips of
    half-width ``rho`` about those rays.
    """

    rho: float
    r_min: float
    r_max: float

    def __post_init__(self) -> None:
        if not 0.0 < self.rho < math.pi / 2:
            raise ValueError("rho must lie in (0, pi/2)")
        if not 0.0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")

    def __contains__(self, point: LogPoint) -> bool:
        if not self.r_min <= point.r <= self.r_max:
            return False
        return abs(point.theta) < self.rho or abs(point.theta + math.pi) < self.rho

    def sectors(self) -> list[tuple[float, float]]:
        """Angular intervals covering the region, in ascending order."""
        return [(-math.pi - self.rho, -math.pi + self.rho), (-self.rho, self.rho)]


@dataclass(frozen=True)
class Order:
    """Bessel order ``nu = twice_nu / 2``."""

    twice_nu: int

    def __post_init__(self) -> None:
        if self.twice_nu < 0:
            raise ValueError("negative orders must be reflected before use")

    @property
    def nu(self) -> float:
        return self.twice_nu / 2.0

    @property
    def is_integer(self) -> bool:
        return self.twice_nu % 2 == 0

    @classmethod
    def of(cls, nu: Union["Order", float, int]) -> "Order":
        if isinstance(nu, Order):
            return nu
        twice = 2.0 * float(nu)
        if abs(twice - round(twice)) > 1e-12:
            raise ValueError(f"order {nu} is not a multiple of 1/2")
        return cls(int(round(twice)))


NuLike = Union[Order, float, int]


def to_cut_plane(z: LogPoint) -> Optional[complex]:
    """Project ``z`` onto the plane slit along the positive imaginary axis.

    The slit plane is identified with the angles ``-3 pi/2 < theta < pi/2``;
    anything else (including the slit itself) returns ``None``.
    """
    if -1.5 * math.pi < z.theta < 0.5 * math.pi:
        return z.project()
    return None


# ---------------------------------------------------------------------------
# continuation coefficients

_SIN_QUARTER = (0, 1, 0, -1)  # sin(q pi / 2) for q mod 4
_I_POWERS = (1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j)


def _sin_ratio(k: np.ndarray, twice_nu: int) -> np.ndarray:
    """``sin(k nu pi) / sin(nu pi)`` with the integer-order limit."""
    k = np.asarray(k, dtype=np.int64)
    if twice_nu % 2 == 0:
        n = twice_nu // 2
        sign = np.where(((k - 1) * n) % 2 == 0, 1.0, -1.0)
        return k * sign
    num = np.take(_SIN_QUARTER, (k * twice_nu) % 4)
    den = _SIN_QUARTER[twice_nu % 4]
    return num / den


def _connection(kind: int, twice_nu: int, m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coefficients ``(a, b)`` with ``H_kind(z e^{i m pi}) = a H1(z) + b H2(z)``."""
    e_plus = _I_POWERS[twice_nu % 4]  # exp(i nu pi)
    e_minus = _I_POWERS[(-twice_nu) % 4]
    if kind == 1:
        a = -_sin_ratio(m - 1, twice_nu) + 0j
        b = -e_minus * _sin_ratio(m, twice_nu)
    elif kind == 2:
        a = e_plus * _sin_ratio(m, twice_nu)
        b = _sin_ratio(m + 1, twice_nu) + 0j
    else:
        raise ValueError("kind must be 1 or 2")
    return a, b


def _reduce(r: np.ndarray, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = np.rint(theta / math.pi).astype(np.int64)
    z0 = r * np.exp(1j * (theta - m * math.pi))
    return m, z0


def _log_combination(a, b, h1, h2, z0):
    """``log(a H1(z0) + b H2(z0))`` from exponent-scaled AMOS values."""
    e1 = 1j * z0
    e2 = -1j * z0
    use1 = a != 0
    use2 = b != 0
    big = np.full(np.shape(z0), -np.inf)
    big = np.where(use1, np.maximum(big, e1.real), big)
    big = np.where(use2, np.maximum(big, e2.real), big)
    with np.errstate(over="ignore", invalid="ignore", under="ignore", divide="ignore"):
        t1 = np.where(use1, a * h1 * np.exp(e1 - big), 0.0)
        t2 = np.where(use2, b * h2 * np.exp(e2 - big), 0.0)
        return big + np.log(t1 + t2)


def _principal_log_pair(nu: float, z0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    with np.errstate(all="ignore"):
        return sp.hankel1e(nu, z0), sp.hankel2e(nu, z0)


def log_hankel_values(kind: int, nu: NuLike, r, theta) -> np.ndarray:
    """Vectorised ``log H^{(kind)}_nu`` at the log-plane points ``(r, theta)``.

    The imaginary part is a principal logarithm (no winding is tracked).
    Where the exponent-scaled AMOS values under- or overflow, the unscaled
    ones are tried; what is still out of range (orders well above ``|z|``,
    where Hankel functions dominate the order recurrence) is reached by
    forward recurrence of ``H_{k+1}/H_k`` from the lowest order of the same
    parity.
    """
    order = Order.of(nu)
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    r, theta = np.broadcast_arrays(r, theta)
    shape = r.shape
    r = r.ravel()
    theta = theta.ravel()
    m, z0 = _reduce(r, theta)
    a, b = _connection(kind, order.twice_nu, m)
    h1, h2 = _principal_log_pair(order.nu, z0)
    out = np.array(_log_combination(a, b, h1, h2, z0), dtype=complex)
    bad = ~np.isfinite(out)
    if np.any(bad):
        # the scaled AMOS values can underflow to 0 where the unscaled ones
        # are fine (large order, lower half-plane)
        ab, bb, zb = a[bad], b[bad], z0[bad]
        with np.errstate(all="ignore"):
            t1 = np.where(ab != 0, ab * sp.hankel1(order.nu, zb), 0)
            t2 = np.where(bb != 0, bb * sp.hankel2(order.nu, zb), 0)
            out[bad] = np.log(t1 + t2)
        bad = ~np.isfinite(out)
    if np.any(bad):
        out[bad] = _log_hankel_by_recurrence(kind, order, r[bad], theta[bad])
    return out.reshape(shape)


def _log_hankel_by_recurrence(kind: int, order: Order, r, theta) -> np.ndarray:
    base = Order(order.twice_nu % 2)
    logh = log_hankel_values(kind, base, r, theta)
    z = r * np.exp(1j * theta)
    steps = (order.twice_nu - base.twice_nu) // 2
    if steps == 0:
        return logh
    ratio = np.exp(log_hankel_values(kind, Order(base.twice_nu + 2), r, theta) - logh)
    total = logh + np.log(ratio)
    nu_k = base.nu + 1.0
    for _ in range(steps - 1):
        ratio = 2.0 * nu_k / z - 1.0 / ratio
        total = total + np.log(ratio)
        nu_k += 1.0
    return total


def hankel_values(kind: int, nu: NuLike, r, theta) -> np.ndarray:
    """Vectorised ``H^{(kind)}_nu``; overflowing entries come back as ``inf``."""
    order = Order.of(nu)
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    r, theta = np.broadcast_arrays(r, theta)
    m, z0 = _reduce(r, theta)
    a, b = _connection(kind, order.twice_nu, m)
    h1, h2 = _principal_log_pair(order.nu, z0)
    with np.errstate(over="ignore", invalid="ignore"):
        val = a * h1 * np.exp(1j * z0) + b * h2 * np.exp(-1j * z0)
    bad = ~np.isfinite(val)
    if np.any(bad):
        with np.errstate(over="ignore", invalid="ignore"):
            logv = log_hankel_values(kind, order, r[bad], theta[bad])
            val = np.array(val, dtype=complex)
            val[bad] = np.where(logv.real > 709.0, np.inf + 0j, np.exp(logv))
    return val


def hankel_ratio(kind: int, nu: NuLike, r, theta) -> np.ndarray:
    """``H_{nu+1} / H_nu`` on the log plane, overflow-free."""
    order = Order.of(nu)
    up = Order(order.twice_nu + 2)
    return np.exp(log_hankel_values(kind, up, r, theta) - log_hankel_values(kind, order, r, theta))


def hankel_log_derivative(kind: int, nu: NuLike, r, theta) -> np.ndarray:
    """``H'_nu(z) / H_nu(z)`` from ``H' = (nu/z) H - H_{nu+1}``."""
    order = Order.of(nu)
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    z = r * np.exp(1j * theta)
    return order.nu / z - hankel_ratio(kind, order, r, theta)


def _check_point(z: LogPoint) -> None:
    if not z.r > 0.0:
        raise ValueError("Hankel functions are singular at the branch point r = 0")


def hankel(kind: int, nu: NuLike, z: LogPoint) -> complex:
    """``H^{(kind)}_nu(z)`` for a point of the logarithmic plane.

    Raises
    ------
    ValueError
        At ``z.r == 0``.
    HankelOverflowError
        If the value does not fit in a double.
    """
    _check_point(z)
    val = complex(hankel_values(kind, nu, z.r, z.theta))
    if not (math.isfinite(val.real) and math.isfinite(val.imag)):
        raise HankelOverflowError(f"H^({kind})_{Order.of(nu).nu}({z}) overflows")
    return val


def log_hankel(kind: int, nu: NuLike, z: LogPoint) -> complex:
    _check_point(z)
    return complex(log_hankel_values(kind, nu, z.r, z.theta))


def hankel_derivative(kind: int, nu: NuLike, z: LogPoint) -> complex:
    """``d/dz H^{(kind)}_nu(z)`` by the order recurrence."""
    _check_point(z)
    order = Order.of(nu)
    zc = z.project()
    h = hankel(kind, order, z)
    h_up = hankel(kind, Order(order.twice_nu + 2), z)
    return order.nu / zc * h - h_up


# ---------------------------------------------------------------------------
# J_nu on the principal sheet

_SERIES_RADIUS = 8.0
_CANCELLATION_BUDGET = 1e4


def bessel_j_series(nu: NuLike, z: complex, max_terms: int = 400) -> complex:
    """Ascending series for ``J_nu(z)`` on the principal branch.

    Emits :class:`AccuracyLossWarning` when the largest term exceeds the sum
    by more than the cancellation budget.
    """
    order = Order.of(nu)
    z = complex(z)
    if z == 0:
        if not order.is_integer:
            raise ValueError("J_nu(0) with half-integer nu lies on the branch point")
        return 1.0 + 0j if order.twice_nu == 0 else 0j
    v = order.nu
    q = -0.25 * z * z
    term = 1.0 / math.gamma(v + 1.0) + 0j
    total = term
    biggest = abs(term)
    for k in range(1, max_terms):
        term *= q / (k * (k + v))
        total += term
        biggest = max(biggest, abs(term))
        if abs(term) <= 1e-17 * abs(total) and k > abs(q) ** 0.5:
            break
    else:
        warnings.warn("J series did not converge", AccuracyLossWarning, stacklevel=2)
    if biggest > _CANCELLATION_BUDGET * abs(total):
        warnings.warn(
            f"J_{v}({z}) series lost {math.log10(biggest / abs(total)):.1f} digits",
            AccuracyLossWarning,
            stacklevel=2,
        )
    return (0.5 * z) ** v * total


def _bessel_j_hankel(order: Order, z: complex) -> complex:
    lp = LogPoint.from_complex(z)
    h1 = complex(hankel_values(1, order, lp.r, lp.theta))
    h2 = complex(hankel_values(2, order, lp.r, lp.theta))
    return 0.5 * (h1 + h2)


def bessel_j(nu: NuLike, z: complex, method: str = "auto") -> complex:
    """``J_nu(z)`` on the principal branch.

    Routes: ``"series"`` (ascending series), ``"amos"`` (AMOS ``jv``) and
    ``"hankel"`` (``(H1 + H2)/2``, which cancels badly when ``nu > |z|`` and
    is kept as a diagnostic).  ``"auto"`` takes the series when its terms
    are non-growing or ``|z| <= 8`` and AMOS otherwise.
    """
    order = Order.of(nu)
    z = complex(z)
    if method == "series":
        return bessel_j_series(order, z)
    if method == "amos":
        return complex(sp.jv(order.nu, z))
    if method == "hankel":
        if z == 0:
            raise ValueError("Hankel route is singular at z = 0")
        return _bessel_j_hankel(order, z)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")
    if abs(z) <= _SERIES_RADIUS or 0.25 * abs(z) ** 2 <= order.nu + 1.0:
        return bessel_j_series(order, z)
    return complex(sp.jv(order.nu, z))
