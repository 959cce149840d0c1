"""Exterior-ball scattering models with Dirichlet or Neumann boundary.

Each angular mode ``ell`` carries the Bessel order ``nu = ell + (d - 2)/2``
and a boundary combination ``p(z)`` of a Hankel function at ``z = lambda R``:

    Dirichlet   p(z) = H_nu(z)
    Neumann     p(z) = z H'_nu(z) - alpha H_nu(z),   alpha = (d - 2)/2

(the Neumann form is the radial derivative of ``r^{-alpha} H_nu(lambda r)``).
The physical half-plane is ``-pi < theta < 0`` where ``exp(-i lambda x)``
decays, so outgoing waves use ``H^(2)`` and the resonances are the zeros of
``p2 = p[H^(2)]`` on ``0 < theta < pi`` and the sheets beyond.

The mode S-matrix eigenvalue is ``s = -p1/p2``.  It tends to 1 as ``ell``
grows at fixed ``lambda`` and is unimodular on the positive reals.  Its
logarithmic derivative follows from the Hankel Wronskian without
cancellation,

    s'/s = R * c(z) * (4i / (pi z)) / (p1 p2),
    c = 1 (Dirichlet),   c = z^2 + alpha^2 - nu^2 (Neumann).
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .special_functions import LogPoint, Order, log_hankel_values

__all__ = [
    "BallModel",
    "Boundary",
    "ModeFunction",
    "ModeScattering",
    "ResonancePoleError",
    "TruncationError",
    "mode_function",
    "mode_multiplicity",
    "mode_s",
    "scattering_phase",
    "sigma_prime",
    "sigma_prime_complex",
    "sigma_prime_values",
]


class Boundary(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"


class ResonancePoleError(ArithmeticError):
    """``s`` was evaluated at (numerically) a zero of the outgoing mode function."""


class TruncationError(RuntimeError):
    """The mode sum did not settle below the tolerance before the mode cap."""


def mode_multiplicity(d: int, ell: int) -> int:
    """Number of spherical harmonics of degree ``ell`` on the sphere in R^d."""
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    if d == 2:
        return 1 if ell == 0 else 2
    if d == 3:
        return 2 * ell + 1
    if d == 4:
        return (ell + 1) ** 2
    raise ValueError(f"unsupported dimension {d}")


@dataclass(frozen=True)
class BallModel:
    """Exterior of the ball of radius ``radius`` in R^dimension."""

    dimension: int
    radius: float = 1.0
    boundary: Boundary = Boundary.DIRICHLET

    def __post_init__(self) -> None:
        if self.dimension not in (2, 3, 4):
            raise ValueError(f"unsupported dimension {self.dimension}")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def alpha(self) -> float:
        return (self.dimension - 2) / 2.0

    @property
    def odd(self) -> bool:
        return self.dimension % 2 == 1

    def order(self, ell: int) -> Order:
        return Order(2 * ell + self.dimension - 2)

    def multiplicity(self, ell: int) -> int:
        return mode_multiplicity(self.dimension, ell)

    # no L^2 eigenvalues outside a ball, and no resonance at zero
    def eigenvalues(self) -> list[float]:
        return []

    @property
    def zero_multiplicity(self) -> int:
        return 0

    def mode(self, ell: int) -> "ModeScattering":
        fn1 = _ModeCombination(self, ell, kind=1)
        fn2 = _ModeCombination(self, ell, kind=2)

        def s_value(z: LogPoint) -> complex:
            return _mode_s(fn1, fn2, z)

        def log_derivative(z: LogPoint) -> complex:
            return complex(_mode_s_log_derivative(self, ell, fn1, fn2, z.r, z.theta))

        return ModeScattering(ell, self.multiplicity(ell), s_value, log_derivative)

    def describe(self) -> str:
        return f"d={self.dimension} R={self.radius!r} {self.boundary.value}"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.describe().encode()).hexdigest()[:16]


@dataclass(frozen=True)
class ModeScattering:
    ell: int
    multiplicity: int
    s_value: Callable[[LogPoint], complex]
    log_derivative: Callable[[LogPoint], complex]


class _ModeCombination:
    """Boundary combination ``p(lambda R)`` of one Hankel kind, in log form."""

    def __init__(self, model: BallModel, ell: int, kind: int):
        self.model = model
        self.ell = ell
        self.kind = kind
        self.order = model.order(ell)
        self.up = Order(self.order.twice_nu + 2)

    def _z(self, r, theta):
        return self.model.radius * np.asarray(r) * np.exp(1j * np.asarray(theta))

    def log_value(self, r, theta) -> np.ndarray:
        """``log p`` (principal imaginary part) at ``lambda = r e^{i theta}``."""
        rr = self.model.radius * np.asarray(r, dtype=float)
        logh = log_hankel_values(self.kind, self.order, rr, theta)
        if self.model.boundary is Boundary.DIRICHLET:
            return logh
        z = self._z(r, theta)
        ratio = np.exp(log_hankel_values(self.kind, self.up, rr, theta) - logh)
        return logh + np.log((self.order.nu - self.model.alpha) - z * ratio)

    def log_derivative(self, r, theta) -> np.ndarray:
        """``d/d lambda log p``."""
        rr = self.model.radius * np.asarray(r, dtype=float)
        z = self._z(r, theta)
        nu = self.order.nu
        ratio = np.exp(
            log_hankel_values(self.kind, self.up, rr, theta)
            - log_hankel_values(self.kind, self.order, rr, theta)
        )
        q = nu / z - ratio
        if self.model.boundary is Boundary.DIRICHLET:
            return self.model.radius * q
        alpha = self.model.alpha
        return self.model.radius * (-alpha * q - (z * z - nu * nu) / z) / (z * q - alpha)


class ModeFunction:
    """Outgoing mode function ``lambda -> p2(lambda R)`` on the log plane.

    Its zeros are the resonances of the mode.  Values may overflow for
    large ``|lambda|`` in ``theta > 0``; root finding only needs
    :meth:`log_derivative`, which never does.
    """

    def __init__(self, model: BallModel, ell: int):
        self.model = model
        self.ell = ell
        self.order = model.order(ell)
        self._p = _ModeCombination(model, ell, kind=2)

    def __call__(self, z: LogPoint) -> complex:
        return complex(np.exp(self._p.log_value(z.r, z.theta)))

    def log_value(self, r, theta) -> np.ndarray:
        return self._p.log_value(r, theta)

    def log_derivative(self, r, theta) -> np.ndarray:
        return self._p.log_derivative(r, theta)

    def derivative(self, z: LogPoint) -> complex:
        return self(z) * complex(self.log_derivative(z.r, z.theta))

    def __repr__(self) -> str:
        return f"ModeFunction({self.model.describe()}, ell={self.ell})"


def mode_function(model: BallModel, ell: int) -> ModeFunction:
    return ModeFunction(model, ell)


_POLE_LOG = 700.0
_EPS = float(np.finfo(float).eps)


def _mode_s(fn1: _ModeCombination, fn2: _ModeCombination, z: LogPoint) -> complex:
    if not z.r > 0:
        raise ValueError("s is not defined at the branch point")
    log_s = complex(fn1.log_value(z.r, z.theta) - fn2.log_value(z.r, z.theta))
    if not math.isfinite(log_s.real) or log_s.real > _POLE_LOG:
        raise ResonancePoleError(f"s has a pole at {z} (log|s| = {log_s.real:.3g})")
    return -complex(np.exp(log_s))


def mode_s(model: BallModel, ell: int, z: LogPoint) -> complex:
    """S-matrix eigenvalue of mode ``ell`` at the log-plane point ``z``."""
    return _mode_s(_ModeCombination(model, ell, 1), _ModeCombination(model, ell, 2), z)


def _wronskian_factor(model: BallModel, ell: int, z: np.ndarray) -> np.ndarray:
    if model.boundary is Boundary.DIRICHLET:
        c = 1.0
    else:
        nu = model.order(ell).nu
        c = z * z + model.alpha ** 2 - nu * nu
    return model.radius * c * 4j / (math.pi * z)


def _mode_s_log_derivative(model, ell, fn1, fn2, r, theta) -> np.ndarray:
    z = model.radius * np.asarray(r) * np.exp(1j * np.asarray(theta))
    log_p1p2 = fn1.log_value(r, theta) + fn2.log_value(r, theta)
    return _wronskian_factor(model, ell, z) * np.exp(-log_p1p2)


def default_mode_cap(model: BallModel, lam_abs: float) -> int:
    return int(5 * lam_abs * model.radius + 200)


def _mode_sum(model: BallModel, r, theta, tol: float, mode_cap: Optional[int]):
    """Accumulate ``(i/2pi) sum mult s'/s`` mode by mode with per-point stopping.

    A point leaves the active set once ``nu`` is past the turning point
    ``|z|`` and the last term is below ``tol`` and at most half the previous
    one; beyond the turning point the terms fall faster than geometrically,
    so the remaining tail is below the last term.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    theta = np.broadcast_to(np.asarray(theta, dtype=float), r.shape)
    total = np.zeros(r.shape, dtype=complex)
    last = np.full(r.shape, np.inf)
    active = np.ones(r.shape, dtype=bool)
    zabs = model.radius * r
    cap = mode_cap if mode_cap is not None else default_mode_cap(model, float(r.max()))
    ell = 0
    while np.any(active):
        if ell > cap:
            raise TruncationError(
                f"mode sum not converged by ell = {cap} at lambda = {r[active].max():.6g}"
            )
        idx = np.nonzero(active)[0]
        fn1 = _ModeCombination(model, ell, 1)
        fn2 = _ModeCombination(model, ell, 2)
        term = (1j / (2 * math.pi)) * model.multiplicity(ell) * _mode_s_log_derivative(
            model, ell, fn1, fn2, r[idx], theta[idx]
        )
        total[idx] += term
        size = np.abs(term)
        nu = model.order(ell).nu
        done = (nu > zabs[idx] + 1.0) & (size < tol) & (size <= 0.5 * last[idx])
        last[idx] = size
        active[idx[done]] = False
        ell += 1
    return total


def sigma_prime_values(
    model: BallModel,
    lam,
    truncation_tol: float = 1e-13,
    mode_cap: Optional[int] = None,
    imag_tol: float = 1e-9,
) -> np.ndarray:
    """Vectorised scattering-phase derivative at positive reals.

    The imaginary part left by the complex mode terms is checked against
    ``imag_tol`` (relative to ``max(1, |value|)``) and discarded.
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam <= 0):
        raise ValueError("sigma' is only evaluated at lambda > 0 (it is even by definition)")
    total = _mode_sum(model, lam, 0.0, truncation_tol, mode_cap)
    resid = np.abs(total.imag) / np.maximum(1.0, np.abs(total.real))
    if np.any(resid > imag_tol):
        worst = int(np.argmax(resid))
        raise ArithmeticError(
            f"imaginary residual {resid[worst]:.3g} at lambda = {lam[worst]:.6g}"
        )
    return total.real


def sigma_prime(model: BallModel, lam: float, truncation_tol: float = 1e-13) -> float:
    """``sigma'(lambda) = (i/2pi) sum_ell mult(ell) s_ell'/s_ell`` at ``lambda > 0``."""
    if not truncation_tol > 0:
        raise ValueError("truncation_tol must be positive")
    return float(sigma_prime_values(model, [lam], truncation_tol)[0])


def sigma_prime_complex(
    model: BallModel, r, theta, truncation_tol: float = 1e-13, mode_cap: Optional[int] = None
) -> np.ndarray:
    """The continuation of ``sigma'`` to log-plane points ``r e^{i theta}``."""
    return _mode_sum(model, r, theta, truncation_tol, mode_cap)


def _zero_energy_arg(model: BallModel) -> float:
    # small-z limit of arg p1: H1 ~ -i * (positive) for every order used here,
    # and the Neumann combination flips the sign
    return -0.5 * math.pi if model.boundary is Boundary.DIRICHLET else 0.5 * math.pi


def scattering_phase(
    model: BallModel, lam, truncation_tol: float = 1e-13, start: float = 1e-9
) -> np.ndarray:
    """``sigma(lambda) - sigma(0+)`` on an ascending grid of positive reals.

    ``truncation_tol`` is relative to the size of the accumulated phase.

    Per mode ``sigma_ell = -(mult/pi) arg p1``, with ``arg p1`` continued
    from ``lambda = start`` by unwrapping along ``lam``; the grid has to
    be fine enough that each mode's phase moves less than ``pi`` between
    neighbouring points.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(np.diff(lam) <= 0) or lam[0] <= 0:
        raise ValueError("need an ascending grid of positive reals")
    grid = np.concatenate([[start], lam]) if lam[0] > start else lam
    zero = _zero_energy_arg(model)
    total = np.zeros(grid.shape)
    ell = 0
    cap = default_mode_cap(model, float(grid[-1]))
    while True:
        fn1 = _ModeCombination(model, ell, 1)
        arg = np.unwrap(np.concatenate([[zero], fn1.log_value(grid, 0.0).imag]))[1:]
        term = -(model.multiplicity(ell) / math.pi) * (arg - zero)
        total += term
        # arg p1 carries a roundoff floor of a few ulps, amplified by the
        # multiplicity, so the threshold is relative and floored
        scale = max(1.0, float(np.max(np.abs(total))))
        floor = 32 * _EPS * model.multiplicity(ell)
        if (
            model.order(ell).nu > model.radius * grid[-1] + 1
            and np.max(np.abs(term)) < truncation_tol * scale + floor
        ):
            break
        ell += 1
        if ell > cap:
            raise TruncationError("phase sum did not converge")
    return total[-lam.size:]
