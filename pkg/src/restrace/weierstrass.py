"""Elementary factors, truncated Weierstrass products and the residual exponent.

With ``P`` the product over a resonance set, the scattering determinant
factors on the positive reals as ``s(lambda) = exp(g(lambda)) P(-lambda) / P(lambda)``.
:func:`extract_residual` recovers ``g`` (phase-unwrapped along the grid) and
its derivative; ``g`` is extended to negative arguments as an odd function.
"""

from __future__ import annotations

import cmath
import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .model_ball import BallModel, sigma_prime_values
from .special_functions import LogPoint

__all__ = [
    "FactorizationResidual",
    "TruncationDominanceWarning",
    "UnwrapError",
    "WeierstrassProduct",
    "elementary_factor",
    "extract_residual",
    "log_elementary_factor",
    "log_product_P",
    "product_P",
    "residual_on_interval",
    "synthetic_determinant",
]


class TruncationDominanceWarning(RuntimeWarning):
    """The omitted zeros may change the product by more than the threshold."""


class UnwrapError(ArithmeticError):
    """Adjacent grid points differ by too much phase to unwrap reliably."""


def elementary_factor(z: complex, p: int) -> complex:
    """``E(z, p) = (1 - z) exp(z + z^2/2 + ... + z^p/p)``."""
    z = complex(z)
    return (1 - z) * cmath.exp(sum(z ** k / k for k in range(1, p + 1)))


_SERIES_CUTOFF = 0.5


def log_elementary_factor(z, p: int):
    """Holomorphic ``log E(z, p)`` for ``|z| < 1`` and the winding against the principal log.

    Returns ``(value, winding)`` with ``value - Log E = 2 pi i winding``.
    Inside ``|z| < 1/2`` the tail series ``-sum_{k>p} z^k/k`` is used, which
    avoids the cancellation in ``log(1 - z) + sum_{k<=p} z^k/k``; elsewhere
    the value is ``Log(1 - z) + sum_{k<=p} z^k/k`` (continuous off the ray
    ``z >= 1``).  Works elementwise on arrays.
    """
    z = np.asarray(z, dtype=complex)
    direct = np.log(1 - z) + sum(z ** k / k for k in range(1, p + 1))
    small = np.abs(z) < _SERIES_CUTOFF
    if np.any(small):
        zs = z[small] if z.ndim else z
        terms = 60
        k = np.arange(p + 1, p + 1 + terms)
        series = -np.sum(np.power.outer(zs, k) / k, axis=-1)
        if z.ndim:
            direct = np.array(direct)
            direct[small] = series
        else:
            direct = series
    with np.errstate(divide="ignore", invalid="ignore"):
        principal = np.log(np.exp(direct))
    winding = np.rint((direct.imag - principal.imag) / (2 * math.pi)).astype(int)
    return direct, winding


_CHUNK = 1 << 18
_TAIL_TERMS = 56  # 2^-56 is below double precision for |z| < 1/2


def _log_elementary_matrix(z: np.ndarray, p: int) -> np.ndarray:
    """``log E(z, p)`` elementwise, tail series by Horner inside ``|z| < 1/2``."""
    small = np.abs(z) < _SERIES_CUTOFF
    with np.errstate(all="ignore"):
        out = np.log(1 - z) + sum(z ** k / k for k in range(1, p + 1))
        # -sum_{k=p+1}^{p+T} z^k / k = -z^{p+1} * sum_j z^j / (p+1+j)
        acc = np.zeros_like(z)
        for j in range(_TAIL_TERMS - 1, -1, -1):
            acc = acc * z + 1.0 / (p + 1 + j)
        tail = -(z ** (p + 1)) * acc
    return np.where(small, tail, out)


def _log_factor_derivative(lam: np.ndarray, zeta: np.ndarray, p: int) -> np.ndarray:
    """``d/d lambda log E(lambda/zeta, p) = (lambda/zeta)^p / (lambda - zeta)``."""
    return (lam / zeta) ** p / (lam - zeta)


@dataclass
class WeierstrassProduct:
    """``P(lambda) = prod E(lambda/zeta, genus)^{m(zeta)}`` over zeros with ``|zeta| <= truncation_radius``."""

    genus: int
    zeros: Sequence[complex]
    weights: Sequence[float]
    truncation_radius: float = math.inf
    counting_exponent: Optional[float] = None

    def __post_init__(self) -> None:
        if self.genus < 1:
            raise ValueError("genus must be a positive integer")
        z = np.asarray(self.zeros, dtype=complex)
        w = np.asarray(self.weights, dtype=float)
        if z.shape != w.shape:
            raise ValueError("zeros and weights differ in length")
        if np.any(np.abs(z.imag) == 0.0):
            raise ValueError("real zeros are excluded from the product")
        keep = np.abs(z) <= self.truncation_radius
        z, w = z[keep], w[keep]
        # deterministic order: modulus, then angle
        order = np.lexsort((np.angle(z), np.abs(z)))
        self._z = z[order]
        self._w = w[order]
        if self.counting_exponent is not None and self.genus < self.counting_exponent:
            raise ValueError("genus below the counting exponent: the product need not converge")

    @classmethod
    def from_resonances(cls, resonances, genus: int, truncation_radius: float = math.inf):
        zeros = [e.value for e in resonances]
        weights = [e.total for e in resonances]
        expo = None
        try:
            r_max = resonances.region.r_max
            expo = resonances.counting_exponent(r_max / 4, r_max)
        except (AttributeError, ValueError):
            pass
        return cls(genus, zeros, weights, truncation_radius, expo)

    @property
    def size(self) -> int:
        return int(self._z.size)

    def _chunks(self, lam: np.ndarray):
        rows = max(1, _CHUNK // max(1, self.size))
        for i in range(0, lam.size, rows):
            yield i, lam[i:i + rows]

    def log_value(self, lam) -> np.ndarray:
        """Holomorphic ``log P`` at ``lam`` (complex array).

        Each chunk sums the factors in the deterministic zero order.
        """
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        flat = lam.ravel()
        out = np.zeros(flat.shape, dtype=complex)
        for i, part in self._chunks(flat):
            vals = _log_elementary_matrix(part[:, None] / self._z[None, :], self.genus)
            out[i:i + part.size] = vals @ self._w
        return out.reshape(lam.shape)

    def log_derivative(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=complex))
        flat = lam.ravel()
        out = np.zeros(flat.shape, dtype=complex)
        for i, part in self._chunks(flat):
            vals = _log_factor_derivative(part[:, None], self._z[None, :], self.genus)
            out[i:i + part.size] = vals @ self._w
        return out.reshape(lam.shape)

    def tail_bound(self, lam: complex) -> float:
        """Bound on ``|log P_full - log P|`` from zeros beyond the truncation radius.

        Uses ``|log E(z, p)| <= |z|^{p+1} / ((p+1)(1-|z|))`` and a power-law
        continuation ``N(r) = N(R) (r/R)^kappa`` of the counting function,
        with ``kappa`` the fitted counting exponent.
        """
        R = self.truncation_radius
        if not math.isfinite(R):
            return 0.0
        kappa = self.counting_exponent
        p = self.genus
        x = abs(lam) / R
        if kappa is None or kappa >= p + 1 or x >= 1:
            return math.inf
        n_r = float(np.sum(self._w))
        return n_r * kappa * x ** (p + 1) / ((p + 1) * (p + 1 - kappa) * (1 - x))


def log_product_P(prod: WeierstrassProduct, lam: LogPoint | complex, warn_tol: float = 1e-6) -> tuple[complex, bool]:
    """``(log P(lam), is_zero)``; ``is_zero`` flags ``lam`` within 1e-12 of a zero."""
    z = lam.project() if isinstance(lam, LogPoint) else complex(lam)
    if prod.size and np.min(np.abs(prod._z - z)) <= 1e-12 * max(1.0, abs(z)):
        return complex(-math.inf), True
    bound = prod.tail_bound(z)
    if bound > warn_tol:
        warnings.warn(
            f"omitted zeros may change P({z:.4g}) by up to {bound:.3g} (relative)",
            TruncationDominanceWarning,
            stacklevel=2,
        )
    return complex(prod.log_value(z)[0]), False


def product_P(prod: WeierstrassProduct, lam: LogPoint | complex, warn_tol: float = 1e-6) -> complex:
    logv, is_zero = log_product_P(prod, lam, warn_tol)
    return 0j if is_zero else cmath.exp(logv)


# ---------------------------------------------------------------------------
# residual extraction


@dataclass
class FactorizationResidual:
    lam: np.ndarray
    g: np.ndarray
    g_prime: np.ndarray
    genus: int = 0
    truncation_radius: float = math.inf

    @property
    def samples(self) -> list[tuple[LogPoint, complex]]:
        return [(LogPoint.from_complex(complex(l)), complex(v)) for l, v in zip(self.lam, self.g)]

    @property
    def derivative_samples(self) -> list[tuple[LogPoint, complex]]:
        return [(LogPoint.from_complex(complex(l)), complex(v)) for l, v in zip(self.lam, self.g_prime)]

    def extended(self) -> tuple[np.ndarray, np.ndarray]:
        """Samples on ``-lam`` and ``lam`` with ``g(-lambda) = -g(lambda)``."""
        return np.concatenate([-self.lam[::-1], self.lam]), np.concatenate([-self.g[::-1], self.g])

    def growth_exponent(self, k: int = 1, lo: float = -math.inf, hi: float = math.inf) -> float:
        """Least-squares slope of ``log |d^k g|`` against ``log |lambda|``."""
        vals = self.g if k == 0 else self.g_prime
        mask = (np.abs(self.lam) >= lo) & (np.abs(self.lam) <= hi) & (np.abs(vals) > 0)
        return float(np.polyfit(np.log(np.abs(self.lam[mask])), np.log(np.abs(vals[mask])), 1)[0])

    def symbol_bound(self, k: int) -> tuple[float, float]:
        """Smallest ``C`` with ``|d^k g| <= C |lambda|^{p-k}`` for the fitted ``p``."""
        p = self.growth_exponent(k) + k
        vals = self.g if k == 0 else self.g_prime
        c = float(np.max(np.abs(vals) / np.abs(self.lam) ** (p - k)))
        return p, c

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["lambda_re", "lambda_im", "g_re", "g_im", "gprime_re", "gprime_im"])
        for l, g, gp in zip(self.lam, self.g, self.g_prime):
            l = complex(l)
            w.writerow([f"{x:.17g}" for x in (l.real, l.imag, g.real, g.imag, gp.real, gp.imag)])
        return buf.getvalue()


def _too_close(lam: np.ndarray, zeros: np.ndarray, guard: float) -> bool:
    """Whether any of ``lam`` or ``-lam`` lies within ``guard * max(1, |lam|)`` of a zero."""
    for pts in (lam, -lam):
        for i in range(0, pts.size, 4096):
            part = pts[i:i + 4096]
            dist = np.min(np.abs(part[:, None] - zeros[None, :]), axis=1)
            if np.any(dist < guard * np.maximum(1.0, np.abs(part))):
                return True
    return False


def _unwrap_checked(phase: np.ndarray, max_jump: float = 0.5 * math.pi) -> np.ndarray:
    out = np.unwrap(phase)
    jumps = np.abs(np.diff(out))
    if np.any(jumps > max_jump):
        i = int(np.argmax(jumps))
        raise UnwrapError(f"phase moves {jumps[i]:.3g} between grid points {i} and {i + 1}; refine the grid")
    return out


def _log_determinant(model: BallModel, lam: np.ndarray, truncation_tol: float) -> np.ndarray:
    """``log s`` on an ascending real grid, each mode unwrapped along the grid."""
    from .model_ball import _ModeCombination, default_mode_cap  # shared mode machinery

    total = np.zeros(lam.shape, dtype=complex)
    cap = default_mode_cap(model, float(lam.max()))
    ell = 0
    while True:
        fn1 = _ModeCombination(model, ell, 1)
        fn2 = _ModeCombination(model, ell, 2)
        log_s = 1j * math.pi + fn1.log_value(lam, 0.0) - fn2.log_value(lam, 0.0)
        term = model.multiplicity(ell) * (log_s.real + 1j * _unwrap_checked(log_s.imag))
        # modes far past the turning point have s -> 1 (phase -> 0 mod 2 pi)
        term -= 2j * math.pi * np.rint(term.imag[0] / (2 * math.pi))
        total += term
        if model.order(ell).nu > model.radius * lam.max() + 1 and np.max(np.abs(term)) < truncation_tol:
            break
        ell += 1
        if ell > cap:
            raise RuntimeError("determinant product did not converge")
    return total


def extract_residual(
    model: Optional[BallModel],
    prod: WeierstrassProduct,
    lam_grid,
    log_s: Optional[np.ndarray] = None,
    s_log_derivative: Optional[np.ndarray] = None,
    truncation_tol: float = 1e-12,
    guard: float = 1e-8,
) -> FactorizationResidual:
    """``g = log s - log P(-lambda) + log P(lambda)`` and ``g'`` on a grid.

    For a ball model, ``log s`` is the truncated multiplicity-weighted mode
    product on an ascending positive real grid, and ``s'/s = -2 pi i sigma'``.
    ``log_s`` and ``s_log_derivative`` can be supplied instead (synthetic
    determinants).  ``g'`` uses the analytic log-derivatives only.
    """
    lam = np.asarray(lam_grid, dtype=complex)
    if prod.size and _too_close(lam, prod._z, guard):
        raise ValueError("grid passes too close to a zero of the product")
    if log_s is None:
        if model is None:
            raise ValueError("need a model or explicit log s")
        real = lam.real
        if np.any(lam.imag != 0) or np.any(np.diff(real) <= 0) or real[0] <= 0:
            raise ValueError("model determinants are evaluated on ascending positive reals")
        log_s = _log_determinant(model, real, truncation_tol)
        s_log_derivative = -2j * math.pi * sigma_prime_values(model, real, truncation_tol * 1e-1)
    log_s = np.asarray(log_s, dtype=complex)
    g_raw = log_s - prod.log_value(-lam) + prod.log_value(lam)
    g = g_raw.real + 1j * _unwrap_checked(g_raw.imag)
    g_prime = np.asarray(s_log_derivative, dtype=complex) + prod.log_derivative(-lam) + prod.log_derivative(lam)
    return FactorizationResidual(lam, g, g_prime, prod.genus, prod.truncation_radius)


def synthetic_determinant(g: Callable, g_prime: Callable, prod: WeierstrassProduct, lam):
    """``(log s, s'/s)`` of ``s = exp(g) P(-lambda)/P(lambda)``: the inverse of :func:`extract_residual`."""
    lam = np.asarray(lam, dtype=complex)
    log_s = g(lam) + prod.log_value(-lam) - prod.log_value(lam)
    dlog = g_prime(lam) - prod.log_derivative(-lam) - prod.log_derivative(lam)
    return log_s, dlog


def residual_on_interval(
    model: BallModel,
    prod: WeierstrassProduct,
    lo: float,
    hi: float,
    probe: int = 64,
    steps_per_radian: float = 4.0,
    truncation_tol: float = 1e-12,
) -> FactorizationResidual:
    """:func:`extract_residual` on a uniform grid fine enough to unwrap ``g``.

    ``|g'|`` is probed on a coarse grid first; the working grid then keeps
    the phase step near ``1/steps_per_radian``.
    """
    coarse = np.linspace(lo, hi, probe)
    gp = -2j * math.pi * sigma_prime_values(model, coarse, truncation_tol) + prod.log_derivative(-coarse) + prod.log_derivative(coarse)
    n = int(math.ceil((hi - lo) * float(np.max(np.abs(gp))) * steps_per_radian)) + probe
    return extract_residual(model, prod, np.linspace(lo, hi, n), truncation_tol=truncation_tol)
