"""Wave and heat traces of ball models, from the spectral side and the resonance side.

The wave trace is ``u(t) = 2 int_0^inf sigma'(lambda) cos(t lambda) dlambda`` for
``t > 0`` (the ball models have no eigenvalues and no zero resonance); its
``k``-th derivative replaces ``cos(t lambda)`` by ``Re[(i lambda)^k e^{i t lambda}]``.
Only ``t > 0`` is ever evaluated: ``u`` is even by definition.

Spectral side (:class:`BirmanKreinTrace`): three pieces,

* ``[0, a]`` after the substitution ``lambda = a exp(c (1 - 1/x))``, which turns
  the two-dimensional ``1/(lambda log^2 lambda)`` singularity into a smooth
  integrand; below ``eps`` the integral is ``sigma(eps) - sigma(0+)``;
* ``[a, lambda_max]`` by the Filon-Legendre panel rule;
* ``[lambda_max, inf)`` from a least-squares fit of ``sigma'`` by powers
  ``lambda^{d-1-j}``, integrated in closed form (Abel summation), plus the
  first integration-by-parts term of the fit remainder.

Resonance side: the partial resonance sum over a cone, the low-energy term
``2 int psi sigma' cos``, and an estimate of the remainder.  In even
dimensions the remainder is obtained by turning the spectral integral onto
the positive imaginary axis: with ``Z`` the resonances of the cut plane,

    u(t) = sum_{zeta in Z} m e^{i zeta t} - 2 Im int_0^inf sigma'(iy) e^{-t y} dy,

so the part outside the cone plus the branch-cut integral, minus the
low-energy term, is the remainder.
"""

from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special as sp

from .model_ball import BallModel, mode_s, sigma_prime_complex, sigma_prime_values
from .quadrature import GAUSS_WEIGHTS, KRONROD_NODES, KRONROD_WEIGHTS, FilonLegendre, adaptive_gk
from .resonance_finder import AnnularRegion, ResonanceSet
from .special_functions import ConeRegion, LogPoint

__all__ = [
    "BirmanKreinTrace",
    "CutoffFunction",
    "CutoffKind",
    "LowEnergyFit",
    "TailBoundError",
    "TailFitError",
    "TailModel",
    "TheoremFourReport",
    "TraceSample",
    "SmearedReport",
    "branch_cut_integral",
    "decay_threshold",
    "fit_low_energy",
    "heat_trace",
    "low_energy_integral",
    "phase_from_zero",
    "smeared_check",
    "verify_theorem4",
    "wave_trace_bk",
    "wave_trace_resonance_side",
]

Density = Callable[[np.ndarray], np.ndarray]


class TailFitError(ArithmeticError):
    """The power-law fit of ``sigma'`` near ``lambda_max`` is not accurate enough."""


class TailBoundError(ArithmeticError):
    """The truncation tail bound is unusable at this time."""

    def __init__(self, message: str, minimum_time: float):
        super().__init__(message)
        self.minimum_time = minimum_time


# ---------------------------------------------------------------------------
# cutoffs


def _smooth_step(s):
    """0 for ``s <= 0``, 1 for ``s >= 1``, smooth in between (``exp(-1/x)`` blend)."""
    s = np.asarray(s, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


class CutoffKind(str, enum.Enum):
    BUMP = "bump"
    TEST = "test"


@dataclass(frozen=True)
class CutoffFunction:
    """Smooth compactly supported cutoff with a cached Fourier transform.

    ``bump`` is even, equal to 1 on ``|x| <= plateau`` and 0 for ``|x| >= support[1]``.
    ``test`` is a positive bump supported in ``support``, inside ``(0, inf)``.
    """

    kind: CutoffKind
    support: tuple[float, float]
    plateau: float = 0.0
    panels: int = 64
    order: int = 16
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", CutoffKind(self.kind))
        lo, hi = self.support
        if not lo < hi:
            raise ValueError("empty support")
        if self.kind is CutoffKind.BUMP:
            if not (lo == -hi and 0 < self.plateau < hi):
                raise ValueError("a bump needs symmetric support and 0 < plateau < support")
        elif lo <= 0:
            raise ValueError("test functions must be supported in (0, inf)")

    @classmethod
    def bump(cls, plateau: float = 0.5, support: float = 1.0) -> "CutoffFunction":
        return cls(CutoffKind.BUMP, (-support, support), plateau)

    @classmethod
    def test(cls, lo: float, hi: float) -> "CutoffFunction":
        return cls(CutoffKind.TEST, (lo, hi))

    @property
    def identifier(self) -> str:
        lo, hi = self.support
        if self.kind is CutoffKind.BUMP:
            return f"bump(plateau={self.plateau:g},support={hi:g})"
        return f"test({lo:g},{hi:g})"

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.support
        if self.kind is CutoffKind.BUMP:
            return _smooth_step((hi - np.abs(x)) / (hi - self.plateau))
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        s = np.clip(1.0 - ((x - mid) / half) ** 2, 0.0, None)
        with np.errstate(divide="ignore", over="ignore"):
            # exp(1 - 1/(1 - y^2)), peak value 1
            return np.where(s > 0, np.exp(1.0 - 1.0 / np.where(s > 0, s, 1.0)), 0.0)

    def _transform(self, omega: complex, order: int) -> complex:
        from .quadrature import gauss_legendre_panels

        x, w = gauss_legendre_panels(np.linspace(*self.support, self.panels + 1), order)
        return complex(np.sum(w * self(x) * np.exp(-1j * omega * x)))

    def fourier(self, omega) -> np.ndarray:
        """``int f(x) e^{-i omega x} dx`` (complex ``omega`` allowed), cached per frequency."""
        omega = np.atleast_1d(np.asarray(omega, dtype=complex))
        out = np.empty(omega.shape, dtype=complex)
        for i, om in np.ndenumerate(omega):
            key = complex(om)
            if key not in self._cache:
                self._cache[key] = self._transform(key, self.order)
            out[i] = self._cache[key]
        return out

    def cache_consistency(self) -> float:
        """Largest change of the cached transforms when the quadrature order doubles."""
        worst = 0.0
        for om, val in self._cache.items():
            worst = max(worst, abs(self._transform(om, 2 * self.order) - val))
        return worst


# ---------------------------------------------------------------------------
# samples


class Side(str, enum.Enum):
    BIRMAN_KREIN = "birman_krein"
    RESONANCE_SUM = "resonance_sum"
    HEAT = "heat"


@dataclass
class TraceSample:
    t: float
    value: float
    side: Side
    error: float
    components: dict = field(default_factory=dict)
    tail_bound: Optional[float] = None
    derivative: int = 0

    def __post_init__(self) -> None:
        self.side = Side(self.side)
        if self.side is Side.RESONANCE_SUM and not (self.tail_bound is not None and self.tail_bound > 0):
            raise ValueError("resonance-sum samples carry a positive tail bound")

    def record(self) -> dict:
        out = {"t": self.t, "value": self.value, "side": self.side.value, "error": self.error, "derivative": self.derivative}
        if self.tail_bound is not None:
            out["tail_bound"] = self.tail_bound
        out.update({f"component_{k}": v for k, v in self.components.items()})
        return out


# ---------------------------------------------------------------------------
# low-energy pieces


def phase_from_zero(model: BallModel, r: float, theta: float = 0.0, tol: float = 1e-20) -> complex:
    """``sigma(r e^{i theta}) - sigma(0+)`` for small ``r``, using ``s_ell(0+) = 1``.

    Each mode contributes ``(i/2pi) mult Log s_ell``; the principal log is
    only trusted while ``|Log s_ell| < 1``.
    """
    total = 0j
    point = LogPoint(r, theta)
    for ell in range(200):
        log_s = complex(np.log(mode_s(model, ell, point)))
        if abs(log_s) > 1.0:
            raise ValueError(f"r = {r:g} is too large for the small-argument phase")
        term = model.multiplicity(ell) * log_s
        total += term
        if ell >= 1 and abs(term) < tol:
            break
    return 1j / (2 * math.pi) * total


class _MappedRule:
    """Fixed G7/K15 panels for ``int_eps^a f(lambda) dlambda`` with ``lambda = a exp(c (1 - 1/x))``."""

    def __init__(self, a: float, eps: float = 1e-14, panels: int = 32, scale: float = 1.0):
        self.a = a
        self.eps = eps
        x_lo = 1.0 / (1.0 + math.log(a / eps) / scale)
        edges = np.linspace(x_lo, 1.0, panels + 1)
        half = 0.5 * np.diff(edges)[:, None]
        x = 0.5 * (edges[:-1] + edges[1:])[:, None] + half * KRONROD_NODES[None, :]
        self.lam = a * np.exp(scale * (1.0 - 1.0 / x))
        self.jac = self.lam * scale / x ** 2 * half

    def integrate(self, values: np.ndarray) -> tuple[complex, float]:
        v = values * self.jac
        k = v @ KRONROD_WEIGHTS
        g = v @ GAUSS_WEIGHTS
        return complex(np.sum(k)), float(np.sum(np.abs(k - g)))


def _abel_power_tail(p: int, t: float, lam_max: float) -> complex:
    """``int_{lam_max}^inf lambda^p e^{i t lambda} dlambda`` (Abel-summed for ``p >= 0``)."""
    e = np.exp(1j * t * lam_max)
    if p >= 0:
        val = 1j * e / t
        for q in range(1, p + 1):
            val = -lam_max ** q * e / (1j * t) - q / (1j * t) * val
        return complex(val)
    si, ci = sp.sici(t * lam_max)
    val = -ci + 1j * (0.5 * math.pi - si)
    for q in range(-2, p - 1, -1):
        val = -lam_max ** (q + 1) * e / (q + 1) - 1j * t / (q + 1) * val
    return complex(val)


class BirmanKreinTrace:
    """Spectral-side wave trace with precomputed samples of ``sigma'``.

    Samples are taken once; :meth:`evaluate` then costs only the
    frequency-dependent weights, so many ``t`` values are cheap.
    """

    def __init__(
        self,
        model: BallModel,
        lambda_max: float = 60.0,
        panel_width: float = 0.5,
        order: int = 24,
        near_zero: float = 1.0,
        tail_terms: int = 6,
        density: Optional[Density] = None,
        zero_phase: Optional[float] = None,
        truncation_tol: float = 1e-13,
        tail_tol: float = 1e-8,
    ):
        if not lambda_max > 4 * near_zero:
            raise ValueError("lambda_max must exceed the near-zero segment several times")
        self.model = model
        self.lambda_max = float(lambda_max)
        self.tail_terms = tail_terms
        self.density = density if density is not None else functools.partial(
            sigma_prime_values, model, truncation_tol=truncation_tol
        )
        self.near = _MappedRule(near_zero)
        self.near_values = np.asarray(self.density(self.near.lam.ravel())).reshape(self.near.lam.shape)
        if zero_phase is None:
            zero_phase = phase_from_zero(model, self.near.eps).real if density is None else 0.0
        self.zero_phase = float(zero_phase)
        panels = int(math.ceil((self.lambda_max - near_zero) / panel_width))
        self.filon = FilonLegendre(near_zero, self.lambda_max, panels, order)
        self.nodes = self.filon.nodes
        self.values = np.asarray(self.density(self.nodes))
        self._coeffs: dict[int, np.ndarray] = {}
        self._fit(tail_tol)

    def _fit(self, tail_tol: float) -> None:
        L = self.lambda_max
        sel = self.nodes >= 0.5 * L
        lam = self.nodes[sel]
        self.powers = self.model.dimension - 1 - np.arange(self.tail_terms)
        basis = (lam[:, None] / L) ** self.powers[None, :]
        scaled, *_ = np.linalg.lstsq(basis, self.values[sel], rcond=None)
        self.tail_coeffs = scaled / L ** self.powers
        resid = self.values[sel] - basis @ scaled
        self.tail_residual = float(np.max(np.abs(resid)))
        # remainder at the end point, from the sample nearest lambda_max
        self.end_remainder = float(resid[np.argmax(lam)])
        scale = max(1.0, float(np.max(np.abs(self.values[sel]))))
        if self.tail_residual > tail_tol * scale:
            raise TailFitError(
                f"power fit of sigma' on [{0.5 * L:g}, {L:g}] leaves {self.tail_residual:.3g}; increase lambda_max"
            )

    def _coefficients(self, k: int) -> np.ndarray:
        if k not in self._coeffs:
            self._coeffs[k] = self.filon.coefficients((1j * self.nodes) ** k * self.values)
        return self._coeffs[k]

    def evaluate(self, t: float, derivative: int = 0) -> TraceSample:
        if not t > 0:
            raise ValueError("the wave trace is evaluated at t > 0 only")
        k = derivative
        near, near_err = self.near.integrate(self.near_values * (1j * self.near.lam) ** k * np.exp(1j * t * self.near.lam))
        if k == 0:
            near += self.zero_phase
        mid, mid_err = self.filon.integrate(self._coefficients(k), t)
        L = self.lambda_max
        tail = sum(c * 1j ** k * _abel_power_tail(int(p) + k, t, L) for c, p in zip(self.tail_coeffs, self.powers))
        # first integration-by-parts term of the fit remainder beyond lambda_max
        end = (1j * L) ** k * self.end_remainder
        correction = -end * np.exp(1j * t * L) / (1j * t)
        tail_err = (abs(1j * L) ** k) * self.tail_residual / t
        total = near + mid + tail + correction
        return TraceSample(
            t=float(t),
            value=2.0 * float(total.real),
            side=Side.BIRMAN_KREIN,
            error=2.0 * (near_err + mid_err + tail_err),
            components={
                "near_zero": 2.0 * near.real,
                "oscillatory": 2.0 * mid.real,
                "tail": 2.0 * (tail + correction).real,
            },
            derivative=k,
        )


@functools.lru_cache(maxsize=16)
def _cached_trace(model: BallModel, lambda_max: float, order: int) -> BirmanKreinTrace:
    return BirmanKreinTrace(model, lambda_max=lambda_max, order=order)


def wave_trace_bk(
    model: BallModel,
    t: float,
    psi: Optional[CutoffFunction] = None,
    lambda_max: float = 60.0,
    derivative: int = 0,
    order: int = 24,
) -> TraceSample:
    """``d^k/dt^k u(t)`` from ``sigma'``; with ``psi``, the low-energy part is reported too."""
    sample = _cached_trace(model, float(lambda_max), int(order)).evaluate(t, derivative)
    if psi is not None:
        le, le_err = low_energy_integral(model, psi, t, derivative)
        sample.components["low_energy"] = le
        sample.components["psi"] = psi.identifier
    return sample


def low_energy_integral(
    model: BallModel,
    psi: CutoffFunction,
    t: float,
    derivative: int = 0,
    density: Optional[Density] = None,
    tol: float = 1e-12,
) -> tuple[float, float]:
    """``2 int_0^inf psi(lambda) sigma'(lambda) Re[(i lambda)^k e^{i t lambda}] dlambda`` and its error."""
    if psi.kind is not CutoffKind.BUMP:
        raise ValueError("the low-energy term uses a bump cutoff")
    dens = density if density is not None else functools.partial(sigma_prime_values, model)
    k = derivative
    rule = _MappedRule(psi.plateau)
    vals = np.asarray(dens(rule.lam.ravel())).reshape(rule.lam.shape)
    near, err = rule.integrate(vals * (1j * rule.lam) ** k * np.exp(1j * t * rule.lam))
    if k == 0 and density is None:
        near += phase_from_zero(model, rule.eps).real

    def f(lam):
        return psi(lam) * dens(lam) * (1j * lam) ** k * np.exp(1j * t * lam)

    res = adaptive_gk(f, psi.plateau, psi.support[1], tol=tol, initial=4)
    return 2.0 * float((near + res.value).real), 2.0 * (err + res.error)


def branch_cut_integral(
    model: BallModel, t: float, derivative: int = 0, tol: float = 1e-12, truncation_tol: float = 1e-13
) -> tuple[float, float]:
    """``-2 Im int_0^inf sigma'(iy) (-y)^k e^{-t y} dy`` and an error estimate.

    ``sigma'`` is continued from the positive reals to the positive imaginary
    axis (angle ``pi/2`` on the logarithmic plane).  Even dimensions only:
    in odd dimensions ``sigma'`` has resonance poles on that axis.
    """
    if model.odd:
        raise ValueError("the branch-cut integral exists in even dimensions only")
    k = derivative

    def dens(y):
        return sigma_prime_complex(model, y, 0.5 * math.pi, truncation_tol)

    rule = _MappedRule(1.0)
    vals = dens(rule.lam.ravel()).reshape(rule.lam.shape)
    near, err = rule.integrate(vals * (-rule.lam) ** k * np.exp(-t * rule.lam))
    if k == 0:
        # int_0^eps sigma'(iy) dy = (sigma(i eps) - sigma(0+)) / i
        near += phase_from_zero(model, rule.eps, 0.5 * math.pi) / 1j
    upper = 1.0 + (40.0 + 2.0 * (k + model.dimension) * math.log(2.0 + 40.0 / t)) / t
    res = adaptive_gk(lambda y: dens(y) * (-y) ** k * np.exp(-t * y), 1.0, upper, tol=tol, initial=4)
    return -2.0 * float((near + res.value).imag), 2.0 * (err + res.error)


# ---------------------------------------------------------------------------
# resonance side


@dataclass(frozen=True)
class TailModel:
    """Estimate of the resonances beyond the truncation radius.

    The counting function is continued as ``N(r) = N(r_max) (r/r_max)^kappa``.
    Imaginary parts at radius ``r`` are modelled from the outer shell of the
    computed set: each shell resonance stands for a layer whose imaginary
    part grows like ``r^beta``, with ``beta`` the fitted growth of the lowest
    imaginary parts.  Layers further from the real axis grow faster than the
    lowest one, so scaling all of them by ``r^beta`` underestimates their
    decay and the estimate errs on the large side.
    """

    r_max: float
    total: float
    kappa: float
    beta: float
    scaled_imag: np.ndarray
    shell_weights: np.ndarray

    @classmethod
    def from_resonances(cls, resonances: ResonanceSet, shell: float = 0.5, bins: int = 12) -> "TailModel":
        region = resonances.region
        if region is None:
            raise ValueError("the resonance set does not record its search region")
        r_max = region.r_max
        z = resonances.values()
        w = resonances.weights()
        r = np.abs(z)
        kappa = resonances.counting_exponent(r_max / 4, r_max)
        edges = np.geomspace(r_max / 4, r_max, bins + 1)
        mids, lows = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            sel = (r >= a) & (r < b)
            if np.any(sel):
                mids.append(math.sqrt(a * b))
                lows.append(float(z[sel].imag.min()))
        if len(mids) < 3:
            raise ValueError("too few resonances near the frontier to model the tail")
        beta = float(np.polyfit(np.log(mids), np.log(lows), 1)[0])
        outer = r >= shell * r_max
        return cls(
            r_max,
            float(w.sum()),
            float(kappa),
            beta,
            z[outer].imag / r[outer] ** beta,
            w[outer] / w[outer].sum(),
        )

    def bound(self, t: float, derivative: int = 0) -> float:
        """``int_{r_max}^inf r^k e^{-t Im(r)} dN(r)`` under the model (``inf`` if it diverges)."""
        if self.beta <= 0:
            return math.inf
        m = self.kappa + derivative
        a = t * self.scaled_imag
        shape = m / self.beta
        with np.errstate(divide="ignore"):
            log_int = (
                -math.log(self.beta)
                - shape * np.log(a)
                + sp.gammaln(shape)
                + np.log(sp.gammaincc(shape, a * self.r_max ** self.beta))
            )
        scale = self.kappa * self.total * self.r_max ** (-self.kappa)
        return float(scale * np.sum(self.shell_weights * np.exp(log_int)))

    def minimum_time(self, limit: float, derivative: int = 0) -> float:
        """Smallest ``t`` with ``bound(t) <= limit`` (bisection; the bound decreases in ``t``)."""
        lo, hi = 1e-3, 1.0
        while self.bound(hi, derivative) > limit:
            lo, hi = hi, 2 * hi
            if hi > 1e6:
                return math.inf
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.bound(mid, derivative) > limit:
                lo = mid
            else:
                hi = mid
        return hi


def _is_full_region(resonances: ResonanceSet, model: BallModel) -> bool:
    region = resonances.region
    if not isinstance(region, AnnularRegion):
        return False
    if model.odd:
        return any(a <= 0.0 and b >= math.pi for a, b in region.angles)
    covered = sorted(region.angles)
    return covered[0][0] <= -1.5 * math.pi and any(b >= 0.5 * math.pi for _, b in covered)


def _exp_sum(values: np.ndarray, weights: np.ndarray, t: float, k: int) -> float:
    if values.size == 0:
        return 0.0
    return float(np.sum(weights * (1j * values) ** k * np.exp(1j * values * t)).real)


def wave_trace_resonance_side(
    model: BallModel,
    t: float,
    resonances: ResonanceSet,
    psi: Optional[CutoffFunction] = None,
    sigma_prime_fn: Optional[Density] = None,
    rho: Optional[float] = None,
    derivative: int = 0,
    tail_limit: float = 1.0,
    remainder: bool = True,
) -> TraceSample:
    """Partial resonance sum + ``m(0)`` + low-energy term + remainder estimate.

    With ``rho`` the partial sum runs over the cone of aperture ``rho``;
    otherwise over the whole set.  ``remainder`` adds the estimate of the
    rest: in odd dimensions minus the low-energy term (the resonance sum is
    then exact); in even dimensions the resonances outside the cone plus the
    branch-cut integral, minus the low-energy term, which needs a set
    covering the whole cut plane.
    """
    if not t > 0:
        raise ValueError("the wave trace is evaluated at t > 0 only")
    k = derivative
    z = resonances.values()
    w = resonances.weights()
    if rho is not None:
        cone = ConeRegion(rho, 1e-300, math.inf)
        inside = np.array([e.location in cone for e in resonances], dtype=bool)
    else:
        inside = np.ones(z.shape, dtype=bool)
    partial = _exp_sum(z[inside], w[inside], t, k)
    zero_mult = float(model.zero_multiplicity) if k == 0 else 0.0
    components = {"partial_sum": partial, "zero_multiplicity": zero_mult}
    error = 0.0

    low = 0.0
    if psi is not None:
        low, low_err = low_energy_integral(model, psi, t, k, sigma_prime_fn)
        components["low_energy"] = low
        components["psi"] = psi.identifier
        error += low_err

    rest = 0.0
    if remainder:
        rest = -low
        if not model.odd:
            if len(resonances) and not _is_full_region(resonances, model):
                raise ValueError("the even-dimensional remainder needs resonances on the whole cut plane")
            outside = _exp_sum(z[~inside], w[~inside], t, k)
            cut, cut_err = branch_cut_integral(model, t, k)
            components["outside_cone"] = outside
            components["branch_cut"] = cut
            rest += outside + cut
            error += cut_err
        components["remainder"] = rest

    if len(resonances):
        tail = TailModel.from_resonances(resonances).bound(t, k)
        if not tail <= tail_limit:
            tmin = TailModel.from_resonances(resonances).minimum_time(tail_limit, k)
            raise TailBoundError(f"tail bound {tail:.3g} at t = {t:g}; valid for t >= {tmin:.4g}", tmin)
    else:
        tail = np.finfo(float).tiny
    error += tail
    return TraceSample(
        t=float(t),
        value=partial + zero_mult + low + rest,
        side=Side.RESONANCE_SUM,
        error=error,
        components=components,
        tail_bound=tail,
        derivative=k,
    )


# ---------------------------------------------------------------------------
# heat trace and low-energy fit


def heat_trace(
    model: BallModel,
    t: float,
    density: Optional[Density] = None,
    rel_tol: float = 1e-8,
    max_panels: int = 1024,
) -> TraceSample:
    """``int_0^inf e^{-t lambda^2} sigma'(lambda) dlambda`` (no eigenvalues for balls).

    In ``s = lambda sqrt(t)`` the weight is ``e^{-s^2}``: ``s <= 1`` uses the
    logarithmic substitution, whose panel count doubles until the value
    moves by less than ``rel_tol`` (relative); ``1 <= s <= 7`` is adaptive.
    """
    if not t > 0:
        raise ValueError("the heat trace is evaluated at t > 0 only")
    dens = density if density is not None else functools.partial(sigma_prime_values, model)
    a = 1.0 / math.sqrt(t)
    panels = 16
    prev = None
    while True:
        rule = _MappedRule(a, eps=1e-14 * a, panels=panels)
        vals = np.asarray(dens(rule.lam.ravel())).reshape(rule.lam.shape)
        near, near_err = rule.integrate(vals * np.exp(-t * rule.lam ** 2))
        if density is None:
            near += phase_from_zero(model, rule.eps).real
        near = near.real
        if prev is not None and abs(near - prev) <= rel_tol * abs(near):
            break
        if 2 * panels > max_panels:
            raise ArithmeticError("small-lambda heat integral did not settle")
        prev = near
        panels *= 2
    far = adaptive_gk(lambda lam: np.exp(-t * lam ** 2) * dens(lam), a, 7.0 * a, tol=1e-3 * rel_tol * max(abs(near), 1e-300), initial=8)
    value = near + float(far.value.real)
    return TraceSample(
        t=float(t),
        value=value,
        side=Side.HEAT,
        error=abs(near - prev) + near_err + far.error,
        components={"small_lambda": near, "rest": float(far.value.real), "panels": panels},
    )


@dataclass(frozen=True)
class LowEnergyFit:
    f00: float
    fit_window: tuple[float, float]
    residual: float
    coefficients: tuple[float, ...]
    slope: float


def fit_low_energy(
    model: BallModel,
    window: tuple[float, float] = (0.0, 0.2),
    samples: int = 80,
    density: Optional[Density] = None,
    max_condition: float = 1e10,
) -> LowEnergyFit:
    """Fit ``sigma'/lambda^{n-3} = a0 + a1 lambda + a2 lambda^{n-2} log lambda`` on the window.

    A lower end of 0 means ``lambda_max / 100``.  ``residual`` is the largest
    pointwise misfit.  ``slope`` is the raw log-log slope of ``|sigma'|``
    over the lowest decade of the window.
    """
    lo, hi = map(float, window)
    if lo == 0.0:
        lo = 0.01 * hi
    if not 0 < lo < hi <= 0.5:
        raise ValueError("the window must lie inside (0, 0.5]")
    if hi / lo < 2:
        raise ValueError("window too narrow for a three-term fit")
    n = model.dimension
    dens = density if density is not None else functools.partial(sigma_prime_values, model)
    lam = np.linspace(lo, hi, samples)
    y = np.asarray(dens(lam)) / lam ** (n - 3)
    basis = np.stack([np.ones_like(lam), lam, lam ** (n - 2) * np.log(lam)], axis=1)
    if np.linalg.cond(basis) > max_condition:
        raise ValueError("ill-conditioned low-energy fit; widen the window")
    coef, *_ = np.linalg.lstsq(basis, y, rcond=None)
    resid = float(np.max(np.abs(y - basis @ coef)))
    low = np.geomspace(lo, 10 * lo, 12) if 10 * lo <= hi else np.geomspace(lo, hi, 12)
    vals = np.abs(np.asarray(dens(low)))
    slope = float(np.polyfit(np.log(low), np.log(vals), 1)[0])
    return LowEnergyFit(float(coef[0]), (lo, hi), resid, tuple(float(c) for c in coef), slope)


# ---------------------------------------------------------------------------
# long-time decay


@dataclass
class TheoremFourReport:
    dimension: int
    gamma: float
    derivative: int
    threshold: float
    t: np.ndarray
    difference: np.ndarray
    error: np.ndarray
    log_region: int
    exponent: float
    resolved: int
    passed: bool

    def record(self) -> dict:
        return {
            "dimension": self.dimension,
            "gamma": self.gamma,
            "derivative": self.derivative,
            "threshold": self.threshold,
            "log_region_resonances": self.log_region,
            "fitted_exponent": self.exponent,
            "resolved_points": self.resolved,
            "passed": self.passed,
        }


def decay_threshold(dimension: int, gamma: float, derivative: int) -> float:
    """Smallest admissible time: ``1.2 (n + k) / gamma``."""
    return 1.2 * (dimension + derivative) / gamma


def verify_theorem4(
    model: BallModel,
    resonances: Optional[ResonanceSet],
    gamma: float,
    k: int,
    t_grid: Sequence[float],
    lambda_max: float = 60.0,
) -> TheoremFourReport:
    """Decay of ``d^k/dt^k (u(t) - sum_{Im lambda <= gamma log|lambda|} m e^{i lambda t})``.

    The derivative is taken under the integral and the sum.  The exponent is
    the log-log slope over grid points whose difference exceeds ten times
    its error; ``passed`` compares it with ``-(n - 2 + k)`` allowing 10%.
    """
    n = model.dimension
    if n == 2:
        raise ValueError("no decay law is asserted in two dimensions")
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    t = np.asarray(sorted(t_grid), dtype=float)
    t_k = decay_threshold(n, gamma, k)
    if t.size == 0 or t[0] <= t_k:
        raise ValueError(f"time grid must lie above t_k = {t_k:.6g}")
    if resonances is not None and len(resonances):
        z = resonances.values()
        w = resonances.weights()
        near = z.imag <= gamma * np.log(np.abs(z))
        z, w = z[near], w[near]
    else:
        z, w = np.zeros(0, dtype=complex), np.zeros(0)
    diff, err = [], []
    for tt in t:
        s = wave_trace_bk(model, tt, lambda_max=lambda_max, derivative=k)
        diff.append(s.value - _exp_sum(z, w, tt, k))
        err.append(s.error)
    diff = np.array(diff)
    err = np.array(err)
    ok = np.abs(diff) > 10 * err
    if ok.sum() >= 2:
        exponent = float(np.polyfit(np.log(t[ok]), np.log(np.abs(diff[ok])), 1)[0])
    else:
        exponent = math.nan
    target = -(n - 2 + k)
    passed = bool(np.isfinite(exponent) and exponent <= target * 0.9)
    return TheoremFourReport(n, gamma, k, t_k, t, diff, err, int(z.size), exponent, int(ok.sum()), passed)


# ---------------------------------------------------------------------------
# smeared identity


@dataclass
class SmearedReport:
    lam: np.ndarray
    left: np.ndarray
    right: np.ndarray
    error: np.ndarray
    decay_exponent: float

    @property
    def discrepancy(self) -> np.ndarray:
        return np.abs(self.left - self.right)

    @property
    def max_discrepancy(self) -> float:
        return float(np.max(self.discrepancy)) if self.lam.size else 0.0

    def within_bounds(self) -> bool:
        return bool(np.all(self.discrepancy <= self.error))


def smeared_check(
    model: BallModel,
    phi: CutoffFunction,
    lambda_grid: Sequence[float],
    resonances: Optional[ResonanceSet] = None,
    rho: Optional[float] = None,
    lambda_max: float = 60.0,
    panels: int = 24,
    order: int = 16,
) -> SmearedReport:
    """Both sides of ``int u phi e^{-i lambda t} dt = sum m phi^(lambda - zeta)``.

    The left side integrates spectral-side samples of ``u`` over the support
    of ``phi``; its error adds the sample errors and the change under halving
    the panel count.  The right side sums the shifted transforms over the
    resonances (the cone of aperture ``rho`` if given); its error is
    ``int phi(t) tail(t) dt``.  The decay exponent is the log-log slope of
    the discrepancy over grid points where it exceeds the error.
    """
    from .quadrature import gauss_legendre_panels

    if phi.kind is not CutoffKind.TEST:
        raise ValueError("the smeared identity takes a test function supported in (0, inf)")
    lam = np.asarray(lambda_grid, dtype=float)
    trace = _cached_trace(model, float(lambda_max), 24)

    def left_side(npanels):
        tn, tw = gauss_legendre_panels(np.linspace(*phi.support, npanels + 1), order)
        samples = [trace.evaluate(x) for x in tn]
        u = np.array([s.value for s in samples])
        e = np.array([s.error for s in samples])
        vals = (tw * phi(tn) * u) @ np.exp(-1j * np.outer(tn, lam))
        return vals, float(np.sum(tw * phi(tn) * e)), tn, tw

    left, sample_err, tn, tw = left_side(panels)
    coarse, *_ = left_side(panels // 2)
    err_left = sample_err + np.abs(left - coarse)

    right = np.zeros(lam.shape, dtype=complex)
    err_right = 0.0
    if resonances is not None and len(resonances):
        z = resonances.values()
        w = resonances.weights()
        if rho is not None:
            cone = ConeRegion(rho, 1e-300, math.inf)
            keep = np.array([e.location in cone for e in resonances], dtype=bool)
            z, w = z[keep], w[keep]
        for i, l in enumerate(lam):
            right[i] = np.sum(w * phi.fourier(l - z))
        tail = TailModel.from_resonances(resonances)
        err_right = float(np.sum(tw * phi(tn) * np.array([tail.bound(x) for x in tn])))
    error = err_left + err_right
    disc = np.abs(left - right)
    ok = disc > error
    decay = float(np.polyfit(np.log(lam[ok]), np.log(disc[ok]), 1)[0]) if ok.sum() >= 2 else math.nan
    return SmearedReport(lam, left, right, error, decay)
