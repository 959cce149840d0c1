"""Quadrature rules: adaptive Gauss-Kronrod and a Filon-Legendre panel rule."""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import legendre
from scipy import special as sp

# 15-point Kronrod extension of the 7-point Gauss rule (QUADPACK qk15).
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

KRONROD_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WK[:-1], _WK[::-1]])
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


class QuadratureError(RuntimeError):
    """Adaptive refinement exhausted its panel budget."""


class GuardTripped(RuntimeError):
    """The panel guard rejected a node (e.g. a zero of ``f`` on the contour)."""


def gk15(f: Callable[[np.ndarray], np.ndarray], a: float, b: float):
    """One G7/K15 panel: returns ``(kronrod_value, |kronrod - gauss|, values)``.

    ``f`` maps the 15 nodes to values of shape ``(15,)`` or ``(15, k)``; for
    vector integrands the error is the largest component difference.
    """
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    vals = f(mid + half * KRONROD_NODES)
    k = half * np.dot(KRONROD_WEIGHTS, vals)
    g = half * np.dot(GAUSS_WEIGHTS, vals)
    return k, float(np.max(np.abs(k - g))), vals


@dataclass
class QuadResult:
    value: complex
    error: float
    panels: int


def adaptive_gk(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float = 1e-10,
    max_panels: int = 2000,
    initial: int = 1,
    guard: Optional[Callable[[np.ndarray, float], bool]] = None,
) -> QuadResult:
    """Globally adaptive G7/K15 integration of a (possibly complex) integrand.

    ``guard(values, panel_width)`` is called on every panel; a ``False``
    return raises :class:`GuardTripped`.
    """
    edges = np.linspace(a, b, initial + 1)
    heap = []
    total = 0.0
    err = 0.0
    count = 0
    for lo, hi in zip(edges[:-1], edges[1:]):
        k, e, vals = gk15(f, lo, hi)
        if guard is not None and not guard(vals, hi - lo):
            raise GuardTripped(f"guard tripped on panel [{lo}, {hi}]")
        heapq.heappush(heap, (-e, count, lo, hi, k))
        count += 1
        total += k
        err += e
    while err > tol:
        if len(heap) >= max_panels:
            raise QuadratureError(f"panel budget exhausted, error estimate {err:.3g}")
        neg_e, _, lo, hi, k = heapq.heappop(heap)
        total -= k
        err += neg_e
        mid = 0.5 * (lo + hi)
        for l2, h2 in ((lo, mid), (mid, hi)):
            k2, e2, vals = gk15(f, l2, h2)
            if guard is not None and not guard(vals, h2 - l2):
                raise GuardTripped(f"guard tripped on panel [{l2}, {h2}]")
            heapq.heappush(heap, (-e2, count, l2, h2, k2))
            count += 1
            total += k2
            err += e2
    # recompute to shed accumulated cancellation in the running sums
    total = sum(item[4] for item in heap)
    err = sum(-item[0] for item in heap)
    return QuadResult(total, err, len(heap))


def gauss_legendre_panels(edges: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of composite n-point Gauss-Legendre over ``edges``."""
    x, w = legendre.leggauss(n)
    edges = np.asarray(edges, dtype=float)
    half = 0.5 * np.diff(edges)[:, None]
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    return (mid + half * x).ravel(), (half * w).ravel()


class FilonLegendre:
    """Filon-type rule for ``int f(x) exp(i w x) dx`` over equal panels.

    On every panel ``f`` is replaced by its degree ``n - 1`` Legendre
    interpolant at the Gauss nodes, and the oscillatory factor is integrated
    exactly through ``int_{-1}^{1} P_k(x) e^{i w x} dx = 2 i^k j_k(w)``.  The
    rule is exact for piecewise polynomials whatever the frequency.
    """

    def __init__(self, a: float, b: float, panels: int, n: int = 24):
        self.a = float(a)
        self.b = float(b)
        self.panels = int(panels)
        self.n = int(n)
        self.edges = np.linspace(self.a, self.b, self.panels + 1)
        self.half = 0.5 * (self.b - self.a) / self.panels
        self.centers = 0.5 * (self.edges[:-1] + self.edges[1:])
        x, w = legendre.leggauss(self.n)
        self._x = x
        # projection matrix: coefficient_k = sum_i proj[k, i] f(x_i)
        vander = legendre.legvander(x, self.n - 1)  # (n, n) P_k(x_i)
        self._proj = ((2 * np.arange(self.n) + 1) / 2.0)[:, None] * (vander * w[:, None]).T

    @property
    def nodes(self) -> np.ndarray:
        return (self.centers[:, None] + self.half * self._x[None, :]).ravel()

    def coefficients(self, values: np.ndarray) -> np.ndarray:
        """Legendre coefficients per panel; ``values`` has shape (..., panels*n)."""
        vals = np.asarray(values).reshape(values.shape[:-1] + (self.panels, self.n))
        return np.einsum("ki,...pi->...pk", self._proj, vals)

    def integrate(self, coeffs: np.ndarray, omega: float) -> tuple[complex, float]:
        """Integral of the interpolant against ``exp(i omega x)`` and an error estimate.

        The estimate is the size of the two highest Legendre coefficients,
        which bounds the interpolation error for geometrically decaying
        coefficients.
        """
        k = np.arange(self.n)
        moments = 2.0 * (1j ** k) * sp.spherical_jn(k, omega * self.half)
        phases = np.exp(1j * omega * self.centers)
        value = self.half * np.sum(phases * (coeffs @ moments))
        tail = np.abs(coeffs[..., -1]) + np.abs(coeffs[..., -2])
        error = 2.0 * self.half * float(np.sum(tail))
        return complex(value), error
