"""Zeros of analytic functions on the logarithmic plane.

Zeros are counted with the argument principle, ``(1/2 pi i) \\oint f'/f``,
on boxes that are either polar (``r`` by ``theta``, living on any sheet) or
rectangular in the complex plane.  Only the logarithmic derivative is ever
integrated, so the size of ``f`` itself never matters.  Boxes holding more
than one zero are split; a box holding exactly one yields a seed from the
first contour moment, which Newton's method then polishes.
"""

from __future__ import annotations

import cmath
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Optional, Protocol, Sequence, Union

import numpy as np

from .model_ball import BallModel, mode_function
from .quadrature import GuardTripped, QuadratureError, adaptive_gk
from .special_functions import ConeRegion, LogPoint

__all__ = [
    "AnnularRegion",
    "BoundaryZeroError",
    "Box",
    "CoverMismatchError",
    "NewtonDivergence",
    "NonIntegerCountError",
    "Resonance",
    "ResonanceSet",
    "count_zeros",
    "find_resonances",
    "full_region",
    "refine_log_zero",
    "refine_zero",
    "region_from_dict",
    "region_to_dict",
]


class BoundaryZeroError(ArithmeticError):
    """A zero sits on the contour and perturbing the box did not help."""


class NonIntegerCountError(ArithmeticError):
    """The contour integral did not settle near an integer."""


class NewtonDivergence(ArithmeticError):
    pass


class CoverMismatchError(ArithmeticError):
    """Box-cover count and refined roots disagree: a root was missed or doubled."""


class LogPlaneFunction(Protocol):
    def log_value(self, r, theta) -> np.ndarray: ...

    def log_derivative(self, r, theta) -> np.ndarray: ...


# ---------------------------------------------------------------------------
# boxes


@dataclass(frozen=True)
class Box:
    """``[a0, a1] x [b0, b1]`` as ``r x theta`` (polar) or ``Re x Im`` (rect)."""

    a0: float
    a1: float
    b0: float
    b1: float
    coords: str = "polar"

    def __post_init__(self) -> None:
        if self.coords not in ("polar", "rect"):
            raise ValueError(f"unknown coordinates {self.coords!r}")
        if not (self.a0 < self.a1 and self.b0 < self.b1):
            raise ValueError(f"degenerate box {self}")
        if self.coords == "polar" and self.a0 <= 0:
            raise ValueError("polar boxes must stay off the branch point")

    @property
    def polar(self) -> bool:
        return self.coords == "polar"

    def center(self) -> tuple[float, float]:
        if self.polar:
            return math.sqrt(self.a0 * self.a1), 0.5 * (self.b0 + self.b1)
        return 0.5 * (self.a0 + self.a1), 0.5 * (self.b0 + self.b1)

    def center_point(self) -> complex:
        a, b = self.center()
        return a * cmath.exp(1j * b) if self.polar else complex(a, b)

    def diameter(self) -> float:
        """Rough size in the projected plane."""
        if self.polar:
            return max(self.a1 - self.a0, self.a1 * (self.b1 - self.b0))
        return math.hypot(self.a1 - self.a0, self.b1 - self.b0)

    def contains(self, a: float, b: float, slack: float = 0.0) -> bool:
        da = slack * (self.a1 - self.a0)
        db = slack * (self.b1 - self.b0)
        return self.a0 - da <= a <= self.a1 + da and self.b0 - db <= b <= self.b1 + db

    def split(self, fa: float = 0.5, fb: float = 0.5) -> list["Box"]:
        """Four children meeting at the fractional point ``(fa, fb)``.

        For polar boxes ``fa`` is a fraction of ``log r``.
        """
        if self.polar:
            am = self.a0 * (self.a1 / self.a0) ** fa
        else:
            am = self.a0 + fa * (self.a1 - self.a0)
        bm = self.b0 + fb * (self.b1 - self.b0)
        c = self.coords
        return [
            Box(self.a0, am, self.b0, bm, c),
            Box(am, self.a1, self.b0, bm, c),
            Box(self.a0, am, bm, self.b1, c),
            Box(am, self.a1, bm, self.b1, c),
        ]

    def bisect(self, frac: float = 0.5) -> list["Box"]:
        """Two children cut across the longer side."""
        long_a = (self.a1 - self.a0) >= (
            self.a1 * (self.b1 - self.b0) if self.polar else self.b1 - self.b0
        )
        c = self.coords
        if long_a:
            am = self.a0 * (self.a1 / self.a0) ** frac if self.polar else self.a0 + frac * (self.a1 - self.a0)
            return [Box(self.a0, am, self.b0, self.b1, c), Box(am, self.a1, self.b0, self.b1, c)]
        bm = self.b0 + frac * (self.b1 - self.b0)
        return [Box(self.a0, self.a1, self.b0, bm, c), Box(self.a0, self.a1, bm, self.b1, c)]

    def around(self, a: float, b: float, shrink: float) -> "Box":
        """Box of this one's shape, ``shrink`` times smaller, centred on ``(a, b)``."""
        if self.polar:
            half = math.sqrt(self.a1 / self.a0) ** (1.0 / shrink)
            hb = 0.5 * (self.b1 - self.b0) / shrink
            return Box(a / half, a * half, b - hb, b + hb, "polar")
        ha = 0.5 * (self.a1 - self.a0) / shrink
        hb = 0.5 * (self.b1 - self.b0) / shrink
        return Box(a - ha, a + ha, b - hb, b + hb, "rect")

    def perturbed(self, rng: np.random.Generator, scale: float = 1e-3) -> "Box":
        da = scale * (self.a1 - self.a0)
        db = scale * (self.b1 - self.b0)
        d = rng.uniform(-1.0, 1.0, 4)
        return Box(self.a0 + d[0] * da, self.a1 + d[1] * da, self.b0 + d[2] * db, self.b1 + d[3] * db, self.coords)


# ---------------------------------------------------------------------------
# argument principle

_GUARD = 1e9  # |g dlambda/ds| beyond this means a zero within ~1e-9 of the edge


def _edges(box: Box):
    """Edge parametrisations ``s in [0,1] -> (a, b, dlambda/ds / lambda-or-1)``."""
    if box.polar:
        lr0, lr1 = math.log(box.a0), math.log(box.a1)
        dl = lr1 - lr0
        db = box.b1 - box.b0
        return [
            lambda s: (np.exp(lr0 + dl * s), np.full_like(s, box.b0), dl),
            lambda s: (np.full_like(s, box.a1), box.b0 + db * s, 1j * db),
            lambda s: (np.exp(lr1 - dl * s), np.full_like(s, box.b1), -dl),
            lambda s: (np.full_like(s, box.a0), box.b1 - db * s, -1j * db),
        ]
    da = box.a1 - box.a0
    db = box.b1 - box.b0
    return [
        lambda s: (box.a0 + da * s, np.full_like(s, box.b0), da),
        lambda s: (np.full_like(s, box.a1), box.b0 + db * s, 1j * db),
        lambda s: (box.a1 - da * s, np.full_like(s, box.b1), -da),
        lambda s: (np.full_like(s, box.a0), box.b1 - db * s, -1j * db),
    ]


def _moments(g: Callable, box: Box, tol: float, max_panels: int) -> tuple[complex, complex, float]:
    """``(1/2 pi i) \\oint [1, (lambda - c)/h] g dlambda`` and the error estimate.

    ``c`` is the box centre and ``h`` its diameter, which keeps both moments
    of order one.
    """
    c = box.center_point()
    h = box.diameter()

    def integrand_for(edge):
        def integrand(s):
            a, b, jac = edge(s)
            if box.polar:
                lam = a * np.exp(1j * b)
                vals = np.asarray(g(a, b), dtype=complex)
                dlam = jac * lam
            else:
                lam = a + 1j * b
                vals = np.asarray(g(lam), dtype=complex)
                dlam = jac
            w = vals * dlam / (2j * math.pi)
            return np.stack([w, w * (lam - c) / h], axis=-1)

        return integrand

    def guard(vals, width):
        v = vals[:, 0] * 2 * math.pi
        return bool(np.all(np.isfinite(vals))) and float(np.max(np.abs(v))) < _GUARD

    m0 = 0j
    m1 = 0j
    err = 0.0
    for edge in _edges(box):
        res = adaptive_gk(integrand_for(edge), 0.0, 1.0, tol=tol, max_panels=max_panels, initial=2, guard=guard)
        m0 += res.value[0]
        m1 += res.value[1]
        err += res.error
    return complex(m0), complex(m1), err


def _moments_retrying(g, box, tol, max_panels, rng, retries):
    current = box
    for attempt in range(retries + 1):
        try:
            return current, _moments(g, current, tol, max_panels)
        except GuardTripped:
            if attempt == retries:
                raise BoundaryZeroError(f"zero on the contour of {box} after {retries} perturbations")
            current = box.perturbed(rng)
    raise AssertionError("unreachable")


def count_zeros(
    g: Callable,
    box: Box,
    tol: float = 1e-6,
    rng: Optional[np.random.Generator] = None,
    retries: int = 5,
    max_panels: int = 4000,
) -> int:
    """Number of zeros (with multiplicity) of ``f`` inside ``box``.

    ``g`` is the logarithmic derivative ``f'/f``: called as ``g(r, theta)``
    for polar boxes and ``g(z)`` for rectangular ones.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    return _count(g, box, tol, rng, retries, max_panels)[0]


def _count(g, box, tol, rng, retries, max_panels):
    used, (m0, m1, err) = _moments_retrying(g, box, tol, max_panels, rng, retries)
    n = round(m0.real)
    resid = abs(m0 - n)
    if resid >= 0.25 or n < 0:
        raise NonIntegerCountError(f"count {m0:.6g} on {used} (error estimate {err:.3g})")
    return int(n), m1, used


# ---------------------------------------------------------------------------
# Newton


def refine_zero(
    f: Callable[[complex], complex],
    fprime: Callable[[complex], complex],
    guess: complex,
    tol: float = 1e-12,
    max_iter: int = 60,
) -> complex:
    """Damped Newton iteration in the complex plane.

    A step is halved until ``|f|`` does not grow.  Returns once the accepted
    step is below ``tol * max(1, |z|)`` and ``|f| < tol``.
    """
    z = complex(guess)
    fz = f(z)
    for _ in range(max_iter):
        d = fprime(z)
        if d == 0:
            raise NewtonDivergence(f"f' vanishes at {z}")
        step = -fz / d
        t = 1.0
        while True:
            cand = z + t * step
            fc = f(cand)
            if abs(fc) <= abs(fz) or t < 1e-6:
                break
            t *= 0.5
        z, fz = cand, fc
        if abs(t * step) < tol * max(1.0, abs(z)) and abs(fz) < tol:
            return z
    raise NewtonDivergence(f"no convergence from {guess} after {max_iter} iterations")


def refine_log_zero(
    fn: LogPlaneFunction,
    guess: LogPoint,
    tol: float = 1e-13,
    max_iter: int = 60,
) -> tuple[LogPoint, float]:
    """Newton on the log plane with steps ``-f/f'`` from the log-derivative.

    The angle is carried continuously so the iteration stays on the sheet
    of ``guess``.  Returns the root and the scaled residual
    ``|f/f'| / max(1, |lambda|)``.
    """
    r, th = guess.r, guess.theta
    logabs = float(np.real(fn.log_value(r, th)))
    for _ in range(max_iter):
        gval = complex(fn.log_derivative(r, th))
        if gval == 0 or not cmath.isfinite(gval):
            raise NewtonDivergence(f"bad log-derivative at r={r}, theta={th}")
        lam = r * cmath.exp(1j * th)
        step = -1.0 / gval
        t = 1.0
        while True:
            cand = lam + t * step
            if cand == 0:
                t *= 0.5
                continue
            th_c = th + cmath.phase(cand / lam)
            r_c = abs(cand)
            la_c = float(np.real(fn.log_value(r_c, th_c)))
            if not la_c > logabs or t < 1e-6:
                break
            t *= 0.5
        r, th, logabs = r_c, th_c, la_c
        scale = max(1.0, r)
        if abs(t * step) < tol * scale:
            gval = complex(fn.log_derivative(r, th))
            resid = (1.0 / abs(gval)) / scale if gval != 0 else 0.0
            return LogPoint(r, th), resid
    raise NewtonDivergence(f"no convergence from {guess} after {max_iter} iterations")


# ---------------------------------------------------------------------------
# regions and result sets


@dataclass(frozen=True)
class AnnularRegion:
    """Union of annular sectors ``r_min <= r <= r_max``, ``theta in (lo, hi)``."""

    r_min: float
    r_max: float
    angles: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not 0.0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        object.__setattr__(self, "angles", tuple((float(a), float(b)) for a, b in self.angles))

    def __contains__(self, point: LogPoint) -> bool:
        if not self.r_min <= point.r <= self.r_max:
            return False
        return any(lo < point.theta < hi for lo, hi in self.angles)

    def sectors(self) -> list[tuple[float, float]]:
        return list(self.angles)


Region = Union[ConeRegion, AnnularRegion]


def full_region(model: BallModel, r_min: float, r_max: float) -> AnnularRegion:
    """Every resonance with ``r_min <= |lambda| <= r_max``.

    Odd dimensions need only the upper half-plane.  In even dimensions the
    slit plane ``-3pi/2 < theta < pi/2`` holds resonances in
    ``0 < theta < pi/2`` and in ``-3pi/2 < theta < -pi``; the physical
    sheet ``-pi < theta < 0`` has none.
    """
    if model.odd:
        return AnnularRegion(r_min, r_max, ((0.0, math.pi),))
    return AnnularRegion(r_min, r_max, ((-1.5 * math.pi, -math.pi), (0.0, 0.5 * math.pi)))


def region_to_dict(region: Region) -> dict:
    if isinstance(region, ConeRegion):
        return {"kind": "cone", "rho": region.rho, "r_min": region.r_min, "r_max": region.r_max}
    return {"kind": "annular", "r_min": region.r_min, "r_max": region.r_max, "angles": [list(a) for a in region.angles]}


def region_from_dict(data: dict) -> Region:
    if data["kind"] == "cone":
        return ConeRegion(float(data["rho"]), float(data["r_min"]), float(data["r_max"]))
    return AnnularRegion(float(data["r_min"]), float(data["r_max"]), tuple(tuple(map(float, a)) for a in data["angles"]))


@dataclass(frozen=True)
class Resonance:
    location: LogPoint
    multiplicity: int  # order of the zero of the mode function
    mode: int
    weight: int  # number of harmonics sharing the mode

    @property
    def total(self) -> int:
        """Resonance multiplicity ``m(lambda)`` contributed by this entry."""
        return self.multiplicity * self.weight

    @property
    def value(self) -> complex:
        return self.location.project()

    def record(self) -> dict:
        z = self.value
        return {
            "r": self.location.r,
            "theta": self.location.theta,
            "re": z.real,
            "im": z.imag,
            "multiplicity": self.multiplicity,
            "mode": self.mode,
            "weight": self.weight,
        }


@dataclass
class ResonanceSet:
    entries: list[Resonance]
    region: Optional[Region] = None
    dimension: int = 0
    tolerances: dict = field(default_factory=dict)
    fingerprint: str = ""
    flagged: list[Resonance] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def sorted(self) -> "ResonanceSet":
        key = lambda e: (e.location.r, e.location.theta, e.mode)
        return ResonanceSet(sorted(self.entries, key=key), self.region, self.dimension, dict(self.tolerances), self.fingerprint, list(self.flagged))

    def filter(self, keep: Callable[[Resonance], bool], region: Optional[Region] = None) -> "ResonanceSet":
        return ResonanceSet(
            [e for e in self.entries if keep(e)],
            region if region is not None else self.region,
            self.dimension,
            dict(self.tolerances),
            self.fingerprint,
        )

    def restrict(self, region: Region) -> "ResonanceSet":
        return self.filter(lambda e: e.location in region, region)

    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries], dtype=complex)

    def weights(self) -> np.ndarray:
        return np.array([e.total for e in self.entries], dtype=float)

    def total_multiplicity(self) -> int:
        return int(sum(e.total for e in self.entries))

    def counting_function(self, r) -> np.ndarray:
        """``N(r)``: total multiplicity with ``|lambda| <= r``."""
        mods = np.array([e.location.r for e in self.entries])
        w = self.weights()
        order = np.argsort(mods)
        cum = np.concatenate([[0.0], np.cumsum(w[order])])
        idx = np.searchsorted(mods[order], np.asarray(r, dtype=float), side="right")
        return cum[idx]

    def counting_exponent(self, r_lo: float, r_hi: float, samples: int = 40) -> float:
        """Least-squares slope of ``log N`` against ``log r`` on ``[r_lo, r_hi]``."""
        rs = np.geomspace(r_lo, r_hi, samples)
        n = self.counting_function(rs)
        if np.any(n <= 0):
            raise ValueError("counting function vanishes in the fit window")
        return float(np.polyfit(np.log(rs), np.log(n), 1)[0])

    def mirror(self, point: LogPoint) -> LogPoint:
        """Image of ``point`` under ``lambda -> -conj(lambda)`` in the search coordinates."""
        if self.dimension % 2 == 1:
            return LogPoint(point.r, math.pi - point.theta)
        return LogPoint(point.r, -math.pi - point.theta)

    def symmetry_defect(self) -> float:
        """Largest relative distance from a resonance's mirror image to the set."""
        if not self.entries:
            return 0.0
        vals = self.values()
        thetas = np.array([e.location.theta for e in self.entries])
        modes = np.array([e.mode for e in self.entries])
        worst = 0.0
        for e in self.entries:
            m = self.mirror(e.location)
            same = modes == e.mode
            # compare on the log plane: matching angle and projected value
            d = np.abs(vals[same] - m.project()) + np.abs(thetas[same] - m.theta) * m.r
            worst = max(worst, float(d.min()) / max(1.0, m.r))
        return worst

    def frontier_min_imag(self, fraction: float = 0.75) -> float:
        """Smallest ``Im lambda`` among resonances with ``|lambda| >= fraction * r_max``."""
        r_max = self.region.r_max if self.region is not None else max(e.location.r for e in self.entries)
        ims = [e.value.imag for e in self.entries if e.location.r >= fraction * r_max]
        return float(min(ims)) if ims else math.inf

    def records(self) -> list[dict]:
        return [e.record() for e in self.sorted().entries]

    def to_json(self) -> str:
        return json.dumps(
            {
                "fingerprint": self.fingerprint,
                "dimension": self.dimension,
                "region": region_to_dict(self.region) if self.region is not None else None,
                "tolerances": self.tolerances,
                "resonances": self.records(),
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ResonanceSet":
        data = json.loads(text)
        entries = [
            Resonance(LogPoint(float(r["r"]), float(r["theta"])), int(r["multiplicity"]), int(r["mode"]), int(r["weight"]))
            for r in data["resonances"]
        ]
        region = region_from_dict(data["region"]) if data.get("region") else None
        flagged = [e for e in entries if e.multiplicity > 1]
        return cls(entries, region, int(data["dimension"]), dict(data.get("tolerances", {})), data.get("fingerprint", ""), flagged)

    @classmethod
    def merge(cls, parts: Iterable["ResonanceSet"]) -> "ResonanceSet":
        parts = list(parts)
        entries = [e for p in parts for e in p.entries]
        head = parts[0]
        return cls(entries, head.region, head.dimension, dict(head.tolerances), head.fingerprint,
                   [e for p in parts for e in p.flagged]).sorted()


# ---------------------------------------------------------------------------
# subdivision search

# off-centre split fractions keep cut lines away from symmetry axes, where
# zeros like to sit (e.g. the imaginary axis in odd dimensions)
_SPLIT_A = 0.5137
_SPLIT_B = 0.4619


@dataclass
class _Search:
    fn: LogPlaneFunction
    tol: float
    root_tol: float
    min_size: float
    rng: np.random.Generator
    max_panels: int = 4000

    def count(self, box: Box):
        return _count(self.fn.log_derivative, box, self.tol, self.rng, 5, self.max_panels)

    def roots(self, box: Box, n: int, m1: complex, depth: int = 0) -> list[tuple[LogPoint, int, float]]:
        if n == 0:
            return []
        if n == 1:
            found = self._single(box, m1)
            if found is not None:
                return [found]
        if box.diameter() < self.min_size or depth > 60:
            return [self._cluster(box, n)]
        out = []
        for child in box.split(_SPLIT_A, _SPLIT_B):
            k, c1, used = self.count(child)
            out.extend(self.roots(used, k, c1, depth + 1))
        got = sum(m for _, m, _ in out)
        if got != n:
            raise CoverMismatchError(f"{box}: parent count {n}, children found {got}")
        return out

    def _single(self, box: Box, m1: complex):
        c = box.center_point()
        seed = c + box.diameter() * m1
        a0, b0 = box.center()
        if box.polar:
            th = b0 + cmath.phase(seed / c) if seed != 0 else b0
            guess = LogPoint(abs(seed), th)
        else:
            guess = LogPoint.from_complex(seed)
        try:
            root, resid = refine_log_zero(self.fn, guess, self.root_tol)
        except NewtonDivergence:
            return None
        a, b = (root.r, root.theta) if box.polar else (root.project().real, root.project().imag)
        if not box.contains(a, b):
            return None
        return root, 1, resid

    def _cluster(self, box: Box, n: int):
        """Multiplicity of a zero cluster that would not separate."""
        a0, b0 = box.center()
        guess = LogPoint(a0, b0) if box.polar else LogPoint.from_complex(complex(a0, b0))
        root, resid = refine_log_zero(self.fn, guess, self.root_tol)
        a, b = (root.r, root.theta) if box.polar else (root.project().real, root.project().imag)
        mult = n
        small = box
        for _ in range(2):
            small = small.around(a, b, 8.0)
            mult, _, _ = self.count(small)
        return root, mult, resid


def _search_mode(args) -> tuple[int, list, int]:
    model, ell, boxes, tol, root_tol, seed = args
    fn = mode_function(model, ell)
    search = _Search(fn, tol, root_tol, min_size=1e-6, rng=np.random.default_rng([seed, ell]))
    found = []
    expected = 0
    for box in boxes:
        n, m1, used = search.count(box)
        expected += n
        found.extend(search.roots(used, n, m1))
    return ell, found, expected


def default_mode_limit(model: BallModel, r_max: float) -> int:
    """Modes beyond this cannot have zeros with ``|lambda| <= r_max``.

    Zeros of ``H_nu(nu w)`` stay outside ``|w| < 0.66``; the factor 1.6 and
    the margin leave room, and the search also requires a run of empty modes.
    """
    return int(math.ceil(1.6 * r_max * model.radius - (model.dimension - 2) / 2.0)) + 3


def find_resonances(
    model: BallModel,
    region: Region,
    per_mode_cap: Optional[int] = None,
    tol: float = 1e-6,
    root_tol: float = 1e-13,
    seed: int = 0,
    workers: int = 1,
    empty_run: int = 3,
) -> ResonanceSet:
    """All zeros of the outgoing mode functions inside ``region``.

    Every sector of the region is one polar box per mode.  Modes are
    scanned upward until ``per_mode_cap`` or, without a cap, until the
    default limit has been passed and ``empty_run`` consecutive modes came
    back empty.
    """
    boxes = [Box(region.r_min, region.r_max, lo, hi) for lo, hi in region.sectors()]
    limit = per_mode_cap if per_mode_cap is not None else default_mode_limit(model, region.r_max)
    tasks = []
    results = []

    def run(batch):
        args = [(model, ell, boxes, tol, root_tol, seed) for ell in batch]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                return list(pool.map(_search_mode, args))
        return [_search_mode(a) for a in args]

    results.extend(run(range(limit + 1)))
    if per_mode_cap is None:
        ell = limit + 1
        empties = 0
        for _, found, _ in results[-empty_run:]:
            empties = empties + 1 if not found else 0
        while empties < empty_run:
            (res,) = run([ell])
            results.append(res)
            empties = empties + 1 if not res[1] else 0
            ell += 1

    entries = []
    flagged = []
    for ell, found, expected in sorted(results, key=lambda x: x[0]):
        got = sum(m for _, m, _ in found)
        if got != expected:
            raise CoverMismatchError(f"mode {ell}: box cover counts {expected}, refined {got}")
        for root, mult, resid in found:
            entry = Resonance(root, mult, ell, model.multiplicity(ell))
            if root not in region:
                raise CoverMismatchError(f"mode {ell}: root {root} outside {region}")
            entries.append(entry)
            if mult > 1:
                flagged.append(entry)
    tolerances = {"count_tol": tol, "root_tol": root_tol, "modes": max(r[0] for r in results)}
    return ResonanceSet(entries, region, model.dimension, tolerances, model.fingerprint(), flagged).sorted()
