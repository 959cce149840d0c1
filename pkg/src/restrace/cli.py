"""Command-line front end.

    restrace print-defaults > run.ini
    restrace resonances --config run.ini --out out/
    restrace verify-poisson --config run.ini --workers 4

Exit codes: 0 pass, 1 a numerical criterion failed, 2 usage or config
error, 3 internal numerical failure.  Every file written carries the
config fingerprint.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import io
import json
import math
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .model_ball import BallModel, Boundary, mode_function
from .resonance_finder import ResonanceSet, find_resonances, full_region
from .special_functions import ConeRegion
from .traces import (
    CutoffFunction,
    decay_threshold,
    fit_low_energy,
    heat_trace,
    verify_theorem4,
    wave_trace_bk,
    wave_trace_resonance_side,
)
from .weierstrass import WeierstrassProduct, extract_residual, residual_on_interval, synthetic_determinant

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """The configuration is malformed or inconsistent."""


def _field(default, section: str, unit: str = ""):
    return dataclasses.field(default=default, metadata={"section": section, "unit": unit})


@dataclasses.dataclass(frozen=True)
class RunConfig:
    dimension: int = _field(3, "model")
    radius: float = _field(1.0, "model", "length")
    boundary: str = _field("dirichlet", "model", "dirichlet | neumann")
    r_min: float = _field(0.1, "region", "1/length")
    r_max: float = _field(40.0, "region", "1/length")
    rho: float = _field(1.2, "region", "radians, cone half-aperture (even dimensions)")
    root_tol: float = _field(1e-13, "tolerances", "relative")
    quad_tol: float = _field(1e-6, "tolerances", "absolute, contour counts")
    truncation_tol: float = _field(1e-13, "tolerances", "absolute, mode sums")
    genus: int = _field(4, "factorization", "elementary-factor order")
    lam_min: float = _field(1.0, "factorization", "1/length")
    lam_max: float = _field(30.0, "factorization", "1/length")
    steps_per_radian: float = _field(2.0, "factorization", "grid points per radian of phase")
    synthetic: bool = _field(False, "factorization", "true: synthetic round trip only")
    psi_plateau: float = _field(0.5, "traces", "1/length")
    psi_support: float = _field(1.0, "traces", "1/length")
    t_min: float = _field(2.0, "traces", "time")
    t_max: float = _field(10.0, "traces", "time")
    t_step: float = _field(0.5, "traces", "time")
    lambda_max: float = _field(60.0, "traces", "1/length")
    relative_bound: float = _field(1e-3, "traces", "combined bound / |u|")
    gamma: float = _field(1.0, "decay", "log-region slope")
    derivatives: str = _field("0,1", "decay", "comma-separated orders")
    decay_t_min: float = _field(8.0, "decay", "time")
    decay_t_max: float = _field(40.0, "decay", "time")
    decay_points: int = _field(17, "decay")
    heat_t_min: float = _field(10.0, "heat", "time")
    heat_t_max: float = _field(200.0, "heat", "time")
    heat_points: int = _field(12, "heat")
    heat_reference: float = _field(100.0, "heat", "time")
    fit_window: float = _field(0.2, "heat", "1/length, upper end of the low-energy window")
    resonance_file: str = _field("", "run", "JSON from the resonances command; empty: search")
    output: str = _field("out", "run", "directory")
    seed: int = _field(0, "run")
    workers: int = _field(1, "run")

    # -- validation ---------------------------------------------------------

    def validate(self) -> "RunConfig":
        if self.dimension not in (2, 3, 4):
            raise ConfigError("dimension must be 2, 3 or 4")
        try:
            Boundary(self.boundary)
        except ValueError:
            raise ConfigError(f"unknown boundary {self.boundary!r}") from None
        for name in ("root_tol", "quad_tol", "truncation_tol", "relative_bound", "radius", "gamma", "steps_per_radian"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.r_min < self.r_max:
            raise ConfigError("region is empty: need 0 < r_min < r_max")
        if not 0 < self.rho < 0.5 * math.pi:
            raise ConfigError("rho must lie in (0, pi/2)")
        if self.genus < 1:
            raise ConfigError("genus must be a positive integer")
        if not 0 < self.psi_plateau < self.psi_support:
            raise ConfigError("need 0 < psi_plateau < psi_support")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        self.derivative_orders()
        return self

    def derivative_orders(self) -> list[int]:
        try:
            orders = [int(x) for x in self.derivatives.split(",") if x.strip()]
        except ValueError:
            raise ConfigError(f"bad derivative list {self.derivatives!r}") from None
        if not orders or min(orders) < 0:
            raise ConfigError("derivatives must be nonnegative integers")
        return orders

    def model(self) -> BallModel:
        return BallModel(self.dimension, self.radius, Boundary(self.boundary))

    def psi(self) -> CutoffFunction:
        return CutoffFunction.bump(self.psi_plateau, self.psi_support)

    def time_grid(self) -> np.ndarray:
        if not (self.t_step > 0 and 0 < self.t_min <= self.t_max):
            raise ConfigError("empty time grid")
        n = int(math.floor((self.t_max - self.t_min) / self.t_step + 1e-9)) + 1
        return self.t_min + self.t_step * np.arange(n)

    # -- text form ----------------------------------------------------------

    def to_text(self) -> str:
        sections: dict[str, list[str]] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines = sections.setdefault(f.metadata["section"], [])
            if f.metadata["unit"]:
                lines.append(f"# {f.metadata['unit']}")
            lines.append(f"{f.name} = {text}")
        return "\n\n".join(f"[{name}]\n" + "\n".join(lines) for name, lines in sections.items()) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        known = {f.name: f for f in dataclasses.fields(cls)}
        values: dict[str, Any] = {}
        for section in parser.sections():
            for key, raw in parser.items(section):
                f = known.get(key)
                if f is None or f.metadata["section"] != section:
                    raise ConfigError(f"unknown setting [{section}] {key}")
                values[key] = _parse_value(f, raw)
        return cls(**values)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


def _parse_value(f: dataclasses.Field, raw: str):
    kind = type(f.default)
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false"):
                raise ValueError(raw)
            return low == "true"
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"bad value for {f.name}: {raw!r}") from None


# ---------------------------------------------------------------------------
# output


def _number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


class Output:
    def __init__(self, directory: Path, config: RunConfig, command: str):
        self.directory = directory
        self.config = config
        self.command = command
        directory.mkdir(parents=True, exist_ok=True)

    @property
    def header(self) -> str:
        return f"# restrace {self.command} config={self.config.fingerprint()} model={self.config.model().fingerprint()}\n"

    def csv(self, name: str, columns: Sequence[str], rows) -> Path:
        buf = io.StringIO()
        buf.write(self.header)
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_number(x) for x in row])
        path = self.directory / name
        path.write_bytes(buf.getvalue().encode())
        return path

    def json(self, name: str, payload: dict) -> Path:
        body = {"command": self.command, "config_fingerprint": self.config.fingerprint(), **payload}
        path = self.directory / name
        path.write_bytes((json.dumps(_plain(body), indent=2, sort_keys=True) + "\n").encode())
        return path


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


# ---------------------------------------------------------------------------
# shared steps


def _resonances(cfg: RunConfig) -> ResonanceSet:
    model = cfg.model()
    if cfg.resonance_file:
        try:
            rs = ResonanceSet.from_json(Path(cfg.resonance_file).read_text())
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read resonance file {cfg.resonance_file}: {exc}") from None
        if rs.dimension != model.dimension:
            raise ConfigError("resonance file was computed for another dimension")
        return rs
    region = full_region(model, cfg.r_min, cfg.r_max)
    return find_resonances(model, region, tol=cfg.quad_tol, root_tol=cfg.root_tol, seed=cfg.seed, workers=cfg.workers)


def resonance_diagnostics(model: BallModel, rs: ResonanceSet, tol: float = 1e-8) -> list[dict]:
    """Entries whose Newton correction ``|p/p'|`` exceeds ``tol * max(1, |lambda|)``."""
    bad = []
    for i, e in enumerate(rs.entries):
        fn = mode_function(model, e.mode)
        g = complex(fn.log_derivative(e.location.r, e.location.theta))
        step = 1.0 / abs(g) if g != 0 else math.inf
        if step > tol * max(1.0, e.location.r):
            bad.append({"index": i, "mode": e.mode, "re": e.value.real, "im": e.value.imag, "newton_step": step})
    return bad


def _fit_window(r_max: float) -> tuple[float, float]:
    return (8.0, min(30.0, r_max)) if r_max >= 16 else (r_max / 4, r_max)


# ---------------------------------------------------------------------------
# commands


def cmd_resonances(cfg: RunConfig, out: Output) -> int:
    model = cfg.model()
    rs = _resonances(cfg)
    lo, hi = _fit_window(rs.region.r_max)
    try:
        exponent = rs.counting_exponent(lo, hi)
    except ValueError:
        exponent = math.nan  # too few zeros to fit
    ceiling = model.dimension
    summary = {
        "count": len(rs),
        "total_multiplicity": rs.total_multiplicity(),
        "counting_exponent": exponent,
        "fit_window": [lo, hi],
        "exponent_ceiling": ceiling,
        "exponent_within_ceiling": bool(math.isnan(exponent) or exponent <= ceiling + 0.3),
        "higher_multiplicity": len(rs.flagged),
    }
    if not model.odd:
        summary["symmetry_defect"] = rs.symmetry_defect()
        summary["symmetric"] = bool(rs.symmetry_defect() <= 1e-8)
    fp = model.fingerprint()
    out.csv(
        "resonances.csv",
        ["r", "theta", "re", "im", "multiplicity", "mode", "weight", "model_fingerprint"],
        ([rec["r"], rec["theta"], rec["re"], rec["im"], rec["multiplicity"], rec["mode"], rec["weight"], fp] for rec in rs.records()),
    )
    data = json.loads(rs.to_json())
    out.json("resonances.json", {**data, "summary": summary})
    ok = summary["exponent_within_ceiling"] and summary.get("symmetric", True)
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_verify_poisson(cfg: RunConfig, out: Output) -> int:
    model = cfg.model()
    grid = cfg.time_grid()
    rs = _resonances(cfg)
    diagnostics = resonance_diagnostics(model, rs)
    rho = None if model.odd else cfg.rho
    cutoffs = [None] if model.odd else [cfg.psi(), CutoffFunction.bump(2 * cfg.psi_plateau, 2 * cfg.psi_support)]
    rows = []
    agree = tight = invariant = True
    for t in grid:
        bk = wave_trace_bk(model, float(t), lambda_max=cfg.lambda_max)
        sides = [wave_trace_resonance_side(model, float(t), rs, psi=p, rho=rho, tail_limit=math.inf) for p in cutoffs]
        res = sides[0]
        bound = bk.error + res.error
        diff = bk.value - res.value
        ok = abs(diff) <= bound
        rel = bound / abs(bk.value) if bk.value else math.inf
        shift = max(abs((bk.value - s.value) - diff) for s in sides)
        inv = shift <= bound
        agree &= ok
        tight &= rel < cfg.relative_bound
        invariant &= inv
        rows.append([t, bk.value, bk.error, res.value, res.error, res.tail_bound, diff, ok, rel, shift])
    out.csv(
        "verify_poisson.csv",
        ["t", "birman_krein", "birman_krein_error", "resonance_side", "resonance_error", "tail_bound", "difference", "agree", "relative_bound", "cutoff_shift"],
        rows,
    )
    failing = [r[0] for r in rows if not r[7] or r[8] >= cfg.relative_bound]
    summary = {
        "model": model.describe(),
        "resonances": len(rs),
        "truncation_radius": rs.region.r_max if rs.region is not None else None,
        "cutoffs": [p.identifier for p in cutoffs if p is not None],
        "agreement": agree,
        "bounds_tight": tight,
        "cutoff_invariant": invariant,
        "failing_times": failing,
        "resonance_diagnostics": diagnostics,
    }
    out.json("verify_poisson.json", summary)
    return EXIT_PASS if agree and tight and invariant and not diagnostics else EXIT_FAIL


def cmd_heat(cfg: RunConfig, out: Output) -> int:
    model = cfg.model()
    n = model.dimension
    if n == 2:
        raise ConfigError("the heat-trace leading term needs dimension 3 or 4")
    ts = np.geomspace(cfg.heat_t_min, cfg.heat_t_max, cfg.heat_points)
    samples = [heat_trace(model, float(t)) for t in ts]
    vals = np.array([s.value for s in samples])
    fit = fit_low_energy(model, (0.0, cfg.fit_window))
    half = fit_low_energy(model, (0.0, 0.5 * cfg.fit_window))
    slope = float(np.polyfit(np.log(ts), np.log(np.abs(vals)), 1)[0])
    target = -(n / 2 - 1)
    coeff = 0.5 * math.gamma(n / 2 - 1) * fit.f00
    ref = heat_trace(model, cfg.heat_reference).value
    ratio = ref / (coeff * cfg.heat_reference ** target)
    out.csv("heat.csv", ["t", "heat_trace", "error", "leading_term"], ([s.t, s.value, s.error, coeff * s.t ** target] for s in samples))
    summary = {
        "model": model.describe(),
        "slope": slope,
        "expected_slope": target,
        "slope_ok": abs(slope - target) <= 0.05,
        "f00": fit.f00,
        "f00_residual": fit.residual,
        "f00_half_window": half.f00,
        "f00_stable": abs(fit.f00 - half.f00) < 3 * fit.residual,
        "low_energy_slope": fit.slope,
        "reference_time": cfg.heat_reference,
        "prefactor_ratio": ratio,
        "prefactor_ok": abs(ratio - 1) <= 0.05,
        "sign_ok": bool(np.sign(vals[-1]) == np.sign(fit.f00)),
    }
    out.json("heat.json", summary)
    ok = summary["slope_ok"] and summary["prefactor_ok"] and summary["sign_ok"] and summary["f00_stable"]
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_theorem4(cfg: RunConfig, out: Output) -> int:
    model = cfg.model()
    if model.dimension == 2:
        raise ConfigError("no decay law is checked in two dimensions")
    grid = np.linspace(cfg.decay_t_min, cfg.decay_t_max, cfg.decay_points)
    orders = cfg.derivative_orders()
    for k in orders:
        t_k = decay_threshold(model.dimension, cfg.gamma, k)
        if grid[0] <= t_k:
            raise ConfigError(f"time grid starts at {grid[0]:g}, below t_k = {t_k:.6g} for k = {k}")
    rs = _resonances(cfg)
    reports = [verify_theorem4(model, rs, cfg.gamma, k, grid, cfg.lambda_max) for k in orders]
    out.csv(
        "theorem4.csv",
        ["t", "derivative", "difference", "error"],
        ([t, r.derivative, d, e] for r in reports for t, d, e in zip(r.t, r.difference, r.error)),
    )
    out.json("theorem4.json", {"model": model.describe(), "reports": [r.record() for r in reports]})
    return EXIT_PASS if all(r.passed for r in reports) else EXIT_FAIL


def _synthetic_round_trip(cfg: RunConfig) -> tuple[float, float]:
    rng = np.random.default_rng(cfg.seed)
    r = cfg.r_max * np.sqrt(rng.uniform(0.05, 1.0, 200))
    zeros = r * np.exp(1j * rng.uniform(0.2, math.pi - 0.2, 200))
    prod = WeierstrassProduct(cfg.genus, zeros, np.ones(zeros.size))

    def g(lam):
        return 0.3j * lam ** 3 / cfg.lam_max ** 2 + 0.1 * lam

    def g_prime(lam):
        return 0.9j * lam ** 2 / cfg.lam_max ** 2 + 0.1

    lam = np.linspace(cfg.lam_min, cfg.lam_max, 2000)
    log_s, dlog = synthetic_determinant(g, g_prime, prod, lam)
    res = extract_residual(None, prod, lam, log_s=log_s, s_log_derivative=dlog)
    offset = 2j * math.pi * np.rint((res.g[0] - g(lam[0])).imag / (2 * math.pi))
    return float(np.max(np.abs(res.g - offset - g(lam)))), float(np.max(np.abs(res.g_prime - g_prime(lam))))


def cmd_factorize(cfg: RunConfig, out: Output) -> int:
    g_err, gp_err = _synthetic_round_trip(cfg)
    summary: dict[str, Any] = {"synthetic_g_error": g_err, "synthetic_gprime_error": gp_err, "synthetic_ok": max(g_err, gp_err) < 1e-9}
    if cfg.synthetic:
        out.json("factorize.json", summary)
        return EXIT_PASS if summary["synthetic_ok"] else EXIT_FAIL
    model = cfg.model()
    rs = _resonances(cfg)
    if not model.odd:
        rs = rs.restrict(ConeRegion(cfg.rho, cfg.r_min, rs.region.r_max))
    r_max = rs.region.r_max
    exponents = {}
    residual = None
    for radius in (0.5 * r_max, r_max):
        prod = WeierstrassProduct.from_resonances(rs, cfg.genus, truncation_radius=radius)
        residual = residual_on_interval(model, prod, cfg.lam_min, cfg.lam_max, steps_per_radian=cfg.steps_per_radian, truncation_tol=cfg.truncation_tol)
        exponents[radius] = residual.growth_exponent(1)
    e_half, e_full = exponents[0.5 * r_max], exponents[r_max]
    change = abs(e_full - e_half) / abs(e_half) if e_half else math.inf
    out.csv(
        "factorize.csv",
        ["lambda", "g_re", "g_im", "gprime_re", "gprime_im"],
        ([l.real, g.real, g.imag, gp.real, gp.imag] for l, g, gp in zip(residual.lam, residual.g, residual.g_prime)),
    )
    summary.update(
        {
            "model": model.describe(),
            "genus": cfg.genus,
            "truncation_radii": [0.5 * r_max, r_max],
            "growth_exponents": [e_half, e_full],
            "relative_change": change,
            "stable": bool(math.isfinite(e_full) and change < 0.2),
        }
    )
    out.json("factorize.json", summary)
    return EXIT_PASS if summary["synthetic_ok"] and summary["stable"] else EXIT_FAIL


COMMANDS = {
    "resonances": cmd_resonances,
    "verify-poisson": cmd_verify_poisson,
    "heat": cmd_heat,
    "theorem4": cmd_theorem4,
    "factorize": cmd_factorize,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="restrace", description="Resonance trace-formula checks on exterior balls.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("print-defaults", help="print the default configuration")
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="INI configuration file")
        p.add_argument("--workers", type=int, help="worker processes for resonance searches")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="seed for contour perturbations")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    if args.config is not None:
        try:
            cfg = RunConfig.from_text(args.config.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from None
    changes = {}
    if args.workers is not None:
        changes["workers"] = args.workers
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["output"] = str(args.out)
    return cfg.replace(**changes).validate()


def _error_record(kind: str, exc: BaseException) -> str:
    return json.dumps({"error": kind, "type": type(exc).__name__, "message": str(exc)}, sort_keys=True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_USAGE
    if args.command == "print-defaults":
        sys.stdout.write(RunConfig().to_text())
        return EXIT_PASS
    try:
        cfg = load_config(args)
        out = Output(Path(cfg.output), cfg, args.command)
        return COMMANDS[args.command](cfg, out)
    except (ConfigError, ValueError) as exc:
        print(_error_record("usage", exc), file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, RuntimeError) as exc:
        print(_error_record("numerical", exc), file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
