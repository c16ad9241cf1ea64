"""End-to-end synthesis run driven by a flat ``key = value`` configuration file."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import sphere
from .ballgrid import ComplexField, build_ball_grid
from .errors import (
    ArgumentError,
    ConfigError,
    PerturbationError,
    SolverError,
    SynthError,
)
from .forward import far_field, solve_scattering
from .potential import (
    CONDITION_FLOOR,
    check_condition,
    denominator_field,
    format_potential,
    parse_potential,
    perturb_source,
    potential_from_source,
    sample_source,
)
from .specfun import Direction
from .sphere import HarmonicSpectrum
from .synthesis import (
    IllConditionedError,
    WaveConfig,
    amplification,
    born_residual,
    smallness_bound,
    source_from_pattern,
)

DEFAULTS = {
    "alpha_theta": 0.0,
    "alpha_phi": 0.0,
    "a": 1.0,
    "radial_order": 24,
    "polar_order": 12,
    "delta": 1e-2,
    "tau": CONDITION_FLOOR,
    "solver_tol": 1e-8,
}

FLOAT_KEYS = {"k", "alpha_theta", "alpha_phi", "epsilon", "b", "a", "delta", "tau", "solver_tol"}
INT_KEYS = {"L", "radial_order", "polar_order"}
PATH_KEYS = {"f_coeffs_path", "f_samples_path"}
KNOWN_KEYS = FLOAT_KEYS | INT_KEYS | PATH_KEYS

EXIT_OK = 0
EXIT_RESIDUAL = 1
EXIT_CONFIG = 2
EXIT_PERTURBATION = 3
EXIT_SOLVER = 4
EXIT_STAGE = 5


class StageError(SynthError):
    """A pipeline stage failed; carries the stage name and the CLI exit code."""

    def __init__(self, stage, cause, exit_code=EXIT_STAGE):
        super().__init__(f"stage {stage}: {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = exit_code


@dataclass
class RunConfig:
    wave: WaveConfig
    f: HarmonicSpectrum
    L: int | None
    radial_order: int
    polar_order: int
    delta: float
    tau: float
    solver_tol: float
    source: str
    effective: dict = field(default_factory=dict)


def parse_config_text(text):
    """Flat ``key = value`` pairs; ``#`` starts a comment."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        raw[key.strip()] = val.strip()
    return raw


def validate_config(raw, base_dir="."):
    """Check every constraint, load f, and fill in defaults."""
    problems = []
    unknown = sorted(set(raw) - KNOWN_KEYS)
    if unknown:
        problems.append(f"unknown keys: {', '.join(unknown)}")
    values = dict(DEFAULTS)
    for key, val in raw.items():
        try:
            if key in FLOAT_KEYS:
                values[key] = float(val)
            elif key in INT_KEYS:
                values[key] = None if str(val).lower() == "auto" else int(val)
            elif key in PATH_KEYS:
                values[key] = str(val)
        except (TypeError, ValueError):
            problems.append(f"{key}: cannot parse {val!r}")
    values.setdefault("b", min(values["a"], 1.0))

    if "k" not in values:
        problems.append("k: required")
    elif not values["k"] > 0:
        problems.append(f"k: must be > 0, got {values['k']}")
    if "epsilon" not in values:
        problems.append("epsilon: required")
    elif not values["epsilon"] > 0:
        problems.append(f"epsilon: must be > 0, got {values['epsilon']}")
    if not values["a"] > 0:
        problems.append(f"a: must be > 0, got {values['a']}")
    if not 0 < values["b"] <= 1:
        problems.append(f"b: must lie in (0, 1], got {values['b']}")
    if values["b"] > values["a"]:
        problems.append(f"b: must not exceed a ({values['b']} > {values['a']})")
    for key in ("radial_order", "polar_order"):
        if values[key] is None or values[key] < 1:
            problems.append(f"{key}: must be a positive integer")
    for key in ("delta", "tau", "solver_tol"):
        if not values[key] > 0:
            problems.append(f"{key}: must be > 0, got {values[key]}")
    L = values.get("L")
    if L is not None and L < 0:
        problems.append(f"L: must be >= 0, got {L}")

    has_c, has_s = "f_coeffs_path" in values, "f_samples_path" in values
    if not (has_c or has_s):
        problems.append("f: one of f_coeffs_path or f_samples_path is required")
    elif has_c and has_s:
        problems.append("f: give only one of f_coeffs_path and f_samples_path")
    if problems:
        raise ConfigError(problems)

    base = Path(base_dir)
    f = None
    try:
        if has_c:
            path = base / values["f_coeffs_path"]
            f = sphere.parse_spectrum(path.read_text())
            source = f"coefficients:{values['f_coeffs_path']}"
        else:
            path = base / values["f_samples_path"]
            quad, samples = sphere.parse_samples(path.read_text())
            deg = quad.max_degree if L is None else L
            if quad.n < deg + 1:
                raise ConfigError(
                    f"f_samples_path: polar order {quad.n} of the samples is too low for "
                    f"L = {deg}; need polar order >= L + 1 = {deg + 1}"
                )
            f = sphere.analyze(samples, quad, deg)
            source = f"samples:{values['f_samples_path']} (polar order {quad.n})"
    except OSError as exc:
        raise ConfigError(f"f: cannot read {exc.filename}") from exc
    except ArgumentError as exc:
        raise ConfigError(f"f: {exc}") from exc

    if L is not None and L > f.lmax:
        problems.append(f"L: {L} exceeds the degree {f.lmax} of f")
    if values["polar_order"] < f.lmax + 1:
        problems.append(
            f"polar_order: {values['polar_order']} cannot resolve f of degree {f.lmax}; "
            f"need polar_order >= {f.lmax + 1}"
        )
    if problems:
        raise ConfigError(problems)

    wave = WaveConfig(
        k=values["k"],
        alpha=Direction(values["alpha_theta"], values["alpha_phi"]),
        epsilon=values["epsilon"],
        b=values["b"],
        a=values["a"],
    )
    effective = {
        key: values[key]
        for key in (
            "k", "alpha_theta", "alpha_phi", "epsilon", "b", "a",
            "radial_order", "polar_order", "delta", "tau", "solver_tol",
        )
    }
    effective["L"] = "auto" if L is None else L
    effective["f"] = source
    return RunConfig(
        wave=wave,
        f=f,
        L=L,
        radial_order=values["radial_order"],
        polar_order=values["polar_order"],
        delta=values["delta"],
        tau=values["tau"],
        solver_tol=values["solver_tol"],
        source=source,
        effective=effective,
    )


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}") from exc
    return validate_config(parse_config_text(text), base_dir=path.parent)


@dataclass
class SynthesisReport:
    L: int
    born_residual: float
    smallness_bound: float
    certified: bool
    min_abs_psi: float
    final_residual: float
    epsilon: float
    radial_order: int
    polar_order: int
    nodes: int
    max_abs_q: float
    solver_iterations: int
    solver_residual: float
    perturbation: object = None
    timings: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.final_residual < self.epsilon

    def as_pairs(self):
        pairs = [
            ("L", self.L),
            ("born_residual", self.born_residual),
            ("smallness_bound", self.smallness_bound),
            ("certified", self.certified),
            ("min_abs_psi", self.min_abs_psi),
            ("max_abs_q", self.max_abs_q),
            ("final_residual", self.final_residual),
            ("epsilon", self.epsilon),
            ("passed", self.passed),
            ("radial_order", self.radial_order),
            ("polar_order", self.polar_order),
            ("nodes", self.nodes),
            ("solver_iterations", self.solver_iterations),
            ("solver_residual", self.solver_residual),
            ("perturbed", self.perturbation is not None),
        ]
        if self.perturbation is not None:
            pairs += [(f"perturbation_{k}", v) for k, v in self.perturbation.as_dict().items()]
        pairs += [(f"time_{k}", v) for k, v in self.timings.items()]
        return pairs

    def to_kv(self):
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.as_pairs())

    def to_text(self):
        lines = [
            "Far-field synthesis report",
            "",
            f"  truncation degree L          {self.L}",
            f"  Born residual                {self.born_residual:.6e}",
            f"  smallness bound              {self.smallness_bound:.6e}"
            + ("  (certified)" if self.certified else "  (not certified)"),
            f"  min |u0 - G h| on support    {self.min_abs_psi:.6e}",
            f"  max |q|                      {self.max_abs_q:.6e}",
        ]
        if self.perturbation is not None:
            p = self.perturbation
            lines += [
                f"  perturbation delta           {p.delta:.3e}",
                f"    zeroed nodes               {p.zeroed_nodes}",
                f"    near-zero volume           {p.near_zero_volume:.6e}",
                f"    ||h - h_delta||            {p.perturbation_norm:.6e}",
                f"    min |psi_delta| on support {p.min_abs_psi:.6e}",
                f"    rounds                     {p.rounds}",
            ]
        lines += [
            f"  grid                         radial {self.radial_order} x polar "
            f"{self.polar_order} ({self.nodes} nodes)",
            f"  solver                       {self.solver_iterations} iterations, "
            f"relative residual {self.solver_residual:.3e}",
            f"  final residual ||f - A_q||   {self.final_residual:.6e}",
            f"  epsilon                      {self.epsilon:.6e}",
            f"  result                       {'PASS' if self.passed else 'FAIL'}",
            "",
            "  timings [s]: " + ", ".join(f"{k} {v:.2f}" for k, v in self.timings.items()),
        ]
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class RunArtifacts:
    report: SynthesisReport
    q: ComplexField
    far: object
    h_spectrum: HarmonicSpectrum
    f: HarmonicSpectrum
    grid: object
    solver_log: list


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PerturbationError as exc:
        raise StageError(name, exc, EXIT_PERTURBATION) from exc
    except SolverError as exc:
        raise StageError(name, exc, EXIT_SOLVER) from exc
    except SynthError as exc:
        raise StageError(name, exc, EXIT_STAGE) from exc


def synthesize(run):
    """Run the whole pipeline in memory; see :func:`run_synthesis` for file output."""
    cfg = run.wave
    timings = {}
    clock = time.perf_counter()

    def lap(name):
        nonlocal clock
        now = time.perf_counter()
        timings[name] = now - clock
        clock = now

    f = run.f
    L = run.L if run.L is not None else sphere.choose_truncation(f, cfg.epsilon / math.sqrt(2.0))
    h = _stage("source", source_from_pattern, f, cfg, L)
    born = born_residual(f, h, cfg)
    bound = smallness_bound(h, cfg)
    certified = bound < 1.0
    lap("source")

    grid = build_ball_grid(cfg.a, run.radial_order, run.polar_order, breaks=(cfg.b,))
    psi = _stage("denominator", denominator_field, h, grid, cfg)
    support = sample_source(h, grid).values != 0
    min_psi = check_condition(psi, run.tau, support).min_abs
    record = None
    if certified:
        q = _stage("potential", potential_from_source, h, psi, run.tau)
    else:
        h_d, psi_d, record = _stage("perturbation", perturb_source, h, run.delta, grid, cfg)
        q = _stage("potential", potential_from_source, h_d, psi_d, run.tau)
    lap("potential")

    sol = _stage("solve", solve_scattering, q, grid, cfg, run.solver_tol)
    lap("solve")

    quad = sphere.build_sphere_quadrature(run.polar_order)
    far = _stage("far_field", far_field, q, sol.u, quad, cfg)
    final = quad.norm(sphere.synthesize_on_sphere(f, quad) - far.values)
    lap("far_field")

    report = SynthesisReport(
        L=L,
        born_residual=born,
        smallness_bound=bound,
        certified=certified,
        min_abs_psi=min_psi,
        final_residual=final,
        epsilon=cfg.epsilon,
        radial_order=run.radial_order,
        polar_order=run.polar_order,
        nodes=grid.size,
        max_abs_q=q.max_abs,
        solver_iterations=sol.iterations,
        solver_residual=sol.relative_residual,
        perturbation=record,
        timings=timings,
    )
    return RunArtifacts(report, q, far, h.spectrum, f, grid, sol.history)


def residual_table(f, cfg):
    """Born residual, tail mass and amplification for every truncation degree."""
    rows = []
    tails = sphere.tail_mass(f)
    amp = amplification(cfg.k, cfg.b, f.lmax)
    for L in range(f.lmax + 1):
        try:
            res = born_residual(f, source_from_pattern(f, cfg, L), cfg)
        except IllConditionedError:
            res = float("nan")
        rows.append((L, res, math.sqrt(tails[L]), amp[L]))
    return rows


def q_radial_profile(q):
    g = q.grid
    mag = np.abs(q.values).reshape(g.shape)
    return [(r, float(m.max()), float(m.mean())) for r, m in zip(g.radii, mag)]


def write_artifacts(art, run, out_dir, plots=False):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "q.csv").write_text(format_potential(art.q, run.wave))
    (out / "farfield.csv").write_text(sphere.format_samples(art.far.quad, art.far.values))
    (out / "farfield_spectrum.csv").write_text(sphere.format_spectrum(art.far.spectrum))
    (out / "f_spectrum.csv").write_text(sphere.format_spectrum(art.f))
    (out / "h_spectrum.csv").write_text(sphere.format_spectrum(art.h_spectrum))
    (out / "report.txt").write_text(art.report.to_text())
    (out / "report.kv").write_text(art.report.to_kv())
    eff = "".join(f"{k} = {v}\n" for k, v in run.effective.items())
    (out / "effective_config.kv").write_text(eff)
    log = [f"iteration {i + 1}: residual {r:.6e}" for i, r in enumerate(art.solver_log)]
    log.append(f"final relative residual {art.report.solver_residual:.6e}")
    (out / "solver.log").write_text("\n".join(log) + "\n")
    if plots:
        rows = residual_table(art.f, run.wave)
        text = "L,born_residual,tail_norm,amplification\n" + "".join(
            f"{L},{res:.17g},{tail:.17g},{amp:.17g}\n" for L, res, tail, amp in rows
        )
        (out / "residual_vs_L.csv").write_text(text)
        prof = q_radial_profile(art.q)
        text = "r,max_abs_q,mean_abs_q\n" + "".join(
            f"{r:.17g},{mx:.17g},{mn:.17g}\n" for r, mx, mn in prof
        )
        (out / "q_radial_profile.csv").write_text(text)


def run_synthesis(config_path, out_dir=None, plots=False):
    """Load a config, synthesise q, verify it, and write every artifact to ``out_dir``."""
    config_path = Path(config_path)
    run = load_config(config_path)
    art = synthesize(run)
    if out_dir is None:
        out_dir = config_path.with_name(config_path.stem + "_run")
    write_artifacts(art, run, out_dir, plots=plots)
    return art.report


@dataclass
class VerifyResult:
    residual: float
    epsilon: float
    iterations: int
    solver_residual: float

    @property
    def passed(self):
        return self.residual < self.epsilon


def read_pattern(path, lmax=None):
    """Read f from a spectrum (``l,m,re,im``) or samples (``theta,phi,re,im``) file."""
    text = Path(path).read_text()
    first = next((ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")), "")
    if first.startswith("theta"):
        quad, samples = sphere.parse_samples(text)
        return sphere.analyze(samples, quad, quad.max_degree if lmax is None else lmax)
    return sphere.parse_spectrum(text)


def load_potential(path):
    """Rebuild the grid recorded in a q file and return ``(q, header)``."""
    header, points, values = parse_potential(Path(path).read_text())
    try:
        a = float(header["a"])
        radial = int(header["radial_order"])
        polar = int(header["polar_order"])
        breaks = tuple(float(c) for c in header.get("breaks", "").split())
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"q file header is incomplete or malformed: {exc}") from exc
    grid = build_ball_grid(a, radial, polar, breaks=breaks)
    if points.shape != grid.points.shape or np.max(np.abs(points - grid.points)) > 1e-12 * a:
        raise ConfigError("q file nodes do not match the grid described in its header")
    return ComplexField(grid, values), header


def verify_potential(q_path, f_path, config_path):
    """Forward-solve the stored q and compare its far field to f."""
    raw = parse_config_text(Path(config_path).read_text())
    run_like = {k: v for k, v in raw.items() if k not in PATH_KEYS}
    try:
        k = float(run_like["k"])
        eps = float(run_like["epsilon"])
        cfg_a = float(run_like.get("a", DEFAULTS["a"]))
        cfg = WaveConfig(
            k=k,
            alpha=Direction(
                float(run_like.get("alpha_theta", DEFAULTS["alpha_theta"])),
                float(run_like.get("alpha_phi", DEFAULTS["alpha_phi"])),
            ),
            epsilon=eps,
            b=float(run_like.get("b", min(cfg_a, 1.0))),
            a=cfg_a,
        )
        tol = float(run_like.get("solver_tol", DEFAULTS["solver_tol"]))
    except KeyError as exc:
        raise ConfigError(f"{exc.args[0]}: required") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    q, header = load_potential(q_path)
    for key, want in (("k", cfg.k), ("alpha_theta", cfg.alpha.theta), ("alpha_phi", cfg.alpha.phi)):
        if key in header and abs(float(header[key]) - want) > 1e-12 * max(1.0, abs(want)):
            raise ConfigError(f"{key}: q file was built for {header[key]}, config says {want}")
    f = _stage("read_pattern", read_pattern, f_path)
    sol = _stage("solve", solve_scattering, q, q.grid, cfg, tol)
    polar = max(q.grid.polar_order, f.lmax + 1)
    quad = sphere.build_sphere_quadrature(polar)
    far = _stage("far_field", far_field, q, sol.u, quad, cfg)
    res = quad.norm(sphere.synthesize_on_sphere(f, quad) - far.values)
    return VerifyResult(res, cfg.epsilon, sol.iterations, sol.relative_residual)
