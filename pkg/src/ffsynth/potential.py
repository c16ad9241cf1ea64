"""Potentials q = h / (u0 - G h) and the near-zero perturbation of h.

Given a source density h, the field ``psi = u0 - G h`` is the total field the
potential ``q = h / psi`` would produce, because ``q psi = h`` turns
``psi = u0 - G(q psi)`` into the Lippmann-Schwinger equation. Where psi nearly
vanishes, h is zeroed on the set ``{|psi| < delta}`` and psi recomputed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .ballgrid import (
    BallGrid,
    ComplexField,
    GreenOperator,
    RadialTable,
    plane_wave,
    radial_green_integral,
)
from .errors import ArgumentError, ConditionError, PerturbationError
from .specfun import angles, sph_harm_table
from .synthesis import SourceDensity

CONDITION_FLOOR = 1e-6

# above this many distinct radii, volume_potential interpolates tabulated
# radial integrals instead of integrating at each radius
_TABLE_THRESHOLD = 4096


@lru_cache(maxsize=4)
def green_operator(grid, k):
    """Cached :class:`GreenOperator` for a grid and wavenumber."""
    return GreenOperator(grid, k)


def volume_potential(h, x, cfg):
    """(G h)(x) = int_D e^{ik|x-y|} / (4pi |x-y|) h(y) dy for a radially constant h.

    ``x`` is a single point or an array of shape (N, 3) with |x| <= a.
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    r = np.linalg.norm(pts, axis=1)
    if np.any(r > cfg.a * (1 + 1e-12)):
        raise ArgumentError("volume_potential is evaluated inside the ball |x| <= a")
    L = h.lmax
    if np.unique(r).size > _TABLE_THRESHOLD:
        radial = RadialTable(cfg.k, h.b, cfg.a, L)(r)
    else:
        ru, inv = np.unique(r, return_inverse=True)
        radial = radial_green_integral(cfg.k, ru, h.b, L)[:, inv]
    theta, phi = angles(pts)
    ylm = sph_harm_table(L, theta, phi)
    l = h.spectrum.degrees()
    vals = 1j * cfg.k * np.einsum("q,qn,qn->n", h.spectrum.coeffs, ylm, radial[l])
    return complex(vals[0]) if single else vals


def sample_source(h, grid):
    """Point values of h on the grid as a :class:`ComplexField`."""
    if isinstance(h, ComplexField):
        return h
    return ComplexField(grid, h(grid.points))


def denominator_field(h, grid, cfg):
    """psi = u0 - G h at every node of ``grid``."""
    if isinstance(h, SourceDensity):
        if h.b > grid.a * (1 + 1e-12):
            raise ArgumentError(f"grid radius {grid.a} is smaller than the support radius {h.b}")
        gh = volume_potential(h, grid.points, cfg)
    else:
        gh = green_operator(grid, cfg.k).apply(h.values)
    u0 = plane_wave(grid.points, cfg.k, cfg.alpha_vector)
    return ComplexField(grid, u0 - gh)


@dataclass
class ConditionCheck:
    ok: bool
    min_abs: float
    index: int
    location: np.ndarray

    def __bool__(self):
        return self.ok


def check_condition(psi, threshold, support=None):
    """Is min |psi| >= threshold over the nodes (optionally restricted to ``support``)?"""
    mag = np.abs(psi.values)
    if support is not None:
        mag = np.where(support, mag, np.inf)
    if not np.isfinite(mag).any():
        return ConditionCheck(True, math.inf, -1, np.full(3, np.nan))
    i = int(np.argmin(mag))
    return ConditionCheck(bool(mag[i] >= threshold), float(mag[i]), i, psi.grid.points[i])


def potential_from_source(h, psi, tau=CONDITION_FLOOR):
    """q = h / psi on the support of h, zero elsewhere."""
    hv = sample_source(h, psi.grid).values
    support = hv != 0
    check = check_condition(psi, tau, support)
    if not check:
        raise ConditionError(
            f"min |psi| = {check.min_abs:.3e} on the support of h is below the floor {tau:.1e}; "
            "perturb the source (perturb_source) before forming q",
            min_abs=check.min_abs,
            location=check.location,
        )
    q = np.zeros_like(hv)
    q[support] = hv[support] / psi.values[support]
    return ComplexField(psi.grid, q)


def near_zero_volume(psi, delta):
    """Quadrature measure of {x : |psi(x)| < delta}."""
    if delta <= 0:
        raise ArgumentError(f"delta must be positive, got {delta}")
    return float(np.sum(psi.grid.weights[np.abs(psi.values) < delta]))


@dataclass
class PerturbationRecord:
    delta: float
    zeroed_nodes: int
    near_zero_volume: float
    zeroed_volume: float
    perturbation_norm: float
    min_abs_psi: float
    rounds: int

    def as_dict(self):
        return asdict(self)


def perturb_source(h, delta, grid, cfg, max_rounds=5):
    """Zero h where |psi| < delta, recompute psi, and repeat until min |psi| >= delta/2.

    Returns ``(h_delta, psi_delta, record)`` with both fields on ``grid``.
    """
    if delta <= 0:
        raise ArgumentError(f"delta must be positive, got {delta}")
    if not isinstance(grid, BallGrid):
        raise ArgumentError("perturb_source needs a product BallGrid")
    hv = sample_source(h, grid).values
    psi = denominator_field(h, grid, cfg)
    vol0 = near_zero_volume(psi, delta)
    op = green_operator(grid, cfg.k)
    u0 = plane_wave(grid.points, cfg.k, cfg.alpha_vector)

    zeroed = (hv != 0) & (np.abs(psi.values) < delta)
    psi_d = psi
    rounds = 0
    while True:
        hd = np.where(zeroed, 0.0, hv)
        if rounds > 0 or zeroed.any():
            psi_d = ComplexField(grid, u0 - op.apply(hd))
        support = hd != 0
        mag = np.abs(psi_d.values)
        min_abs = float(mag[support].min()) if support.any() else math.inf
        record = PerturbationRecord(
            delta=float(delta),
            zeroed_nodes=int(zeroed.sum()),
            near_zero_volume=vol0,
            zeroed_volume=float(grid.weights[zeroed].sum()),
            perturbation_norm=math.sqrt(float(np.sum(grid.weights * np.abs(hv - hd) ** 2))),
            min_abs_psi=min_abs,
            rounds=rounds,
        )
        if min_abs >= delta / 2:
            return ComplexField(grid, hd), psi_d, record
        if rounds >= max_rounds:
            break
        grow = support & (mag < delta)
        if not grow.any():
            break
        zeroed = zeroed | grow
        rounds += 1
    raise PerturbationError(
        f"min |psi_delta| = {record.min_abs_psi:.3e} stayed below delta/2 = {delta / 2:.3e} "
        f"after {record.rounds} rounds; the near-zero set looks non-generic",
        record=record,
    )


# ---------------------------------------------------------------------------
# potential file format: header of ``# key = value`` lines, then x,y,z,re_q,im_q


def format_potential(q, cfg):
    g = q.grid
    alpha = cfg.alpha
    header = {
        "k": repr(cfg.k),
        "alpha_theta": repr(alpha.theta),
        "alpha_phi": repr(alpha.phi),
        "a": repr(g.a),
        "b": repr(cfg.b),
        "radial_order": str(g.radial_order),
        "polar_order": str(g.polar_order),
        "breaks": " ".join(repr(c) for c in g.breaks),
    }
    lines = [f"# {key} = {val}" for key, val in header.items()]
    lines.append("x,y,z,re_q,im_q")
    for p, v in zip(g.points, q.values):
        lines.append(f"{p[0]:.17g},{p[1]:.17g},{p[2]:.17g},{v.real:.17g},{v.imag:.17g}")
    return "\n".join(lines) + "\n"


def parse_potential(text):
    """Returns ``(header, points, values)``."""
    header = {}
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            header[key.strip()] = val.strip()
            continue
        if line.startswith("x,"):
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ArgumentError(f"line {lineno}: expected x,y,z,re_q,im_q")
        rows.append([float(p) for p in parts])
    data = np.array(rows, dtype=float).reshape(-1, 5)
    return header, data[:, :3], data[:, 3] + 1j * data[:, 4]
