"""Forward scattering: Lippmann-Schwinger solve, far field, partial-wave oracle."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.sparse.linalg import LinearOperator, gmres

from .ballgrid import ComplexField, plane_wave
from .errors import ArgumentError, SolverError
from .potential import green_operator
from .sphere import SphereQuadrature, analyze

# far-field quadrature is evaluated in blocks of this many grid nodes
_CHUNK = 8192


@dataclass
class FarField:
    quad: SphereQuadrature
    values: np.ndarray
    spectrum: object = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.quad.size,):
            raise ArgumentError("far-field value count must equal the node count")
        if not np.all(np.isfinite(self.values)):
            raise ArgumentError("far-field values must be finite")

    def norm(self):
        return self.quad.norm(self.values)


@dataclass
class ScatteringSolution:
    u: ComplexField
    iterations: int
    relative_residual: float
    history: list = field(default_factory=list)


def solve_scattering(q, grid, cfg, tol=1e-8, maxiter=2000, restart=100):
    """Solve u = u0 - G(q u) on the grid nodes by restarted GMRES."""
    if q.grid is not grid:
        raise ArgumentError("q must live on the grid passed to solve_scattering")
    u0 = plane_wave(grid.points, cfg.k, cfg.alpha_vector)
    qv = q.values
    if not np.any(qv):
        return ScatteringSolution(ComplexField(grid, u0), 0, 0.0, [0.0])
    op = green_operator(grid, cfg.k)
    n = grid.size

    def matvec(x):
        return x + op.apply(qv * x)

    A = LinearOperator((n, n), matvec=matvec, dtype=complex)
    history = []
    u0_norm = np.linalg.norm(u0)

    def record(pr_norm):
        history.append(float(pr_norm))

    u, info = gmres(
        A,
        u0,
        x0=u0.copy(),
        rtol=tol,
        atol=0.0,
        restart=min(restart, n),
        maxiter=maxiter,
        callback=record,
        callback_type="pr_norm",
    )
    rel = float(np.linalg.norm(matvec(u) - u0) / u0_norm)
    if info != 0 or rel > tol:
        raise SolverError(
            f"GMRES stopped with relative residual {rel:.3e} > {tol:.1e} (info={info})",
            history=history,
        )
    return ScatteringSolution(ComplexField(grid, u), len(history), rel, history)


def far_field(q, u, quad, cfg, lmax=None):
    """A(beta) = -(1/4pi) int e^{-ik beta.x} q u dx by ball-grid quadrature."""
    grid = q.grid
    src = grid.weights * q.values * u.values
    dirs = quad.directions
    vals = np.zeros(quad.size, dtype=complex)
    for start in range(0, grid.size, _CHUNK):
        sl = slice(start, start + _CHUNK)
        if not np.any(src[sl]):
            continue
        vals += np.exp(-1j * cfg.k * (dirs @ grid.points[sl].T)) @ src[sl]
    vals *= -1.0 / (4.0 * math.pi)
    lmax = quad.max_degree if lmax is None else lmax
    return FarField(quad, vals, analyze(vals, quad, lmax))


# ---------------------------------------------------------------------------
# partial-wave oracle for piecewise-constant radial potentials


@dataclass(frozen=True)
class RadialPotentialSpec:
    """q(r) = values[j] on shells edges[j-1] < r <= edges[j], with edges[-1] = 0 implied."""

    edges: tuple
    values: tuple

    def __post_init__(self):
        if len(self.edges) != len(self.values) or not self.edges:
            raise ArgumentError("need one value per shell")
        prev = 0.0
        for e in self.edges:
            if not e > prev:
                raise ArgumentError("shell edges must be strictly increasing and positive")
            prev = e
        if not all(np.isfinite(complex(v)) for v in self.values):
            raise ArgumentError("shell values must be finite")

    @property
    def radius(self):
        return self.edges[-1]

    def __call__(self, points):
        r = np.linalg.norm(np.asarray(points, dtype=float), axis=-1)
        out = np.zeros(r.shape, dtype=complex)
        lo = 0.0
        for e, v in zip(self.edges, self.values):
            out[(r > lo) & (r <= e) | ((lo == 0.0) & (r == 0.0))] = v
            lo = e
        return out


def default_partial_wave_lmax(k, a):
    return 3 + math.ceil(k * a) + 10


def _jy(l, z):
    return (
        special.spherical_jn(l, z),
        special.spherical_yn(l, z),
        special.spherical_jn(l, z, derivative=True),
        special.spherical_yn(l, z, derivative=True),
    )


@dataclass
class PartialWaves:
    k: float
    spec: RadialPotentialSpec
    amplitudes: np.ndarray  # a_l = (S_l - 1) / 2i
    shells: list  # per l: list of (kappa, A, B) with R_l = A j_l(kappa r) + B y_l(kappa r)


def partial_wave_coefficients(spec, k, lmax):
    """Match regular interior solutions to j_l + i a_l h_l outside, shell by shell."""
    kappas = [np.sqrt(complex(k * k - v)) for v in spec.values]
    amps = np.zeros(lmax + 1, dtype=complex)
    shells = []
    for l in range(lmax + 1):
        coeffs = [(kappas[0], 1.0 + 0j, 0.0 + 0j)]
        for j in range(1, len(kappas)):
            r = spec.edges[j - 1]
            kap, A, B = coeffs[-1]
            jz, yz, djz, dyz = _jy(l, kap * r)
            val = A * jz + B * yz
            der = kap * (A * djz + B * dyz)
            kn = kappas[j]
            jn, yn, djn, dyn = _jy(l, kn * r)
            M = np.array([[jn, yn], [kn * djn, kn * dyn]])
            An, Bn = np.linalg.solve(M, [val, der])
            coeffs.append((kn, An, Bn))
        R = spec.radius
        kap, A, B = coeffs[-1]
        jz, yz, djz, dyz = _jy(l, kap * R)
        val = A * jz + B * yz
        der = kap * (A * djz + B * dyz)
        jo, yo, djo, dyo = _jy(l, k * R)
        ho, dho = jo + 1j * yo, djo + 1j * dyo
        # c * val - i a h = j ;  c * der - i a k h' = k j'
        M = np.array([[val, -1j * ho], [der, -1j * k * dho]])
        if abs(np.linalg.det(M)) < 1e-300:
            raise ArgumentError(f"partial-wave matching is singular at l = {l}")
        c, a = np.linalg.solve(M, [jo, k * djo])
        amps[l] = a
        shells.append([(kp, c * Ap, c * Bp) for kp, Ap, Bp in coeffs])
    return PartialWaves(float(k), spec, amps, shells)


def partial_wave_amplitude(spec, cfg, quad, lmax=None):
    """A(beta) = (1/k) sum_l (2l+1) a_l P_l(beta . alpha)."""
    lmax = default_partial_wave_lmax(cfg.k, cfg.a) if lmax is None else lmax
    pw = partial_wave_coefficients(spec, cfg.k, lmax)
    cosg = quad.directions @ cfg.alpha_vector
    vals = np.zeros(quad.size, dtype=complex)
    for l in range(lmax + 1):
        vals += (2 * l + 1) * pw.amplitudes[l] * special.eval_legendre(l, cosg)
    vals /= cfg.k
    return FarField(quad, vals, analyze(vals, quad, quad.max_degree))


def partial_wave_field(spec, cfg, points, lmax=None):
    """Total field u(x) = sum_l (2l+1) i**l R_l(r) P_l(cos gamma)."""
    lmax = default_partial_wave_lmax(cfg.k, cfg.a) if lmax is None else lmax
    pw = partial_wave_coefficients(spec, cfg.k, lmax)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    r = np.linalg.norm(pts, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosg = np.where(r > 0, (pts @ cfg.alpha_vector) / np.where(r > 0, r, 1.0), 1.0)
    edges = np.asarray(spec.edges)
    shell = np.searchsorted(edges, r, side="left")
    out = np.zeros(r.size, dtype=complex)
    for l in range(lmax + 1):
        radial = np.zeros(r.size, dtype=complex)
        for j, (kap, A, B) in enumerate(pw.shells[l]):
            sel = shell == j
            if not sel.any():
                continue
            z = kap * r[sel]
            radial[sel] = A * special.spherical_jn(l, z)
            if B != 0:
                radial[sel] += B * special.spherical_yn(l, z)
        outside = shell >= len(edges)
        if outside.any():
            z = cfg.k * r[outside]
            jo = special.spherical_jn(l, z)
            radial[outside] = jo + 1j * pw.amplitudes[l] * (jo + 1j * special.spherical_yn(l, z))
        out += (2 * l + 1) * (1j**l) * radial * special.eval_legendre(l, cosg)
    return out
