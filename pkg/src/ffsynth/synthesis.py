"""Source densities whose Born far field matches a prescribed pattern.

A source density here is radially constant inside the ball of radius ``b``
and angularly band-limited::

    h(x) = sum_{l,m} h[l,m] Y[l,m](x/|x|)   for |x| <= b,   0 outside.

Its Born far field ``-(1/4 pi) int e^{-ik beta.x} h(x) dx`` has harmonic
coefficients ``-(-i)**l R_l h[l,m]`` with the radial factor

    R_l = int_0^b r**2 j_l(k r) dr = sqrt(pi / 2k) * g_integral(1, l + 1/2, k, b),

so matching a target pattern f is a diagonal solve per degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .ballgrid import build_ball_grid
from .errors import ArgumentError, IllConditionedError
from .specfun import Direction, g_integral, sph_harm_table, angles
from .sphere import HarmonicSpectrum, parseval_norm

# Largest tolerated amplification |h[l,m] / f[l,m]|; beyond it the degree is
# numerically meaningless in double precision.
AMPLIFICATION_CAP = 1e12


@dataclass(frozen=True)
class WaveConfig:
    """Fixed wavenumber, incident direction, tolerance and geometry."""

    k: float
    alpha: Direction = Direction(0.0, 0.0)
    epsilon: float = 1e-3
    b: float = 1.0
    a: float = 1.0

    def __post_init__(self):
        problems = []
        if not self.k > 0:
            problems.append(f"k must be positive, got {self.k}")
        if not self.epsilon > 0:
            problems.append(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.b <= self.a:
            problems.append(f"need 0 < b <= a, got b={self.b}, a={self.a}")
        if problems:
            raise ArgumentError("; ".join(problems))

    @property
    def alpha_vector(self):
        return self.alpha.vector


def phase(l):
    """Phase sigma_l = i**l in h[l,m] = -sigma_l f[l,m] / R_l.

    Fixed by substituting the plane-wave expansion into the Born residual
    with orthonormal Condon-Shortley harmonics; tests/test_synthesis.py checks
    it against brute-force volume quadrature.
    """
    return 1j**l


@lru_cache(maxsize=256)
def _radial_factors(k, b, lmax):
    return np.array(
        [math.sqrt(math.pi / (2.0 * k)) * g_integral(1.0, l + 0.5, k, b) for l in range(lmax + 1)]
    )


def radial_factors(k, b, lmax):
    """R_l = int_0^b r**2 j_l(k r) dr for l = 0 .. lmax."""
    return _radial_factors(float(k), float(b), int(lmax)).copy()


def amplification(k, b, lmax):
    """|h[l,m] / f[l,m]| = 1 / |R_l| for each degree."""
    return 1.0 / np.abs(radial_factors(k, b, lmax))


@dataclass
class SourceDensity:
    spectrum: HarmonicSpectrum
    b: float

    @property
    def lmax(self):
        return self.spectrum.lmax

    def l2_norm(self):
        """||h||_{L2(D)} = sqrt(b**3 / 3 * sum |h[l,m]|**2)."""
        return math.sqrt(self.b**3 / 3.0) * parseval_norm(self.spectrum)

    def __call__(self, points):
        """Point values of h at ``points`` (shape (N, 3))."""
        points = np.asarray(points, dtype=float)
        theta, phi = angles(points)
        r = np.linalg.norm(points, axis=-1)
        vals = self.spectrum.coeffs @ sph_harm_table(self.lmax, theta, phi)
        return np.where(r <= self.b, vals, 0.0)

    def scaled(self, t):
        return SourceDensity(self.spectrum * t, self.b)


def born_coefficients(h, k):
    """Harmonic coefficients of the Born far field -(1/4pi) int e^{-ik beta.x} h dx."""
    l = h.spectrum.degrees()
    rad = radial_factors(k, h.b, h.lmax)
    return -((-1j) ** l) * rad[l] * h.spectrum.coeffs


def born_map(h, k):
    return HarmonicSpectrum(h.lmax, born_coefficients(h, k))


def source_from_pattern(f, cfg, L=None):
    """Radially constant h whose Born far field reproduces f up to degree L."""
    L = f.lmax if L is None else int(L)
    if L < 0 or L > f.lmax:
        raise ArgumentError(f"truncation L={L} outside 0..{f.lmax}")
    rad = radial_factors(cfg.k, cfg.b, L)
    amp = 1.0 / np.abs(np.where(rad == 0.0, 1e-300, rad))
    for l in range(L + 1):
        if abs(rad[l]) < 1e-300:
            raise IllConditionedError(f"radial factor vanishes at degree {l}", degree=l)
        if amp[l] > AMPLIFICATION_CAP:
            raise IllConditionedError(
                f"degree {l} would be amplified by {amp[l]:.3e} (cap {AMPLIFICATION_CAP:.0e}); "
                f"lower L or increase epsilon",
                degree=l,
            )
    ff = f.resized(L)
    l = ff.degrees()
    coeffs = -(phase(l) * ff.coeffs) / rad[l]
    return SourceDensity(HarmonicSpectrum(L, coeffs), cfg.b)


def born_residual(f, h, cfg):
    """|| f + (1/4pi) int e^{-ik beta.x} h dx ||_{L2(S2)}, computed spectrally."""
    lmax = max(f.lmax, h.lmax)
    born = born_map(h, cfg.k).resized(lmax)
    return parseval_norm(f.resized(lmax) - born)


def smallness_bound(h, cfg):
    """sqrt(a / 4pi) * ||h||_{L2(D)}; a value below 1 certifies a nonvanishing denominator.

    ``h`` may be a :class:`SourceDensity` or a gridded field with a ``norm()``.
    """
    norm = h.l2_norm() if isinstance(h, SourceDensity) else h.norm()
    return math.sqrt(cfg.a / (4.0 * math.pi)) * norm


# ---------------------------------------------------------------------------
# least-squares alternative over an arbitrary basis


@dataclass
class LeastSquaresFit:
    coeffs: np.ndarray
    residual: float
    rank: int
    singular_values: np.ndarray


def harmonic_basis(L, b):
    """Radially constant Y[l,m] restricted to |x| <= b, l <= L, in flat (l, m) order."""

    def make(l, m):
        def phi(points):
            theta, az = angles(points)
            r = np.linalg.norm(points, axis=-1)
            y = sph_harm_table(l, theta, az)[l * l + l + m]
            return np.where(r <= b, y, 0.0)

        return phi

    return [make(l, m) for l in range(L + 1) for m in range(-l, l + 1)]


def born_design_matrix(basis, quad, cfg, grid):
    """Columns (1/4pi) int_D e^{-ik beta_i . x} phi_j(x) dx on the sphere nodes."""
    phase_mat = np.exp(-1j * cfg.k * (quad.directions @ grid.points.T))
    cols = [phase_mat @ (grid.weights * phi(grid.points)) for phi in basis]
    return np.stack(cols, axis=1) / (4.0 * math.pi)


def fit_source_least_squares(f_samples, quad, basis, cfg, grid=None, rcond=1e-12):
    """Coefficients c minimising ||f + (1/4pi) int e^{-ik beta.x} sum c_j phi_j dx||."""
    if len(basis) < 1:
        raise ArgumentError("basis must contain at least one function")
    if grid is None:
        grid = build_ball_grid(cfg.a, 24, 16, breaks=(cfg.b,))
    f_samples = np.asarray(f_samples, dtype=complex)
    design = born_design_matrix(basis, quad, cfg, grid)
    sw = np.sqrt(quad.weights)
    coeffs, _, rank, sv = np.linalg.lstsq(sw[:, None] * design, -sw * f_samples, rcond=rcond)
    resid = quad.norm(f_samples + design @ coeffs)
    return LeastSquaresFit(coeffs, resid, int(rank), sv)
