"""Quadrature and spherical-harmonic transforms on the unit sphere."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError
from .specfun import lm_index, n_coeffs, sph_harm_table, unit_vectors


@dataclass(frozen=True)
class SphereQuadrature:
    """Gauss-Legendre in cos(theta) times uniform azimuth.

    ``n`` polar nodes and ``2n`` azimuthal nodes; integrates spherical
    harmonics of total degree up to ``2n - 1`` exactly. Nodes are ordered
    theta-major.
    """

    n: int
    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    @property
    def size(self):
        return self.theta.size

    @property
    def directions(self):
        return unit_vectors(self.theta, self.phi)

    @property
    def max_degree(self):
        """Highest degree an analysis on this rule recovers exactly."""
        return self.n - 1

    def harmonics(self, lmax):
        return _harmonics(self, lmax)

    def integrate(self, values):
        return np.sum(self.weights * np.asarray(values), axis=-1)

    def norm(self, values):
        return math.sqrt(float(np.sum(self.weights * np.abs(values) ** 2)))


_HARMONIC_CACHE: dict = {}


def _harmonics(quad, lmax):
    key = (quad.n, lmax)
    tab = _HARMONIC_CACHE.get(key)
    if tab is None:
        tab = sph_harm_table(lmax, quad.theta, quad.phi)
        tab.setflags(write=False)
        if len(_HARMONIC_CACHE) > 32:
            _HARMONIC_CACHE.clear()
        _HARMONIC_CACHE[key] = tab
    return tab


def build_sphere_quadrature(n):
    if n < 1:
        raise ArgumentError(f"polar order must be >= 1, got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    theta_1d = np.arccos(x[::-1])
    w_1d = w[::-1]
    phi_1d = np.arange(2 * n) * (math.pi / n)
    theta, phi = np.meshgrid(theta_1d, phi_1d, indexing="ij")
    weights = np.repeat(w_1d * (math.pi / n), 2 * n)
    arrays = [theta.ravel(), phi.ravel(), weights]
    for a in arrays:
        a.setflags(write=False)
    return SphereQuadrature(n, *arrays)


def quadrature_from_nodes(theta, phi, atol=1e-9):
    """Recover the product rule whose nodes are (theta, phi), in any order.

    Returns the quadrature and the permutation mapping its node order to the
    given order. Raises :class:`ArgumentError` if the nodes are not a
    Gauss-Legendre x uniform-azimuth product set.
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.mod(np.asarray(phi, dtype=float), 2.0 * math.pi)
    count = theta.size
    n = int(round(math.sqrt(count / 2.0)))
    if n < 1 or 2 * n * n != count:
        raise ArgumentError(f"{count} samples is not 2*n**2 for any polar order n")
    quad = build_sphere_quadrature(n)
    ti = np.searchsorted(quad.theta[:: 2 * n], theta - atol)
    pj = np.rint(phi / (math.pi / n)).astype(int) % (2 * n)
    ti = np.clip(ti, 0, n - 1)
    idx = ti * 2 * n + pj
    ok = (np.abs(quad.theta[idx] - theta) < atol) & (
        np.abs(np.angle(np.exp(1j * (quad.phi[idx] - phi)))) < atol
    )
    if not np.all(ok) or np.unique(idx).size != count:
        raise ArgumentError("sample directions do not form a Gauss-Legendre product grid")
    order = np.empty(count, dtype=int)
    order[idx] = np.arange(count)
    return quad, order


@dataclass
class HarmonicSpectrum:
    """Coefficients c[l, m], 0 <= l <= lmax, stored densely at index l*l + l + m."""

    lmax: int
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.lmax < 0 or self.coeffs.shape != (n_coeffs(self.lmax),):
            raise ArgumentError(
                f"spectrum of degree {self.lmax} needs {n_coeffs(self.lmax)} coefficients, "
                f"got shape {self.coeffs.shape}"
            )

    @classmethod
    def zeros(cls, lmax):
        return cls(lmax, np.zeros(n_coeffs(lmax), dtype=complex))

    @classmethod
    def from_dict(cls, entries, lmax=None):
        """Build from ``{(l, m): value}``."""
        top = max((l for l, _ in entries), default=0)
        lmax = top if lmax is None else lmax
        spec = cls.zeros(lmax)
        for (l, m), v in entries.items():
            spec[l, m] = v
        return spec

    def _index(self, key):
        l, m = key
        if not 0 <= l <= self.lmax or abs(m) > l:
            raise ArgumentError(f"(l, m) = ({l}, {m}) outside degree {self.lmax}")
        return lm_index(l, m)

    def __getitem__(self, key):
        return self.coeffs[self._index(key)]

    def __setitem__(self, key, value):
        self.coeffs[self._index(key)] = value

    def __add__(self, other):
        lmax = max(self.lmax, other.lmax)
        return HarmonicSpectrum(lmax, self.resized(lmax).coeffs + other.resized(lmax).coeffs)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, scalar):
        return HarmonicSpectrum(self.lmax, self.coeffs * scalar)

    __rmul__ = __mul__

    def resized(self, lmax):
        """Zero-padded or truncated copy of degree ``lmax``."""
        out = np.zeros(n_coeffs(lmax), dtype=complex)
        m = min(n_coeffs(lmax), self.coeffs.size)
        out[:m] = self.coeffs[:m]
        return HarmonicSpectrum(lmax, out)

    def degree_mass(self):
        """Sum of |c[l, m]|**2 over m, one entry per degree l."""
        power = np.abs(self.coeffs) ** 2
        return np.array([power[l * l : (l + 1) ** 2].sum() for l in range(self.lmax + 1)])

    def degrees(self):
        """Degree l of each flat coefficient."""
        return np.repeat(np.arange(self.lmax + 1), 2 * np.arange(self.lmax + 1) + 1)

    def items(self):
        for l in range(self.lmax + 1):
            for m in range(-l, l + 1):
                yield l, m, self.coeffs[lm_index(l, m)]


def analyze(samples, quad, lmax):
    """Forward transform: c[l, m] = sum_i w_i f_i conj(Y[l, m](beta_i))."""
    if quad.n < lmax + 1:
        raise ArgumentError(
            f"analysis to degree {lmax} needs polar order >= {lmax + 1}, got {quad.n}"
        )
    samples = np.asarray(samples, dtype=complex)
    if samples.shape[-1] != quad.size:
        raise ArgumentError(f"expected {quad.size} samples, got {samples.shape[-1]}")
    ylm = quad.harmonics(lmax)
    coeffs = (samples * quad.weights) @ ylm.conj().T
    return HarmonicSpectrum(lmax, coeffs)


def synthesize_on_sphere(spec, quad):
    return spec.coeffs @ quad.harmonics(spec.lmax)


def parseval_norm(spec):
    return float(np.sqrt(np.sum(np.abs(spec.coeffs) ** 2)))


def tail_mass(spec):
    """tail[L] = sum over l > L of |c[l, m]|**2, for L = 0 .. lmax."""
    mass = spec.degree_mass()
    # reverse cumulative sum, shifted so entry L excludes degree L itself
    tails = np.concatenate([np.cumsum(mass[::-1])[::-1][1:], [0.0]])
    return tails


def choose_truncation(spec, eps):
    """Smallest L whose spectral tail mass beyond L is below eps**2."""
    if eps <= 0:
        raise ArgumentError(f"epsilon must be positive, got {eps}")
    tails = tail_mass(spec)
    below = np.nonzero(tails < eps * eps)[0]
    return int(below[0]) if below.size else spec.lmax


# ---------------------------------------------------------------------------
# text formats: ``l,m,re,im`` for spectra and ``theta,phi,re,im`` for samples


def format_spectrum(spec):
    lines = ["l,m,re,im"]
    for l, m, c in spec.items():
        lines.append(f"{l},{m},{c.real:.17g},{c.imag:.17g}")
    return "\n".join(lines) + "\n"


def parse_spectrum(text):
    entries = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("l,"):
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ArgumentError(f"line {lineno}: expected l,m,re,im")
        l, m = int(parts[0]), int(parts[1])
        if l < 0 or abs(m) > l:
            raise ArgumentError(f"line {lineno}: invalid (l, m) = ({l}, {m})")
        entries[(l, m)] = complex(float(parts[2]), float(parts[3]))
    return HarmonicSpectrum.from_dict(entries)


def format_samples(quad, values):
    lines = ["theta,phi,re,im"]
    for t, p, v in zip(quad.theta, quad.phi, np.asarray(values, dtype=complex)):
        lines.append(f"{t:.17g},{p:.17g},{v.real:.17g},{v.imag:.17g}")
    return "\n".join(lines) + "\n"


def parse_samples(text):
    """Read ``theta,phi,re,im`` records; returns the quadrature and values in its order."""
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#") or line.startswith("theta"):
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ArgumentError(f"line {lineno}: expected theta,phi,re,im")
        rows.append([float(p) for p in parts])
    if not rows:
        raise ArgumentError("no samples found")
    data = np.array(rows)
    quad, order = quadrature_from_nodes(data[:, 0], data[:, 1])
    values = (data[:, 2] + 1j * data[:, 3])[order]
    return quad, values
