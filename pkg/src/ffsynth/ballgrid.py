"""Discretisation of the ball D and the outgoing Helmholtz volume potential.

The volume potential ``(Gv)(x) = int_D e^{ik|x-y|} / (4 pi |x-y|) v(y) dy`` is
applied through the separable expansion of the Green's function,

    g(x, y) = ik sum_{l,m} j_l(k r_<) h_l(k r_>) Y[l,m](x^) conj(Y[l,m](y^)),

so the 1/|x - y| singularity never has to be sampled. On a product grid the
field is transformed radius by radius into spherical-harmonic coefficients;
each degree then needs one radial operator, assembled once by integrating the
kinked kernel against the piecewise Lagrange interpolant of the radial nodes
with the integration split at the target radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.stats import qmc

from .errors import ArgumentError
from .specfun import spherical_jn_table, spherical_yn_table
from .sphere import SphereQuadrature, build_sphere_quadrature


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(lo, hi, n):
    x, w = _leggauss(n)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def _barycentric_weights(n):
    # closed form for Gauss-Legendre points (ascending order)
    x, w = _leggauss(n)
    lam = np.sqrt((1.0 - x * x) * w)
    lam[1::2] *= -1.0
    return lam


def lagrange_matrix(nodes, lam, t):
    """Values at ``t`` of the Lagrange basis polynomials on ``nodes``."""
    diff = t[:, None] - nodes[None, :]
    hit = diff == 0.0
    diff[hit] = 1.0
    terms = lam[None, :] / diff
    out = terms / terms.sum(axis=1, keepdims=True)
    rows = np.nonzero(hit.any(axis=1))[0]
    for i in rows:
        out[i] = hit[i].astype(float)
    return out


@dataclass(frozen=True, eq=False)
class PointSet:
    """Quadrature nodes in the ball with volume weights."""

    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    a: float = 1.0

    @property
    def size(self):
        return self.weights.size

    @cached_property
    def r(self):
        return np.linalg.norm(self.points, axis=1)

    @property
    def volume(self):
        return float(self.weights.sum())


@dataclass(frozen=True, eq=False)
class BallGrid(PointSet):
    """Composite Gauss-Legendre radii times a sphere rule.

    Each radial piece ``[c, d]`` between consecutive breakpoints carries
    ``radial_order`` Gauss-Legendre nodes, so no node sits at the origin and
    fields that jump at a breakpoint are integrated without loss of order.
    Node ``i * sphere.size + j`` sits at radius ``radii[i]`` along direction ``j``.
    """

    radial_order: int = 0
    polar_order: int = 0
    breaks: tuple = ()
    radii: np.ndarray = field(default=None, repr=False)
    radial_weights: np.ndarray = field(default=None, repr=False)
    sphere: SphereQuadrature = field(default=None, repr=False)

    @property
    def pieces(self):
        edges = (0.0,) + tuple(self.breaks) + (self.a,)
        return list(zip(edges[:-1], edges[1:]))

    @property
    def shape(self):
        return self.radii.size, self.sphere.size

    def piece_slices(self):
        n = self.radial_order
        return [slice(i * n, (i + 1) * n) for i in range(len(self.pieces))]

    def describe(self):
        return {
            "a": self.a,
            "radial_order": self.radial_order,
            "polar_order": self.polar_order,
            "breaks": list(self.breaks),
            "nodes": self.size,
        }


def build_ball_grid(a, radial_order, polar_order, breaks=()):
    """Product grid on the ball of radius ``a`` with radial breakpoints ``breaks``."""
    if a <= 0:
        raise ArgumentError(f"ball radius must be positive, got {a}")
    if radial_order < 1 or polar_order < 1:
        raise ArgumentError("grid orders must be >= 1")
    cuts = sorted({float(c) for c in breaks if 0.0 < c < a * (1 - 1e-14)})
    edges = [0.0] + cuts + [float(a)]
    r_parts, w_parts = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        r, w = gauss_legendre(lo, hi, radial_order)
        r_parts.append(r)
        w_parts.append(w * r * r)
    radii = np.concatenate(r_parts)
    rw = np.concatenate(w_parts)
    sphere = build_sphere_quadrature(polar_order)
    dirs = sphere.directions
    points = (radii[:, None, None] * dirs[None, :, :]).reshape(-1, 3)
    weights = (rw[:, None] * sphere.weights[None, :]).ravel()
    return BallGrid(
        points=points,
        weights=weights,
        a=float(a),
        radial_order=radial_order,
        polar_order=polar_order,
        breaks=tuple(cuts),
        radii=radii,
        radial_weights=rw,
        sphere=sphere,
    )


def sample_ball(a, count, seed=0):
    """Scrambled-Sobol points in the ball of radius ``a``, equal weights."""
    m = max(1, int(math.ceil(math.log2(count * 6.0 / math.pi))))
    pts = qmc.Sobol(d=3, scramble=True, seed=seed).random_base2(m)
    pts = (2.0 * pts - 1.0) * a
    inside = np.einsum("ij,ij->i", pts, pts) <= a * a
    cube = (2.0 * a) ** 3
    n_all = pts.shape[0]
    pts = pts[inside]
    w = np.full(pts.shape[0], cube / n_all)
    return PointSet(points=pts, weights=w, a=float(a))


@dataclass
class ComplexField:
    """Complex values on the nodes of a :class:`PointSet`."""

    grid: PointSet
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (self.grid.size,):
            raise ArgumentError(
                f"field needs {self.grid.size} values, got shape {self.values.shape}"
            )

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def norm(self):
        return math.sqrt(float(np.sum(self.grid.weights * np.abs(self.values) ** 2)))

    def argmin_abs(self):
        i = int(np.argmin(np.abs(self.values)))
        return i, float(abs(self.values[i])), self.grid.points[i]


def plane_wave(points, k, alpha):
    """u0(x) = exp(i k alpha . x)."""
    return np.exp(1j * k * (np.asarray(points) @ np.asarray(alpha, dtype=float)))


# ---------------------------------------------------------------------------
# radial quadrature of the kinked kernel j_l(k r_<) h_l(k r_>)


# radii per vectorised block in radial_green_integral
_RADIAL_BLOCK = 256


def _segments(r, pieces, n_low, n_sub):
    """Quadrature nodes and weights (including s**2) covering ``pieces``.

    Returns a list of ``(piece_index, nodes, weights, below)`` where ``below``
    flags segments with s <= r (kernel j_l(k s) h_l(k r)).
    """
    out = []
    for p, (c, d) in enumerate(pieces):
        if d <= r:
            s, w = gauss_legendre(c, d, n_low)
            out.append((p, s, w * s * s, True))
            continue
        if c < r:
            s, w = gauss_legendre(c, r, n_low)
            out.append((p, s, w * s * s, True))
            c = r
        if c == 0.0:
            # only reached for r == 0, where j_l(0) kills every l > 0
            s, w = gauss_legendre(0.0, d, n_low)
            out.append((p, s, w * s * s, False))
            continue
        # above the target h_l(k s) s**2 ~ s**(1 - l): geometric panels, each
        # integrated in the log variable
        nseg = max(1, int(math.ceil(math.log(d / c) / math.log(2.0))))
        edges = c * (d / c) ** (np.arange(nseg + 1) / nseg)
        for lo, hi in zip(edges[:-1], edges[1:]):
            tau, wt = gauss_legendre(0.0, 1.0, n_sub)
            s = lo * (hi / lo) ** tau
            w = wt * s * math.log(hi / lo)
            out.append((p, s, w * s * s, False))
    return out


def _kernel(lmax, k, r, s, below):
    """j_l(k s) h_l(k r) if below else j_l(k r) h_l(k s); shape (lmax+1, len(s))."""
    if below:
        js = spherical_jn_table(lmax, k * s)
        if r == 0.0:
            return np.zeros(js.shape, dtype=complex)
        hr = spherical_jn_table(lmax, k * r) + 1j * spherical_yn_table(lmax, k * r)
        return js * hr[:, None]
    jr = spherical_jn_table(lmax, k * r)
    with np.errstate(over="ignore", invalid="ignore"):
        hs = spherical_jn_table(lmax, k * s) + 1j * spherical_yn_table(lmax, k * s)
        out = jr[:, None] * hs
    # j_l(k r) underflows to zero where h_l(k s) overflows; the product is negligible
    out[~np.isfinite(out)] = 0.0
    return out


def _orders(n_nodes, lmax):
    return (n_nodes + lmax) // 2 + 8, n_nodes // 2 + 12


def radial_green_integral(k, r, b, lmax, n_nodes=24):
    """I_l(r) = int_0^b j_l(k min(r,s)) h_l(k max(r,s)) s**2 ds for l <= lmax.

    Returns shape ``(lmax+1, len(r))``.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    n_low, n_sub = _orders(n_nodes, lmax)
    out = np.zeros((lmax + 1, r.size), dtype=complex)
    # gather the nodes of many radii and evaluate the Bessel tables in one pass
    for start in range(0, r.size, _RADIAL_BLOCK):
        block = r[start : start + _RADIAL_BLOCK]
        owner, nodes, weights, below = [], [], [], []
        for i, ri in enumerate(block):
            for _, sn, wn, bl in _segments(ri, [(0.0, b)], n_low, n_sub):
                owner.append(np.full(sn.size, i))
                nodes.append(sn)
                weights.append(wn)
                below.append(np.full(sn.size, bl))
        owner = np.concatenate(owner)
        sn = np.concatenate(nodes)
        wn = np.concatenate(weights)
        bl = np.concatenate(below)
        rn = block[owner]
        lo = np.where(bl, sn, rn)
        hi = np.where(bl, rn, sn)
        j_lo = spherical_jn_table(lmax, k * lo)
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            h_hi = spherical_jn_table(lmax, k * hi) + 1j * spherical_yn_table(lmax, k * hi)
            vals = j_lo * h_hi
        # j_l underflows to zero where h_l overflows, and r = 0 has no
        # outgoing part; those products are negligible
        vals[~np.isfinite(vals)] = 0.0
        vals *= wn
        for l in range(lmax + 1):
            out[l, start : start + block.size] = np.bincount(
                owner, weights=vals[l].real, minlength=block.size
            ) + 1j * np.bincount(owner, weights=vals[l].imag, minlength=block.size)
    return out


class RadialTable:
    """Cubic-spline tables of I_l(r) for cheap evaluation at many radii."""

    def __init__(self, k, b, a, lmax, samples=2048):
        self.b = b
        self.splines = []
        for lo, hi in [(0.0, b), (b, a)]:
            if hi <= lo:
                continue
            r = np.linspace(lo, hi, samples)
            vals = radial_green_integral(k, r, b, lmax)
            self.splines.append((lo, hi, CubicSpline(r, vals, axis=1)))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = None
        for lo, hi, spl in self.splines:
            sel = (r >= lo) & (r <= hi)
            vals = spl(r[sel])
            if out is None:
                out = np.zeros((vals.shape[0], r.size), dtype=complex)
            out[:, sel] = vals
        return out


class GreenOperator:
    """Discrete volume potential on a :class:`BallGrid`.

    Angular content is resolved up to degree ``polar_order - 1`` (the exact
    analysis degree of the sphere rule); radial content is represented by
    the Lagrange interpolant of each radial piece.
    """

    def __init__(self, grid, k, lmax=None):
        if not isinstance(grid, BallGrid):
            raise ArgumentError("GreenOperator needs a product BallGrid")
        self.grid = grid
        self.k = float(k)
        self.lmax = grid.sphere.max_degree if lmax is None else min(lmax, grid.sphere.max_degree)
        self.matrices = self._assemble()
        self._ylm = grid.sphere.harmonics(self.lmax)
        self._ylm_conj_w = (self._ylm.conj() * grid.sphere.weights).T

    def _assemble(self):
        g = self.grid
        n = g.radial_order
        nr = g.radii.size
        lam = _barycentric_weights(n)
        piece_nodes = [g.radii[sl] for sl in g.piece_slices()]
        n_low, n_sub = _orders(n, self.lmax)
        mats = np.zeros((self.lmax + 1, nr, nr), dtype=complex)
        for i, ri in enumerate(g.radii):
            for p, s, w, below in _segments(ri, g.pieces, n_low, n_sub):
                kern = _kernel(self.lmax, self.k, ri, s, below) * w
                lag = lagrange_matrix(piece_nodes[p], lam, s)
                mats[:, i, p * n : (p + 1) * n] += kern @ lag
        return mats

    def apply(self, values):
        g = self.grid
        nr, ns = g.shape
        v = np.asarray(values, dtype=complex).reshape(nr, ns)
        coeffs = v @ self._ylm_conj_w
        out = np.empty_like(coeffs)
        for l in range(self.lmax + 1):
            sl = slice(l * l, (l + 1) ** 2)
            out[:, sl] = self.matrices[l] @ coeffs[:, sl]
        return (1j * self.k) * (out @ self._ylm).ravel()

    __call__ = apply
