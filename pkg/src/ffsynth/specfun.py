"""Special functions: spherical Bessel/Hankel, spherical harmonics, Bessel moments.

Spherical harmonics are orthonormal on the unit sphere and carry the
Condon-Shortley phase, so that ``conj(Y[l, m]) == (-1)**m * Y[l, -m]``.
Coefficients of degree ``l`` and order ``m`` are stored at flat index
``l*l + l + m`` (see :func:`lm_index`).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import ArgumentError, QuadratureError, RangeError

LMAX = 64

# below this argument the two-term power series is exact to double precision
_SERIES_X = 1e-8


@dataclass(frozen=True)
class Direction:
    """A point on the unit sphere, stored as polar angle and azimuth."""

    theta: float
    phi: float

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        norm = float(np.linalg.norm(v))
        if abs(norm - 1.0) > 1e-12:
            raise ArgumentError(f"direction must be a unit vector, got norm {norm!r}")
        theta = math.acos(max(-1.0, min(1.0, v[2])))
        phi = math.atan2(v[1], v[0]) % (2.0 * math.pi)
        return cls(theta, phi)

    @property
    def vector(self):
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])


def unit_vectors(theta, phi):
    """Cartesian unit vectors, shape ``(..., 3)``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def angles(vectors):
    """Polar angle and azimuth of (not necessarily unit) vectors, shape ``(..., 3)``."""
    v = np.asarray(vectors, dtype=float)
    r = np.linalg.norm(v, axis=-1)
    with np.errstate(invalid="ignore", divide="ignore"):
        ct = np.where(r > 0, v[..., 2] / np.where(r > 0, r, 1.0), 1.0)
    theta = np.arccos(np.clip(ct, -1.0, 1.0))
    phi = np.mod(np.arctan2(v[..., 1], v[..., 0]), 2.0 * np.pi)
    return theta, phi


def lm_index(l, m):
    return l * l + l + m


def n_coeffs(lmax):
    return (lmax + 1) ** 2


def _check_degree(l, lmax):
    if l < 0:
        raise RangeError(f"degree must be nonnegative, got {l}")
    if l > lmax:
        raise RangeError(f"degree {l} exceeds supported maximum {lmax}")


# ---------------------------------------------------------------------------
# spherical Bessel functions


def _jn_upward(lmax, x):
    out = np.empty((lmax + 1,) + x.shape)
    s, c = np.sin(x), np.cos(x)
    out[0] = s / x
    if lmax >= 1:
        out[1] = s / x**2 - c / x
    for l in range(1, lmax):
        out[l + 1] = (2 * l + 1) / x * out[l] - out[l - 1]
    return out


def _jn_miller(lmax, x):
    """Downward (Miller) recurrence, normalised against j0 or j1."""
    top = lmax + 10 + int(4 * math.sqrt(lmax + 1))
    out = np.zeros((lmax + 1,) + x.shape)
    f_hi = np.zeros_like(x)
    f = np.full_like(x, 1e-30)
    for l in range(top, 0, -1):
        f_lo = (2 * l + 1) / x * f - f_hi
        f_hi, f = f, f_lo
        if l - 1 <= lmax:
            out[l - 1] = f
        if l <= lmax:
            out[l] = f_hi
        big = np.abs(f) > 1e250
        if np.any(big):
            f[big] *= 1e-250
            f_hi[big] *= 1e-250
            out[:, big] *= 1e-250
    s, c = np.sin(x), np.cos(x)
    j0 = s / x
    j1 = s / x**2 - c / x
    use0 = np.abs(j0) >= np.abs(j1)
    if lmax >= 1:
        scale = np.where(use0, j0 / out[0], j1 / np.where(use0, 1.0, out[1]))
    else:
        scale = j0 / out[0]
    out *= scale
    out[0] = j0
    return out


def _jn_series(lmax, x):
    out = np.empty((lmax + 1,) + x.shape)
    dfact = 1.0
    for l in range(lmax + 1):
        dfact *= 2 * l + 1
        out[l] = x**l / dfact * (1.0 - x * x / (2 * (2 * l + 3)))
    return out


def spherical_jn_table(lmax, x):
    """j_l(x) for every l <= lmax; returns an array of shape ``(lmax+1,) + x.shape``.

    Uses upward recurrence where x >= lmax (stable for l <= x) and Miller's
    downward recurrence elsewhere.
    """
    x0 = np.asarray(x, dtype=float)
    if np.any(x0 < 0):
        raise ArgumentError("spherical_jn_table requires x >= 0")
    x = x0.reshape(-1)
    out = np.zeros((lmax + 1,) + x.shape)
    zero = x == 0
    tiny = (x > 0) & (x < _SERIES_X)
    up = x >= max(lmax, 1)
    down = ~(zero | tiny | up)
    out[0][zero] = 1.0
    with np.errstate(over="ignore", under="ignore"):
        if np.any(tiny):
            out[:, tiny] = _jn_series(lmax, x[tiny])
        if np.any(up):
            out[:, up] = _jn_upward(lmax, x[up])
        if np.any(down):
            out[:, down] = _jn_miller(lmax, x[down])
    return out.reshape((lmax + 1,) + x0.shape)


def spherical_yn_table(lmax, x):
    """y_l(x) for every l <= lmax by upward recurrence (x > 0)."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise RangeError("spherical Neumann functions are singular at x = 0")
    out = np.empty((lmax + 1,) + x.shape)
    s, c = np.sin(x), np.cos(x)
    out[0] = -c / x
    if lmax >= 1:
        out[1] = -c / x**2 - s / x
    with np.errstate(over="ignore", invalid="ignore"):
        for l in range(1, lmax):
            out[l + 1] = (2 * l + 1) / x * out[l] - out[l - 1]
    return out


def spherical_hankel1_table(lmax, x):
    """h_l^(1)(x) = j_l(x) + i y_l(x) for every l <= lmax."""
    return spherical_jn_table(lmax, x) + 1j * spherical_yn_table(lmax, x)


def spherical_bessel_j(l, x, lmax=LMAX):
    """Spherical Bessel function of the first kind, j_l(x) for x >= 0."""
    _check_degree(l, lmax)
    x_arr = np.asarray(x, dtype=float)
    val = spherical_jn_table(l, x_arr)[l]
    return float(val) if val.ndim == 0 else val


def spherical_hankel1(l, x, lmax=LMAX):
    """Spherical Hankel function of the first kind, h_l^(1)(x) for x > 0."""
    _check_degree(l, lmax)
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr == 0):
        raise RangeError("h_l^(1) is singular at x = 0")
    val = spherical_hankel1_table(l, x_arr)[l]
    return complex(val) if val.ndim == 0 else val


# ---------------------------------------------------------------------------
# spherical harmonics


def sph_harm_table(lmax, theta, phi):
    """All Y[l, m](theta, phi) with l <= lmax, shape ``((lmax+1)**2,) + theta.shape``."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    ct = np.cos(theta)
    st = np.sin(theta)
    shape = np.broadcast(theta, phi).shape
    out = np.empty((n_coeffs(lmax),) + shape, dtype=complex)
    # normalised associated Legendre functions, m >= 0, Condon-Shortley phase
    pmm = np.full(ct.shape, 1.0 / math.sqrt(4.0 * math.pi))
    for m in range(lmax + 1):
        if m > 0:
            pmm = -math.sqrt((2 * m + 1) / (2.0 * m)) * st * pmm
        eim = np.exp(1j * m * phi)
        p_prev = np.zeros_like(ct)
        p_cur = pmm
        for l in range(m, lmax + 1):
            if l == m + 1:
                p_prev, p_cur = p_cur, math.sqrt(2 * m + 3) * ct * pmm
            elif l > m + 1:
                a = math.sqrt((4 * l * l - 1) / (l * l - m * m))
                a_prev = math.sqrt((4 * (l - 1) ** 2 - 1) / ((l - 1) ** 2 - m * m))
                p_prev, p_cur = p_cur, a * (ct * p_cur - p_prev / a_prev)
            y = p_cur * eim
            out[lm_index(l, m)] = y
            if m > 0:
                out[lm_index(l, -m)] = (-1) ** m * np.conj(y)
    return out


def sph_harm(l, m, d):
    """Orthonormal spherical harmonic Y[l, m] at a :class:`Direction` or unit vector."""
    if abs(m) > l:
        raise ArgumentError(f"|m| = {abs(m)} exceeds l = {l}")
    _check_degree(l, LMAX)
    if not isinstance(d, Direction):
        d = Direction.from_vector(d)
    return complex(sph_harm_table(l, d.theta, d.phi)[lm_index(l, m)])


# ---------------------------------------------------------------------------
# Bessel moments


def g_integral(mu, nu, k, b=1.0, rtol=1e-10):
    """Bessel moment integral of x**(mu + 1/2) * J_nu(k x) over [0, b].

    With ``mu = 1`` and ``nu = l + 1/2`` the product ``sqrt(pi/(2k)) * g`` is
    the radial Born factor ``int_0^b r**2 j_l(k r) dr``.
    """
    if k <= 0:
        raise ArgumentError(f"k must be positive, got {k}")
    if not 0 < b <= 1:
        raise ArgumentError(f"support radius b must lie in (0, 1], got {b}")
    if nu < 0:
        raise ArgumentError(f"order nu must be nonnegative, got {nu}")
    if mu + nu + 1.5 <= 0:
        # x**(mu + 1/2) J_nu(k x) ~ x**(mu + nu + 1/2) at the origin
        raise ArgumentError(f"integrand is not integrable at 0 for mu={mu}, nu={nu}")
    p = mu + 0.5

    def integrand(x):
        return x**p * special.jv(nu, k * x)

    # split at half-periods so each panel holds at most one sign change
    npan = max(1, int(math.ceil(k * b / math.pi)))
    edges = np.linspace(0.0, b, npan + 1)
    total = 0.0
    err = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            # convergence is judged from the returned error estimate below
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, e = integrate.quad(
                integrand, lo, hi, epsabs=0.0, epsrel=max(rtol * 1e-2, 1e-13), limit=200
            )
        total += val
        err += e
    if not math.isfinite(total) or err > max(rtol * abs(total), 1e-300):
        raise QuadratureError(
            f"g_integral({mu}, {nu}, k={k}, b={b}) did not converge", achieved=err
        )
    return total
