"""Independent reference computations shared by the test modules."""

import math

import numpy as np
from scipy import special

from ffsynth.ballgrid import build_ball_grid, plane_wave
from ffsynth.potential import volume_potential
from ffsynth.sphere import HarmonicSpectrum
from ffsynth.synthesis import WaveConfig, source_from_pattern

# order of the smoothstep that blends the near and far parts
_BLEND_ORDER = 3


def _gl(lo, hi, n):
    x, w = special.roots_legendre(n)
    return lo + (hi - lo) * (x + 1) / 2, w * (hi - lo) / 2


def _sphere_rule(n):
    ct, wt = special.roots_legendre(n)
    phi = np.arange(2 * n) * math.pi / n
    theta, az = np.meshgrid(np.arccos(ct), phi, indexing="ij")
    om = np.stack(
        [np.sin(theta) * np.cos(az), np.sin(theta) * np.sin(az), np.cos(theta)], axis=-1
    ).reshape(-1, 3)
    return om, np.repeat(wt, 2 * n) * math.pi / n


def _source_values(spec, y):
    r = np.linalg.norm(y, axis=-1)
    theta = np.arccos(np.clip(y[..., 2] / np.where(r > 0, r, 1.0), -1.0, 1.0))
    phi = np.arctan2(y[..., 1], y[..., 0])
    out = np.zeros(y.shape[:-1], dtype=complex)
    for l, m, c in spec.items():
        if c != 0:
            out += c * special.sph_harm_y(l, m, theta, phi)
    return out


def brute_force_potential(spec, b, k, x, n=32):
    """int_{|y|<b} e^{ik|x-y|} / (4pi|x-y|) h(y) dy by 3-D quadrature, for 0 < |x| < b.

    A smooth partition of unity splits the integral. The part near x is done in
    polar coordinates centred at x, where the Jacobian cancels 1/|x-y|. The rest
    is done in spherical coordinates about the origin, where h is smooth on each
    radial piece. Harmonics come from scipy, not from the package.
    """
    x = np.asarray(x, dtype=float)
    rx = float(np.linalg.norm(x))
    eps = 0.9 * min(rx, b - rx)

    def bump(s2):
        t = np.clip((s2 - 0.25) / 0.75, 0.0, 1.0)
        return 1.0 - special.betainc(_BLEND_ORDER + 1, _BLEND_ORDER + 1, t)

    om, w_om = _sphere_rule(n)
    r1, w1 = _gl(0.0, eps / 2, n)
    r2, w2 = _gl(eps / 2, eps, n)
    rho, w_rho = np.concatenate([r1, r2]), np.concatenate([w1, w2])
    y = x + rho[None, :, None] * om[:, None, :]
    near = np.sum(
        w_om[:, None] * w_rho * rho * np.exp(1j * k * rho) * _source_values(spec, y)
        * bump((rho / eps) ** 2)[None, :]
    ) / (4 * math.pi)

    edges = sorted({0.0, b, rx - eps, rx - eps / 2, rx + eps / 2, rx + eps})
    far = 0j
    for lo, hi in zip(edges[:-1], edges[1:]):
        r, w = _gl(lo, hi, n)
        y = r[:, None, None] * om[None, :, :]
        dist = np.linalg.norm(y - x, axis=-1)
        g = np.exp(1j * k * dist) / (4 * math.pi * dist)
        far += np.sum(
            (w * r * r)[:, None] * w_om[None, :] * g * _source_values(spec, y)
            * (1.0 - bump((dist / eps) ** 2))
        )
    return near + far


def random_spectrum(rng, lmax, scale=1.0):
    n = (lmax + 1) ** 2
    return HarmonicSpectrum(lmax, scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n)))


PIPELINE_PATTERN = {(0, 0): 0.01, (1, 0): 0.01, (2, 1): 0.01}


def pipeline_case():
    """The small three-harmonic pattern at k = 1, b = 0.8, a = 1."""
    cfg = WaveConfig(k=1.0, epsilon=1e-3, b=0.8, a=1.0)
    return HarmonicSpectrum.from_dict(PIPELINE_PATTERN), cfg


def crafted_zero_case(radial_order=24, polar_order=12):
    """Scale the pipeline pattern by a complex t so that psi vanishes at a grid node.

    t = u0(x0) / (G h1)(x0) at the node x0 where |G h1| is largest, so
    psi = u0 - t G h1 is exactly zero there. Returns ``(f, h, cfg, grid, t)``.
    """
    f1, cfg = pipeline_case()
    grid = build_ball_grid(cfg.a, radial_order, polar_order, breaks=(cfg.b,))
    h1 = source_from_pattern(f1, cfg)
    gh = volume_potential(h1, grid.points, cfg)
    u0 = plane_wave(grid.points, cfg.k, cfg.alpha_vector)
    i = int(np.argmax(np.abs(gh)))
    t = u0[i] / gh[i]
    return f1 * t, h1.scaled(t), cfg, grid, t
