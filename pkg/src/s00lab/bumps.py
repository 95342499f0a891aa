"""Smooth compactly supported building blocks (bumps, steps, partitions)."""

import numpy as np


def _expinv(u):
    u = np.asarray(u, float)
    out = np.zeros_like(u)
    pos = u > 0
    with np.errstate(over="ignore"):
        out[pos] = np.exp(-1.0 / u[pos])
    return out


def smooth_step(t, a, b):
    """C-infinity step: 0 for ``t <= a``, 1 for ``t >= b``.

    Satisfies ``smooth_step(a + s) + smooth_step(b - s) == 1`` exactly in the
    symmetric sense, which makes the partitions below telescope.
    """
    u = (np.asarray(t, float) - a) / (b - a)
    u = np.clip(u, 0.0, 1.0)
    p, q = _expinv(u), _expinv(1.0 - u)
    return p / (p + q)


def standard_bump(t):
    """``exp(1 - 1/(1 - t^2))`` on ``|t| < 1``, zero elsewhere; peak value 1."""
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
    return out


def unit_partition_1d(t):
    """Smoothed triangle on ``[-1, 1]`` whose integer translates sum to 1.

    Equal to ``S(t + 1) - S(t)`` with ``S`` a smooth step from 0 at 0 to 1 at
    1, i.e. the indicator of ``[-1/2, 1/2]`` convolved with the bump ``S'``
    shifted by 1/2. The sum over translates telescopes, so the partition
    identity holds to rounding.
    """
    t = np.asarray(t, float)
    return smooth_step(t, -1.0, 0.0) - smooth_step(t, 0.0, 1.0)


def plateau_1d(t, inner, outer):
    """Even function equal to 1 on ``|t| <= inner`` and 0 on ``|t| >= outer``."""
    return 1.0 - smooth_step(np.abs(np.asarray(t, float)), inner, outer)


def tensor(func, pts):
    """Product of ``func`` over the last axis of ``pts``."""
    return np.prod(func(pts), axis=-1)


def annulus_bump(r, r_in, r_out):
    """Smooth bump supported in ``r_in <= r <= r_out`` as a function of a radius."""
    mid = 0.5 * (r_in + r_out)
    half = 0.5 * (r_out - r_in)
    return standard_bump((np.asarray(r, float) - mid) / half)


def annulus_plateau(r, r0, r1, r2, r3):
    """1 on ``[r1, r2]``, 0 outside ``(r0, r3)``, smooth in between."""
    r = np.asarray(r, float)
    return smooth_step(r, r0, r1) * (1.0 - smooth_step(r, r2, r3))
