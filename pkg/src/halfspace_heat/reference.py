"""Closed-form heat kernels used as oracles.

For ``a = 0`` the operator splits into ``Delta_x`` plus the Bessel operator
``B_y = D_yy + (c/y) D_y`` with Neumann condition, whose kernel with respect
to ``y^c dy`` is

    p(t, y1, y2) = (2t)^-1 (y1 y2)^((1-c)/2) I_nu(y1 y2 / 2t) exp(-(y1^2 + y2^2) / 4t),

with ``nu = (c - 1) / 2``.  The formula is evaluated through the exponentially
scaled Bessel function so that large arguments do not overflow.
"""

from __future__ import annotations

import numpy as np
from scipy.special import gammaln

SERIES_CUTOFF = 30.0


def _check_order(nu):
    if np.any(np.asarray(nu) <= -1):
        raise ValueError(f"Bessel order must exceed -1, got {nu}")


def _ive_series(nu, x, max_terms=400):
    # e^-x sum_k (x/2)^(2k+nu) / (k! Gamma(k+nu+1)), terms built recursively
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    term = np.exp(nu * np.log(xp / 2) - gammaln(nu + 1) - xp)
    total = term.copy()
    q = (xp / 2) ** 2
    for k in range(max_terms):
        term = term * q / ((k + 1) * (k + 1 + nu))
        total += term
        if np.all(term <= 1e-17 * total):
            break
    out[pos] = total
    zero = ~pos
    if np.any(zero):
        out[zero] = 1.0 if nu == 0 else (0.0 if nu > 0 else np.inf)
    return out


def _ive_asymptotic(nu, x, max_terms=100):
    # Hankel expansion e^-x I_nu(x) ~ (2 pi x)^-1/2 sum_k (-1)^k a_k(nu) / x^k
    x = np.asarray(x, dtype=float)
    mu = 4.0 * nu * nu
    term = np.ones_like(x)
    total = term.copy()
    last = np.full_like(x, np.inf)
    for k in range(1, max_terms):
        new = -term * (mu - (2 * k - 1) ** 2) / (8.0 * k * x)
        grow = np.abs(new) >= last
        new = np.where(grow, 0.0, new)
        total += new
        last = np.where(grow, 0.0, np.abs(new))
        term = new
        if np.all(np.abs(term) <= 1e-17 * np.abs(total)):
            break
    return total / np.sqrt(2.0 * np.pi * x)


def bessel_i_scaled(nu, x):
    """``e^-x I_nu(x)`` for ``nu > -1`` and ``x >= 0``.

    Power series up to ``x = 30``, Hankel asymptotic expansion beyond.
    """
    _check_order(nu)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("x must be non-negative")
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    out = np.empty_like(x)
    small = x <= SERIES_CUTOFF
    if np.any(small):
        out[small] = _ive_series(nu, x[small])
    if np.any(~small):
        out[~small] = _ive_asymptotic(nu, x[~small])
    return out[0] if scalar else out


def bessel_heat_kernel(t, y1, y2, c):
    """Kernel of ``D_yy + (c/y) D_y`` (Neumann) with respect to ``y2^c dy2``."""
    t = np.asarray(t, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    if np.any(t <= 0):
        raise ValueError("t must be positive")
    if np.any(y1 <= 0) or np.any(y2 <= 0):
        raise ValueError("y1 and y2 must be positive")
    nu = (c - 1.0) / 2.0
    _check_order(nu)
    t, y1, y2 = np.broadcast_arrays(t, y1, y2)
    prod = y1 * y2
    ive = bessel_i_scaled(nu, prod / (2.0 * t))
    return np.exp(((1.0 - c) / 2.0) * np.log(prod) - (y1 - y2) ** 2 / (4.0 * t)) * ive / (2.0 * t)


def reflected_gaussian(t, y1, y2):
    """Neumann heat kernel of ``D_yy`` on the half-line."""
    t = np.asarray(t, dtype=float)
    return (np.exp(-(y1 - y2) ** 2 / (4 * t)) + np.exp(-(y1 + y2) ** 2 / (4 * t))) / np.sqrt(4 * np.pi * t)


def product_kernel(t, z1, z2, c):
    """Kernel of ``Delta_x + D_yy + (c/y) D_y`` on the half-space (the ``a = 0`` case).

    ``z1``, ``z2`` have shape ``(..., N + 1)`` with y last.
    """
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    N = z1.shape[-1] - 1
    if z2.shape[-1] != N + 1:
        raise ValueError("z1 and z2 must have the same dimension")
    t = np.asarray(t, dtype=float)
    d2 = np.sum((z1[..., :-1] - z2[..., :-1]) ** 2, axis=-1)
    gx = (4 * np.pi * t) ** (-N / 2) * np.exp(-d2 / (4 * t))
    return gx * bessel_heat_kernel(t, z1[..., -1], z2[..., -1], c)
