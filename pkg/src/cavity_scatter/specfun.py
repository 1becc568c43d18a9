"""Integer-order Hankel functions of the first kind.

Values come from the AMOS routines wrapped by :mod:`scipy.special`.  The DtN
multipliers only need the log-derivative ``H_n'(z) / H_n(z)``, which is
computed here from a ratio recurrence so that it stays finite even where
``H_n`` itself overflows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

MAX_ORDER = 200
MIN_ABS_ARG = 1e-8
OVERFLOW = 1e280


class SpecfunDomainError(ValueError):
    """Order or argument outside the supported range."""


class SpecfunOverflowError(OverflowError):
    """|H_n(z)| exceeds the representable range; use ratios instead."""


@dataclass(frozen=True)
class HankelValue:
    order: int
    argument: complex
    value: complex
    derivative: complex


def _check(n, z):
    n = np.asarray(n)
    z = np.asarray(z, dtype=complex)
    if np.any(n < 0) or np.any(n > MAX_ORDER) or np.any(n != np.floor(n)):
        raise SpecfunDomainError(f"order must be an integer in [0, {MAX_ORDER}]")
    if np.any(np.abs(z) < MIN_ABS_ARG):
        raise SpecfunDomainError(f"|z| must be >= {MIN_ABS_ARG}")
    if np.any(z.imag < 0):
        raise SpecfunDomainError("Im z must be >= 0")
    return n, z


def h1(n, z):
    """H_n^(1)(z), vectorised over ``n`` and ``z``."""
    n, z = _check(n, z)
    val = special.hankel1(n, z)
    if np.any(~np.isfinite(val)) or np.any(np.abs(val) > OVERFLOW):
        raise SpecfunOverflowError("Hankel function magnitude exceeds 1e280")
    return val


def h1p(n, z):
    """Derivative via H_n' = H_{n-1} - (n/z) H_n, with H_0' = -H_1."""
    n, z = _check(n, z)
    n_arr, z_arr = np.broadcast_arrays(n, z)
    out = np.where(
        n_arr == 0,
        -special.hankel1(1, z_arr),
        special.hankel1(np.maximum(n_arr - 1, 0), z_arr) - n_arr / z_arr * special.hankel1(n_arr, z_arr),
    )
    if np.any(~np.isfinite(out)) or np.any(np.abs(out) > OVERFLOW):
        raise SpecfunOverflowError("Hankel derivative magnitude exceeds 1e280")
    return out


def hankel1(n: int, z: complex) -> HankelValue:
    return HankelValue(int(n), complex(z), complex(h1(n, z)), complex(h1p(n, z)))


def log_derivatives(n_max: int, z: complex) -> np.ndarray:
    """``H_n'(z)/H_n(z)`` for n = 0..n_max.

    Uses s_n = H_{n-1}/H_n with s_{n+1} = 1 / (2n/z - s_n), seeded from the
    exponentially scaled H_0, H_1 (the scale factor cancels in the ratio).
    Forward recurrence is stable because H^(1) is the dominant solution.
    """
    _check(n_max, z)
    z = complex(z)
    h0, h1_ = special.hankel1e(0, z), special.hankel1e(1, z)
    out = np.empty(n_max + 1, dtype=complex)
    out[0] = -h1_ / h0
    s = h0 / h1_
    for n in range(1, n_max + 1):
        out[n] = s - n / z
        s = 1.0 / (2 * n / z - s)
    return out


def inverse_h1(n_max: int, z: complex) -> np.ndarray:
    """``1/H_n(z)`` for n = 0..n_max, underflowing to zero instead of overflowing.

    Built as 1/H_0 times the products of s_k = H_{k-1}/H_k.
    """
    _check(n_max, z)
    z = complex(z)
    out = np.empty(n_max + 1, dtype=complex)
    out[0] = 1.0 / special.hankel1(0, z)
    s = special.hankel1e(0, z) / special.hankel1e(1, z)
    for n in range(1, n_max + 1):
        out[n] = out[n - 1] * s
        s = 1.0 / (2 * n / z - s)
    return out


def jn_yn(n, x):
    """Real Bessel pair (J_n, Y_n) for real positive x."""
    return special.jv(n, x), special.yv(n, x)
