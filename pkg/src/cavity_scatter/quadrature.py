"""Symmetric triangle rules (Dunavant) and Gauss-Legendre edge rules.

Triangle rules are returned as barycentric points (nq, 3) and weights that sum
to one; multiply by the element area.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np


def _orbit3(a, w):
    b = 1 - 2 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _rule(*orbits):
    pts, wts = [], []
    for p, w in orbits:
        pts += p
        wts += w
    return np.array(pts, dtype=float), np.array(wts, dtype=float)


@lru_cache(maxsize=None)
def triangle_rule(degree: int):
    """Rule exact for polynomials of total degree ``degree`` (1..6)."""
    if degree <= 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if degree == 2:
        return _rule(_orbit3(1 / 6, 1 / 3))
    if degree <= 4:
        return _rule(
            _orbit3(0.445948490915964886318, 0.223381589678011465945),
            _orbit3(0.091576213509770743460, 0.109951743655321867355),
        )
    if degree == 5:
        return _rule(
            ([(1 / 3, 1 / 3, 1 / 3)], [0.225]),
            _orbit3(0.470142064105115089770, 0.132394152788506180912),
            _orbit3(0.101286507323456338801, 0.125939180544827152595),
        )
    if degree == 6:
        return _rule(
            _orbit3(0.249286745170910421136, 0.116786275726379366030),
            _orbit3(0.063089014491502228340, 0.050844906370206816921),
            _orbit6(0.053145049844816947353, 0.310352451033784405416, 0.082851075618373575194),
        )
    raise ValueError(f"no triangle rule of degree {degree} available (max 6)")


@lru_cache(maxsize=None)
def edge_rule(degree: int):
    """Gauss-Legendre on [0, 1]: points t and weights summing to one."""
    n = max(1, (degree + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1) / 2, w / 2
