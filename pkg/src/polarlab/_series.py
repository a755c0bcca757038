"""Truncated Taylor series arithmetic used to differentiate driving functions exactly.

A series is a 1-d array ``c`` with ``f(t0 + h) = sum_k c[k] h**k + O(h**(n+1))``.
"""
from __future__ import annotations

from math import factorial

import numpy as np


def mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = len(a)
    return np.convolve(a, b)[:n]


def inv(a: np.ndarray) -> np.ndarray:
    if a[0] == 0:
        raise ZeroDivisionError("series with zero constant term has no reciprocal")
    n = len(a)
    out = np.zeros(n, dtype=np.result_type(a, float))
    out[0] = 1.0 / a[0]
    for k in range(1, n):
        out[k] = -np.dot(a[1:k + 1], out[k - 1::-1][:k]) / a[0]
    return out


def compose(derivs: np.ndarray, inner: np.ndarray) -> np.ndarray:
    """Series of ``f(g(t0 + h))`` from ``derivs[j] = f^(j)(g(t0))`` and the series of ``g``."""
    n = len(inner)
    dg = inner.copy()
    dg[0] = 0.0
    out = np.zeros(n, dtype=np.result_type(derivs, inner, float))
    power = np.zeros(n)
    power[0] = 1.0
    for j in range(n):
        out += derivs[j] / factorial(j) * power
        power = mul(power, dg)
    return out


def exp(a: np.ndarray) -> np.ndarray:
    n = len(a)
    return compose(np.full(n, np.exp(a[0])), a)


def to_derivatives(c: np.ndarray) -> np.ndarray:
    return np.array([factorial(k) * c[k] for k in range(len(c))])
