"""Small information-theoretic helpers, all in bits.

Conventions: 0*log2(0) = 0 and, in closed-form capacity expressions,
0**0 = 1.
"""

from __future__ import annotations

import numpy as np


def xlog2(x):
    """Elementwise x*log2(x) with the 0*log2(0)=0 convention."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log2(x[pos])
    return out


def entropy_bits(p) -> float:
    """Shannon entropy of a distribution, in bits."""
    return float(-np.sum(xlog2(p)))


def binary_entropy(a: float) -> float:
    """H2(a) in bits."""
    return entropy_bits([a, 1.0 - a])


def kl_bits(p, t) -> float:
    """Relative entropy D(p || t) in bits.

    Entries of ``t`` where ``p`` is positive must be positive; zero-mass
    entries of ``p`` contribute nothing regardless of ``t``.
    """
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    mask = p > 0
    if np.any(t[mask] <= 0):
        return float("inf")
    return float(np.sum(p[mask] * (np.log2(p[mask]) - np.log2(t[mask]))))


def pow00(base: float, expo: float) -> float:
    """base**expo with the 0**0 = 1 convention used at interval endpoints."""
    if expo == 0.0:
        return 1.0
    return float(base) ** float(expo)


def log2_pow(base: float, expo: float) -> float:
    """expo * log2(base), returning 0 when expo == 0 (0**0 = 1 convention)
    and -inf/inf for zero bases with nonzero exponents."""
    if expo == 0.0:
        return 0.0
    if base == 0.0:
        return float("-inf") if expo > 0 else float("inf")
    return expo * float(np.log2(base))
