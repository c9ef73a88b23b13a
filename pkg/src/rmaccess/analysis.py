"""Closed-form detection bounds and multiplication counts."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

__all__ = [
    "normal_cdf",
    "layer_noise_variance",
    "layer_success_bound",
    "sequence_success_bound",
    "rayleigh_sequence_success_bound",
    "sinr_layer",
    "multiplication_count_lld",
    "multiplication_count_list",
    "TABLE_MULT_COUNTS",
]

# reported values for m = 8, keyed by algorithm label
TABLE_MULT_COUNTS = {"lld": 2304, "list([2,2],2)": 3820}


def normal_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def layer_noise_variance(m, s, h_mag2, n0):
    """Variance of one conjugate-product noise sample at layer s, given correct earlier layers."""
    n0_s = n0 / 2 ** (m - s)
    return 2.0 * h_mag2 * n0_s + n0_s**2


def layer_success_bound(m, s, h_mag2, n0):
    """Union lower bound on deciding layer s correctly when layers m..s+1 were correct."""
    if not 2 <= s <= m:
        raise ValueError(f"need 2 <= s <= m, got s={s}, m={m}")
    if h_mag2 < 0 or n0 < 0:
        raise ValueError("h_mag2 and n0 must be non-negative")
    half = 2 ** (s - 1)
    var = layer_noise_variance(m, s, h_mag2, n0)
    if var == 0.0:
        return 1.0 if h_mag2 > 0 else max(0.0, 1.0 - (half - 1) * 0.5)
    z = -half * h_mag2 / math.sqrt(half * var)
    return max(0.0, 1.0 - (half - 1) * normal_cdf(z))


def sequence_success_bound(m, h_mag2, n0):
    """Product of the per-layer bounds over s = m..2."""
    out = 1.0
    for s in range(m, 1, -1):
        out *= layer_success_bound(m, s, h_mag2, n0)
    return out


def rayleigh_sequence_success_bound(m, n0):
    """:func:`sequence_success_bound` averaged over ``|h|^2 ~ Exp(1)``."""
    value, _ = integrate.quad(lambda g: sequence_success_bound(m, g, n0) * math.exp(-g), 0.0, np.inf, limit=200)
    return value


def sinr_layer(s, m, h1_mag2, h2_mag2, n0):
    """SINR of the layer-s signal for the stronger of two users: 2^(m-s)|h1|^2 / (|h2|^2 + N0)."""
    return 2 ** (m - s) * h1_mag2 / (h2_mag2 + n0)


def multiplication_count_lld(m):
    return (m + 1) * 2**m


def multiplication_count_list(L, F, m):
    """Printed three-term multiplication count N_M(L, F) for list widths ``L = [L_m, ..., L_{m-F+1}]``.

    The third sum starts at 4 exactly as printed.
    """
    L = [int(x) for x in L]
    if F != len(L) or not 1 <= F <= m - 1 or any(x < 1 for x in L):
        raise ValueError(f"invalid list parameters L={L}, F={F} for m={m}")

    def width(s):
        return L[m - s]

    total = (m + 2) * 2 ** (m - 1)
    for s1 in range(m - F + 1, m + 1):
        prod = 1
        for s2 in range(s1, m + 1):
            prod *= width(s2)
        total += prod * (s1 + 1) * 2 ** (s1 - 2)
    all_paths = 1
    for s1 in range(m - F + 1, m + 1):
        all_paths *= width(s1)
    total += all_paths * sum((s2 + 1) * 2 ** (s2 - 2) for s2 in range(4, m - F + 1))
    return total
