"""Walsh-Hadamard transform with a bit-complemented column index.

The kernel is ``t[i, j] = (-1)^(a_i . not(a_j))``, i.e. the natural-order
(Sylvester) Hadamard matrix with its columns reversed.  A Walsh row with
frequency ``alpha`` therefore transforms into a single peak at ``<alpha>``.

Note that this matrix is orthogonal (``T.T @ T = 2^s I``) but it is not an
involution: ``T @ T`` is ``2^s`` times a signed reversal.
"""

from functools import lru_cache

import numpy as np

__all__ = ["fwht", "fwht_flipped", "naive_transform_oracle", "flipped_hadamard", "transform_cost"]


def _order(n):
    if n < 1 or n & (n - 1):
        raise ValueError(f"length must be a power of two, got {n}")
    return n.bit_length() - 1


def fwht(x):
    """Natural-order fast Walsh-Hadamard transform along the last axis (unnormalized)."""
    x = np.asarray(x)
    n = x.shape[-1]
    _order(n)
    lead = x.shape[:-1]
    h = 1
    while h < n:
        x = x.reshape(lead + (n // (2 * h), 2, h))
        a = x[..., 0, :]
        b = x[..., 1, :]
        x = np.stack((a + b, a - b), axis=-2)
        h *= 2
    return x.reshape(lead + (n,))


def fwht_flipped(x):
    """Apply ``T^s`` along the last axis in O(s 2^s) operations."""
    x = np.asarray(x)
    return fwht(x[..., ::-1])


def transform_cost(n):
    """Multiplication count charged for one length-``n`` transform, ``n log2 n``."""
    return n * _order(n)


@lru_cache(maxsize=16)
def _dense_kernel(s):
    n = 1 << s
    comp = (n - 1) ^ np.arange(n)
    T = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            T[i, j] = -1.0 if bin(i & comp[j]).count("1") % 2 else 1.0
    T.setflags(write=False)
    return T


def flipped_hadamard(s):
    """Dense ``T^s`` built entry by entry from its definition."""
    return _dense_kernel(s).copy()


def naive_transform_oracle(x):
    """Reference ``T^s x`` as a plain dense matrix-vector product."""
    x = np.asarray(x, dtype=complex)
    return _dense_kernel(_order(x.shape[-1])) @ x
