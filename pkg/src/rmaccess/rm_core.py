"""Second-order Reed-Muller sequences in the binary domain.

A sequence of order ``m`` is identified by a symmetric, zero-diagonal binary
matrix ``P`` and a binary vector ``b`` stored as ``[b_m, ..., b_1]``.  Index
vectors ``a_j`` are the big-endian ``m``-bit expansions of ``j``, so the most
significant bit of ``a_j`` pairs with ``b_m`` and with the first row of ``P``.

User IDs fill the strict upper triangle of ``P`` row by row, most significant
bit first.  Row ``i`` of that triangle is exactly the layer vector of order
``m - i``, which means an ID is just the concatenation of its layer indices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "MIN_ORDER",
    "MAX_ORDER",
    "RmPair",
    "Layer",
    "capacity",
    "id_bits",
    "id_to_pair",
    "pair_to_id",
    "generate_sequence",
    "generate_sequence_quaternary_oracle",
    "extract_layer",
    "walsh_row",
    "nested_compose",
    "inner_product",
    "layers_to_id",
    "id_to_layers",
    "sequences_from_layers",
    "gf2_rank",
    "bit_vector",
]

MIN_ORDER = 2
MAX_ORDER = 16


def _check_order(m):
    if not MIN_ORDER <= m <= MAX_ORDER:
        raise ValueError(f"order m must be in [{MIN_ORDER}, {MAX_ORDER}], got {m}")


def id_bits(m):
    """Number of ID bits carried by an order-``m`` sequence, m(m-1)/2."""
    return m * (m - 1) // 2


def capacity(m):
    """Size of the user space, 2^(m(m-1)/2)."""
    return 1 << id_bits(m)


def bit_vector(value, nbits):
    """Big-endian bit expansion of ``value`` as a uint8 array."""
    if nbits == 0:
        return np.zeros(0, dtype=np.uint8)
    return np.frombuffer(format(value, f"0{nbits}b").encode(), dtype=np.uint8) - ord("0")


def _bits_to_int(bits):
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size == 0:
        return 0
    return int((bits + ord("0")).tobytes(), 2)


@lru_cache(maxsize=None)
def _upper(m):
    # strict upper triangle, row-major
    return np.triu_indices(m, k=1)


@lru_cache(maxsize=None)
def _upper_mask(m):
    return np.triu(np.ones((m, m), dtype=np.uint8), 1)


def _row_parity(P):
    """XOR of each row's entries right of the diagonal."""
    return ((P & _upper_mask(P.shape[0])).sum(axis=1) & 1).astype(np.uint8)


@lru_cache(maxsize=None)
def _parity_table(nbits):
    # parity of popcount(i) for i in [0, 2^nbits)
    table = np.zeros(1, dtype=np.int8)
    for _ in range(nbits):
        table = np.concatenate((table, 1 - table))
    table.setflags(write=False)
    return table


@dataclass(frozen=True, eq=False)
class RmPair:
    """Matrix-vector pair ``{P, b}`` identifying one RM sequence."""

    P: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.P, dtype=np.uint8)
        b = np.asarray(self.b, dtype=np.uint8)
        if P.ndim != 2 or P.shape[0] != P.shape[1]:
            raise ValueError(f"P must be square, got shape {P.shape}")
        if b.shape != (P.shape[0],):
            raise ValueError(f"b must have length {P.shape[0]}, got shape {b.shape}")
        _check_order(P.shape[0])
        P.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "b", b)

    @property
    def m(self):
        return self.P.shape[0]

    def validate(self):
        """Raise ValueError unless symmetry, zero diagonal and the parity law hold."""
        P, b, m = self.P, self.b, self.m
        if P.max(initial=0) > 1 or b.max(initial=0) > 1:
            raise ValueError("P and b must be binary")
        if not np.array_equal(P, P.T):
            raise ValueError("P is not symmetric")
        if np.any(np.diag(P)):
            raise ValueError("P has a nonzero diagonal")
        bad = np.flatnonzero(b[: m - 1] != _row_parity(P)[: m - 1])
        if bad.size:
            raise ValueError(f"parity violated at layer {m - int(bad[0])}")
        if b[m - 1] != int(b[: m - 1].sum()) & 1:
            raise ValueError("parity violated at b_1")
        return self

    def __eq__(self, other):
        if not isinstance(other, RmPair):
            return NotImplemented
        return np.array_equal(self.P, other.P) and np.array_equal(self.b, other.b)

    def __hash__(self):
        return hash((self.P.tobytes(), self.b.tobytes()))

    def __repr__(self):
        return f"RmPair(m={self.m}, P={self.P.tolist()}, b={self.b.tolist()})"


@dataclass(frozen=True, eq=False)
class Layer:
    """Layer ``s`` of a pair: the vector alpha (s-1 bits) and its parity bit."""

    s: int
    alpha: np.ndarray
    b_s: int

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.uint8)
        if self.s < 2 or alpha.shape != (self.s - 1,):
            raise ValueError(f"layer {self.s} needs an alpha of length {self.s - 1}")
        if int(self.b_s) != int(np.bitwise_xor.reduce(alpha)):
            raise ValueError("b_s must equal the XOR of alpha")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "b_s", int(self.b_s))

    @classmethod
    def from_index(cls, s, index):
        """Layer whose alpha is the (s-1)-bit expansion of ``index``."""
        alpha = bit_vector(int(index), s - 1)
        return cls(s, alpha, int(alpha.sum()) & 1)

    @property
    def index(self):
        """Position of the Walsh peak this layer produces, <alpha>."""
        return _bits_to_int(self.alpha)

    def __eq__(self, other):
        if not isinstance(other, Layer):
            return NotImplemented
        return self.s == other.s and np.array_equal(self.alpha, other.alpha)

    def __repr__(self):
        return f"Layer(s={self.s}, alpha={self.alpha.tolist()}, b_s={self.b_s})"


def id_to_pair(user_id, m):
    """Map a user ID to its matrix-vector pair."""
    _check_order(m)
    nbits = id_bits(m)
    if not 0 <= user_id < (1 << nbits):
        raise ValueError(f"user ID {user_id} out of range for m={m}")
    d = bit_vector(user_id, nbits)
    P = np.zeros((m, m), dtype=np.uint8)
    P[_upper(m)] = d
    P |= P.T
    b = _row_parity(P)
    b[m - 1] = int(b[: m - 1].sum()) & 1
    return RmPair(P, b)


def pair_to_id(pair):
    """Inverse of :func:`id_to_pair`; validates the pair first."""
    pair.validate()
    return _bits_to_int(pair.P[_upper(pair.m)])


def _index_vectors(m):
    j = np.arange(1 << m)
    shifts = np.arange(m - 1, -1, -1)
    return ((j[:, None] >> shifts) & 1).astype(np.int64)


def generate_sequence(pair):
    """Bipolar chips ``(-1)^(b.a + sum_{i<k} P_ik a_i a_k)`` for every index vector ``a``."""
    m = pair.m
    A = _index_vectors(m)
    linear = A @ pair.b.astype(np.int64)
    quad = np.einsum("ji,ik,jk->j", A, np.triu(pair.P).astype(np.int64), A)
    return (1 - 2 * ((linear + quad) & 1)).astype(np.int8)


def generate_sequence_quaternary_oracle(pair):
    """Normalized quaternary form with the ``(-1)^wt(b)`` prefactor, evaluated literally."""
    m = pair.m
    A = _index_vectors(m)
    P = pair.P.astype(np.int64)
    b = pair.b.astype(np.int64)
    exponent = np.einsum("ji,ji->j", 2 * b[None, :] + A @ P.T, A)
    powers = np.array([1, 1j, -1, -1j])
    sign = -1.0 if int(b.sum()) % 2 else 1.0
    return sign * powers[exponent % 4] / np.sqrt(2.0**m)


def extract_layer(pair, s):
    """Layer ``s``: first row of the lower-right s x s sub-matrix minus its diagonal zero."""
    m = pair.m
    if not 2 <= s <= m:
        raise ValueError(f"layer index s must be in [2, {m}], got {s}")
    row = m - s
    return Layer(s, pair.P[row, row + 1:], int(pair.b[row]))


def walsh_row(layer):
    """Walsh sequence ``(-1)^(alpha . not(a_j))`` of length 2^(s-1)."""
    return _walsh_rows(np.array([layer.index]), layer.s - 1)[0].astype(np.int8)


def _walsh_rows(index, nbits):
    """Batched Walsh rows as float64 for every entry of the integer array ``index``."""
    n = 1 << nbits
    complement = (n - 1) ^ np.arange(n)
    par = _parity_table(nbits)
    index = np.asarray(index, dtype=np.int64)
    return 1.0 - 2.0 * par[index[..., None] & complement]


def nested_compose(half, v):
    """Next-order sequence ``(half, half * v)``."""
    half = np.asarray(half)
    v = np.asarray(v)
    if half.shape != v.shape or half.ndim != 1:
        raise ValueError(f"length mismatch: {half.shape} vs {v.shape}")
    return np.concatenate((half, half * v))


def inner_product(c1, c2):
    c1 = np.asarray(c1, dtype=np.int64)
    c2 = np.asarray(c2, dtype=np.int64)
    if c1.shape != c2.shape:
        raise ValueError(f"length mismatch: {c1.shape} vs {c2.shape}")
    return int(c1 @ c2)


def layers_to_id(indices):
    """Combine per-layer indices ``[w_m, ..., w_2]`` into a user ID."""
    user_id = 0
    m = len(indices) + 1
    for s, w in zip(range(m, 1, -1), indices):
        user_id = (user_id << (s - 1)) | int(w)
    return user_id


def id_to_layers(user_id, m):
    """Per-layer indices ``[w_m, ..., w_2]`` of a user ID."""
    if not 0 <= user_id < capacity(m):
        raise ValueError(f"user ID {user_id} out of range for m={m}")
    out = []
    for s in range(2, m + 1):
        out.append(user_id & ((1 << (s - 1)) - 1))
        user_id >>= s - 1
    return out[::-1]


def sequences_from_layers(indices):
    """Chips for a batch of layer-index rows.

    ``indices`` has shape ``(..., m-1)`` holding ``[w_m, ..., w_2]``; the
    result has shape ``(..., 2^m)`` and is built by nested composition
    starting from ``c^1 = [1, (-1)^b_1]``.
    """
    indices = np.asarray(indices, dtype=np.int64)
    m = indices.shape[-1] + 1
    lead = indices.shape[:-1]
    b_total = np.zeros(lead, dtype=np.int64)
    for k, s in enumerate(range(m, 1, -1)):
        b_total ^= _parity_table(s - 1)[indices[..., k]]
    c = np.empty(lead + (2,))
    c[..., 0] = 1.0
    c[..., 1] = 1.0 - 2.0 * b_total
    for s in range(2, m + 1):
        v = _walsh_rows(indices[..., m - s], s - 1)
        c = np.concatenate((c, c * v), axis=-1)
    return c


def gf2_rank(M):
    """Rank of a binary matrix over GF(2)."""
    M = np.array(M, dtype=np.uint8) & 1
    rows, cols = M.shape
    rank = 0
    for col in range(cols):
        pivot = next((r for r in range(rank, rows) if M[r, col]), None)
        if pivot is None:
            continue
        M[[rank, pivot]] = M[[pivot, rank]]
        for r in range(rows):
            if r != rank and M[r, col]:
                M[r] ^= M[rank]
        rank += 1
    return rank
