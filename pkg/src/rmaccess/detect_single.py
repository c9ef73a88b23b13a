"""Layer-by-layer single-sequence detection and its list-decoding extension.

Each layer halves the signal: the two halves are conjugate-multiplied, which
leaves ``|h|^2`` times a Walsh row, the transform locates that row, and the
halves are recombined with the decided row.  After ``m - 1`` layers the
remaining two samples give the channel estimate directly.

All kernels work along the last axis, so the ``*_batch`` entry points process
many received signals at once.  The scalar entry points are thin wrappers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rm_core import (
    Layer,
    RmPair,
    _parity_table,
    _walsh_rows,
    generate_sequence,
    id_to_pair,
    layers_to_id,
    sequences_from_layers,
)
from .transform import fwht_flipped, transform_cost

__all__ = [
    "OpCounter",
    "ListParams",
    "DetectionResult",
    "BatchDetection",
    "conj_multiply_halves",
    "combine_halves",
    "detect_layer",
    "estimate_channel",
    "residual_energy",
    "detect_single",
    "detect_list",
    "detect_batch",
]


class OpCounter:
    """Accumulates multiplication counts reported by the detectors."""

    def __init__(self):
        self.count = 0

    def add(self, n):
        self.count += int(n)


@dataclass(frozen=True)
class ListParams:
    """List widths ``[L_m, ..., L_{m-F+1}]``; the depth F is ``len(L)``."""

    L: tuple

    def __post_init__(self):
        L = tuple(int(x) for x in self.L)
        if not L or any(x < 1 for x in L):
            raise ValueError(f"list widths must be a non-empty sequence of positive ints, got {self.L}")
        object.__setattr__(self, "L", L)

    @property
    def F(self):
        return len(self.L)

    @property
    def paths(self):
        return int(np.prod(self.L))

    def widths(self, m):
        """Per-layer widths for s = m..2, padded with 1 below the extension depth."""
        if self.F > m - 1:
            raise ValueError(f"depth F={self.F} exceeds m-1={m - 1}")
        for k, width in enumerate(self.L):
            s = m - k
            if width > 1 << (s - 1):
                raise ValueError(f"L_{s}={width} exceeds 2^(s-1)={1 << (s - 1)}")
        return self.L + (1,) * (m - 1 - self.F)


@dataclass(frozen=True, eq=False)
class DetectionResult:
    pair: RmPair
    user_id: int
    h_hat: complex
    residual: float
    layers: tuple  # layer indices [w_m, ..., w_2]


@dataclass(frozen=True, eq=False)
class BatchDetection:
    """Detections for a batch of signals; ``ops`` is the per-signal multiplication count."""

    layers: np.ndarray  # (B, m-1) int64
    h_hat: np.ndarray  # (B,) complex
    chips: np.ndarray  # (B, 2^m) float
    residual: np.ndarray  # (B,) float
    ops: int

    def user_ids(self):
        return [layers_to_id(row) for row in self.layers]


def _order(n):
    if n < 2 or n & (n - 1):
        raise ValueError(f"signal length must be a power of two >= 2, got {n}")
    return n.bit_length() - 1


def conj_multiply_halves(y):
    """``y'[j] * conj(y''[j])`` for the first and second halves of ``y``."""
    y = np.asarray(y)
    n = y.shape[-1]
    if n < 4 or n & (n - 1):
        raise ValueError(f"need a power-of-two length >= 4, got {n}")
    half = n // 2
    return y[..., :half] * np.conj(y[..., half:])


def combine_halves(y, v_hat):
    """Half-length signal ``(y' + v_hat * y'') / 2``."""
    y = np.asarray(y)
    half = y.shape[-1] // 2
    return 0.5 * (y[..., :half] + np.asarray(v_hat) * y[..., half:])


def detect_layer(y):
    """Decide the top layer of ``y`` (length 2^s) and return it with the combined 2^(s-1) signal."""
    y = np.asarray(y, dtype=complex)
    s = _order(y.shape[-1])
    if s < 2:
        raise ValueError("detect_layer needs s >= 2")
    V = fwht_flipped(conj_multiply_halves(y))
    w = int(np.argmax(V.real))
    layer = Layer.from_index(s, w)
    v_hat = _walsh_rows(np.array(w), s - 1)
    return layer, combine_halves(y, v_hat)


def estimate_channel(y1, b1_hat):
    """Channel estimate ``(y1[0] + (-1)^b1 y1[1]) / 2`` from the final length-2 signal."""
    y1 = np.asarray(y1)
    if y1.shape[-1] != 2:
        raise ValueError(f"need a length-2 signal, got {y1.shape[-1]}")
    sign = 1.0 - 2.0 * (np.asarray(b1_hat) & 1)
    return 0.5 * (y1[..., 0] + sign * y1[..., 1])


def residual_energy(y, h_hat, pair):
    """``||y - h_hat * c(pair)||^2``."""
    y = np.asarray(y, dtype=complex)
    c = generate_sequence(pair)
    if c.shape[-1] != y.shape[-1]:
        raise ValueError("signal length does not match the pair order")
    r = y - h_hat * c
    return float(np.vdot(r, r).real)


def _tree_detect(y, widths, validation_cost):
    """Breadth-first layer detection keeping ``widths[k]`` candidates at layer m-k.

    Paths are ordered lexicographically by their per-layer rank, so the
    argmin over residuals breaks ties towards the lowest path label.
    """
    B, n = y.shape
    m = _order(n)
    paths = y[:, None, :]
    idx = np.zeros((B, 1, 0), dtype=np.int64)
    n_paths = 1
    ops = 0
    for k, s in enumerate(range(m, 1, -1)):
        width = widths[k]
        half = 1 << (s - 1)
        V = fwht_flipped(paths[..., :half] * np.conj(paths[..., half:])).real
        if width == 1:
            w = np.argmax(V, axis=-1)[..., None]
        else:
            w = np.argsort(-V, axis=-1, kind="stable")[..., :width]
        v = _walsh_rows(w, s - 1)
        paths = 0.5 * (paths[..., None, :half] + v * paths[..., None, half:])
        paths = paths.reshape(B, n_paths * width, half)
        idx = np.concatenate((np.repeat(idx, width, axis=1), w.reshape(B, n_paths * width, 1)), axis=-1)
        # conjugate product + transform + recombination
        ops += n_paths * (2 * half + transform_cost(half))
        n_paths *= width

    b1 = np.zeros(idx.shape[:-1], dtype=np.int64)
    for k, s in enumerate(range(m, 1, -1)):
        b1 ^= _parity_table(s - 1)[idx[..., k]]
    h_hat = estimate_channel(paths, b1)
    ops += n_paths

    chips = sequences_from_layers(idx)
    diff = y[:, None, :] - h_hat[..., None] * chips
    residual = np.einsum("bpn,bpn->bp", diff.real, diff.real) + np.einsum("bpn,bpn->bp", diff.imag, diff.imag)
    if validation_cost:
        ops += 2 * n * n_paths
    best = np.argmin(residual, axis=1)
    rows = np.arange(B)
    return BatchDetection(
        layers=idx[rows, best],
        h_hat=h_hat[rows, best],
        chips=chips[rows, best],
        residual=residual[rows, best],
        ops=ops,
    )


def detect_batch(y, params=None):
    """Detect one sequence in each row of ``y`` (shape ``(B, 2^m)``).

    ``params=None`` runs the plain layer-by-layer detector; otherwise list
    detection with residual-energy validation.
    """
    y = np.atleast_2d(np.asarray(y, dtype=complex))
    m = _order(y.shape[-1])
    if m < 2:
        raise ValueError("need m >= 2")
    if params is None:
        return _tree_detect(y, (1,) * (m - 1), validation_cost=False)
    return _tree_detect(y, params.widths(m), validation_cost=True)


def _single_result(batch, m):
    layers = tuple(int(w) for w in batch.layers[0])
    user_id = layers_to_id(layers)
    return DetectionResult(
        pair=id_to_pair(user_id, m),
        user_id=user_id,
        h_hat=complex(batch.h_hat[0]),
        residual=float(batch.residual[0]),
        layers=layers,
    )


def detect_single(y, counter=None):
    """Layer-by-layer detection of one RM sequence with a direct channel estimate."""
    y = np.asarray(y, dtype=complex)
    if y.ndim != 1:
        raise ValueError("detect_single takes a single 1-D signal; use detect_batch for batches")
    batch = detect_batch(y[None, :])
    if counter is not None:
        counter.add(batch.ops)
    return _single_result(batch, _order(y.shape[-1]))


def detect_list(y, params, counter=None):
    """List detection: keep ``L_s`` candidates per extended layer, pick the minimum residual path."""
    y = np.asarray(y, dtype=complex)
    if y.ndim != 1:
        raise ValueError("detect_list takes a single 1-D signal; use detect_batch for batches")
    batch = detect_batch(y[None, :], params)
    if counter is not None:
        counter.add(batch.ops)
    return _single_result(batch, _order(y.shape[-1]))
