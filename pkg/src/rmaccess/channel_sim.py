"""Received-signal synthesis: superposed RM sequences over flat channels plus AWGN.

SNR convention: chips have unit magnitude and channels unit average power, so
the per-user receive SNR is ``1 / N0``.

Randomness comes from counter-based Philox streams keyed by
``(seed, trial, stream)``; a trial's draws never depend on which other trials
run, or in which process.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rm_core import _check_order, capacity, id_bits, id_to_layers, sequences_from_layers

__all__ = [
    "Scenario",
    "FADING_MODELS",
    "snr_to_n0",
    "trial_rng",
    "draw_ids",
    "draw_channels",
    "draw_scenario",
    "synthesize",
    "synthesize_batch",
]

FADING_MODELS = ("rayleigh", "unit")

# stream labels inside one trial
_USERS, _NOISE = 0, 1


def snr_to_n0(snr_db):
    snr_db = float(snr_db)
    if not np.isfinite(snr_db):
        raise ValueError(f"SNR must be finite, got {snr_db}")
    return 10.0 ** (-snr_db / 10.0)


def trial_rng(seed, trial=0, stream=_USERS):
    seq = np.random.SeedSequence(int(seed), spawn_key=(int(trial), int(stream)))
    return np.random.Generator(np.random.Philox(seq))


def draw_ids(rng, m, K):
    """K distinct user IDs, uniform over the user space."""
    if K > capacity(m):
        raise ValueError(f"cannot draw {K} distinct IDs from {capacity(m)}")
    nbits = id_bits(m)
    ids = []
    seen = set()
    while len(ids) < K:
        bits = rng.integers(0, 2, size=nbits)
        user_id = int("".join(map(str, bits)) or "0", 2)
        if user_id not in seen:
            seen.add(user_id)
            ids.append(user_id)
    return ids


def draw_channels(rng, K, fading="rayleigh"):
    """CN(0, 1) draws, or unit-magnitude channels with uniform phase."""
    if fading == "rayleigh":
        return (rng.standard_normal(K) + 1j * rng.standard_normal(K)) / np.sqrt(2.0)
    if fading == "unit":
        return np.exp(2j * np.pi * rng.random(K))
    raise ValueError(f"unknown fading model {fading!r}; expected one of {FADING_MODELS}")


@dataclass(frozen=True, eq=False)
class Scenario:
    m: int
    ids: tuple
    h: np.ndarray
    n0: float
    seed: int
    trial: int = 0

    def __post_init__(self):
        _check_order(self.m)
        ids = tuple(int(i) for i in self.ids)
        h = np.asarray(self.h, dtype=complex).reshape(-1)
        if len(set(ids)) != len(ids):
            raise ValueError("scenario user IDs must be distinct")
        if len(ids) != h.shape[0]:
            raise ValueError(f"{len(ids)} IDs but {h.shape[0]} channel coefficients")
        if not self.n0 >= 0:
            raise ValueError(f"noise variance must be non-negative, got {self.n0}")
        for user_id in ids:
            if not 0 <= user_id < capacity(self.m):
                raise ValueError(f"user ID {user_id} out of range for m={self.m}")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "h", h)

    @property
    def K(self):
        return len(self.ids)

    def chips(self):
        """Transmitted sequences as a (K, 2^m) float array."""
        if not self.ids:
            return np.zeros((0, 1 << self.m))
        return sequences_from_layers([id_to_layers(i, self.m) for i in self.ids])


def draw_scenario(m, K, n0, seed, trial=0, fading="rayleigh"):
    rng = trial_rng(seed, trial, _USERS)
    ids = draw_ids(rng, m, K)
    h = draw_channels(rng, K, fading)
    return Scenario(m=m, ids=tuple(ids), h=h, n0=n0, seed=seed, trial=trial)


def _unit_noise(seed, trial, n):
    rng = trial_rng(seed, trial, _NOISE)
    return (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)


def synthesize(sc):
    """``y = sum_k h_k c_k + e`` with ``e ~ CN(0, N0)`` drawn from the scenario's noise stream."""
    n = 1 << sc.m
    y = sc.h @ sc.chips() if sc.K else np.zeros(n, dtype=complex)
    return y + np.sqrt(sc.n0) * _unit_noise(sc.seed, sc.trial, n)


def synthesize_batch(scenarios):
    """Stack :func:`synthesize` over scenarios of a common order."""
    return np.stack([synthesize(sc) for sc in scenarios])
