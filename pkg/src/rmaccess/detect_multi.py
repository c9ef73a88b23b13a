"""Multi-user detection: iterative per-user detection with interference subtraction.

Each iteration visits the ``k_max`` user slots in order.  Slot ``k`` sees the
received signal minus the interference of every other slot, using this
iteration's estimates for slots before ``k`` and last iteration's for slots
after it.  After a full sweep all channels are refit jointly by least squares.
The successive-cancellation baseline makes a single strongest-first pass and
never revisits a decision.

Reported users must pass an energy test: dropping a user from the joint LS
fit has to raise the residual energy by more than ``tau * N0_hat * 2^m``,
where ``N0_hat`` is the per-sample residual energy of the final fit.

Some RM sequences are linear combinations of a few others, so a strong user
can be replaced by a handful of wrong sequences that fit ``y`` equally well.
Before pruning, the final candidate set goes through two clean-up passes
(:func:`merge_triples`, then :func:`swap_refine`) that prefer the smaller
explanation.  Both detectors share them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .detect_single import detect_batch
from .rm_core import layers_to_id

__all__ = [
    "DEFAULT_PRUNE_TAU",
    "MultiUserState",
    "ActiveSetReport",
    "mai",
    "ls_channels",
    "prune_users",
    "merge_triples",
    "swap_refine",
    "detect_iterative",
    "detect_sic",
    "iterative_batch",
    "sic_batch",
]

DEFAULT_PRUNE_TAU = 3.0


@dataclass
class MultiUserState:
    """Current sequences (columns of ``C``; all-zero = not yet detected) and channels."""

    C: np.ndarray
    h: np.ndarray
    n: int = 0

    @classmethod
    def initial(cls, m, k_max):
        return cls(C=np.zeros((1 << m, k_max)), h=np.zeros(k_max, dtype=complex))

    @property
    def k_max(self):
        return self.C.shape[1]


@dataclass(frozen=True, eq=False)
class ActiveSetReport:
    ids: list
    h_hats: np.ndarray
    gains: np.ndarray  # residual-energy increase when each user is dropped
    iterations_used: int
    residual: float
    ops: int = 0
    candidates: list = field(default_factory=list)  # deduplicated IDs before pruning


def mai(state, k):
    """Interference seen by slot ``k`` (0-based): sum over the other slots of h * c."""
    if not 0 <= k < state.k_max:
        raise ValueError(f"slot {k} out of range for k_max={state.k_max}")
    h = state.h.copy()
    h[k] = 0.0
    return state.C @ h


def _ls_cost(n, k):
    # Gram matrix, matched filter and a k x k solve
    return n * k * k + n * k + k**3


def ls_channels(y, C):
    """Least-squares channels for the columns of ``C``.

    Zero columns and repeats of an earlier column get 0; the remaining
    columns are solved exactly.
    """
    y = np.asarray(y, dtype=complex)
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != y.shape[0]:
        raise ValueError(f"C must have {y.shape[0]} rows, got shape {C.shape}")
    h = np.zeros(C.shape[1], dtype=complex)
    keep = []
    seen = set()
    for k in range(C.shape[1]):
        col = C[:, k]
        if not np.any(col):
            continue
        key = col.tobytes()
        if key in seen:
            continue
        seen.add(key)
        keep.append(k)
    if keep:
        sol, *_ = np.linalg.lstsq(C[:, keep], y, rcond=None)
        h[keep] = sol
    return h


def _drop_one_gains(y, Ck, residual):
    gains = np.empty(Ck.shape[1])
    for k in range(Ck.shape[1]):
        rest = np.delete(Ck, k, axis=1)
        if rest.shape[1]:
            h, *_ = np.linalg.lstsq(rest, y, rcond=None)
            r = y - rest @ h
        else:
            r = y
        gains[k] = float(np.vdot(r, r).real) - residual
    return gains


def prune_users(y, C, tau=DEFAULT_PRUNE_TAU):
    """Drop weakest users until every survivor passes the residual-energy test.

    ``C`` holds distinct nonzero sequences as columns.  Returns the kept
    column indices, their LS channels, their gains and the final residual.
    When the kept columns are linearly dependent the gains come from
    explicit drop-one refits (they are zero for the dependent columns) and
    ties go to the smallest channel magnitude.
    """
    y = np.asarray(y, dtype=complex)
    n = y.shape[0]
    keep = list(range(C.shape[1]))
    while keep:
        Ck = C[:, keep]
        h, _, rank, _ = np.linalg.lstsq(Ck, y, rcond=None)
        r = y - Ck @ h
        residual = float(np.vdot(r, r).real)
        n0_hat = residual / max(n - rank, 1)
        if rank == len(keep):
            gains = np.abs(h) ** 2 / np.diag(np.linalg.inv(Ck.T @ Ck))
        else:
            gains = _drop_one_gains(y, Ck, residual)
        floor = tau * n0_hat * n
        low = np.flatnonzero(gains <= floor)
        if low.size == 0:
            return keep, h, gains, residual
        worst = int(low[np.lexsort((np.abs(h[low]), gains[low]))[0]])
        keep.pop(worst)
    return [], np.zeros(0, dtype=complex), np.zeros(0), float(np.vdot(y, y).real)


def _dedup(slot_layers, slot_chips):
    ids = []
    cols = []
    for layers, chips in zip(slot_layers, slot_chips):
        user_id = layers_to_id(layers)
        if user_id not in ids:
            ids.append(user_id)
            cols.append(chips)
    return ids, np.stack(cols, axis=1)


def merge_triples(y, ids, C, tau=DEFAULT_PRUNE_TAU, misfit=0.1):
    """Replace three reported users by one sequence that explains them equally well.

    Some RM sequences lie in the span of three others, so a strong user can
    be represented by three wrong ones with no loss in residual energy.  For
    every triple of surviving users the fitted contribution is run through
    the single-sequence detector; a triple is swapped for the detected
    sequence when that sequence fits the contribution to within ``misfit``
    (relative energy) and the joint residual rises by less than the prune
    floor.  Failing that, a sequence in the exact span of a triple may
    replace two of its members under the same residual test.  Returns the
    new ``(ids, C)``.
    """
    n = y.shape[0]
    ids = list(ids)
    while True:
        keep, h, _, residual = prune_users(y, C, tau)
        if len(keep) < 3:
            return ids, C
        Ck = C[:, keep]
        triples = list(combinations(range(len(keep)), 3))
        Z = np.stack([Ck[:, t] @ h[list(t)] for t in triples])
        det = detect_batch(Z)
        energy = np.einsum("bn,bn->b", Z.conj(), Z).real
        fit = np.abs(det.h_hat) ** 2 * n
        order = np.argsort(1.0 - fit / np.maximum(energy, 1e-300), kind="stable")
        floor = tau * residual / max(n - len(keep), 1) * n
        new_ids = det.user_ids()
        merged = False
        for j in order:
            if 1.0 - fit[j] / max(energy[j], 1e-300) > misfit:
                break
            if new_ids[j] in ids:
                continue
            drop = {keep[i] for i in triples[j]}
            rest = [k for k in range(C.shape[1]) if k not in drop]
            trial_C = np.column_stack([C[:, rest], det.chips[j]])
            sol, *_ = np.linalg.lstsq(trial_C, y, rcond=None)
            r = y - trial_C @ sol
            if float(np.vdot(r, r).real) - residual < floor:
                ids = [ids[k] for k in rest] + [new_ids[j]]
                C = trial_C
                merged = True
                break
        if not merged:
            swapped = _swap_pair_in_triple(y, ids, C, keep, Ck, triples, Z, det, residual, floor)
            if swapped is None:
                return ids, C
            ids, C = swapped


def _swap_pair_in_triple(y, ids, C, keep, Ck, triples, Z, det, residual, floor):
    # two wrong users plus one right one can span a missing user; then the
    # triple's contribution holds two sequences, so try both detections
    n = y.shape[0]
    first = det.chips
    coef = np.einsum("bn,bn->b", first.conj(), Z) / n
    second = detect_batch(Z - coef[:, None] * first)
    for cand in (det, second):
        chips = cand.chips
        cand_ids = cand.user_ids()
        for j, new_id in enumerate(cand_ids):
            if new_id in ids:
                continue
            A = Ck[:, list(triples[j])]
            w, *_ = np.linalg.lstsq(A, chips[j], rcond=None)
            off = chips[j] - A @ w
            if float(np.vdot(off, off).real) > 1e-9 * n:
                continue
            for pair in combinations(triples[j], 2):
                drop = {keep[i] for i in pair}
                rest = [k for k in range(C.shape[1]) if k not in drop]
                trial_C = np.column_stack([C[:, rest], chips[j]])
                sol, *_ = np.linalg.lstsq(trial_C, y, rcond=None)
                r = y - trial_C @ sol
                if float(np.vdot(r, r).real) - residual < floor:
                    return [ids[k] for k in rest] + [new_id], trial_C
    return None


def swap_refine(y, ids, C, tau=DEFAULT_PRUNE_TAU, max_rounds=8):
    """Local search over the reported set: drop one user, redetect on the residual.

    A swap is kept when the pruned set shrinks, or keeps its size with a
    residual lower by more than the prune floor.  This untangles cases
    where several wrong sequences jointly stand in for one true user.
    """
    n = y.shape[0]
    ids = list(ids)
    for _ in range(max_rounds):
        keep, h, gains, residual = prune_users(y, C, tau)
        ids, C = [ids[k] for k in keep], C[:, keep]
        if not ids:
            break
        floor = tau * residual / max(n - len(ids), 1) * n
        R = np.empty((len(ids), n), dtype=complex)
        for j in range(len(ids)):
            rest = np.delete(C, j, axis=1)
            if rest.shape[1]:
                sol, *_ = np.linalg.lstsq(rest, y, rcond=None)
                R[j] = y - rest @ sol
            else:
                R[j] = y
        det = detect_batch(R)
        new_ids = det.user_ids()
        swapped = False
        for j in np.argsort(gains, kind="stable"):
            if new_ids[j] in ids:
                continue
            trial_ids = ids + [new_ids[j]]
            trial_C = np.column_stack([C, det.chips[j]])
            t_keep, _, _, t_res = prune_users(y, trial_C, tau)
            if len(t_keep) < len(ids) or (len(t_keep) == len(ids) and t_res < residual - floor):
                ids, C = [trial_ids[k] for k in t_keep], trial_C[:, t_keep]
                swapped = True
                break
        if not swapped:
            break
    return ids, C


def _report(y, slot_layers, slot_chips, iterations, ops, tau):
    ids, C = _dedup(slot_layers, slot_chips)
    ids, C = merge_triples(y, ids, C, tau)
    ids, C = swap_refine(y, ids, C, tau)
    keep, h, gains, residual = prune_users(y, C, tau)
    ops += _ls_cost(y.shape[0], len(ids))
    return ActiveSetReport(
        ids=[ids[k] for k in keep],
        h_hats=np.asarray(h),
        gains=np.asarray(gains),
        iterations_used=int(iterations),
        residual=residual,
        ops=int(ops),
        candidates=ids,
    )


def _check_args(y, k_max, n_max=1):
    y = np.atleast_2d(np.asarray(y, dtype=complex))
    if k_max < 1 or n_max < 1:
        raise ValueError(f"need k_max >= 1 and n_max >= 1, got {k_max}, {n_max}")
    return y


def iterative_batch(y, k_max, n_max, params=None, tau=DEFAULT_PRUNE_TAU, early_stop=False):
    """Iterative detection on each row of ``y``; returns one report per row.

    Every row runs ``n_max`` sweeps.  ``iterations_used`` is the sweep from
    which the reported (pruned) active set stayed unchanged until the end.
    With ``early_stop`` a row stops as soon as that set repeats.  Spare
    slots lock onto noise and change every sweep, so raw slot contents are
    not a usable convergence signal.
    """
    y = _check_args(y, k_max, n_max)
    B, n = y.shape
    m = n.bit_length() - 1
    C = np.zeros((B, k_max, n))
    h = np.zeros((B, k_max), dtype=complex)
    W = np.full((B, k_max, m - 1), -1, dtype=np.int64)
    ops = np.zeros(B, dtype=np.int64)
    settled = np.zeros(B, dtype=np.int64)
    keys = [None] * B
    act = np.arange(B)
    for it in range(1, n_max + 1):
        if act.size == 0:
            break
        for k in range(k_max):
            h_others = h[act].copy()
            h_others[:, k] = 0.0
            interference = np.einsum("bk,bkn->bn", h_others, C[act])
            det = detect_batch(y[act] - interference, params)
            C[act, k] = det.chips
            h[act, k] = det.h_hat
            W[act, k] = det.layers
            ops[act] += det.ops
        changed = []
        for b in act:
            h[b] = ls_channels(y[b], C[b].T)
            ops[b] += _ls_cost(n, k_max)
            ids, cols = _dedup(W[b], C[b])
            keep = prune_users(y[b], cols, tau)[0]
            new_key = sorted(ids[k] for k in keep)
            if new_key != keys[b]:
                settled[b] = it
                changed.append(b)
            keys[b] = new_key
        if early_stop:
            act = np.array(changed, dtype=np.int64)
    return [_report(y[b], W[b], C[b], settled[b], ops[b], tau) for b in range(B)]


def sic_batch(y, k_max, params=None, tau=DEFAULT_PRUNE_TAU):
    """Strongest-first successive cancellation with an LS refit after every detection."""
    y = _check_args(y, k_max)
    B, n = y.shape
    m = n.bit_length() - 1
    C = np.zeros((B, k_max, n))
    W = np.zeros((B, k_max, m - 1), dtype=np.int64)
    ops = np.zeros(B, dtype=np.int64)
    r = y.copy()
    for k in range(k_max):
        det = detect_batch(r, params)
        C[:, k] = det.chips
        W[:, k] = det.layers
        ops += det.ops
        for b in range(B):
            h = ls_channels(y[b], C[b, : k + 1].T)
            r[b] = y[b] - C[b, : k + 1].T @ h
            ops[b] += _ls_cost(n, k + 1)
    return [_report(y[b], W[b], C[b], 1, ops[b], tau) for b in range(B)]


def detect_iterative(y, k_max, n_max, params=None, tau=DEFAULT_PRUNE_TAU, early_stop=False):
    """Iterative multi-user detection and LS channel estimation for one received signal."""
    y = np.asarray(y, dtype=complex)
    if y.ndim != 1:
        raise ValueError("detect_iterative takes a single 1-D signal; use iterative_batch")
    return iterative_batch(y[None, :], k_max, n_max, params, tau, early_stop)[0]


def detect_sic(y, k_max, params=None, tau=DEFAULT_PRUNE_TAU):
    """Successive interference cancellation baseline for one received signal."""
    y = np.asarray(y, dtype=complex)
    if y.ndim != 1:
        raise ValueError("detect_sic takes a single 1-D signal; use sic_batch")
    return sic_batch(y[None, :], k_max, params, tau)[0]
