"""Monte-Carlo sweep driver and command-line entry point.

Every grid point ``(snr, K)`` runs ``trials`` independent scenarios.  Trial
``t`` always draws its users, channels and noise from the Philox streams
keyed by ``(seed, t)``, so results do not depend on worker count or on how
trials are scheduled.  Trials are processed in fixed-size chunks and
aggregated in trial order.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .analysis import rayleigh_sequence_success_bound, sequence_success_bound
from .channel_sim import FADING_MODELS, draw_scenario, snr_to_n0, synthesize_batch
from .detect_multi import DEFAULT_PRUNE_TAU, iterative_batch, sic_batch
from .detect_single import ListParams, detect_batch
from .rm_core import MAX_ORDER, MIN_ORDER, capacity

log = logging.getLogger(__name__)

ALGORITHMS = ("lld", "list", "iterative", "sic")
CSV_COLUMNS = (
    "m",
    "snr_db",
    "K",
    "algorithm",
    "L",
    "n_max",
    "k_max",
    "seed",
    "trials",
    "success_prob",
    "channel_mse",
    "far",
    "mean_iterations",
    "mean_mult_count",
    "bound_value",
)
THREADS_ENV = "RM_ACCESS_THREADS"
CHUNK_TRIALS = 250


@dataclass
class SweepConfig:
    m: int = 8
    snr_db: list = field(default_factory=lambda: [0.0])
    users: list = field(default_factory=lambda: [1])
    trials: int = 2000
    algorithm: str = "lld"
    L: tuple = (1,)
    n_max: int = 5
    k_max: int | None = None  # None means K + 2
    tau: float = DEFAULT_PRUNE_TAU
    seed: int = 0
    out: str | None = None
    fading: str = "rayleigh"

    def validate(self):
        if not MIN_ORDER <= self.m <= MAX_ORDER:
            raise ValueError(f"m must be in [{MIN_ORDER}, {MAX_ORDER}], got {self.m}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not self.snr_db or not self.users:
            raise ValueError("SNR and user lists must be non-empty")
        if any(not math.isfinite(s) for s in self.snr_db):
            raise ValueError("SNR values must be finite")
        if any(K < 0 or K > capacity(self.m) for K in self.users):
            raise ValueError(f"user counts must lie in [0, {capacity(self.m)}]")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.fading not in FADING_MODELS:
            raise ValueError(f"fading must be one of {FADING_MODELS}, got {self.fading!r}")
        ListParams(self.L).widths(self.m)
        if self.n_max < 1:
            raise ValueError(f"n_max must be >= 1, got {self.n_max}")
        if self.k_max is not None and self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")
        if self.tau < 0:
            raise ValueError(f"prune factor must be non-negative, got {self.tau}")
        return self

    def list_params(self):
        """List parameters, or None when the plain detector is meant."""
        if self.algorithm == "lld" or tuple(self.L) == (1,):
            return None
        return ListParams(self.L)

    def effective_k_max(self, K):
        if self.algorithm in ("lld", "list"):
            return 1
        return self.k_max if self.k_max is not None else K + 2

    def effective_n_max(self):
        return self.n_max if self.algorithm == "iterative" else 1


@dataclass
class MetricsRow:
    m: int
    snr_db: float
    K: int
    algorithm: str
    L: str
    n_max: int
    k_max: int
    seed: int
    trials: int
    success_prob: float
    channel_mse: float
    far: float
    mean_iterations: float
    mean_mult_count: float
    bound_value: float


def _format(value):
    if isinstance(value, float):
        return format(value, ".6g")
    return str(value)


def emit_csv(rows, path):
    """Write the header and one line per row; floats carry 6 significant digits."""
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(",".join(_format(getattr(row, name)) for name in CSV_COLUMNS))
    text = "\n".join(lines) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="ascii", newline="") as fh:
            fh.write(text)


def _run_chunk(cfg, snr_db, K, start, stop):
    """Per-trial outcomes for trials ``start..stop-1`` at one grid point."""
    n0 = snr_to_n0(snr_db)
    scenarios = [draw_scenario(cfg.m, K, n0, cfg.seed, t, cfg.fading) for t in range(start, stop)]
    y = synthesize_batch(scenarios)
    params = cfg.list_params()
    if cfg.algorithm in ("lld", "list"):
        det = detect_batch(y, params)
        reports = [
            (ids, [h], 1, det.ops) for ids, h in zip(([i] for i in det.user_ids()), det.h_hat)
        ]
    else:
        k_max = cfg.effective_k_max(K)
        if cfg.algorithm == "iterative":
            raw = iterative_batch(y, k_max, cfg.n_max, params, cfg.tau)
        else:
            raw = sic_batch(y, k_max, params, cfg.tau)
        reports = [(r.ids, list(r.h_hats), r.iterations_used, r.ops) for r in raw]

    n = stop - start
    hits = np.zeros(n, dtype=np.int64)
    sq_err = np.zeros(n)
    false = np.zeros(n, dtype=np.int64)
    iters = np.zeros(n)
    ops = np.zeros(n)
    for t, (sc, (ids, h_hats, it, op)) in enumerate(zip(scenarios, reports)):
        found = dict(zip(ids, h_hats))
        for user_id, h in zip(sc.ids, sc.h):
            if user_id in found:
                hits[t] += 1
                sq_err[t] += abs(found[user_id] - h) ** 2
        active = set(sc.ids)
        false[t] = sum(1 for user_id in ids if user_id not in active)
        iters[t] = it
        ops[t] = op
    return hits, sq_err, false, iters, ops


def _bound(cfg, snr_db, K):
    if K != 1 or cfg.algorithm not in ("lld", "list"):
        return math.nan
    n0 = snr_to_n0(snr_db)
    if cfg.fading == "unit":
        return sequence_success_bound(cfg.m, 1.0, n0)
    return rayleigh_sequence_success_bound(cfg.m, n0)


def default_workers():
    env = os.environ.get(THREADS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_sweep(cfg, workers=None):
    """Run every (snr, K) grid point and return one MetricsRow each, in grid order."""
    cfg.validate()
    workers = default_workers() if workers is None else max(1, int(workers))
    tasks = []
    for snr_db in cfg.snr_db:
        for K in cfg.users:
            for start in range(0, cfg.trials, CHUNK_TRIALS):
                tasks.append((cfg, snr_db, K, start, min(start + CHUNK_TRIALS, cfg.trials)))

    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, *zip(*tasks)))
    else:
        results = [_run_chunk(*task) for task in tasks]

    rows = []
    pos = 0
    label = ";".join(str(x) for x in cfg.L)
    for snr_db in cfg.snr_db:
        for K in cfg.users:
            parts = []
            while pos < len(tasks) and tasks[pos][1] == snr_db and tasks[pos][2] == K:
                parts.append(results[pos])
                pos += 1
            hits, sq_err, false, iters, ops = (np.concatenate(col) for col in zip(*parts))
            total_hits = int(hits.sum())
            inactive = capacity(cfg.m) - K
            rows.append(
                MetricsRow(
                    m=cfg.m,
                    snr_db=float(snr_db),
                    K=K,
                    algorithm=cfg.algorithm,
                    L=label if cfg.algorithm != "lld" else "1",
                    n_max=cfg.effective_n_max(),
                    k_max=cfg.effective_k_max(K),
                    seed=cfg.seed,
                    trials=cfg.trials,
                    success_prob=float(np.mean(hits / K)) if K else math.nan,
                    channel_mse=float(sq_err.sum() / total_hits) if total_hits else math.nan,
                    far=float(np.mean(false / inactive)) if inactive else 0.0,
                    mean_iterations=float(np.mean(iters)),
                    mean_mult_count=float(np.mean(ops)),
                    bound_value=float(_bound(cfg, snr_db, K)),
                )
            )
            log.info("m=%d snr=%g K=%d success=%.4f", cfg.m, snr_db, K, rows[-1].success_prob)
    return rows


def _parse_grid(text, cast):
    """``lo:hi:step`` (inclusive) or a comma-separated list."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError(f"range must be lo:hi:step, got {text!r}")
        lo, hi, step = (float(p) for p in parts)
        if step <= 0 or hi < lo:
            raise ValueError(f"bad range {text!r}")
        count = int(math.floor((hi - lo) / step + 1e-9)) + 1
        return [cast(round(lo + i * step, 10)) for i in range(count)]
    return [cast(p) for p in text.split(",") if p.strip()]


def parse_snr(text):
    return _parse_grid(text, float)


def parse_users(text):
    return _parse_grid(text, lambda v: int(float(v)))


def parse_list(text):
    return tuple(int(p) for p in str(text).split(",") if p.strip())


def read_config_file(path):
    """Flat ``key = value`` file; ``#`` starts a comment."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


# config-file key -> (SweepConfig field, parser)
_KEYS = {
    "m": ("m", int),
    "snr": ("snr_db", parse_snr),
    "users": ("users", parse_users),
    "trials": ("trials", int),
    "algo": ("algorithm", str),
    "list": ("L", parse_list),
    "iters": ("n_max", int),
    "kmax": ("k_max", int),
    "prune_tau": ("tau", float),
    "seed": ("seed", int),
    "out": ("out", str),
    "channel": ("fading", str),
}


def build_config(values):
    cfg = SweepConfig()
    known = {f.name for f in fields(SweepConfig)}
    updates = {}
    for key, raw in values.items():
        if key not in _KEYS:
            raise ValueError(f"unknown config key {key!r}")
        name, parse = _KEYS[key]
        assert name in known
        updates[name] = parse(raw)
    cfg = replace(cfg, **updates)
    if cfg.algorithm == "list" and "L" not in updates:
        cfg.L = (2, 2)
    return cfg


def make_parser():
    p = argparse.ArgumentParser(prog="rm-access", description="Monte-Carlo sweeps of RM-sequence random access detection")
    p.add_argument("--config", help="key = value file; flags override its entries")
    p.add_argument("--m", help="sequence order (length 2^m)")
    p.add_argument("--snr", help="SNR grid in dB: lo:hi:step or comma list")
    p.add_argument("--users", help="active-user counts: lo:hi:step or comma list")
    p.add_argument("--trials", help="trials per grid point")
    p.add_argument("--algo", choices=ALGORITHMS)
    p.add_argument("--list", help="list widths, e.g. 2,2")
    p.add_argument("--iters", help="maximum iterations (iterative only)")
    p.add_argument("--kmax", help="maximum detected users (default K+2)")
    p.add_argument("--prune-tau", dest="prune_tau", help="residual-energy prune factor")
    p.add_argument("--seed")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--channel", choices=FADING_MODELS, help="fading model (default rayleigh)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _attach_negative_values(argv):
    # "--snr -10:5:1" would otherwise be taken for an unknown option
    out = []
    it = iter(argv)
    for arg in it:
        if arg in ("--snr", "--users"):
            value = next(it, None)
            out.append(arg if value is None else f"{arg}={value}")
        else:
            out.append(arg)
    return out


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    args = make_parser().parse_args(_attach_negative_values(argv))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        values = read_config_file(args.config) if args.config else {}
        for key in _KEYS:
            flag = getattr(args, key, None)
            if flag is not None:
                values[key] = flag
        cfg = build_config(values).validate()
        rows = run_sweep(cfg)
        emit_csv(rows, cfg.out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1
    return 0
