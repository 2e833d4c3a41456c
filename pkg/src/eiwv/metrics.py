"""Post-processing of run logs: rolling rewards, ledgers and long-term reports.

Everything here works from the CSV files a run writes (``steps.csv``,
``workers.csv`` and ``meta.json``), so any number reported can be recomputed
from disk.  Floats are written with ``repr`` so a reload is bit-exact.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .env import platform_utility

__all__ = [
    "rolling_mean",
    "write_step_csv",
    "read_step_csv",
    "write_worker_csv",
    "read_worker_csv",
    "RunLedger",
    "LedgerMismatch",
    "ConfigMismatch",
    "load_run",
    "recompute_utilities",
    "check_ledger",
    "ir_report",
    "ic_strategyproof_report",
    "write_report_csv",
    "summary_text",
    "STRATEGY_KEYS",
]

STEP_INT_FIELDS = {"t", "tasks", "n_participants"}
STEP_BOOL_FIELDS = {"oracle_called", "collusion_active"}
WORKER_FIELDS = ("rate", "payment", "effort", "tasks", "utility")

# config keys allowed to differ between an honest and a deviant run
STRATEGY_KEYS = frozenset({"deviant_strategy", "deviant_fraction", "collusion", "collusion_rate", "group_fraction"})


class LedgerMismatch(AssertionError):
    pass


class ConfigMismatch(ValueError):
    pass


def rolling_mean(series, W: int) -> np.ndarray:
    """``out[t] = mean(series[max(0, t-W+1) .. t])``.

    Computed window by window with ``np.mean`` so the values agree bit for bit
    with the environment's own running reward.
    """
    if W < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    return np.array([np.mean(x[max(0, t - W + 1) : t + 1]) for t in range(len(x))])


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_step_csv(rows, path) -> None:
    rows = list(rows)
    if not rows:
        raise ValueError("no rows to write")
    fields = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r[k]) for k in fields])


def read_step_csv(path) -> list[dict]:
    out = []
    with open(path, newline="") as fh:
        for r in csv.DictReader(fh):
            row = {}
            for k, v in r.items():
                if k in STEP_INT_FIELDS:
                    row[k] = int(v)
                elif k in STEP_BOOL_FIELDS:
                    row[k] = v == "1"
                else:
                    row[k] = float(v)
            out.append(row)
    return out


def write_worker_csv(workers: dict, path) -> None:
    """Long format: one row per (step, worker)."""
    arrays = [np.asarray(workers[k]) for k in WORKER_FIELDS]
    T, N = arrays[0].shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "worker", *WORKER_FIELDS])
        for t in range(T):
            for i in range(N):
                w.writerow([t, i, *(_fmt(a[t, i]) if k != "tasks" else str(int(a[t, i])) for k, a in zip(WORKER_FIELDS, arrays))])


def read_worker_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        return {k: np.zeros((0, 0)) for k in WORKER_FIELDS}
    T = max(int(r["t"]) for r in rows) + 1
    N = max(int(r["worker"]) for r in rows) + 1
    out = {k: np.zeros((T, N), dtype=int if k == "tasks" else float) for k in WORKER_FIELDS}
    for r in rows:
        t, i = int(r["t"]), int(r["worker"])
        for k in WORKER_FIELDS:
            out[k][t, i] = int(r[k]) if k == "tasks" else float(r[k])
    return out


@dataclass
class RunLedger:
    """Cumulative bookkeeping of one run, rebuilt from its logs."""

    platform_utility: np.ndarray
    worker_utility: np.ndarray  # (T, N) per-step
    total_payment: np.ndarray
    payment_cost: np.ndarray
    oracle_calls: int
    collusion_steps: frozenset
    meta: dict = field(default_factory=dict)
    # utility priced with the true accuracy; what the platform really got
    true_platform_utility: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return len(self.platform_utility)

    @property
    def cumulative_platform(self) -> float:
        total = 0.0
        for u in self.platform_utility:
            total += float(u)
        return total

    @property
    def cumulative_true_platform(self) -> float:
        if self.true_platform_utility is None:
            raise ValueError("ledger has no true-utility series")
        return float(sum(float(u) for u in self.true_platform_utility))

    @property
    def cumulative_workers(self) -> np.ndarray:
        """Running per-worker sums; row ``t`` is the ledger after step ``t``."""
        return np.cumsum(self.worker_utility, axis=0)

    @property
    def final_workers(self) -> np.ndarray:
        acc = np.zeros(self.worker_utility.shape[1])
        for row in self.worker_utility:
            acc += row
        return acc

    @classmethod
    def from_logs(cls, rows, workers, meta=None) -> "RunLedger":
        return cls(
            platform_utility=np.array([r["utility"] for r in rows], dtype=float),
            worker_utility=np.asarray(workers["utility"], dtype=float),
            total_payment=np.array([r["total_payment"] for r in rows], dtype=float),
            payment_cost=np.array([r["payment_cost"] for r in rows], dtype=float),
            oracle_calls=int(sum(bool(r["oracle_called"]) for r in rows)),
            collusion_steps=frozenset(int(r["t"]) for r in rows if r["collusion_active"]),
            meta=dict(meta or {}),
            true_platform_utility=(
                np.array([r["true_utility"] for r in rows], dtype=float) if rows and "true_utility" in rows[0] else None
            ),
        )

    @classmethod
    def from_dir(cls, directory) -> "RunLedger":
        rows, workers, meta = load_run(directory)
        return cls.from_logs(rows, workers, meta)


def load_run(directory):
    rows = read_step_csv(os.path.join(directory, "steps.csv"))
    workers = read_worker_csv(os.path.join(directory, "workers.csv"))
    meta_path = os.path.join(directory, "meta.json")
    meta = {}
    if os.path.exists(meta_path):
        with open(meta_path) as fh:
            meta = json.load(fh)
    return rows, workers, meta


def recompute_utilities(rows, workers, eta: float, alpha: float, accuracy_term: str = "count"):
    """Platform and worker utilities from the raw logged quantities.

    Platform: ``scale * signal - eta * payment * (1 + alpha * oracle)``;
    worker: ``payment - effort * tasks``.  The arithmetic mirrors the
    environment's operation order so equality is exact.
    """
    platform = np.empty(len(rows))
    cost = np.empty(len(rows))
    for k, r in enumerate(rows):
        scale = float(r["tasks"]) if accuracy_term == "count" else 1.0
        platform[k], cost[k] = platform_utility(
            r["signal_accuracy"], r["total_payment"], eta, alpha, r["oracle_called"], scale
        )
    worker = np.asarray(workers["payment"], dtype=float) - np.asarray(workers["effort"], dtype=float) * np.asarray(
        workers["tasks"]
    )
    return platform, cost, worker


def check_ledger(rows, workers, meta) -> RunLedger:
    """Recompute every utility from the logs and raise on any difference."""
    platform, cost, worker = recompute_utilities(
        rows, workers, meta["eta"], meta["alpha"], meta.get("accuracy_term", "count")
    )
    ledger = RunLedger.from_logs(rows, workers, meta)
    if not np.array_equal(platform, ledger.platform_utility):
        bad = int(np.flatnonzero(platform != ledger.platform_utility)[0])
        raise LedgerMismatch(f"platform utility differs at t={bad}")
    if not np.array_equal(cost, ledger.payment_cost):
        raise LedgerMismatch("payment cost does not carry the oracle surcharge exactly")
    if not np.array_equal(worker, ledger.worker_utility):
        raise LedgerMismatch("worker utilities differ from payment - effort * tasks")
    rewards = rolling_mean(platform, int(meta["window"]))
    if not np.array_equal(rewards, np.array([r["reward"] for r in rows])):
        raise LedgerMismatch("rolling reward differs from the mean of the utility window")
    if ledger.true_platform_utility is not None:
        true_u = np.array([
            platform_utility(r["true_accuracy"], r["total_payment"], meta["eta"], meta["alpha"], r["oracle_called"],
                             float(r["tasks"]) if meta.get("accuracy_term", "count") == "count" else 1.0)[0]
            for r in rows
        ])
        if not np.array_equal(true_u, ledger.true_platform_utility, equal_nan=True):
            raise LedgerMismatch("true utility differs from the true-accuracy recomputation")
        true_r = rolling_mean(true_u, int(meta["window"]))
        if not np.array_equal(true_r, np.array([r["true_reward"] for r in rows]), equal_nan=True):
            raise LedgerMismatch("true rolling reward differs from the mean of the true-utility window")
    for key, value in (("cumulative_platform_utility", ledger.cumulative_platform),):
        if key in meta and meta[key] != value:
            raise LedgerMismatch(f"{key}: logged {meta[key]!r}, recomputed {value!r}")
    if "cumulative_worker_utility" in meta:
        if not np.array_equal(np.asarray(meta["cumulative_worker_utility"]), ledger.final_workers):
            raise LedgerMismatch("cumulative worker utility differs")
    return ledger


def ir_report(ledger: RunLedger) -> list[dict]:
    """Per worker: cumulative utility and whether it is non-negative."""
    final = ledger.final_workers
    return [{"worker": i, "cumulative_utility": float(u), "ir": bool(u >= 0)} for i, u in enumerate(final)]


def _fingerprint(meta: dict) -> dict:
    cfg = {k: v for k, v in meta.get("config", {}).items() if k not in STRATEGY_KEYS}
    return {"config": cfg, "seed": meta.get("seed"), "mode": meta.get("mode")}


def ic_strategyproof_report(honest: RunLedger, deviant: RunLedger, group=None) -> dict:
    """Compare an honest run with one where a worker set deviated.

    The two ledgers must come from the same seed, mode and configuration up
    to the strategy keys.  ``group`` selects the deviating workers (default:
    everyone).  Differences are ``deviant - honest``.
    """
    fa, fb = _fingerprint(honest.meta), _fingerprint(deviant.meta)
    if fa != fb:
        diff = sorted(k for k in set(fa["config"]) | set(fb["config"]) if fa["config"].get(k) != fb["config"].get(k))
        if fa["seed"] != fb["seed"]:
            diff.append("seed")
        if fa["mode"] != fb["mode"]:
            diff.append("mode")
        raise ConfigMismatch(f"runs are not paired; differing keys: {diff}")
    if honest.horizon != deviant.horizon or honest.worker_utility.shape != deviant.worker_utility.shape:
        raise ConfigMismatch("runs have different shapes")
    n = honest.worker_utility.shape[1]
    mask = np.ones(n, dtype=bool) if group is None else np.isin(np.arange(n), list(group))
    dw = deviant.final_workers - honest.final_workers
    dp = deviant.cumulative_platform - honest.cumulative_platform
    dtrue = float("nan")
    if honest.true_platform_utility is not None and deviant.true_platform_utility is not None:
        dtrue = deviant.cumulative_true_platform - honest.cumulative_true_platform
    return {
        "worker_diff": dw,
        "group_diff": float(dw[mask].sum()),
        "platform_diff": float(dp),
        # observed utility is fooled by collusion; damage is judged on the true one
        "true_platform_diff": dtrue,
        # honest weakly better for every deviating worker / for the group
        "strategyproof": bool(np.all(dw[mask] <= 0)),
        "group_strategyproof": bool(dw[mask].sum() <= 0),
    }


def write_report_csv(records: list[dict], path) -> None:
    if not records:
        raise ValueError("empty report")
    fields = list(records[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: _fmt(v) if isinstance(v, (float, np.floating, bool, np.bool_)) else v for k, v in r.items()})


def summary_text(records: list[dict]) -> str:
    """Plain-text table of per-run records grouped by mode."""
    lines = []
    modes = sorted({r["mode"] for r in records})
    lines.append(f"{'mode':<16}{'runs':>5}{'median final reward':>22}{'min':>10}{'max':>10}{'IR pass':>9}")
    for m in modes:
        rs = [r for r in records if r["mode"] == m and r.get("status", "ok") == "ok"]
        if not rs:
            lines.append(f"{m:<16}{0:>5}  (all seeds failed)")
            continue
        f = np.array([r["final_reward"] for r in rs])
        ir = sum(bool(r["ir_pass"]) for r in rs)
        lines.append(f"{m:<16}{len(rs):>5}{np.median(f):>22.4f}{f.min():>10.4f}{f.max():>10.4f}{ir:>6}/{len(rs)}")
    if any(str(m).startswith("dqn_uniform") for m in modes):
        lines.append("note: dqn_uniform is a structural stand-in for the discrete uniform-payment baseline")
    failed = [r for r in records if r.get("status", "ok") != "ok"]
    for r in failed:
        lines.append(f"FAILED {r['mode']} seed {r['seed']}: {r['status']}")
    return "\n".join(lines) + "\n"
