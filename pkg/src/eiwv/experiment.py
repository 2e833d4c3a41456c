"""Run configured experiments over seeds and modes, and ablation sweeps.

Layout of an output directory::

    <out>/<mode>/seed_<s>/steps.csv, workers.csv, meta.json
    <out>/report.csv      one row per (mode, seed)
    <out>/summary.txt     per-mode medians and failures
    <out>/summary.json
    <out>/reward.svg      rolling reward, mean and min/max band per mode
"""

from __future__ import annotations

import json
import logging
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .agent import make_agent
from .config import ExperimentConfig, apply_overrides
from .dataset import GoldLabels, load_gold, load_responses, standin_dataset, synth_generate
from .env import CrowdsourcingEnv
from .metrics import ir_report, load_run, check_ledger, summary_text, write_report_csv
from .plot import write_band_chart

__all__ = ["load_dataset", "run_one", "run_experiment", "ablation", "ABLATION_AXES", "ExperimentResult"]

log = logging.getLogger(__name__)

# axis -> (config key, default values)
ABLATION_AXES = {
    "oracle_cost": ("env.alpha", (0.05, 0.1, 0.2, 0.3, 0.4)),
    "collusion_rate": ("crowd.collusion_rate", (50, 100, 150)),
    "tasks_per_step": ("env.tasks_per_step", (20, 40, 60, 80)),
    "max_payment": ("env.p_max", (13, 15, 17, 19, 21)),
}


def load_dataset(spec):
    """``(table, gold)`` for a dataset spec."""
    if spec.name == "file":
        table = load_responses(spec.path, spec.format, spec.num_classes)
        gold = load_gold(spec.gold, table.num_classes, table) if spec.gold else GoldLabels({}, table.num_classes)
        return table, gold
    if spec.name == "synth":
        rng = np.random.default_rng(spec.seed)
        return synth_generate(
            spec.n_workers, spec.n_tasks, spec.classes, (spec.accuracy_low, spec.accuracy_high), spec.density, rng
        )
    return standin_dataset(spec.name, spec.seed)


@dataclass
class ExperimentResult:
    records: list
    out: str

    @property
    def failed(self) -> list:
        return [r for r in self.records if r["status"] != "ok"]

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0

    def final(self, mode: str, key: str = "final_reward") -> np.ndarray:
        return np.array([r[key] for r in self.records if r["mode"] == mode and r["status"] == "ok"])


def run_one(cfg: ExperimentConfig, mode: str, seed: int, directory: str) -> dict:
    """Train one agent for one seed and write its logs; never raises."""
    record = {"mode": mode, "seed": seed, "dir": directory, "status": "ok"}
    try:
        cfg = apply_overrides(cfg, {"agent.mode": mode})
        table, gold = load_dataset(cfg.dataset)
        env = CrowdsourcingEnv(table, gold, cfg.env_config())
        agent = make_agent(mode, **cfg.agent_params())
        agent.fit(env, seed=seed)
        trained = agent.log_
        trained.meta.update(mode=mode, dataset=cfg.dataset.name)
        if mode == "dqn_uniform":
            trained.meta["note"] = "structural stand-in for the discrete uniform-payment baseline"
        trained.to_csv(directory)
        if hasattr(agent, "save"):
            agent.save(os.path.join(directory, "agent.ckpt"))
        rows, workers, meta = load_run(directory)
        ledger = check_ledger(rows, workers, meta)
        tasks = cfg.env.tasks_per_step
        record.update(
            final_reward=trained.final("true_reward"),
            final_observed_reward=trained.final("reward"),
            final_reward_per_task=trained.final("true_reward") / tasks,
            cumulative_platform_utility=ledger.cumulative_platform,
            oracle_calls=ledger.oracle_calls,
            collusion_steps=len(ledger.collusion_steps),
            ir_pass=all(r["ir"] for r in ir_report(ledger)),
            min_worker_utility=float(ledger.final_workers.min()),
        )
    except Exception as exc:  # a failing seed must not take the others down
        log.error("mode %s seed %s failed: %s", mode, seed, exc)
        record["status"] = f"{type(exc).__name__}: {exc}"
        record["traceback"] = traceback.format_exc()
    return record


def _curves(records, column="true_reward"):
    curves: dict[str, list] = {}
    for r in records:
        if r["status"] != "ok":
            continue
        rows, _, _ = load_run(r["dir"])
        curves.setdefault(r.get("label", r["mode"]), []).append([row[column] for row in rows])
    return {k: np.array(v) for k, v in curves.items()}


def _write_summary(records, out, title):
    ok = [r for r in records if r["status"] == "ok"]
    columns = ("label", "mode", "seed", "status", "final_reward", "final_observed_reward", "final_reward_per_task",
               "cumulative_platform_utility", "oracle_calls", "collusion_steps", "ir_pass", "min_worker_utility")
    table = [{k: r.get(k, "") for k in columns} for r in records]
    write_report_csv(table, os.path.join(out, "report.csv"))
    text = summary_text([{**r, "mode": r.get("label", r["mode"])} for r in records])
    with open(os.path.join(out, "summary.txt"), "w") as fh:
        fh.write(text)
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump({"records": [{k: v for k, v in r.items() if k != "traceback"} for r in records]}, fh, indent=1)
    if ok:
        write_band_chart(os.path.join(out, "reward.svg"), _curves(records), title=title, ylabel="rolling utility")
    return text


def _execute(jobs, n_jobs):
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(run_one, *j) for j in jobs]
            return [f.result() for f in futures]
    return [run_one(*j) for j in jobs]


def run_experiment(cfg: ExperimentConfig, modes=None, out=None, seeds=None) -> ExperimentResult:
    cfg.validate()
    modes = list(modes or [cfg.agent.mode])
    seeds = list(seeds or cfg.run.seeds)
    out = out or cfg.run.out
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.txt"), "w") as fh:
        from .config import dump_config

        fh.write(dump_config(cfg))
    jobs = [(cfg, m, s, os.path.join(out, m, f"seed_{s}")) for m in modes for s in seeds]
    records = _execute(jobs, cfg.run.jobs)
    _write_summary(records, out, title=f"{cfg.dataset.name}: " + ", ".join(modes))
    return ExperimentResult(records, out)


def ablation(cfg: ExperimentConfig, axis: str, values=None, out=None, modes=None) -> ExperimentResult:
    """Sweep one axis; each value gets its own sub-directory and curve."""
    if axis not in ABLATION_AXES:
        raise ValueError(f"unknown ablation axis {axis!r}; choose from {sorted(ABLATION_AXES)}")
    key, default = ABLATION_AXES[axis]
    values = list(default if values is None else values)
    if not values:
        raise ValueError("ablation needs at least one value")
    cfg.validate()
    out = out or os.path.join(cfg.run.out, f"ablate_{axis}")
    modes = list(modes or [cfg.agent.mode])
    jobs, labels = [], []
    for v in values:
        sub = apply_overrides(cfg, {key: str(v)})
        sub.validate()
        for m in modes:
            for s in cfg.run.seeds:
                jobs.append((sub, m, s, os.path.join(out, f"{axis}={v}", m, f"seed_{s}")))
                labels.append(f"{m} {axis}={v}" if len(modes) > 1 else f"{axis}={v}")
    records = _execute(jobs, cfg.run.jobs)
    for r, label in zip(records, labels):
        r["label"] = label
    text = _write_summary(records, out, title=f"ablation over {axis}")
    if axis == "tasks_per_step":
        with open(os.path.join(out, "summary.txt"), "w") as fh:
            fh.write(text)
            fh.write("\nper-task normalised final reward (median over seeds):\n")
            for label in dict.fromkeys(labels):
                vals = [r["final_reward_per_task"] for r in records if r["label"] == label and r["status"] == "ok"]
                if vals:
                    fh.write(f"  {label}: {np.median(vals):.4f}\n")
    return ExperimentResult(records, out)
