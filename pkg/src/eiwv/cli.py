"""Command line entry point.

    eiwv run --config exp.cfg [--seeds 1,2,3] [--mode a2c_is_oracle] [--out dir]
    eiwv ablate --axis oracle_cost [--values 0.05,0.4] [--config exp.cfg]
    eiwv report RUN_DIR [--deviant RUN_DIR]
    eiwv convert SRC DEST --worker-col w --task-col t --label-col l [--gold-col g]
    eiwv config            # print the default configuration

Every config key can also be set with ``--set section.key=value`` or an
``EIWV_<SECTION>__<KEY>`` environment variable.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ENV_PREFIX, ExperimentConfig, apply_overrides, dump_config, load_config
from .env import ConfigError


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _value_list(text):
    values = [x.strip() for x in text.split(",") if x.strip()]
    if not values:
        raise argparse.ArgumentTypeError("empty value list")
    return values


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    pairs = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        pairs[k.strip()] = v.strip()
    if getattr(args, "seeds", None):
        pairs["run.seeds"] = ",".join(map(str, args.seeds))
    if getattr(args, "out", None):
        pairs["run.out"] = args.out
    if getattr(args, "jobs", None):
        pairs["run.jobs"] = str(args.jobs)
    return apply_overrides(cfg, pairs) if pairs else cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="eiwv", description="Sequential crowdsourcing incentive experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key=value config file")
        sp.add_argument("--seeds", type=_int_list, help="comma-separated seeds")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--jobs", type=int, help="parallel worker processes")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")

    r = sub.add_parser("run", help="train and log one or more modes over seeds")
    common(r)
    r.add_argument("--mode", type=_value_list, help="agent mode(s), comma separated")

    a = sub.add_parser("ablate", help="sweep one environment axis")
    common(a)
    a.add_argument("--axis", required=True)
    a.add_argument("--values", type=_value_list, help="axis values (default: the preset)")
    a.add_argument("--mode", type=_value_list)

    rep = sub.add_parser("report", help="IR report of a run directory, optionally IC versus a deviant run")
    rep.add_argument("run_dir")
    rep.add_argument("--deviant")
    rep.add_argument("--out", help="write the report CSV here")

    c = sub.add_parser("convert", help="convert a headed CSV export to triples + gold")
    c.add_argument("src")
    c.add_argument("dest")
    c.add_argument("--worker-col", required=True)
    c.add_argument("--task-col", required=True)
    c.add_argument("--label-col", required=True)
    c.add_argument("--gold-col")
    c.add_argument("--label-order", type=_value_list)

    cf = sub.add_parser("config", help="print the effective configuration")
    cf.add_argument("--config")
    cf.add_argument("--set", action="append", metavar="KEY=VALUE")
    return p


def _cmd_run(args) -> int:
    from .experiment import run_experiment

    cfg = _config(args)
    res = run_experiment(cfg, modes=args.mode, out=cfg.run.out)
    with open(f"{res.out}/summary.txt") as fh:
        print(fh.read(), end="")
    _status_table(res.records)
    return res.exit_code


def _cmd_ablate(args) -> int:
    from .experiment import ABLATION_AXES, ablation

    if args.axis not in ABLATION_AXES:
        print(f"error: unknown axis {args.axis!r}; choose from {', '.join(sorted(ABLATION_AXES))}", file=sys.stderr)
        return 2
    cfg = _config(args)
    res = ablation(cfg, args.axis, args.values, out=args.out, modes=args.mode)
    with open(f"{res.out}/summary.txt") as fh:
        print(fh.read(), end="")
    _status_table(res.records)
    return res.exit_code


def _status_table(records):
    print("\nseed status:")
    for r in records:
        print(f"  {r.get('label', r['mode'])} seed {r['seed']}: {r['status']}")


def _cmd_report(args) -> int:
    from .metrics import RunLedger, check_ledger, ic_strategyproof_report, ir_report, load_run, write_report_csv

    rows, workers, meta = load_run(args.run_dir)
    ledger = check_ledger(rows, workers, meta)
    ir = ir_report(ledger)
    bad = [r for r in ir if not r["ir"]]
    print(f"horizon {ledger.horizon}, oracle calls {ledger.oracle_calls}, collusion steps {len(ledger.collusion_steps)}")
    print(f"cumulative platform utility {ledger.cumulative_platform:.4f}")
    print(f"IR: {len(ir) - len(bad)}/{len(ir)} workers with non-negative cumulative utility")
    if args.out:
        write_report_csv(ir, args.out)
    if args.deviant:
        dev = RunLedger.from_dir(args.deviant)
        rep = ic_strategyproof_report(ledger, dev)
        print(f"platform utility change (deviant - honest): {rep['platform_diff']:.4f} observed, "
              f"{rep['true_platform_diff']:.4f} true")
        print(f"group utility change: {rep['group_diff']:.4f}")
        print(f"strategyproof: {rep['strategyproof']}, group strategyproof: {rep['group_strategyproof']}")
    return 0 if not bad else 1


def _cmd_convert(args) -> int:
    from .dataset import convert_labeled_csv

    resp, gold = convert_labeled_csv(
        args.src, args.dest, args.worker_col, args.task_col, args.label_col, args.gold_col, args.label_order
    )
    print(resp)
    if gold:
        print(gold)
    return 0


def _cmd_config(args) -> int:
    args.seeds = args.out = args.jobs = None
    print(dump_config(_config(args)), end="")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"run": _cmd_run, "ablate": _cmd_ablate, "report": _cmd_report, "convert": _cmd_convert,
                "config": _cmd_config}
    try:
        return handlers[args.command](args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())


__all__ = ["main", "build_parser", "ENV_PREFIX"]
