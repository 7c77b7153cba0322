"""Command line: ``dabsp {plan,infer,run,sweep} --config FILE``.

Exit status is 0 on success, 2 for an invalid scenario or input file and
3 when a numerical step fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from ..gmm import ContractViolation, NumericalError
from ..planner import ROW_FIELDS, select_action
from .config import ConfigError, load_config
from .episode import belief_record, replay, run_episode
from .studies import SWEEP_COLUMNS, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("dabsp")


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _config(args):
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, samples=args.samples, output_dir=args.out)


def cmd_plan(args):
    cfg = _config(args)
    report = select_action(
        cfg.prior, cfg.actions, cfg.world, cfg.cost, cfg.samples, cfg.seed,
        cfg.prune_threshold, cfg.gate_sigma, args.jobs or cfg.jobs,
    )
    rows = [e.row() for e in report.evaluations]
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "plan.csv", ROW_FIELDS, rows)
    _write_json(out / "plan.json", {
        "scenario": cfg.name, "seed": cfg.seed, "samples": cfg.samples,
        "chosen": report.chosen, "ranking": report.ranking(), "tie_break": report.tie_break,
        "evaluations": rows,
    })
    for r in rows:
        print(f"{r['action']:>8}  J={r['J']:.6g}  se={r['stderr']:.3g}  c_w={r['c_w']:.4g}  modes={r['modes_mean']:.2f}")
    print(f"chosen: {report.chosen}")
    return EXIT_OK


def _read_observations(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("--obs", f"cannot read: {exc.strerror}", source=str(path)) from exc
    if path.suffix == ".jsonl":
        recs = [json.loads(line) for line in text.splitlines() if line.strip()]
        steps = [(r["action"], r["z"]) for r in recs if r.get("kind") == "step"]
    else:
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError("--obs", f"not valid YAML/JSON ({exc})", source=str(path)) from exc
        data = data if isinstance(data, list) else [data]
        steps = []
        for k, d in enumerate(data):
            if not isinstance(d, dict) or "action" not in d or "z" not in d:
                raise ConfigError(f"[{k}]", "each observation needs `action` and `z`", source=str(path))
            steps.append((d["action"], d["z"]))
    return steps


def cmd_infer(args):
    cfg = _config(args)
    steps = _read_observations(args.obs)
    try:
        belief = replay(cfg, steps)
    except ContractViolation as exc:
        raise ConfigError("--obs", str(exc), source=args.obs) from exc
    rec = {"scenario": cfg.name, "steps": len(steps), "belief": belief_record(belief)}
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "posterior.json", rec)
    print(json.dumps(rec, sort_keys=True))
    return EXIT_OK


def cmd_run(args):
    cfg = _config(args)
    res = run_episode(cfg)
    paths = res.write(cfg.output_dir)
    print(res.csv_text(), end="")
    print(f"stop: {res.summary['stop_reason']} after {res.summary['steps']} step(s); wrote {paths['log']}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _config(args)
    if args.seeds is not None:
        cfg = cfg.with_overrides(sweep={"seeds": args.seeds})
    rows = run_sweep(cfg, jobs=args.jobs or cfg.jobs)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    _write_json(out / "sweep.json", {"scenario": cfg.name, "seed": cfg.seed, "rows": rows})
    for r in rows:
        print(f"{r['alias']:>9} {r['action']:>6}  J={r['J']:.4g}  c_w={r['c_w']:.4g}  "
              f"eps_bsp={r['eps_bsp']:.3f}  eps_da={r['eps_da']:.3f}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="dabsp", description="Data-association-aware belief space planning.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="scenario YAML, or the name of a bundled scenario")
        sp.add_argument("--seed", type=int, help="override the scenario seed")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--samples", type=int, help="override the number of simulated observations")
        return sp

    common(sub.add_parser("plan", help="rank the candidate actions from the prior")).add_argument("--jobs", type=int)
    sp = common(sub.add_parser("infer", help="posterior after logged actions and observations"))
    sp.add_argument("--obs", required=True, help="YAML/JSON {action, z} (or a list), or an episode .jsonl log")
    common(sub.add_parser("run", help="closed-loop episode"))
    sp = common(sub.add_parser("sweep", help="alias-set grid on the abstract world"))
    sp.add_argument("--jobs", type=int)
    sp.add_argument("--seeds", type=int, help="seeds per estimation-error cell")
    return p


COMMANDS = {"plan": cmd_plan, "infer": cmd_infer, "run": cmd_run, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
