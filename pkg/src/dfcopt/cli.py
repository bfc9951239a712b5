"""Command line entry point: ``dfcopt <subcommand> [options]``.

Global options (``--seed``, ``--config``, ``--oracle``, ``--out``) may appear
before or after the subcommand. Without ``--seed`` the ``DFCOPT_SEED``
environment variable is used, then 0.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .circuit import Layout, TemplateSpec
from .env import bri_initialize
from .gnn import Dataset, generate_dataset, save_gat, train_surrogate
from .metrics import PassbandSpec
from .pipeline import (EXIT_ERROR, EXIT_SUCCESS, DesignTask, RunConfig, RunLog, batch_evaluate, default_run_dir,
                       design_end_to_end, evaluate_layout, load_config, make_oracle)
from .plots import layout_svg, s21_svg
from .surrogate import SParams

SEED_ENV = "DFCOPT_SEED"


def _globals(suppress: bool) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--seed", type=int, default=d, help=f"random seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--config", default=d, help="JSON file overriding any configuration default")
    p.add_argument("--oracle", choices=("analytic", "gnn"), default=d, help="response model")
    p.add_argument("--out", default=d, help="output directory (default: runs/<timestamp>-<seed>)")
    p.add_argument("--log-level", default=d if suppress else "WARNING")
    return p


def _add_task_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--band", nargs=2, type=float, action="append", metavar=("LO", "HI"), required=True,
                   help="target passband in GHz; repeat for a dual-band task")
    p.add_argument("--N", type=int, help="number of resonators")
    p.add_argument("--pattern", choices=("chain", "offset-chain"))
    p.add_argument("--bri-k", type=int, help="random layouts scored by the initializer")


def build_parser() -> argparse.ArgumentParser:
    common = _globals(suppress=True)
    parser = argparse.ArgumentParser(prog="dfcopt", parents=[_globals(suppress=False)],
                                     description="Filter layout design with a coupled-resonator model and PPO.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", parents=[common], help="BRI + PPO rounds for one target; writes all artifacts")
    _add_task_args(p)
    p.add_argument("--rounds", type=int)
    p.add_argument("--steps", type=int, help="environment steps per round")

    p = sub.add_parser("bri", parents=[common], help="best-of-K random initialization only")
    _add_task_args(p)

    p = sub.add_parser("evaluate", parents=[common], help="layout JSON -> reward breakdown JSON")
    p.add_argument("layout")
    p.add_argument("--band", nargs=2, type=float, action="append", metavar=("LO", "HI"))
    p.add_argument("--runlog", help="take the bands and configuration from a RunLog")

    p = sub.add_parser("gen-dataset", parents=[common], help="random layouts labelled by the analytic model")
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--N", type=int)

    p = sub.add_parser("train-surrogate", parents=[common], help="dataset JSONL -> GAT checkpoint")
    p.add_argument("dataset")
    p.add_argument("--epochs", type=int)

    p = sub.add_parser("batch", parents=[common], help="designs over the bandwidth buckets with CDF summaries")
    p.add_argument("--n-tasks", type=int, default=15)
    p.add_argument("--workers", type=int)
    p.add_argument("--rounds", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--bri-k", type=int)

    p = sub.add_parser("plot", parents=[common], help="render layout and/or s21 files as SVG")
    p.add_argument("--layout", action="append", default=[])
    p.add_argument("--s21", action="append", default=[])
    p.add_argument("--band", nargs=2, type=float, action="append", metavar=("LO", "HI"), default=[])
    return parser


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get(SEED_ENV, "0"))


def _out(args, seed: int) -> Path:
    out = Path(args.out) if args.out else default_run_dir(seed)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _template(args, cfg: RunConfig) -> TemplateSpec:
    t = cfg.template
    if getattr(args, "N", None):
        t = replace(t, N=args.N)
    if getattr(args, "pattern", None):
        t = replace(t, pattern=args.pattern)
    return t


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.oracle:
        cfg = replace(cfg, env=replace(cfg.env, oracle=args.oracle))
    return cfg


def cmd_design(args, cfg: RunConfig, seed: int) -> int:
    over = {k: v for k, v in (("rounds", args.rounds), ("steps_per_round", args.steps), ("bri_k", args.bri_k))
            if v is not None}
    task = DesignTask.from_config(args.band, cfg, seed=seed, template=_template(args, cfg), **over)
    out = _out(args, seed)
    run = design_end_to_end(task, cfg, out)
    if run.post is not None:
        print(f"IOU {run.pre_iou:.2f}% -> {run.post_iou:.2f}%, insertion loss "
              f"{run.pre['insertion_loss_db']:.2f} dB -> {run.post['insertion_loss_db']:.2f} dB")
    if run.error:
        print(run.error, file=sys.stderr)
    print(f"artifacts in {out}")
    return run.exit_code


def cmd_bri(args, cfg: RunConfig, seed: int) -> int:
    spec = PassbandSpec(tuple(map(tuple, args.band)))
    oracle = make_oracle(cfg)
    res = bri_initialize(_template(args, cfg), spec, args.bri_k or cfg.bri_k, seed, oracle, cfg.reward, cfg.bounds)
    s, m = evaluate_layout(res.layout, spec, cfg, oracle)
    out = _out(args, seed)
    (out / "layout.json").write_text(res.layout.to_json())
    (out / "s21.csv").write_text(s.to_csv())
    (out / "bri.json").write_text(json.dumps({"score": res.score, "index": res.index, "breakdown": m.to_dict()},
                                             indent=2) + "\n")
    print(json.dumps({"score": res.score, "index": res.index, **m.to_dict()}))
    return EXIT_SUCCESS


def cmd_evaluate(args, cfg: RunConfig, seed: int) -> int:
    bands = args.band
    if args.runlog:
        run = RunLog.from_json(Path(args.runlog).read_text())
        if args.config is None:
            cfg = RunConfig.from_dict(run.config)
        bands = bands or run.task["bands"]
    if not bands:
        raise SystemExit("evaluate needs --band or --runlog")
    layout = Layout.from_json(Path(args.layout).read_text())
    _, m = evaluate_layout(layout, PassbandSpec(tuple(map(tuple, bands))), cfg)
    text = m.to_json()
    print(text)
    if args.out:
        _out(args, seed).joinpath("breakdown.json").write_text(text + "\n")
    return EXIT_SUCCESS


def cmd_gen_dataset(args, cfg: RunConfig, seed: int) -> int:
    template = _template(args, cfg)
    ds = generate_dataset(template, args.n, seed, make_oracle(cfg, "analytic"), cfg.bounds)
    out = _out(args, seed)
    (out / "dataset.jsonl").write_text(ds.to_jsonl())
    print(f"{len(ds)} samples -> {out / 'dataset.jsonl'}")
    return EXIT_SUCCESS


def cmd_train_surrogate(args, cfg: RunConfig, seed: int) -> int:
    ds = Dataset.from_jsonl(Path(args.dataset).read_text())
    tcfg = cfg.surrogate_train if args.epochs is None else replace(cfg.surrogate_train, epochs=args.epochs)
    params, report = train_surrogate(ds, tcfg, seed, cfg.gat, cfg.bounds, cfg.surrogate)
    out = _out(args, seed)
    save_gat(out / "gat.json", params, cfg.gat, report)
    (out / "train_report.json").write_text(json.dumps({
        "best_epoch": report.best_epoch, "best_val_l1": report.best_val_l1,
        "baseline_val_l1": report.baseline_val_l1, "stopped_early": report.stopped_early,
        "seconds": report.seconds, "history": report.history}, indent=2) + "\n")
    print(f"val L1 {report.best_val_l1:.6g} (constant baseline {report.baseline_val_l1:.6g}) -> {out / 'gat.json'}")
    return EXIT_SUCCESS


def cmd_batch(args, cfg: RunConfig, seed: int) -> int:
    over = {k: v for k, v in (("rounds", args.rounds), ("steps_per_round", args.steps), ("bri_k", args.bri_k))
            if v is not None}
    out = _out(args, seed)
    summary = batch_evaluate(args.n_tasks, seed, cfg, out, args.workers, **over)
    print(json.dumps(summary.summary_dict()))
    return EXIT_SUCCESS if summary.n_failed == 0 else EXIT_ERROR


def cmd_plot(args, cfg: RunConfig, seed: int) -> int:
    if not args.layout and not args.s21:
        raise SystemExit("plot needs --layout and/or --s21")
    out = _out(args, seed)
    written = []
    for path in args.layout:
        p = Path(path)
        target = out / f"{p.stem}.svg"
        target.write_text(layout_svg(Layout.from_json(p.read_text()), cfg.bounds, p.stem))
        written.append(target)
    if args.s21:
        curves = [(Path(p).stem, SParams.from_csv(Path(p).read_text())) for p in args.s21]
        target = out / "s21.svg"
        target.write_text(s21_svg(curves, [tuple(b) for b in args.band]))
        written.append(target)
    for w in written:
        print(w)
    return EXIT_SUCCESS


COMMANDS = {"design": cmd_design, "bri": cmd_bri, "evaluate": cmd_evaluate, "gen-dataset": cmd_gen_dataset,
            "train-surrogate": cmd_train_surrogate, "batch": cmd_batch, "plot": cmd_plot}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse uses 2 for usage errors; 2 means "completed" here
        return EXIT_SUCCESS if exc.code in (0, None) else EXIT_ERROR
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg, _seed(args))
    except (ValueError, OSError, KeyError) as exc:
        print(f"dfcopt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
