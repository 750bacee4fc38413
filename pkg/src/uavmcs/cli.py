"""Command-line entry point: ``uavmcs {train,eval,sweep,gradcheck,export-plots}``.

Exit status is 0 on success, 1 on a usage or configuration error and 2 on a
runtime failure (including a failed gradient check).  Relative output
directories are resolved under ``$UAVMCS_OUTPUT_ROOT`` when it is set.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, load_config

log = logging.getLogger("uavmcs")

OUTPUT_ROOT_ENV = "UAVMCS_OUTPUT_ROOT"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _resolve_output(path: str | None, default: str) -> Path:
    import os

    p = Path(path if path is not None else default)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not p.is_absolute():
        p = Path(root) / p
    return p


def _load(args):
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    if getattr(args, "workers", None) is not None:
        overrides.append(f"workers={args.workers}")
    if getattr(args, "variant", None) is not None:
        overrides.append(f"variant={args.variant}")
    if args.verb == "train" and args.episodes is not None:
        overrides.append(f"max_episodes={args.episodes}")
    return load_config(args.config, overrides)


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad value list {text!r}") from exc


def cmd_train(args) -> int:
    from . import harness

    cfg = _load(args)
    out = _resolve_output(args.output, cfg.output_dir)
    result = harness.run_training(cfg, output_dir=out)
    comp = harness.model_complexity(cfg)
    rows = [{"network": net, "layer": r["layer"], "kind": r["kind"], "params": r["params"],
             "macs": r["macs"]} for net, rep in comp.items() for r in rep["layers"]]
    harness.write_table(rows, out / "complexity.csv", ["network", "layer", "kind", "params", "macs"])
    last = result.metrics[-1]
    print(f"trained {cfg.max_episodes} episodes -> {out}")
    print(f"final eval: user {last.mean_user_reward:.4f} uav {last.mean_uav_reward:.4f} "
          f"processed {last.processed_Mbits:.3f} Mb")
    return 0


def cmd_eval(args) -> int:
    from . import harness

    cfg = _load(args)
    row = harness.run_evaluation(args.checkpoint, cfg, episodes=args.episodes)
    text = harness.metrics_to_text([row])
    if args.output:
        out = _resolve_output(args.output, "")
        out.mkdir(parents=True, exist_ok=True)
        harness.emit_metrics([row], out / "eval_metrics.csv")
    sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    from . import harness

    cfg = _load(args)
    values = _float_list(args.values)
    if args.axis == "uav_count":
        if any(v != int(v) for v in values):
            raise ConfigError("uav_count values must be integers")
        values = [int(v) for v in values]
    else:
        values = [v * 1e9 for v in values]  # GHz on the command line
    seeds = [int(s) for s in _float_list(args.seeds)]
    out = _resolve_output(args.output, str(Path(cfg.output_dir) / f"sweep_{args.axis}"))
    table = harness.sweep(cfg, args.axis, values, seeds=seeds, output_dir=out)
    for row in table:
        print(f"{args.axis}={row['value']}: median processed {row['median_processed_Mbits']:.3f} Mb")
    return 0


def cmd_gradcheck(args) -> int:
    from .verify import run_gradcheck

    reports = run_gradcheck(draws=args.draws, seed=args.seed or 0, tolerance=args.tolerance)
    ok = True
    for rep in reports:
        status = "ok" if rep.passed else "FAIL"
        ok &= rep.passed
        print(f"{rep.name:20s} max rel err {rep.max_error:.3e}  {status}")
    return 0 if ok else 2


def cmd_export_plots(args) -> int:
    from . import harness

    out = _resolve_output(args.output, "plots")
    out.mkdir(parents=True, exist_ok=True)
    reward_rows, sweep_rows = [], {}
    for run in args.runs:
        run = Path(run)
        for f in sorted(run.rglob("train_rewards.csv")):
            label = str(f.parent.relative_to(run)) if f.parent != run else run.name
            for r in harness.read_table(f):
                reward_rows.append({"run": label, **r})
        for f in sorted(run.rglob("sweep_*.csv")):
            for r in harness.read_table(f):
                sweep_rows.setdefault(r["axis"], []).append(r)
    if not reward_rows and not sweep_rows:
        raise FileNotFoundError(f"no train_rewards.csv or sweep_*.csv under {args.runs}")
    written = []
    if reward_rows:
        path = out / "reward_vs_episode.csv"
        harness.write_table(reward_rows, path, ["run", *harness.REWARD_COLUMNS])
        written.append(path)
    for axis, rows in sweep_rows.items():
        path = out / f"processed_vs_{axis}.csv"
        harness.write_table(rows, path, ["value", "median_processed_Mbits", "per_seed_Mbits"])
        written.append(path)
    for p in written:
        print(p)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="uavmcs", description="Multi-UAV crowdsensing HAPPO trainer.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    def common(p, training=True):
        p.add_argument("--config", help="YAML config file (defaults are used if omitted)")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key, e.g. sim.U=3 (repeatable)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--variant", choices=["ckan", "cnn", "mlp"], help="actor architecture")
        if training:
            p.add_argument("--workers", type=int, help="processes for independent runs (sweeps)")

    p = sub.add_parser("train", help="train all agents and write metrics and a checkpoint")
    common(p)
    p.add_argument("--episodes", type=int, help="number of training episodes")
    p.add_argument("--output", help="output directory (default: output_dir from the config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    common(p, training=False)
    p.add_argument("--checkpoint", required=True, help="checkpoint written by train")
    p.add_argument("--episodes", type=int, help="evaluation episodes (default: eval_episodes)")
    p.add_argument("--output", help="also write eval_metrics.csv into this directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train over a UAV-count or UAV-frequency axis")
    common(p)
    p.add_argument("--axis", required=True, choices=["uav_count", "uav_frequency"])
    p.add_argument("--values", required=True,
                   help="comma-separated ascending values (UAV counts, or GHz for uav_frequency)")
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds (default 0,1,2)")
    p.add_argument("--output", help="output directory for runs and the sweep table")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of all analytic gradients")
    p.add_argument("--draws", type=int, default=100, help="random draws per check (default 100)")
    p.add_argument("--tolerance", type=float, default=1e-4, help="max relative error (default 1e-4)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export-plots", help="collect run outputs into plot-ready data tables")
    p.add_argument("runs", nargs="+", help="run or sweep directories to scan")
    p.add_argument("--output", help="directory for the tables (default: plots)")
    p.set_defaults(func=cmd_export_plots)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
