"""Command-line interface.

    priorreg generate-data TARGET      write the seeded dataset
    priorreg train TARGET              train one model with given lambdas
    priorreg tune TARGET               run the outer loop only
    priorreg reproduce TARGET          full case over one or more seeds
    priorreg report DIR                tabulate every report.csv under DIR
    priorreg presets                   list preset names

TARGET is a preset name or the path of a JSON experiment config.  The
default seed is 0, or ``$PRIORREG_SEED`` when set; ``--seed`` wins over both.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import hnn as hnn_mod
from .config import ExperimentConfig, load_config, save_config
from .errors import ConfigError, ContractError, ExperimentError
from .experiment import build_dataset, hnn_energy, hnn_setup, repeatability_run, tune, tune_hnn
from .oracles import save_dataset
from .presets import SCALES, preset, preset_names
from .report import emit_heatmap, format_table, read_report
from .training import LossWeights, evaluate_mse, save_checkpoint, split_validation, train


def default_seed() -> int:
    raw = os.environ.get("PRIORREG_SEED", "").strip()
    if not raw:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"PRIORREG_SEED must be an integer, got {raw!r}") from None


def resolve_target(target: str, scale: str) -> ExperimentConfig:
    path = Path(target)
    if target.endswith(".json") or path.is_file():
        return load_config(path)
    return preset(target, scale)


def _out_dir(args, config) -> Path:
    return Path(args.out) if args.out else Path("runs") / f"{config.name}-{args.scale}"


def _config(args) -> ExperimentConfig:
    config = resolve_target(args.target, args.scale)
    seed = args.seed if args.seed is not None else default_seed()
    return config.with_seed(seed)


def cmd_generate_data(args) -> int:
    config = _config(args)
    out = _out_dir(args, config)
    save_config(config, out / "config.json")
    if config.kind == "pde":
        path = save_dataset(build_dataset(config), out / "dataset.json")
    else:
        train_trajs = hnn_setup(config)[0]
        path = hnn_mod.save_trajectories(train_trajs, out / "trajectories.json", config.hnn.spec(), config.seed)
    print(path)
    return 0


def cmd_train(args) -> int:
    config = _config(args)
    out = _out_dir(args, config)
    lams = args.lambdas or []
    if config.kind == "hnn":
        train_trajs, _, test_trajs, reg_pts, hcfg = hnn_setup(config)
        lam = lams[0] if lams else 0.0
        prior = config.hnn.prior() if lam > 0 else None
        model = hnn_mod.train_hnn(hcfg, train_trajs, prior, lam, config.hnn.mode, reg_pts)
        energy, _ = hnn_energy(model, test_trajs, config)
        path = save_checkpoint(model, out / "model.json")
        print(f"test_hnn_loss={hnn_mod.hnn_loss(model.params, test_trajs)!r} energy={energy!r} checkpoint={path}")
        return 0
    if lams and len(lams) != len(config.priors):
        raise ConfigError(f"{config.name} has {len(config.priors)} priors; pass that many --lambda values")
    priors = config.priors if lams else []
    ds = build_dataset(config)
    tc = replace(config.train, seed=config.seed, weight_decay=args.weight_decay)
    model = train(tc, ds, priors, LossWeights(lams))
    path = save_checkpoint(model, out / "model.json")
    if config.heatmaps:
        emit_heatmap(model, config.grid, out / "heatmaps" / "model")
    print(f"test_mse={model.final_test_mse!r} checkpoint={path}")
    return 0


def cmd_tune(args) -> int:
    config = _config(args)
    out = _out_dir(args, config)
    save_config(config, out / "config.json")
    if config.kind == "hnn":
        train_trajs, val_trajs, test_trajs, reg_pts, hcfg = hnn_setup(config)
        outcome = tune_hnn(config, train_trajs, val_trajs, reg_pts, hcfg, trials_csv=out / "trials.csv")
        test = hnn_mod.hnn_loss(outcome.model.params, test_trajs)
    else:
        ds = build_dataset(config)
        inner, val_x, val_y = split_validation(ds, config.val_fraction, config.seed)
        outcome = tune(config, inner, val_x, val_y, trials_csv=out / "trials.csv")
        test = evaluate_mse(outcome.model, ds.test_x, ds.test_y)
    save_checkpoint(outcome.model, out / "tuned.json")
    print(json.dumps({"lambdas": outcome.lambdas, "theta": outcome.theta, "val": outcome.val_mse, "test": test}, sort_keys=True))
    return 0


def cmd_reproduce(args) -> int:
    config = resolve_target(args.target, args.scale)
    seeds = args.seeds if args.seeds else [args.seed if args.seed is not None else default_seed()]
    out = _out_dir(args, config)
    row = repeatability_run(config, seeds, out, workers=args.workers)
    print(format_table(read_report(out / "report.csv")))
    return 1 if any(f.startswith("failed_seeds") for f in row.flags) else 0


def cmd_report(args) -> int:
    root = Path(args.dir)
    if not root.is_dir():
        print(f"no such directory: {root}", file=sys.stderr)
        return 2
    rows = []
    for path in sorted(root.rglob("report.csv")):
        if args.per_seed or not path.parent.name.startswith("seed-"):
            rows += read_report(path)
    errors = sorted(root.rglob("error.json"))
    if rows:
        print(format_table(rows))
    for path in errors:
        doc = json.loads(path.read_text())
        print(f"error in {path.parent}: stage {doc['stage']}: {doc['message']}")
    if not rows and not errors:
        print(f"no reports under {root}", file=sys.stderr)
        return 1
    return 0


def cmd_presets(args) -> int:
    print("\n".join(preset_names()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default: $PRIORREG_SEED or 0)")
    common.add_argument("--scale", choices=SCALES, default="desk")
    common.add_argument("--workers", type=int, default=1, help="parallel seeds for reproduce")
    common.add_argument("--out", default=None, help="output directory (default: runs/<case>-<scale>)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="priorreg", description="Physics priors as regularizers, tuned by GP Bayesian optimization.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", parents=[common], help="write the seeded dataset of a case")
    p.add_argument("target")
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", parents=[common], help="train one model on all training points")
    p.add_argument("target")
    p.add_argument("--lambda", dest="lambdas", type=float, action="append", help="prior weight, once per prior (omit for no prior)")
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tune", parents=[common], help="run the outer loop and keep the best model")
    p.add_argument("target")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("reproduce", parents=[common], help="baseline, weight decay and tuned runs over seeds")
    p.add_argument("target")
    p.add_argument("--seeds", type=int, nargs="+", default=None)
    p.set_defaults(func=cmd_reproduce)

    p = sub.add_parser("report", parents=[common], help="tabulate report.csv files under a directory")
    p.add_argument("dir")
    p.add_argument("--per-seed", action="store_true", help="include the per-seed reports")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("presets", parents=[common], help="list preset names")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.workers < 1:
        parser.error("--workers must be >= 1")
    try:
        return args.func(args)
    except (ConfigError, ContractError, ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
