"""``cvit`` command line: gen-synth, train, eval, predict.

Log verbosity comes from ``CVIT_LOG_LEVEL`` (default WARNING).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from cvit.checkpoint import load_checkpoint, save_checkpoint
from cvit.config import ConfigError, RunConfig, default_config_json
from cvit.grid import fit_norm
from cvit.metrics import evaluate, rush_hour_filter
from cvit.model import CvitModel, closed_form_param_count
from cvit.pipeline import input_window, load_dataset, split_samples
from cvit.synth import SynthConfig, generate
from cvit.training import predict_raw, prepare, train, write_log

log = logging.getLogger("cvit")

CHECKPOINT_NAME = "checkpoint.cvit"


class CliError(Exception):
    pass


def _relpaths(cfg: RunConfig, anchor: Path) -> dict:
    """Config dict with data paths relative to ``anchor`` (keeps checkpoints location-independent)."""
    d = cfg.to_dict()
    d.pop("output_dir")
    for name in ("accidents", "context", "trips"):
        p = cfg.path(name)
        d[name] = None if p is None else os.path.relpath(p.resolve(), anchor.resolve())
    return d


def cmd_gen_synth(args) -> int:
    cfg = SynthConfig(**json.loads(Path(args.config).read_text())) if args.config else SynthConfig()
    out = generate(cfg)
    try:
        paths = out.write(args.out)
    except OSError as exc:
        raise CliError(f"cannot write to {args.out}: {exc}") from exc
    for name, n in out.row_counts().items():
        print(f"{name}: {n} rows -> {paths[name]}")
    return 0


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    cfg.validate()
    if args.epochs is not None:
        cfg.train["epochs"] = args.epochs
        cfg.validate()
    out_dir = cfg.path("output_dir")
    out_dir.mkdir(parents=True, exist_ok=True)

    ds = load_dataset(cfg)
    splits = split_samples(ds, cfg)
    stats = fit_norm(splits["train"])
    tcfg = cfg.train_config
    model = CvitModel(cfg.model_config, seed=tcfg.seed)
    n_params = model.param_count()
    print(f"param_count: {n_params}")
    if n_params != closed_form_param_count(model.config):
        raise CliError("parameter count disagrees with the closed form")
    result = train(model, prepare(splits["train"], stats), prepare(splits["val"], stats), stats, tcfg, cfg.weights)
    best = result.history[result.best_epoch - 1]

    ckpt = out_dir / CHECKPOINT_NAME
    extra = {
        "run_config": _relpaths(cfg, out_dir),
        "start": ds.start.isoformat(),
        "best_epoch": result.best_epoch,
        "best_val": {"rmse": best.val_rmse, "recall": best.val_recall, "map": best.val_map},
        "param_count": n_params,
    }
    save_checkpoint(ckpt, model, stats, extra)
    (out_dir / "norm_stats.json").write_text(json.dumps(stats.to_dict(), indent=2, sort_keys=True) + "\n")
    write_log(out_dir / "train_log.csv", result.history)

    reloaded, _, _ = load_checkpoint(ckpt)
    if any(not np.array_equal(reloaded.params[k].data, t.data) for k, t in model.params.items()):
        raise CliError("checkpoint round-trip mismatch")
    print(f"best epoch {result.best_epoch}: val rmse {best.val_rmse:.6f} recall {best.val_recall:.6f} map {best.val_map:.6f}")
    print(f"wrote {ckpt}")
    return 0


def _restore(args):
    ckpt = Path(args.checkpoint)
    model, stats, extra = load_checkpoint(ckpt)
    if args.config:
        cfg = RunConfig.load(args.config)
    else:
        cfg = RunConfig.from_dict({**extra["run_config"], "output_dir": "."}, base_dir=ckpt.resolve().parent)
    cfg.validate()
    mc = model.config
    if (mc.rows, mc.cols, mc.channels) != (cfg.grid_spec.rows, cfg.grid_spec.cols, len(cfg.lags)):
        raise CliError(
            f"checkpoint expects {mc.channels}x{mc.rows}x{mc.cols} inputs, data config gives "
            f"{len(cfg.lags)}x{cfg.grid_spec.rows}x{cfg.grid_spec.cols}"
        )
    return model, stats, cfg, ckpt


def cmd_eval(args) -> int:
    model, stats, cfg, ckpt = _restore(args)
    ds = load_dataset(cfg)
    samples = split_samples(ds, cfg)[args.split]
    filt = "all"
    if args.rush_hours:
        samples, filt = rush_hour_filter(samples), "rush_hours"
    if not samples:
        raise CliError("no samples to evaluate")
    data = prepare(samples, stats)
    preds = data.raw_target if args.self_test else predict_raw(model, data, stats, batch_size=1)
    report = evaluate(preds, data.raw_target, filt)
    print(report.as_text())
    out = Path(args.out) if args.out else ckpt.parent / f"eval_{args.split}{'_rush' if args.rush_hours else ''}.csv"
    report.write_csv(out)
    out.with_suffix(".txt").write_text(report.as_text() + "\n")
    with open(out, newline="") as fh:
        if next(csv.reader(fh)) != ["rmse", "recall", "map", "n_samples", "filter"]:
            raise CliError("report validation failed")
    print(f"wrote {out}")
    return 0


def cmd_predict(args) -> int:
    model, stats, cfg, ckpt = _restore(args)
    ds = load_dataset(cfg)
    sample = input_window(ds, args.at)
    pred = predict_raw(model, prepare([sample], stats), stats, batch_size=1)[0]
    out = Path(args.out) if args.out else ckpt.parent / f"predict_{args.at}.csv"
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in pred:
            w.writerow([repr(float(v)) for v in row])
    if np.loadtxt(out, delimiter=",", ndmin=2).shape != pred.shape:
        raise CliError("prediction file validation failed")
    print(f"wrote {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvit", description=__doc__.splitlines()[0])
    parser.add_argument("--print-default-config", action="store_true", help="print the default run config and exit")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen-synth", help="write a synthetic accidents/context/trips dataset")
    p.add_argument("--config", help="JSON SynthConfig (defaults when omitted)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--epochs", type=int, help="override train.epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--rush-hours", action="store_true")
    p.add_argument("--config", help="data config (defaults to the one stored in the checkpoint)")
    p.add_argument("--out", help="report CSV path")
    p.add_argument("--self-test", action="store_true", help="score the targets against themselves")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="write the raw-scale predicted map for one hour")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--at", type=int, required=True, help="target hour index since dataset start")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("CVIT_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        print(default_config_json())
        return 0
    if not args.command:
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except (CliError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
