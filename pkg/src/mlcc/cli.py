"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numeric error
(divergence, failed gradient check, cost mismatch), 4 I/O or data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import RunConfig, load_config, parse_config
from .cost import enumerate_params, flop_breakdown, instrumented_flops, param_count, sweep, sweep_csv
from .data import DataError, generate_synthetic, load_csv, split
from .embedding import encode
from .errors import ConfigError, NumericError
from .gradcheck import run_all, worst_by_group
from .models import Model, build_model
from .training import Encoded, evaluate, train

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("mlcc")

def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def load_dataset(cfg: RunConfig):
    if cfg.source == "csv":
        return load_csv(cfg.csv_path, cfg.model.schema.field_names)
    return generate_synthetic(cfg.synthetic)


def build_from_checkpoint(path) -> tuple[RunConfig, Model]:
    text, tensors = checkpoint.load(path)
    cfg = parse_config(text)
    model = build_model(cfg.model, seed=cfg.train.seed, dtype=np.dtype(cfg.train.dtype).type)
    model.load_state_dict(tensors)
    return cfg, model


def cmd_train(args) -> int:
    cfg = _load(args)
    out = Path(args.out or cfg.out_dir)
    ds = load_dataset(cfg)
    tr, va, te = split(ds, cfg.split, cfg.split_seed)
    schema = cfg.model.schema

    def enc(d):
        return Encoded(encode(d.values, schema), d.labels)

    dtype = np.dtype(cfg.train.dtype).type
    model = build_model(cfg.model, seed=cfg.train.seed, dtype=dtype)
    result = train(model, enc(tr), enc(va), cfg.train)
    model.load_state_dict(result.best_state)
    test = evaluate(model, enc(te), "test", result.best_step)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.csv").write_text(result.trace_csv() + f"{test.step},test,{test.auc!r},{test.logloss!r}\n")
    checkpoint.save(out / "best.ckpt", cfg.to_text(), result.best_state)
    summary = {"best_step": result.best_step, "valid_auc": result.best_auc,
               "test_auc": test.auc, "test_logloss": test.logloss,
               "params": param_count(cfg.model).total_params}
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"best step {result.best_step}  valid auc {result.best_auc:.5f}  "
          f"test auc {test.auc:.5f}  test logloss {test.logloss:.5f}")
    print(f"wrote {out / 'trace.csv'} and {out / 'best.ckpt'}")
    return EXIT_OK


def cmd_count(args) -> int:
    cfg = _load(args)
    report = param_count(cfg.model)
    if args.batch != 1:
        report.flops = flop_breakdown(cfg.model, args.batch)
        report.batch = args.batch
    print(report.to_csv() if args.csv else report.to_table(), end="" if args.csv else "\n")
    if args.verify:
        counted = enumerate_params(cfg.model)
        measured = instrumented_flops(cfg.model, args.batch)
        ok = counted == report.params and measured == report.flops
        print(f"verify: params {'match' if counted == report.params else f'MISMATCH {counted}'}; "
              f"flops {'match' if measured == report.flops else f'MISMATCH {measured}'}",
              file=sys.stderr)
        if not ok:
            return EXIT_NUMERIC
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load(args)
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("sweep.values", f"expected comma-separated integers, got {args.values!r}") from None
    text = sweep_csv(sweep(args.axis, values, cfg.model))
    if args.out:
        Path(args.out).write_text(text)
    else:
        print(text, end="")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.config:
        cfg = _load(args)
        seed, act = cfg.train.seed, (cfg.model.plc.activation if cfg.model.plc else "relu")
    else:
        seed, act = (args.seed or 0), "relu"
    lines = run_all(seed, act)
    for line in lines:
        log.debug("%s", line)
    print("worst coordinate per op / model:")
    for key, line in worst_by_group(lines).items():
        print(f"  {line}")
    failed = [l for l in lines if not l.ok]
    print(f"{len(lines) - len(failed)}/{len(lines)} checks below 1e-4")
    return EXIT_OK if not failed else EXIT_NUMERIC


def cmd_gen_data(args) -> int:
    cfg = _load(args)
    if not args.out:
        raise ConfigError("--out", "gen-data needs an output path")
    ds = generate_synthetic(cfg.synthetic)
    ds.write_csv(args.out)
    print(f"wrote {len(ds)} rows to {args.out} (positive rate {ds.labels.mean():.4f})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run config file")
    common.add_argument("--seed", type=int, help="override every seed in the config")
    common.add_argument("--out", help="output directory (train) or file (gen-data, sweep)")
    common.add_argument("--csv", action="store_true", help="CSV instead of an aligned table")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="mlcc", description="MLCC / MC-MLCC feature-interaction toolkit")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train", parents=[common], help="train a model and write trace + checkpoint")
    c = sub.add_parser("count", parents=[common], help="parameter and FLOP report")
    c.add_argument("--verify", action="store_true", help="recompute by enumeration and instrumentation")
    c.add_argument("--batch", type=int, default=1)
    s = sub.add_parser("sweep", parents=[common], help="cost sweep along H, E or S")
    s.add_argument("--axis", required=True)
    s.add_argument("--values", required=True, help="comma-separated, strictly increasing")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference check of all ops and models")
    sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset as CSV")
    return p


COMMANDS = {"train": cmd_train, "count": cmd_count, "sweep": cmd_sweep,
            "gradcheck": cmd_gradcheck, "gen-data": cmd_gen_data}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command != "gradcheck" and not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error [{exc.field}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, DataError, checkpoint.CheckpointError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
