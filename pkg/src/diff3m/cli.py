"""Command-line entry point.

Subcommands: gen-data, train, detect, eval, attn-report.  Exit codes:
0 success, 2 usage/configuration error, 3 data-contract violation.
stdout carries machine-readable results only; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .conditioning import PatientRecord
from .detection import detect, detect_batch, normalize_map, scores_tsv
from .formats import RunConfig, parse_run_config, read_pgm, write_pgm
from .metrics import MetricReport, attention_report, auprc, auroc
from .model import load_model
from .schedule import make_schedule
from .synthdata import GenConfig, generate_dataset, load_split
from .tensor import Tensor, no_grad
from .training import TrainConfig, TrainingDataError, to_internal, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


class UsageError(ValueError):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diff3m")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a phantom dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--n-normal", type=int, default=2000, help="training normals")
    p.add_argument("--n-anomaly", type=int, default=200, help="test anomalies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--confounded", action="store_true")

    p = sub.add_parser("train", help="train on a dataset's normal split")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="key=value run config file")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--phase", choices=("pretrain", "joint"), default="joint")

    p = sub.add_parser("detect", help="score one image/record pair")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--record", required=True, help='comma list "k=v,..."')
    p.add_argument("--t-prime", type=int, required=True)
    p.add_argument("--score", choices=("mse", "maxabs"), default="mse")
    p.add_argument("--map", dest="map_out", default=None)
    p.add_argument("--stride", type=int, default=25)

    p = sub.add_parser("eval", help="metrics over a dataset's test split")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--t-prime", type=int, required=True)
    p.add_argument("--stride", type=int, default=25)
    p.add_argument("--scores-out", default=None, help="write per-sample scores TSV")

    p = sub.add_parser("attn-report", help="per-feature attention statistics")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    return parser


def _parse_record(spec: str, schema) -> PatientRecord:
    mapping = {}
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise UsageError(f"record chunk {chunk!r} is not k=v")
        key, val = chunk.split("=", 1)
        mapping[key.strip()] = float(val)
    missing = [k for k in schema if k not in mapping]
    extra = [k for k in mapping if k not in schema]
    if missing or extra:
        raise UsageError(
            f"record keys do not match checkpoint schema: missing {missing}, extra {extra}"
        )
    return PatientRecord(values=[mapping[k] for k in schema], schema=schema)


def cmd_gen_data(args) -> int:
    cfg = GenConfig(
        seed=args.seed,
        n_train_normal=args.n_normal,
        n_test_anomaly=args.n_anomaly,
        confounded=args.confounded,
    )
    if args.n_normal < 1:
        raise UsageError("--n-normal must be positive")
    if args.n_anomaly < 0:
        raise UsageError("--n-anomaly must be nonnegative")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory not writable: {exc}") from exc
    manifest = generate_dataset(cfg, out)
    for key, val in manifest.items():
        print(f"{key}={val}")
    return EXIT_OK


def cmd_train(args) -> int:
    run = parse_run_config(args.config) if args.config else RunConfig().validate()
    cfg = TrainConfig(
        T=run.T,
        beta_start=run.beta_start,
        beta_end=run.beta_end,
        lam=run.lam,
        lr=run.lr,
        batch_size=run.batch_size,
        iters=run.iters,
        seed=run.seed,
        image_size=run.image_size,
        d_embed=run.d_embed,
        phase=args.phase,
    )
    log_path = str(Path(args.out)) + ".log"
    metrics = train(cfg, args.data, args.out, log_path=log_path)
    if metrics:
        first = np.mean([m["total"] for m in metrics[:100]])
        last = np.mean([m["total"] for m in metrics[-100:]])
        print(f"steps={len(metrics)}\tfirst100_mean={first:.6f}\tlast100_mean={last:.6f}")
    print(f"checkpoint={args.out}")
    print(f"log={log_path}")
    return EXIT_OK


def cmd_detect(args) -> int:
    model, meta = load_model(args.ckpt)
    sched_meta = meta["schedule"]
    sched = make_schedule(int(sched_meta["T"]), sched_meta["beta_start"], sched_meta["beta_end"])
    if not 0 <= args.t_prime < sched.T:
        raise UsageError(f"--t-prime must lie in [0, {sched.T}), got {args.t_prime}")
    image = read_pgm(args.image)
    record = _parse_record(args.record, model.cfg.schema)
    result = detect(image, record, model, sched, args.t_prime, stride=args.stride)
    print(f"score_mse\t{result.score_mse:.8g}")
    print(f"score_maxabs\t{result.score_maxabs:.8g}")
    print(f"score\t{getattr(result, 'score_' + args.score):.8g}")
    if args.map_out:
        write_pgm(args.map_out, normalize_map(result.anomaly_map))
    return EXIT_OK


def _eval_results(args):
    model, meta = load_model(args.ckpt)
    sched_meta = meta["schedule"]
    sched = make_schedule(int(sched_meta["T"]), sched_meta["beta_start"], sched_meta["beta_end"])
    if not 0 <= args.t_prime < sched.T:
        raise UsageError(f"--t-prime must lie in [0, {sched.T}), got {args.t_prime}")
    images, records, labels = load_split(args.data, "test")
    results = []
    chunk = 50
    for lo in range(0, len(images), chunk):
        hi = min(lo + chunk, len(images))
        results.extend(
            detect_batch(images[lo:hi], records[lo:hi], model, sched, args.t_prime, args.stride)
        )
    return results, labels


def cmd_eval(args) -> int:
    results, labels = _eval_results(args)
    y = np.array([1 if lab == "anomalous" else 0 for lab in labels])
    if args.scores_out:
        ids = [f"{i:05d}" for i in range(len(results))]
        Path(args.scores_out).write_text(scores_tsv(ids, results, labels))
    print("score_kind\tauroc\tauprc\tn_normal\tn_anomalous")
    for kind in ("mse", "maxabs"):
        scores = np.array([getattr(r, f"score_{kind}") for r in results])
        report = MetricReport(
            auroc=auroc(scores, y),
            auprc=auprc(scores, y),
            n_normal=int((y == 0).sum()),
            n_anomalous=int((y == 1).sum()),
            score_kind=kind,
        )
        print(report.tsv())
    return EXIT_OK


def cmd_attn_report(args) -> int:
    model, _ = load_model(args.ckpt)
    if model.tokenizer is None:
        raise UsageError("checkpoint variant has no record conditioning")
    images, records, _ = load_split(args.data, args.split)
    if records[0].schema != model.cfg.schema:
        raise UsageError("dataset schema does not match checkpoint schema")
    weights = np.empty((len(records), len(model.cfg.schema)))
    values = np.stack([r.values for r in records])
    with no_grad():
        for i, rec in enumerate(records):
            x = Tensor(to_internal(images[i])[None, :, :, None])
            ce = model.condition(x, rec)
            weights[i] = ce.weights()
    report = attention_report(weights, values, model.cfg.schema)
    print(report.tsv())
    return EXIT_OK


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "detect": cmd_detect,
    "eval": cmd_eval,
    "attn-report": cmd_attn_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except TrainingDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
