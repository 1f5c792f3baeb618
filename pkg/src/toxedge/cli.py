"""Operator-facing command line: generate, train, compress, infer, bench.

The CLI is a thin shell over the library; every pipeline here is reachable
through the Python API with identical results. Exit codes: 0 success,
1 usage error, 2 data/format error, 3 contract violation. Errors print to
stderr as ``error[kind]: message``. The ``TOXEDGE_SEED`` environment
variable overrides default seeds.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__, audio, bench, checkpoint, compress, model, train
from .checkpoint import FORMAT_VERSION
from .config import preset
from .errors import EngineError, ParameterError
from .losses import DistillHyper

DEFAULT_SEED = 0


class UsageError(ParameterError):
    kind = "usage"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_seed() -> int:
    env = os.environ.get("TOXEDGE_SEED")
    return int(env) if env else DEFAULT_SEED


def _seed_args(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None, help="seed (default: TOXEDGE_SEED or 0)")


def _resolve_seed(args) -> int:
    return args.seed if args.seed is not None else _default_seed()


def build_parser() -> _Parser:
    parser = _Parser(prog="toxedge", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-model", help="create a seeded random checkpoint")
    p.add_argument("--preset", choices=["tiny", "base-mirror"], default="tiny")
    _seed_args(p)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic labeled dataset")
    _seed_args(p)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--dur", type=float, default=1.0, help="clip duration in seconds")
    p.add_argument("--preset", choices=["tiny", "base-mirror"], default="tiny",
                   help="preset whose vocabulary the transcripts use")
    p.add_argument("-o", "--output", required=True, help="output directory")

    p = sub.add_parser("train-heads", help="train both heads, encoder frozen")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=train.DESK_EPOCHS)
    p.add_argument("--batch-size", type=int, default=train.DESK_BATCH)
    p.add_argument("--lr", type=float, default=train.DESK_LR)
    p.add_argument("--paper-hyper", action="store_true",
                   help="use the documented reference hyperparameters (lr 5e-5, batch 2, 100 epochs)")
    _seed_args(p)
    p.add_argument("--split-seed", type=int, default=None)
    p.add_argument("--report", default=None, help="write per-epoch losses as JSONL")
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("grid-lambda", help="grid search the auxiliary-task weight")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--grid", default=",".join(str(x) for x in train.DEFAULT_LAMBDA_GRID))
    p.add_argument("--epochs", type=int, default=10)
    _seed_args(p)
    p.add_argument("--split-seed", type=int, default=None)

    p = sub.add_parser("distill", help="distill a truncated student from a teacher")
    p.add_argument("--teacher", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--student-layers", type=int, default=None,
                   help="default: round(num_layers * 5 / 12)")
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--temp", type=float, default=4.0)
    p.add_argument("--lambda", dest="lam", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=train.DESK_EPOCHS)
    _seed_args(p)
    p.add_argument("--report", default=None)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("quantize", help="int8 post-training quantization")
    p.add_argument("--model", required=True)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("prune", help="zero the smallest-magnitude weights")
    p.add_argument("--model", required=True)
    p.add_argument("--sparsity", type=float, default=0.5)
    p.add_argument("-o", "--output", required=True)

    p = sub.add_parser("infer", help="classify one WAV and decode its tokens")
    p.add_argument("--model", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--pool-layer", type=int, default=None,
                   help="which encoder stage the classifier pools (default: last)")
    p.add_argument("--dump-embeddings", default=None, metavar="CSV",
                   help="write the pooled embedding as a CSV row")

    p = sub.add_parser("bench", help="measure size, latency, RTF, peak RAM")
    p.add_argument("--models", required=True, help="comma-separated checkpoint paths")
    p.add_argument("--data", required=True)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("-o", "--output", default=None, help="CSV output path")

    p = sub.add_parser("version", help="print version and format info")
    p.add_argument("--json", action="store_true", dest="as_json")
    return parser


def version_info(as_json: bool = False) -> str:
    info = {
        "version": __version__,
        "checkpoint_format_version": FORMAT_VERSION,
        "seed_policy": f"defaults are fixed ({DEFAULT_SEED}); TOXEDGE_SEED overrides; "
                       "every run with equal seeds is bit-reproducible",
    }
    if as_json:
        return json.dumps(info, sort_keys=True)
    return (
        f"toxedge {info['version']} "
        f"(checkpoint format v{info['checkpoint_format_version']}; {info['seed_policy']})"
    )


def _cmd_gen_model(args) -> int:
    seed = _resolve_seed(args)
    ckpt = model.init_checkpoint(preset(args.preset), seed)
    n = checkpoint.save(ckpt, args.output)
    print(f"wrote {args.output} ({n} bytes, preset={args.preset}, seed={seed})")
    return 0


def _cmd_gen_data(args) -> int:
    seed = _resolve_seed(args)
    items = audio.synth_dataset(seed, args.n, args.dur, preset(args.preset))
    manifest = audio.save_dataset(args.output, items)
    toxic = sum(item.label for item in items)
    print(f"wrote {len(items)} clips ({toxic} toxic) to {args.output} (manifest: {manifest}, seed={seed})")
    return 0


def _split(args, items):
    split_seed = args.split_seed if args.split_seed is not None else _default_seed()
    print(f"split seed: {split_seed} (70/15/15 stratified)")
    return train.split_dataset(items, seed=split_seed)


def _print_val(metrics) -> None:
    if metrics is None:
        print("validation: (no validation split)")
        return
    auc = f"{metrics.auc:.4f}" if metrics.auc is not None else "n/a"
    print(
        f"validation: macro_f1={metrics.macro_f1:.4f} accuracy={metrics.accuracy:.4f} "
        f"weighted_accuracy={metrics.weighted_accuracy:.4f} auc={auc}"
    )
    from .metrics import WEIGHTED_ACCURACY_DEFINITION

    print(f"({WEIGHTED_ACCURACY_DEFINITION})")


def _cmd_train_heads(args) -> int:
    seed = _resolve_seed(args)
    ckpt = checkpoint.load(args.model)
    items = audio.load_dataset(args.data)
    train_items, val_items, _test = _split(args, items)
    epochs, batch, lr = args.epochs, args.batch_size, args.lr
    if args.paper_hyper:
        epochs, batch, lr = 100, 2, 5e-5
    out, report = train.train_heads(
        ckpt, train_items, lam=args.lam, epochs=epochs, batch_size=batch,
        lr=lr, seed=seed, val_items=val_items,
    )
    checkpoint.save(out, args.output)
    if args.report:
        train.save_report(report, args.report)
    first, last = report.epochs[0], report.epochs[-1]
    print(
        f"trained {epochs} epochs (lambda={args.lam}): "
        f"loss {first.total:.4f} -> {last.total:.4f} in {report.wall_time_s:.1f}s"
    )
    _print_val(report.val_metrics)
    print(f"wrote {args.output}")
    return 0


def _cmd_grid_lambda(args) -> int:
    seed = _resolve_seed(args)
    split_seed = args.split_seed if args.split_seed is not None else _default_seed()
    ckpt = checkpoint.load(args.model)
    items = audio.load_dataset(args.data)
    try:
        grid = [float(x) for x in args.grid.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"bad --grid value: {exc}") from exc
    protocol = train.TrainProtocol(ckpt, epochs=args.epochs, seed=seed, split_seed=split_seed)
    best, results = train.lambda_grid_search(grid, items, protocol)
    print(f"split seed: {split_seed}")
    for lam in sorted(results):
        print(f"lambda={lam:g}: val macro_f1={results[lam].macro_f1:.4f}")
    print(f"best lambda: {best:g}")
    return 0


def _cmd_distill(args) -> int:
    seed = _resolve_seed(args)
    teacher = checkpoint.load(args.teacher)
    items = audio.load_dataset(args.data)
    layers = args.student_layers
    if layers is None:
        layers = max(1, round(teacher.config.num_layers * 5 / 12))
    student = compress.make_student(teacher, layers)
    hyper = DistillHyper(alpha=args.alpha, temperature=args.temp)
    out, report = train.distill(
        teacher, student, items, hyper, lam=args.lam, epochs=args.epochs, seed=seed,
    )
    checkpoint.save(out, args.output)
    if args.report:
        train.save_report(report, args.report)
    print(
        f"distilled {teacher.config.num_layers} -> {layers} layers "
        f"(alpha={hyper.alpha}, T={hyper.temperature}): "
        f"loss {report.epochs[0].total:.4f} -> {report.epochs[-1].total:.4f}"
    )
    print(f"wrote {args.output}")
    return 0


def _cmd_quantize(args) -> int:
    ckpt = checkpoint.load(args.model)
    out = compress.quantize_model(ckpt)
    if out is ckpt:
        print("notice: checkpoint is already quantized; writing it unchanged")
    checkpoint.save(out, args.output)
    print(f"wrote {args.output} ({checkpoint.model_size_bytes(args.output)} bytes)")
    return 0


def _cmd_prune(args) -> int:
    ckpt = checkpoint.load(args.model)
    out = compress.prune_magnitude(ckpt, args.sparsity)
    checkpoint.save(out, args.output)
    print(f"wrote {args.output} (sparsity={args.sparsity})")
    return 0


def _cmd_infer(args) -> int:
    ckpt = checkpoint.load(args.model)
    wave = audio.normalize(audio.read_wav(args.wav))
    logits, ctc_mat = model.forward(wave, ckpt, pool_layer=args.pool_layer)
    from .kernels import log_softmax, softmax_t
    from .ctc import greedy_decode

    probs = softmax_t(logits, 1.0)
    label = "toxic" if int(np.argmax(logits)) == 1 else "non-toxic"
    tokens = greedy_decode(log_softmax(ctc_mat))
    print(f"label: {label}")
    print(f"probabilities: non-toxic={probs[0]:.4f} toxic={probs[1]:.4f}")
    print(f"asr tokens: {' '.join(str(t) for t in tokens) if tokens else '(none)'}")
    if args.dump_embeddings:
        emb = model.pooled_embedding(wave, ckpt, pool_layer=args.pool_layer)
        with open(args.dump_embeddings, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow([f"e{i}" for i in range(emb.size)])
            writer.writerow([repr(float(x)) for x in emb])
        print(f"wrote embedding ({emb.size} dims) to {args.dump_embeddings}")
    return 0


def _cmd_bench(args) -> int:
    paths = [p for p in args.models.split(",") if p.strip()]
    items = audio.load_dataset(args.data)
    bench.bench_suite(paths, items, out_csv=args.output, warmup=args.warmup, reps=args.reps)
    if args.output:
        print(f"wrote {args.output}")
    return 0


def dispatch(argv: list[str]) -> int:
    """Parse and run one invocation; returns the process exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help()
            return 0
        if args.command == "version":
            print(version_info(args.as_json))
            return 0
        handler = {
            "gen-model": _cmd_gen_model,
            "gen-data": _cmd_gen_data,
            "train-heads": _cmd_train_heads,
            "grid-lambda": _cmd_grid_lambda,
            "distill": _cmd_distill,
            "quantize": _cmd_quantize,
            "prune": _cmd_prune,
            "infer": _cmd_infer,
            "bench": _cmd_bench,
        }[args.command]
        return handler(args)
    except EngineError as exc:
        print(f"error[{exc.kind}]: {exc}", file=sys.stderr)
        return exc.exit_code


def main(argv: list[str] | None = None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    raise SystemExit(main())
