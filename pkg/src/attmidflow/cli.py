"""Command-line entry point: ``attmidflow <command> [options]``.

Exit codes: 0 on success, 1 on a domain error (bad file, shape, checkpoint,
diverged training, refused overwrite), 2 on a usage error.

Every command accepts ``--config FILE`` (a TOML table whose keys are the
command's long option names with ``-`` or ``_``), ``--json`` for
line-delimited JSON records on stdout, and ``--overwrite`` to allow
replacing existing outputs. The resolved configuration is logged to stderr
(and emitted as the first record under ``--json``).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .autodiff import precision
from .data import dataset as flow_dataset
from .data import (
    flow_to_color,
    images_to_input,
    read_flo,
    read_image,
    read_manifest,
    write_dataset,
    write_flo,
    write_image,
)
from .errors import FlowError
from .gesture import (
    CLASSES,
    GestureClassifier,
    GestureTrainConfig,
    classify,
    pipeline_recognize,
    prediction_record,
    read_clips,
    synth_gesture_dataset,
    train_classifier,
    write_clips,
)
from .models import ZOO, build_model, load_model, model_spec, save_checkpoint, spec_name
from .train import TrainConfig, bench, evaluate, predict, train, zero_flow_epe
from .train.config import tomllib

log = logging.getLogger("attmidflow")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _size(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"size must be positive, got {text!r}")
    return h, w


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# ---------------------------------------------------------------------------
# output helpers


class Reporter:
    def __init__(self, as_json: bool, stream=None):
        self.as_json = as_json
        self.stream = stream or sys.stdout

    def emit(self, record: dict, text: str | None = None) -> None:
        if self.as_json:
            self.stream.write(json.dumps(record, default=_jsonable) + "\n")
        else:
            self.stream.write((text if text is not None else _plain(record)) + "\n")
        self.stream.flush()


def _jsonable(o):
    if isinstance(o, (np.integer, np.floating)):
        return o.item()
    if isinstance(o, (Path, tuple)):
        return str(o) if isinstance(o, Path) else list(o)
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _plain(record: dict) -> str:
    return " ".join(f"{k}={v}" for k, v in record.items())


def _writable(path, overwrite: bool) -> Path:
    path = Path(path)
    if path.exists() and not overwrite:
        raise FileExistsError(f"{path} exists; pass --overwrite to replace it")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# commands


def cmd_generate_data(a, out: Reporter) -> None:
    root = Path(a.out)
    if (root / "manifest.jsonl").exists() and not a.overwrite:
        raise FileExistsError(f"{root}/manifest.jsonl exists; pass --overwrite to replace it")
    pairs = flow_dataset(a.seed, a.count, a.canvas, a.profile, a.workers)
    manifest = write_dataset(root, pairs)
    out.emit({"event": "generate-data", "manifest": str(manifest), "count": len(pairs),
              "zero_flow_epe": zero_flow_epe(pairs)})


def _train_config(a) -> TrainConfig:
    keys = ("iterations", "batch_size", "learning_rate", "optimizer", "lr_schedule", "lr_halve_every",
            "seed", "loss_weights", "checkpoint_every", "flip_prob", "jitter", "precision")
    return TrainConfig().updated(**{k: getattr(a, k) for k in keys})


def _load_pairs(manifest, synthetic: int, seed: int, canvas, profile):
    if manifest:
        return read_manifest(manifest)
    if not synthetic:
        raise ValueError("give --data MANIFEST or --synthetic COUNT")
    return flow_dataset(seed, synthetic, canvas, profile)


def cmd_train(a, out: Reporter) -> None:
    cfg = _train_config(a)
    ckpt = _writable(a.out, a.overwrite)
    data = _load_pairs(a.data, a.synthetic, a.data_seed, a.canvas, a.profile)
    eval_data = read_manifest(a.eval_data) if a.eval_data else None
    spec = model_spec(a.arch, a.width_divisor, a.model_seed)
    dtype = np.float64 if cfg.precision == "float64" else np.float32
    with precision(dtype):
        model = build_model(spec)
    log_fh = open(_writable(a.log, a.overwrite), "w") if a.log else None
    try:
        report = train(model, data, cfg, eval_data, a.checkpoint_dir, log_fh, a.resume)
    finally:
        if log_fh:
            log_fh.close()
    save_checkpoint(ckpt, model, {"iteration": cfg.iterations, "train_config": cfg.to_dict()})
    for rec in report.records()[:: max(1, a.report_every)]:
        out.emit({"event": "iteration", **rec})
    out.emit({"event": "train", "model": spec_name(spec), "params": model.param_count(),
              "iterations": cfg.iterations, "final_loss": report.losses[-1] if report.losses else None,
              "eval_epe": report.final_eval_epe, "seconds": report.seconds, "checkpoint": str(ckpt)})


def cmd_eval(a, out: Reporter) -> None:
    model = load_model(a.model)
    data = read_manifest(a.data)
    out.emit({"event": "eval", "model": spec_name(model.spec), "samples": len(data),
              "epe": evaluate(model, data, a.batch_size), "zero_flow_epe": zero_flow_epe(data)})


def cmd_infer(a, out: Reporter) -> None:
    dst = _writable(a.out, a.overwrite)
    model = load_model(a.model)
    im1, im2 = read_image(a.im1), read_image(a.im2)
    if im1.shape != im2.shape:
        raise ValueError(f"frames differ in size: {im1.shape} vs {im2.shape}")
    flow = predict(model, images_to_input(im1, im2, model.parameters()[0].dtype))[0]
    write_flo(dst, np.moveaxis(flow, 0, -1))
    out.emit({"event": "infer", "out": str(dst), "height": im1.shape[0], "width": im1.shape[1]})


def cmd_viz(a, out: Reporter) -> None:
    dst = _writable(a.out, a.overwrite)
    flow = read_flo(a.flo)
    write_image(dst, flow_to_color(flow, a.max_norm))
    out.emit({"event": "viz", "out": str(dst), "max_norm": float(np.hypot(flow[..., 0], flow[..., 1]).max())})


def cmd_bench(a, out: Reporter) -> None:
    names = list(ZOO) if a.arch.lower() == "all" else [a.arch]
    h, w = a.size
    for name in names:
        spec = model_spec(name, a.width_divisor)
        r = bench(build_model(spec), (a.batch, 6, h, w), a.repeats)
        out.emit({"event": "bench", "model": spec_name(spec), "params": r.param_count,
                  "median_seconds": r.median_seconds, "size": f"{h}x{w}", "times": r.times},
                 f"{spec_name(spec):<16} params={r.param_count:>11,d}  median={r.median_seconds:.3f}s")


def cmd_gesture_synth(a, out: Reporter) -> None:
    root = Path(a.out)
    if (root / "manifest.jsonl").exists() and not a.overwrite:
        raise FileExistsError(f"{root}/manifest.jsonl exists; pass --overwrite to replace it")
    clips = synth_gesture_dataset(a.seed, a.per_class, a.canvas, a.frames)
    manifest = write_clips(root, clips, with_frames=a.with_frames)
    out.emit({"event": "gesture-synth", "manifest": str(manifest), "clips": len(clips)})


def cmd_gesture_train(a, out: Reporter) -> None:
    dst = _writable(a.out, a.overwrite)
    _, clips = read_clips(a.data)
    cfg = GestureTrainConfig(a.iterations, a.batch_size, a.learning_rate, a.seed, a.segments, a.snippet_len)
    clf, losses = train_classifier(clips, cfg, a.cap)
    clf.save(dst)
    out.emit({"event": "gesture-train", "clips": len(clips), "final_loss": losses[-1],
              "cap": clf.cap, "out": str(dst)})


def cmd_gesture_eval(a, out: Reporter) -> None:
    clf = GestureClassifier.load(a.model)
    ids, clips = read_clips(a.data)
    pred_fh = open(_writable(a.predictions, a.overwrite), "w") if a.predictions else None
    correct = 0
    try:
        for cid, clip in zip(ids, clips):
            label, scores = classify(clf, clip)
            correct += label == clip.label
            if pred_fh:
                pred_fh.write(prediction_record(cid, label, scores) + "\n")
    finally:
        if pred_fh:
            pred_fh.close()
    if not clips:
        raise ValueError("no clips in manifest")
    out.emit({"event": "gesture-eval", "clips": len(clips), "accuracy": correct / len(clips),
              "classes": list(CLASSES)})


def cmd_pipeline(a, out: Reporter) -> None:
    clf = GestureClassifier.load(a.classifier)
    flow_model = load_model(a.flow_model)
    files = sorted(Path(a.frames).glob("frame_*.ppm"))
    if not files:
        raise ValueError(f"no frame_*.ppm files in {a.frames}")
    frames = np.stack([read_image(f) for f in files])
    r = pipeline_recognize(flow_model, clf, frames)
    out.emit({"event": "pipeline", "label": r.class_name, "scores": [float(s) for s in r.scores],
              "flow_seconds": r.flow_seconds, "classify_seconds": r.classify_seconds,
              "total_seconds": r.total_seconds})


# ---------------------------------------------------------------------------
# parser


def _common(p):
    p.add_argument("--config", metavar="FILE", help="TOML file of option values; command-line flags win")
    p.add_argument("--json", action="store_true", help="emit line-delimited JSON records")
    p.add_argument("--overwrite", action="store_true", help="allow replacing existing outputs")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")


def _train_flags(p):
    d = TrainConfig()
    p.add_argument("--iterations", type=int, default=d.iterations)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--learning-rate", "--lr", type=float, default=d.learning_rate)
    p.add_argument("--optimizer", choices=("adam", "sgd-momentum"), default=d.optimizer)
    p.add_argument("--lr-schedule", choices=("constant", "halve-every-n"), default=d.lr_schedule)
    p.add_argument("--lr-halve-every", type=int, default=d.lr_halve_every)
    p.add_argument("--seed", type=int, default=d.seed, help="batch order and augmentation seed")
    p.add_argument("--loss-weights", type=_floats, default=d.loss_weights, help="w0,...,w6 (finest first)")
    p.add_argument("--checkpoint-every", type=int, default=d.checkpoint_every)
    p.add_argument("--flip-prob", type=float, default=d.flip_prob)
    p.add_argument("--jitter", type=float, default=d.jitter)
    p.add_argument("--precision", choices=("float32", "float64"), default=d.precision)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="attmidflow", description="Optical flow networks with attention gates and midway fusion.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("generate-data", help="render a synthetic flow dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--count", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--canvas", type=_size, default=(64, 64), help="HxW")
    p.add_argument("--profile", choices=("chairs", "translation"), default="chairs")
    p.add_argument("--workers", type=int, default=0)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("train", help="train a flow network")
    p.add_argument("--arch", default="FlowNetS", help=f"one of {', '.join(ZOO)}")
    p.add_argument("--width-divisor", type=int, default=1)
    p.add_argument("--model-seed", type=int, default=0)
    p.add_argument("--data", help="training manifest.jsonl")
    p.add_argument("--synthetic", type=int, default=0, help="generate this many training pairs instead")
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--canvas", type=_size, default=(64, 64))
    p.add_argument("--profile", choices=("chairs", "translation"), default="chairs")
    p.add_argument("--eval-data", help="evaluation manifest.jsonl")
    p.add_argument("--out", required=True, help="final checkpoint path")
    p.add_argument("--checkpoint-dir", help="directory for periodic checkpoints")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--log", help="per-iteration JSONL log")
    p.add_argument("--report-every", type=int, default=100)
    _train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="endpoint error of a checkpoint on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--batch-size", type=int, default=16)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="estimate flow between two images")
    p.add_argument("--model", required=True)
    p.add_argument("--im1", required=True)
    p.add_argument("--im2", required=True)
    p.add_argument("--out", required=True, help=".flo output")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("viz", help="colour-code a .flo file")
    p.add_argument("--flo", required=True)
    p.add_argument("--out", required=True, help="image output (.ppm, .png)")
    p.add_argument("--max-norm", type=float, default=None)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("bench", help="forward-pass runtime and parameter count")
    p.add_argument("--arch", default="all", help="zoo name or 'all'")
    p.add_argument("--size", type=_size, default=(384, 512), help="HxW")
    p.add_argument("--width-divisor", type=int, default=1)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("gesture-synth", help="render synthetic gesture clips")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=60)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--canvas", type=_size, default=(64, 64))
    p.add_argument("--frames", type=int, default=30, help="flow frames per clip")
    p.add_argument("--with-frames", action="store_true", help="also write the RGB frames")
    p.set_defaults(func=cmd_gesture_synth)

    p = sub.add_parser("gesture-train", help="train the segment-sampled gesture classifier")
    p.add_argument("--data", required=True, help="clip manifest.jsonl")
    p.add_argument("--out", required=True, help="classifier file (.npz)")
    p.add_argument("--iterations", type=int, default=300)
    p.add_argument("--batch-size", type=int, default=12)
    p.add_argument("--learning-rate", "--lr", type=float, default=3e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--segments", type=int, default=3)
    p.add_argument("--snippet-len", type=int, default=5)
    p.add_argument("--cap", type=float, default=None, help="flow normalisation cap (default: 99.9th percentile of |flow|)")
    p.set_defaults(func=cmd_gesture_train)

    p = sub.add_parser("gesture-eval", help="classify clips and report accuracy")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--predictions", help="JSONL output: clip id, label, scores")
    p.set_defaults(func=cmd_gesture_eval)

    p = sub.add_parser("pipeline", help="flow estimation then gesture classification on RGB frames")
    p.add_argument("--flow-model", required=True)
    p.add_argument("--classifier", required=True)
    p.add_argument("--frames", required=True, help="directory of frame_NNNN.ppm files")
    p.set_defaults(func=cmd_pipeline)

    for p in sub.choices.values():
        _common(p)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str], args) -> argparse.Namespace:
    """Re-parse with the config file's values as defaults, so explicit flags still win."""
    with open(args.config, "rb") as fh:
        data = tomllib.load(fh)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    values = {}
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "func", "help"):
            raise UsageError(f"{args.config}: unknown option {key!r} for {args.command}")
        values[dest] = tuple(value) if isinstance(value, list) else value
    for action in sub._actions:
        if action.dest in values:
            action.required = False
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def _resolved(args) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(args).items() if k != "func"}


def run(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.config:
            args = _apply_config(parser, argv, args)
    except UsageError as exc:
        sys.stderr.write(f"{exc}\n")
        return 2
    except SystemExit as exc:          # --help
        return int(exc.code or 0)
    except (OSError, ValueError) as exc:
        sys.stderr.write(f"error: cannot read config: {exc}\n")
        return 2
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    out = Reporter(args.json)
    config = _resolved(args)
    log.info("resolved config: %s", json.dumps(config, sort_keys=True))
    if args.json:
        out.emit({"event": "config", **config})
    try:
        args.func(args, out)
    except (FlowError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
