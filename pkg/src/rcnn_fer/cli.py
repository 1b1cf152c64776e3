"""Command-line entry point: ``rcnn-fer <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from fractions import Fraction
from pathlib import Path


from . import __version__
from . import report as R
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .checks import gradient_suite, oracle_suite
from .cnn import PROFILES, CnnConfig, CnnModel, build_model, forward, train
from .data import SamplePolicy, load_dataset, load_frame_dir, load_manifest, sample_frames, window_schedule
from .evaluation import compare_models, cross_validate
from .expressions import CLASS_NAMES, ExpressionClass
from .images import ImageFormatError, preprocess, read_image
from .landmarks import LandmarkError, flat_profile, read_sidecar
from .rnn import RnnCell, build_timeline, detect_shift, init_cell, next_step_accuracy, train_rnn
from .synthetic import write_frame_dir, write_synthetic
from .tensor import ActivationKind
from .training import TrainConfig, TrainingError

log = logging.getLogger("rcnn_fer")

RUNTIME_ERRORS = (OSError, ValueError, CheckpointError, TrainingError, ImageFormatError, LandmarkError)


class UsageError(Exception):
    pass


def _default_profile() -> str:
    env = os.environ.get("FER_PROFILE")
    if env is None:
        return "full-64"
    if env not in PROFILES:
        raise UsageError(f"FER_PROFILE={env!r} is not one of {sorted(PROFILES)}")
    return env


def _raw_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}") from None
    if w < 1 or h < 1:
        raise argparse.ArgumentTypeError("raw size extents must be positive")
    return w, h


def _rate(text: str) -> float:
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"expected a number or fraction, got {text!r}") from None


def _activation(text: str) -> ActivationKind:
    try:
        return ActivationKind[text.upper()]
    except KeyError:
        raise argparse.ArgumentTypeError(
            f"unknown activation {text!r}; choose from {[k.name.lower() for k in ActivationKind]}") from None


def _need_file(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    return p


def _train_config(args) -> TrainConfig:
    return TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                       seed=args.seed, optimizer=args.optimizer, epoch_cap=args.epoch_cap)


def _add_train_flags(p, epochs: int):
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--epoch-cap", type=int, default=None, help="hard ceiling on epochs")
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--optimizer", choices=["sgd", "sgd-momentum"], default="sgd-momentum")
    p.add_argument("--seed", type=int, default=0)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_train(args) -> int:
    profile = args.profile or _default_profile()
    model_cfg = CnnConfig.for_profile(profile, padding=args.padding, fc_activation=args.fc_activation,
                                      head_activation=args.head_activation,
                                      aux_landmarks=args.landmarks, seed=args.seed)
    train_cfg = _train_config(args)
    manifest = load_manifest(_need_file(args.manifest))
    if len(manifest) == 0:
        raise TrainingError(f"manifest {args.manifest} has no records")
    data = load_dataset(manifest, model_cfg.input_size, args.landmarks, args.raw_size)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.folds:
        cv = cross_validate(data, model_cfg, train_cfg, k=args.folds, seed=args.seed)
        R.write_fold_csv(cv.folds, out / "folds.csv")
        curve = cv.mean_epoch_curve()
        print(f"mean test accuracy {R.fmt(cv.mean_test_accuracy)} over {args.folds} folds")
    model, hist = train(build_model(model_cfg), data.images, data.labels, train_cfg, data.aux)
    if not args.folds:
        curve = [h.accuracy for h in hist]
    comparison = None
    if args.compare:
        if args.landmarks:
            raise UsageError("--compare does not support --landmarks")
        comparison, _ = compare_models(data, model_cfg, train_cfg)
    R.emit_plot_data(out, epoch_accuracy=curve, comparison=comparison)
    save_checkpoint(model, out / "model.ckpt")
    print(f"wrote {out / 'model.ckpt'}")
    return 0


def cmd_train_rnn(args) -> int:
    seqs = [R.read_timeline_csv(_need_file(p)).matrix() for p in args.timelines]
    cfg = _train_config(args)
    cell, hist = train_rnn(init_cell(args.hidden, args.seed), seqs, cfg)
    save_checkpoint(cell, args.out)
    acc = next_step_accuracy(cell, seqs)
    print(f"next-step accuracy {R.fmt(acc)}; wrote {args.out}")
    return 0


def _load(path, kind):
    obj = load_checkpoint(_need_file(path))
    if not isinstance(obj, kind):
        raise CheckpointError(f"{path} holds a {type(obj).__name__}, expected {kind.__name__}")
    return obj


def cmd_predict(args) -> int:
    model = _load(args.checkpoint, CnnModel)
    img = preprocess(read_image(_need_file(args.image), args.raw_size), model.config.input_size)
    aux = flat_profile(read_sidecar(_need_file(args.landmarks))) if args.landmarks else None
    dist = forward(model, img, aux)
    print(",".join(CLASS_NAMES))
    print(",".join(R.fmt(v) for v in dist.scores))
    return 0


def cmd_timeline(args) -> int:
    model = _load(args.checkpoint, CnnModel)
    cell = _load(args.rnn, RnnCell) if args.rnn else None
    frames = load_frame_dir(args.frames, args.fps, args.raw_size)
    policy = SamplePolicy(args.fps, args.keep_rate, args.variance_max, args.seed)
    kept = sample_frames(frames, policy)
    wins = window_schedule(kept, args.start, args.spacing, args.windows, args.width)
    stamps = [args.start + k * args.spacing for k in range(args.windows)]
    tl = build_timeline(model, cell, list(zip(stamps, wins)), args.spacing)
    R.write_timeline_csv(tl, args.out)
    if tl.predicted_next is not None:
        nxt = Path(args.out).with_name(Path(args.out).stem + "_next.csv")
        R.write_rows(nxt, list(CLASS_NAMES), [[R.fmt(v) for v in tl.predicted_next.scores]])
    print(f"kept {len(kept)} of {len(frames)} frames; wrote {args.out}")
    return 0


def cmd_report(args) -> int:
    if args.fixture:
        tl = R.table2_timeline()
    elif args.timeline:
        tl = R.read_timeline_csv(_need_file(args.timeline))
    else:
        raise UsageError("report needs a timeline CSV or --fixture table2")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "table2":
        R.write_table2_csv(tl, out / "table2.csv")
    else:
        R.write_timeline_csv(tl, out / "timeline.csv")
    R.write_shift_json(tl, out / "shift.json")
    R.emit_plot_data(out, timeline=tl, report=detect_shift(tl))
    for t in detect_shift(tl).transitions:
        print(f"shift {t.source.label} -> {t.target.label} at {t.timestamp:g}s")
    return 0


def _print_results(results) -> int:
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} passed")
    return 0 if failed == 0 else 1


def cmd_gradcheck(args) -> int:
    return _print_results(gradient_suite(seed=args.seed, samples=args.samples))


def cmd_selftest(args) -> int:
    return _print_results(oracle_suite(cases=args.cases, seed=args.seed))


def _schedule(text: str) -> list[tuple[int, float]]:
    runs = []
    for part in text.split(","):
        name, _, secs = part.partition(":")
        try:
            runs.append((int(ExpressionClass.parse(name)), float(secs)))
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e)) from None
    return runs


def cmd_synth(args) -> int:
    out = Path(args.out)
    if args.frames:
        write_frame_dir(out, args.frames, args.fps, args.noise, args.seed)
        print(f"wrote frames to {out}")
    else:
        path = write_synthetic(out, args.per_class, args.noise, args.seed)
        print(f"wrote {path}")
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rcnn-fer", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"rcnn-fer {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log per-epoch metrics")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train the CNN on a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--profile", choices=sorted(PROFILES), default=None,
                   help="input profile (default: $FER_PROFILE or full-64)")
    p.add_argument("--folds", type=int, default=0, help="run k-fold cross-validation first")
    p.add_argument("--compare", action="store_true", help="also write baseline/cnn/rcnn comparison")
    p.add_argument("--landmarks", action="store_true", help="feed landmark profiles from sidecars")
    p.add_argument("--padding", choices=["valid", "same"], default="valid")
    p.add_argument("--fc-activation", type=_activation, default=ActivationKind.SIGMOID_EQ1)
    p.add_argument("--head-activation", type=_activation, default=ActivationKind.SOFTMAX_STANDARD)
    p.add_argument("--raw-size", type=_raw_size, default=None, metavar="WxH")
    _add_train_flags(p, epochs=5)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-rnn", help="train the recurrent cell on timeline CSVs")
    p.add_argument("timelines", nargs="+")
    p.add_argument("--out", required=True, help="cell checkpoint path")
    p.add_argument("--hidden", type=int, default=16)
    _add_train_flags(p, epochs=200)
    p.set_defaults(func=cmd_train_rnn)

    p = sub.add_parser("predict", help="score one image")
    p.add_argument("checkpoint")
    p.add_argument("image")
    p.add_argument("--landmarks", default=None, help="68-point sidecar file")
    p.add_argument("--raw-size", type=_raw_size, default=None, metavar="WxH")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("timeline", help="windowed expression timeline from a frame directory")
    p.add_argument("checkpoint")
    p.add_argument("frames", help="directory of numbered frames")
    p.add_argument("--out", required=True, help="timeline CSV path")
    p.add_argument("--rnn", default=None, help="cell checkpoint for a next-window prediction")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--spacing", type=float, default=10.0)
    p.add_argument("--windows", type=int, default=4)
    p.add_argument("--width", type=float, default=None, help="window width (default: spacing)")
    p.add_argument("--keep-rate", type=_rate, default=1 / 6)
    p.add_argument("--variance-max", action="store_true")
    p.add_argument("--raw-size", type=_raw_size, default=None, metavar="WxH")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_timeline)

    p = sub.add_parser("report", help="tables, shift analysis and plot data from a timeline")
    p.add_argument("timeline", nargs="?")
    p.add_argument("--fixture", choices=["table2"], default=None, help="use a bundled timeline")
    p.add_argument("--format", choices=["table2", "timeline"], default="table2")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=12, help="probed entries per parameter")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("selftest", help="brute-force oracle suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cases", type=int, default=100)
    p.set_defaults(func=cmd_selftest)

    p = sub.add_parser("synth", help="write a synthetic dataset or frame directory")
    p.add_argument("out")
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--frames", type=_schedule, default=None, metavar="CLASS:SECS,...",
                   help="write numbered frames following this schedule instead")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "seed"):
        print(f"seed={args.seed}", file=sys.stderr)
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"rcnn-fer: error: {e}", file=sys.stderr)
        return 2
    except RUNTIME_ERRORS as e:
        print(f"rcnn-fer: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
