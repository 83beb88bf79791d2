"""Command-line entry point: ``darn train | sample | eval | inspect``.

Exit codes: 0 success, 1 usage, 2 data error, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import data_io
from .errors import DarnError, DataError, DimensionError, EnumerationLimitError, NumericError
from .evaluation import dataset_eval
from .model import Architecture, StochasticLayerSpec
from .sampler import count_multiplications, make_rng, sample_decoder
from .training import TrainConfig, config_dict, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(DarnError):
    pass


def parse_arch(spec: str) -> Architecture:
    """Parse ``x=<n>[,ar]; h=<n>[,det=<m>][,enc-ar][,no-dec-ar]; ...`` (layers bottom-up)."""
    parts = [p.strip() for p in spec.split(";") if p.strip()]
    if not parts:
        raise UsageError("empty architecture spec")
    n_x, visible_ar, layers = None, False, []
    for part in parts:
        tokens = [t.strip() for t in part.split(",")]
        key, _, value = tokens[0].partition("=")
        try:
            size = int(value)
        except ValueError:
            raise UsageError(f"bad size in {tokens[0]!r}") from None
        if key == "x":
            if n_x is not None:
                raise UsageError("visible layer given twice")
            n_x = size
            for opt in tokens[1:]:
                if opt != "ar":
                    raise UsageError(f"unknown visible-layer option {opt!r}")
                visible_ar = True
        elif key == "h":
            det, enc_ar, dec_ar = 0, False, True
            for opt in tokens[1:]:
                if opt.startswith("det="):
                    try:
                        det = int(opt[4:])
                    except ValueError:
                        raise UsageError(f"bad det width {opt!r}") from None
                elif opt == "enc-ar":
                    enc_ar = True
                elif opt == "no-dec-ar":
                    dec_ar = False
                else:
                    raise UsageError(f"unknown layer option {opt!r}")
            try:
                layers.append(StochasticLayerSpec(size, det, enc_ar, dec_ar))
            except ValueError as exc:
                raise UsageError(str(exc)) from None
        else:
            raise UsageError(f"unknown layer kind {key!r} (expected x or h)")
    if n_x is None:
        raise UsageError("architecture needs x=<n>")
    try:
        return Architecture(n_x, tuple(layers), visible_ar)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def format_arch(arch: Architecture) -> str:
    parts = [f"x={arch.n_x}" + (",ar" if arch.visible_autoregressive else "")]
    for spec in arch.layers:
        opts = [f"h={spec.n_h}"]
        if spec.det_width:
            opts.append(f"det={spec.det_width}")
        if spec.encoder_autoregressive:
            opts.append("enc-ar")
        if not spec.decoder_autoregressive:
            opts.append("no-dec-ar")
        parts.append(",".join(opts))
    return ";".join(parts)


def parse_image_shape(text: str) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"image shape must look like 28x28, got {text!r}") from None
    return h, w


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="darn", description="Deep autoregressive networks: train, sample, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="key=value file merged under the command-line flags")
        p.add_argument("--seed", type=int, default=0, help="seed of every random stream")
        p.add_argument("--threads", type=int, default=1, help="maximum worker threads")

    p = sub.add_parser("train", help="train a model")
    common(p)
    p.add_argument("--data", help="training data (IDX or binary CSV)")
    p.add_argument("--arch", help='architecture, e.g. "x=784;h=16,det=100"')
    p.add_argument("--out", help="checkpoint to write")
    p.add_argument("--val", help="validation data for early stopping")
    p.add_argument("--log", help="training log path (default: <out>.log)")
    p.add_argument("--lr", type=float, default=2.5e-4, help="learning rate")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--minibatch", type=int, default=100)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--rms-decay", type=float, default=0.95)
    p.add_argument("--rms-epsilon", type=float, default=1e-4)
    p.add_argument("--patience", type=int, default=20, help="early-stopping patience in epochs")
    p.add_argument("--init-scale", type=float, default=0.01)
    p.add_argument("--binarize", choices=["threshold", "stochastic"], default="threshold")
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("sample", help="draw samples from a trained model")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--out-pgm", help="directory for one PGM file per sample")
    p.add_argument("--out-csv", help="CSV file with one sample per row")
    p.add_argument("--probs", action="store_true", help="emit visible Bernoulli probabilities instead of bits")
    p.add_argument("--image-shape", help="HxW override for PGM output")

    p = sub.add_parser("eval", help="evaluate log-likelihood on a dataset")
    common(p)
    p.add_argument("--checkpoint")
    p.add_argument("--data")
    p.add_argument("--mode", choices=["exact", "is", "fe"], default="exact")
    p.add_argument("--S", type=int, default=100_000, help="importance samples per repeat")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--per-datum", action="store_true", help="print one line per datum")
    p.add_argument("--binarize", choices=["threshold", "stochastic"], default="threshold")
    p.add_argument("--threshold", type=float, default=0.5)

    p = sub.add_parser("inspect", help="describe a checkpoint")
    common(p)
    p.add_argument("--checkpoint")
    return parser


def _read_config(path: str) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        values[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return values


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, value in _read_config(args.config).items():
            action = actions.get(key)
            if action is None or key in ("config", "help"):
                raise UsageError(f"unknown config key {key!r}")
            if action.nargs == 0:
                defaults[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                defaults[key] = action.type(value) if action.type else value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) in (None, "")]
    if missing:
        raise UsageError("missing required flag(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def cmd_train(args) -> int:
    _require(args, "data", "arch", "out")
    arch = parse_arch(args.arch)
    data = data_io.load_dataset(args.data, args.binarize, args.threshold, args.seed)
    val = None if not args.val else data_io.load_dataset(args.val, args.binarize, args.threshold, args.seed)
    try:
        cfg = TrainConfig(learning_rate=args.lr, momentum=args.momentum, rms_decay=args.rms_decay,
                          rms_epsilon=args.rms_epsilon, minibatch=args.minibatch, epochs=args.epochs,
                          seed=args.seed, early_stop_patience=args.patience, init_scale=args.init_scale)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    log_path = args.log or args.out + ".log"
    with open(log_path, "w") as log_stream:
        result = train(data, arch, cfg, val, log_stream=log_stream)
    echo = config_dict(cfg)
    echo.update(arch=format_arch(arch), image_shape=data.image_shape, best_epoch=result.best_epoch)
    data_io.save_checkpoint(args.out, data_io.Checkpoint(result.params, result.state, echo, args.seed))
    last = result.log[-1]
    print(f"trained {len(result.log)} epochs; best epoch {result.best_epoch}; "
          f"final train {last.train_nats:.4f} val {last.val_nats:.4f} nats")
    return EXIT_OK


def cmd_sample(args) -> int:
    _require(args, "checkpoint")
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    cp = data_io.load_checkpoint(args.checkpoint)
    shape = parse_image_shape(args.image_shape) if args.image_shape else cp.config.get("image_shape")
    if args.out_pgm and shape is None:
        raise DataError("--out-pgm needs an image shape: the checkpoint has none, pass --image-shape HxW")
    if args.count == 0:
        return EXIT_OK
    x, _, probs = sample_decoder(cp.params, make_rng(args.seed), size=args.count, with_probs=True)
    out = probs if args.probs else x
    if args.out_csv:
        if args.probs:
            np.savetxt(args.out_csv, out, delimiter=",", fmt="%.17g")
        else:
            data_io.write_binary_csv(args.out_csv, out)
    if args.out_pgm:
        directory = Path(args.out_pgm)
        directory.mkdir(parents=True, exist_ok=True)
        for i, row in enumerate(out):
            data_io.write_pgm(row, directory / f"sample_{i:06d}.pgm", tuple(shape))
    if not args.out_csv and not args.out_pgm:
        for row in out:
            print(",".join(f"{v:.6g}" if args.probs else str(int(v)) for v in row))
    return EXIT_OK


def cmd_eval(args) -> int:
    _require(args, "checkpoint", "data")
    cp = data_io.load_checkpoint(args.checkpoint)
    data = data_io.load_dataset(args.data, args.binarize, args.threshold, args.seed)
    if data.n_x != cp.arch.n_x:
        raise DataError(f"data has {data.n_x} columns, model expects {cp.arch.n_x}")
    try:
        summary = dataset_eval(cp.params, data, args.mode, args.S, args.repeats, args.seed, args.threads)
    except EnumerationLimitError as exc:
        raise UsageError(f"{exc}; use --mode is") from None
    if args.per_datum:
        for i, value in enumerate(summary.per_datum):
            print(f"datum\t{i}\t{value:.6f}")
    print(summary.summary_line())
    return EXIT_OK


def cmd_inspect(args) -> int:
    _require(args, "checkpoint")
    cp = data_io.load_checkpoint(args.checkpoint)
    print(f"arch\t{format_arch(cp.arch)}")
    print(f"parameters\t{cp.params.num_parameters()}")
    print(f"multiplications_per_sample\t{count_multiplications(cp.arch)}")
    print(f"optimizer_state\t{'yes' if cp.optimizer is not None else 'no'}")
    print(f"seed\t{cp.seed}")
    print(f"config\t{json.dumps(cp.config, sort_keys=True)}")
    return EXIT_OK


COMMANDS = {"train": cmd_train, "sample": cmd_sample, "eval": cmd_eval, "inspect": cmd_inspect}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"darn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"darn: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, DimensionError, OSError, ValueError) as exc:
        print(f"darn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
