"""Command-line front end.

Subcommands cover the whole pipeline: synthetic stream generation, descriptor
extraction, head training and scoring, live frame monitoring, compression
runs, and the init-quantile sweep. Every command is deterministic given
(config, seed, input bytes); streaming outputs are NDJSON.

Exit codes: 0 success, 2 configuration error, 3 data/input error.
"""

from __future__ import annotations

import argparse
import socket
import sys
from pathlib import Path

import numpy as np

from . import compress, io, recurrent, synth
from .features import FEATURE_COUNT, SCHEMA_VERSION
from .stream import SlidingBuffer, descriptor_series
from .features import descriptor_vector

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3


def _add_window_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window", type=int, default=32, help="sliding window length N")
    p.add_argument("--stride", type=int, default=1, help="steps between descriptor evaluations")
    p.add_argument("--fit-bins", type=int, default=64, help="histogram bins for the MP fit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmtkit",
        description="Spectral diagnostics and compression for neural activations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "gen-synth",
        help="write synthetic activation containers",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--out", required=True, help="output file, or directory when --count > 1")
    p.add_argument("--steps", type=int, default=64, help="time steps T")
    p.add_argument("--width", type=int, default=128, help="activation width D")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--structured", action="store_true", help="spiked-to-noise stream (sets header flag)")
    p.add_argument("--sigma2", type=float, default=1.0, help="noise variance")
    p.add_argument("--spikes", type=int, default=3, help="planted signal directions (structured)")
    p.add_argument("--theta", type=float, default=8.0, help="base spike strength (structured)")
    p.add_argument("--count", type=int, default=1, help="number of containers to write")
    p.add_argument("--config", default=None, help="key=value config file; flags override")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser(
        "analyze",
        help="container -> NDJSON descriptor series",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--in", dest="inp", required=True, help="SPAC container path")
    p.add_argument("--out", default="-", help="NDJSON output path, '-' for stdout")
    _add_window_flags(p)
    p.add_argument("--config", default=None, help="key=value config file; flags override")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser(
        "train-head",
        help="train a recurrent head on labeled containers",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--data", required=True, help="directory of .spac files (labels from header flag)")
    p.add_argument("--out", required=True, help="checkpoint output path (SPHD)")
    p.add_argument("--metrics", default=None, help="per-epoch NDJSON metrics path")
    _add_window_flags(p)
    p.add_argument("--cell", choices=recurrent.CELL_KINDS, default="gru")
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-fraction", type=float, default=0.25)
    p.add_argument("--loss-reduction", choices=("final", "mean"), default="final")
    p.add_argument(
        "--positive-class",
        choices=("structured", "noise"),
        default="structured",
        help="which stream kind the head should alarm on",
    )
    p.add_argument("--config", default=None, help="key=value config file; flags override")
    p.set_defaults(func=cmd_train_head)

    p = sub.add_parser(
        "score",
        help="per-window anomaly probabilities for a container",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--checkpoint", required=True, help="SPHD checkpoint")
    p.add_argument("--in", dest="inp", required=True, help="SPAC container path")
    p.add_argument("--out", default="-", help="NDJSON output path, '-' for stdout")
    p.add_argument("--tau", type=float, default=0.5, help="gate threshold")
    _add_window_flags(p)
    p.add_argument("--config", default=None, help="key=value config file; flags override")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser(
        "monitor",
        help="score a live frame stream and emit alarm records",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--checkpoint", required=True, help="SPHD checkpoint")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="inp", help="frame stream file, '-' for stdin")
    src.add_argument("--listen", help="HOST:PORT to accept one frame-stream connection")
    p.add_argument("--out", default="-", help="NDJSON alarm output path, '-' for stdout")
    p.add_argument("--tau", type=float, default=0.5, help="gate threshold")
    _add_window_flags(p)
    p.add_argument("--config", default=None, help="key=value config file; flags override")
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser(
        "compress",
        help="train the bundled dense classifier and run the compression schedule",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--report", required=True, help="NDJSON report path")
    p.add_argument("--save-model", default=None, help="compressed checkpoint path (SPKD)")
    p.add_argument("--load-model", default=None, help="skip baseline training, load SPKD")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--train-size", type=int, default=4000)
    p.add_argument("--val-size", type=int, default=1000)
    p.add_argument("--separation", type=float, default=5.0)
    p.add_argument("--widths", default="256,256,256", help="hidden widths, comma separated")
    p.add_argument("--train-epochs", type=int, default=30)
    p.add_argument("--quantile", type=float, default=0.45)
    p.add_argument("--calib-fraction", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--rho-min", type=float, default=0.01)
    p.add_argument("--epsilon-acc", type=float, default=0.02)
    p.add_argument("--param-target", type=int, default=None)
    p.add_argument("--distill-epochs", type=int, default=12)
    p.add_argument("--config", default=None, help="key=value config file; flags override")
    p.set_defaults(func=cmd_compress)

    p = sub.add_parser(
        "sweep-quantile",
        help="rerun compression per init quantile and emit the tradeoff curve",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    p.add_argument("--out", required=True, help="NDJSON sweep output path")
    p.add_argument("--taus", default="0,0.25,0.45,0.7,0.9", help="comma-separated quantiles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--train-size", type=int, default=4000)
    p.add_argument("--val-size", type=int, default=1000)
    p.add_argument("--separation", type=float, default=5.0)
    p.add_argument("--widths", default="256,256,256", help="hidden widths, comma separated")
    p.add_argument("--train-epochs", type=int, default=30)
    p.add_argument("--calib-fraction", type=float, default=0.1)
    p.add_argument("--alpha", type=float, default=0.7)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--distill-epochs", type=int, default=12)
    p.add_argument("--config", default=None, help="key=value config file; flags override")
    p.set_defaults(func=cmd_sweep_quantile)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, args: argparse.Namespace, argv) -> None:
    """Overlay key=value pairs from --config for flags not given on the line."""
    if getattr(args, "config", None) is None:
        return
    pairs: dict[str, str] = {}
    try:
        for lineno, raw in enumerate(Path(args.config).read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{args.config}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            pairs[key.strip().replace("-", "_")] = value.strip()
    except OSError as exc:
        raise ConfigError(str(exc)) from exc

    explicit = set()
    for token in argv:
        if token.startswith("--"):
            explicit.add(token.split("=", 1)[0].lstrip("-").replace("-", "_"))
    converters = {"true": True, "false": False}
    for key, value in pairs.items():
        if key in explicit:
            continue
        if not hasattr(args, key):
            raise ConfigError(f"unknown config key {key!r}")
        current = getattr(args, key)
        if isinstance(current, bool):
            if value.lower() not in converters:
                raise ConfigError(f"config key {key!r} expects true/false, got {value!r}")
            setattr(args, key, converters[value.lower()])
        elif isinstance(current, int):
            setattr(args, key, int(value))
        elif isinstance(current, float):
            setattr(args, key, float(value))
        else:
            setattr(args, key, value)


class ConfigError(ValueError):
    pass


def _open_out(path: str):
    if path == "-":
        return sys.stdout, False
    return open(path, "w"), True


def cmd_gen_synth(args) -> int:
    rng_seeds = [args.seed + i for i in range(args.count)]
    out = Path(args.out)
    if args.count > 1:
        out.mkdir(parents=True, exist_ok=True)
    kind = "structured" if args.structured else "noise"
    for i, seed in enumerate(rng_seeds):
        rng = np.random.default_rng(seed)
        if args.structured:
            rows = synth.structured_sequence(
                args.steps, args.width, args.sigma2, args.spikes, args.theta, rng
            )
        else:
            rows = synth.noise_sequence(args.steps, args.width, args.sigma2, rng)
        path = out if args.count == 1 else out / f"{kind}_{i:04d}.spac"
        io.write_activations(path, rows.astype(np.float32), structured=args.structured)
    return EXIT_OK


def cmd_analyze(args) -> int:
    data, _ = io.read_activations(args.inp)
    series = descriptor_series(
        data.astype(np.float64), capacity=args.window, stride=args.stride, fit_bins=args.fit_bins
    )
    fh, close = _open_out(args.out)
    try:
        for vec in series.vectors:
            io.write_ndjson_line(
                fh,
                {
                    "t": vec.window_index,
                    "features": [float(v) for v in vec.values],
                    "schema_version": SCHEMA_VERSION,
                },
            )
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _load_labeled_dir(args) -> list[tuple]:
    paths = sorted(Path(args.data).glob("*.spac"))
    if not paths:
        raise io.ContainerError(f"no .spac containers found in {args.data}")
    positive_structured = args.positive_class == "structured"
    dataset = []
    for path in paths:
        data, structured = io.read_activations(path)
        label = int(structured == positive_structured)
        series = descriptor_series(
            data.astype(np.float64),
            capacity=args.window,
            stride=args.stride,
            fit_bins=args.fit_bins,
        )
        dataset.append((series, label))
    return dataset


def cmd_train_head(args) -> int:
    dataset = _load_labeled_dir(args)
    config = recurrent.TrainConfig(
        learning_rate=args.lr,
        weight_decay=args.weight_decay,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed,
        loss_reduction=args.loss_reduction,
        cell_kind=args.cell,
        hidden_size=args.hidden,
        val_fraction=args.val_fraction,
    )
    params, history = recurrent.train(dataset, config)
    io.write_head_checkpoint(args.out, params)
    if args.metrics:
        with open(args.metrics, "w") as fh:
            for epoch, (tl, vl, va) in enumerate(
                zip(history["train_loss"], history["val_loss"], history["val_auroc"]), start=1
            ):
                io.write_ndjson_line(
                    fh,
                    {"epoch": epoch, "train_loss": tl, "val_loss": vl, "val_auroc": va},
                )
    print(f"final val AUROC: {history['final_val_auroc']:.2f}")
    return EXIT_OK


def cmd_score(args) -> int:
    params = io.read_head_checkpoint(args.checkpoint)
    data, _ = io.read_activations(args.inp)
    series = descriptor_series(
        data.astype(np.float64), capacity=args.window, stride=args.stride, fit_bins=args.fit_bins
    )
    if len(series) == 0:
        raise io.ContainerError(
            f"{args.inp}: container has fewer steps than the window length {args.window}"
        )
    probs = recurrent.head_forward(params, series)
    fh, close = _open_out(args.out)
    try:
        for vec, prob in zip(series.vectors, probs):
            io.write_ndjson_line(
                fh,
                {
                    "t": vec.window_index,
                    "prob": float(prob),
                    "alarm": recurrent.gate(float(prob), args.tau),
                    "schema_version": SCHEMA_VERSION,
                },
            )
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _frame_reader(args):
    if args.inp is not None:
        if args.inp == "-":
            yield from io.read_frames(sys.stdin.buffer)
        else:
            with open(args.inp, "rb") as fh:
                yield from io.read_frames(fh)
        return
    host, _, port = args.listen.rpartition(":")
    with socket.create_server((host or "127.0.0.1", int(port))) as server:
        conn, _ = server.accept()
        with conn, conn.makefile("rb") as fh:
            yield from io.read_frames(fh)


def cmd_monitor(args) -> int:
    params = io.read_head_checkpoint(args.checkpoint)
    fh, close = _open_out(args.out)
    buffer: SlidingBuffer | None = None
    history: list[np.ndarray] = []
    try:
        for step, row in enumerate(_frame_reader(args), start=1):
            vec = row.astype(np.float64)
            if buffer is None:
                buffer = SlidingBuffer(args.window, width=vec.shape[0])
            try:
                buffer.push(vec)
            except ValueError as exc:
                raise io.ContainerError(f"at stream step {step}: {exc}") from exc
            if not (buffer.full and (buffer.step_counter - args.window) % args.stride == 0):
                continue
            window = buffer.current_window()
            assert window is not None
            feat = descriptor_vector(
                window, fit_bins=args.fit_bins, window_index=buffer.step_counter
            )
            history.append(feat.values)
            prob = float(recurrent.head_forward(params, np.stack(history))[-1])
            if recurrent.gate(prob, args.tau):
                io.write_ndjson_line(
                    fh,
                    {
                        "window_index": feat.window_index,
                        "prob": prob,
                        "alarm": True,
                        "schema_version": SCHEMA_VERSION,
                    },
                )
                fh.flush()
    finally:
        if close:
            fh.close()
    return EXIT_OK


def _mixture_and_model(args):
    widths = [int(w) for w in args.widths.split(",") if w]
    x_train, y_train, x_val, y_val = synth.gaussian_mixture_task(
        n_classes=args.classes,
        dim=args.dim,
        n_train=args.train_size,
        n_val=args.val_size,
        separation=args.separation,
        seed=args.seed,
    )
    if args.__dict__.get("load_model"):
        model = io.read_dense_checkpoint(args.load_model)
    else:
        model = compress.init_dense_net([args.dim, *widths, args.classes], seed=args.seed)
        compress.train_dense(
            model, x_train, y_train, epochs=args.train_epochs, seed=args.seed
        )
    return model, (x_train, y_train), (x_val, y_val)


def cmd_compress(args) -> int:
    model, train_data, val_data = _mixture_and_model(args)
    plan = compress.CompressionPlan(
        quantile=args.quantile,
        calibration_fraction=args.calib_fraction,
        alpha=args.alpha,
        temperature=args.temperature,
        rho_min=args.rho_min,
        epsilon_acc=args.epsilon_acc,
        param_target=args.param_target,
        distill_epochs=args.distill_epochs,
    )
    compressed, report = compress.rmtkd_schedule(model, train_data, val_data, plan, seed=args.seed)
    with open(args.report, "w") as fh:
        for record in report.to_records():
            io.write_ndjson_line(fh, record)
    if args.save_model:
        io.write_dense_checkpoint(args.save_model, compressed)
    print(
        f"reduction: {report.reduction_pct:.1f}% "
        f"({report.params_initial} -> {report.params_final} params), "
        f"val acc {report.baseline_val_acc:.3f} -> {report.final_val_acc:.3f}, "
        f"stop reason: {report.stop_reason}"
    )
    return EXIT_OK


def cmd_sweep_quantile(args) -> int:
    args.load_model = None
    model, train_data, val_data = _mixture_and_model(args)
    taus = [float(t) for t in args.taus.split(",") if t]
    plan = compress.CompressionPlan(
        calibration_fraction=args.calib_fraction,
        alpha=args.alpha,
        temperature=args.temperature,
        rho_min=1e-6,      # the sweep reports the raw tradeoff curve:
        epsilon_acc=None,  # no ratio/accuracy stops, collapse is recorded
        distill_epochs=args.distill_epochs,
    )
    results = compress.quantile_sweep(model, train_data, val_data, taus, plan, seed=args.seed)
    with open(args.out, "w") as fh:
        for record in results:
            io.write_ndjson_line(fh, record)
    for record in results:
        print(
            f"tau={record['tau']:.2f} reduction={record['reduction_pct']:.1f}% "
            f"val_acc={record['val_acc']:.3f}"
        )
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config_file(parser, args, argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except io.ContainerError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
