"""Trainer command line: train, export, traces, plot, or the full pipeline.

The outputs (NNFI model file, golden trace file, CSV-derived figures) are
everything the simulator side needs; nothing here imports the simulator.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .data import find_data_dir, load_test, load_train
from .nnfi_format import read_container, write_model
from .plots import plot_accuracy_curve, plot_majority_histograms, plot_relu_bars
from .quantize import quantize_model, quantmodel_from_records
from .reference import quantized_accuracy
from .traces import export_golden_traces
from .train import TrainingFailed, load_checkpoint, save_checkpoint, train


def _data_dir_or_die(args) -> Path:
    root = find_data_dir(args.data_dir)
    if root is None:
        print("error: Fashion-MNIST IDX files not found (use --data-dir or "
              "NNFI_DATA_DIR)", file=sys.stderr)
        raise SystemExit(2)
    return root


def cmd_train(args) -> int:
    root = _data_dir_or_die(args)
    train_images, train_labels = load_train(root)
    test_images, test_labels = load_test(root)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        model, accuracy = train(train_images, train_labels, test_images,
                                test_labels, epochs=args.epochs,
                                batch_size=args.batch_size, seed=args.seed,
                                stop_at=args.stop_at,
                                min_accuracy=args.min_accuracy)
    except TrainingFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    ckpt = out_dir / "fashion_cnn.pt"
    save_checkpoint(model, accuracy, args.seed, ckpt)
    print(f"float test accuracy {accuracy:.4f}, "
          f"{model.parameter_count()} parameters -> {ckpt}")
    return 0


def cmd_export(args) -> int:
    root = _data_dir_or_die(args)
    model, float_acc = load_checkpoint(args.checkpoint)
    train_images, _ = load_train(root)
    qmodel = quantize_model(model, train_images)
    data = write_model(qmodel, args.out)
    # self-check: our own reader must reproduce the model we wrote
    rebuilt = quantmodel_from_records(read_container(args.out))
    assert all(np.array_equal(a.weights, b.weights.reshape(a.weights.shape))
               for a, b in zip(qmodel.layers, rebuilt.layers))
    print(f"wrote {args.out}: {len(data)} bytes, "
          f"{qmodel.parameter_count} parameters "
          f"(float accuracy {float_acc:.4f})")
    for layer in qmodel.layers:
        print(f"  {layer.name}: w_dec={layer.weight_dec} "
              f"b_dec={layer.bias_dec} out_dec={layer.output_dec} "
              f"rshift={layer.output_right_shift} "
              f"bshift={layer.bias_left_shift}")
    return 0


def cmd_traces(args) -> int:
    root = _data_dir_or_die(args)
    qmodel = quantmodel_from_records(read_container(args.model))
    test_images, test_labels = load_test(root)
    traces = export_golden_traces(qmodel, test_images, test_labels,
                                  args.count, args.out)
    print(f"wrote {args.out}: {args.count} images, "
          f"{sum(len(t['layers']) for t in traces)} layer records")
    return 0


def cmd_plot(args) -> int:
    kinds = {"curve": plot_accuracy_curve, "majority": plot_majority_histograms,
             "relu": plot_relu_bars}
    fn = kinds[args.kind]
    try:
        fn(args.csv, args.out)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


def cmd_pipeline(args) -> int:
    root = _data_dir_or_die(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_images, train_labels = load_train(root)
    test_images, test_labels = load_test(root)

    try:
        model, float_acc = train(train_images, train_labels, test_images,
                                 test_labels, epochs=args.epochs,
                                 batch_size=args.batch_size, seed=args.seed,
                                 stop_at=args.stop_at,
                                 min_accuracy=args.min_accuracy)
    except TrainingFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    save_checkpoint(model, float_acc, args.seed, out_dir / "fashion_cnn.pt")

    qmodel = quantize_model(model, train_images)
    model_path = out_dir / "fashion_cnn.nnfi"
    write_model(qmodel, model_path)

    traces_path = out_dir / "golden_traces.nnfi"
    export_golden_traces(qmodel, test_images, test_labels, args.trace_count,
                         traces_path)

    rng = np.random.default_rng(args.seed)
    subset = rng.choice(len(test_labels), size=min(1000, len(test_labels)),
                        replace=False)
    quant_acc = quantized_accuracy(qmodel, test_images[subset],
                                   test_labels[subset])
    metrics = {
        "float_test_accuracy": float_acc,
        "quantized_subset_accuracy": quant_acc,
        "quantized_subset_size": int(len(subset)),
        "seed": args.seed,
        "parameter_count": qmodel.parameter_count,
        "activation_decs": {l.name: l.output_dec for l in qmodel.layers},
    }
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2,
                                                     sort_keys=True) + "\n")
    print(f"pipeline done: float {float_acc:.4f}, quantized(~{len(subset)}) "
          f"{quant_acc:.4f}, artifacts in {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnfi-trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_train_flags(p):
        p.add_argument("--data-dir", default=None)
        p.add_argument("--epochs", type=int, default=12)
        p.add_argument("--batch-size", type=int, default=128)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--stop-at", type=float, default=0.885,
                       help="stop once test accuracy reaches this")
        p.add_argument("--min-accuracy", type=float, default=0.88,
                       help="fail the run below this final accuracy")

    p = sub.add_parser("train", help="train the float model")
    add_train_flags(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("export", help="quantize a checkpoint to an NNFI file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("traces", help="golden per-layer traces from an NNFI model")
    p.add_argument("--model", required=True)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)

    p = sub.add_parser("plot", help="render a figure from a sweep report CSV")
    p.add_argument("--kind", choices=["curve", "majority", "relu"],
                   required=True)
    p.add_argument("--out", required=True)
    p.add_argument("csv")

    p = sub.add_parser("pipeline", help="train + export + traces + metrics")
    add_train_flags(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--trace-count", type=int, default=10)
    return parser


_COMMANDS = {"train": cmd_train, "export": cmd_export, "traces": cmd_traces,
             "plot": cmd_plot, "pipeline": cmd_pipeline}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
