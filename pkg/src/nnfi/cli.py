"""Command-line entry point: single inferences, fault sweeps, report files,
and golden-trace validation.

Exit codes: 0 success, 1 runtime failure, 2 usage error (bad flags, bad
JSON, missing input paths). With ``--json`` the primary result is printed
as machine-readable JSON on stdout; progress goes to stderr.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .campaign import (SweepSpec, majority_label, run_baseline, run_sweep,
                       write_report)
from .engine import BufferArena, infer
from .errors import NnfiError
from .faults import CountermeasureConfig, FaultPlan, fault_from_json
from .model_io import (QuantTensor, load_idx, load_model, load_traces,
                       quantize_input, select_subset)
from .qtensor import AccumMode


class UsageError(Exception):
    pass


def _add_common_model_flags(p):
    p.add_argument("--model", required=True, help="NNFI model file")
    p.add_argument("--backend", choices=["naive", "im2col"], default="naive")
    p.add_argument("--accum", choices=["saturate", "wrap"], default="saturate")
    p.add_argument("--json", action="store_true", help="machine-readable stdout")


def _add_dataset_flags(p, required=True):
    p.add_argument("--images", required=required, help="IDX image file (.gz ok)")
    p.add_argument("--labels", required=required, help="IDX label file (.gz ok)")
    p.add_argument("--subset", type=int, default=None,
                   help="use a seeded random subset of N images")
    p.add_argument("--seed", type=int, default=0)


def _add_countermeasure_flags(p):
    p.add_argument("--ram-reset", choices=["on", "off"], default="off",
                   help="zero all arena buffers between inferences")
    p.add_argument("--bias-guard", choices=["off", "restore", "clamp"],
                   default="off")
    p.add_argument("--bound", type=int, default=2048)
    p.add_argument("--clamp-on", choices=["bias", "output"], default="bias")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nnfi",
        description="int8 CNN inference simulator with instruction-skip faults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="run one inference, optionally faulted")
    _add_common_model_flags(p)
    _add_dataset_flags(p, required=False)
    p.add_argument("--image-index", type=int, default=None,
                   help="index into --images/--labels")
    p.add_argument("--image-file", default=None,
                   help="single image: raw 28x28 bytes or an IDX image file")
    p.add_argument("--fault", default=None, help="fault spec JSON")
    _add_countermeasure_flags(p)
    p.add_argument("--trace", action="store_true",
                   help="include per-layer buffer snapshots")

    p = sub.add_parser("baseline", help="fault-free accuracy over a dataset")
    _add_common_model_flags(p)
    _add_dataset_flags(p)

    p = sub.add_parser("sweep", help="run a fault sweep and write a report")
    _add_common_model_flags(p)
    _add_dataset_flags(p)
    p.add_argument("--sweep", required=True,
                   help="sweep spec JSON, or @file with the JSON")
    p.add_argument("--out", required=True, help="report output path")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--workers", type=int, default=1)
    _add_countermeasure_flags(p)

    p = sub.add_parser("validate",
                       help="bit-exact per-layer comparison against golden traces")
    _add_common_model_flags(p)
    p.add_argument("--trace", required=True, help="NNFI golden trace file")
    return parser


def _require_file(path, what: str):
    if path is None or not Path(path).is_file():
        raise UsageError(f"{what} file not found: {path}")


def _load_dataset(args):
    _require_file(args.images, "--images")
    _require_file(args.labels, "--labels")
    dataset = load_idx(args.images, args.labels)
    if args.subset is not None:
        dataset = select_subset(dataset, args.subset, args.seed)
    return dataset


def _parse_json(text: str, what: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"invalid {what} JSON: {exc}") from exc


def _guard_from_args(args) -> CountermeasureConfig:
    return CountermeasureConfig(ram_reset=args.ram_reset == "on",
                                bias_guard=args.bias_guard,
                                bound=args.bound,
                                clamp_on=args.clamp_on)


def _load_single_image(args):
    if args.image_file is not None:
        _require_file(args.image_file, "--image-file")
        data = Path(args.image_file).read_bytes()
        if len(data) == 28 * 28:
            return np.frombuffer(data, dtype=np.uint8).reshape(28, 28), None
        from .model_io import _read_maybe_gzip  # IDX path
        import struct as _struct
        raw = _read_maybe_gzip(args.image_file)
        if len(raw) >= 16:
            magic, count, rows, cols = _struct.unpack(">IIII", raw[:16])
            if magic == 0x00000803 and count >= 1:
                img = np.frombuffer(raw, np.uint8, rows * cols, 16)
                return img.reshape(rows, cols), None
        raise UsageError(f"--image-file {args.image_file}: neither raw 784 "
                         f"bytes nor an IDX image file")
    if args.image_index is None:
        raise UsageError("provide --image-index with --images/--labels, "
                         "or --image-file")
    dataset = _load_dataset(args)
    if not 0 <= args.image_index < len(dataset):
        raise UsageError(f"--image-index {args.image_index} outside dataset "
                         f"of {len(dataset)}")
    return (dataset.images[args.image_index],
            int(dataset.labels[args.image_index]))


def cmd_infer(args) -> int:
    _require_file(args.model, "--model")
    model = load_model(args.model)
    image, true_label = _load_single_image(args)
    plan = None
    if args.fault is not None:
        plan = FaultPlan(fault_from_json(_parse_json(args.fault, "--fault")))
    guard = _guard_from_args(args)
    arena = BufferArena(model, reset_between_inferences=guard.ram_reset)
    pred = infer(model, quantize_input(image), arena, plan, guard=guard,
                 backend=args.backend, accum_mode=AccumMode.from_name(args.accum),
                 record_trace=args.trace)
    if args.json:
        payload = {
            "label": pred.label,
            "logits": [int(v) for v in pred.logits],
            "scores": [float(s) for s in pred.scores],
        }
        if true_label is not None:
            payload["true_label"] = true_label
        if args.trace:
            payload["trace"] = {name: [int(v) for v in buf.reshape(-1)]
                                for name, buf in pred.trace.items()}
        print(json.dumps(payload, sort_keys=True))
    else:
        print(f"label={pred.label} logits={[int(v) for v in pred.logits]}"
              + (f" true_label={true_label}" if true_label is not None else ""))
        if args.trace:
            for name, buf in pred.trace.items():
                digest = hashlib.sha256(buf.tobytes()).hexdigest()[:12]
                print(f"  {name}: shape={tuple(buf.shape)} sha256[:12]={digest}")
    return 0


def cmd_baseline(args) -> int:
    _require_file(args.model, "--model")
    model = load_model(args.model)
    dataset = _load_dataset(args)
    result = run_baseline(model, dataset, backend=args.backend,
                          accum_mode=AccumMode.from_name(args.accum))
    if args.json:
        print(json.dumps({"accuracy": result.accuracy,
                          "n_images": len(dataset),
                          "predictions": result.predictions}, sort_keys=True))
    else:
        print(f"accuracy={result.accuracy:.4f} n={len(dataset)}")
    return 0


def _sweep_from_args(args) -> SweepSpec:
    text = args.sweep
    if text.startswith("@"):
        _require_file(text[1:], "--sweep")
        text = Path(text[1:]).read_text()
    obj = _parse_json(text, "--sweep")
    if not isinstance(obj, dict):
        raise UsageError("--sweep JSON must be an object")
    try:
        family = obj["fault_family"]
        layer = obj["layer"]
    except KeyError as missing:
        raise UsageError(f"--sweep JSON missing field {missing}") from None
    if "indices" in obj:
        indices = [int(i) for i in obj["indices"]]
    elif "index_range" in obj:
        start, stop = obj["index_range"]
        indices = list(range(int(start), int(stop)))
    else:
        raise UsageError("--sweep JSON needs 'indices' or 'index_range'")
    if not indices:
        raise UsageError("--sweep index list is empty")
    kwargs = {}
    if "corrupt_value" in obj:
        kwargs["corrupt_value"] = int(obj["corrupt_value"])
    if "injection_success_prob" in obj:
        kwargs["injection_success_prob"] = float(obj["injection_success_prob"])
    return SweepSpec(fault_family=family, layer=layer, index_range=tuple(indices),
                     countermeasures=_guard_from_args(args), seed=args.seed,
                     backend=args.backend,
                     accum_mode=AccumMode.from_name(args.accum), **kwargs)


def cmd_sweep(args) -> int:
    _require_file(args.model, "--model")
    model = load_model(args.model)
    dataset = _load_dataset(args)
    sweep = _sweep_from_args(args)
    report = run_sweep(model, dataset, sweep, workers=args.workers)
    write_report(report, args.out, args.format)
    for row in report.rows:
        label, count = majority_label(row.label_histogram)
        print(f"index {row.index}: accuracy={row.accuracy:.4f} "
              f"majority={label} ({count}/{report.n_images}) "
              f"memory_effect={row.memory_effect_count}", file=sys.stderr)
    if args.json:
        print(json.dumps(report.to_json_dict(), sort_keys=True))
    else:
        print(f"baseline={report.baseline_accuracy:.4f} "
              f"rows={len(report.rows)} out={args.out}")
    return 0


def cmd_validate(args) -> int:
    _require_file(args.model, "--model")
    _require_file(args.trace, "--trace")
    model = load_model(args.model)
    traces = load_traces(args.trace)
    if not traces:
        raise NnfiError(f"trace file {args.trace} contains no images")
    first_divergence = None
    checked = 0
    for tr in traces:
        arena = BufferArena(model, reset_between_inferences=True)
        image = QuantTensor(tuple(tr.input_values.shape),
                            tr.input_values.reshape(-1), tr.input_dec)
        pred = infer(model, image, arena, backend=args.backend,
                     accum_mode=AccumMode.from_name(args.accum),
                     record_trace=True)
        for name, expected, _dec in tr.layers:
            got = pred.trace.get(name)
            if got is None:
                raise NnfiError(f"model has no layer {name!r} recorded in trace")
            checked += 1
            if got.shape != expected.shape or not np.array_equal(got, expected):
                flat_got = got.reshape(-1)
                flat_exp = expected.reshape(-1)
                where = int(np.argmax(flat_got != flat_exp))
                first_divergence = {
                    "image_index": tr.image_index,
                    "layer": name,
                    "flat_index": where,
                    "got": int(flat_got[where]),
                    "expected": int(flat_exp[where]),
                }
                break
        if first_divergence:
            break
    if args.json:
        print(json.dumps({"ok": first_divergence is None,
                          "layers_checked": checked,
                          "first_divergence": first_divergence}, sort_keys=True))
    else:
        if first_divergence is None:
            print("OK")
        else:
            d = first_divergence
            print(f"image {d['image_index']}: layer {d['layer']!r} diverges at "
                  f"flat index {d['flat_index']} "
                  f"(got {d['got']}, expected {d['expected']})")
    return 0 if first_divergence is None else 1


_COMMANDS = {
    "infer": cmd_infer,
    "baseline": cmd_baseline,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except NnfiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
