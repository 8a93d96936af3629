"""Command-line entry point: `driftmem run` and `driftmem simulate`.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 training
divergence.
"""

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .data import DataError, generate_synthetic_stream, load_csv_stream, stream_preset, STREAM_PRESETS, StreamConfig
from .harness import METHOD_KINDS, MethodSpec, run_experiment, write_run_outputs
from .model import LossWeights, TrainConfig, TrainingDivergenceError


class ConfigError(ValueError):
    """Bad or unknown configuration value; the message names the key."""


EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4

_TOP_KEYS = {
    "data",
    "methods",
    "memory_budget",
    "loss_weights",
    "train",
    "future_fraction",
    "seeds",
    "out_dir",
    "projection",
}
_DATA_KEYS_CSV = {"kind", "path", "period_length", "target_columns"}
_DATA_KEYS_SYNTH = {
    "kind",
    "preset",
    "periods",
    "samples_per_period",
    "input_dim",
    "target_dim",
    "shift_schedule",
    "noise_std",
    "seed",
}
_LOSS_KEYS = {"alpha", "beta", "xi", "delta"}
_TRAIN_KEYS = {"learning_rate", "epochs", "batch_size", "optimizer", "hidden_dim"}


def _reject_unknown(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be a JSON object")
    for key in obj:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")


def parse_config(doc):
    """Validate a config document (strict: unknown keys are rejected) and
    normalize it with defaults applied."""
    _reject_unknown(doc, _TOP_KEYS, "config")
    if "data" not in doc:
        raise ConfigError("missing required key 'data'")
    data = doc["data"]
    if not isinstance(data, dict) or "kind" not in data:
        raise ConfigError("'data' must be an object with a 'kind' key")
    if data["kind"] == "csv":
        _reject_unknown(data, _DATA_KEYS_CSV, "data")
        for key in ("path", "period_length", "target_columns"):
            if key not in data:
                raise ConfigError(f"missing required key {key!r} in data")
    elif data["kind"] == "synthetic":
        _reject_unknown(data, _DATA_KEYS_SYNTH, "data")
        if "preset" in data:
            extra = set(data) - {"kind", "preset", "seed"}
            if extra:
                raise ConfigError(
                    f"key {sorted(extra)[0]!r} in data conflicts with 'preset'"
                )
            if data["preset"] not in STREAM_PRESETS:
                raise ConfigError(
                    f"unknown preset {data['preset']!r}; available: {sorted(STREAM_PRESETS)}"
                )
        else:
            for key in ("periods", "samples_per_period", "input_dim"):
                if key not in data:
                    raise ConfigError(f"missing required key {key!r} in data")
    else:
        raise ConfigError(f"unknown data kind {data['kind']!r} (expected 'csv' or 'synthetic')")
    methods = doc.get("methods", ["dmshm"])
    if not isinstance(methods, list) or not methods:
        raise ConfigError("'methods' must be a non-empty list")
    for kind in methods:
        if kind not in METHOD_KINDS:
            raise ConfigError(f"unknown method {kind!r}; choose from {list(METHOD_KINDS)}")
    loss = dict(doc.get("loss_weights", {}))
    _reject_unknown(loss, _LOSS_KEYS, "loss_weights")
    train = dict(doc.get("train", {}))
    _reject_unknown(train, _TRAIN_KEYS, "train")
    seeds = doc.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("'seeds' must be a non-empty list")
    resolved = {
        "data": data,
        "methods": list(methods),
        "memory_budget": int(doc.get("memory_budget", 50)),
        "loss_weights": {
            "alpha": float(loss.get("alpha", 1.0)),
            "beta": float(loss.get("beta", 1.0)),
            "xi": float(loss.get("xi", 1.0)),
            "delta": float(loss.get("delta", 1.0)),
        },
        "train": {
            "learning_rate": float(train.get("learning_rate", 1e-3)),
            "epochs": int(train.get("epochs", 100)),
            "batch_size": int(train.get("batch_size", 64)),
            "optimizer": str(train.get("optimizer", "adam")),
            "hidden_dim": int(train.get("hidden_dim", 32)),
        },
        "future_fraction": float(doc.get("future_fraction", 0.1)),
        "seeds": [int(s) for s in seeds],
        "out_dir": str(doc.get("out_dir", "runs")),
        "projection": bool(doc.get("projection", False)),
    }
    try:
        _build_train_config(resolved)  # validate field ranges early
        LossWeights(**resolved["loss_weights"])
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return resolved


def _build_train_config(resolved):
    return TrainConfig(
        loss_weights=LossWeights(**resolved["loss_weights"]), **resolved["train"]
    )


def build_stream(data_cfg, run_seed):
    """Materialize the stream for one run. Synthetic streams are re-seeded
    per run seed; CSV streams are fixed."""
    if data_cfg["kind"] == "csv":
        return load_csv_stream(
            data_cfg["path"], int(data_cfg["period_length"]), data_cfg["target_columns"]
        )
    if "preset" in data_cfg:
        base = stream_preset(data_cfg["preset"])
        if "seed" in data_cfg:
            base = replace(base, seed=int(data_cfg["seed"]))
    else:
        base = StreamConfig(
            periods=int(data_cfg["periods"]),
            samples_per_period=int(data_cfg["samples_per_period"]),
            input_dim=int(data_cfg["input_dim"]),
            target_dim=int(data_cfg.get("target_dim", 1)),
            shift_schedule=tuple(
                (int(p), tuple(off), float(sc))
                for p, off, sc in data_cfg.get("shift_schedule", [])
            ),
            noise_std=float(data_cfg.get("noise_std", 0.0)),
            seed=int(data_cfg.get("seed", 0)),
        )
    mixed = int(np.random.SeedSequence([base.seed, int(run_seed)]).generate_state(1)[0])
    return generate_synthetic_stream(replace(base, seed=mixed))


def _run_one(job):
    resolved, kind, seed = job
    stream = build_stream(resolved["data"], seed)
    method = MethodSpec(kind)
    report = run_experiment(
        stream,
        method,
        _build_train_config(resolved),
        resolved["memory_budget"],
        seed,
        future_fraction=resolved["future_fraction"],
    )
    run_dir = f"{resolved['out_dir']}/{kind}_seed{seed}"
    run_config = dict(resolved, methods=[kind], seeds=[seed])
    projection = None
    if resolved["projection"]:
        projection = [(p.index, p.x) for p in stream]
    write_run_outputs(report, run_dir, resolved_config=run_config, projection_points=projection)
    print(f"[driftmem] {kind} seed={seed}: FE={report.fe:.6g} PE={report.pe:.6g}")
    return kind, seed, report.fe, report.pe


def cmd_run(args):
    try:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as err:
        print(f"error: cannot read config: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as err:
        print(f"error: config is not valid JSON: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        resolved = parse_config(doc)
        if args.method is not None:
            if args.method not in METHOD_KINDS:
                raise ConfigError(f"unknown method {args.method!r}; choose from {list(METHOD_KINDS)}")
            resolved["methods"] = [args.method]
        if args.seed is not None:
            resolved["seeds"] = [args.seed]
        if args.out is not None:
            resolved["out_dir"] = args.out
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    jobs = [(resolved, kind, seed) for kind in resolved["methods"] for seed in resolved["seeds"]]
    try:
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_run_one, jobs))
        else:
            results = [_run_one(job) for job in jobs]
    except DataError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergenceError as err:
        print(f"error: training diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    _write_summary(resolved, results)
    return 0


def _write_summary(resolved, results):
    import os

    os.makedirs(resolved["out_dir"], exist_ok=True)
    path = f"{resolved['out_dir']}/summary.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "fe_mean", "fe_std", "pe_mean", "pe_std"])
        for kind in resolved["methods"]:
            fes = [fe for k, _, fe, _ in results if k == kind]
            pes = [pe for k, _, _, pe in results if k == kind]
            fe_std = float(np.std(fes, ddof=1)) if len(fes) > 1 else 0.0
            pe_std = float(np.std(pes, ddof=1)) if len(pes) > 1 else 0.0
            writer.writerow(
                [kind, repr(float(np.mean(fes))), repr(fe_std), repr(float(np.mean(pes))), repr(pe_std)]
            )


def cmd_simulate(args):
    if args.preset not in STREAM_PRESETS:
        print(
            f"error: unknown preset {args.preset!r}; available: {sorted(STREAM_PRESETS)}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    config = stream_preset(args.preset)
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    stream = generate_synthetic_stream(config)
    k = config.input_dim
    m = config.target_dim
    header = [f"x{i + 1}" for i in range(k)]
    header += ["y"] if m == 1 else [f"y{i + 1}" for i in range(m)]
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for period in stream:
            for i in range(period.size):
                writer.writerow(
                    [repr(float(v)) for v in period.x[i]] + [repr(float(v)) for v in period.y[i]]
                )
    print(f"[driftmem] wrote {sum(p.size for p in stream)} rows ({config.periods} periods) to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="driftmem", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run experiments from a JSON config")
    run.add_argument("--config", required=True, help="path to the JSON config")
    run.add_argument("--seed", type=int, default=None, help="override the config's seed list")
    run.add_argument("--method", default=None, help="override the config's method list")
    run.add_argument("--out", default=None, help="override the output directory")
    run.add_argument("--jobs", type=int, default=1, help="parallel (method, seed) runs")
    run.set_defaults(func=cmd_run)
    sim = sub.add_parser("simulate", help="write a synthetic stream preset to CSV")
    sim.add_argument("--preset", required=True, help=f"one of {sorted(STREAM_PRESETS)}")
    sim.add_argument("--seed", type=int, default=None, help="override the preset's seed")
    sim.add_argument("--out", required=True, help="output CSV path")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
