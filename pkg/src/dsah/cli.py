"""Command-line driver: ``dsah {synth,train,encode,eval,ablate}``.

Exit codes: 0 success, 2 usage/config error, 3 data error, 4 numerical abort.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from . import encoder as enc
from .codes import read_codes, write_codes
from .dataio import (
    Dataset,
    labels_to_indicator,
    load_dataset,
    make_synthetic_clusters,
    read_features,
    read_label_sets,
    stratified_split,
    write_features,
    write_labels,
)
from .errors import ConfigError, DataError, DimensionError, NumericalAbort
from .numerics import make_rng
from .retrieval import (
    CodeDatabase,
    evaluate,
    evaluate_asymmetric,
    write_metrics,
    write_pr_curve,
)
from .trainer import MODES, VARIANTS, TrainConfig, config_dict, train, write_history

logger = logging.getLogger("dsah")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _threads() -> int:
    raw = os.environ.get("DSAH_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"DSAH_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


class _Output:
    """Stage files in a temporary directory and move them into ``out`` on commit,
    so a failed command leaves no partial outputs behind."""

    def __init__(self, out):
        self.out = Path(out)
        self.tmp = Path(tempfile.mkdtemp(prefix=".dsah-"))
        self.names: list[str] = []

    def path(self, name: str) -> Path:
        self.names.append(name)
        return self.tmp / name

    def commit(self) -> dict:
        self.out.mkdir(parents=True, exist_ok=True)
        digests = {}
        for name in self.names:
            digests[name] = sha256(self.tmp / name)
            shutil.move(str(self.tmp / name), str(self.out / name))
        shutil.rmtree(self.tmp, ignore_errors=True)
        return digests

    def discard(self) -> None:
        shutil.rmtree(self.tmp, ignore_errors=True)


def _write_manifest(out: Path, command: str, config, inputs: dict, artifacts: dict, timings: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": getattr(config, "seed", None),
        "config": config_dict(config) if isinstance(config, TrainConfig) else config,
        "inputs": {str(p): {"sha256": sha256(p)} for p in inputs.values() if p},
        "artifacts": artifacts,
        "timings_s": {k: round(v, 6) for k, v in timings.items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _overrides(args) -> dict:
    out = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    for flag, key in (("seed", "seed"), ("bits", "c"), ("mode", "mode"), ("variant", "variant")):
        value = getattr(args, flag, None)
        if value is not None:
            out[key] = value
    return out


def load_config(args) -> TrainConfig:
    text = ""
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"{path}: no such config file")
        text = path.read_text()
    return TrainConfig.parse(text, _overrides(args)).validate()


def _load_pair(features, labels, other_labels=None) -> tuple[Dataset, int | None]:
    """Load one or two datasets sharing a label space."""
    if not features or not labels:
        raise ConfigError("--features and --labels are required")
    k = None
    if other_labels:
        for p in (labels, other_labels):
            if not Path(p).is_file():
                raise DataError(f"{p}: no such file")
        k = 1 + max(max(s) for p in (labels, other_labels) for s in read_label_sets(p))
    return load_dataset(features, labels, k), k


# --- commands ----------------------------------------------------------------


def cmd_synth(args) -> int:
    rng = make_rng(args.seed)
    data = make_synthetic_clusters(args.classes, args.per_class, args.dim, args.spread, rng)
    train_set, query_set = stratified_split(data, args.query_fraction, rng)
    out = _Output(args.out)
    ext = "bin" if args.binary else "csv"
    write_features(out.path(f"train_features.{ext}"), train_set.features, binary=args.binary)
    write_labels(out.path("train_labels.csv"), train_set)
    write_features(out.path(f"query_features.{ext}"), query_set.features, binary=args.binary)
    write_labels(out.path("query_labels.csv"), query_set)
    artifacts = out.commit()
    params = {k: getattr(args, k) for k in ("classes", "per_class", "dim", "spread", "query_fraction", "seed")}
    _write_manifest(Path(args.out), "synth", params, {}, artifacts, {})
    return EXIT_OK


def cmd_train(args) -> int:
    config = load_config(args)
    dataset, _ = _load_pair(args.features, args.labels)
    timings = {}
    t0 = time.perf_counter()
    state = train(dataset, config)
    timings["train"] = time.perf_counter() - t0
    out = _Output(args.out)
    try:
        t0 = time.perf_counter()
        enc.save_checkpoint(out.path("theta1.dsahnet"), state.theta1)
        if config.mode == "dsah1":
            enc.save_checkpoint(out.path("theta2.dsahnet"), state.theta2)
        write_codes(out.path("codes.bin" if args.packed else "codes.txt"), state.H, packed=args.packed)
        write_history(out.path("history.csv"), state.history)
        out.path("config.txt").write_text(state.config.to_text())
        timings["write"] = time.perf_counter() - t0
    except BaseException:
        out.discard()
        raise
    artifacts = out.commit()
    _write_manifest(
        Path(args.out), "train", state.config,
        {"features": args.features, "labels": args.labels}, artifacts, timings,
    )
    print(f"trained {dataset.n} samples, {config.c} bits -> {args.out}")
    return EXIT_OK


def _checkpoint_path(args) -> Path:
    if getattr(args, "checkpoint", None):
        return Path(args.checkpoint)
    if getattr(args, "run", None):
        return Path(args.run) / "theta1.dsahnet"
    raise ConfigError("need --checkpoint or --run")


def _encode_with(checkpoint: Path, features: np.ndarray) -> np.ndarray:
    if not checkpoint.is_file():
        raise DataError(f"{checkpoint}: no such checkpoint")
    params = enc.load_checkpoint(checkpoint)
    if features.shape[1] != params.input_dim:
        raise DimensionError(
            f"features have {features.shape[1]} columns, checkpoint expects {params.input_dim}"
        )
    return enc.encode_binary(params, features)


def cmd_encode(args) -> int:
    if not args.features:
        raise ConfigError("--features is required")
    if not Path(args.features).is_file():
        raise DataError(f"{args.features}: no such file")
    codes = _encode_with(_checkpoint_path(args), read_features(args.features))
    target = Path(args.out)
    target.parent.mkdir(parents=True, exist_ok=True)
    write_codes(target, codes, packed=args.packed)
    return EXIT_OK


def _run_codes(run: Path) -> np.ndarray:
    for name in ("codes.txt", "codes.bin"):
        if (run / name).is_file():
            return read_codes(run / name)
    raise DataError(f"{run}: no codes file")


def cmd_eval(args) -> int:
    if args.db_codes:
        if not (args.labels and args.query_codes and args.query_labels):
            raise ConfigError("--db-codes needs --labels, --query-codes and --query-labels")
        for p in (args.db_codes, args.labels, args.query_codes, args.query_labels):
            if not Path(p).is_file():
                raise DataError(f"{p}: no such file")
        k = 1 + max(max(s) for p in (args.labels, args.query_labels) for s in read_label_sets(p))
        db_codes = read_codes(args.db_codes)
        q_codes = read_codes(args.query_codes)
        db_labels = labels_to_indicator(read_label_sets(args.labels), k)
        q_labels = labels_to_indicator(read_label_sets(args.query_labels), k)
        report = evaluate(
            CodeDatabase.from_codes(db_codes, db_labels),
            CodeDatabase.from_codes(q_codes, q_labels),
            args.topk,
        )
    else:
        if not args.run:
            raise ConfigError("eval needs either --db-codes or --run")
        run = Path(args.run)
        dataset, k = _load_pair(args.features, args.labels, args.query_labels)
        if not args.query_features:
            raise ConfigError("--query-features is required with --run")
        queries = load_dataset(args.query_features, args.query_labels, k)
        checkpoint = _checkpoint_path(args)
        q_codes = _encode_with(checkpoint, queries.features)
        if args.mode == "symmetric":
            db_codes = _encode_with(checkpoint, dataset.features)
        else:
            db_codes = _run_codes(run)
        if db_codes.shape[0] != dataset.n:
            raise DataError(f"{db_codes.shape[0]} database codes for {dataset.n} samples")
        report = evaluate(
            CodeDatabase.from_codes(db_codes, dataset.labels),
            CodeDatabase.from_codes(q_codes, queries.labels),
            args.topk,
        )
    out = _Output(args.out)
    write_metrics(out.path("metrics.csv"), report)
    write_pr_curve(out.path("pr_curve.csv"), report)
    out.commit()
    for name, value in report.rows():
        print(f"{name},{value:.6f}")
    return EXIT_OK


ABLATION_COLUMNS = [
    "mode", "variant", "map", "precision_r2", "recall_r2", "f_measure_r2",
    "r_intra", "r_inter", "p", "q", "j_total",
]


def _ablation_cell(train_set, query_set, config, top_k):
    state = train(train_set, config)
    report = evaluate_asymmetric(state, train_set, query_set, top_k)
    return state, report


def cmd_ablate(args) -> int:
    base = load_config(args)
    train_set, k = _load_pair(args.features, args.labels, args.query_labels)
    if args.query_features and args.query_labels:
        query_set = load_dataset(args.query_features, args.query_labels, k)
    else:
        train_set, query_set = stratified_split(train_set, 0.2, make_rng(base.seed))
    # every cell uses the base seed so the variants start from the same state
    cells = [(mode, variant) for mode in MODES for variant in VARIANTS]
    configs = [replace(base, mode=mode, variant=variant) for mode, variant in cells]
    t0 = time.perf_counter()
    with ThreadPoolExecutor(max_workers=min(_threads(), len(cells))) as pool:
        results = list(pool.map(lambda cfg: _ablation_cell(train_set, query_set, cfg, args.topk), configs))
    timings = {"ablate": time.perf_counter() - t0}
    out = _Output(args.out)
    with open(out.path("ablation.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ABLATION_COLUMNS)
        for (mode, variant), (state, report) in zip(cells, results):
            last = state.history[-1].as_row()
            writer.writerow(
                [mode, variant]
                + [repr(v) for _, v in report.rows()]
                + [repr(last[c]) for c in ("r_intra", "r_inter", "p", "q", "j_total")]
            )
    for (mode, variant), (state, _) in zip(cells, results):
        write_history(out.path(f"history_{mode}_{variant}.csv"), state.history)
    artifacts = out.commit()
    _write_manifest(
        Path(args.out), "ablate", base,
        {"features": args.features, "labels": args.labels,
         "query_features": args.query_features, "query_labels": args.query_labels},
        artifacts, timings,
    )
    print(f"ablation grid written to {Path(args.out) / 'ablation.csv'}")
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dsah", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def training_flags(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--features")
        p.add_argument("--labels")
        p.add_argument("--seed", type=int)
        p.add_argument("--bits", type=int, help="code length c")
        p.add_argument("--mode", choices=MODES)
        p.add_argument("--variant", choices=VARIANTS)
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config key, e.g. --set lr=1e-5")
        p.add_argument("--out", required=True)

    p = sub.add_parser("synth", help="write a synthetic Gaussian-cluster train/query split")
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=125)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--spread", type=float, default=0.1)
    p.add_argument("--query-fraction", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--binary", action="store_true", help="binary features format")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="learn codes and encoders")
    training_flags(p)
    p.add_argument("--packed", action="store_true", help="write packed binary codes")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode features with a trained checkpoint")
    p.add_argument("--checkpoint")
    p.add_argument("--run", help="training output directory")
    p.add_argument("--features")
    p.add_argument("--packed", action="store_true")
    p.add_argument("--out", required=True, help="codes file to write")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("eval", help="retrieval metrics")
    p.add_argument("--db-codes")
    p.add_argument("--query-codes")
    p.add_argument("--run", help="training output directory")
    p.add_argument("--checkpoint")
    p.add_argument("--features", help="database features (with --run)")
    p.add_argument("--labels", help="database labels")
    p.add_argument("--query-features")
    p.add_argument("--query-labels")
    p.add_argument("--mode", choices=("asymmetric", "symmetric"), default="asymmetric")
    p.add_argument("--topk", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train every mode x variant cell")
    training_flags(p)
    p.add_argument("--query-features")
    p.add_argument("--query-labels")
    p.add_argument("--topk", type=int)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"dsah: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionError, OSError) as exc:
        print(f"dsah: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalAbort as exc:
        print(f"dsah: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
