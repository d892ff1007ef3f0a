"""Command-line front end: gen / train / eval / report.

Each run gets its own directory under the configured output root, named
by a hash of the effective config plus a timestamp. The effective
config, with every default filled in, is echoed into that directory as
``config.json`` so any run can be reproduced from its own artifacts.

The experiment ``seed`` feeds both the synthetic generator and the
trainer; per-section seeds are not separately configurable.
"""

import argparse
import concurrent.futures
import dataclasses
import hashlib
import json
import os
import sys
import time

from . import classifier as clf
from . import decode as dec
from . import metrics as mx
from . import seqdata as sd
from .errors import ConfigError, LtsegError, TrainingDivergedError

REPORT_F1_KEYS = ("0.10", "0.25", "0.50")

_SYNTH_KEYS = frozenset(
    f.name for f in dataclasses.fields(sd.SynthConfig)
) - {"class_means", "rng_seed"}
_TRAIN_KEYS = frozenset(
    f.name for f in dataclasses.fields(clf.TrainConfig)
) - {"rng_seed"}
_TOP_KEYS = frozenset(
    {
        "dataset",
        "train",
        "decode",
        "iou_thresholds",
        "head_threshold",
        "feature_format",
        "out",
        "seed",
    }
)


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run needs: a dataset source (exactly one of
    synthetic or manifest), training knobs, decoder choice, metric
    thresholds, and output placement."""

    synthetic: sd.SynthConfig = None
    manifest: str = None
    train: clf.TrainConfig = dataclasses.field(default_factory=clf.TrainConfig)
    decode_mode: str = "sncm"
    iou_thresholds: tuple = mx.DEFAULT_IOU_THRESHOLDS
    head_threshold: int = None
    feature_format: str = "binary"
    out_dir: str = "runs"
    seed: int = 0

    def validate(self):
        if (self.synthetic is None) == (self.manifest is None):
            raise ConfigError(
                "config needs exactly one dataset source, "
                "either dataset.synthetic or dataset.manifest"
            )
        if self.manifest is not None and not os.path.exists(self.manifest):
            raise ConfigError(f"manifest {self.manifest!r} does not exist")
        if self.decode_mode not in dec.DECODE_MODES:
            raise ConfigError(
                f"decode mode {self.decode_mode!r} not one of {dec.DECODE_MODES}"
            )
        if self.feature_format not in ("binary", "csv"):
            raise ConfigError(
                f"feature_format must be 'binary' or 'csv', got {self.feature_format!r}"
            )
        if not self.iou_thresholds:
            raise ConfigError("iou_thresholds must not be empty")
        for thr in self.iou_thresholds:
            if not 0.0 < thr < 1.0:
                raise ConfigError(f"IoU threshold {thr} outside (0, 1)")
        if self.head_threshold is not None and self.head_threshold <= 0:
            raise ConfigError(
                f"head_threshold must be positive, got {self.head_threshold}"
            )
        try:
            if self.synthetic is not None:
                self.synthetic.validate()
            self.train.validate()
        except TypeError as exc:
            raise ConfigError(f"config field has the wrong type: {exc}") from None
        return self


def _check_keys(mapping, allowed, where):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")


def config_from_dict(data, overrides=None) -> ExperimentConfig:
    """Build the effective config from parsed JSON plus flag overrides."""
    overrides = dict(overrides or {})
    if not isinstance(data, dict):
        raise ConfigError("config top level must be a JSON object")
    _check_keys(data, _TOP_KEYS, "config")

    seed = overrides.pop("seed", data.get("seed", 0))
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}")

    source = data.get("dataset", {"synthetic": {}})
    if not isinstance(source, dict):
        raise ConfigError("dataset section must be an object")
    _check_keys(source, {"synthetic", "manifest"}, "dataset")
    if len(source) != 1:
        raise ConfigError(
            "config needs exactly one dataset source, "
            "either dataset.synthetic or dataset.manifest"
        )
    synthetic = manifest = None
    if "manifest" in source:
        manifest = source["manifest"]
        if not isinstance(manifest, str):
            raise ConfigError(f"dataset.manifest must be a path, got {manifest!r}")
    else:
        section = source["synthetic"]
        if not isinstance(section, dict):
            raise ConfigError("dataset.synthetic section must be an object")
        _check_keys(section, _SYNTH_KEYS, "dataset.synthetic")
        try:
            synthetic = sd.SynthConfig(rng_seed=seed, **section)
        except TypeError as exc:
            raise ConfigError(f"bad dataset.synthetic section: {exc}") from None

    train_section = data.get("train", {})
    if not isinstance(train_section, dict):
        raise ConfigError("train section must be an object")
    _check_keys(train_section, _TRAIN_KEYS, "train")
    try:
        train = clf.TrainConfig(rng_seed=seed, **train_section)
    except TypeError as exc:
        raise ConfigError(f"bad train section: {exc}") from None
    for key in ("loss_mode", "tau", "epsilon", "gamma"):
        if key in overrides:
            train = dataclasses.replace(train, **{key: overrides.pop(key)})

    thresholds = data.get("iou_thresholds", list(mx.DEFAULT_IOU_THRESHOLDS))
    if not isinstance(thresholds, (list, tuple)):
        raise ConfigError("iou_thresholds must be a list")

    config = ExperimentConfig(
        synthetic=synthetic,
        manifest=manifest,
        train=train,
        decode_mode=overrides.pop("decode", data.get("decode", "sncm")),
        iou_thresholds=tuple(float(t) for t in thresholds),
        head_threshold=data.get("head_threshold"),
        feature_format=data.get("feature_format", "binary"),
        out_dir=overrides.pop("out", data.get("out", "runs")),
        seed=seed,
    )
    if overrides:
        raise ConfigError(f"unhandled overrides: {sorted(overrides)}")
    return config.validate()


def load_config(path=None, overrides=None) -> ExperimentConfig:
    """Read a config file, or start from all defaults when path is None."""
    data = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from None
    return config_from_dict(data, overrides)


def config_to_dict(config: ExperimentConfig) -> dict:
    """Effective config as plain JSON-ready data; inverse of
    config_from_dict for any config the CLI can build."""
    if config.synthetic is not None:
        source = {
            "synthetic": {
                name: getattr(config.synthetic, name) for name in sorted(_SYNTH_KEYS)
            }
        }
    else:
        source = {"manifest": config.manifest}
    return {
        "dataset": source,
        "train": {name: getattr(config.train, name) for name in sorted(_TRAIN_KEYS)},
        "decode": config.decode_mode,
        "iou_thresholds": list(config.iou_thresholds),
        "head_threshold": config.head_threshold,
        "feature_format": config.feature_format,
        "out": config.out_dir,
        "seed": config.seed,
    }


def config_hash(config: ExperimentConfig) -> str:
    canon = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()[:10]


def make_run_dir(config: ExperimentConfig) -> str:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = os.path.join(config.out_dir, f"{config_hash(config)}-{stamp}")
    path, bump = base, 0
    while True:
        try:
            os.makedirs(path)
        except FileExistsError:
            bump += 1
            path = f"{base}-{bump}"
        else:
            return path


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
        handle.write("\n")


def worker_count() -> int:
    """Worker cap for per-sequence parallelism, LTSEG_THREADS wins."""
    cap = os.environ.get("LTSEG_THREADS")
    if cap is None:
        return min(4, os.cpu_count() or 1)
    try:
        value = int(cap)
    except ValueError:
        raise ConfigError(f"LTSEG_THREADS must be an integer, got {cap!r}") from None
    if value < 1:
        raise ConfigError(f"LTSEG_THREADS must be >= 1, got {value}")
    return value


def _resolve_dataset(config: ExperimentConfig) -> sd.Dataset:
    if config.synthetic is not None:
        return sd.generate_synthetic(config.synthetic)
    return sd.load_dataset(config.manifest)


def cmd_gen(config: ExperimentConfig, stream=None) -> str:
    """Materialize the synthetic dataset and print its class frame-count
    table as CSV. Returns the run directory."""
    if config.synthetic is None:
        raise ConfigError("gen needs a synthetic dataset source, not a manifest")
    run_dir = make_run_dir(config)
    _write_json(os.path.join(run_dir, "config.json"), config_to_dict(config))
    dataset = sd.generate_synthetic(config.synthetic)
    sd.save_dataset(
        dataset,
        os.path.join(run_dir, "dataset"),
        feature_format=config.feature_format,
    )
    lines = ["class_id,name,frames"]
    for idx, name in enumerate(dataset.class_names):
        lines.append(f"{idx},{name},{int(dataset.class_frame_counts[idx])}")
    table = "\n".join(lines) + "\n"
    with open(os.path.join(run_dir, "class_counts.csv"), "w", encoding="utf-8") as fh:
        fh.write(table)
    (stream or sys.stdout).write(table)
    return run_dir


def cmd_train(config: ExperimentConfig, stream=None):
    """Train per config, write checkpoint + telemetry JSON-lines.
    Returns (run_dir, exit_code); divergence reports and exits nonzero."""
    dataset = _resolve_dataset(config)
    run_dir = make_run_dir(config)
    _write_json(os.path.join(run_dir, "config.json"), config_to_dict(config))
    try:
        params, telemetry = clf.train(dataset, config.train)
    except TrainingDivergedError as exc:
        (stream or sys.stderr).write(f"error: {exc}\n")
        return run_dir, 1
    clf.save_checkpoint(
        params, os.path.join(run_dir, "checkpoint.bin"), config.train.epochs
    )
    with open(os.path.join(run_dir, "telemetry.jsonl"), "w", encoding="utf-8") as fh:
        for record in telemetry:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    return run_dir, 0


def _predict_all(params, dataset, mode, means):
    def one(sequence):
        return dec.decode_sequence(params, sequence, mode, means=means)

    workers = worker_count()
    if workers == 1 or len(dataset.sequences) <= 1:
        return [one(sequence) for sequence in dataset.sequences]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, dataset.sequences))


def _write_report(run_dir, name, report):
    _write_json(os.path.join(run_dir, f"{name}.json"), mx.report_to_dict(report))
    rows = mx.report_to_csv_rows(report)
    with open(os.path.join(run_dir, f"{name}.csv"), "w", encoding="utf-8") as fh:
        fh.write("metric,value\n")
        for metric, value in rows:
            fh.write(f"{metric},{value}\n")


def cmd_eval(config: ExperimentConfig, checkpoint_path) -> str:
    """Decode the config's dataset with a trained checkpoint and write
    JSON + CSV metric reports. Reads only; never touches its inputs.

    NCM class means are computed from the evaluated dataset itself, so
    train/test hygiene is the caller's job (point the config at the
    split you mean to score).
    """
    params, _ = clf.load_checkpoint(checkpoint_path)
    dataset = _resolve_dataset(config)
    if params.num_classes != dataset.num_classes:
        raise ConfigError(
            f"checkpoint has {params.num_classes} classes, "
            f"dataset has {dataset.num_classes}"
        )
    if params.feature_dim != dataset.feature_dim:
        raise ConfigError(
            f"checkpoint expects {params.feature_dim}-dim features, "
            f"dataset provides {dataset.feature_dim}"
        )
    run_dir = make_run_dir(config)
    _write_json(os.path.join(run_dir, "config.json"), config_to_dict(config))

    means = None
    if config.decode_mode in ("ncm", "sncm"):
        extractor = dec.windowed_extractor(params.context_radius)
        means = dec.compute_class_means(dataset, extractor)
    truths = [sequence.frame_labels for sequence in dataset.sequences]
    head = None
    if config.head_threshold is not None:
        head, _ = sd.head_tail_split(dataset.class_frame_counts, config.head_threshold)

    predictions = _predict_all(params, dataset, config.decode_mode, means)
    report = mx.evaluate(
        predictions,
        truths,
        dataset.num_classes,
        thresholds=config.iou_thresholds,
        head=head,
    )
    _write_report(run_dir, "report", report)
    if config.decode_mode == "sncm":
        # frame-NCM alongside, so the segment-level gain is visible
        ncm_predictions = _predict_all(params, dataset, "ncm", means)
        ncm_report = mx.evaluate(
            ncm_predictions,
            truths,
            dataset.num_classes,
            thresholds=config.iou_thresholds,
            head=head,
        )
        _write_report(run_dir, "report_ncm", ncm_report)
    return run_dir


def _report_row(path, data):
    try:
        row = {
            key: data["f1_at"][key]["per_class"] for key in REPORT_F1_KEYS
        }
        row["per_class_acc"] = data["per_class_acc"]
        row["global_f1"] = data["f1_at"]["0.25"]["global"]
        row["classes"] = len(data["counts"])
    except KeyError as exc:
        raise ConfigError(f"{path} is missing report field {exc}") from None
    return row


_COMPARE_COLUMNS = (
    ("per_class_f1@0.10", "0.10"),
    ("per_class_f1@0.25", "0.25"),
    ("per_class_f1@0.50", "0.50"),
    ("per_class_acc", "per_class_acc"),
    ("global_f1@0.25", "global_f1"),
)


def cmd_report(report_paths, stream=None, out_dir=None) -> int:
    """Compare metric reports against the first one (the baseline).
    Emits a CSV table of scores and signed deltas, rows in input order."""
    if not report_paths:
        raise ConfigError("need at least one report file")
    rows = []
    for path in report_paths:
        try:
            with open(path, "r", encoding="utf-8") as handle:
                data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from None
        rows.append((path, _report_row(path, data)))
    baseline = rows[0][1]
    for path, row in rows:
        if row["classes"] != baseline["classes"]:
            raise ConfigError(
                f"{path} reports {row['classes']} classes, "
                f"baseline has {baseline['classes']}"
            )

    header = ["report"]
    for title, _ in _COMPARE_COLUMNS:
        header += [title, f"delta_{title}"]
    lines = [",".join(header)]
    table = []
    for path, row in rows:
        cells = [path]
        record = {"report": path}
        for title, key in _COMPARE_COLUMNS:
            value = row[key]
            delta = value - baseline[key]
            cells += [f"{value:.2f}", f"{delta:+.2f}"]
            record[title] = round(value, 2)
            record[f"delta_{title}"] = round(delta, 2)
        lines.append(",".join(cells))
        table.append(record)
    text = "\n".join(lines) + "\n"
    (stream or sys.stdout).write(text)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "comparison.csv"), "w", encoding="utf-8") as fh:
            fh.write(text)
        _write_json(os.path.join(out_dir, "comparison.json"), table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ltseg",
        description="Long-tailed temporal segmentation experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(cmd):
        cmd.add_argument("--config", metavar="PATH", help="experiment config JSON")
        cmd.add_argument("--seed", type=int, help="override the experiment seed")
        cmd.add_argument("--out", metavar="DIR", help="override the output root")
        cmd.add_argument("--decode", choices=dec.DECODE_MODES)
        cmd.add_argument("--loss", choices=clf.LOSS_MODES)
        cmd.add_argument("--tau", type=float, help="gain tempering exponent")
        cmd.add_argument("--epsilon", type=float, help="constraint tolerance")
        cmd.add_argument("--gamma", type=float, help="multiplier step size")

    add_common(sub.add_parser("gen", help="write a synthetic dataset to disk"))
    add_common(sub.add_parser("train", help="train a classifier"))
    cmd = sub.add_parser("eval", help="score a checkpoint")
    add_common(cmd)
    cmd.add_argument("checkpoint", help="checkpoint file to evaluate")
    cmd = sub.add_parser("report", help="compare metric reports")
    cmd.add_argument("reports", nargs="+", help="report.json files, baseline first")
    cmd.add_argument("--out", metavar="DIR", help="also write the table here")
    return parser


def _overrides_from_args(args) -> dict:
    pairs = (
        ("seed", "seed"),
        ("out", "out"),
        ("decode", "decode"),
        ("loss", "loss_mode"),
        ("tau", "tau"),
        ("epsilon", "epsilon"),
        ("gamma", "gamma"),
    )
    return {
        key: getattr(args, name)
        for name, key in pairs
        if getattr(args, name) is not None
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.reports, out_dir=args.out)
        config = load_config(args.config, _overrides_from_args(args))
        if args.command == "gen":
            cmd_gen(config)
            return 0
        if args.command == "train":
            _, code = cmd_train(config)
            return code
        cmd_eval(config, args.checkpoint)
        return 0
    except LtsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
