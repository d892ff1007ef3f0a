"""Labeled frame sequences, synthetic long-tailed data, and dataset I/O.

A sequence is a feature matrix [D x T] plus a class label per frame. The
same labeling is carried in two mutually consistent views: frame-wise
(one id per frame) and segment-wise (maximal runs of a single class).
Each frame also records the label of the preceding segment, with the
synthetic 'start' class (index L) standing in before the first segment.
"""

import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EmptySequenceError, ParseError, RangeError

START = "start"


@dataclass(frozen=True)
class Segmentation:
    """Ordered run-length view of a frame labeling.

    ``segments`` holds (start, end, label) triples with inclusive ends,
    contiguous over [0, T), adjacent labels distinct.
    """

    segments: tuple

    def __len__(self):
        return len(self.segments)

    @property
    def num_frames(self):
        return self.segments[-1][1] + 1 if self.segments else 0

    def labels(self):
        """Per-segment label array, in temporal order."""
        return np.array([label for _, _, label in self.segments], dtype=np.int64)

    def expand(self):
        """Frame-wise labels; inverse of :func:`segmentation_from_frames`."""
        out = np.empty(self.num_frames, dtype=np.int64)
        for start, end, label in self.segments:
            out[start : end + 1] = label
        return out

    def validate(self, num_classes=None):
        if not self.segments:
            raise EmptySequenceError("segmentation has no segments")
        prev_end = -1
        prev_label = None
        for start, end, label in self.segments:
            if start != prev_end + 1 or end < start:
                raise ConfigError(
                    f"segment ({start}, {end}) does not continue from frame {prev_end}"
                )
            if label == prev_label:
                raise ConfigError(f"adjacent segments share label {label}")
            if label < 0 or (num_classes is not None and label >= num_classes):
                raise RangeError(
                    f"segment label {label} outside [0, {num_classes})"
                )
            prev_end = end
            prev_label = label
        return self


def segmentation_from_frames(frame_labels) -> Segmentation:
    """Run-length encode a frame labeling into a Segmentation."""
    labels = np.asarray(frame_labels, dtype=np.int64)
    if labels.size == 0:
        raise EmptySequenceError("cannot segment an empty frame labeling")
    change = np.flatnonzero(labels[1:] != labels[:-1])
    starts = np.concatenate(([0], change + 1))
    ends = np.concatenate((change, [labels.size - 1]))
    return Segmentation(
        tuple(
            (int(s), int(e), int(labels[s])) for s, e in zip(starts, ends)
        )
    )


def prev_action_from_segmentation(segmentation, num_classes):
    """Previous-segment label per frame; 'start' (= num_classes) before
    the first segment."""
    out = np.empty(segmentation.num_frames, dtype=np.int64)
    prev = num_classes
    for start, end, label in segmentation.segments:
        out[start : end + 1] = prev
        prev = label
    return out


@dataclass(frozen=True, eq=False)
class LabeledSequence:
    """One sequence: features [D x T], a label per frame, the previous
    action per frame, and the derived segmentation."""

    features: np.ndarray
    frame_labels: np.ndarray
    prev_action: np.ndarray
    segmentation: Segmentation
    seq_id: str = ""

    @property
    def num_frames(self):
        return self.frame_labels.shape[0]

    @property
    def feature_dim(self):
        return self.features.shape[0]

    @classmethod
    def from_frames(cls, features, frame_labels, num_classes, seq_id=""):
        """Build a sequence from raw arrays, deriving the segment view and
        previous actions, and checking every invariant."""
        feats = np.asarray(features, dtype=np.float32)
        labels = np.asarray(frame_labels, dtype=np.int64)
        if labels.ndim != 1 or labels.size == 0:
            raise EmptySequenceError(
                f"sequence {seq_id or '<unnamed>'} has no frames"
            )
        if feats.ndim != 2 or feats.shape[1] != labels.size:
            raise ConfigError(
                f"sequence {seq_id or '<unnamed>'}: feature matrix "
                f"{feats.shape} does not match {labels.size} frames"
            )
        if feats.shape[0] <= 0:
            raise ConfigError("feature dimension must be positive")
        if not np.isfinite(feats).all():
            raise RangeError(
                f"sequence {seq_id or '<unnamed>'} has non-finite features"
            )
        if labels.min() < 0 or labels.max() >= num_classes:
            bad = int(labels.max() if labels.max() >= num_classes else labels.min())
            raise RangeError(
                f"sequence {seq_id or '<unnamed>'}: label {bad} outside "
                f"[0, {num_classes})"
            )
        seg = segmentation_from_frames(labels).validate(num_classes)
        prev = prev_action_from_segmentation(seg, num_classes)
        return cls(
            features=np.ascontiguousarray(feats),
            frame_labels=labels,
            prev_action=prev,
            segmentation=seg,
            seq_id=seq_id,
        )


@dataclass(eq=False)
class Dataset:
    """A bundle of sequences sharing one class inventory and feature
    space, plus per-class frame totals."""

    sequences: list
    num_classes: int
    feature_dim: int
    class_frame_counts: np.ndarray
    class_names: tuple = ()

    @classmethod
    def build(cls, sequences, num_classes, class_names=()):
        if num_classes <= 0:
            raise ConfigError(f"num_classes must be positive, got {num_classes}")
        if class_names and len(class_names) != num_classes:
            raise ConfigError(
                f"{len(class_names)} class names for {num_classes} classes"
            )
        if not class_names:
            width = max(2, len(str(num_classes - 1)))
            class_names = tuple(f"class_{i:0{width}d}" for i in range(num_classes))
        if not sequences:
            raise EmptySequenceError("dataset has no sequences")
        dim = sequences[0].feature_dim
        counts = np.zeros(num_classes, dtype=np.int64)
        for seq in sequences:
            if seq.feature_dim != dim:
                raise ConfigError(
                    f"sequence {seq.seq_id or '<unnamed>'} has feature dim "
                    f"{seq.feature_dim}, expected {dim}"
                )
            if seq.frame_labels.max() >= num_classes:
                raise RangeError(
                    f"sequence {seq.seq_id or '<unnamed>'}: label "
                    f"{int(seq.frame_labels.max())} outside [0, {num_classes})"
                )
            counts += np.bincount(seq.frame_labels, minlength=num_classes)
        return cls(
            sequences=list(sequences),
            num_classes=num_classes,
            feature_dim=dim,
            class_frame_counts=counts,
            class_names=tuple(class_names),
        )

    @property
    def total_frames(self):
        return int(self.class_frame_counts.sum())

    @property
    def missing_classes(self):
        """Class ids that never occur; excluded from per-class averages
        downstream."""
        return tuple(int(i) for i in np.flatnonzero(self.class_frame_counts == 0))


@dataclass(frozen=True, eq=False)
class TransitionStats:
    """Frame counts by (truth class, previous action), kept raw and
    normalized on demand.

    ``counts[i, k]`` is the number of frames with truth i and previous
    action k; column ``num_classes`` is the 'start' state.
    """

    counts: np.ndarray
    total: int

    @property
    def num_classes(self):
        return self.counts.shape[0]

    @property
    def transition(self):
        """T[i, k]: fraction of all frames with truth i, previous action k."""
        return self.counts / float(self.total)

    @property
    def prior(self):
        """Class prior over truth labels; rows of ``transition`` summed."""
        return self.counts.sum(axis=1) / float(self.total)

    @property
    def valid_mask(self):
        """True where the transition was ever observed."""
        return self.counts > 0


def compute_transition_stats(dataset) -> TransitionStats:
    """Count (truth, previous action) pairs over every frame of the
    dataset. The result depends only on the labels, not on any model."""
    if not dataset.sequences:
        raise EmptySequenceError("cannot compute transition stats of an empty dataset")
    L = dataset.num_classes
    counts = np.zeros((L, L + 1), dtype=np.int64)
    for seq in dataset.sequences:
        flat = seq.frame_labels * (L + 1) + seq.prev_action
        counts += np.bincount(flat, minlength=counts.size).reshape(counts.shape)
    return TransitionStats(counts=counts, total=int(counts.sum()))


def head_tail_split(class_frame_counts, threshold):
    """Split class ids into head (frame count >= threshold) and tail."""
    if threshold <= 0:
        raise ConfigError(f"threshold must be positive, got {threshold}")
    counts = np.asarray(class_frame_counts)
    head = {int(i) for i in np.flatnonzero(counts >= threshold)}
    tail = {int(i) for i in range(counts.shape[0])} - head
    return head, tail


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic long-tailed generator.

    Segment labels follow a Zipf-skewed prior chained through a
    predecessor distribution whose rows are concentration-skewed, so both
    the class totals and the incoming transitions are imbalanced.
    Durations are per-class normal, clamped to >= 1 frame. Features are
    per-class Gaussian bumps: class mean plus isotropic noise.
    """

    num_classes: int = 12
    feature_dim: int = 16
    num_sequences: int = 200
    mean_segments: float = 8.0
    class_skew: float = 1.5
    duration_mean: float = 20.0
    duration_spread: float = 0.3
    mean_scale: float = 1.0
    noise_scale: float = 0.5
    class_means: np.ndarray = None
    transition_skew: float = 1.0
    rng_seed: int = 0

    def validate(self):
        if self.num_classes < 2:
            raise ConfigError(
                f"need at least 2 classes to alternate segments, got {self.num_classes}"
            )
        if self.feature_dim <= 0 or self.num_sequences <= 0:
            raise ConfigError(
                f"feature_dim and num_sequences must be positive, got "
                f"{self.feature_dim} and {self.num_sequences}"
            )
        if self.mean_segments < 1:
            raise ConfigError(
                f"mean_segments must be >= 1, got {self.mean_segments}"
            )
        if self.class_skew < 0 or self.transition_skew < 0:
            raise ConfigError("skew parameters must be >= 0")
        if np.min(self.duration_mean) < 1 or self.duration_spread < 0:
            raise ConfigError("segment durations must average >= 1 frame")
        # noise_scale 0 is allowed: noiseless emitters make class means
        # exactly recoverable, which calibration tests rely on.
        if self.noise_scale < 0 or self.mean_scale <= 0:
            raise ConfigError("emitter scales out of range")
        if self.class_means is not None:
            means = np.asarray(self.class_means, dtype=np.float64)
            if means.shape != (self.num_classes, self.feature_dim):
                raise ConfigError(
                    f"class_means shape {means.shape} does not match "
                    f"({self.num_classes}, {self.feature_dim})"
                )
        return self


def _segment_label_chain(rng, cum_rows, num_segments, num_classes):
    # inverse-CDF draws keep the rng stream identical across platforms
    labels = np.empty(num_segments, dtype=np.int64)
    prev = num_classes  # 'start'
    for n in range(num_segments):
        u = rng.random()
        # clamp guards the ~1e-16 case where cum rounds below 1.0
        labels[n] = min(
            int(np.searchsorted(cum_rows[prev], u, side="right")), num_classes - 1
        )
        prev = labels[n]
    return labels


def generate_synthetic(config: SynthConfig) -> Dataset:
    """Draw a synthetic dataset; bit-identical for equal configs."""
    config.validate()
    L, D = config.num_classes, config.feature_dim
    rng = np.random.default_rng(config.rng_seed)

    if config.class_means is None:
        class_means = rng.standard_normal((L, D)) * config.mean_scale
    else:
        class_means = np.asarray(config.class_means, dtype=np.float64)

    base = (np.arange(1, L + 1, dtype=np.float64)) ** (-config.class_skew)
    twist = np.exp(config.transition_skew * rng.standard_normal((L + 1, L)))
    weights = base[None, :] * twist
    np.fill_diagonal(weights[:L], 0.0)  # adjacent segments must differ
    cum_rows = np.cumsum(weights / weights.sum(axis=1, keepdims=True), axis=1)

    dur_mean = np.broadcast_to(
        np.asarray(config.duration_mean, dtype=np.float64), (L,)
    )
    width = max(4, len(str(config.num_sequences - 1)))
    sequences = []
    for s in range(config.num_sequences):
        n_seg = 1 + int(rng.poisson(config.mean_segments - 1.0))
        labels = _segment_label_chain(rng, cum_rows, n_seg, L)
        frame_labels = []
        for c in labels:
            mean_c = dur_mean[c]
            dur = int(np.rint(rng.normal(mean_c, config.duration_spread * mean_c)))
            frame_labels.extend([int(c)] * max(1, dur))
        frame_labels = np.array(frame_labels, dtype=np.int64)
        feats = class_means[frame_labels].T.copy()
        if config.noise_scale > 0:
            feats += config.noise_scale * rng.standard_normal(feats.shape)
        sequences.append(
            LabeledSequence.from_frames(
                feats.astype(np.float32),
                frame_labels,
                num_classes=L,
                seq_id=f"seq_{s:0{width}d}",
            )
        )
    return Dataset.build(sequences, num_classes=L)


# ---------------------------------------------------------------------------
# On-disk format
#
# A dataset directory holds:
#   manifest.json            sequence ids + relative label/feature paths, L, D
#   classes.txt              "id name" per line; 'start' is implicit
#   groundTruth/<id>.txt     one class-name token per line per frame
#   features/<id>.bin|.csv   binary: u64-LE header (D, T) then D*T f32-LE,
#                            frame-major; csv: T rows x D columns
# ---------------------------------------------------------------------------

_FEATURE_HEADER = np.dtype("<u8")


def _write_features_binary(path, features):
    dim, num_frames = features.shape
    with open(path, "wb") as fh:
        np.array([dim, num_frames], dtype=_FEATURE_HEADER).tofile(fh)
        np.ascontiguousarray(features.T, dtype="<f4").tofile(fh)


def _read_features_binary(path):
    with open(path, "rb") as fh:
        header = np.fromfile(fh, dtype=_FEATURE_HEADER, count=2)
        if header.size != 2:
            raise ParseError(f"{path}: truncated header (offset {header.size * 8})")
        dim, num_frames = int(header[0]), int(header[1])
        payload = np.fromfile(fh, dtype="<f4")
    if payload.size != dim * num_frames:
        raise ParseError(
            f"{path}: expected {dim * num_frames} feature values "
            f"({dim} x {num_frames}), found {payload.size}"
        )
    return np.ascontiguousarray(payload.reshape(num_frames, dim).T)


def _write_features_csv(path, features):
    # %.9g round-trips float32 exactly
    np.savetxt(path, features.T.astype(np.float64), fmt="%.9g", delimiter=",")


def _read_features_csv(path):
    try:
        table = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return np.ascontiguousarray(table.astype(np.float32).T)


def save_dataset(dataset, path, feature_format="binary"):
    """Write a dataset directory; see the format note above."""
    if feature_format not in ("binary", "csv"):
        raise ConfigError(f"unknown feature format {feature_format!r}")
    os.makedirs(os.path.join(path, "groundTruth"), exist_ok=True)
    os.makedirs(os.path.join(path, "features"), exist_ok=True)
    names = dataset.class_names
    with open(os.path.join(path, "classes.txt"), "w") as fh:
        for i, name in enumerate(names):
            fh.write(f"{i} {name}\n")
    ext = "bin" if feature_format == "binary" else "csv"
    entries = []
    for idx, seq in enumerate(dataset.sequences):
        seq_id = seq.seq_id or f"seq_{idx:04d}"
        label_rel = os.path.join("groundTruth", f"{seq_id}.txt")
        feat_rel = os.path.join("features", f"{seq_id}.{ext}")
        with open(os.path.join(path, label_rel), "w") as fh:
            for y in seq.frame_labels:
                fh.write(names[y] + "\n")
        if feature_format == "binary":
            _write_features_binary(os.path.join(path, feat_rel), seq.features)
        else:
            _write_features_csv(os.path.join(path, feat_rel), seq.features)
        entries.append({"id": seq_id, "labels": label_rel, "features": feat_rel})
    manifest = {
        "num_classes": dataset.num_classes,
        "feature_dim": dataset.feature_dim,
        "sequences": entries,
    }
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _read_classes(path, num_classes):
    name_of = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            parts = line.split(None, 1)
            if len(parts) != 2 or not parts[0].lstrip("-").isdigit():
                raise ParseError(f"{path}:{lineno}: expected 'id name', got {raw!r}")
            idx = int(parts[0])
            if not 0 <= idx < num_classes:
                raise RangeError(
                    f"{path}:{lineno}: class id {idx} outside [0, {num_classes})"
                )
            if idx in name_of:
                raise ParseError(f"{path}:{lineno}: duplicate class id {idx}")
            if parts[1] == START:
                raise ParseError(
                    f"{path}:{lineno}: '{START}' is implicit and may not be listed"
                )
            name_of[idx] = parts[1]
    if len(name_of) != num_classes:
        raise ParseError(
            f"{path}: lists {len(name_of)} classes, manifest says {num_classes}"
        )
    return tuple(name_of[i] for i in range(num_classes))


def _read_labels(path, id_of):
    ids = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            token = raw.strip()
            if not token:
                continue
            if token not in id_of:
                raise ParseError(f"{path}:{lineno}: unknown class name {token!r}")
            ids.append(id_of[token])
    if not ids:
        raise ParseError(f"{path}: no frames")
    return np.array(ids, dtype=np.int64)


def load_dataset(path) -> Dataset:
    """Read a dataset directory (or its manifest.json) back into memory."""
    manifest_path = path
    if os.path.isdir(path):
        manifest_path = os.path.join(path, "manifest.json")
    root = os.path.dirname(manifest_path)
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{manifest_path}:{exc.lineno}: {exc.msg}") from exc
    try:
        num_classes = int(manifest["num_classes"])
        feature_dim = int(manifest["feature_dim"])
        entries = manifest["sequences"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{manifest_path}: missing field {exc}") from exc
    if num_classes <= 0 or feature_dim <= 0:
        raise RangeError(
            f"{manifest_path}: non-positive dimensions "
            f"L={num_classes}, D={feature_dim}"
        )
    names = _read_classes(os.path.join(root, "classes.txt"), num_classes)
    id_of = {name: i for i, name in enumerate(names)}
    sequences = []
    for entry in entries:
        label_path = os.path.join(root, entry["labels"])
        feat_path = os.path.join(root, entry["features"])
        labels = _read_labels(label_path, id_of)
        if feat_path.endswith(".csv"):
            feats = _read_features_csv(feat_path)
        else:
            feats = _read_features_binary(feat_path)
        if feats.shape[1] != labels.size:
            raise ParseError(
                f"{feat_path}: {feats.shape[1]} feature frames but "
                f"{label_path} has {labels.size} label lines"
            )
        if feats.shape[0] != feature_dim:
            raise ParseError(
                f"{feat_path}: feature dim {feats.shape[0]}, manifest says "
                f"{feature_dim}"
            )
        sequences.append(
            LabeledSequence.from_frames(
                feats, labels, num_classes=num_classes, seq_id=str(entry["id"])
            )
        )
    return Dataset.build(sequences, num_classes=num_classes, class_names=names)
