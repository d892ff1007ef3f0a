"""Inference-time decoders: argmax, frame NCM, and segment NCM.

Frame-wise nearest-class-mean assigns each frame to the closest class
prototype in representation space. The segment variant keeps the
classifier's segment boundaries but replaces every segment's content
with the mode of the NCM votes inside it, trading frame-level jitter for
segment-level stability.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, EmptySequenceError

DECODE_MODES = ("argmax", "ncm", "sncm")


@dataclass(frozen=True, eq=False)
class ClassMeans:
    """Per-class mean representations with their supporting frame counts.

    Rows with zero support are unusable: they never appear as NCM
    answers and are skipped in distance computations.
    """

    means: np.ndarray
    support: np.ndarray

    @property
    def num_classes(self):
        return self.means.shape[0]

    @property
    def usable(self):
        return self.support > 0


def windowed_extractor(context_radius):
    """Representation used by the linear backbone: the stacked feature
    window itself."""

    def extract(sequence):
        return _kernels.window_stack(sequence.features, context_radius)

    return extract


def compute_class_means(dataset, extractor) -> ClassMeans:
    """Average the representation of every training frame per class.

    Training split only; evaluation data must never flow in here.
    """
    if not dataset.sequences:
        raise EmptySequenceError("cannot compute class means of an empty dataset")
    L = dataset.num_classes
    sums = None
    support = np.zeros(L, dtype=np.int64)
    for seq in dataset.sequences:
        reps = np.asarray(extractor(seq), dtype=np.float64)
        if sums is None:
            sums = np.zeros((L, reps.shape[1]))
        np.add.at(sums, seq.frame_labels, reps)
        support += np.bincount(seq.frame_labels, minlength=L)
    means = np.zeros_like(sums)
    np.divide(sums, support[:, None], out=means, where=support[:, None] > 0)
    return ClassMeans(means=means, support=support)


def ncm_predict(means: ClassMeans, representations):
    """Closest usable class mean per frame, squared Euclidean distance,
    ties to the smallest class id."""
    usable = means.usable
    if not usable.any():
        raise ConfigError("no class has any supporting frames")
    reps = np.asarray(representations, dtype=np.float64)
    dist = np.full((reps.shape[0], means.num_classes), np.inf)
    for i in np.flatnonzero(usable):
        # direct differences keep exact ties exact (no a^2-2ab+b^2 rounding)
        delta = reps - means.means[i]
        dist[:, i] = np.einsum("tr,tr->t", delta, delta)
    return np.argmin(dist, axis=1).astype(np.int64)


def segment_boundaries(predictions):
    """Indices t where the label changes between frames t and t+1."""
    pred = np.asarray(predictions)
    if pred.size == 0:
        raise EmptySequenceError("no predictions to find boundaries in")
    return np.flatnonzero(pred[1:] != pred[:-1]).astype(np.int64)


def sncm_decode(classifier_predictions, ncm_predictions):
    """Per classifier-delimited segment, output the mode of the NCM votes.

    Mode ties break toward the smallest class id. The output has at most
    as many runs as the classifier predictions.
    """
    y_hat = np.asarray(classifier_predictions, dtype=np.int64)
    v_hat = np.asarray(ncm_predictions, dtype=np.int64)
    if y_hat.shape != v_hat.shape:
        raise ConfigError(
            f"classifier gave {y_hat.shape[0]} frames, NCM {v_hat.shape[0]}"
        )
    if y_hat.size == 0:
        raise EmptySequenceError("empty prediction vectors")
    out = np.empty_like(v_hat)
    bounds = segment_boundaries(y_hat)
    starts = np.concatenate(([0], bounds + 1))
    ends = np.concatenate((bounds, [y_hat.size - 1]))
    for s, e in zip(starts, ends):
        votes = np.bincount(v_hat[s : e + 1])
        out[s : e + 1] = np.argmax(votes)  # first max = smallest id
    return out


def decode_sequence(params, sequence, mode, means=None):
    """Run one decoder on one sequence.

    ``argmax`` uses the classifier alone; ``ncm`` ignores the classifier
    scores and votes by distance; ``sncm`` combines both.
    """
    if mode not in DECODE_MODES:
        raise ConfigError(f"decode mode {mode!r} not one of {DECODE_MODES}")
    if mode == "argmax":
        return params.predict_sequence(sequence)
    if means is None:
        raise ConfigError(f"decode mode {mode!r} needs class means")
    reps = windowed_extractor(params.context_radius)(sequence)
    ncm = ncm_predict(means, reps)
    if mode == "ncm":
        return ncm
    return sncm_decode(params.predict_sequence(sequence), ncm)


def write_predictions(path, frame_labels, class_names):
    """One label token per line, mirroring the ground-truth format."""
    with open(path, "w") as fh:
        for y in frame_labels:
            fh.write(class_names[y] + "\n")
