"""Constraint multipliers and the re-weighted cross-entropy they induce.

Training maximizes the sum of per-class accuracies subject to every
observed transition staying within a tolerance of the mean transition
accuracy. The saddle-point form of that problem turns into a per-frame
gain: each (true class, previous action) pair gets the weight
(1 + lambda) / prior, tempered by an exponent tau, and the classifier
minimizes gain-weighted cross-entropy while the multipliers run
projected gradient descent.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .confusion import learning_state
from .errors import ConfigError, RangeError

PROB_FLOOR = 1e-12

DEFAULT_EPSILON = 0.9
DEFAULT_STEP_SIZE = 0.01
DEFAULT_TAU = 0.3
TAU_GRID = (0.1, 0.3, 0.5, 0.7)


@dataclass(frozen=True, eq=False)
class MultiplierState:
    """One multiplier per (class, previous action), kept non-negative and
    supported only on transitions the dataset contains.

    ``detached_mean_trans_acc`` is the constraint reference point: a
    snapshot of the mean transition accuracy, refreshed once per epoch
    and never differentiated through.
    """

    lam: np.ndarray
    step_size: float
    epsilon: float
    detached_mean_trans_acc: float = 0.0

    @classmethod
    def zeros(cls, stats, step_size=DEFAULT_STEP_SIZE, epsilon=DEFAULT_EPSILON):
        """All-zero multipliers: the first epoch trains with pure
        inverse-prior weighting until violations are measured."""
        if step_size <= 0:
            raise ConfigError(f"multiplier step size must be > 0, got {step_size}")
        if not 0 < epsilon <= 1:
            raise ConfigError(f"tolerance must be in (0, 1], got {epsilon}")
        L = stats.num_classes
        return cls(
            lam=np.zeros((L, L + 1)), step_size=float(step_size),
            epsilon=float(epsilon),
        )

    def validate(self, valid_mask):
        if (self.lam < 0).any():
            raise ConfigError("negative multiplier")
        if self.lam[~valid_mask].any():
            raise ConfigError("multiplier on an unobserved transition")
        return self


@dataclass(frozen=True, eq=False)
class GainWeights:
    """Per-(class, previous action) loss weights.

    ``gain`` is (1 + lambda) / prior on observed transitions of active
    classes; ``tempered`` is gain ** tau, the factor actually multiplied
    into the loss. Rows of inactive (zero-prior) classes are zero in
    ``gain`` and flagged in ``active``; no training frame can index them.
    """

    gain: np.ndarray
    tempered: np.ndarray
    tau: float
    active: np.ndarray


def compute_gain(stats, mult: MultiplierState, tau, active=None) -> GainWeights:
    """Build loss weights from transition statistics and multipliers."""
    if tau < 0:
        raise ConfigError(f"temper exponent must be >= 0, got {tau}")
    prior = stats.prior
    if active is None:
        active = prior > 0
    else:
        active = np.asarray(active, dtype=bool)
        if (prior[active] == 0).any():
            bad = int(np.flatnonzero(active & (prior == 0))[0])
            raise ConfigError(f"class {bad} marked active but has zero prior")
    mult.validate(stats.valid_mask)
    gain = np.zeros_like(mult.lam)
    numer = 1.0 + stats.valid_mask * mult.lam
    np.divide(numer, prior[:, None], out=gain, where=active[:, None])
    # 0**0 == 1, so tau=0 yields exactly 1 everywhere, inactive rows included
    tempered = gain ** float(tau)
    return GainWeights(gain=gain, tempered=tempered, tau=float(tau), active=active)


def _check_frame(num_classes, y, u):
    if not 0 <= y < num_classes:
        raise RangeError(f"class id {y} outside [0, {num_classes})")
    if not 0 <= u <= num_classes:
        raise RangeError(f"previous action {u} outside [0, {num_classes}]")


def weighted_ce_loss(probs, y, u, weights: GainWeights):
    """Tempered-gain cross-entropy of one frame: -w * log p_y."""
    probs = np.asarray(probs, dtype=np.float64)
    _check_frame(probs.shape[0], y, u)
    if abs(probs.sum() - 1.0) > 1e-6:
        raise RangeError(f"probabilities sum to {probs.sum()!r}, not 1")
    return weights.tempered[y, u] * -math.log(max(probs[y], PROB_FLOOR))


def weighted_ce_grad_logits(logits, y, u, weights: GainWeights):
    """Gradient of the frame loss through a softmax: w * (p - onehot)."""
    logits = np.asarray(logits, dtype=np.float64)
    _check_frame(logits.shape[0], y, u)
    if not np.isfinite(logits).all():
        raise RangeError("non-finite logits")
    p = np.exp(logits - logits.max())
    p /= p.sum()
    p *= weights.tempered[y, u]
    p[y] -= weights.tempered[y, u]
    return p


def frame_weights(weights: GainWeights, frame_labels, prev_action):
    """Per-frame tempered weights for a whole sequence at once."""
    return weights.tempered[frame_labels, prev_action]


def lagrangian_value(confusion, stats, mult: MultiplierState):
    """Saddle-point objective at the current classifier and multipliers.

    Relative accuracy terms use the frozen mean snapshot carried by
    ``mult``; the per-constraint factor T/prior balances the constraint
    magnitudes against the accuracy objective.
    """
    L = confusion.num_classes
    diag = confusion.counts[np.arange(L), np.arange(L), :] / confusion.total_frames
    prior = stats.prior
    trans = stats.transition
    active = prior > 0
    acc_sum = float((diag.sum(axis=1)[active] / prior[active]).sum())
    valid = stats.valid_mask
    tacc = np.zeros_like(diag)
    np.divide(diag, trans, out=tacc, where=valid)
    slack = tacc - mult.epsilon * mult.detached_mean_trans_acc
    scale = np.zeros_like(diag)
    np.divide(trans, prior[:, None], out=scale, where=active[:, None])
    return acc_sum + float((mult.lam * slack * scale)[valid].sum())


def update_multipliers(mult: MultiplierState, confusion, stats) -> MultiplierState:
    """One projected gradient step on the multipliers.

    Refreshes the detached mean first, then for every observed transition
    moves lambda against the constraint slack and clamps at zero.
    Transitions the confusion pass never saw keep their multiplier.
    """
    state = learning_state(confusion, stats)
    mean = state.mean_trans_acc
    prior = stats.prior
    active = prior > 0
    scale = np.zeros_like(mult.lam)
    np.divide(stats.transition, prior[:, None], out=scale, where=active[:, None])
    grad = (state.trans_acc - mult.epsilon * mean) * scale
    step = np.where(state.trans_acc_defined, mult.step_size * grad, 0.0)
    lam = np.maximum(0.0, mult.lam - step)
    lam[~stats.valid_mask] = 0.0
    return replace(mult, lam=lam, detached_mean_trans_acc=mean)


def count_violations(confusion, stats, mult: MultiplierState):
    """Observed transitions currently below the tolerance line."""
    state = learning_state(confusion, stats)
    below = state.trans_acc < mult.epsilon * mult.detached_mean_trans_acc
    return int((below & state.trans_acc_defined).sum())


def telemetry_record(epoch, confusion, stats, before, after):
    """Per-epoch telemetry: the objective the multiplier step descended
    (pre-update multipliers, refreshed mean) plus post-update summaries."""
    probe = replace(
        before, detached_mean_trans_acc=after.detached_mean_trans_acc
    )
    valid = stats.valid_mask
    lam = after.lam[valid]
    return {
        "epoch": int(epoch),
        "lagrangian": lagrangian_value(confusion, stats, probe),
        "mean_trans_acc": after.detached_mean_trans_acc,
        "lambda_min": float(lam.min()) if lam.size else 0.0,
        "lambda_mean": float(lam.mean()) if lam.size else 0.0,
        "lambda_max": float(lam.max()) if lam.size else 0.0,
        "violations": count_violations(confusion, stats, after),
    }
