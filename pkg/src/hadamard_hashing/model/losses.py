"""
Losses of the joint objective, each returning (value, gradient w.r.t. its input).

All values are batch means, so the weight lambda between the hadamard
term and the classification term does not depend on the batch size.
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit, log_softmax

from ..exceptions import ValidationError


@dataclass(frozen=True)
class LossBreakdown:
    hadamard: float
    classification: float
    lambda_: float
    total: float

    @classmethod
    def compose(cls, hadamard: float, classification: float, lambda_: float) -> 'LossBreakdown':
        hadamard, classification, lambda_ = float(hadamard), float(classification), float(lambda_)
        return cls(hadamard, classification, lambda_, hadamard + lambda_ * classification)


def hadamard_loss(u: np.ndarray, target_values: np.ndarray, target_mask: np.ndarray = None):
    """
    Masked squared distance between the tanh outputs and their target codes.

    value = 1/(2B) * sum(mask * (u - t)^2), gradient = mask * (u - t) / B.
    """
    if u.shape != target_values.shape:
        raise ValidationError(f"Hash outputs {u.shape} and targets {target_values.shape} differ in shape.")
    diff = u - target_values
    if target_mask is not None:
        diff = np.where(target_mask, diff, 0.0)
    batch = u.shape[0]
    value = 0.5 * np.sum(diff * diff) / batch
    return float(value), diff / batch


def cross_entropy_loss(logits: np.ndarray, class_index: np.ndarray):
    """Mean softmax cross entropy; gradient is (softmax - onehot) / B."""
    batch, num_classes = logits.shape
    class_index = np.asarray(class_index, dtype=np.int64)
    if class_index.shape != (batch,):
        raise ValidationError(f"Expected {batch} class indices, got shape {class_index.shape}.")
    if class_index.size and (class_index.min() < 0 or class_index.max() >= num_classes):
        raise ValidationError(f"Class index out of range [0, {num_classes}).")
    log_probs = log_softmax(logits, axis=1)
    rows = np.arange(batch)
    value = -np.mean(log_probs[rows, class_index])
    grad = np.exp(log_probs)
    grad[rows, class_index] -= 1.0
    return float(value), grad / batch


def bce_loss(logits: np.ndarray, targets: np.ndarray):
    """Mean per-class sigmoid binary cross entropy over batch and classes."""
    if logits.shape != targets.shape:
        raise ValidationError(f"Logits {logits.shape} and targets {targets.shape} differ in shape.")
    y = targets.astype(np.float64)
    per_entry = -(y * log_expit(logits) + (1.0 - y) * log_expit(-logits))
    grad = (expit(logits) - y) / logits.size
    return float(per_entry.mean()), grad
