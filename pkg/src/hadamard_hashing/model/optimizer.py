"""SGD with momentum and L2 weight decay, updating parameter arrays in place."""
import numpy as np

from ..exceptions import ValidationError


def zero_velocity(params: list) -> list:
    return [np.zeros_like(p) for p in params]


def sgd_step(params: list, grads: list, velocity: list, lr: float, momentum: float = 0.9,
             weight_decay: float = 5e-4, decay_mask: list = None) -> list:
    """
    One momentum step: v <- momentum * v + grad + weight_decay * param, param <- param - lr * v.

    Parameters:
    - params, grads, velocity (list[np.ndarray]): Congruent arrays; params and velocity are updated in place.
    - lr (float): Learning rate.
    - momentum (float): Momentum coefficient.
    - weight_decay (float): L2 coefficient, applied where ``decay_mask`` is true (weights, not biases).
    - decay_mask (list[bool]): Defaults to decaying every array.

    Returns:
    - list[np.ndarray]: The updated params.
    """
    if decay_mask is None:
        decay_mask = [True] * len(params)
    if not len(params) == len(grads) == len(velocity) == len(decay_mask):
        raise ValidationError("Parameters, gradients and velocities must pair up.")
    for param, grad, vel, decay in zip(params, grads, velocity, decay_mask):
        if param.shape != grad.shape or param.shape != vel.shape:
            raise ValidationError(f"Shape mismatch in SGD step: {param.shape}, {grad.shape}, {vel.shape}.")
        step = grad + weight_decay * param if decay else grad
        vel *= momentum
        vel += step
        param -= lr * vel
    return params
