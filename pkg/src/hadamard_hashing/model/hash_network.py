"""
Feed-forward hash network: dense feature layers ending in a tanh hash
layer of width K, followed by a linear classifier K -> C that reads the
tanh outputs. Forward and backward passes are written out by hand in
float64.
"""
import logging
import struct
from dataclasses import dataclass, field

import numpy as np

from ..binary_io import BinaryReader, header, le_bytes
from ..exceptions import FileFormatError, ValidationError
from ..random_state import STREAM_INIT, make_rng
from .losses import LossBreakdown, bce_loss, cross_entropy_loss, hadamard_loss

logger = logging.getLogger(__name__)

MODEL_MAGIC = b'HCMD'
ACTIVATION_TAGS = {'identity': 0, 'relu': 1, 'tanh': 2}
LOSS_MODES = ('ce', 'bce')


def activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == 'tanh':
        return np.tanh(z)
    if activation == 'relu':
        return np.maximum(z, 0.0)
    return z


def activation_slope(z: np.ndarray, a: np.ndarray, activation: str) -> np.ndarray:
    if activation == 'tanh':
        return 1.0 - a * a
    if activation == 'relu':
        return (z > 0).astype(z.dtype)
    return np.ones_like(z)


@dataclass
class DenseLayer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = 'identity'

    def __post_init__(self):
        if self.activation not in ACTIVATION_TAGS:
            raise ValidationError(f"Unknown activation '{self.activation}'.")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValidationError(f"Layer weight {self.weight.shape} and bias {self.bias.shape} do not match.")

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


@dataclass(frozen=True)
class NetworkSpec:
    """
    Architecture of the feature path below the hash layer.

    Parameters:
    - hidden_dims (tuple): Widths of the hidden dense layers, default one layer of 256.
    - hidden_activation (str): 'relu', 'tanh' or 'identity'.
    """
    hidden_dims: tuple = (256,)
    hidden_activation: str = 'relu'


@dataclass
class GradientSet:
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def arrays(self) -> list:
        return [g for pair in zip(self.weights, self.biases) for g in pair]


class HashNetwork:
    def __init__(self, layers: list, classifier: DenseLayer):
        """
        Parameters:
        - layers (list[DenseLayer]): Feature path, the last one being the tanh hash layer.
        - classifier (DenseLayer): Identity-activated layer from K to C.
        """
        if not layers:
            raise ValidationError("A hash network needs at least the hash layer.")
        for lower, upper in zip(layers, layers[1:] + [classifier]):
            if lower.out_dim != upper.in_dim:
                raise ValidationError(f"Layer widths do not chain: {lower.out_dim} -> {upper.in_dim}.")
        if layers[-1].activation != 'tanh':
            raise ValidationError("The hash layer must use tanh.")
        if classifier.activation != 'identity':
            raise ValidationError("The classifier must be linear.")
        self.layers = layers
        self.classifier = classifier

    @classmethod
    def initialize(cls, spec: NetworkSpec, input_dim: int, code_length: int, num_classes: int, seed):
        """Glorot-uniform weights drawn from the seeded init stream, zero biases."""
        rng = make_rng(seed, STREAM_INIT)
        widths = [int(input_dim), *[int(w) for w in spec.hidden_dims], int(code_length)]
        activations = [spec.hidden_activation] * len(spec.hidden_dims) + ['tanh']

        def dense(fan_in, fan_out, activation):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            return DenseLayer(rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out), activation)

        layers = [dense(i, o, a) for i, o, a in zip(widths[:-1], widths[1:], activations)]
        return cls(layers, dense(int(code_length), int(num_classes), 'identity'))

    @property
    def all_layers(self) -> list:
        return self.layers + [self.classifier]

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def code_length(self) -> int:
        return self.layers[-1].out_dim

    @property
    def num_classes(self) -> int:
        return self.classifier.out_dim

    def parameters(self) -> list:
        """Parameter arrays in declaration order: W, b of each layer, classifier last."""
        return [p for layer in self.all_layers for p in (layer.weight, layer.bias)]

    def decay_mask(self) -> list:
        return [is_weight for _ in self.all_layers for is_weight in (True, False)]

    def copy(self) -> 'HashNetwork':
        clone = lambda l: DenseLayer(l.weight.copy(), l.bias.copy(), l.activation)
        return HashNetwork([clone(l) for l in self.layers], clone(self.classifier))

    def same_architecture(self, other: 'HashNetwork') -> bool:
        ours = [(l.in_dim, l.out_dim, l.activation) for l in self.all_layers]
        theirs = [(l.in_dim, l.out_dim, l.activation) for l in other.all_layers]
        return ours == theirs

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0 or x.shape[1] != self.input_dim:
            raise ValidationError(f"Expected a non-empty batch of width {self.input_dim}, got shape {x.shape}.")
        return x

    def _forward_trace(self, x):
        activations, preactivations = [x], []
        for layer in self.layers:
            z = activations[-1] @ layer.weight + layer.bias
            preactivations.append(z)
            activations.append(activate(z, layer.activation))
        logits = activations[-1] @ self.classifier.weight + self.classifier.bias
        return activations, preactivations, logits

    def forward(self, x: np.ndarray):
        """
        Returns:
        - (np.ndarray, np.ndarray): tanh hash outputs u (B x K) and logits (B x C).
        """
        activations, _, logits = self._forward_trace(self._check_input(x))
        return activations[-1], logits

    def hash_outputs(self, x: np.ndarray, batch_size: int = 4096) -> np.ndarray:
        x = self._check_input(x)
        return np.concatenate([self.forward(x[i:i + batch_size])[0] for i in range(0, x.shape[0], batch_size)])

    def backward(self, x, target_values, target_mask, labels, lambda_: float, mode: str = 'ce',
                 use_hadamard: bool = True, use_classification: bool = True):
        """
        Loss and exact gradients of L_H + lambda * L_cls.

        The classification gradient flows through the classifier into the
        hash outputs, where the hadamard gradient is added.

        Parameters:
        - x (np.ndarray): B x D input batch.
        - target_values, target_mask (np.ndarray): B x K target codes and mask.
        - labels (np.ndarray): B x C binary label rows.
        - lambda_ (float): Weight of the classification term.
        - mode (str): 'ce' for single-label softmax, 'bce' for multi-label sigmoid.
        - use_hadamard, use_classification (bool): Switch off a term entirely.

        Returns:
        - (LossBreakdown, GradientSet)
        """
        if mode not in LOSS_MODES:
            raise ValidationError(f"Loss mode must be one of {LOSS_MODES}, got '{mode}'.")
        x = self._check_input(x)
        labels = np.asarray(labels)
        if labels.shape != (x.shape[0], self.num_classes):
            raise ValidationError(f"Labels must be {x.shape[0]} x {self.num_classes}, got {labels.shape}.")
        activations, preactivations, logits = self._forward_trace(x)
        u = activations[-1]

        if mode == 'ce':
            if not (labels.sum(axis=1) == 1).all():
                raise ValidationError("Cross entropy needs exactly one positive label per row; use 'bce'.")
            cls_value, grad_logits = cross_entropy_loss(logits, labels.argmax(axis=1))
        else:
            cls_value, grad_logits = bce_loss(logits, labels)

        if use_hadamard:
            h_value, grad_u = hadamard_loss(u, target_values, target_mask)
        else:
            h_value, grad_u = 0.0, np.zeros_like(u)
        if not use_classification:
            lambda_ = 0.0
        breakdown = LossBreakdown.compose(h_value, cls_value, lambda_)

        grad_logits = lambda_ * grad_logits
        grads = GradientSet()
        grads.weights.append(u.T @ grad_logits)
        grads.biases.append(grad_logits.sum(axis=0))
        grad_a = grad_u + grad_logits @ self.classifier.weight.T

        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            grad_z = grad_a * activation_slope(preactivations[idx], activations[idx + 1], layer.activation)
            grads.weights.append(activations[idx].T @ grad_z)
            grads.biases.append(grad_z.sum(axis=0))
            if idx:
                grad_a = grad_z @ layer.weight.T

        grads.weights.reverse()
        grads.biases.reverse()
        return breakdown, grads


def network_to_bytes(net: HashNetwork) -> list:
    chunks = [header(MODEL_MAGIC, 'I', len(net.all_layers))]
    for layer in net.all_layers:
        chunks.append(struct.pack('<IIB', layer.in_dim, layer.out_dim, ACTIVATION_TAGS[layer.activation]))
    chunks.extend(le_bytes(p, np.float64) for p in net.parameters())
    return chunks


def network_from_reader(reader: BinaryReader) -> HashNetwork:
    reader.expect_header(MODEL_MAGIC)
    (count,) = reader.unpack('I', 'layer count')
    if count < 2:
        raise FileFormatError(f"a hash network has at least 2 layers, header says {count}.", reader.path)
    tags = {v: name for name, v in ACTIVATION_TAGS.items()}
    shapes = []
    for i in range(count):
        in_dim, out_dim, tag = reader.unpack('IIB', f'layer {i} header')
        if tag not in tags:
            raise FileFormatError(f"unknown activation tag {tag} in layer {i}.", reader.path)
        shapes.append((in_dim, out_dim, tags[tag]))
    layers = []
    for i, (in_dim, out_dim, activation) in enumerate(shapes):
        weight = reader.array(np.float64, in_dim * out_dim, f'layer {i} weight').reshape(in_dim, out_dim)
        bias = reader.array(np.float64, out_dim, f'layer {i} bias')
        layers.append(DenseLayer(weight, bias, activation))
    return HashNetwork(layers[:-1], layers[-1])


def load_network(path) -> HashNetwork:
    """Read the model block of a checkpoint; a trainer-state trailer, if any, is left unread."""
    return network_from_reader(BinaryReader.from_path(path))
