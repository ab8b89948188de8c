"""
Mini-batch training of the hash network against a Hadamard codebook.

SGD with momentum and weight decay, learning rate halved every
``lr_halving_period_epochs`` epochs, one seeded shuffle per epoch, the last
partial batch kept. Checkpoints hold the model block (HCMD) followed by a
trainer-state trailer (HCTS) with the completed epoch count, the momentum
velocities and the loss history, so that resuming reproduces an
uninterrupted run bit for bit.
"""
import logging
import struct
import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ..binary_io import BinaryReader, header, le_bytes, write_atomic
from ..codebook import Codebook, make_targets
from ..exceptions import NumericError, ValidationError
from ..model import HashNetwork, LossBreakdown, NetworkSpec, sgd_step, zero_velocity
from ..model.hash_network import LOSS_MODES, network_from_reader, network_to_bytes
from ..preprocessing import FeatureSet, LabelSet, Split, check_pairing
from ..random_state import STREAM_SHUFFLE, check_seed, make_rng

logger = logging.getLogger(__name__)

STATE_MAGIC = b'HCTS'
VARIANTS = ('full', 'hadamard_only', 'classifier_only')
HISTORY_COLUMNS = ['epoch', 'lr', 'hadamard_loss', 'classification_loss', 'total_loss', 'seconds']


@dataclass
class TrainConfig:
    """
    Optimization protocol.

    Parameters:
    - epochs (int): Total epochs to reach (a resumed run continues up to this count).
    - batch_size (int): Mini-batch size.
    - base_lr (float): Initial learning rate.
    - lr_halving_period_epochs (int): The rate halves every this many epochs.
    - momentum (float): SGD momentum.
    - weight_decay (float): L2 coefficient on weights (biases exempt).
    - lambda_ (float): Weight of the classification loss.
    - loss_mode (str): 'ce' (single-label) or 'bce' (multi-label).
    - variant (str): 'full', 'hadamard_only' or 'classifier_only'.
    - seed (int): Drives initialization and shuffling.
    - checkpoint_every (int): Write ``checkpoint_path`` every this many epochs, 0 to disable.
    - checkpoint_path (str): Where periodic checkpoints go.
    """
    epochs: int = 150
    batch_size: int = 128
    base_lr: float = 1e-4
    lr_halving_period_epochs: int = 50
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lambda_: float = 1.0
    loss_mode: str = 'ce'
    variant: str = 'full'
    seed: int = 0
    checkpoint_every: int = 0
    checkpoint_path: str = None

    def validate(self):
        if self.epochs < 0:
            raise ValidationError("epochs must be non-negative.")
        if self.batch_size < 1 or self.lr_halving_period_epochs < 1:
            raise ValidationError("batch_size and lr_halving_period_epochs must be positive.")
        if self.base_lr <= 0:
            raise ValidationError("base_lr must be positive.")
        if not 0 <= self.momentum < 1 or self.weight_decay < 0:
            raise ValidationError("momentum must be in [0, 1) and weight_decay non-negative.")
        if self.lambda_ < 0:
            raise ValidationError("lambda must be non-negative.")
        if self.loss_mode not in LOSS_MODES:
            raise ValidationError(f"loss_mode must be one of {LOSS_MODES}.")
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}.")
        if self.checkpoint_every < 0 or (self.checkpoint_every and not self.checkpoint_path):
            raise ValidationError("checkpoint_every needs a checkpoint_path.")
        check_seed(self.seed)
        return self

    def lr_at(self, epoch: int) -> float:
        return self.base_lr * 0.5 ** (epoch // self.lr_halving_period_epochs)

    @property
    def effective_lambda(self) -> float:
        if self.variant == 'hadamard_only':
            return 0.0
        if self.variant == 'classifier_only':
            return 1.0
        return self.lambda_


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    losses: LossBreakdown
    seconds: float = field(default=float('nan'), compare=False)


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        rows = [
            (r.epoch, r.lr, r.losses.hadamard, r.losses.classification, r.losses.total, r.seconds)
            for r in self.records
        ]
        return pd.DataFrame(rows, columns=HISTORY_COLUMNS)

    def save_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format='%.17g')
        logger.info("Saved training history (%d epochs) to %s", len(self.records), path)


@dataclass
class TrainerState:
    net: HashNetwork
    velocity: list
    epochs_completed: int
    history: TrainHistory


class HashTrainer:
    def __init__(self, config: TrainConfig, features: FeatureSet, labels: LabelSet, split: Split,
                 codebook: Codebook, net_spec: NetworkSpec = NetworkSpec(), state: TrainerState = None):
        """
        Validate every dimension before any step is taken.

        Parameters:
        - config (TrainConfig): Optimization protocol.
        - features, labels (FeatureSet, LabelSet): The full dataset.
        - split (Split): Training rows are ``split.train``.
        - codebook (Codebook): Class codewords; its K sets the hash width.
        - net_spec (NetworkSpec): Hidden layers of the feature path.
        - state (TrainerState): Restored state when resuming, else a fresh network is initialized.
        """
        self.config = config.validate()
        check_pairing(features, labels)
        split.validate(features.num_items)
        if codebook.num_classes != labels.num_classes:
            raise ValidationError(
                f"Codebook has {codebook.num_classes} classes, labels have {labels.num_classes}."
            )
        if split.train.size == 0:
            raise ValidationError("The training split is empty.")
        train_labels = labels.values[split.train]
        if config.loss_mode == 'ce' and not (train_labels.sum(axis=1) == 1).all():
            raise ValidationError("Cross entropy needs single-label training data; use loss_mode 'bce'.")

        expected = HashNetwork.initialize(net_spec, features.dim, codebook.code_length, codebook.num_classes,
                                          config.seed)
        if state is None:
            state = TrainerState(expected, zero_velocity(expected.parameters()), 0, TrainHistory())
        elif not state.net.same_architecture(expected):
            raise ValidationError(
                "Checkpoint architecture "
                f"{[(l.in_dim, l.out_dim, l.activation) for l in state.net.all_layers]} does not match "
                f"{[(l.in_dim, l.out_dim, l.activation) for l in expected.all_layers]}."
            )
        self.state = state
        self.inputs = features.values[split.train].astype(np.float64)
        self.labels = train_labels
        self.target_values, self.target_mask = make_targets(codebook, train_labels)

    @property
    def net(self) -> HashNetwork:
        return self.state.net

    def run(self):
        """Train up to ``config.epochs`` epochs and return (network, history)."""
        config = self.config
        # A resumed run may already have reached the epoch budget
        if self.state.epochs_completed < config.epochs:
            logger.info("Training epochs %d..%d on %d items (variant=%s, lambda=%g, mode=%s)",
                        self.state.epochs_completed + 1, config.epochs, len(self.inputs),
                        config.variant, config.effective_lambda, config.loss_mode)
        while self.state.epochs_completed < config.epochs:
            self._run_epoch(self.state.epochs_completed)
            self.state.epochs_completed += 1
            if config.checkpoint_every and self.state.epochs_completed % config.checkpoint_every == 0:
                self.save_checkpoint(config.checkpoint_path)
        return self.state.net, self.state.history

    def _run_epoch(self, epoch: int):
        config = self.config
        started = time.perf_counter()
        lr = config.lr_at(epoch)
        lambda_ = config.effective_lambda
        use_hadamard = config.variant != 'classifier_only'
        use_classification = config.variant != 'hadamard_only'
        params = self.net.parameters()
        decay_mask = self.net.decay_mask()

        # Shuffle keyed by (seed, epoch): a resumed run replays the same batches
        order = make_rng(config.seed, STREAM_SHUFFLE, epoch).permutation(len(self.inputs))
        hadamard_sum = classification_sum = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            losses, grads = self.net.backward(
                self.inputs[idx], self.target_values[idx], self.target_mask[idx], self.labels[idx],
                lambda_, config.loss_mode, use_hadamard=use_hadamard, use_classification=use_classification,
            )
            # Stop before a non-finite loss reaches the parameters
            if not np.isfinite(losses.total):
                raise NumericError(f"Loss became {losses.total} at epoch {epoch + 1}, batch starting {start}.")
            grad_arrays = grads.arrays()
            sgd_step(params, grad_arrays, self.state.velocity, lr, config.momentum, config.weight_decay, decay_mask)
            # Accumulate item-weighted losses for the epoch means
            hadamard_sum += losses.hadamard * len(idx)
            classification_sum += losses.classification * len(idx)
            logger.debug("epoch %d batch %d: total %.6f", epoch + 1, start // config.batch_size, losses.total)

        if not all(np.isfinite(p).all() for p in params):
            raise NumericError(f"Parameters became non-finite at epoch {epoch + 1}.")
        mean = LossBreakdown.compose(hadamard_sum / len(order), classification_sum / len(order), lambda_)
        seconds = time.perf_counter() - started
        self.state.history.records.append(EpochRecord(epoch, lr, mean, seconds))
        logger.info("[Epoch: %3d/%3d][lr: %.3g][Hadamard: %.4f, Classification: %.4f, Total: %.4f]",
                    epoch + 1, config.epochs, lr, mean.hadamard, mean.classification, mean.total)

    def save_checkpoint(self, path):
        save_checkpoint(path, self.state)


def save_checkpoint(path, state: TrainerState):
    chunks = network_to_bytes(state.net)
    # Trainer trailer: completed epochs, momentum buffers and the loss history
    chunks.append(header(STATE_MAGIC, 'I', state.epochs_completed))
    chunks.extend(le_bytes(v, np.float64) for v in state.velocity)
    chunks.append(struct.pack('<I', len(state.history.records)))
    for r in state.history.records:
        chunks.append(struct.pack('<Iddddd', r.epoch, r.lr, r.losses.hadamard, r.losses.classification,
                                  r.losses.lambda_, r.losses.total))
    write_atomic(path, chunks)
    logger.info("Saved checkpoint after %d epochs to %s", state.epochs_completed, path)


def load_checkpoint(path) -> TrainerState:
    """
    Read a checkpoint. A bare model file (no trainer trailer) loads with zero
    velocities and an empty history.
    """
    reader = BinaryReader.from_path(path)
    net = network_from_reader(reader)
    if reader.remaining == 0:
        return TrainerState(net, zero_velocity(net.parameters()), 0, TrainHistory())
    reader.expect_header(STATE_MAGIC)
    (epochs_completed,) = reader.unpack('I', 'completed epochs')
    velocity = [reader.array(np.float64, p.size, 'velocity').reshape(p.shape) for p in net.parameters()]
    (count,) = reader.unpack('I', 'history length')
    records = []
    for _ in range(count):
        epoch, lr, hadamard, classification, lambda_, total = reader.unpack('Iddddd', 'history record')
        records.append(EpochRecord(epoch, lr, LossBreakdown(hadamard, classification, lambda_, total)))
    reader.expect_end()
    return TrainerState(net, velocity, epochs_completed, TrainHistory(records))


def train(config: TrainConfig, features: FeatureSet, labels: LabelSet, split: Split, codebook: Codebook,
          net_spec: NetworkSpec = NetworkSpec()):
    """Train a freshly initialized network; returns (HashNetwork, TrainHistory)."""
    return HashTrainer(config, features, labels, split, codebook, net_spec).run()


def resume(checkpoint_path, config: TrainConfig, features: FeatureSet, labels: LabelSet, split: Split,
           codebook: Codebook, net_spec: NetworkSpec = NetworkSpec()):
    """Continue a checkpointed run up to ``config.epochs``; the history covers all epochs so far."""
    state = load_checkpoint(checkpoint_path)
    logger.info("Resuming from %s after %d epochs", checkpoint_path, state.epochs_completed)
    return HashTrainer(config, features, labels, split, codebook, net_spec, state=state).run()
