from .hash_network import DenseLayer, GradientSet, HashNetwork, NetworkSpec, load_network
from .losses import LossBreakdown, bce_loss, cross_entropy_loss, hadamard_loss
from .optimizer import sgd_step, zero_velocity
