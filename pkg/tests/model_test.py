import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from hadamard_hashing.binary_io import write_atomic
from hadamard_hashing.exceptions import FileFormatError, ValidationError
from hadamard_hashing.model import (
    DenseLayer,
    HashNetwork,
    LossBreakdown,
    NetworkSpec,
    bce_loss,
    cross_entropy_loss,
    hadamard_loss,
    load_network,
    sgd_step,
    zero_velocity,
)
from hadamard_hashing.model.hash_network import network_to_bytes


def _random_problem(trial: int, mode: str):
    rng = np.random.default_rng(100 + trial)
    dim, code_length, num_classes, batch = rng.integers(2, 6), rng.integers(2, 7), rng.integers(2, 5), 4
    hidden = tuple(int(w) for w in rng.integers(2, 6, size=trial % 3))
    activation = 'tanh' if trial % 2 else 'relu'
    net = HashNetwork.initialize(NetworkSpec(hidden, activation), dim, code_length, num_classes, seed=trial)
    # Nonzero biases so every path of the gradient is exercised.
    for layer in net.all_layers:
        layer.bias[:] = rng.normal(scale=0.1, size=layer.bias.shape)
    x = rng.normal(size=(batch, dim))
    targets = rng.choice([-1.0, 0.0, 1.0], size=(batch, code_length))
    mask = targets != 0
    if mode == 'ce':
        labels = np.eye(num_classes, dtype=np.uint8)[rng.integers(0, num_classes, size=batch)]
    else:
        labels = (rng.random((batch, num_classes)) < 0.5).astype(np.uint8)
    return net, x, targets, mask, labels


@pytest.mark.parametrize('mode', ['ce', 'bce'])
@pytest.mark.parametrize('trial', range(20))
def test_gradients_match_finite_differences(trial, mode):
    net, x, targets, mask, labels = _random_problem(trial, mode)
    lambda_ = 0.7

    def total():
        return net.backward(x, targets, mask, labels, lambda_, mode)[0].total

    _, grads = net.backward(x, targets, mask, labels, lambda_, mode)
    eps = 1e-6
    for param, grad in zip(net.parameters(), grads.arrays()):
        numeric = np.zeros_like(param)
        for idx in np.ndindex(param.shape):
            saved = param[idx]
            param[idx] = saved + eps
            up = total()
            param[idx] = saved - eps
            down = total()
            param[idx] = saved
            numeric[idx] = (up - down) / (2 * eps)
        assert_allclose(grad, numeric, rtol=1e-5, atol=1e-8)


def test_hadamard_loss_value_and_mask():
    u = np.array([[0.5, -0.5, 0.2]])
    t = np.array([[1.0, -1.0, 0.0]])
    value, grad = hadamard_loss(u, t, t != 0)
    assert value == pytest.approx(0.25)
    assert_allclose(grad, [[-0.5, 0.5, 0.0]])


def test_cross_entropy_uniform_logits():
    value, grad = cross_entropy_loss(np.zeros((2, 4)), np.array([1, 3]))
    assert value == pytest.approx(np.log(4))
    assert_allclose(grad.sum(axis=1), 0.0, atol=1e-15)
    with pytest.raises(ValidationError):
        cross_entropy_loss(np.zeros((2, 4)), np.array([1, 4]))


def test_bce_at_zero_logits():
    value, _ = bce_loss(np.zeros((3, 2)), np.array([[1, 0], [0, 1], [1, 1]]))
    assert value == pytest.approx(np.log(2))


def test_cross_entropy_of_a_dominant_logit():
    with np.errstate(over='raise', invalid='raise'):
        value, grad = cross_entropy_loss(np.array([[1000.0, 0.0, 0.0]]), np.array([0]))
    assert value == pytest.approx(0.0, abs=1e-12)
    assert np.isfinite(grad).all()


def test_bce_of_a_confident_positive():
    value, grad = bce_loss(np.array([[50.0]]), np.array([[1]]))
    assert value == pytest.approx(0.0, abs=1e-12)
    assert abs(grad[0, 0]) < 1e-12


def test_hadamard_loss_at_zero_outputs():
    targets = np.random.default_rng(4).choice([-1.0, 1.0], size=(3, 16))
    value, _ = hadamard_loss(np.zeros((3, 16)), targets, np.ones((3, 16), dtype=bool))
    assert value == pytest.approx(8.0)


def test_hadamard_loss_ignores_bit_order():
    rng = np.random.default_rng(5)
    u = np.tanh(rng.normal(size=(4, 10)))
    targets = rng.choice([-1.0, 0.0, 1.0], size=(4, 10))
    perm = rng.permutation(10)
    value, grad = hadamard_loss(u, targets, targets != 0)
    permuted, permuted_grad = hadamard_loss(u[:, perm], targets[:, perm], targets[:, perm] != 0)
    assert permuted == pytest.approx(value, rel=1e-14)
    assert_array_equal(permuted_grad, grad[:, perm])


def test_zero_weights_give_zero_outputs():
    net = HashNetwork([DenseLayer(np.zeros((3, 4)), np.zeros(4), 'relu'),
                       DenseLayer(np.zeros((4, 6)), np.zeros(6), 'tanh')],
                      DenseLayer(np.zeros((6, 2)), np.zeros(2), 'identity'))
    u, logits = net.forward(np.random.default_rng(0).normal(size=(5, 3)))
    assert_array_equal(u, 0.0)
    assert_array_equal(logits, 0.0)


def test_forward_follows_batch_order():
    net = HashNetwork.initialize(NetworkSpec((7,), 'tanh'), 4, 6, 3, seed=2)
    x = np.random.default_rng(1).normal(size=(9, 4))
    perm = np.random.default_rng(2).permutation(9)
    u, logits = net.forward(x)
    u_perm, logits_perm = net.forward(x[perm])
    assert_allclose(u_perm, u[perm], rtol=1e-13, atol=1e-15)
    assert_allclose(logits_perm, logits[perm], rtol=1e-13, atol=1e-15)


def test_zero_lambda_matches_hadamard_only():
    net, x, targets, mask, labels = _random_problem(5, 'ce')
    zero, zero_grads = net.backward(x, targets, mask, labels, 0.0, 'ce')
    only, only_grads = net.backward(x, targets, mask, labels, 3.0, 'ce', use_classification=False)
    assert zero.total == only.total == zero.hadamard
    for a, b in zip(zero_grads.arrays(), only_grads.arrays()):
        assert_array_equal(a, b)


def test_loss_breakdown():
    losses = LossBreakdown.compose(2.0, 0.5, 4.0)
    assert losses.total == pytest.approx(4.0)


def test_disabled_terms():
    net, x, targets, mask, labels = _random_problem(3, 'ce')
    no_cls, grads = net.backward(x, targets, mask, labels, 2.0, 'ce', use_classification=False)
    assert no_cls.lambda_ == 0.0
    assert no_cls.total == no_cls.hadamard
    assert_array_equal(grads.weights[-1], 0.0)

    no_hash, _ = net.backward(x, targets, mask, labels, 1.0, 'ce', use_hadamard=False)
    assert no_hash.hadamard == 0.0
    assert no_hash.total == no_hash.classification


def test_cross_entropy_rejects_multi_label_rows():
    net, x, targets, mask, _ = _random_problem(0, 'ce')
    labels = np.ones((x.shape[0], net.num_classes), dtype=np.uint8)
    with pytest.raises(ValidationError):
        net.backward(x, targets, mask, labels, 1.0, 'ce')


def test_architecture_checks():
    hash_layer = DenseLayer(np.zeros((3, 4)), np.zeros(4), 'tanh')
    with pytest.raises(ValidationError):
        HashNetwork([hash_layer], DenseLayer(np.zeros((5, 2)), np.zeros(2), 'identity'))
    with pytest.raises(ValidationError):
        HashNetwork([DenseLayer(np.zeros((3, 4)), np.zeros(4), 'relu')],
                    DenseLayer(np.zeros((4, 2)), np.zeros(2), 'identity'))
    with pytest.raises(ValidationError):
        HashNetwork([hash_layer], DenseLayer(np.zeros((4, 2)), np.zeros(2), 'tanh'))


def test_initialization_is_seeded():
    spec = NetworkSpec((8,), 'relu')
    a = HashNetwork.initialize(spec, 5, 4, 3, seed=1)
    b = HashNetwork.initialize(spec, 5, 4, 3, seed=1)
    c = HashNetwork.initialize(spec, 5, 4, 3, seed=2)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert_array_equal(pa, pb)
    assert not np.array_equal(a.parameters()[0], c.parameters()[0])
    assert a.code_length == 4 and a.num_classes == 3 and a.input_dim == 5


def test_hash_outputs_are_bounded_and_batched():
    net = HashNetwork.initialize(NetworkSpec((6,)), 3, 5, 2, seed=0)
    x = np.random.default_rng(0).normal(size=(11, 3)) * 10
    u = net.hash_outputs(x, batch_size=4)
    assert u.shape == (11, 5)
    assert (np.abs(u) <= 1).all()
    assert_allclose(u, net.forward(x)[0])
    with pytest.raises(ValidationError):
        net.forward(np.zeros((2, 4)))


def test_model_file_round_trip(tmp_path):
    net = HashNetwork.initialize(NetworkSpec((6, 5), 'tanh'), 3, 8, 4, seed=5)
    write_atomic(tmp_path / 'net.hcmd', network_to_bytes(net))
    loaded = load_network(tmp_path / 'net.hcmd')
    assert loaded.same_architecture(net)
    for a, b in zip(loaded.parameters(), net.parameters()):
        assert_array_equal(a, b)
    data = bytearray((tmp_path / 'net.hcmd').read_bytes())
    data[20] = 7
    (tmp_path / 'tag.hcmd').write_bytes(bytes(data))
    with pytest.raises(FileFormatError):
        load_network(tmp_path / 'tag.hcmd')


class TestSgdStep:
    def test_momentum(self):
        p, v = [np.array([1.0])], [np.array([0.0])]
        sgd_step(p, [np.array([0.5])], v, lr=0.1, momentum=0.9, weight_decay=0.0)
        assert_allclose(p[0], [0.95])
        sgd_step(p, [np.array([0.5])], v, lr=0.1, momentum=0.9, weight_decay=0.0)
        assert_allclose(v[0], [0.95])
        assert_allclose(p[0], [0.855])

    def test_momentum_from_rest(self):
        p, v = [np.array([0.0])], [np.array([0.0])]
        sgd_step(p, [np.array([1.0])], v, lr=0.1, momentum=0.9, weight_decay=0.0)
        assert_allclose(p[0], [-0.1])
        sgd_step(p, [np.array([1.0])], v, lr=0.1, momentum=0.9, weight_decay=0.0)
        assert_allclose(p[0], [-0.29])

    def test_decay_alone_shrinks_geometrically(self):
        p = [np.array([2.0, -1.0])]
        for _ in range(3):
            sgd_step(p, [np.zeros(2)], [np.zeros(2)], lr=0.5, momentum=0.0, weight_decay=0.2)
        assert_allclose(p[0], np.array([2.0, -1.0]) * 0.9 ** 3)

    def test_weight_decay_mask(self):
        params = [np.array([1.0]), np.array([1.0])]
        grads = zero_velocity(params)
        sgd_step(params, grads, zero_velocity(params), lr=1.0, momentum=0.0, weight_decay=0.1,
                 decay_mask=[True, False])
        assert_allclose(params[0], [0.9])
        assert_allclose(params[1], [1.0])

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            sgd_step([np.zeros(2)], [np.zeros(3)], [np.zeros(2)], lr=0.1)
