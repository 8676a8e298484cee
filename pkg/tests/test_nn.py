import numpy as np
import pytest

from oracles import finite_difference_grads, relative_error
from ppdl.errors import NumericalDivergence, ShapeError, WeightsFormatError
from ppdl.nn import (
    Conv2D,
    Dense,
    Flatten,
    MaxPool2x2,
    Network,
    Optimizer,
    Softmax,
    TrainConfig,
    TrainReport,
    accuracy,
    build_default_net,
    deserialize_weights,
    fit,
    predict,
    serialize_weights,
    train_step,
)


def rand_batch(n, size=8, channels=1, classes=2, seed=0):
    rng = np.random.default_rng(seed)
    return rng.random((n, channels, size, size)), rng.integers(0, classes, n)


def band_images(n, size=16, seed=0):
    """Constant-intensity images: class 0 dark, class 1 bright."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    level = np.where(y == 0, rng.uniform(0.0, 0.3, n), rng.uniform(0.7, 1.0, n))
    return np.broadcast_to(level[:, None, None, None], (n, 1, size, size)).copy(), y


def test_default_net_shapes():
    net = build_default_net(64, 1, 4, seed=0)
    probs = net.forward(np.random.default_rng(0).random((3, 1, 64, 64)))
    assert probs.shape == (3, 4)
    assert np.all(probs >= 0) and np.all(probs <= 1)
    assert np.abs(probs.sum(axis=1) - 1).max() <= 1e-9


def test_default_net_deterministic_init():
    a = build_default_net(16, 3, 4, seed=7).get_weights()
    b = build_default_net(16, 3, 4, seed=7).get_weights()
    c = build_default_net(16, 3, 4, seed=8).get_weights()
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


def test_default_net_rejects_bad_size():
    for size in (2, 10, 0):
        with pytest.raises(ShapeError):
            build_default_net(size)


def test_forward_zero_input_and_purity():
    net = build_default_net(16, 1, 4)
    zero = net.forward(np.zeros((1, 1, 16, 16)))
    assert abs(zero.sum() - 1) <= 1e-9
    x, _ = rand_batch(5, 16)
    single = net.forward(x)
    doubled = net.forward(np.concatenate([x, x]))
    assert np.array_equal(doubled[:5], single) and np.array_equal(doubled[5:], single)
    # batching inside forward does not change results
    assert np.allclose(net.forward(x, batch_size=2), single, rtol=0, atol=1e-15)


def test_forward_shape_errors():
    net = build_default_net(16, 1, 4)
    for shape in [(1, 3, 16, 16), (1, 1, 8, 8), (1, 16, 16)]:
        with pytest.raises(ShapeError):
            net.forward(np.zeros(shape))


def test_network_construction_checks():
    with pytest.raises(ShapeError):
        Network([Flatten(), Dense(np.zeros((4, 2)), np.zeros(2))], (1, 2, 2))
    with pytest.raises(ShapeError):
        Network([Flatten(), Softmax(), Dense(np.zeros((4, 2)), np.zeros(2)), Softmax()], (1, 2, 2))
    with pytest.raises(ShapeError):
        Network([Flatten(), Dense(np.zeros((5, 2)), np.zeros(2)), Softmax()], (1, 2, 2))
    with pytest.raises(ShapeError):
        Network([Conv2D(np.zeros((2, 3, 3, 3)), np.zeros(2)), Flatten(), Softmax()], (1, 4, 4))
    with pytest.raises(ShapeError):
        Network([MaxPool2x2(), Flatten(), Softmax()], (1, 3, 3))


@pytest.mark.parametrize("seed", [0, 1])
def test_gradients_match_finite_differences(seed):
    net = build_default_net(8, 1, 2, seed=seed)
    x, y = rand_batch(4, 8, seed=100 + seed)
    net.loss_and_grads(x, y)
    analytic = [g.copy() for g in net.grads]
    numeric = finite_difference_grads(lambda: net.loss_and_grads(x, y), net.params)
    for a, n in zip(analytic, numeric):
        assert relative_error(a, n).max() < 1e-4


def test_loss_on_perfect_prediction():
    w = np.zeros((4, 2))
    net = Network([Flatten(), Dense(w, np.array([40.0, 0.0])), Softmax()], (1, 2, 2))
    loss = net.loss_and_grads(np.zeros((3, 1, 2, 2)), np.zeros(3, dtype=int))
    assert 0 <= loss <= 1e-6


def test_small_sgd_step_decreases_loss():
    net = build_default_net(8, 1, 2, seed=3)
    x, y = rand_batch(8, 8, seed=3)
    before = net.loss_and_grads(x, y)
    train_step(net, x, y, Optimizer(TrainConfig(optimizer="sgd", learning_rate=1e-4)))
    assert net.loss_and_grads(x, y) < before


@pytest.mark.parametrize("opt", ["sgd", "sgd_momentum", "adam"])
def test_train_steps_are_deterministic(opt):
    cfg = TrainConfig(optimizer=opt, learning_rate=1e-2)
    x, y = rand_batch(6, 8, seed=4)
    runs = []
    for _ in range(2):
        net = build_default_net(8, 1, 2, seed=4)
        o = Optimizer(cfg)
        losses = [train_step(net, x, y, o) for _ in range(2)]
        runs.append((losses, net.get_weights()))
    assert runs[0][0] == runs[1][0]
    assert all(np.array_equal(a, b) for a, b in zip(runs[0][1], runs[1][1]))
    assert all(np.isfinite(l) and l >= 0 for l in runs[0][0])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_step_divergence():
    net = build_default_net(8, 1, 2)
    net.params[0][...] = np.inf
    x, y = rand_batch(2, 8)
    with pytest.raises(NumericalDivergence):
        train_step(net, x, y, Optimizer(TrainConfig()))


def test_train_step_label_checks():
    net = build_default_net(8, 1, 2)
    x, _ = rand_batch(2, 8)
    with pytest.raises(ShapeError):
        net.loss_and_grads(x, np.array([0, 2]))
    with pytest.raises(ShapeError):
        net.loss_and_grads(x, np.array([0]))


@pytest.mark.parametrize(
    "kwargs", [{"epochs": 0}, {"batch_size": 0}, {"learning_rate": 0.0}, {"optimizer": "rmsprop"}]
)
def test_train_config_validation(kwargs):
    with pytest.raises(ValueError):
        TrainConfig(**kwargs)


def test_separable_task_reaches_full_accuracy():
    xtr, ytr = band_images(160, seed=0)
    xva, yva = band_images(10, seed=1)
    xte, yte = band_images(10, seed=2)
    net = build_default_net(16, 1, 2, seed=0)
    rep = fit(net, xtr, ytr, xva, yva, TrainConfig(epochs=5, batch_size=8, input_size=16))
    assert len(rep.train_loss) == len(rep.val_accuracy) == 5
    assert max(rep.val_accuracy) == 1.0
    assert accuracy(net, xte, yte) == 1.0
    pred, probs = predict(net, xte)
    assert len(pred) == len(yte) and probs.shape == (10, 2)


def test_fit_bookkeeping_and_best_epoch():
    x, y = rand_batch(12, 8, seed=5)
    net = build_default_net(8, 1, 2, seed=5)
    rep = fit(net, x, y, x[:4], y[:4], TrainConfig(epochs=1, batch_size=12))
    assert rep.steps == [1] and rep.best_epoch == 1

    net = build_default_net(8, 1, 2, seed=5)
    rep = fit(net, x, y, x[:6], y[:6], TrainConfig(epochs=6, batch_size=4, learning_rate=1e-2))
    assert rep.steps == [3] * 6
    assert rep.best_epoch == int(np.argmax(rep.val_accuracy)) + 1
    # the network ends with the best-epoch weights
    assert all(np.array_equal(a, b) for a, b in zip(net.params, rep.best_weights))
    assert accuracy(net, x[:6], y[:6]) == rep.val_accuracy[rep.best_epoch - 1]


def test_fit_is_reproducible():
    x, y = rand_batch(10, 8, seed=6)
    reports = []
    for _ in range(2):
        net = build_default_net(8, 1, 2, seed=1)
        reports.append(fit(net, x, y, x, y, TrainConfig(epochs=3, batch_size=4)).to_dict())
    assert reports[0] == reports[1]
    assert TrainReport.from_dict(reports[0]).to_dict() == reports[0]


def test_predict_ties_go_to_lowest_index():
    net = Network([Flatten(), Dense(np.zeros((4, 3)), np.zeros(3)), Softmax()], (1, 2, 2))
    pred, probs = predict(net, np.zeros((2, 1, 2, 2)))
    assert pred.tolist() == [0, 0]
    assert np.allclose(probs, 1 / 3)


def test_class_order_only_changes_encoding():
    # relabelling classes and permuting the output layer leaves predictions unchanged
    net = build_default_net(8, 1, 3, seed=2)
    x, _ = rand_batch(20, 8, seed=2)
    pred, _ = predict(net, x)
    perm = np.array([2, 0, 1])
    weights = net.get_weights()
    weights[-2] = weights[-2][:, perm]
    weights[-1] = weights[-1][perm]
    net.set_weights(weights)
    pred2, _ = predict(net, x)
    assert np.array_equal(perm[pred2], pred)


def test_weights_roundtrip():
    net = build_default_net(16, 3, 4, seed=9)
    data = serialize_weights(net)
    assert data[:8] == b"PPDLNET\x00"
    back = deserialize_weights(data)
    assert back.input_shape == (3, 16, 16)
    assert all(np.array_equal(a, b) for a, b in zip(net.params, back.params))
    assert serialize_weights(back) == data
    x, _ = rand_batch(2, 16, 3)
    assert np.array_equal(net.forward(x), back.forward(x))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: b"NOTANET\x00" + d[8:],
        lambda d: d[:8] + b"\x02\x00\x00\x00" + d[12:],
        lambda d: d[:-5],
        lambda d: d[:28] + b"\x63" + d[29:],
        lambda d: d + b"\x00",
        lambda d: b"",
    ],
)
def test_weights_format_errors(mutate):
    data = serialize_weights(build_default_net(8, 1, 2))
    with pytest.raises(WeightsFormatError):
        deserialize_weights(mutate(data))
