import math
from fractions import Fraction

import numpy as np
import pytest

from oracles import block_diagonal, central_difference_grads, conv2d_loops, macs_standard_loops
from quadwatch.classify import (
    ConvSpec,
    MacCounter,
    ToyNet,
    ToyNetClassifier,
    backward_and_step,
    classify_rois,
    conv2d,
    cross_entropy,
    depthwise_conv2d,
    flops_separable,
    flops_standard,
    forward,
    load_image_dataset,
    make_shape_dataset,
    pointwise_conv2d,
    reduction_ratio,
    relu,
    separable_conv2d,
    softmax,
)
from quadwatch.classify.data import write_image_dataset
from quadwatch.classify.layers import Conv, Dense, DepthwiseConv, GlobalAvgPool, PointwiseConv, ReLU, Standardize
from quadwatch.classify.net import (
    WeightFormatError,
    load_weights,
    load_weights_bytes,
    loss_and_grads,
    prepare_input,
    save_weights,
    weights_to_bytes,
)
from quadwatch.imgcore import GrayImage, QuadFrame
from quadwatch.roi import default_config

# ---------------------------------------------------------------------------
# convolution primitives


def test_conv_trivial_examples():
    assert conv2d(np.array([[[7.5]]]), np.ones((1, 1, 1, 1)), np.zeros(1)).item() == 7.5
    out = conv2d(np.ones((1, 3, 3)), np.ones((1, 1, 3, 3)), padding=1)
    assert out[0, 1, 1] == 9 and out[0, 0, 0] == 4


def test_conv_matches_loops():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 8, 8))
    k = rng.normal(size=(5, 4, 3, 3))
    b = rng.normal(size=5)
    for stride, pad in [(1, 0), (1, 1), (2, 1)]:
        got = conv2d(x, k, b, stride=stride, padding=pad)
        assert np.abs(got - conv2d_loops(x[None], k, b, stride, pad)[0]).max() < 1e-12


def test_conv_shape_errors():
    with pytest.raises(ValueError):
        conv2d(np.zeros((3, 5, 5)), np.zeros((2, 4, 3, 3)))
    with pytest.raises(ValueError):
        conv2d(np.zeros((1, 5, 5)), np.zeros((2, 1, 3, 3)), spec=ConvSpec(3, 1, 4, 3))
    with pytest.raises(ValueError):
        depthwise_conv2d(np.zeros((3, 5, 5)), np.zeros((2, 3, 3)))
    with pytest.raises(ValueError):
        pointwise_conv2d(np.zeros((3, 5, 5)), np.zeros((2, 4)))
    with pytest.raises(ValueError):
        ConvSpec(2, 1, 1, 1)


def test_depthwise_examples():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 6, 6))
    ident = np.zeros((2, 3, 3))
    ident[:, 1, 1] = 1
    assert np.array_equal(depthwise_conv2d(x, ident, padding=1), x)
    out = depthwise_conv2d(x, np.zeros((2, 3, 3)), np.array([1.5, -2.0]), padding=1)
    assert np.all(out[0] == 1.5) and np.all(out[1] == -2.0)
    k = rng.normal(size=(2, 3, 3))
    assert np.abs(depthwise_conv2d(x, k, padding=1) - conv2d(x, block_diagonal(k), padding=1)).max() < 1e-12


def test_pointwise_examples():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(3, 4, 5))
    assert np.array_equal(pointwise_conv2d(x, np.eye(3)), x)
    m = rng.normal(size=(2, 3))
    assert np.abs(pointwise_conv2d(x, m) - conv2d(x, m[:, :, None, None])).max() < 1e-12
    two = np.stack([np.full((2, 2), 3.0), np.arange(4.0).reshape(2, 2)])
    assert pointwise_conv2d(two, np.ones((1, 2)))[0].tolist() == [[3.0, 4.0], [5.0, 6.0]]


# ---------------------------------------------------------------------------
# FLOP accounting


def test_flops_examples():
    spec = ConvSpec(3, 32, 256, 14)
    assert reduction_ratio(spec) == Fraction(1, 256) + Fraction(1, 9)
    assert float(reduction_ratio(spec)) == pytest.approx(0.11502, abs=1e-5)
    assert 1 / float(reduction_ratio(spec)) == pytest.approx(8.69, abs=0.01)
    assert reduction_ratio(ConvSpec(1, 8, 16, 4)) == Fraction(1, 16) + 1
    assert float(reduction_ratio(ConvSpec(3, 8, 1024, 4))) == pytest.approx(0.11209, abs=1e-5)
    assert flops_standard(spec) == macs_standard_loops(3, 32, 256, 14)


@pytest.mark.parametrize("n_in, n_out, size", [(3, 16, 8), (8, 64, 6), (4, 9, 5)])
def test_counted_macs_match_formulas(n_in, n_out, size):
    rng = np.random.default_rng(n_out)
    spec = ConvSpec.for_input(3, n_in, n_out, size)
    x = rng.normal(size=(n_in, size, size))
    std, sep = MacCounter(), MacCounter()
    conv2d(x, rng.normal(size=(n_out, n_in, 3, 3)), spec=spec, counter=std)
    separable_conv2d(x, rng.normal(size=(n_in, 3, 3)), rng.normal(size=(n_out, n_in)), spec, counter=sep)
    assert std.macs == flops_standard(spec)
    assert sep.macs == flops_separable(spec)
    assert Fraction(sep.macs, std.macs) == Fraction(1, n_out) + Fraction(1, 9)


# ---------------------------------------------------------------------------
# activations and loss


def test_relu():
    assert relu([-1, 0, 2]).tolist() == [0, 0, 2]
    assert not relu(-np.arange(1, 5)).any()
    x = np.random.default_rng(3).normal(size=50)
    assert np.array_equal(relu(relu(x)), relu(x))


def test_softmax_examples():
    assert np.allclose(softmax(np.zeros(4)), 0.25, atol=1e-15)
    assert np.abs(softmax([0.0, math.log(3)]) - [0.25, 0.75]).max() < 1e-12
    z = np.random.default_rng(4).normal(size=7)
    assert np.abs(softmax(z) - softmax(z + 123.4)).max() < 1e-12
    p = softmax(z)
    assert abs(p.sum() - 1) < 1e-12 and np.argsort(p).tolist() == np.argsort(z).tolist()
    assert softmax([1000.0, 0.0])[0] == 1.0
    with pytest.raises(ValueError):
        softmax([0.0, np.inf])
    with pytest.raises(ValueError):
        softmax([1.0])


def test_cross_entropy_examples():
    assert cross_entropy([1.0, 0.0, 0.0], 0) == 0
    assert cross_entropy(np.full(5, 0.2), 3) == pytest.approx(math.log(5))
    assert cross_entropy([0.25, 0.75], 1) == pytest.approx(0.2877, abs=1e-4)
    assert cross_entropy([1.0, 0.0], 1) == pytest.approx(-math.log(1e-12))
    with pytest.raises(ValueError):
        cross_entropy([0.5, 0.5], 2)


# ---------------------------------------------------------------------------
# network


def test_build_shapes_and_param_count():
    net = ToyNet.build()
    assert net.n_classes == 5 and net.feature_width == 64
    assert net.n_params == net.param_count() == sum(a.size for _, _, a in net.parameters())
    x = prepare_input([np.zeros((32, 32))], 32)
    assert net.logits(x).shape == (1, 5)
    net3 = ToyNet.build(in_channels=3)
    assert forward(net3, np.zeros((40, 20))).shape == (5,)


def test_zero_weights_uniform():
    net = ToyNet.build(zero=True)
    rng = np.random.default_rng(5)
    p = forward(net, rng.integers(0, 256, (32, 32)))
    assert np.allclose(p, 0.2, atol=1e-15)


def test_forward_sums_to_one_and_deterministic():
    net = ToyNet.build(seed=1)
    rng = np.random.default_rng(6)
    for _ in range(5):
        img = rng.integers(0, 256, (32, 32))
        p = forward(net, img)
        assert abs(p.sum() - 1) < 1e-12
        assert np.array_equal(p, forward(net, img))


def test_prepare_input_range():
    x = prepare_input([np.full((32, 32), 255), GrayImage(np.zeros((16, 16), dtype=np.uint8))], 32)
    assert x.shape == (2, 1, 32, 32) and x.max() == 1.0 and x.min() == 0.0


def test_lr_zero_unchanged():
    net = ToyNet.build(("a", "b"), seed=2)
    before = weights_to_bytes(net)
    rng = np.random.default_rng(7)
    batch = [(rng.integers(0, 256, (32, 32)), k % 2) for k in range(4)]
    loss = backward_and_step(net, batch, 0.0)
    assert np.isfinite(loss)
    assert weights_to_bytes(net) == before
    with pytest.raises(ValueError):
        backward_and_step(net, [], 0.1)
    with pytest.raises(ValueError):
        backward_and_step(net, [(batch[0][0], 5)], 0.1)


def micro_net(rng, with_standardize=True):
    layers = [Standardize()] if with_standardize else []
    layers += [
        Conv(rng.normal(size=(3, 1, 3, 3)), rng.normal(size=3)), ReLU(),
        DepthwiseConv(rng.normal(size=(3, 3, 3)), rng.normal(size=3), stride=2), ReLU(),
        PointwiseConv(rng.normal(size=(4, 3)), rng.normal(size=4)), ReLU(),
        GlobalAvgPool(), Dense(rng.normal(size=(3, 4)), rng.normal(size=3)),
    ]
    return ToyNet(layers, ("a", "b", "c"), input_side=8)


def relative_error(a, n):
    return np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), 1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = micro_net(rng)
    x = rng.uniform(0, 1, size=(1, 1, 8, 8))
    t = np.array([seed % 3])
    loss_and_grads(net, x, t)
    analytic = [layer.grads[name].copy() for layer, name, _ in net.parameters()]
    numeric = central_difference_grads(lambda: loss_and_grads(net, x, t), [a for _, _, a in net.parameters()], 1e-5)
    for a, n in zip(analytic, numeric):
        assert relative_error(a, n).max() < 1e-4


def test_input_gradient_through_standardize():
    rng = np.random.default_rng(8)
    layer = Standardize()
    x = rng.normal(size=(2, 1, 5, 5))
    w = rng.normal(size=x.shape)
    layer.forward(x)
    g = layer.backward(w)
    num = central_difference_grads(lambda: float((Standardize().forward(x) * w).sum()), [x])[0]
    assert relative_error(g, num).max() < 1e-4
    flat = np.full((1, 1, 4, 4), 0.5)
    assert np.allclose(layer.forward(flat), 0)


def test_loss_decreases_on_separable_set():
    rng = np.random.default_rng(9)
    net = ToyNet.build(("dark_left", "dark_right"), seed=3)
    imgs, labels = [], []
    for k in range(32):
        img = np.full((32, 32), 200.0)
        if k % 2:
            img[:, 16:] = 40
        else:
            img[:, :16] = 40
        imgs.append(img + rng.normal(0, 5, (32, 32)))
        labels.append(k % 2)
    batch = list(zip(imgs, labels))
    losses = [backward_and_step(net, batch, 0.05) for _ in range(50)]
    rises = sum(b > a for a, b in zip(losses, losses[1:]))
    assert rises <= 5
    assert losses[-1] < losses[0]


# ---------------------------------------------------------------------------
# weight file


def test_weight_round_trip(tmp_path):
    net = ToyNet.build(("x", "y", "z"), seed=4, in_channels=3)
    data = weights_to_bytes(net)
    assert data[:4] == b"TNW1"
    save_weights(net, tmp_path / "n.tnw")
    again = load_weights(tmp_path / "n.tnw")
    assert weights_to_bytes(again) == data
    assert again.class_names == ("x", "y", "z") and again.in_channels == 3
    img = np.random.default_rng(10).integers(0, 256, (32, 32))
    assert np.array_equal(forward(again, img), forward(net, img))


@pytest.mark.parametrize("corrupt, match", [
    (lambda d: b"TNW2" + d[4:], "magic"),
    (lambda d: d[:-7], "truncated"),
    (lambda d: d + b"\x00", "trailing"),
    (lambda d: d[:8] + b"\x63" + d[9:], "tag"),
])
def test_weight_file_errors(corrupt, match):
    data = weights_to_bytes(ToyNet.build(("a", "b")))
    with pytest.raises(WeightFormatError, match=match):
        load_weights_bytes(corrupt(data))


# ---------------------------------------------------------------------------
# ROI classification


def test_classify_rois_selection():
    cfg = default_config(640, 360)
    frame = QuadFrame(GrayImage(np.random.default_rng(11).integers(0, 256, (360, 640), dtype=np.uint8)))
    net = ToyNet.build(seed=5)
    assert classify_rois(net, frame, cfg, set()) == {}
    every = classify_rois(net, frame, cfg, range(12))
    assert sorted(every) == list(range(12))
    some = classify_rois(net, frame, cfg, {3, 7})
    assert sorted(some) == [3, 7]
    for k, (label, conf) in some.items():
        assert every[k][0] == label and every[k][1] == pytest.approx(conf, abs=1e-12)
        assert 0.2 <= conf <= 1.0
    crop = frame.image.pixels[cfg[3].slices()]
    assert some[3][1] == pytest.approx(forward(net, crop).max(), abs=1e-12)
    with pytest.raises(ValueError):
        classify_rois(net, frame, cfg, {12})


# ---------------------------------------------------------------------------
# data and estimator


def test_shape_dataset_deterministic():
    X1, y1 = make_shape_dataset(10, seed=3)
    X2, y2 = make_shape_dataset(10, seed=3)
    assert np.array_equal(X1, X2) and np.array_equal(y1, y2)
    assert X1.shape == (30, 32, 32) and X1.dtype == np.uint8
    assert sorted(set(y1)) == ["disc", "rect", "triangle"]


def test_image_dataset_directory(tmp_path):
    X, y = make_shape_dataset(4, side=20, seed=1)
    write_image_dataset(X, y, tmp_path)
    X2, y2 = load_image_dataset(tmp_path, side=32)
    assert X2.shape == (12, 32, 32)
    assert sorted(y2.tolist()) == sorted(y.tolist())
    (tmp_path / "empty").mkdir()
    with pytest.raises(ValueError, match="no labelled images"):
        load_image_dataset(tmp_path / "empty")


def test_estimator_small_fit():
    X, y = make_shape_dataset(40, seed=1)
    clf = ToyNetClassifier(epochs=4, seed=0).fit(X, y)
    assert list(clf.classes_) == ["disc", "rect", "triangle"]
    assert len(clf.loss_curve_) == 4 and clf.loss_curve_[-1] < clf.loss_curve_[0]
    proba = clf.predict_proba(X[:5])
    assert proba.shape == (5, 3) and np.allclose(proba.sum(axis=1), 1)
    assert set(clf.predict(X[:5])) <= set(clf.classes_)
    wrapped = ToyNetClassifier.from_net(clf.net_)
    assert np.array_equal(wrapped.predict(X[:10]), clf.predict(X[:10]))
    assert clf.get_params()["learning_rate"] == 0.05


def test_estimator_input_validation():
    with pytest.raises(ValueError):
        ToyNetClassifier().fit(np.zeros((4, 9)), [0, 1, 0, 1])
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        ToyNetClassifier().predict(np.zeros((1, 32, 32)))
