import numpy as np
import pytest
from scipy.special import expit

from phonalign import numerics as nx
from phonalign.ctc import ctc_loss
from phonalign.errors import CheckpointFormatError, PhonalignError, ShapeError
from phonalign.model import (CYCLIC_ORDERINGS, Checkpoint, FeatureSequence, GRUWeights, ModelConfig, dropout,
                             gru_layer_forward, model_forward, stack_frames)
from phonalign.numerics import Tensor, gradient_check


def _features(rng, frames, dim):
    base = rng.normal(size=(3 * frames, dim // 3))
    return FeatureSequence.from_base_frames(base)


def test_stack_frames_identity():
    base = np.arange(12, dtype=float).reshape(6, 2)
    stacked = stack_frames(base)
    assert stacked.shape == (2, 6)
    assert np.array_equal(stacked[0], [0, 1, 2, 3, 4, 5])
    assert np.array_equal(stacked[1], [6, 7, 8, 9, 10, 11])


def test_stack_frames_pads_with_last_frame():
    base = np.arange(14, dtype=float).reshape(7, 2)
    stacked = stack_frames(base)
    assert stacked.shape == (3, 6)
    assert np.array_equal(stacked[2], [12, 13, 12, 13, 12, 13])


def test_stack_frames_ordering():
    base = np.array([[1.0], [2.0], [3.0], [4.0], [5.0], [6.0]])
    stacked = stack_frames(base, (1, 2, 0))
    assert np.array_equal(stacked, [[2.0, 3.0, 1.0], [5.0, 6.0, 4.0]])
    assert CYCLIC_ORDERINGS == ((0, 1, 2), (1, 2, 0), (2, 0, 1))


def test_stack_frames_errors():
    with pytest.raises(ShapeError):
        stack_frames(np.zeros((0, 2)))
    with pytest.raises(ShapeError):
        stack_frames(np.zeros((3, 2)), (0, 0, 1))


def test_feature_energies_are_frame_means():
    base = np.arange(18, dtype=float).reshape(6, 3)
    features = FeatureSequence.from_base_frames(base)
    assert np.allclose(features.energies, features.frames.mean(axis=1))
    assert features.num_frames == 2 and features.dim == 9


def _gru_weights(rng, d_in, hidden, scale=0.5):
    return GRUWeights(
        W=Tensor(rng.uniform(-scale, scale, size=(d_in, 3 * hidden)), requires_grad=True),
        U=Tensor(rng.uniform(-scale, scale, size=(hidden, 3 * hidden)), requires_grad=True),
        b=Tensor(rng.uniform(-scale, scale, size=3 * hidden), requires_grad=True),
    )


def _scalar_gru(W, U, b, inputs):
    hidden = U.shape[0]
    h = np.zeros(hidden)
    out = []
    for x in inputs:
        z = np.zeros(hidden)
        r = np.zeros(hidden)
        n = np.zeros(hidden)
        for j in range(hidden):
            z[j] = expit(sum(x[i] * W[i, j] for i in range(len(x))) + sum(h[k] * U[k, j] for k in range(hidden))
                         + b[j])
            r[j] = expit(sum(x[i] * W[i, hidden + j] for i in range(len(x)))
                         + sum(h[k] * U[k, hidden + j] for k in range(hidden)) + b[hidden + j])
        for j in range(hidden):
            n[j] = np.tanh(sum(x[i] * W[i, 2 * hidden + j] for i in range(len(x)))
                           + sum(r[k] * h[k] * U[k, 2 * hidden + j] for k in range(hidden)) + b[2 * hidden + j])
        h = (1.0 - z) * n + z * h
        out.append(h.copy())
    return np.array(out)


def test_gru_zero_weights_give_zero_states():
    weights = GRUWeights(Tensor(np.zeros((4, 6))), Tensor(np.zeros((2, 6))), Tensor(np.zeros(6)))
    out = gru_layer_forward(weights, Tensor(np.ones((5, 4))))
    assert np.array_equal(out.values, np.zeros((5, 2)))


def test_gru_matches_unrolled_cell(rng):
    weights = _gru_weights(rng, 3, 2)
    inputs = rng.normal(size=(3, 3))
    out = gru_layer_forward(weights, Tensor(inputs))
    expected = _scalar_gru(weights.W.values, weights.U.values, weights.b.values, inputs)
    assert np.max(np.abs(out.values - expected)) < 1e-12

    backward = gru_layer_forward(weights, Tensor(inputs), "backward")
    expected_bw = _scalar_gru(weights.W.values, weights.U.values, weights.b.values, inputs[::-1])[::-1]
    assert np.max(np.abs(backward.values - expected_bw)) < 1e-12


def test_gru_shape_mismatch(rng):
    weights = _gru_weights(rng, 3, 2)
    with pytest.raises(ShapeError):
        gru_layer_forward(weights, Tensor(np.ones((4, 5))))
    with pytest.raises(PhonalignError):
        gru_layer_forward(weights, Tensor(np.ones((4, 3))), "sideways")


def test_inference_is_deterministic(tiny_checkpoint, rng):
    features = _features(rng, 6, tiny_checkpoint.config.input_dim)
    first = model_forward(tiny_checkpoint, features).values
    second = model_forward(tiny_checkpoint, features).values
    assert first.shape == (6, 40)
    assert np.array_equal(first, second)


def test_unidirectional_model_is_causal(tiny_model_config, rng):
    config = tiny_model_config.model_copy(update={"bidirectional": False, "layers": 2})
    checkpoint = Checkpoint.initialize(config, seed=2)
    features = _features(rng, 8, config.input_dim)
    full = model_forward(checkpoint, features).values
    for t in (1, 4, 7):
        prefix = model_forward(checkpoint, features.prefix(t)).values
        assert np.array_equal(prefix, full[:t])


def test_bidirectional_model_sees_future(tiny_checkpoint, rng):
    features = _features(rng, 6, tiny_checkpoint.config.input_dim)
    changed = features.frames.copy()
    changed[4:] += 3.0
    other = FeatureSequence(changed, changed.mean(axis=1))
    a = model_forward(tiny_checkpoint, features).values
    b = model_forward(tiny_checkpoint, other).values
    assert not np.allclose(a[2], b[2])


def test_dropout_rate(rng):
    x = Tensor(np.ones((1000, 50)))
    out = dropout(x, 0.2, rng).values
    zeroed = float((out == 0.0).mean())
    assert abs(zeroed - 0.2) < 0.01
    assert np.allclose(out[out != 0.0], 1.0 / 0.8)


def test_forward_errors(tiny_checkpoint, rng):
    with pytest.raises(ShapeError):
        model_forward(tiny_checkpoint, _features(rng, 4, 6))
    config = tiny_checkpoint.config.model_copy(update={"dropout": 0.2})
    with pytest.raises(PhonalignError):
        model_forward(Checkpoint.initialize(config), _features(rng, 4, config.input_dim), train_mode=True)


def test_initialization_is_seeded(tiny_model_config):
    a = Checkpoint.initialize(tiny_model_config, seed=9)
    b = Checkpoint.initialize(tiny_model_config, seed=9)
    assert all(np.array_equal(a.weights[k].values, b.weights[k].values) for k in a.weights)
    bound = np.sqrt(1.0 / tiny_model_config.input_dim)
    assert np.abs(a.weights["layer0.fw.W"].values).max() <= bound


def test_presets():
    full = ModelConfig.full_scale()
    assert (full.layers, full.hidden_per_direction, full.projection) == (4, 512, 100)
    student = ModelConfig.student_of(ModelConfig.desk())
    assert student.hidden_per_direction == 32 and not student.bidirectional
    assert ModelConfig().output_dim == 40 and ModelConfig().blank == 39


def test_checkpoint_save_load_is_bit_identical(tiny_checkpoint, tmp_path, rng):
    features = _features(rng, 5, tiny_checkpoint.config.input_dim)
    before = model_forward(tiny_checkpoint, features).values
    path = tmp_path / "model.ckpt"
    tiny_checkpoint.save(path)
    loaded = Checkpoint.load(path)
    assert loaded.config == tiny_checkpoint.config
    assert np.array_equal(model_forward(loaded, features).values, before)


def test_checkpoint_rejects_foreign_files(tmp_path):
    path = tmp_path / "junk.ckpt"
    path.write_bytes(b"NOPE" + bytes(16))
    with pytest.raises(CheckpointFormatError):
        Checkpoint.load(path)


def test_model_gradients_with_ctc(tiny_model_config, rng):
    config = tiny_model_config.model_copy(update={"hidden_per_direction": 2, "projection": 2})
    checkpoint = Checkpoint.initialize(config, seed=4)
    features = _features(rng, 6, config.input_dim)
    labels = (3, 7, 7)

    def loss_fn():
        log_probs = nx.log_softmax_rows(model_forward(checkpoint, features))
        value, grad = ctc_loss(log_probs, labels)
        return nx.attach_loss(value, [(log_probs, grad)])

    for name in ("layer0.fw.W", "layer0.bw.U", "layer0.proj.W", "output.b"):
        assert gradient_check(loss_fn, checkpoint.weights[name], probe_count=50, h=1e-5) < 1e-4, name
