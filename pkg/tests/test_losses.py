import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.special import log_softmax, softmax

from phonalign import numerics as nx
from phonalign.ctc import ctc_loss
from phonalign.errors import ConfigError, MissingInputError, ShapeError
from phonalign.losses import (LossConfig, LossContext, SilenceMask, WindowSpec, alignment_penalty, compose_loss,
                              get_terms_for_config, silence_mask, ts_frame_loss, ts_window_loss)
from phonalign.model import FeatureSequence
from phonalign.numerics import Tensor, gradient_check


def _numeric_grad(fn, x, h=1e-5):
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[index] += h
        minus[index] -= h
        grad[index] = (fn(plus) - fn(minus)) / (2 * h)
    return grad


def _max_rel_error(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))


def test_silence_mask_is_strictly_below_mean():
    mask = silence_mask(np.array([0.0, 0.0, 2.0, 2.0]))
    assert mask.is_silence.tolist() == [True, True, False, False]
    assert not silence_mask(np.array([1.0, 1.0, 1.0])).is_silence.any()
    with pytest.raises(ShapeError):
        silence_mask(np.array([]))


def test_silence_mask_is_scale_invariant(rng):
    energies = rng.normal(size=30)
    base = silence_mask(energies).is_silence
    assert np.array_equal(silence_mask(energies * 7.5).is_silence, base)
    assert np.array_equal(silence_mask(energies * 7.5 + 3.0).is_silence, base)


def test_alignment_penalty_hand_computed():
    probs = np.array([[0.1, 0.1, 0.8], [0.3, 0.2, 0.5]])
    mask = SilenceMask(np.array([True, False]))
    penalty, grad = alignment_penalty(probs, mask)
    assert penalty == pytest.approx((math.log(0.2) + math.log(0.5)) / 2)
    assert np.allclose(grad, [[2.5, 2.5, 0.0], [0.0, 0.0, 1.0]])


def test_alignment_penalty_clamp():
    probs = np.array([[0.0, 1.0], [0.0, 1.0]])
    penalty, grad = alignment_penalty(probs, SilenceMask(np.array([True, False])), clamp=1e-8)
    assert penalty == pytest.approx(math.log(1e-8) / 2)
    assert np.array_equal(grad, [[0.0, 0.0], [0.0, 0.5]])
    with pytest.raises(ConfigError):
        alignment_penalty(probs, SilenceMask(np.array([True, False])), clamp=0.0)
    with pytest.raises(ShapeError):
        alignment_penalty(probs, SilenceMask(np.array([True])))


def test_alignment_penalty_matches_formula_and_gradient(rng):
    probs = softmax(rng.normal(size=(8, 5)), axis=1)
    mask = SilenceMask(rng.random(8) < 0.5)
    penalty, grad = alignment_penalty(probs, mask)
    direct = np.mean([math.log(probs[t, :4].sum() if mask.is_silence[t] else probs[t, 4]) for t in range(8)])
    assert abs(penalty - direct) < 1e-12
    numeric = _numeric_grad(lambda p: alignment_penalty(p, mask)[0], probs)
    assert _max_rel_error(grad, numeric) < 1e-4


def test_alignment_gradient_at_certain_frames():
    probs = np.array([[0.5, 0.5, 0.0], [0.0, 0.0, 1.0]])
    penalty, grad = alignment_penalty(probs, SilenceMask(np.array([True, False])))
    assert penalty == 0.0
    assert np.array_equal(grad, [[0.5, 0.5, 0.0], [0.0, 0.0, 0.5]])


@pytest.mark.parametrize("seed", range(20))
def test_alignment_penalty_falls_as_blank_moves_onto_silence(seed):
    rng = np.random.default_rng(seed)
    probs = softmax(rng.normal(size=(10, 4)), axis=1)
    mask = SilenceMask(np.arange(10) % 2 == 0)
    base, _ = alignment_penalty(probs, mask)
    for t in range(10):
        moved = probs.copy()
        if mask.is_silence[t]:
            shift = 0.5 * moved[t, 0]
            moved[t, 0] -= shift
            moved[t, 3] += shift
        else:
            shift = 0.5 * moved[t, 3]
            moved[t, 3] -= shift
            moved[t, 1] += shift
        assert alignment_penalty(moved, mask)[0] < base, t


def test_ts_frame_loss(rng):
    student = np.array([[1.0, 2.0], [0.0, 0.0]])
    teacher = np.array([[0.0, 0.0], [1.0, 1.0]])
    value, grad = ts_frame_loss(student, teacher)
    assert value == pytest.approx((5.0 + 2.0) / 2)
    assert np.allclose(grad, [[1.0, 2.0], [-1.0, -1.0]])
    with pytest.raises(ShapeError):
        ts_frame_loss(student, teacher[:1])

    s, t = rng.normal(size=(5, 3)), rng.normal(size=(5, 3))
    numeric = _numeric_grad(lambda x: ts_frame_loss(x, t)[0], s)
    assert _max_rel_error(ts_frame_loss(s, t)[1], numeric) < 1e-4


def test_ts_window_loss_shifted_teacher():
    student = np.array([[0.0], [1.0], [2.0], [3.0]])
    teacher = student - 1.0
    best, _ = ts_window_loss(student, teacher, WindowSpec(lo=0, hi=1, mode="best"))
    avg, _ = ts_window_loss(student, teacher, WindowSpec(lo=0, hi=1, mode="avg"))
    assert best == pytest.approx(1.0 / 4)
    assert avg == pytest.approx(2.5 / 4)


def test_ts_window_zero_width_equals_frame_loss(rng):
    s, t = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
    for mode in ("best", "avg"):
        value, grad = ts_window_loss(s, t, WindowSpec(lo=0, hi=0, mode=mode))
        frame_value, frame_grad = ts_frame_loss(s, t)
        assert value == pytest.approx(frame_value)
        assert np.allclose(grad, frame_grad)


@pytest.mark.parametrize("mode", ["best", "avg"])
def test_ts_window_loss_matches_double_loop(rng, mode):
    s, t = rng.normal(size=(7, 3)), rng.normal(size=(7, 3))
    window = WindowSpec(lo=-3, hi=0, mode=mode)
    value, grad = ts_window_loss(s, t, window)
    total = 0.0
    for i in range(7):
        dists = [float(((s[i] - t[j]) ** 2).sum()) for j in range(i - 3, i + 1) if 0 <= j < 7]
        total += min(dists) if mode == "best" else sum(dists) / len(dists)
    assert abs(value - total / 7) < 1e-12
    # random continuous inputs keep best-mode minima untied
    numeric = _numeric_grad(lambda x: ts_window_loss(x, t, window)[0], s)
    assert _max_rel_error(grad, numeric) < 1e-4


@pytest.mark.parametrize("seed", range(25))
def test_best_window_never_exceeds_average(seed):
    rng = np.random.default_rng(seed)
    frames = int(rng.integers(1, 12))
    s, t = rng.normal(size=(frames, 4)), rng.normal(size=(frames, 4))
    lo = int(rng.integers(-4, 1))
    hi = int(rng.integers(0, 5))
    best, _ = ts_window_loss(s, t, WindowSpec(lo=lo, hi=hi, mode="best"))
    avg, _ = ts_window_loss(s, t, WindowSpec(lo=lo, hi=hi, mode="avg"))
    assert best <= avg + 1e-12


def test_window_spec():
    assert WindowSpec.from_offset(-6, "avg").model_dump() == {"lo": -6, "hi": 0, "mode": "avg"}
    plus = WindowSpec.from_offset(3, "best")
    assert (plus.lo, plus.hi, plus.recipe, plus.lag) == (0, 3, "ts-best:+3", -1.5)
    assert WindowSpec.from_offset(-6).lag == 3.0
    with pytest.raises(ValidationError):
        WindowSpec(lo=1, hi=0)


def test_loss_recipes():
    assert LossConfig.from_recipe("ctc").recipe == "ctc"
    align = LossConfig.from_recipe("align")
    assert align.use_ctc and align.use_align and not align.needs_teacher
    combined = LossConfig.from_recipe("ts+align", teacher_checkpoint="t.ckpt")
    assert combined.use_align and combined.ts.teacher_checkpoint == "t.ckpt" and combined.ts.window is None
    windowed = LossConfig.from_recipe("TS-AVG:-6")
    assert windowed.recipe == "ts-avg:-6" and windowed.ts.window == WindowSpec(lo=-6, hi=0, mode="avg")
    assert [t.name for t in get_terms_for_config(combined)] == ["ctc", "align", "ts"]
    with pytest.raises(ConfigError):
        LossConfig.from_recipe("ts-median:3")
    with pytest.raises(ConfigError):
        LossConfig.from_recipe("ctc").with_teacher("t.ckpt")
    with pytest.raises(ValidationError):
        LossConfig(use_ctc=False)


def test_loss_recipe_overrides_fail_as_config_errors():
    with pytest.raises(ConfigError):
        LossConfig.from_recipe("ctc", align_clamp=2.0)
    with pytest.raises(ConfigError):
        LossConfig.from_recipe("align", mystery=1)
    with pytest.raises(ConfigError, match="ts-avg:-2"):
        LossConfig.from_recipe("ts-avg:-2", ts={"window": {"lo": 1, "hi": 0}})
    assert LossConfig.from_recipe("align", align_clamp=1e-6).align_clamp == 1e-6


def _context(rng, frames=8, vocab=4, with_teacher=True):
    logits = rng.normal(size=(frames, vocab + 1))
    energies = rng.normal(size=frames)
    features = FeatureSequence(np.tile(energies[:, None], (1, 3)), energies)
    return LossContext(
        log_probs=log_softmax(logits, axis=1),
        posteriorgram=softmax(logits, axis=1),
        logits=logits,
        features=features,
        labels=(1, 0, 2),
        teacher_logits=rng.normal(size=logits.shape) if with_teacher else None,
    )


@pytest.mark.parametrize("seed", range(100))
def test_combined_loss_is_the_term_sum(seed):
    rng = np.random.default_rng(seed)
    context = _context(rng)
    result = compose_loss(LossConfig.from_recipe("ts+align"), context)
    ctc, _ = ctc_loss(context.log_probs, context.labels)
    align, _ = alignment_penalty(context.posteriorgram, silence_mask(context.features))
    ts, _ = ts_frame_loss(context.logits, context.teacher_logits)
    assert result.total == ctc + align + ts
    assert result.terms == {"ctc": ctc, "align": align, "ts": ts}
    assert set(result.grads) == {"log_probs", "posteriorgram", "logits"}


@pytest.mark.parametrize("seed", range(10))
def test_combined_loss_with_teacher_equal_to_student_is_align_loss(seed):
    context = _context(np.random.default_rng(seed))
    context.teacher_logits = context.logits.copy()
    combined = compose_loss(LossConfig.from_recipe("ts+align"), context)
    align = compose_loss(LossConfig.from_recipe("align"), context)
    assert combined.terms["ts"] == 0.0
    assert combined.total == align.total
    assert np.array_equal(combined.grads["logits"], np.zeros_like(context.logits))


def test_compose_loss_applies_weights(rng):
    context = _context(rng)
    config = LossConfig.from_recipe("align", weights={"ctc": 1.0, "align": 0.5, "ts": 1.0})
    result = compose_loss(config, context)
    assert result.terms["align"] == pytest.approx(0.5 * compose_loss(LossConfig.from_recipe("align"), context)
                                                  .terms["align"])


def test_compose_loss_needs_teacher_logits(rng):
    with pytest.raises(MissingInputError):
        compose_loss(LossConfig.from_recipe("ts"), _context(rng, with_teacher=False))


def test_align_loss_gradient_through_softmax(rng):
    logits = Tensor(rng.normal(size=(6, 5)), requires_grad=True)
    energies = rng.normal(size=6)
    features = FeatureSequence(np.tile(energies[:, None], (1, 3)), energies)
    config = LossConfig.from_recipe("align")

    def loss_fn():
        log_probs = nx.log_softmax_rows(logits)
        post = nx.softmax_rows(logits)
        result = compose_loss(config, LossContext(log_probs=log_probs, posteriorgram=post, features=features,
                                                  labels=(0, 3)))
        return nx.attach_loss(result.total, [(log_probs, result.grads["log_probs"]),
                                             (post, result.grads["posteriorgram"])])

    assert gradient_check(loss_fn, logits, probe_count=30, h=1e-5) < 1e-4
