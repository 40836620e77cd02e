import numpy as np
import pytest
from pydantic import ValidationError

from phonalign.data import (CorpusConfig, Edit, Lexicon, SplitCounts, apply_edits, generate_corpus, generate_split,
                            inject_mispronunciation, load_corpus, phoneme_prototypes, save_corpus,
                            synthesize_utterance, to_ids, to_symbols)
from phonalign.data.config import EditRates
from phonalign.errors import CheckpointFormatError, ConfigError, ShapeError, UnknownWordError
from phonalign.losses import silence_mask
from phonalign.metrics import edit_distance


def test_lexicon():
    lexicon = Lexicon.from_arpabet()
    assert to_symbols(lexicon["thrower"]) == "TH R OW ER"
    assert lexicon.vocab_size == 39
    assert "brower" in lexicon
    with pytest.raises(UnknownWordError):
        lexicon["xylophone"]
    with pytest.raises(KeyError):
        lexicon["xylophone"]
    with pytest.raises(ConfigError):
        to_ids("TH QQ")
    with pytest.raises(ConfigError):
        Lexicon.from_arpabet({"silent": ""})


def test_apply_edits():
    original = (1, 2, 3)
    edits = [Edit("insert", 0, 9), Edit("substitute", 1, 7), Edit("delete", 2), Edit("insert", 3, 8)]
    assert apply_edits(original, edits) == (9, 1, 7, 8)


def test_injection_without_edits(rng):
    edited, edits = inject_mispronunciation((4, 5, 6), rng, {"substitute": 0.0, "delete": 0.0, "insert": 0.0})
    assert edited == (4, 5, 6) and edits == []


def test_full_substitution_changes_every_position(rng):
    original = (4, 5, 6, 4)
    edited, edits = inject_mispronunciation(original, rng, EditRates(substitute=1.0, delete=0.0, insert=0.0))
    assert len(edited) == len(original)
    assert edit_distance(edited, original).distance == len(original)
    assert all(e.op == "substitute" for e in edits)


def test_edit_record_rebuilds_sequence():
    for seed in range(50):
        rng = np.random.default_rng(seed)
        original = tuple(int(p) for p in rng.integers(0, 39, size=int(rng.integers(1, 7))))
        edited, edits = inject_mispronunciation(original, rng, EditRates(substitute=0.3, delete=0.3, insert=0.3))
        assert apply_edits(original, edits) == edited


def test_injection_errors(rng):
    with pytest.raises(ConfigError):
        inject_mispronunciation((1, 2), rng, {"substitute": 1.5, "delete": 0.0, "insert": 0.0})
    with pytest.raises(ShapeError):
        inject_mispronunciation((), rng, EditRates())


def test_prototypes_are_fixed_and_separated():
    a = phoneme_prototypes(0, 40, 1.0, 1.0, 1.0)
    b = phoneme_prototypes(0, 40, 1.0, 1.0, 1.0)
    assert np.array_equal(a, b) and a.shape == (39, 40)
    assert np.allclose(a.mean(axis=1), 1.0)
    diffs = a[:, None, :] - a[None, :, :]
    distances = np.sqrt((diffs ** 2).sum(axis=-1)) + np.eye(39) * 1e9
    assert distances.min() >= 1.0


def test_correct_utterance_ground_truth(rng, tiny_corpus_config):
    utt = synthesize_utterance(rng, "thrower", 1, tiny_corpus_config)
    assert utt.spoken == utt.canonical == to_ids("TH R OW ER")
    assert utt.is_correct and utt.edits == []
    assert len(utt.boundaries) == 4
    assert utt.base_frames.shape == (3 * utt.num_frames, tiny_corpus_config.base_dim)
    assert utt.features.dim == tiny_corpus_config.stacked_dim
    speech = np.zeros(utt.num_frames, dtype=bool)
    for onset, offset in utt.boundaries:
        speech[onset:offset + 1] = True
    assert np.array_equal(utt.silence_truth, ~speech)
    lo, hi = tiny_corpus_config.silence_pad_range
    assert lo <= utt.boundaries[0][0] <= hi
    assert np.array_equal(utt.onset_frames(), [b[0] for b in utt.boundaries])


def test_other_word_utterance(rng, tiny_corpus_config):
    utt = synthesize_utterance(rng, "cat", 3, tiny_corpus_config)
    assert utt.said_word is not None and utt.said_word != "cat"
    assert utt.spoken != utt.canonical
    assert len(utt.boundaries) == len(utt.spoken)


def test_noise_segment_is_silence_in_truth(rng, tiny_corpus_config):
    utt = synthesize_utterance(rng, "dog", 4, tiny_corpus_config)
    assert utt.spoken == utt.canonical
    assert utt.silence_truth[:utt.boundaries[0][0]].all()
    lo, hi = tiny_corpus_config.silence_pad_range
    assert utt.boundaries[0][0] >= lo + tiny_corpus_config.puff_range[0]


def test_mispronounced_utterance_records_edits(tiny_corpus_config):
    for seed in range(20):
        utt = synthesize_utterance(np.random.default_rng(seed), "pencil", 2, tiny_corpus_config)
        assert apply_edits(utt.canonical, utt.edits) == utt.spoken
        assert utt.spoken
        assert len(utt.boundaries) == len(utt.spoken)


def test_synthesis_errors(rng, tiny_corpus_config):
    with pytest.raises(ConfigError):
        synthesize_utterance(rng, "cat", 5, tiny_corpus_config)
    with pytest.raises(UnknownWordError):
        synthesize_utterance(rng, "xylophone", 1, tiny_corpus_config)


def test_energy_silence_mask_finds_generated_silence(tiny_corpus_config):
    corpus = generate_corpus(tiny_corpus_config.model_copy(update={"noise_std": 0.1}))
    for utt in corpus.train:
        assert np.array_equal(silence_mask(utt.features).is_silence, utt.silence_truth)


def test_corpus_splits(tiny_corpus, tiny_corpus_config):
    assert tiny_corpus.train and all(u.quality_label == 1 for u in tiny_corpus.train)
    assert len(tiny_corpus.train) + tiny_corpus.dropped_train == tiny_corpus_config.counts.train
    assert len(tiny_corpus.dev) == 3 and len(tiny_corpus.test) == 6
    assert tiny_corpus.test[0].id == "test-00000"
    train_speakers = {u.speaker for u in tiny_corpus.train}
    test_speakers = {u.speaker for u in tiny_corpus.test}
    assert not train_speakers & test_speakers
    with pytest.raises(ConfigError):
        tiny_corpus.split("holdout")


def test_generation_is_seeded_and_worker_independent(tiny_corpus, tiny_corpus_config):
    threaded = generate_corpus(tiny_corpus_config, workers=3)
    for a, b in zip(tiny_corpus, threaded):
        assert a.id == b.id and a.spoken == b.spoken
        assert np.array_equal(a.base_frames, b.base_frames)
    other = generate_corpus(tiny_corpus_config.model_copy(update={"seed": 4}))
    assert any(a.base_frames.shape != b.base_frames.shape or not np.array_equal(a.base_frames, b.base_frames)
               for a, b in zip(tiny_corpus.test, other.test))


def test_corpus_persistence(tiny_corpus, tmp_path):
    save_corpus(tiny_corpus, tmp_path / "corpus")
    loaded = load_corpus(tmp_path / "corpus")
    assert loaded.config == tiny_corpus.config
    assert len(loaded) == len(tiny_corpus)
    for a, b in zip(tiny_corpus, loaded):
        assert (a.id, a.word, a.canonical, a.spoken, a.quality_label) == (b.id, b.word, b.canonical, b.spoken,
                                                                           b.quality_label)
        assert a.boundaries == b.boundaries and a.edits == b.edits and a.said_word == b.said_word
        assert np.array_equal(a.base_frames, b.base_frames)
        assert np.array_equal(a.features.frames, b.features.frames)
        assert np.array_equal(a.silence_truth, b.silence_truth)


def test_load_corpus_without_manifest(tmp_path):
    with pytest.raises(CheckpointFormatError):
        load_corpus(tmp_path)


def test_corpus_config_validation():
    with pytest.raises(ValidationError):
        CorpusConfig(label_distribution=(0.5, 0.5, 0.5, 0.0))
    with pytest.raises(ValidationError):
        CorpusConfig(phoneme_duration_range=(4, 2))
    with pytest.raises(ValidationError):
        CorpusConfig(unknown_key=1)


def test_edit_count_bounds_edit_distance():
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        original = tuple(int(p) for p in rng.integers(0, 39, size=int(rng.integers(1, 8))))
        rates = EditRates(substitute=float(rng.random()), delete=float(rng.random()), insert=float(rng.random()))
        edited, edits = inject_mispronunciation(original, rng, rates)
        assert edit_distance(edited, original).distance <= len(edits), seed


def test_noiseless_correct_utterance_is_piecewise_prototypes():
    config = CorpusConfig(noise_std=0.0)
    lexicon = config.build_lexicon()
    prototypes = phoneme_prototypes(config.seed, config.base_dim, config.prototype_spread,
                                    config.prototype_min_distance, config.speech_energy)
    for seed, word in enumerate(lexicon.sorted_words()):
        utt = synthesize_utterance(np.random.default_rng(seed), word, 1, config, lexicon=lexicon)
        frames = utt.features.frames
        for phoneme, (onset, offset) in zip(utt.spoken, utt.boundaries):
            assert np.array_equal(frames[onset:offset + 1],
                                  np.tile(np.tile(prototypes[phoneme], 3), (offset - onset + 1, 1)))
        assert (frames[utt.silence_truth] == config.silence_energy).all()
        assert np.array_equal(silence_mask(utt.features).is_silence, utt.silence_truth)


def test_speech_is_louder_than_silence_in_every_correct_utterance():
    config = CorpusConfig()
    lexicon = config.build_lexicon()
    words = lexicon.sorted_words()
    for seed in range(1000):
        utt = synthesize_utterance(np.random.default_rng(seed), words[seed % len(words)], 1, config,
                                   lexicon=lexicon)
        energies = utt.features.energies
        assert energies[~utt.silence_truth].mean() > energies[utt.silence_truth].mean(), seed


@pytest.mark.parametrize("noise_std, floor", [(0.0, 0.95), (CorpusConfig().noise_std, 0.85)])
def test_silence_mask_agrees_with_generated_silence(noise_std, floor):
    agree = total = 0
    for seed in range(3):
        config = CorpusConfig(counts=SplitCounts(train=0, dev=0, test=150), noise_std=noise_std, seed=seed)
        for utt in generate_split(config, "test"):
            agree += int((silence_mask(utt.features).is_silence == utt.silence_truth).sum())
            total += utt.num_frames
    assert agree / total >= floor


def test_default_label_distribution_is_mostly_correct():
    config = CorpusConfig(counts=SplitCounts(train=0, dev=10_000, test=0), base_dim=2,
                          prototype_min_distance=0.0)
    labels = np.array([u.quality_label for u in generate_split(config, "dev")])
    assert config.label_distribution[0] == 0.80
    assert abs(np.mean(labels == 1) - 0.80) <= 0.02
    assert set(labels.tolist()) == {1, 2, 3, 4}
