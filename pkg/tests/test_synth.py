import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condflow.conditioning import PhonemeTrack
from condflow.errors import ConfigError, ContractError, DensityError
from condflow.metrics import onset_accuracy, token_error_rate
from condflow.synth import (
    DataConfig, PatternDictionary, SampleStream, SyntheticSample, gen_sound_sample, gen_speech_sample,
    matched_filter_scores, mix_samples, oracle_decode_tokens, oracle_detect_onsets,
)

CFG = DataConfig()
PAT = PatternDictionary.build(CFG)


def test_pattern_subspaces_are_disjoint():
    assert not (PAT.sound @ PAT.tokens.T).any()
    np.testing.assert_allclose(np.linalg.norm(PAT.sound, axis=1), 1.0)
    np.testing.assert_allclose(np.linalg.norm(PAT.tokens, axis=1), 1.0)


def test_pattern_dictionary_is_seeded():
    a, b = PatternDictionary.build(CFG), PatternDictionary.build(DataConfig(pattern_seed=1))
    np.testing.assert_array_equal(a.tokens, PAT.tokens)
    assert not np.array_equal(a.tokens, b.tokens)


def test_clean_event_scores_one():
    s = gen_sound_sample(np.random.default_rng(0), 1, 4, CFG, PAT, noise=0.0)
    scores = matched_filter_scores(s.latent, PAT)
    e, c = s.event_times[0], s.event_classes[0]
    assert scores[e, c] == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(0, 3))
def test_sound_oracle_roundtrip(seed, n_events):
    s = gen_sound_sample(np.random.default_rng(seed), n_events, 4, CFG, PAT)
    det = oracle_detect_onsets(s.latent, PAT)
    assert onset_accuracy([f for f, _ in det], s.event_times) == 1.0
    assert [c for _, c in det] == list(s.event_classes)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 12), st.booleans())
def test_speech_oracle_roundtrip(seed, n_tokens, video):
    s = gen_speech_sample(np.random.default_rng(seed), n_tokens, 8, 4, video, CFG, PAT)
    assert oracle_decode_tokens(s.latent, s.track, PAT) == list(s.track.tokens)
    assert s.task == ("VisualTTS" if video else "TTS")


@pytest.mark.parametrize("mode", ["concat", "overlay"])
def test_mix_oracle_roundtrip(mode):
    stream = SampleStream(CFG)
    for i in range(30):
        r = np.random.default_rng(i)
        m = mix_samples(stream.draw("V2S", r), stream.draw("VisualTTS", r), mode, r, CFG.window)
        det = oracle_detect_onsets(m.latent, PAT)
        assert onset_accuracy([f for f, _ in det], m.event_times) == 1.0
        if m.track is not None:
            assert token_error_rate(oracle_decode_tokens(m.latent, m.track, PAT), m.track.tokens) == 0.0


def test_mix_concat_edge_splits():
    stream = SampleStream(CFG)
    r = np.random.default_rng(3)
    a, b = stream.draw("V2S", r), stream.draw("TTS", r)
    whole_a = mix_samples(a, b, "concat", r, CFG.window, split=CFG.T_a)
    np.testing.assert_array_equal(whole_a.latent, a.latent)
    assert whole_a.track is None and whole_a.event_times == a.event_times
    whole_b = mix_samples(a, b, "concat", r, CFG.window, split=0)
    np.testing.assert_array_equal(whole_b.latent, b.latent)
    assert whole_b.event_times == () and whole_b.track.tokens == b.track.tokens


def test_mix_rejects_bad_inputs():
    stream = SampleStream(CFG)
    r = np.random.default_rng(0)
    a = gen_sound_sample(r, 1, 4, CFG, PAT)
    b = stream.draw("TTS", r)
    with pytest.raises(ContractError):
        mix_samples(b, a, "concat", r)
    with pytest.raises(ContractError):
        mix_samples(a, b, "blend", r)
    with pytest.raises(ContractError):
        mix_samples(a, b, "concat", r, CFG.window, split=a.event_times[0] + 1)


def test_density_error():
    with pytest.raises(DensityError):
        gen_sound_sample(np.random.default_rng(0), CFG.T_a // CFG.window + 1, 4, CFG, PAT)
    s = gen_sound_sample(np.random.default_rng(0), CFG.T_a // CFG.window, 4, CFG, PAT)
    assert len(s.event_times) == CFG.T_a // CFG.window


def test_speech_duration_overflow_truncates():
    s = gen_speech_sample(np.random.default_rng(0), 40, 8, 4, False, CFG, PAT)
    assert sum(s.track.durations) <= CFG.T_a


def test_tts_has_no_video_and_v2s_no_transcript(stream):
    r = np.random.default_rng(0)
    assert not stream.draw("TTS", r).video_raw.any()
    assert stream.draw("V2S", r).track is None
    with pytest.raises(ContractError):
        SyntheticSample("V2S", np.zeros((16, 16)), np.zeros((64, 8)), track=PhonemeTrack((1,), (1,)))


def test_draw_set_deterministic(stream):
    a, b = stream.draw_set("MIX", 5, 9), stream.draw_set("MIX", 5, 9)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.latent, y.latent)
        np.testing.assert_array_equal(x.video_raw, y.video_raw)
    assert not np.array_equal(a[0].latent, stream.draw_set("MIX", 1, 10)[0].latent)


def test_chance_token_error_rate():
    r = np.random.default_rng(0)
    ters = [token_error_rate(r.integers(0, 8, 10).tolist(), r.integers(0, 8, 10).tolist()) for _ in range(1000)]
    assert np.mean(ters) == pytest.approx(0.875, abs=0.05)


def test_data_config_validation_and_roundtrip():
    with pytest.raises(ConfigError):
        DataConfig(D_a=1)
    with pytest.raises(ConfigError):
        DataConfig(min_duration=5, max_duration=2)
    with pytest.raises(ConfigError):
        DataConfig.from_dict({"bogus": 1})
    cfg = DataConfig(vocab=6)
    assert DataConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        SampleStream(cfg).draw("Music", np.random.default_rng(0))
