import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scalar_blur_oracle
from vidue.degradation import (
    ExposureConfig,
    SequenceLibrary,
    exposure_center_index,
    load_frame,
    make_sample,
    save_frame,
    synthesize_blur,
    synthesize_dataset,
)
from vidue.errors import ConfigError, DataError


def ramp_sequence(frames, height=4, width=4):
    """Frame i has constant value (i+1)/10 everywhere."""
    seq = np.zeros((frames, 3, height, width), dtype=np.float32)
    for i in range(frames):
        seq[i] = (i + 1) / 10.0
    return seq


class TestExposureConfig:
    def test_validation(self):
        ExposureConfig(8, 8, 4)  # zero effective readout is legal
        with pytest.raises(ConfigError):
            ExposureConfig(8, 0, 4)
        with pytest.raises(ConfigError):
            ExposureConfig(8, 9, 4)
        with pytest.raises(ConfigError):
            ExposureConfig(0, 1, 4)
        with pytest.raises(ConfigError):
            ExposureConfig(8, 5, 0)

    def test_readout_is_derived(self):
        assert ExposureConfig(8, 5).readout == 3
        assert ExposureConfig(8, 8).readout == 0


class TestSynthesizeBlur:
    def test_constant_sequence(self):
        seq = np.full((8, 3, 4, 4), 0.4, dtype=np.float32)
        for e in (1, 3, 8):
            out = synthesize_blur(seq, ExposureConfig(8, e, 1), 0)
            np.testing.assert_allclose(out, 0.4, atol=1e-7)

    def test_single_frame_exposure_is_identity(self):
        rng = np.random.default_rng(0)
        seq = rng.random((16, 3, 4, 4)).astype(np.float32)
        cfg = ExposureConfig(8, 1, 2)
        np.testing.assert_array_equal(synthesize_blur(seq, cfg, 1), seq[8])

    def test_hand_computed_mean(self):
        seq = ramp_sequence(8)
        out = synthesize_blur(seq, ExposureConfig(8, 4, 1), 0)
        np.testing.assert_allclose(out, 0.25, atol=1e-7)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(7)
        seq = rng.random((16, 3, 8, 8)).astype(np.float32)
        cfg = ExposureConfig(8, 5, 2)
        out = synthesize_blur(seq, cfg, 1)
        expected = scalar_blur_oracle(seq, 8, 5, 1)
        np.testing.assert_allclose(out, expected, atol=1e-7)

    def test_window_out_of_range(self):
        seq = ramp_sequence(8)
        with pytest.raises(IndexError):
            synthesize_blur(seq, ExposureConfig(8, 5, 1), 1)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        x = rng.random((8, 3, 4, 4)).astype(np.float32)
        y = rng.random((8, 3, 4, 4)).astype(np.float32)
        cfg = ExposureConfig(4, 3, 1)
        a, b = 0.3, 0.6
        left = synthesize_blur(a * x + b * y, cfg, 0)
        right = a * synthesize_blur(x, cfg, 0) + b * synthesize_blur(y, cfg, 0)
        np.testing.assert_allclose(left, right, atol=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(
        shutter=st.integers(1, 8),
        data=st.data(),
    )
    def test_monotone_bounds_property(self, shutter, data):
        exposure = data.draw(st.integers(1, shutter))
        rng = np.random.default_rng(data.draw(st.integers(0, 10_000)))
        seq = rng.random((2 * shutter, 3, 3, 3)).astype(np.float32)
        cfg = ExposureConfig(shutter, exposure, 1)
        for t in (0, 1):
            out = synthesize_blur(seq, cfg, t)
            window = seq[t * shutter : t * shutter + exposure]
            assert (out >= window.min(axis=0) - 1e-6).all()
            assert (out <= window.max(axis=0) + 1e-6).all()

    def test_windows_spaced_by_shutter(self):
        # Consecutive t windows start exactly `shutter` frames apart; with
        # exposure == shutter they partition the sequence.
        rng = np.random.default_rng(11)
        seq = rng.random((16, 3, 2, 2)).astype(np.float32)
        cfg = ExposureConfig(4, 4, 1)
        for t in range(4):
            out = synthesize_blur(seq, cfg, t)
            np.testing.assert_allclose(out, seq[4 * t : 4 * t + 4].mean(axis=0), atol=1e-7)


class TestMakeSample:
    def test_paper_scale_shapes(self):
        rng = np.random.default_rng(2)
        seq = rng.random((32, 3, 8, 8)).astype(np.float32)
        sample = make_sample(seq, ExposureConfig(8, 5, 4), 0)
        assert sample.blurred.shape == (4, 3, 8, 8)
        assert sample.sharp_targets.shape == (32, 3, 8, 8)

    def test_identity_degradation(self):
        rng = np.random.default_rng(4)
        seq = rng.random((4, 3, 4, 4)).astype(np.float32)
        sample = make_sample(seq, ExposureConfig(1, 1, 1), 2)
        np.testing.assert_array_equal(sample.blurred, sample.sharp_targets)
        np.testing.assert_array_equal(sample.blurred[0], seq[2])

    def test_matches_hand_loop(self):
        seq = ramp_sequence(8)
        sample = make_sample(seq, ExposureConfig(4, 3, 2), 0)
        # window 0: frames 0..2 -> (1+2+3)/30; window 1: frames 4..6 -> (5+6+7)/30
        np.testing.assert_allclose(sample.blurred[0], 0.2, atol=1e-7)
        np.testing.assert_allclose(sample.blurred[1], 0.6, atol=1e-7)
        np.testing.assert_array_equal(sample.sharp_targets, seq)

    def test_unaligned_start_windows(self):
        rng = np.random.default_rng(5)
        seq = rng.random((20, 3, 2, 2)).astype(np.float32)
        sample = make_sample(seq, ExposureConfig(4, 2, 2), 3)
        np.testing.assert_allclose(
            sample.blurred[1], seq[7:9].mean(axis=0), atol=1e-7
        )
        np.testing.assert_array_equal(sample.sharp_targets, seq[3:11])

    def test_insufficient_frames(self):
        seq = ramp_sequence(8)
        with pytest.raises(DataError):
            make_sample(seq, ExposureConfig(4, 2, 2), 1)


class TestExposureCenterIndex:
    @pytest.mark.parametrize(
        "shutter,exposure,t,expected",
        [(8, 5, 0, 2), (8, 7, 3, 27), (16, 9, 1, 20)],
    )
    def test_odd_centers(self, shutter, exposure, t, expected):
        assert exposure_center_index(ExposureConfig(shutter, exposure, 4), t) == expected

    def test_even_uses_lower_median(self):
        assert exposure_center_index(ExposureConfig(8, 4, 4), 0) == 1
        assert exposure_center_index(ExposureConfig(8, 2, 4), 1) == 8


class TestIO:
    def test_frame_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        frame = np.round(rng.random((3, 6, 5)) * 255) / 255
        path = tmp_path / "frame.png"
        save_frame(path, frame.astype(np.float32))
        loaded = load_frame(path)
        np.testing.assert_allclose(loaded, frame, atol=1 / 255 / 2)

    def test_library_and_dataset_layout(self, tmp_path):
        rng = np.random.default_rng(8)
        root = tmp_path / "sharp"
        for name in ("seq_a", "seq_b"):
            for i in range(8):
                save_frame(root / name / f"{i:06d}.png", rng.random((3, 16, 16)))
        lib = SequenceLibrary.from_directory(root)
        assert lib.names == ["seq_a", "seq_b"]
        assert lib.sequences[0].shape == (8, 3, 16, 16)

        out = tmp_path / "blurred"
        manifest = synthesize_dataset(root, out, shutter=4, exposures=[1, 3], window=2)
        assert (out / "seq_a" / "blur_S4_E3" / "000000.png").is_file()
        assert (out / "seq_b" / "blur_S4_E1" / "000001.png").is_file()
        import json

        data = json.loads(manifest.read_text())
        assert len(data["samples"]) == 4  # 2 sequences x 2 exposures x 1 sample
        record = data["samples"][0]
        assert set(record) == {"source_id", "start", "shutter", "exposure", "frames"}
        assert len(record["frames"]) == 2

    def test_synthesized_frames_match_direct_synthesis(self, tmp_path):
        rng = np.random.default_rng(9)
        root = tmp_path / "sharp"
        seq = rng.random((8, 3, 12, 12)).astype(np.float32)
        for i in range(8):
            save_frame(root / "seq" / f"{i:06d}.png", seq[i])
        out = tmp_path / "blurred"
        synthesize_dataset(root, out, shutter=4, exposures=[3], window=2)
        reloaded = np.stack([load_frame(p) for p in sorted((root / "seq").iterdir())])
        expected = synthesize_blur(reloaded, ExposureConfig(4, 3, 2), 1)
        got = load_frame(out / "seq" / "blur_S4_E3" / "000001.png")
        np.testing.assert_allclose(got, expected, atol=1 / 255)
