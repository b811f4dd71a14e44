import numpy as np
import pytest

from patchguard import (
    CalibrationProfile,
    ConfigError,
    InputError,
    Verdict,
    detect,
    detect_batch,
    preprocess_image,
)
from patchguard.attention import indicator_at_layer
from patchguard.detector import DetectionFailure
from patchguard.images import save_image
from patchguard.synth import box_filter_bundle, clean_image


def make_profile(bundle, theta, layer="conv1"):
    return CalibrationProfile(
        model_name=bundle.model_name,
        layer=layer,
        tap="post",
        confidence_p=0.95,
        theta=theta,
        n_samples=10,
        created_at="2026-08-24T00:00:00Z",
    )


@pytest.fixture(scope="module")
def bundle():
    return box_filter_bundle(n_convs=2, size=32)


@pytest.fixture(scope="module")
def image():
    return clean_image(3, "probe", size=32)


def image_indicator(bundle, image):
    return np.float32(
        indicator_at_layer(
            preprocess_image(image, bundle.preprocess), bundle, "conv1", "post"
        )
    )


class TestDetect:
    def test_boundary_equal_is_clean(self, bundle, image):
        ind = image_indicator(bundle, image)
        result = detect(image, bundle, make_profile(bundle, float(ind)))
        assert result.verdict == Verdict.CLEAN
        assert result.margin == 0.0

    def test_nextafter_above_theta_is_perturbed(self, bundle, image):
        ind = image_indicator(bundle, image)
        theta = float(np.nextafter(ind, np.float32(-np.inf), dtype=np.float32))
        result = detect(image, bundle, make_profile(bundle, theta))
        assert result.verdict == Verdict.PERTURBED
        assert result.margin > 0.0

    def test_max_f32_theta_dominates(self, bundle, image):
        theta = float(np.finfo(np.float32).max)
        assert detect(image, bundle, make_profile(bundle, theta)).verdict == Verdict.CLEAN

    def test_zero_image_clean_with_positive_theta(self, bundle):
        black = np.zeros((32, 32, 3), dtype=np.uint8)
        result = detect(black, bundle, make_profile(bundle, 0.5))
        assert result.verdict == Verdict.CLEAN
        assert result.indicator == 0.0

    def test_verdict_iff_positive_margin(self, bundle, image):
        ind = image_indicator(bundle, image)
        for theta in (float(ind) * 0.5, float(ind), float(ind) * 2.0):
            r = detect(image, bundle, make_profile(bundle, theta))
            assert (r.verdict == Verdict.PERTURBED) == (r.margin > 0.0)

    def test_model_mismatch_rejected(self, bundle, image):
        profile = make_profile(bundle, 1.0)
        other = box_filter_bundle(n_convs=2, size=32, model_name="othernet")
        with pytest.raises(ConfigError):
            detect(image, other, profile)

    def test_missing_layer_rejected(self, bundle, image):
        with pytest.raises(ConfigError):
            detect(image, bundle, make_profile(bundle, 1.0, layer="conv7"))

    def test_deterministic(self, bundle, image):
        profile = make_profile(bundle, 0.4)
        a = detect(image, bundle, profile, source_id="x")
        b = detect(image, bundle, profile, source_id="x")
        assert a == b


class TestDetectBatch:
    @pytest.fixture
    def corpus(self, tmp_path):
        paths = []
        for i in range(12):
            p = tmp_path / f"img{i:02d}.png"
            save_image(clean_image(21, f"img{i:02d}", size=32), p)
            paths.append(str(p))
        return paths

    def test_batch_of_one_equals_detect(self, bundle, corpus):
        profile = make_profile(bundle, 0.5)
        [batched] = detect_batch(corpus[:1], bundle, profile)
        from patchguard.images import load_image

        single = detect(load_image(corpus[0]), bundle, profile, source_id=corpus[0])
        assert batched == single

    def test_results_in_input_order(self, bundle, corpus):
        profile = make_profile(bundle, 0.5)
        results = detect_batch(corpus, bundle, profile, parallelism=4)
        assert [r.source_id for r in results] == corpus

    def test_permuting_input_permutes_output(self, bundle, corpus):
        profile = make_profile(bundle, 0.5)
        fwd = detect_batch(corpus, bundle, profile)
        rev = detect_batch(corpus[::-1], bundle, profile)
        assert fwd == rev[::-1]

    def test_parallelism_does_not_change_results(self, bundle, corpus):
        profile = make_profile(bundle, 0.5)
        serial = detect_batch(corpus, bundle, profile, parallelism=1)
        parallel = detect_batch(corpus, bundle, profile, parallelism=8)
        assert serial == parallel

    def test_per_image_failure_becomes_entry(self, bundle, corpus, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"junk")
        profile = make_profile(bundle, 0.5)
        results = detect_batch(corpus[:2] + [str(bad)], bundle, profile)
        assert isinstance(results[2], DetectionFailure)
        assert results[2].source_id == str(bad)
        assert not isinstance(results[0], DetectionFailure)

    def test_all_failed_raises(self, bundle, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"junk")
        with pytest.raises(InputError):
            detect_batch([str(bad)], bundle, make_profile(bundle, 0.5))

    def test_bad_parallelism(self, bundle, corpus):
        with pytest.raises(ConfigError):
            detect_batch(corpus, bundle, make_profile(bundle, 0.5), parallelism=0)
