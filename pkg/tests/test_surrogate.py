import itertools
import math

import numpy as np
import pytest

from mindful.baseline import RandomSamplerConfig, generate_random
from mindful.classifier import FunctionClassifier, LinearClass, LinearClassifier
from mindful.core import ContractViolation, MaskVector
from mindful.sampler import MindfulConfig, generate
from mindful.surrogate import (SurrogateConfig, explain, explain_top_classes, fit,
                               proximity_weight, result_from_dict, result_to_dict,
                               rle_decode, rle_encode)

from conftest import (accept_all_classifier, quadrant_segmap, strip_segmap,
                      textured_image)


def all_masks(length):
    return [MaskVector.from_bits(bits)
            for bits in itertools.product((0, 1), repeat=length)]


def wls_oracle(masks, responses, weights):
    """Independent weighted least squares via lstsq on the rescaled system."""
    m = np.asarray([mask.bits for mask in masks], dtype=float)
    x = np.hstack([np.ones((m.shape[0], 1)), m])
    sw = np.sqrt(np.asarray(weights))
    beta, *_ = np.linalg.lstsq(x * sw[:, None], np.asarray(responses) * sw, rcond=None)
    return beta[1:], beta[0]


class TestProximityWeight:
    def test_all_ones_weight_one(self):
        assert proximity_weight(MaskVector.all_active(6), SurrogateConfig()) == 1.0

    def test_two_zeros_of_four(self):
        # cosine similarity sqrt(2/4), d = 1 - 0.70711, w = exp(-d^2 / 0.0625)
        w = proximity_weight(MaskVector.from_bits([1, 1, 0, 0]), SurrogateConfig())
        d = 1 - math.sqrt(0.5)
        assert w == pytest.approx(math.exp(-(d * d) / 0.0625), abs=1e-12)
        assert w == pytest.approx(0.2535, abs=1e-4)

    def test_all_zeros_convention(self):
        w = proximity_weight(MaskVector.from_bits([0, 0, 0]), SurrogateConfig())
        assert w == pytest.approx(math.exp(-16.0), rel=1e-12)


class TestFit:
    def test_recovers_planted_linear_response(self):
        # y = 0.1 + 0.8 * m[2] over all 8 masks of length 3
        masks = all_masks(3)
        responses = [0.1 + 0.8 * m.bits[2] for m in masks]
        cfg = SurrogateConfig(ridge_lambda=1e-6)
        coef, intercept = fit(masks, responses, cfg)
        oracle_coef, oracle_int = wls_oracle(
            masks, responses, [proximity_weight(m, cfg) for m in masks])
        assert coef[2] == pytest.approx(0.8, abs=1e-4)
        assert coef[0] == pytest.approx(0.0, abs=1e-4)
        assert coef[1] == pytest.approx(0.0, abs=1e-4)
        assert intercept == pytest.approx(0.1, abs=1e-4)
        assert np.allclose(coef, oracle_coef, atol=1e-4)
        assert intercept == pytest.approx(oracle_int, abs=1e-4)

    def test_constant_responses(self):
        masks = all_masks(3)
        coef, intercept = fit(masks, [0.3] * len(masks), SurrogateConfig())
        assert np.allclose(coef, 0.0, atol=1e-9)
        assert intercept == pytest.approx(0.3, abs=1e-9)

    def test_full_duplication_is_a_no_op(self):
        masks = all_masks(3)[:5]
        responses = [0.2, 0.4, 0.6, 0.8, 0.5]
        cfg = SurrogateConfig(ridge_lambda=0.5)
        coef_dup, int_dup = fit(masks + masks, responses + responses, cfg)
        coef_single, int_single = fit(masks, responses, cfg)
        assert np.allclose(coef_dup, coef_single, atol=1e-12)
        assert int_dup == pytest.approx(int_single, abs=1e-12)

    def test_duplicated_row_equals_doubled_weight(self):
        # independent normal-equations oracle with explicit per-row weights
        def ridge_oracle(masks, responses, weights, lam):
            m = np.asarray([mk.bits for mk in masks], dtype=float)
            x = np.hstack([np.ones((len(masks), 1)), m])
            w = np.asarray(weights, dtype=float)
            w = w / w.sum()
            a = (x * w[:, None]).T @ x
            a[1:, 1:] += lam * np.eye(m.shape[1])
            b = (x * w[:, None]).T @ np.asarray(responses, dtype=float)
            beta = np.linalg.solve(a, b)
            return beta[1:], beta[0]

        cfg = SurrogateConfig(ridge_lambda=0.25)
        masks = all_masks(3)
        rng = np.random.Generator(np.random.PCG64(8))
        responses = list(rng.uniform(0.1, 0.9, len(masks)))
        duplicated = masks + [masks[2], masks[5]]
        dup_responses = responses + [responses[2], responses[5]]
        coef, intercept = fit(duplicated, dup_responses, cfg)
        weights = [proximity_weight(m, cfg) for m in masks]
        weights[2] *= 2
        weights[5] *= 2
        oracle_coef, oracle_int = ridge_oracle(masks, responses, weights,
                                               cfg.ridge_lambda)
        assert np.allclose(coef, oracle_coef, atol=1e-12)
        assert intercept == pytest.approx(oracle_int, abs=1e-12)

    def test_weight_scale_invariance(self, monkeypatch):
        # multiplying every sample weight by a positive constant must leave
        # the solution unchanged (the fit normalizes weights to sum 1)
        import mindful.surrogate as surrogate_module
        masks = all_masks(4)
        rng = np.random.Generator(np.random.PCG64(3))
        responses = rng.uniform(0.1, 0.9, len(masks))
        base = fit(masks, responses, SurrogateConfig(ridge_lambda=0.1))
        original = surrogate_module.proximity_weights
        monkeypatch.setattr(surrogate_module, "proximity_weights",
                            lambda ms, cfg: 7.25 * original(ms, cfg))
        scaled = fit(masks, responses, SurrogateConfig(ridge_lambda=0.1))
        assert np.allclose(base[0], scaled[0], atol=1e-12)
        assert base[1] == pytest.approx(scaled[1], abs=1e-12)

    def test_permutation_invariant_solution(self):
        masks = all_masks(3)
        responses = [0.1 + 0.6 * m.bits[0] + 0.2 * m.bits[1] for m in masks]
        perm = list(reversed(range(len(masks))))
        coef_a, int_a = fit(masks, responses, SurrogateConfig(ridge_lambda=1e-3))
        coef_b, int_b = fit([masks[i] for i in perm], [responses[i] for i in perm],
                            SurrogateConfig(ridge_lambda=1e-3))
        assert np.allclose(coef_a, coef_b, atol=1e-10)
        assert int_a == pytest.approx(int_b, abs=1e-10)

    def test_too_few_samples(self):
        with pytest.raises(ContractViolation):
            fit([MaskVector.from_bits([1, 0])], [0.5], SurrogateConfig())

    def test_singular_without_ridge(self):
        masks = [MaskVector.from_bits([1, 0]), MaskVector.from_bits([1, 0]),
                 MaskVector.from_bits([1, 0])]
        with pytest.raises(ContractViolation, match="ridge_lambda"):
            fit(masks, [0.1, 0.2, 0.3], SurrogateConfig(ridge_lambda=0.0))

    def test_response_range_validated(self):
        with pytest.raises(ContractViolation):
            fit(all_masks(2), [0.5, 1.5, 0.5, 0.5], SurrogateConfig())

    def test_kernel_underflow_is_reported(self):
        masks = [MaskVector.from_bits([0] * 64),
                 MaskVector.from_bits([0] * 63 + [1])]
        with pytest.raises(ContractViolation, match="kernel_width"):
            fit(masks, [0.1, 0.2], SurrogateConfig(kernel_width=1e-3))


class TestExplain:
    def _setup(self, seed=0):
        segmap = quadrant_segmap(8)
        image = textured_image(segmap, seed=seed)
        return image, segmap

    def test_linear_classifier_dominant_weight(self):
        image, segmap = self._setup()
        clf = LinearClassifier(segmap, [LinearClass("t", (0.2, 3.0, 0.2, 0.2), -1.0)])
        masks = generate_random(4, RandomSamplerConfig(num_samples=200, rng_seed=4))
        result = explain(masks, image, segmap, "t", clf, top_k=1, cfg=SurrogateConfig())
        assert result.selected_top_k == (1,)
        assert result.ranked_superpixels[0] == 1

    def test_top_k_equal_to_segments_covers_image(self):
        image, segmap = self._setup(seed=2)
        masks = all_masks(4)
        responses = [0.05 + 0.1 * m.bits[0] + 0.2 * m.bits[1]
                     + 0.15 * m.bits[2] + 0.25 * m.bits[3] for m in masks]
        result = explain(masks, image, segmap, "t", accept_all_classifier(),
                         top_k=4, cfg=SurrogateConfig(ridge_lambda=1e-6),
                         responses=responses)
        assert set(result.selected_top_k) == {0, 1, 2, 3}
        assert result.explanation_pixel_mask.set_count == 64

    def test_all_nonpositive_coefficients_warns_empty(self):
        image, segmap = self._setup(seed=3)
        masks = all_masks(4)
        responses = [0.9 - 0.2 * m.bits[0] - 0.1 * m.bits[1]
                     - 0.15 * m.bits[2] - 0.05 * m.bits[3] for m in masks]
        with pytest.warns(UserWarning, match="no positive coefficients"):
            result = explain(masks, image, segmap, "t", accept_all_classifier(),
                             top_k=2, cfg=SurrogateConfig(ridge_lambda=1e-6),
                             responses=responses)
        assert result.selected_top_k == ()
        assert result.explanation_pixel_mask.is_empty()

    def test_pixel_mask_is_exact_union(self):
        image, segmap = self._setup(seed=4)
        masks = all_masks(4)
        responses = [0.1 + 0.4 * m.bits[2] + 0.3 * m.bits[0] for m in masks]
        result = explain(masks, image, segmap, "t", accept_all_classifier(),
                         top_k=2, cfg=SurrogateConfig(ridge_lambda=1e-6),
                         responses=responses)
        assert set(result.selected_top_k) == {0, 2}
        expected = np.isin(segmap.labels, [0, 2])
        assert np.array_equal(result.explanation_pixel_mask.bits, expected)

    def test_mindful_table_reuses_cached_responses(self):
        segmap = strip_segmap(3)
        image = textured_image(segmap, seed=5)
        calls = []

        def fn(im):
            calls.append(1)
            return {"t": 0.8}

        clf = FunctionClassifier(["t"], fn)
        table = generate(image, segmap, "t", clf, MindfulConfig(0.5, max_level=2))
        before = len(calls)
        explain(table, image, segmap, "t", clf, top_k=1, cfg=SurrogateConfig())
        assert len(calls) == before  # no re-classification

    def test_top_k_validation(self):
        image, segmap = self._setup()
        with pytest.raises(ContractViolation):
            explain(all_masks(4), image, segmap, "t", accept_all_classifier(),
                    top_k=0, cfg=SurrogateConfig())

    def test_dedupe_collapses_duplicate_masks(self):
        image, segmap = self._setup(seed=6)
        masks = all_masks(4)[:6] + all_masks(4)[:3]
        responses = [0.2 + 0.05 * m.bits[3] for m in masks]
        kept = explain(masks, image, segmap, "t", accept_all_classifier(), top_k=1,
                       cfg=SurrogateConfig(), responses=responses)
        deduped = explain(masks, image, segmap, "t", accept_all_classifier(), top_k=1,
                          cfg=SurrogateConfig(), responses=responses, dedupe=True)
        assert kept.sample_count_used == 9
        assert deduped.sample_count_used == 6


class TestExplainTopClasses:
    def _classifier(self, segmap):
        # class "a" favors segment 0, class "b" favors segment 3
        return LinearClassifier(segmap, [
            LinearClass("a", (2.0, 0.1, 0.1, 0.1), -0.4),
            LinearClass("b", (0.1, 0.1, 0.1, 2.0), -0.5),
        ])

    def test_single_class(self):
        segmap = quadrant_segmap(8)
        image = textured_image(segmap, seed=7)
        clf = self._classifier(segmap)
        results = explain_top_classes(
            image, segmap, clf, k_classes=1, top_k=1, method="random-baseline",
            random_cfg=RandomSamplerConfig(num_samples=100, rng_seed=1))
        assert len(results) == 1
        assert results[0].class_id == "a"

    def test_more_classes_than_available_warns(self):
        segmap = quadrant_segmap(8)
        image = textured_image(segmap, seed=8)
        clf = self._classifier(segmap)
        with pytest.warns(UserWarning, match="only has"):
            results = explain_top_classes(
                image, segmap, clf, k_classes=3, top_k=1, method="random-baseline",
                random_cfg=RandomSamplerConfig(num_samples=50, rng_seed=1))
        assert len(results) == 2

    def test_deterministic_repeat(self):
        segmap = quadrant_segmap(8)
        image = textured_image(segmap, seed=9)
        clf = self._classifier(segmap)
        kwargs = dict(k_classes=2, top_k=2, method="mindful",
                      mindful_cfg=MindfulConfig(0.2, max_level=2))
        a = explain_top_classes(image, segmap, clf, **kwargs)
        b = explain_top_classes(image, segmap, clf, **kwargs)
        assert [result_to_dict(r) for r in a] == [result_to_dict(r) for r in b]


class TestRle:
    def test_round_trip(self):
        rng = np.random.Generator(np.random.PCG64(10))
        from mindful.core import BinaryPixelMask
        for _ in range(20):
            bits = rng.random((5, 7)) < 0.4
            mask = BinaryPixelMask(width=7, height=5, bits=bits)
            again = rle_decode(rle_encode(mask))
            assert np.array_equal(again.bits, mask.bits)

    def test_result_round_trip(self):
        segmap = quadrant_segmap(8)
        image = textured_image(segmap, seed=11)
        masks = all_masks(4)
        responses = [0.1 + 0.5 * m.bits[1] for m in masks]
        result = explain(masks, image, segmap, "t", accept_all_classifier(), top_k=1,
                         cfg=SurrogateConfig(ridge_lambda=1e-6), responses=responses)
        doc = result_to_dict(result)
        again = result_from_dict(doc)
        assert again.selected_top_k == result.selected_top_k
        assert np.array_equal(again.explanation_pixel_mask.bits,
                              result.explanation_pixel_mask.bits)
        assert np.allclose(again.coefficients, result.coefficients)
