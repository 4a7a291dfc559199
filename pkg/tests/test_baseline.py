import numpy as np
import pytest

from mindful.baseline import (RandomSamplerConfig, generate_random, load_masks,
                              save_masks)
from mindful.core import ContractViolation


class TestGenerateRandom:
    def test_single_sample_is_all_ones(self):
        masks = generate_random(5, RandomSamplerConfig(num_samples=1, rng_seed=1))
        assert len(masks) == 1
        assert masks[0].bits.tolist() == [1] * 5

    def test_first_mask_always_all_ones(self):
        masks = generate_random(7, RandomSamplerConfig(num_samples=50, rng_seed=3))
        assert masks[0].bits.tolist() == [1] * 7

    def test_seeded_reproducibility(self):
        cfg = RandomSamplerConfig(num_samples=64, rng_seed=123)
        a = generate_random(9, cfg)
        b = generate_random(9, cfg)
        assert [m.bits.tobytes() for m in a] == [m.bits.tobytes() for m in b]

    def test_different_seeds_differ(self):
        a = generate_random(9, RandomSamplerConfig(num_samples=64, rng_seed=1))
        b = generate_random(9, RandomSamplerConfig(num_samples=64, rng_seed=2))
        assert [m.bits.tobytes() for m in a] != [m.bits.tobytes() for m in b]

    def test_shapes_at_table_scale(self):
        masks = generate_random(66, RandomSamplerConfig(num_samples=4000, rng_seed=0))
        assert len(masks) == 4000
        assert all(len(m) == 66 for m in masks)

    def test_activation_rate_within_three_standard_errors(self):
        cfg = RandomSamplerConfig(num_samples=1000, rng_seed=17, bernoulli_p=0.5)
        masks = generate_random(20, cfg)
        draws = np.stack([m.bits for m in masks[1:]])
        n = draws.size
        rate = draws.mean()
        se = np.sqrt(0.5 * 0.5 / n)
        assert abs(rate - 0.5) <= 3 * se

    def test_bernoulli_p_respected(self):
        cfg = RandomSamplerConfig(num_samples=2000, rng_seed=5, bernoulli_p=0.8)
        masks = generate_random(10, cfg)
        rate = np.stack([m.bits for m in masks[1:]]).mean()
        se = np.sqrt(0.8 * 0.2 / (1999 * 10))
        assert abs(rate - 0.8) <= 3 * se

    def test_invalid_config(self):
        with pytest.raises(ContractViolation):
            RandomSamplerConfig(num_samples=0)
        with pytest.raises(ContractViolation):
            RandomSamplerConfig(bernoulli_p=1.0)
        with pytest.raises(ContractViolation):
            generate_random(0, RandomSamplerConfig())


def test_jsonl_round_trip(tmp_path):
    masks = generate_random(6, RandomSamplerConfig(num_samples=10, rng_seed=2))
    path = tmp_path / "masks.jsonl"
    save_masks(masks, path)
    loaded = load_masks(path)
    assert [m.bits.tobytes() for m in loaded] == [m.bits.tobytes() for m in masks]
    first = path.read_text().splitlines()[0]
    assert first == '{"mask":[1,1,1,1,1,1],"processed":true}'
