import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from lesionfusion.data import Label, Split, generate_synthetic, split_by_patient
from lesionfusion.errors import CheckpointError
from lesionfusion.segmenter import (
    EncoderSpec,
    PromptSegmenter,
    Stage1Config,
    dice_coefficient,
    finetune_segmenter,
    inject_adapters,
    load_segmenter,
    predict_mask,
    save_segmenter,
)

SMALL = EncoderSpec(input_size=64, patch_size=8, dim=32, depth=3, heads=4)


def _small_state(rank=4, seed=0):
    torch.manual_seed(seed)
    return inject_adapters(PromptSegmenter(SMALL, init_seed=seed), rank=rank)


class TestInjectAdapters:
    def test_two_adapters_per_block(self):
        spec = EncoderSpec(input_size=64, patch_size=8, dim=32, depth=12, heads=4)
        state = inject_adapters(PromptSegmenter(spec, init_seed=0), rank=4)
        assert len(state.adapters) == 24
        for a in state.adapters:
            assert a.rank == 4
            assert a.module.down.weight.shape == (4, 32)
            assert a.module.up.weight.shape == (32, 4)
        targets = {(a.layer_index, a.target) for a in state.adapters}
        assert len(targets) == 24

    def test_identity_at_init(self):
        torch.manual_seed(1)
        adapted = PromptSegmenter(SMALL, init_seed=3)
        reference = PromptSegmenter(SMALL, init_seed=3)
        state = inject_adapters(adapted, rank=4)
        for _ in range(10):
            x = torch.randn(1, 3, 64, 64)
            with torch.no_grad():
                a = state.model(x)
                b = reference(x)
            assert torch.equal(a, b)

    def test_trainable_parameter_count(self):
        state = _small_state(rank=4)
        d = SMALL.dim
        adapter_params = len(state.adapters) * 2 * d * 4
        decoder = sum(p.numel() for p in state.model.decoder.parameters())
        prompt = state.model.prompt_embed.numel()
        assert state.trainable_parameter_count() == adapter_params + decoder + prompt

    def test_frozen_encoder_has_no_grads(self):
        state = _small_state()
        x = torch.randn(1, 3, 64, 64)
        state.model(x).sum().backward()
        for name, p in state.model.encoder.named_parameters():
            if not p.requires_grad:
                assert p.grad is None, name

    def test_invalid_rank(self):
        with pytest.raises(ValueError, match="rank"):
            inject_adapters(PromptSegmenter(SMALL, init_seed=0), rank=0)

    def test_double_injection_rejected(self):
        state = _small_state()
        with pytest.raises(ValueError, match="already"):
            inject_adapters(state.model, rank=4)


@pytest.fixture(scope="module")
def tiny_seg_manifest():
    m = generate_synthetic(6, 64, seed=5)
    return split_by_patient(m, (0.6, 0.2, 0.2), seed=5)


class TestFinetune:
    def test_loss_decreases_and_freeze_holds(self, tiny_seg_manifest):
        state = _small_state(seed=2)
        checksum = state.frozen_checksum()
        state, history = finetune_segmenter(
            state, tiny_seg_manifest, Stage1Config(steps=50, seed=0)
        )
        assert history[-1] < history[0]
        assert state.frozen_checksum() == checksum

    def test_zero_steps_is_identity(self, tiny_seg_manifest):
        state = _small_state(seed=2)
        before = {k: v.clone() for k, v in state.trainable_state_dict().items()}
        state, history = finetune_segmenter(
            state, tiny_seg_manifest, Stage1Config(steps=0, seed=0)
        )
        assert history == []
        after = state.trainable_state_dict()
        for k in before:
            assert torch.equal(before[k], after[k])

    def test_no_masked_samples_fatal(self, tiny_seg_manifest):
        from dataclasses import replace

        stripped = replace(
            tiny_seg_manifest,
            samples=[replace(s, mask=None) for s in tiny_seg_manifest.samples],
        )
        with pytest.raises(ValueError, match="mask"):
            finetune_segmenter(_small_state(), stripped, Stage1Config(steps=1))


class TestPredictMask:
    def test_contract(self, tiny_seg_manifest):
        state = _small_state()
        img = tiny_seg_manifest.samples[0].image
        lm = predict_mask(state, img)
        assert lm.mask.shape == img.shape[:2]
        assert set(np.unique(lm.mask)) <= {0, 1}
        assert lm.threshold_used == 0.5
        assert lm.source.value == "predicted"

    def test_deterministic(self, tiny_seg_manifest):
        state = _small_state()
        img = tiny_seg_manifest.samples[0].image
        a = predict_mask(state, img)
        b = predict_mask(state, img)
        np.testing.assert_array_equal(a.mask, b.mask)

    def test_native_resolution_output(self):
        state = _small_state()
        img = np.random.default_rng(0).uniform(size=(96, 96, 3)).astype(np.float32)
        lm = predict_mask(state, img)
        assert lm.mask.shape == (96, 96)


class TestDice:
    def test_identical_masks(self):
        m = np.zeros((10, 10), dtype=np.uint8)
        m[2:5, 3:7] = 1
        assert dice_coefficient(m, m) == 1.0

    def test_disjoint_masks(self):
        a = np.zeros((10, 10), dtype=np.uint8)
        b = np.zeros((10, 10), dtype=np.uint8)
        a[0:2, 0:2] = 1
        b[5:7, 5:7] = 1
        assert dice_coefficient(a, b) == 0.0

    def test_half_overlap(self):
        a = np.zeros((20, 20), dtype=np.uint8)
        b = np.zeros((20, 20), dtype=np.uint8)
        a[0:10, 0:10] = 1  # 100 px
        b[5:15, 0:10] = 1  # 100 px, overlap 50
        assert dice_coefficient(a, b) == 0.5

    def test_both_empty(self):
        z = np.zeros((4, 4), dtype=np.uint8)
        assert dice_coefficient(z, z) == 1.0

    def test_size_mismatch(self):
        with pytest.raises(ValueError, match="shapes"):
            dice_coefficient(np.zeros((4, 4)), np.zeros((5, 5)))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_symmetry_and_range(self, seed):
        rng = np.random.default_rng(seed)
        a = (rng.uniform(size=(16, 16)) > 0.5).astype(np.uint8)
        b = (rng.uniform(size=(16, 16)) > 0.5).astype(np.uint8)
        d = dice_coefficient(a, b)
        assert d == dice_coefficient(b, a)
        assert 0.0 <= d <= 1.0


class TestSegmenterCheckpoint:
    def test_round_trip_outputs(self, tmp_path, tiny_seg_manifest):
        state = _small_state(seed=4)
        state, _ = finetune_segmenter(state, tiny_seg_manifest, Stage1Config(steps=5, seed=0))
        path = tmp_path / "seg.ckpt"
        save_segmenter(state, path)
        loaded = load_segmenter(path)
        x = torch.randn(2, 3, 64, 64)
        with torch.no_grad():
            assert torch.equal(state.model(x), loaded.model(x))

    def test_truncated_file_rejected(self, tmp_path):
        state = _small_state()
        path = tmp_path / "seg.ckpt"
        save_segmenter(state, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CheckpointError):
            load_segmenter(path)

    def test_checkpoints_only_hold_trainable(self, tmp_path):
        state = _small_state()
        save_segmenter(state, tmp_path / "seg.ckpt")
        payload = torch.load(tmp_path / "seg.ckpt", weights_only=False)
        frozen_names = {
            n for n, p in state.model.named_parameters() if not p.requires_grad
        }
        assert frozen_names.isdisjoint(payload["trainable"])
        assert "frozen_checksum" in payload
