import numpy as np
import pytest
import torch

from lesionfusion.data.augment import AugmentPolicy
from lesionfusion.evalkit import grad_cam, save_heatmap_overlay
from lesionfusion.fusion import AblationFlags
from lesionfusion.training import DualBranchModel, TrainConfig


def _model(**overrides):
    base = dict(
        preset="toy",
        image_size=64,
        mask_source="ground_truth",
        augment_policy=AugmentPolicy.off(),
    )
    base.update(overrides)
    return DualBranchModel(TrainConfig(**base))


def _image(seed=0, size=64):
    rng = np.random.default_rng(seed)
    return rng.uniform(size=(size, size, 3)).astype(np.float32)


class TestGradCam:
    def test_shape_and_range(self):
        model = _model()
        for branch in ("global", "local"):
            cam = grad_cam(model, _image(), target_class=2, branch=branch)
            assert cam.shape == (64, 64)
            assert cam.min() >= 0.0 and cam.max() <= 1.0

    def test_deterministic(self):
        model = _model()
        a = grad_cam(model, _image(1), target_class=1)
        b = grad_cam(model, _image(1), target_class=1)
        np.testing.assert_array_equal(a, b)

    def test_zero_head_weights_give_zero_map(self):
        model = _model()
        with torch.no_grad():
            model.heads.fc_g.weight.zero_()
            model.heads.fc_g.bias.zero_()
        cam = grad_cam(model, _image(2), target_class=0, branch="global")
        np.testing.assert_array_equal(cam, np.zeros((64, 64)))

    def test_disabled_branch_rejected(self):
        model = _model(ablation=AblationFlags(use_gfe=True, use_lfe=False, use_gfo=False))
        with pytest.raises(ValueError, match="branch"):
            grad_cam(model, _image(), target_class=0, branch="local")

    def test_overlay_written(self, tmp_path):
        model = _model()
        cam = grad_cam(model, _image(3), target_class=2)
        path = tmp_path / "overlay.png"
        save_heatmap_overlay(_image(3), cam, path)
        assert path.stat().st_size > 0
