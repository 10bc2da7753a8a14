"""scikit-learn style estimator wrappers around the pipeline.

These adapt the manifest/torch internals to array-in, array-out fit/predict
so the pipeline composes with the wider sklearn ecosystem (cloning,
get_params/set_params, pipelines).
"""
from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_random_state

from .data.types import DatasetManifest, ImageSample, Label, Modality, Split
from .fusion import AblationFlags
from .segmenter import (
    EncoderSpec,
    PromptSegmenter,
    Stage1Config,
    dice_coefficient,
    finetune_segmenter,
    inject_adapters,
    predict_mask,
)
from .training import TrainConfig, predict_samples, train_stage2


def _check_images(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 4 or X.shape[3] != 3:
        raise ValueError(f"X must be (n_samples, H, W, 3), got {X.shape}")
    if X.min() < 0.0 or X.max() > 1.0:
        raise ValueError("image values must lie in [0, 1]")
    return X


def _manifest_from_arrays(X, y, masks=None, val_fraction=0.0, rng=None) -> DatasetManifest:
    n = len(X)
    n_val = int(round(val_fraction * n))
    val_idx = set()
    if n_val > 0 and rng is not None:
        val_idx = set(rng.choice(n, size=n_val, replace=False).tolist())
    samples = []
    for i in range(n):
        mask = None
        if masks is not None and masks[i] is not None:
            mask = (np.asarray(masks[i]) > 0).astype(np.uint8)
        samples.append(
            ImageSample(
                name=f"arr_{i:05d}",
                image=X[i],
                label=Label(int(y[i])) if y is not None else Label.NORMAL,
                modality=Modality.WLI,
                patient_id=f"arr_{i:05d}",
                mask=mask,
                split=Split.VAL if i in val_idx else Split.TRAIN,
            )
        )
    return DatasetManifest(samples=samples, seed=0)


class LesionSegmenter(BaseEstimator):
    """Promptable-segmenter fine-tuner with a fit/predict surface.

    fit(X, y): X images (n, S, S, 3) in [0, 1], y binary masks (n, S, S).
    predict(X): binary masks at input resolution.
    """

    def __init__(
        self,
        rank: int = 4,
        input_size: int = 128,
        steps: int = 300,
        batch_size: int = 8,
        lr: float = 4e-3,
        threshold: float = 0.5,
        random_state: int = 0,
    ):
        self.rank = rank
        self.input_size = input_size
        self.steps = steps
        self.batch_size = batch_size
        self.lr = lr
        self.threshold = threshold
        self.random_state = random_state

    def fit(self, X, y):
        X = _check_images(X)
        y = np.asarray(y)
        if y.shape != X.shape[:3]:
            raise ValueError(f"masks must be (n, H, W) matching X, got {y.shape}")
        torch.manual_seed(self.random_state)
        model = PromptSegmenter(
            EncoderSpec(input_size=self.input_size), init_seed=self.random_state
        )
        state = inject_adapters(model, rank=self.rank)
        labels = np.where(y.reshape(len(X), -1).any(axis=1), Label.MALIGNANT, Label.NORMAL)
        manifest = _manifest_from_arrays(X, labels, masks=list(y))
        cfg = Stage1Config(
            steps=self.steps,
            batch_size=self.batch_size,
            lr=self.lr,
            seed=self.random_state,
        )
        self.state_, self.loss_history_ = finetune_segmenter(state, manifest, cfg)
        return self

    def _require_fitted(self):
        if not hasattr(self, "state_"):
            raise NotFittedError("call fit before predict")

    def predict(self, X):
        self._require_fitted()
        X = _check_images(X)
        return np.stack(
            [predict_mask(self.state_, img, self.threshold).mask for img in X]
        )

    def score(self, X, y):
        """Mean Dice coefficient against ground-truth masks."""
        preds = self.predict(X)
        return float(
            np.mean([dice_coefficient(p, g) for p, g in zip(preds, np.asarray(y))])
        )


class DualBranchLesionClassifier(BaseEstimator, ClassifierMixin):
    """Dual-branch classifier with fit/predict/predict_proba.

    Lesion crops come from ground-truth masks passed to ``fit``/``predict``
    via ``masks=``, or from a fitted :class:`LesionSegmenter` given as
    ``segmenter``.
    """

    def __init__(
        self,
        preset: str = "tiny",
        image_size: int = 128,
        epochs: int = 30,
        batch_size: int = 8,
        lr: float = 0.003,
        use_gfe: bool = True,
        use_lfe: bool = True,
        use_gfo: bool = True,
        segmenter: LesionSegmenter | None = None,
        random_state: int = 0,
    ):
        self.preset = preset
        self.image_size = image_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.use_gfe = use_gfe
        self.use_lfe = use_lfe
        self.use_gfo = use_gfo
        self.segmenter = segmenter
        self.random_state = random_state

    def _train_config(self) -> TrainConfig:
        return TrainConfig.desk_scale(
            preset=self.preset,
            image_size=self.image_size,
            epochs=self.epochs,
            batch_size=self.batch_size,
            lr=self.lr,
            ablation=AblationFlags(
                use_gfe=self.use_gfe, use_lfe=self.use_lfe, use_gfo=self.use_gfo
            ),
            mask_source="ground_truth" if self.segmenter is None else "predicted",
            seed=self.random_state,
        )

    def fit(self, X, y, masks=None):
        X = _check_images(X)
        y = np.asarray(y, dtype=np.int64)
        if masks is None and self.segmenter is not None:
            masks = list(self.segmenter.predict(X))
        rng = check_random_state(self.random_state)
        manifest = _manifest_from_arrays(X, y, masks=masks)
        cfg = self._train_config()
        if masks is not None:
            cfg.mask_source = "ground_truth"
        self.classes_ = np.array(sorted(set(int(v) for v in y)))
        result = train_stage2(manifest, None, cfg)
        self.model_ = result.model
        self.cfg_ = cfg
        self.history_ = result.history
        return self

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("call fit before predict")

    def predict_proba(self, X, masks=None):
        self._require_fitted()
        X = _check_images(X)
        if masks is None and self.segmenter is not None:
            masks = list(self.segmenter.predict(X))
        manifest = _manifest_from_arrays(X, None, masks=masks)
        probs, _ = predict_samples(self.model_, manifest.samples, self.cfg_, None)
        return probs

    def predict(self, X, masks=None):
        return self.predict_proba(X, masks=masks).argmax(axis=1)
