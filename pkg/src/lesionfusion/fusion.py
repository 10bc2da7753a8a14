"""Feature-optimization losses, classification heads, and the joint objective.

Covers: cosine similarity loss between branch features on tumor samples,
a feature-origin discriminator with binary cross-entropy, three softmax
classification heads (global, local, fused-by-concatenation), their
cross-entropy losses, the weighted total objective, and ensemble inference
by averaging the three head distributions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn

from .errors import ConfigError

NUM_CLASSES = 3
DEFAULT_LOSS_WEIGHTS = (1.0, 0.3, 0.01)

TUMOR_LABELS = (1, 2)  # benign, malignant


@dataclass
class AblationFlags:
    """Topology toggles mirroring the ablation variants V1-V4."""

    use_gfe: bool = True
    use_lfe: bool = True
    use_gfo: bool = True

    def validate(self) -> None:
        if not (self.use_gfe or self.use_lfe):
            raise ConfigError("at least one branch required")
        if self.use_gfo and not (self.use_gfe and self.use_lfe):
            raise ConfigError("feature optimization requires both branches enabled")

    @property
    def variant(self) -> str:
        if self.use_gfo:
            return "V4"
        if self.use_gfe and self.use_lfe:
            return "V3"
        return "V1" if self.use_gfe else "V2"


@dataclass
class PredictionTriple:
    """Per-head class distributions and their ensemble average.

    Heads absent under ablation are ``None`` and excluded from the average.
    """

    y_g: torch.Tensor | None
    y_l: torch.Tensor | None
    y_f: torch.Tensor

    @property
    def ensemble(self) -> torch.Tensor:
        heads = [y for y in (self.y_g, self.y_l, self.y_f) if y is not None]
        return torch.stack(heads).mean(dim=0)


@dataclass
class LossBundle:
    """Named component losses and the weighted total.

    ``l_total == l_f + alpha*l_g + beta*l_l + gamma*(l_s + l_d)`` exactly.
    """

    l_f: torch.Tensor
    l_g: torch.Tensor
    l_l: torch.Tensor
    l_s: torch.Tensor
    l_d: torch.Tensor
    weights: tuple[float, float, float]
    l_total: torch.Tensor = field(init=False)

    def __post_init__(self):
        alpha, beta, gamma = self.weights
        self.l_total = self.l_f + alpha * self.l_g + beta * self.l_l + gamma * (self.l_s + self.l_d)

    def scalars(self) -> dict[str, float]:
        return {
            "l_f": float(self.l_f.detach()),
            "l_g": float(self.l_g.detach()),
            "l_l": float(self.l_l.detach()),
            "l_s": float(self.l_s.detach()),
            "l_d": float(self.l_d.detach()),
            "l_total": float(self.l_total.detach()),
        }


def similarity_loss(f_g: torch.Tensor, f_l: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean of (1 - cosine) over aligned pairs whose label marks a tumor.

    Normal-labeled samples are excluded; an all-normal batch yields 0.
    A zero-norm vector among tumor samples is a numerical-domain error.
    """
    if f_g.shape != f_l.shape:
        raise ValueError(f"feature shapes differ: {f_g.shape} vs {f_l.shape}")
    tumor = (labels == TUMOR_LABELS[0]) | (labels == TUMOR_LABELS[1])
    if not bool(tumor.any()):
        return torch.zeros((), dtype=f_g.dtype, device=f_g.device)
    fg = f_g[tumor]
    fl = f_l[tumor]
    ng = fg.norm(dim=1)
    nl = fl.norm(dim=1)
    for name, norms in (("global", ng), ("local", nl)):
        bad = (norms == 0).nonzero(as_tuple=True)[0]
        if len(bad):
            idx = tumor.nonzero(as_tuple=True)[0][bad[0]]
            raise ValueError(f"zero-norm {name} feature for tumor sample index {int(idx)}")
    cos = (fg * fl).sum(dim=1) / (ng * nl)
    return (1.0 - cos).mean()


class FeatureDiscriminator(nn.Module):
    """Single fully connected layer D -> 1 with sigmoid output."""

    def __init__(self, feature_dim: int):
        super().__init__()
        self.fc = nn.Linear(feature_dim, 1)

    def forward(self, f: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.fc(f)).squeeze(-1)


class _GradReverse(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x):
        return x

    @staticmethod
    def backward(ctx, grad):
        return -grad


def grad_reverse(x: torch.Tensor) -> torch.Tensor:
    return _GradReverse.apply(x)


def _bce(p: torch.Tensor, target: float, eps: float = 1e-12) -> torch.Tensor:
    if target == 1.0:
        return -torch.log(p.clamp_min(eps))
    return -torch.log((1.0 - p).clamp_min(eps))


def discrimination_loss(
    discriminator: FeatureDiscriminator,
    f_g: torch.Tensor,
    f_l: torch.Tensor,
    adversarial_mode: str = "joint",
) -> torch.Tensor:
    """Binary cross-entropy: global features target 0, local features 1.

    Averaged over the 2B evaluations. Three schedules for how the loss
    reaches the feature extractors:

    - ``"joint"`` (function default): plain co-minimization of the summed
      objective; the extractors receive the raw gradient.
    - ``"grad_reverse"``: the gradient into the extractors is reversed
      (min-max; the extractors try to fool the discriminator).
    - ``"detached"``: the features are detached, so only the discriminator
      trains on this term (GAN-style alternation without a generator step);
      cross-branch alignment is then carried by the similarity loss alone.
    """
    if adversarial_mode not in ("joint", "grad_reverse", "detached"):
        raise ConfigError(f"unknown adversarial_mode {adversarial_mode!r}")
    if adversarial_mode == "grad_reverse":
        f_g = grad_reverse(f_g)
        f_l = grad_reverse(f_l)
    elif adversarial_mode == "detached":
        f_g = f_g.detach()
        f_l = f_l.detach()
    p_g = discriminator(f_g)
    p_l = discriminator(f_l)
    losses = torch.cat([_bce(p_g, 0.0), _bce(p_l, 1.0)])
    return losses.mean()


class ClassificationHeads(nn.Module):
    """Independent softmax heads over global, local, and concatenated features."""

    def __init__(self, feature_dim: int, flags: AblationFlags | None = None):
        super().__init__()
        self.flags = flags or AblationFlags()
        self.flags.validate()
        self.feature_dim = feature_dim
        n_branches = int(self.flags.use_gfe) + int(self.flags.use_lfe)
        self.fc_g = nn.Linear(feature_dim, NUM_CLASSES) if self.flags.use_gfe else None
        self.fc_l = nn.Linear(feature_dim, NUM_CLASSES) if self.flags.use_lfe else None
        self.fc_f = nn.Linear(feature_dim * n_branches, NUM_CLASSES)

    def forward(self, f_g: torch.Tensor | None, f_l: torch.Tensor | None) -> PredictionTriple:
        parts = []
        y_g = y_l = None
        if self.fc_g is not None:
            if f_g is None:
                raise ValueError("global branch enabled but no global features given")
            y_g = torch.softmax(self.fc_g(f_g), dim=-1)
            parts.append(f_g)
        if self.fc_l is not None:
            if f_l is None:
                raise ValueError("local branch enabled but no local features given")
            y_l = torch.softmax(self.fc_l(f_l), dim=-1)
            parts.append(f_l)
        fused = torch.cat(parts, dim=-1)
        y_f = torch.softmax(self.fc_f(fused), dim=-1)
        return PredictionTriple(y_g=y_g, y_l=y_l, y_f=y_f)


def cross_entropy_from_probs(
    probs: torch.Tensor, labels: torch.Tensor, eps: float = 1e-12
) -> torch.Tensor:
    if labels.min() < 0 or labels.max() >= NUM_CLASSES:
        raise ValueError(f"labels must be in [0, {NUM_CLASSES})")
    picked = probs.gather(1, labels.view(-1, 1)).squeeze(1)
    return -torch.log(picked.clamp_min(eps)).mean()


def total_loss(
    preds: PredictionTriple,
    labels: torch.Tensor,
    f_g: torch.Tensor | None,
    f_l: torch.Tensor | None,
    discriminator: FeatureDiscriminator | None,
    weights: tuple[float, float, float] = DEFAULT_LOSS_WEIGHTS,
    flags: AblationFlags | None = None,
    adversarial_mode: str = "joint",
) -> LossBundle:
    """Weighted joint objective over the three heads and the GFO terms.

    Disabled branches contribute exact zeros for their cross-entropy; the
    GFO terms are zero unless both branches and the GFO flag are on.
    """
    flags = flags or AblationFlags()
    flags.validate()
    zero = torch.zeros((), dtype=preds.y_f.dtype, device=preds.y_f.device)
    l_f = cross_entropy_from_probs(preds.y_f, labels)
    l_g = cross_entropy_from_probs(preds.y_g, labels) if preds.y_g is not None else zero
    l_l = cross_entropy_from_probs(preds.y_l, labels) if preds.y_l is not None else zero
    if flags.use_gfo:
        if discriminator is None:
            raise ConfigError("feature optimization enabled but no discriminator given")
        l_s = similarity_loss(f_g, f_l, labels)
        l_d = discrimination_loss(discriminator, f_g, f_l, adversarial_mode)
    else:
        l_s = zero
        l_d = zero
    return LossBundle(l_f=l_f, l_g=l_g, l_l=l_l, l_s=l_s, l_d=l_d, weights=weights)
