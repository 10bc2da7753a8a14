from .checkpoint import load_segmenter, save_segmenter
from .crop import LesionMask, MaskSource, crop_lesion
from .lora import LoRALinear, SegmenterState, inject_adapters
from .metrics import dice_coefficient, soft_dice_loss
from .model import EncoderSpec, PromptSegmenter
from .train import Stage1Config, finetune_segmenter, predict_mask

__all__ = [
    "load_segmenter",
    "save_segmenter",
    "LesionMask",
    "MaskSource",
    "crop_lesion",
    "LoRALinear",
    "SegmenterState",
    "inject_adapters",
    "dice_coefficient",
    "soft_dice_loss",
    "EncoderSpec",
    "PromptSegmenter",
    "Stage1Config",
    "finetune_segmenter",
    "predict_mask",
]
