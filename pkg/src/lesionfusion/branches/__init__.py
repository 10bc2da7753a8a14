from .cbam import CBAM, ChannelAttention, SpatialAttention
from .encoder import PRESETS, MultiScaleEncoder, ResidualBlock
from .extractor import FeatureExtractor
from .fpn import FpnBottomHead

__all__ = [
    "CBAM",
    "ChannelAttention",
    "SpatialAttention",
    "PRESETS",
    "MultiScaleEncoder",
    "ResidualBlock",
    "FeatureExtractor",
    "FpnBottomHead",
]
