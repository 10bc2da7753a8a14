"""Dual-branch endoscopic lesion classification pipeline.

Stage 1 adapts a frozen promptable segmenter with low-rank adapters to
locate lesions; stage 2 trains a global/local feature-fusion classifier
over whole images and lesion crops.
"""

__version__ = "0.1.0"
