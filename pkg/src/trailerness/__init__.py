"""Trailer-moment labeling and scoring on pre-extracted features.

Pipeline: perceptual-hash matching of trailer frames against episode frames
produces editor-standard labels; per-modality, per-scale sequence scorers are
trained with focal loss; stream predictions are upsampled to frame level,
fused by averaging, and evaluated against the editor labels.
"""

__version__ = "0.1.0"

__all__ = [
    "errors",
    "kernels",
    "hashmatch",
    "timeline",
    "features",
    "model",
    "fusion",
    "evaluation",
    "plots",
    "cli",
]
