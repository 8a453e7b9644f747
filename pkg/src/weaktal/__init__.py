"""Weakly supervised temporal action localization.

One snippet classifier is trained through two parallel streams — per-snippet
classification with top-k pooling, and attention-aggregated video-level
classification — that share their parameters; action instances are then
localized from the resulting class activation sequences.
"""

__version__ = "0.1.0"

from .datasets import Video, VideoRecord, load_corpus, load_manifest  # noqa: F401
from .localize import Detection, LocalizeConfig, localize  # noqa: F401
from .losses import LossBreakdown  # noqa: F401
from .model import ForwardOutput, ModelParams, forward_video, init_model  # noqa: F401
from .synthetic import SyntheticCorpusSpec, generate_corpus  # noqa: F401
from .train import TrainConfig, train  # noqa: F401
