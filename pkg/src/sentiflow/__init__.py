"""Sentiment-conditioned caption generation with direct injection and sentiment flow."""

from .cells import ModelConfig, SentimentLabel, Variant
from .data import CaptionRecord, Vocabulary
from .model import CaptionModel

__all__ = ["CaptionModel", "CaptionRecord", "ModelConfig", "SentimentLabel", "Variant", "Vocabulary"]
__version__ = "0.1.0"
