"""Trainable encoders with hand-written reverse passes."""

from pulseforge.model.stencoder import (
    EncoderConfig,
    STBlock,
    sample_st_rppg,
    spatial_average,
    st_encoder_backward,
    st_encoder_forward,
)
from pulseforge.model.stformer import (
    ModelConfig,
    spatial_encoder_forward,
    st_former_backward,
    st_former_forward,
    temporal_encoder_forward,
)

__all__ = [
    "EncoderConfig",
    "ModelConfig",
    "STBlock",
    "sample_st_rppg",
    "spatial_average",
    "spatial_encoder_forward",
    "st_encoder_backward",
    "st_encoder_forward",
    "st_former_backward",
    "st_former_forward",
    "temporal_encoder_forward",
]
