"""Compartmentalized semantic watermarking of diffusion initial latents."""

from slicewm.core import (
    FACTORS,
    DescriptorSet,
    FactorKey,
    LatentGrid,
    PartitionLayout,
    Position,
    SecretKey,
    build_layout,
    region_positions,
    validate_layout,
)
from slicewm.detection import State, ThresholdSet, VerificationReport, classify, verify
from slicewm.synthesis import synthesize_latent

__all__ = [
    "FACTORS",
    "DescriptorSet",
    "FactorKey",
    "LatentGrid",
    "PartitionLayout",
    "Position",
    "SecretKey",
    "State",
    "ThresholdSet",
    "VerificationReport",
    "build_layout",
    "classify",
    "region_positions",
    "synthesize_latent",
    "validate_layout",
    "verify",
]
