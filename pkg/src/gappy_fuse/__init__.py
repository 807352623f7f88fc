"""Fusing partial multi-modality burst observations into one isometric latent space."""

from .model import (
    Burst,
    CalibrationLink,
    FusionDataset,
    GroundTruth,
    ModalityData,
    load_dataset,
    save_dataset,
    validate_dataset,
)
from .training import TrainConfig, embed_dataset, train

__version__ = "0.1.0"
