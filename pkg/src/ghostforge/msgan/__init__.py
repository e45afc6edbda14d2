from .config import DiscriminatorConfig, GeneratorConfig, LossWeights, TrainConfig
from .estimator import MsGANRestorer
from .losses import LossTerms, discriminator_loss, generator_losses, losses, perceptual_loss
from .networks import FUSION_LEVELS, MAFE, DynamicFusion, Generator, PatchDiscriminator, PerceptualExtractor
from .train import (
    ArchitectureMismatch,
    TrainingAborted,
    TrainResult,
    fit_pairs,
    load_generator,
    restore,
    train,
)

__all__ = [
    "ArchitectureMismatch", "DiscriminatorConfig", "DynamicFusion", "FUSION_LEVELS",
    "Generator", "GeneratorConfig", "LossTerms", "LossWeights", "MAFE", "MsGANRestorer",
    "PatchDiscriminator", "PerceptualExtractor", "TrainConfig", "TrainResult",
    "TrainingAborted", "discriminator_loss", "fit_pairs", "generator_losses",
    "load_generator", "losses", "perceptual_loss", "restore", "train",
]
