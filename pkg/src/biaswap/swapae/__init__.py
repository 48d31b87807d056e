from .losses import (
    CooccurrenceLosses,
    GanLosses,
    cooccurrence_loss,
    gan_losses,
    generator_adversarial_loss,
    reconstruction_loss,
)
from .networks import Discriminator, Encoder, Generator, PatchDiscriminator
from .trainer import (
    LatentPair,
    PairBatch,
    SwapAEConfig,
    SwapAEState,
    SwapTrainingDivergedError,
    decode,
    encode,
    init_swapae,
    load_swapae_checkpoint,
    save_swapae_checkpoint,
    swap_generate,
    swap_generate_batch,
    train_swap_autoencoder,
    training_step,
)

__all__ = [
    "CooccurrenceLosses",
    "Discriminator",
    "Encoder",
    "GanLosses",
    "Generator",
    "LatentPair",
    "PairBatch",
    "PatchDiscriminator",
    "SwapAEConfig",
    "SwapAEState",
    "SwapTrainingDivergedError",
    "cooccurrence_loss",
    "decode",
    "encode",
    "gan_losses",
    "generator_adversarial_loss",
    "init_swapae",
    "load_swapae_checkpoint",
    "reconstruction_loss",
    "save_swapae_checkpoint",
    "swap_generate",
    "swap_generate_batch",
    "train_swap_autoencoder",
    "training_step",
]
