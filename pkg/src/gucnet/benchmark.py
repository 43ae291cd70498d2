"""Frozen synthetic benchmark used by the acceptance suite and the scripts.

Cluttered X: 7 classes, 64 dims, 400 samples per class, noise 0.9 x radius,
seed 1. The guide is the same generator at noise 0.05 x radius.
"""
from __future__ import annotations

from .data import DatasetBundle, gen_gaussian_mixture
from .training import TrainConfig

CLASSES = 7
DIM = 64
PER_CLASS = 400
RADIUS = 1.0
CLUTTERED_SIGMA = 0.9
SEPARABLE_SIGMA = 0.05
DATA_SEED = 1
GUIDE_SEED = 2
TRAIN_SEED = 1


def cluttered(seed: int = DATA_SEED) -> DatasetBundle:
    return gen_gaussian_mixture(CLASSES, DIM, PER_CLASS, RADIUS, CLUTTERED_SIGMA * RADIUS, seed,
                                name=f"cluttered-seed{seed}")


def separable(classes: int = CLASSES, seed: int = GUIDE_SEED, dim: int = DIM) -> DatasetBundle:
    return gen_gaussian_mixture(classes, dim, PER_CLASS, RADIUS, SEPARABLE_SIGMA * RADIUS, seed,
                                name=f"separable-seed{seed}")


def config(mode: str = "baseline", **changes) -> TrainConfig:
    """Default hyperparameters (50 epochs, Adam 1e-3, batch 32, alpha 0.01, K=128)."""
    return TrainConfig(mode=mode, seed=TRAIN_SEED).with_(**changes)
