"""
Deterministic data preparation shared by train, eval and inject.

Every stage rebuilds the same filtered dataset, holdout split and label
propagation samples from the input files and the run seed, so the split
never has to be stored. Each step draws from its own child stream of the
seed.
"""

from dataclasses import asdict, dataclass
from typing import Dict, Optional

import numpy as np

from .data import (ClickMatrix, HoldoutSplit, LabeledProfileDataset, StyleLabelMatrix,
                   build_labelprop_dataset, filter_interactions, holdout_split, load_dataset,
                   split_labeled_items)
from .errors import ConfigError, DataError
from .logs import get_logger
from .manifest import file_checksum

logger = get_logger("experiment")

# Child stream order; appending new streams keeps existing ones stable.
SPLIT, LABELS, LABELPROP_TRAIN, LABELPROP_TEST, TEXT, VAE, VARIANCE, INJECT = range(8)

# Share of labeled items kept out of label propagation to score style profiles.
LABEL_HOLDOUT_FRAC = 1.0 / 6.0


@dataclass
class ExperimentSettings:
    clicks: str
    embeddings: str
    labels: str
    seed: int = 0
    min_user_items: int = 15
    min_item_users: int = 30
    heldout_frac: float = 0.05
    mask_fraction: float = 0.2
    label_holdout_frac: float = LABEL_HOLDOUT_FRAC
    k: int = 5
    repeats: int = 10
    strict_threshold: bool = False

    def __post_init__(self):
        if not 0.0 < self.heldout_frac < 1.0:
            raise ConfigError("heldout fraction must be in (0, 1)")
        if not 0.0 <= self.mask_fraction < 1.0:
            raise ConfigError("mask fraction must be in [0, 1)")
        if self.k < 1 or self.repeats < 1:
            raise ConfigError("k and repeats must be >= 1")

    def split_key(self) -> Dict[str, object]:
        """Settings that determine the split; runs compared in one report must agree on them."""
        return {k: v for k, v in asdict(self).items()
                if k not in ("clicks", "embeddings", "labels")}


def streams(seed: int, count: int = 8):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def stream_seed(seed: int, which: int) -> int:
    """Integer seed of one child stream, for configs that take a plain seed."""
    return int(np.random.SeedSequence(seed).spawn(which + 1)[which].generate_state(1)[0])


@dataclass
class PreparedData:
    clicks: ClickMatrix
    vectors: np.ndarray
    labels: StyleLabelMatrix
    split: HoldoutSplit
    train_profiles: Optional[LabeledProfileDataset]
    test_profiles: Optional[LabeledProfileDataset]
    checksums: Dict[str, str]

    @property
    def style_names(self):
        return self.labels.style_names


def checksums(settings: ExperimentSettings) -> Dict[str, str]:
    return {name: file_checksum(getattr(settings, name))
            for name in ("clicks", "embeddings", "labels")}


def prepare(settings: ExperimentSettings) -> PreparedData:
    """Load, filter, split and build the label propagation samples."""
    loaded = load_dataset(settings.clicks, settings.embeddings, settings.labels)
    clicks = filter_interactions(loaded.clicks, settings.min_user_items, settings.min_item_users)
    vectors = loaded.embeddings.aligned_to(clicks.item_ids)
    rngs = streams(settings.seed)

    n_heldout = max(1, int(round(settings.heldout_frac * clicks.n_users)))
    if n_heldout >= clicks.n_users:
        raise DataError(f"{clicks.n_users} users left after filtering; too few for a holdout")
    split = holdout_split(clicks, n_heldout, settings.mask_fraction, rngs[SPLIT])
    logger.info(f"Heldout {n_heldout} of {clicks.n_users} users, "
                f"{sum(len(m) for m in split.masked)} masked clicks")

    labels = loaded.labels
    train_profiles = test_profiles = None
    if labels.n_labeled == 0 or labels.n_styles == 0:
        logger.warning("No style labels; the click VAE will train with an all-zero condition")
    else:
        train_labels, val_labels = split_labeled_items(labels, settings.label_holdout_frac,
                                                       rngs[LABELS])
        test_labels = val_labels if val_labels.n_labeled else train_labels
        heldout_users = [int(u) for u in split.heldout_users]
        mask = np.ones(clicks.n_users, dtype=bool)
        mask[heldout_users] = False
        train_profiles = build_labelprop_dataset(
            split.train, train_labels, vectors, settings.k, settings.repeats,
            rngs[LABELPROP_TRAIN], settings.strict_threshold, np.flatnonzero(mask))
        try:
            test_profiles = build_labelprop_dataset(
                split.train, test_labels, vectors, settings.k, settings.repeats,
                rngs[LABELPROP_TEST], settings.strict_threshold, heldout_users)
        except DataError:
            logger.warning("No heldout user clicked a labeled item; style AUC is unavailable")
        logger.info(f"Label propagation: {len(train_profiles)} training samples, "
                    f"{0 if test_profiles is None else len(test_profiles)} heldout samples")

    return PreparedData(clicks, vectors, labels, split, train_profiles, test_profiles,
                        checksums(settings))
