"""
Style injection: keep the encoder condition at the user's learned profile and
swap the decoder condition for a chosen one. The shift measurement re-encodes
samples of the injected lists with the text encoder and compares the result
with the user's own profile.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import clickvae, textenc
from .data import read_clicks, sample_items
from .errors import ConfigError, DataError, ShapeError
from .logs import get_logger

logger = get_logger("inject")

ALL = "all"
WILDCARD = "*"


@dataclass(frozen=True)
class InjectionRequest:
    user_id: str
    target_profile: textenc.UserStyleProfile
    top_n: int = 20

    def __post_init__(self):
        if self.top_n < 1:
            raise ConfigError("top-n must be >= 1")


@dataclass
class InjectionShiftMatrix:
    """Row = injected style, column = mean change of the measured style."""
    style_names: Sequence[str]
    rows: List[int]
    values: np.ndarray
    n_users: int

    def __post_init__(self):
        if self.values.shape != (len(self.rows), len(self.style_names)):
            raise ShapeError("shift matrix shape must be injected styles x styles")
        if not np.all(np.isfinite(self.values)):
            raise DataError("shift matrix contains non-finite entries")

    def diagonal(self) -> np.ndarray:
        return np.array([self.values[r, s] for r, s in enumerate(self.rows)])

    def diagonal_dominant(self) -> bool:
        """Every injected style's own column is positive and the maximum of its row."""
        diag = self.diagonal()
        return bool(np.all(diag > 0.0) and np.all(diag >= self.values.max(axis=1)))

    def table(self) -> List[list]:
        return [[self.style_names[s], *row] for s, row in zip(self.rows, self.values.tolist())]


@dataclass
class InjectionAnalysis:
    shift: InjectionShiftMatrix
    injected_presence: np.ndarray
    identity_presence: np.ndarray
    overlap: np.ndarray
    lists: Dict[str, Dict[str, List[int]]] = field(default_factory=dict)
    user_overlap: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def relative_increase(self) -> np.ndarray:
        base = np.where(self.identity_presence > 0.0, self.identity_presence, np.nan)
        return (self.injected_presence - self.identity_presence) / base

    def mean_relative_increase(self) -> Optional[float]:
        rel = self.relative_increase
        rel = rel[np.isfinite(rel)]
        return float(rel.mean()) if rel.size else None

    def table(self) -> List[list]:
        names = self.shift.style_names
        return [[names[s], self.injected_presence[r], self.identity_presence[r],
                 self.relative_increase[r], self.overlap[r]] for r, s in enumerate(self.shift.rows)]

    def user_table(self) -> List[list]:
        """One row per (user, injected style): share of the injected list also in the identity list."""
        names = self.shift.style_names
        return [[user, names[s], values[r]] for user, values in self.user_overlap.items()
                for r, s in enumerate(self.shift.rows)]


def one_hot(style: int, style_names: Sequence[str]) -> textenc.UserStyleProfile:
    values = np.zeros(len(style_names))
    values[style] = 1.0
    return textenc.UserStyleProfile(values, tuple(style_names))


def resolve_styles(requested: Optional[Sequence[str]], style_names: Sequence[str]) -> List[int]:
    """Style indices for `--style` values; ALL (or nothing) means every style."""
    if not requested or ALL in requested:
        return list(range(len(style_names)))
    index = {name: s for s, name in enumerate(style_names)}
    unknown = [name for name in requested if name not in index]
    if unknown:
        raise ConfigError(f"unknown style(s) {', '.join(unknown)}; vocabulary: {', '.join(style_names)}")
    return [index[name] for name in requested]


# -------------
# Injection
# -------------

def inject_style(model: clickvae.ClickVaeModel, text_encoder: Optional[textenc.TextEncoderModel],
                 fold_in: np.ndarray, vectors: np.ndarray, request: InjectionRequest,
                 mode: str = clickvae.SAMPLE_K, k: int = 5,
                 rng: Optional[np.random.Generator] = None) -> List[int]:
    """Encode with the learned profile, decode with the requested one."""
    if not model.conditioned:
        raise ConfigError("style injection needs a conditioned model")
    target = np.asarray(request.target_profile.values, dtype=np.float64)
    if len(target) != model.n_styles:
        raise ShapeError(f"target profile has {len(target)} styles, model expects {model.n_styles}")
    learned = clickvae.user_profile(model, text_encoder, fold_in, vectors, k, mode, rng)
    return clickvae.rank_items(model, fold_in, learned, target, request.top_n)


def profile_from_items(text_encoder: textenc.TextEncoderModel, items: np.ndarray,
                       vectors: np.ndarray, k: int = 5,
                       rng: Optional[np.random.Generator] = None) -> textenc.UserStyleProfile:
    """Decoder condition from explicitly rated items."""
    if len(items) == 0:
        raise DataError("no rated items to build a profile from")
    chosen = sample_items(np.asarray(items), k, rng or np.random.default_rng(0))
    return textenc.encode(text_encoder, vectors[chosen].mean(axis=0))


def _measured_profile(text_encoder, items: List[int], vectors: np.ndarray, sample_k: int,
                      resamples: int, rng: np.random.Generator) -> np.ndarray:
    if not items:
        raise DataError("injected list is empty; lower --top-n")
    items = np.asarray(items)
    content = np.array([vectors[sample_items(items, sample_k, rng)].mean(axis=0)
                        for _ in range(resamples)])
    return textenc.encode_batch(text_encoder, content).mean(axis=0)


def measure_injection_shift(model: clickvae.ClickVaeModel, text_encoder: textenc.TextEncoderModel,
                            users: Sequence[np.ndarray], vectors: np.ndarray,
                            rng: np.random.Generator, styles: Optional[Sequence[int]] = None,
                            top_n: int = 20, sample_k: int = 5, resamples: int = 3,
                            mode: str = clickvae.SAMPLE_K, profile_k: int = 5,
                            user_ids: Optional[Sequence[str]] = None) -> InjectionAnalysis:
    """Average change of the re-encoded profile per injected style.

    `users` holds each user's fold-in items (arrival order). Injected lists
    never contain fold-in items.
    """
    if len(users) == 0:
        raise DataError("shift measurement needs at least one user")
    if not model.conditioned:
        raise ConfigError("style injection needs a conditioned model")
    names = text_encoder.style_names
    styles = list(range(len(names))) if styles is None else list(styles)
    shift = np.zeros((len(styles), len(names)))
    injected = np.zeros(len(styles))
    identity = np.zeros(len(styles))
    overlap = np.zeros(len(styles))
    lists: Dict[str, Dict[str, List[int]]] = {}
    user_overlap: Dict[str, np.ndarray] = {}

    for j, fold_in in enumerate(users):
        user = user_ids[j] if user_ids is not None else str(j)
        own = clickvae.user_profile(model, text_encoder, fold_in, vectors, profile_k, mode, rng)
        base_list = clickvae.rank_items(model, fold_in, own, own, top_n)
        base = _measured_profile(text_encoder, base_list, vectors, sample_k, resamples, rng)
        lists[user] = {"identity": base_list}
        user_overlap[user] = np.zeros(len(styles))
        for r, s in enumerate(styles):
            ranked = clickvae.rank_items(model, fold_in, own, one_hot(s, names).values, top_n)
            measured = _measured_profile(text_encoder, ranked, vectors, sample_k, resamples, rng)
            shift[r] += measured - own
            injected[r] += measured[s]
            identity[r] += base[s]
            user_overlap[user][r] = len(set(ranked) & set(base_list)) / max(len(ranked), 1)
            overlap[r] += user_overlap[user][r]
            lists[user][names[s]] = ranked
        per_style = ", ".join(f"{names[s]}={user_overlap[user][r]:.2f}" for r, s in enumerate(styles))
        logger.debug(f"user {user}: overlap with identity {per_style}")

    n = len(users)
    analysis = InjectionAnalysis(InjectionShiftMatrix(names, styles, shift / n, n),
                                 injected / n, identity / n, overlap / n, lists, user_overlap)
    rel = analysis.mean_relative_increase()
    logger.info(f"Measured injection shift over {n} users and {len(styles)} styles; "
                f"diagonal dominant: {analysis.shift.diagonal_dominant()}; mean presence increase "
                f"{'NA' if rel is None else f'{100.0 * rel:+.1f}%'}")
    return analysis


# -------------
# Explicit-feedback inputs
# -------------

def read_target_profiles(path, style_names: Sequence[str]) -> Dict[str, np.ndarray]:
    """Rows of `user_id<TAB>p1,...,pS`; the user id `*` applies to every user."""
    profiles: Dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            user, sep, body = line.partition("\t")
            try:
                values = np.array([float(v) for v in body.split(",")])
            except ValueError:
                raise DataError(f"{path}:{lineno}: profile values must be decimals") from None
            if not sep or len(values) != len(style_names):
                raise DataError(f"{path}:{lineno}: expected user_id<TAB>{len(style_names)} values")
            if np.any(values < 0.0) or np.any(values > 1.0):
                raise DataError(f"{path}:{lineno}: profile values must lie in [0, 1]")
            profiles[user] = values
    return profiles


def target_for(profiles: Dict[str, np.ndarray], user_id: str) -> Optional[np.ndarray]:
    return profiles.get(user_id, profiles.get(WILDCARD))


def read_rated_items(path, catalog: Sequence[str]) -> Dict[str, np.ndarray]:
    """`user_id<TAB>item_id` rows of highly rated items, as catalog indices per user."""
    rated = read_clicks(path)
    index = {item: i for i, item in enumerate(catalog)}
    missing = [item for item in rated.item_ids if item not in index]
    if missing:
        logger.warning(f"Ignoring {len(missing)} rated items outside the catalog")
    out = {}
    for u, user in enumerate(rated.user_ids):
        items = [index[rated.item_ids[i]] for i in rated.items_by_recency(u)
                 if rated.item_ids[i] in index]
        if items:
            out[user] = np.array(items, dtype=np.int64)
    return out
