"""
Datasets: click matrices, item embeddings, style labels, the label
propagation sampler, holdout masking and the planted-style synthetic
generator.

File formats (UTF-8, one record per line):
    clicks      user_id<TAB>item_id
    embeddings  item_id<TAB>v1,v2,...,vD
    labels      item_id<TAB>style|style|...
    item texts  item_id<TAB>free text
"""

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, DataError
from .logs import get_logger

logger = get_logger("data")


# -------------
# Domain types
# -------------

def _csr(rows, cols, data, shape) -> sp.csr_matrix:
    mat = sp.csr_matrix((np.asarray(data, dtype=np.float64),
                         (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
                        shape=shape)
    mat.sort_indices()
    return mat


@dataclass(frozen=True)
class ClickMatrix:
    """Binary user x item interactions.

    `order` shares the sparsity pattern of `matrix` and stores each
    interaction's arrival position, which is what the last-k inference mode
    ranks by.
    """
    user_ids: Tuple[str, ...]
    item_ids: Tuple[str, ...]
    matrix: sp.csr_matrix
    order: sp.csr_matrix

    @classmethod
    def from_pairs(cls, user_ids: Sequence[str], item_ids: Sequence[str],
                   pairs: Iterable[Tuple[int, int]]) -> Tuple["ClickMatrix", int]:
        """Build from (user index, item index) pairs in arrival order.

        Returns the matrix and the number of duplicate pairs dropped.
        """
        n_users, n_items = len(user_ids), len(item_ids)
        arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        if arr.size and (arr.min() < 0 or arr[:, 0].max() >= n_users or arr[:, 1].max() >= n_items):
            raise DataError("interaction index out of bounds")
        keys = arr[:, 0] * max(n_items, 1) + arr[:, 1]
        _, first = np.unique(keys, return_index=True)
        first.sort()
        kept = arr[first]
        shape = (n_users, n_items)
        matrix = _csr(kept[:, 0], kept[:, 1], np.ones(len(kept)), shape)
        order = _csr(kept[:, 0], kept[:, 1], np.arange(1, len(kept) + 1), shape)
        return cls(tuple(user_ids), tuple(item_ids), matrix, order), len(arr) - len(kept)

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def nnz(self) -> int:
        return int(self.matrix.nnz)

    def items_of(self, user: int) -> np.ndarray:
        """Item indices of one user, ascending."""
        start, end = self.matrix.indptr[user], self.matrix.indptr[user + 1]
        return self.matrix.indices[start:end]

    def items_by_recency(self, user: int) -> np.ndarray:
        """Item indices of one user, oldest interaction first."""
        start, end = self.order.indptr[user], self.order.indptr[user + 1]
        items = self.order.indices[start:end]
        return items[np.argsort(self.order.data[start:end], kind="stable")]

    def dense_rows(self, users: Sequence[int]) -> np.ndarray:
        return self.matrix[np.asarray(users, dtype=np.int64)].toarray()

    def iter_pairs(self) -> Iterable[Tuple[int, int]]:
        """All interactions in arrival order."""
        coo = self.order.tocoo()
        for k in np.argsort(coo.data, kind="stable"):
            yield int(coo.row[k]), int(coo.col[k])

    def restrict(self, users: Optional[np.ndarray] = None,
                 items: Optional[np.ndarray] = None) -> "ClickMatrix":
        """Keep only the given user / item indices (ids follow)."""
        users = np.arange(self.n_users) if users is None else np.asarray(users, dtype=np.int64)
        items = np.arange(self.n_items) if items is None else np.asarray(items, dtype=np.int64)
        return ClickMatrix(tuple(self.user_ids[u] for u in users),
                           tuple(self.item_ids[i] for i in items),
                           _reindexed(self.matrix, users, items),
                           _reindexed(self.order, users, items))

    def without(self, removed: Mapping[int, np.ndarray]) -> "ClickMatrix":
        """Copy with some (user -> items) interactions removed."""
        coo = self.order.tocoo()
        drop = np.zeros(coo.nnz, dtype=bool)
        lookup = {u: set(int(i) for i in items) for u, items in removed.items()}
        for k in range(coo.nnz):
            items = lookup.get(int(coo.row[k]))
            if items is not None and int(coo.col[k]) in items:
                drop[k] = True
        keep = ~drop
        shape = (self.n_users, self.n_items)
        return ClickMatrix(self.user_ids, self.item_ids,
                           _csr(coo.row[keep], coo.col[keep], np.ones(keep.sum()), shape),
                           _csr(coo.row[keep], coo.col[keep], coo.data[keep], shape))


def _reindexed(mat: sp.csr_matrix, users: np.ndarray, items: np.ndarray) -> sp.csr_matrix:
    out = mat[users][:, items].tocsr()
    out.sort_indices()
    return out


@dataclass(frozen=True)
class ItemEmbeddingTable:
    """Dense item x D content embeddings."""
    item_ids: Tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.item_ids):
            raise DataError("embedding rows must match item ids")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise DataError("duplicate item id in embeddings")
        if not np.all(np.isfinite(self.vectors)):
            raise DataError("non-finite embedding value")

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @cached_property
    def index(self) -> Dict[str, int]:
        return {item: i for i, item in enumerate(self.item_ids)}

    def aligned_to(self, item_ids: Sequence[str]) -> np.ndarray:
        """Embedding matrix in the row order of `item_ids`."""
        missing = [i for i in item_ids if i not in self.index]
        if missing:
            raise DataError(f"{len(missing)} clicked items have no embedding, e.g. {missing[:3]}")
        return self.vectors[[self.index[i] for i in item_ids]]


@dataclass(frozen=True)
class StyleLabelMatrix:
    """Binary multi-label style assignments for a subset of items."""
    item_ids: Tuple[str, ...]
    style_names: Tuple[str, ...]
    labels: np.ndarray

    def __post_init__(self):
        if self.labels.shape != (len(self.item_ids), len(self.style_names)):
            raise DataError("label matrix shape does not match ids and styles")
        if len(self.item_ids) and np.any(self.labels.sum(axis=1) < 1):
            raise DataError("every labeled item needs at least one style")

    @property
    def n_styles(self) -> int:
        return len(self.style_names)

    @property
    def n_labeled(self) -> int:
        return len(self.item_ids)

    def for_catalog(self, catalog: Sequence[str]) -> Tuple[np.ndarray, np.ndarray]:
        """(item x S label matrix, labeled mask) in catalog order."""
        index = {item: i for i, item in enumerate(self.item_ids)}
        dense = np.zeros((len(catalog), self.n_styles), dtype=np.int8)
        mask = np.zeros(len(catalog), dtype=bool)
        for row, item in enumerate(catalog):
            j = index.get(item)
            if j is not None:
                dense[row] = self.labels[j]
                mask[row] = True
        return dense, mask

    def subset(self, rows: np.ndarray) -> "StyleLabelMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        return StyleLabelMatrix(tuple(self.item_ids[r] for r in rows), self.style_names,
                                self.labels[rows])


@dataclass(frozen=True)
class LabeledProfileDataset:
    """Label propagation samples: content vectors with thresholded style profiles.

    `users` and `sample_items` record where every sample came from so the
    profiles can be recomputed.
    """
    vectors: np.ndarray
    profiles: np.ndarray
    users: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    sample_items: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int64))

    def __post_init__(self):
        if self.vectors.shape[0] != self.profiles.shape[0]:
            raise DataError("vectors and profiles must have equal row counts")

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def n_styles(self) -> int:
        return self.profiles.shape[1]


@dataclass(frozen=True)
class HoldoutSplit:
    """Heldout users with their interactions split into fold-in and masked parts.

    `fold_in[j]` / `masked[j]` belong to `heldout_users[j]`; fold-in keeps
    arrival order. `train` is the full matrix minus every masked interaction.
    """
    train: ClickMatrix
    heldout_users: np.ndarray
    fold_in: Tuple[np.ndarray, ...]
    masked: Tuple[np.ndarray, ...]


class LoadedDataset(NamedTuple):
    clicks: ClickMatrix
    embeddings: ItemEmbeddingTable
    labels: StyleLabelMatrix


# -------------
# File I/O
# -------------

def _records(path: Path) -> Iterable[Tuple[int, str, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise DataError(f"{path}:{lineno}: expected two tab-separated fields")
            yield lineno, parts[0], parts[1]


def read_clicks(path) -> ClickMatrix:
    users: Dict[str, int] = {}
    items: Dict[str, int] = {}
    pairs = []
    for _, user, item in _records(Path(path)):
        u = users.setdefault(user, len(users))
        i = items.setdefault(item, len(items))
        pairs.append((u, i))
    clicks, duplicates = ClickMatrix.from_pairs(list(users), list(items), pairs)
    if duplicates:
        logger.info(f"Dropped {duplicates} duplicate click lines")
    return clicks


def read_embeddings(path) -> ItemEmbeddingTable:
    ids: List[str] = []
    rows: List[List[float]] = []
    dim = None
    for lineno, item, payload in _records(Path(path)):
        try:
            values = [float(v) for v in payload.split(",")]
        except ValueError:
            raise DataError(f"{path}:{lineno}: embedding values must be decimals") from None
        if dim is None:
            dim = len(values)
        elif len(values) != dim:
            raise DataError(f"{path}:{lineno}: expected {dim} values, got {len(values)}")
        ids.append(item)
        rows.append(values)
    vectors = np.asarray(rows, dtype=np.float64).reshape(len(rows), dim or 0)
    return ItemEmbeddingTable(tuple(ids), vectors)


def read_labels(path) -> StyleLabelMatrix:
    styles: Dict[str, int] = {}
    items: List[str] = []
    sets: List[List[int]] = []
    for lineno, item, payload in _records(Path(path)):
        names = [s.strip() for s in payload.split("|") if s.strip()]
        if not names:
            raise DataError(f"{path}:{lineno}: no style names")
        if item in items:
            raise DataError(f"{path}:{lineno}: item {item!r} labeled twice")
        items.append(item)
        sets.append([styles.setdefault(n, len(styles)) for n in names])
    labels = np.zeros((len(items), len(styles)), dtype=np.int8)
    for row, cols in enumerate(sets):
        labels[row, cols] = 1
    return StyleLabelMatrix(tuple(items), tuple(styles), labels)


def read_item_texts(path) -> Dict[str, str]:
    return {item: text for _, item, text in _records(Path(path))}


def load_dataset(clicks_path, embeddings_path, labels_path) -> LoadedDataset:
    """Read and cross-reference the three input files.

    The catalog is the set of clicked items in order of first appearance.
    Labeled items outside the catalog are dropped with a warning.
    """
    clicks = read_clicks(clicks_path)
    table = read_embeddings(embeddings_path)
    embeddings = ItemEmbeddingTable(clicks.item_ids, table.aligned_to(clicks.item_ids))
    labels = read_labels(labels_path)
    catalog = set(clicks.item_ids)
    keep = np.array([i for i, item in enumerate(labels.item_ids) if item in catalog], dtype=np.int64)
    if len(keep) < labels.n_labeled:
        logger.warning(f"Dropped {labels.n_labeled - len(keep)} labeled items absent from the catalog")
        labels = labels.subset(keep)
    logger.info(f"Loaded {clicks.n_users} users x {clicks.n_items} items, {clicks.nnz} clicks, "
                f"D={embeddings.dim}, {labels.n_labeled} labeled items, {labels.n_styles} styles")
    return LoadedDataset(clicks, embeddings, labels)


def _fmt(values: Iterable[float]) -> str:
    return ",".join(repr(float(v)) for v in values)


def write_clicks(path, clicks: ClickMatrix) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for u, i in clicks.iter_pairs():
            fh.write(f"{clicks.user_ids[u]}\t{clicks.item_ids[i]}\n")


def write_embeddings(path, table: ItemEmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item, vec in zip(table.item_ids, table.vectors):
            fh.write(f"{item}\t{_fmt(vec)}\n")


def write_labels(path, labels: StyleLabelMatrix) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for item, row in zip(labels.item_ids, labels.labels):
            names = "|".join(labels.style_names[j] for j in np.flatnonzero(row))
            fh.write(f"{item}\t{names}\n")


def write_vectors(path, ids: Sequence[str], vectors: np.ndarray, header: Optional[str] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(f"# {header}\n")
        for key, vec in zip(ids, vectors):
            fh.write(f"{key}\t{_fmt(vec)}\n")


# -------------
# Filtering
# -------------

def filter_interactions(clicks: ClickMatrix, min_items_per_user: int = 15,
                        min_users_per_item: int = 30) -> ClickMatrix:
    """Alternately drop sparse users and items until nothing changes."""
    if min_items_per_user < 1 or min_users_per_item < 1:
        raise ConfigError("filter thresholds must be >= 1")
    users = np.arange(clicks.n_users)
    items = np.arange(clicks.n_items)
    mat = clicks.matrix
    rounds = 0
    while True:
        rounds += 1
        sub = mat[users][:, items]
        user_ok = np.asarray(sub.sum(axis=1)).ravel() >= min_items_per_user
        users = users[user_ok]
        sub = sub[user_ok]
        item_ok = np.asarray(sub.sum(axis=0)).ravel() >= min_users_per_item
        items = items[item_ok]
        if user_ok.all() and item_ok.all():
            break
    if len(users) == 0 or len(items) == 0:
        raise DataError(f"filtering with thresholds ({min_items_per_user}, {min_users_per_item}) "
                        f"left no data; lower the thresholds")
    logger.info(f"Filtered to {len(users)} users x {len(items)} items in {rounds} rounds")
    if len(users) == clicks.n_users and len(items) == clicks.n_items:
        return clicks
    return clicks.restrict(users, items)


# -------------
# Item and user content vectors
# -------------

STOPWORDS = frozenset("""
a about above after again against all am an and any are as at be because been before being
below between both but by can did do does doing down during each few for from further had has
have having he her here hers herself him himself his how i if in into is it its itself just me
more most my myself no nor not now of off on once only or other our ours ourselves out over own
same she should so some such than that the their theirs them themselves then there these they
this those through to too under until up very was we were what when where which while who whom
why will with you your yours yourself yourselves
""".split())

_PUNCT = re.compile(r"[^\w\s]|_")
_SUFFIXES = ("ing", "ed", "s")


def stem(token: str) -> str:
    for suffix in _SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: -len(suffix)]
    return token


def tokenize(text: str) -> List[str]:
    words = _PUNCT.sub(" ", text.lower()).split()
    return [stem(w) for w in words if w not in STOPWORDS]


class HashingEmbedder:
    """Deterministic stand-in for word vectors: FNV-1a(token) seeds a unit Gaussian vector."""

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ConfigError("embedding dimension must be >= 1")
        self.dim = dim

    @staticmethod
    def fnv1a_64(token: str) -> int:
        h = 0xCBF29CE484222325
        for byte in token.encode("utf-8"):
            h ^= byte
            h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
        return h

    def lookup(self, token: str) -> Optional[np.ndarray]:
        vec = np.random.default_rng(self.fnv1a_64(token)).standard_normal(self.dim)
        return vec / np.linalg.norm(vec)


class DictEmbedder:
    """Token vectors from a mapping; unknown tokens miss."""

    def __init__(self, vectors: Mapping[str, np.ndarray], dim: int):
        self.vectors = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}
        self.dim = dim

    def lookup(self, token: str) -> Optional[np.ndarray]:
        return self.vectors.get(token)


def item_vector(text: str, embedder) -> np.ndarray:
    """Mean embedding of the item's cleaned, stemmed tokens; zeros when none are found."""
    found = [v for v in (embedder.lookup(t) for t in tokenize(text)) if v is not None]
    if not found:
        if text.strip():
            logger.warning(f"No embeddable tokens in item text {text[:40]!r}")
        return np.zeros(embedder.dim)
    return np.mean(found, axis=0)


def embed_item_texts(texts: Mapping[str, str], embedder) -> ItemEmbeddingTable:
    ids = tuple(texts)
    vectors = np.array([item_vector(texts[i], embedder) for i in ids]).reshape(len(ids), embedder.dim)
    return ItemEmbeddingTable(ids, vectors)


def sample_items(items: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k items without replacement, or with replacement when fewer than k exist."""
    return rng.choice(items, size=k, replace=len(items) < k)


def user_content_vector(items: np.ndarray, vectors: np.ndarray, k: int,
                        rng: np.random.Generator, user: str = "?") -> np.ndarray:
    """Mean embedding of k sampled items; `vectors` is catalog-aligned."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    if len(items) == 0:
        raise DataError(f"user {user} has no embeddable items")
    return vectors[sample_items(items, k, rng)].mean(axis=0)


# -------------
# Label propagation dataset
# -------------

def build_labelprop_dataset(train_clicks: ClickMatrix, labels: StyleLabelMatrix,
                            vectors: np.ndarray, k: int = 5, repeats: int = 10,
                            rng: Optional[np.random.Generator] = None,
                            strict: bool = False,
                            users: Optional[Sequence[int]] = None) -> LabeledProfileDataset:
    """Sample users' labeled clicks into (content vector, binary profile) pairs.

    A style is positive when its mean label mass reaches 1/k (`strict`
    switches the comparison to >).
    """
    if repeats < 1 or k < 1:
        raise ConfigError("repeats and k must be >= 1")
    rng = rng or np.random.default_rng(0)
    dense, mask = labels.for_catalog(train_clicks.item_ids)
    theta = 1.0 / k
    users = range(train_clicks.n_users) if users is None else users

    out_vectors, out_profiles, out_users, out_items = [], [], [], []
    dropped = 0
    for _ in range(repeats):
        for u in users:
            clicked = train_clicks.items_of(u)
            labeled = clicked[mask[clicked]]
            if len(labeled) == 0:
                continue
            chosen = sample_items(labeled, k, rng)
            mass = dense[chosen].mean(axis=0)
            profile = (mass > theta) if strict else (mass >= theta)
            if not profile.any():
                dropped += 1
                continue
            out_vectors.append(vectors[chosen].mean(axis=0))
            out_profiles.append(profile.astype(np.float64))
            out_users.append(u)
            out_items.append(chosen)
    if dropped:
        logger.warning(f"Dropped {dropped} samples with no style above the threshold")
    if not out_vectors:
        raise DataError("label propagation produced no samples; no user clicked a labeled item")
    return LabeledProfileDataset(np.array(out_vectors), np.array(out_profiles),
                                 np.array(out_users, dtype=np.int64),
                                 np.array(out_items, dtype=np.int64))


def split_labeled_items(labels: StyleLabelMatrix, fraction: float,
                        rng: np.random.Generator) -> Tuple[StyleLabelMatrix, StyleLabelMatrix]:
    """Hold out a fraction of labeled items for profile validation."""
    if not 0.0 <= fraction < 1.0:
        raise ConfigError("label holdout fraction must be in [0, 1)")
    n_val = int(math.floor(fraction * labels.n_labeled))
    perm = rng.permutation(labels.n_labeled)
    return labels.subset(np.sort(perm[n_val:])), labels.subset(np.sort(perm[:n_val]))


# -------------
# Holdout split
# -------------

def holdout_split(clicks: ClickMatrix, n_heldout: int, mask_fraction: float = 0.2,
                  rng: Optional[np.random.Generator] = None) -> HoldoutSplit:
    """Mask a fraction (floor, at least one) of each heldout user's clicks."""
    if not 0.0 <= mask_fraction < 1.0:
        raise ConfigError("mask fraction must be in [0, 1)")
    if not 0 < n_heldout < clicks.n_users:
        raise ConfigError(f"heldout users must be in [1, {clicks.n_users - 1}], got {n_heldout}")
    rng = rng or np.random.default_rng(0)
    counts = np.diff(clicks.matrix.indptr)
    eligible = np.flatnonzero(counts >= 2)
    if len(eligible) < n_heldout:
        raise DataError(f"only {len(eligible)} users have the 2 clicks a holdout needs")
    heldout = np.sort(rng.choice(eligible, size=n_heldout, replace=False))

    fold_in, masked = [], []
    for u in heldout:
        history = clicks.items_by_recency(u)
        n_mask = min(max(1, int(math.floor(mask_fraction * len(history) + 1e-9))), len(history) - 1)
        hidden = rng.choice(len(history), size=n_mask, replace=False)
        is_hidden = np.zeros(len(history), dtype=bool)
        is_hidden[hidden] = True
        fold_in.append(history[~is_hidden])
        masked.append(np.sort(history[is_hidden]))
    train = clicks.without({int(u): m for u, m in zip(heldout, masked)})
    return HoldoutSplit(train, heldout, tuple(fold_in), tuple(masked))


# -------------
# Synthetic generator
# -------------

@dataclass
class SynthConfig:
    n_users: int = 2000
    n_items: int = 500
    n_styles: int = 8
    dim: int = 32
    density: float = 0.05
    noise: float = 0.5
    multi_style_rate: float = 0.137
    label_coverage: float = 0.2
    background: float = 0.05
    two_style_user_rate: float = 0.3
    popularity_sigma: float = 0.5
    min_clicks: int = 15

    def __post_init__(self):
        if min(self.n_users, self.n_items, self.n_styles, self.dim) < 1:
            raise ConfigError("synthetic sizes must be positive")
        if self.n_styles > self.n_items:
            raise ConfigError("n_styles cannot exceed n_items")
        if not 0.0 < self.density <= 1.0 or self.density * self.n_items < 1.0:
            raise ConfigError("density must give at least one expected click per user")
        if self.min_clicks > self.n_items:
            raise ConfigError("min_clicks cannot exceed n_items")
        for name in ("multi_style_rate", "label_coverage", "background", "two_style_user_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1]")
        if self.noise < 0.0:
            raise ConfigError("noise must be >= 0")


@dataclass(frozen=True)
class SyntheticDataset:
    clicks: ClickMatrix
    embeddings: ItemEmbeddingTable
    labels: StyleLabelMatrix
    preferences: np.ndarray
    dominant: np.ndarray
    item_styles: np.ndarray
    centroids: np.ndarray


def synth_generate(config: SynthConfig, rng: np.random.Generator) -> SyntheticDataset:
    """Planted-style generator.

    Items carry 1-3 styles and sit at the mean of their style centroids plus
    noise; users prefer one or two styles and click items in proportion to
    preference-style affinity times a log-normal item popularity.
    """
    S, I, U, D = config.n_styles, config.n_items, config.n_users, config.dim

    raw = rng.standard_normal((D, S))
    if S <= D:
        q, _ = np.linalg.qr(raw)
        centroids = q[:, :S].T
    else:
        centroids = (raw / np.linalg.norm(raw, axis=0)).T

    item_styles = np.zeros((I, S), dtype=np.int8)
    primary = rng.permutation(np.arange(I) % S)
    item_styles[np.arange(I), primary] = 1
    multi = rng.random(I) < config.multi_style_rate
    for i in np.flatnonzero(multi):
        others = np.delete(np.arange(S), primary[i])
        if len(others) == 0:
            continue
        n_extra = 1 if len(others) == 1 or rng.random() < 0.5 else 2
        item_styles[i, rng.choice(others, size=n_extra, replace=False)] = 1

    vectors = np.empty((I, D))
    for i in range(I):
        vectors[i] = centroids[item_styles[i] == 1].mean(axis=0)
    if config.noise > 0.0:
        vectors += config.noise * rng.standard_normal((I, D)) / np.sqrt(D)

    preferences = np.full((U, S), config.background / S)
    dominant = np.zeros((U, S), dtype=bool)
    for u in range(U):
        n_dom = 2 if S >= 2 and rng.random() < config.two_style_user_rate else 1
        picks = rng.choice(S, size=n_dom, replace=False)
        weights = np.array([1.0]) if n_dom == 1 else np.array([0.6, 0.4])
        preferences[u, picks] += (1.0 - config.background) * weights
        dominant[u, picks] = True

    popularity = rng.lognormal(0.0, config.popularity_sigma, size=I)
    affinity = preferences @ (item_styles / item_styles.sum(axis=1, keepdims=True)).T
    scores = affinity * popularity
    mean_clicks = config.density * I

    pairs = []
    for u in range(U):
        n_clicks = int(np.clip(rng.poisson(mean_clicks), config.min_clicks, I))
        p = scores[u] / scores[u].sum()
        n_clicks = min(n_clicks, int(np.count_nonzero(p)))
        for i in rng.choice(I, size=n_clicks, replace=False, p=p):
            pairs.append((u, int(i)))

    user_ids = [f"u{u:05d}" for u in range(U)]
    item_ids = [f"i{i:05d}" for i in range(I)]
    style_names = tuple(f"style_{s:02d}" for s in range(S))
    clicks, _ = ClickMatrix.from_pairs(user_ids, item_ids, pairs)

    n_labeled = int(round(config.label_coverage * I))
    labeled = np.sort(rng.choice(I, size=n_labeled, replace=False))
    labels = StyleLabelMatrix(tuple(item_ids[i] for i in labeled), style_names, item_styles[labeled])

    return SyntheticDataset(clicks, ItemEmbeddingTable(tuple(item_ids), vectors), labels,
                            preferences, dominant, item_styles, centroids)


def audit_planted_styles(dataset: SyntheticDataset) -> float:
    """Fraction of clicks on items carrying one of the clicking user's dominant styles."""
    coo = dataset.clicks.matrix.tocoo()
    hits = np.any(dataset.item_styles[coo.col].astype(bool) & dataset.dominant[coo.row], axis=1)
    return float(hits.mean()) if len(hits) else 0.0
