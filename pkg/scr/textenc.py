"""
Text encoder: an MLP from user content vectors to interpretable style profiles.

Two hidden ReLU layers with dropout on the input. The plain variant ends in a
sigmoid per style; the gaussian-prior variant emits (mu, log_var) per style,
samples with the reparameterization trick during training and squashes the
code with a sigmoid. Training minimises the per-style Bernoulli cross-entropy
against thresholded label-propagation profiles (plus KL for the Gaussian
variant). A one-layer logistic-regression baseline shares the loss.
"""

import copy
import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit
from tqdm import tqdm

from . import nncore as nn
from .checkpoint import load_checkpoint, save_checkpoint
from .data import LabeledProfileDataset
from .errors import ConfigError, DataError, ShapeError, TrainingDiverged
from .logs import get_logger

logger = get_logger("textenc")

PLAIN = "plain"
GAUSSIAN = "gaussian-prior"


@dataclass(frozen=True)
class UserStyleProfile:
    values: np.ndarray
    style_names: Tuple[str, ...]

    def __post_init__(self):
        if len(self.values) != len(self.style_names):
            raise ShapeError("profile length must match the style vocabulary")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ShapeError("profile values must lie in [0, 1]")

    def top_style(self) -> str:
        return self.style_names[int(np.argmax(self.values))]


@dataclass
class TextEncoderConfig:
    hidden: Tuple[int, int] = (128, 64)
    input_dropout: float = 0.5
    variant: str = PLAIN
    epochs: int = 60
    batch_size: int = 128
    learning_rate: float = 1e-3
    kl_weight: float = 1.0
    seed: int = 0
    progress: bool = False

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ConfigError("text encoder needs two positive hidden sizes")
        if self.variant not in (PLAIN, GAUSSIAN):
            raise ConfigError(f"unknown text encoder variant {self.variant!r}")
        if not 0.0 <= self.input_dropout < 1.0:
            raise ConfigError("input dropout must be in [0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0.0:
            raise ConfigError("epochs, batch size and learning rate must be positive")


@dataclass
class TextEncoderModel:
    layer1: nn.DenseLayer
    layer2: nn.DenseLayer
    head: nn.DenseLayer
    style_names: Tuple[str, ...]
    input_dropout: float = 0.5
    variant: str = PLAIN

    @classmethod
    def create(cls, dim: int, style_names: Sequence[str], hidden=(128, 64),
               input_dropout: float = 0.5, variant: str = PLAIN,
               rng: Optional[np.random.Generator] = None) -> "TextEncoderModel":
        rng = rng or np.random.default_rng(0)
        n_styles = len(style_names)
        head_out = 2 * n_styles if variant == GAUSSIAN else n_styles
        head_act = nn.Activation.IDENTITY if variant == GAUSSIAN else nn.Activation.SIGMOID
        return cls(nn.DenseLayer.glorot(dim, hidden[0], nn.Activation.RELU, rng),
                   nn.DenseLayer.glorot(hidden[0], hidden[1], nn.Activation.RELU, rng),
                   nn.DenseLayer.glorot(hidden[1], head_out, head_act, rng),
                   tuple(style_names), input_dropout, variant)

    @classmethod
    def zeros(cls, dim: int, style_names: Sequence[str], hidden=(128, 64)) -> "TextEncoderModel":
        n = len(style_names)
        return cls(nn.DenseLayer.zeros(dim, hidden[0], nn.Activation.RELU),
                   nn.DenseLayer.zeros(hidden[0], hidden[1], nn.Activation.RELU),
                   nn.DenseLayer.zeros(hidden[1], n, nn.Activation.SIGMOID),
                   tuple(style_names), 0.0, PLAIN)

    @property
    def dim(self) -> int:
        return self.layer1.n_in

    @property
    def n_styles(self) -> int:
        return len(self.style_names)

    def layers(self) -> List[nn.DenseLayer]:
        return [self.layer1, self.layer2, self.head]

    def parameters(self) -> List[np.ndarray]:
        return [p for layer in self.layers() for p in layer.parameters()]

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for p in self.parameters():
            digest.update(np.ascontiguousarray(p).tobytes())
        return digest.hexdigest()


# -------------
# Inference
# -------------

def encode_batch(model: TextEncoderModel, x: np.ndarray) -> np.ndarray:
    """Deterministic profiles for a batch of content vectors (no dropout, eps=0)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != model.dim:
        raise ShapeError(f"content vectors must have length {model.dim}, got {x.shape[1]}")
    h = nn.forward(model.layer2, nn.forward(model.layer1, x))
    out = nn.forward(model.head, h)
    if model.variant == GAUSSIAN:
        return expit(out[:, : model.n_styles])
    return out


def encode(model: TextEncoderModel, x_t: np.ndarray) -> UserStyleProfile:
    return UserStyleProfile(encode_batch(model, x_t)[0], model.style_names)


def profile_forward(model: TextEncoderModel, x: np.ndarray,
                    dropout: Optional[np.ndarray] = None) -> Tuple[np.ndarray, list]:
    """Plain-variant profiles with the caches profile_backward needs."""
    if model.variant != PLAIN:
        raise ConfigError("only the plain text encoder can be trained through the click VAE")
    x_in = x if dropout is None else x * dropout
    h1, c1 = nn.forward_cached(model.layer1, x_in)
    h2, c2 = nn.forward_cached(model.layer2, h1)
    out, c3 = nn.forward_cached(model.head, h2)
    return out, [c1, c2, c3]


def profile_backward(model: TextEncoderModel, caches: list,
                     g_profile: np.ndarray) -> List[np.ndarray]:
    """Parameter gradients (aligned with parameters()) given d loss / d profile."""
    c1, c2, c3 = caches
    g_h2, g3 = nn.backward(model.head, c3, g_profile)
    g_h1, g2 = nn.backward(model.layer2, c2, g_h2)
    _, g1 = nn.backward(model.layer1, c1, g_h1)
    return g1 + g2 + g3


# -------------
# Loss and gradients
# -------------

def loss_and_grads(model: TextEncoderModel, x: np.ndarray, targets: np.ndarray,
                   dropout: Optional[np.ndarray] = None, eps: Optional[np.ndarray] = None,
                   kl_weight: float = 1.0) -> Tuple[float, List[np.ndarray]]:
    """Batch-mean label propagation loss and gradients aligned with parameters().

    `dropout` is an input mask (None = no dropout); `eps` is the Gaussian noise
    for the gaussian-prior variant (None = zeros).
    """
    batch = x.shape[0]
    x_in = x if dropout is None else x * dropout
    h1, c1 = nn.forward_cached(model.layer1, x_in)
    h2, c2 = nn.forward_cached(model.layer2, h1)
    out, c3 = nn.forward_cached(model.head, h2)

    if model.variant == GAUSSIAN:
        s = model.n_styles
        params = nn.GaussianParams(out[:, :s], out[:, s:])
        noise = np.zeros_like(params.mu) if eps is None else eps
        sigma = np.exp(0.5 * params.log_var)
        probs = expit(params.mu + sigma * noise)
        kl = nn.gaussian_kl(params)
        loss = (nn.multilabel_bce(targets, probs) + kl_weight * kl) / batch
        g_z = nn.multilabel_bce_grad(targets, probs) * probs * (1.0 - probs)
        g_mu, g_lv = nn.gaussian_kl_grad(params)
        g_out = np.hstack([g_z + kl_weight * g_mu,
                           g_z * noise * 0.5 * sigma + kl_weight * g_lv]) / batch
    else:
        loss = nn.multilabel_bce(targets, out) / batch
        g_out = nn.multilabel_bce_grad(targets, out) / batch

    g_h2, g3 = nn.backward(model.head, c3, g_out)
    g_h1, g2 = nn.backward(model.layer2, c2, g_h2)
    _, g1 = nn.backward(model.layer1, c1, g_h1)
    return loss, g1 + g2 + g3


# -------------
# Training
# -------------

def _check_dataset(model_dim: int, n_styles: int, dataset: LabeledProfileDataset) -> None:
    if len(dataset) == 0:
        raise DataError("empty label propagation dataset")
    if dataset.vectors.shape[1] != model_dim or dataset.n_styles != n_styles:
        raise ShapeError("dataset dimensions do not match the model")


def train_text_encoder(model: TextEncoderModel, dataset: LabeledProfileDataset,
                       config: TextEncoderConfig) -> Tuple[TextEncoderModel, List[float]]:
    """Minibatch Adam on the label propagation loss; returns the model and per-epoch mean loss."""
    _check_dataset(model.dim, model.n_styles, dataset)
    rng = np.random.default_rng(config.seed)
    params = model.parameters()
    state = nn.AdamState.for_params(params, learning_rate=config.learning_rate)
    last_good = copy.deepcopy(model)
    curve: List[float] = []
    n = len(dataset)

    epochs = tqdm(range(config.epochs), desc="text encoder", disable=not config.progress)
    for epoch in epochs:
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start: start + config.batch_size]
            x, y = dataset.vectors[idx], dataset.profiles[idx]
            mask = nn.dropout_mask(x.shape, model.input_dropout, rng) if model.input_dropout else None
            eps = rng.standard_normal((len(idx), model.n_styles)) if model.variant == GAUSSIAN else None
            loss, grads = loss_and_grads(model, x, y, mask, eps, config.kl_weight)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite text encoder loss at epoch {epoch + 1}",
                                       last_good, state.step)
            nn.adam_step(state, params, grads)
            total += loss * len(idx)
        curve.append(total / n)
        last_good = copy.deepcopy(model)
        epochs.set_postfix(loss=f"{curve[-1]:.4f}")
        logger.debug(f"epoch {epoch + 1}/{config.epochs} loss {curve[-1]:.5f}")
    logger.info(f"Trained text encoder ({model.variant}) for {config.epochs} epochs, "
                f"final loss {curve[-1]:.4f}")
    return model, curve


def curve_improved(curve: Sequence[float]) -> bool:
    """Mean of the last 10% of epochs is below the mean of the first 10%."""
    n = max(1, len(curve) // 10)
    return float(np.mean(curve[-n:])) < float(np.mean(curve[:n]))


# -------------
# Logistic regression baseline
# -------------

@dataclass
class LogisticBaseline:
    """One sigmoid-linear classifier per style, fitted jointly."""
    layer: nn.DenseLayer
    style_names: Tuple[str, ...]
    curve: List[float] = field(default_factory=list)

    def parameters(self) -> List[np.ndarray]:
        return self.layer.parameters()

    def predict(self, x: np.ndarray) -> np.ndarray:
        return nn.forward(self.layer, np.atleast_2d(x))


def lr_loss_and_grads(baseline: LogisticBaseline, x: np.ndarray,
                      targets: np.ndarray) -> Tuple[float, List[np.ndarray]]:
    probs, cache = nn.forward_cached(baseline.layer, x)
    batch = x.shape[0]
    loss = nn.multilabel_bce(targets, probs) / batch
    _, grads = nn.backward(baseline.layer, cache, nn.multilabel_bce_grad(targets, probs) / batch)
    return loss, grads


def lr_baseline(train: LabeledProfileDataset, test: LabeledProfileDataset,
                style_names: Sequence[str], epochs: int = 30, batch_size: int = 128,
                learning_rate: float = 1e-2, seed: int = 0
                ) -> Tuple[LogisticBaseline, Dict[str, Optional[float]]]:
    """Fit the all-vs-one logistic regression and report per-style AUC on `test`."""
    from .evaluation import per_style_auc

    _check_dataset(train.vectors.shape[1], len(style_names), train)
    rng = np.random.default_rng(seed)
    baseline = LogisticBaseline(
        nn.DenseLayer.zeros(train.vectors.shape[1], len(style_names), nn.Activation.SIGMOID),
        tuple(style_names))
    params = baseline.parameters()
    state = nn.AdamState.for_params(params, learning_rate=learning_rate)
    n = len(train)
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start: start + batch_size]
            loss, grads = lr_loss_and_grads(baseline, train.vectors[idx], train.profiles[idx])
            nn.adam_step(state, params, grads)
            total += loss * len(idx)
        baseline.curve.append(total / n)
    report = per_style_auc(baseline.predict(test.vectors), test.profiles, style_names)
    logger.info("LR baseline AUC: " + ", ".join(
        f"{k}={'NA' if v is None else f'{v:.3f}'}" for k, v in report.items()))
    return baseline, report


# -------------
# Checkpoints
# -------------

def save_model(path, model: TextEncoderModel, reference: Dict[str, str]) -> None:
    header = dict(reference, kind="text-encoder", variant=model.variant,
                  input_dropout=repr(model.input_dropout))
    tensors = {}
    for name, layer in zip(("layer1", "layer2", "head"), model.layers()):
        tensors[f"{name}.weights"] = layer.weights
        tensors[f"{name}.bias"] = layer.bias.reshape(1, -1)
    save_checkpoint(path, header, tensors)


def load_model(path) -> Tuple[TextEncoderModel, Dict[str, str]]:
    header, tensors = load_checkpoint(path)
    if header.get("kind") != "text-encoder":
        raise DataError(f"{path} is not a text encoder checkpoint")
    variant = header.get("variant", PLAIN)
    acts = (nn.Activation.RELU, nn.Activation.RELU,
            nn.Activation.IDENTITY if variant == GAUSSIAN else nn.Activation.SIGMOID)
    layers = [nn.DenseLayer(tensors[f"{n}.weights"], tensors[f"{n}.bias"].ravel(), a)
              for n, a in zip(("layer1", "layer2", "head"), acts)]
    styles = tuple(s for s in header.get("styles", "").split("|") if s)
    model = TextEncoderModel(*layers, style_names=styles,
                             input_dropout=float(header.get("input_dropout", "0.0")), variant=variant)
    return model, header
