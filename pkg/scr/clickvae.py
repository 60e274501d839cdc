"""
Conditional VAE over click vectors.

Encoder:  [normalised clicks | z_T] -> tanh hidden -> (mu, log_var)
Decoder:  [dropout(z_C) | z_T] -> tanh hidden -> softmax over items

The style profile z_T comes from the frozen text encoder (or, for the
no-label-propagation ablation, from one trained jointly through this loss)
and is concatenated to both inputs. Dropout covers z_C only; in training a
share of rows (`condition_only_rate`) decode from z_T alone with z_C zeroed.
A model built with zero styles is the unconditioned VAE-CF ablation.
"""

import copy
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from . import nncore as nn
from . import textenc
from .checkpoint import load_checkpoint, save_checkpoint
from .data import ClickMatrix, sample_items
from .errors import ConfigError, DataError, NumericError, ShapeError, TrainingDiverged
from .logs import get_logger

logger = get_logger("clickvae")

SAMPLE_K = "sample-k"
LAST_K = "last-k"
MODES = (SAMPLE_K, LAST_K)


@dataclass
class TrainingConfig:
    beta: float = 0.17
    k: int = 5
    epochs: int = 60
    batch_size: int = 100
    learning_rate: float = 1e-3
    latent_dim: int = 32
    hidden_dim: int = 100
    seed: int = 0
    decoder_dropout: float = 0.5
    condition_only_rate: float = 0.25
    joint_text_encoder: bool = False
    beta_warmup: bool = False
    warmup_fraction: float = 0.2
    progress: bool = False

    def __post_init__(self):
        if self.beta < 0.0:
            raise ConfigError("beta must be >= 0")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.latent_dim < 1 or self.hidden_dim < 1:
            raise ConfigError("latent and hidden sizes must be >= 1")
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0.0:
            raise ConfigError("epochs, batch size and learning rate must be positive")
        if not 0.0 <= self.decoder_dropout < 1.0:
            raise ConfigError("decoder dropout must be in [0, 1)")
        if not 0.0 <= self.condition_only_rate < 1.0:
            raise ConfigError("condition-only rate must be in [0, 1)")
        if not 0.0 < self.warmup_fraction <= 1.0:
            raise ConfigError("warm-up fraction must be in (0, 1]")


@dataclass
class ClickVaeModel:
    encoder_hidden: nn.DenseLayer
    encoder_head: nn.DenseLayer
    decoder_hidden: nn.DenseLayer
    decoder_head: nn.DenseLayer
    n_items: int
    n_styles: int
    latent_dim: int
    decoder_dropout: float = 0.5

    def __post_init__(self):
        if self.encoder_hidden.n_in != self.n_items + self.n_styles:
            raise ShapeError("encoder input width must be items + styles")
        if self.encoder_head.n_out != 2 * self.latent_dim:
            raise ShapeError("encoder head must emit 2 x latent_dim values")
        if self.decoder_hidden.n_in != self.latent_dim + self.n_styles:
            raise ShapeError("decoder input width must be latent_dim + styles")
        if self.decoder_head.n_out != self.n_items:
            raise ShapeError("decoder must emit one probability per item")

    @classmethod
    def create(cls, n_items: int, n_styles: int, hidden_dim: int = 100, latent_dim: int = 32,
               decoder_dropout: float = 0.5,
               rng: Optional[np.random.Generator] = None) -> "ClickVaeModel":
        rng = rng or np.random.default_rng(0)
        A = nn.Activation
        return cls(nn.DenseLayer.glorot(n_items + n_styles, hidden_dim, A.TANH, rng),
                   nn.DenseLayer.glorot(hidden_dim, 2 * latent_dim, A.IDENTITY, rng),
                   nn.DenseLayer.glorot(latent_dim + n_styles, hidden_dim, A.TANH, rng),
                   nn.DenseLayer.glorot(hidden_dim, n_items, A.SOFTMAX, rng),
                   n_items, n_styles, latent_dim, decoder_dropout)

    @classmethod
    def zeros(cls, n_items: int, n_styles: int, hidden_dim: int = 8,
              latent_dim: int = 4) -> "ClickVaeModel":
        A = nn.Activation
        return cls(nn.DenseLayer.zeros(n_items + n_styles, hidden_dim, A.TANH),
                   nn.DenseLayer.zeros(hidden_dim, 2 * latent_dim, A.IDENTITY),
                   nn.DenseLayer.zeros(latent_dim + n_styles, hidden_dim, A.TANH),
                   nn.DenseLayer.zeros(hidden_dim, n_items, A.SOFTMAX),
                   n_items, n_styles, latent_dim, 0.0)

    @property
    def conditioned(self) -> bool:
        return self.n_styles > 0

    def layers(self) -> List[nn.DenseLayer]:
        return [self.encoder_hidden, self.encoder_head, self.decoder_hidden, self.decoder_head]

    def parameters(self) -> List[np.ndarray]:
        return [p for layer in self.layers() for p in layer.parameters()]


def normalize_clicks(x_c: np.ndarray) -> np.ndarray:
    """Binarise then L2-normalise each row; empty rows stay zero."""
    binary = (np.atleast_2d(x_c) > 0).astype(np.float64)
    norms = np.linalg.norm(binary, axis=1, keepdims=True)
    return binary / np.where(norms > 0.0, norms, 1.0)


def _condition(model: ClickVaeModel, z_t, rows: int) -> np.ndarray:
    if z_t is None:
        z_t = np.zeros((rows, model.n_styles))
    z_t = np.asarray(getattr(z_t, "values", z_t), dtype=np.float64)
    if z_t.size == 0:
        z_t = np.zeros((rows, 0))
    elif z_t.ndim == 1:
        z_t = np.tile(z_t, (rows, 1))
    if z_t.shape[1] != model.n_styles:
        raise ShapeError(f"condition has {z_t.shape[1]} styles, model expects {model.n_styles}")
    return z_t


# -------------
# Encoder / sampling / decoder
# -------------

def encode_clicks(model: ClickVaeModel, x_c: np.ndarray, z_t=None) -> nn.GaussianParams:
    """q(z_C | x_C, z_T); returns one row per input row (a vector for a single user)."""
    single = np.ndim(x_c) == 1
    x = np.atleast_2d(np.asarray(x_c, dtype=np.float64))
    if x.shape[1] != model.n_items:
        raise ShapeError(f"click vectors must have {model.n_items} items, got {x.shape[1]}")
    enc_in = np.hstack([normalize_clicks(x), _condition(model, z_t, x.shape[0])])
    stats = nn.forward(model.encoder_head, nn.forward(model.encoder_hidden, enc_in))
    mu, log_var = stats[:, : model.latent_dim], stats[:, model.latent_dim:]
    if single:
        mu, log_var = mu[0], log_var[0]
    return nn.GaussianParams(mu, log_var)


def reparameterize(params: nn.GaussianParams, epsilon: np.ndarray) -> np.ndarray:
    """z = mu + exp(0.5 * log_var) * epsilon."""
    epsilon = np.asarray(epsilon, dtype=np.float64)
    if epsilon.shape != params.mu.shape:
        raise ShapeError(f"epsilon {epsilon.shape} does not match mu {params.mu.shape}")
    return params.mu + np.exp(0.5 * params.log_var) * epsilon


def decode_clicks(model: ClickVaeModel, z_c: np.ndarray, z_t=None, training: bool = False,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Softmax over items; decoder-input dropout only in training mode."""
    single = np.ndim(z_c) == 1
    z = np.atleast_2d(np.asarray(z_c, dtype=np.float64))
    if z.shape[1] != model.latent_dim:
        raise ShapeError(f"latent code must have length {model.latent_dim}, got {z.shape[1]}")
    z = z * nn.dropout_mask(z.shape, model.decoder_dropout, rng, training)
    dec_in = np.hstack([z, _condition(model, z_t, z.shape[0])])
    probs = nn.forward(model.decoder_head, nn.forward(model.decoder_hidden, dec_in))
    return probs[0] if single else probs


def cvae_loss(x_c: np.ndarray, probs: np.ndarray, params: nn.GaussianParams, beta: float) -> float:
    """Negative beta-ELBO: multinomial NLL + beta * KL (summed over the batch)."""
    targets = (np.asarray(x_c) > 0).astype(np.float64)
    return nn.multinomial_nll(targets, probs) + beta * nn.gaussian_kl(params)


@dataclass
class StepStats:
    nll: float
    kl_rows: np.ndarray
    row_sums: np.ndarray
    condition_grad: np.ndarray


def latent_mask(rows: int, latent_dim: int, dropout: float, condition_only_rate: float,
                rng: np.random.Generator) -> Optional[np.ndarray]:
    """Training mask over z_C: inverted dropout per entry, whole rows zeroed at `condition_only_rate`."""
    if not dropout and not condition_only_rate:
        return None
    mask = nn.dropout_mask((rows, latent_dim), dropout, rng)
    if condition_only_rate:
        mask[rng.random(rows) < condition_only_rate] = 0.0
    return mask


def loss_and_grads(model: ClickVaeModel, x_c: np.ndarray, z_t: np.ndarray, eps: np.ndarray,
                   beta: float, z_mask: Optional[np.ndarray] = None
                   ) -> Tuple[float, List[np.ndarray], StepStats]:
    """Batch-mean loss with gradients aligned with model.parameters().

    `z_mask` multiplies z_C on its way into the decoder. The gradient with
    respect to z_T is returned in the stats, for training the text encoder
    through the ELBO.
    """
    batch = x_c.shape[0]
    L = model.latent_dim
    targets = (x_c > 0).astype(np.float64)
    z_t = _condition(model, z_t, batch)

    enc_in = np.hstack([normalize_clicks(x_c), z_t])
    h1, c1 = nn.forward_cached(model.encoder_hidden, enc_in)
    stats, c2 = nn.forward_cached(model.encoder_head, h1)
    params = nn.GaussianParams(stats[:, :L], stats[:, L:])
    sigma = np.exp(0.5 * params.log_var)
    z = params.mu + sigma * eps
    if z_mask is not None:
        z = z * z_mask

    h2, c3 = nn.forward_cached(model.decoder_hidden, np.hstack([z, z_t]))
    probs, c4 = nn.forward_cached(model.decoder_head, h2)

    nll = nn.multinomial_nll(targets, probs)
    loss = (nll + beta * nn.gaussian_kl(params)) / batch

    g_probs = nn.multinomial_nll_grad(targets, probs) / batch
    g_h2, g4 = nn.backward(model.decoder_head, c4, g_probs)
    g_dec_in, g3 = nn.backward(model.decoder_hidden, c3, g_h2)
    g_z = g_dec_in[:, :L]
    if z_mask is not None:
        g_z = g_z * z_mask
    k_mu, k_lv = nn.gaussian_kl_grad(params)
    g_stats = np.hstack([g_z + beta * k_mu / batch,
                         g_z * eps * 0.5 * sigma + beta * k_lv / batch])
    g_h1, g2 = nn.backward(model.encoder_head, c2, g_stats)
    g_enc_in, g1 = nn.backward(model.encoder_hidden, c1, g_h1)
    g_zt = g_dec_in[:, L:] + g_enc_in[:, model.n_items:]
    return loss, g1 + g2 + g3 + g4, StepStats(nll, nn.gaussian_kl_rows(params), probs.sum(axis=1),
                                              g_zt)


# -------------
# Profiles for the condition
# -------------

def content_items(items: np.ndarray, k: int, mode: str, rng: Optional[np.random.Generator]) -> np.ndarray:
    """Items used for the content vector: k random ones, or the k most recent."""
    if mode == LAST_K:
        return items[-k:]
    if mode != SAMPLE_K:
        raise ConfigError(f"unknown inference mode {mode!r}; expected one of {MODES}")
    return sample_items(items, k, rng or np.random.default_rng(0))


def user_profile(model: ClickVaeModel, text_encoder: Optional[textenc.TextEncoderModel],
                 items: np.ndarray, vectors: np.ndarray, k: int = 5, mode: str = SAMPLE_K,
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Learned z_T for a user from their (arrival-ordered) items."""
    if not model.conditioned:
        return np.zeros(0)
    if text_encoder is None:
        return np.zeros(model.n_styles)
    if len(items) == 0:
        raise DataError("user has no fold-in clicks")
    chosen = content_items(np.asarray(items), k, mode, rng)
    return textenc.encode_batch(text_encoder, vectors[chosen].mean(axis=0))[0]


def epoch_content(clicks: ClickMatrix, vectors: np.ndarray, k: int,
                  rng: np.random.Generator) -> np.ndarray:
    """One content vector per user from k freshly sampled clicks; zeros for users without clicks."""
    content = np.zeros((clicks.n_users, vectors.shape[1]))
    for u in range(clicks.n_users):
        items = clicks.items_of(u)
        if len(items):
            content[u] = vectors[sample_items(items, k, rng)].mean(axis=0)
    return content


def epoch_profiles(model: ClickVaeModel, text_encoder, clicks: ClickMatrix, vectors: np.ndarray,
                   k: int, rng: np.random.Generator) -> np.ndarray:
    """Freshly sampled profiles for every user (one content resample per epoch)."""
    if not model.conditioned:
        return np.zeros((clicks.n_users, 0))
    if text_encoder is None:
        return np.zeros((clicks.n_users, model.n_styles))
    return textenc.encode_batch(text_encoder, epoch_content(clicks, vectors, k, rng))


# -------------
# Training
# -------------

def train_click_vae(model: ClickVaeModel, clicks: ClickMatrix,
                    text_encoder: Optional[textenc.TextEncoderModel], vectors: np.ndarray,
                    config: TrainingConfig) -> Tuple[ClickVaeModel, List[float]]:
    """Minibatch Adam on the negative beta-ELBO.

    The text encoder stays frozen unless `config.joint_text_encoder` is set;
    then it is updated in place by the ELBO gradient alone (no label
    propagation term).
    """
    if clicks.n_items != model.n_items:
        raise ShapeError("click matrix width does not match the model")
    joint = config.joint_text_encoder
    if joint and (text_encoder is None or not model.conditioned):
        raise ConfigError("joint training needs a text encoder and a conditioned model")
    if joint and text_encoder.variant != textenc.PLAIN:
        raise ConfigError("joint training supports the plain text encoder only")
    rng = np.random.default_rng(config.seed)
    frozen = text_encoder.fingerprint() if text_encoder is not None else None
    params = model.parameters() + (text_encoder.parameters() if joint else [])
    state = nn.AdamState.for_params(params, learning_rate=config.learning_rate)
    users = np.flatnonzero(np.diff(clicks.matrix.indptr) > 0)
    n_batches = -(-len(users) // config.batch_size)
    warmup_steps = max(1, int(config.warmup_fraction * config.epochs * n_batches))
    condition_only = config.condition_only_rate if model.conditioned else 0.0
    last_good = copy.deepcopy(model)
    curve: List[float] = []

    epochs = tqdm(range(config.epochs), desc="click vae", disable=not config.progress)
    for epoch in epochs:
        if joint:
            content = epoch_content(clicks, vectors, config.k, rng)
        else:
            profiles = epoch_profiles(model, text_encoder, clicks, vectors, config.k, rng)
        order = rng.permutation(users)
        total = 0.0
        for start in range(0, len(order), config.batch_size):
            idx = order[start: start + config.batch_size]
            beta = config.beta
            if config.beta_warmup:
                beta *= min(1.0, (state.step + 1) / warmup_steps)
            if joint:
                text_mask = None
                if text_encoder.input_dropout:
                    text_mask = nn.dropout_mask(content[idx].shape, text_encoder.input_dropout, rng)
                z_t, caches = textenc.profile_forward(text_encoder, content[idx], text_mask)
            else:
                z_t = profiles[idx]
            eps = rng.standard_normal((len(idx), model.latent_dim))
            mask = latent_mask(len(idx), model.latent_dim, model.decoder_dropout, condition_only, rng)
            loss, grads, stats = loss_and_grads(model, clicks.dense_rows(idx), z_t, eps, beta, mask)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite click VAE loss at epoch {epoch + 1}",
                                       last_good, state.step)
            if np.any(stats.kl_rows < -1e-12):
                raise NumericError(f"negative KL at step {state.step + 1}")
            if np.max(np.abs(stats.row_sums - 1.0)) > 1e-6:
                raise NumericError(f"decoder rows do not sum to 1 at step {state.step + 1}")
            if joint:
                grads = grads + textenc.profile_backward(text_encoder, caches, stats.condition_grad)
            nn.adam_step(state, params, grads)
            total += loss * len(idx)
        curve.append(total / max(len(users), 1))
        last_good = copy.deepcopy(model)
        epochs.set_postfix(loss=f"{curve[-1]:.3f}")
        logger.debug(f"epoch {epoch + 1}/{config.epochs} loss {curve[-1]:.4f}")

    if not joint and text_encoder is not None and text_encoder.fingerprint() != frozen:
        raise NumericError("text encoder parameters changed during click VAE training")
    kind = "joint" if joint else ("conditioned" if model.conditioned else "unconditioned")
    logger.info(f"Trained click VAE ({kind}) for {config.epochs} epochs, final loss {curve[-1]:.3f}")
    return model, curve


# -------------
# Recommendation
# -------------

def rank_items(model: ClickVaeModel, fold_in: np.ndarray, z_enc: np.ndarray, z_dec: np.ndarray,
               top_n: int) -> List[int]:
    """Top-n unseen items from the posterior-mean reconstruction.

    Ties break towards the lower item index.
    """
    if len(fold_in) == 0:
        raise DataError("user has no fold-in clicks")
    x = np.zeros(model.n_items)
    x[np.asarray(fold_in)] = 1.0
    mu = encode_clicks(model, x, z_enc).mu
    probs = decode_clicks(model, mu, z_dec)
    ranking = np.lexsort((np.arange(model.n_items), -probs))
    seen = np.zeros(model.n_items, dtype=bool)
    seen[np.asarray(fold_in)] = True
    ranking = ranking[~seen[ranking]]
    return [int(i) for i in ranking[: max(top_n, 0)]]


def recommend(model: ClickVaeModel, text_encoder: Optional[textenc.TextEncoderModel],
              fold_in: np.ndarray, vectors: np.ndarray, top_n: int, mode: str = SAMPLE_K,
              k: int = 5, rng: Optional[np.random.Generator] = None) -> List[int]:
    """Top-n recommendations conditioned on the user's own learned profile."""
    z_t = user_profile(model, text_encoder, fold_in, vectors, k, mode, rng)
    return rank_items(model, fold_in, z_t, z_t, top_n)


# -------------
# Checkpoints
# -------------

_LAYER_NAMES = ("encoder_hidden", "encoder_head", "decoder_hidden", "decoder_head")


def save_model(path, model: ClickVaeModel, reference: Dict[str, str]) -> None:
    header = dict(reference, kind="click-vae", n_items=str(model.n_items),
                  n_styles=str(model.n_styles), latent_dim=str(model.latent_dim),
                  decoder_dropout=repr(model.decoder_dropout))
    tensors = {}
    for name, layer in zip(_LAYER_NAMES, model.layers()):
        tensors[f"{name}.weights"] = layer.weights
        tensors[f"{name}.bias"] = layer.bias.reshape(1, -1)
    save_checkpoint(path, header, tensors)


def load_model(path) -> Tuple[ClickVaeModel, Dict[str, str]]:
    header, tensors = load_checkpoint(path)
    if header.get("kind") != "click-vae":
        raise DataError(f"{path} is not a click VAE checkpoint")
    A = nn.Activation
    acts = (A.TANH, A.IDENTITY, A.TANH, A.SOFTMAX)
    layers = [nn.DenseLayer(tensors[f"{n}.weights"], tensors[f"{n}.bias"].ravel(), a)
              for n, a in zip(_LAYER_NAMES, acts)]
    model = ClickVaeModel(*layers, n_items=int(header["n_items"]), n_styles=int(header["n_styles"]),
                          latent_dim=int(header["latent_dim"]),
                          decoder_dropout=float(header["decoder_dropout"]))
    return model, header
