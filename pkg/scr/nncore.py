"""
Minimal neural-network kernel: dense layers, activations, losses, Adam and
finite-difference gradient checking.

Everything works on float64 numpy arrays. A `Tensor2` is simply a 2-D array
(rows x cols); layers are plain dataclasses and the forward / backward passes
are free functions so that both encoders and the decoder can be assembled
from the same pieces and differentiated by hand.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, softmax

from .errors import ConfigError, DomainError, NumericError, ShapeError

Tensor2 = np.ndarray

MULTINOMIAL_FLOOR = 1e-10
BCE_CLAMP = 1e-7


class Activation(str, Enum):
    TANH = "tanh"
    RELU = "relu"
    SIGMOID = "sigmoid"
    SOFTMAX = "softmax"
    IDENTITY = "identity"


def as_tensor2(values, name: str = "input") -> Tensor2:
    """Validate and convert to a finite float64 matrix."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    return arr


def activate(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.TANH:
        return np.tanh(z)
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.SIGMOID:
        return expit(z)
    if kind is Activation.SOFTMAX:
        return softmax(z, axis=1)
    return z


def activation_backward(kind: Activation, z: np.ndarray, out: np.ndarray,
                        grad: np.ndarray) -> np.ndarray:
    """Gradient w.r.t. the pre-activation given the gradient w.r.t. the output."""
    if kind is Activation.TANH:
        return grad * (1.0 - out ** 2)
    if kind is Activation.RELU:
        return grad * (z > 0.0)
    if kind is Activation.SIGMOID:
        return grad * out * (1.0 - out)
    if kind is Activation.SOFTMAX:
        # Jacobian-vector product of a row-wise softmax
        return out * (grad - np.sum(grad * out, axis=1, keepdims=True))
    return grad


# -------------
# Dense layer
# -------------

@dataclass
class DenseLayer:
    """Affine map followed by a fixed activation: act(x @ W + b)."""
    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        self.activation = Activation(self.activation)
        if self.weights.ndim != 2:
            raise ShapeError(f"weights must be 2-D, got {self.weights.shape}")
        if self.bias.shape[0] != self.weights.shape[1]:
            raise ShapeError(
                f"bias length {self.bias.shape[0]} != weights.cols {self.weights.shape[1]}")

    @classmethod
    def glorot(cls, n_in: int, n_out: int, activation: Activation,
               rng: np.random.Generator) -> "DenseLayer":
        limit = np.sqrt(6.0 / max(n_in + n_out, 1))
        return cls(rng.uniform(-limit, limit, size=(n_in, n_out)), np.zeros(n_out), activation)

    @classmethod
    def zeros(cls, n_in: int, n_out: int, activation: Activation) -> "DenseLayer":
        return cls(np.zeros((n_in, n_out)), np.zeros(n_out), activation)

    @property
    def n_in(self) -> int:
        return self.weights.shape[0]

    @property
    def n_out(self) -> int:
        return self.weights.shape[1]

    def parameters(self) -> List[np.ndarray]:
        return [self.weights, self.bias]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weights.copy(), self.bias.copy(), self.activation)


@dataclass
class LayerCache:
    inputs: np.ndarray
    pre_activation: np.ndarray
    outputs: np.ndarray


def forward(layer: DenseLayer, inputs: Tensor2) -> Tensor2:
    """Inference forward pass: activation(inputs @ weights + bias)."""
    return forward_cached(layer, inputs)[0]


def forward_cached(layer: DenseLayer, inputs: Tensor2) -> Tuple[Tensor2, LayerCache]:
    if inputs.ndim != 2 or inputs.shape[1] != layer.n_in:
        raise ShapeError(
            f"layer expects {layer.n_in} input columns, got shape {np.shape(inputs)}")
    z = inputs @ layer.weights + layer.bias
    out = activate(layer.activation, z)
    return out, LayerCache(inputs, z, out)


def backward(layer: DenseLayer, cache: LayerCache,
             grad_out: np.ndarray) -> Tuple[np.ndarray, List[np.ndarray]]:
    """Returns (gradient w.r.t. inputs, [dW, db])."""
    dz = activation_backward(layer.activation, cache.pre_activation, cache.outputs, grad_out)
    d_weights = cache.inputs.T @ dz
    d_bias = dz.sum(axis=0)
    d_inputs = dz @ layer.weights.T
    return d_inputs, [d_weights, d_bias]


# -------------
# Gaussian parameters
# -------------

@dataclass
class GaussianParams:
    """Diagonal Gaussian stored as mean and log-variance (per row when batched)."""
    mu: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.log_var = np.asarray(self.log_var, dtype=np.float64)
        if self.mu.shape != self.log_var.shape:
            raise ShapeError(f"mu {self.mu.shape} and log_var {self.log_var.shape} differ")

    @property
    def variance(self) -> np.ndarray:
        return np.exp(self.log_var)


# -------------
# Losses
# -------------

def _same_shape(targets: np.ndarray, probs: np.ndarray) -> None:
    if np.shape(targets) != np.shape(probs):
        raise ShapeError(f"targets {np.shape(targets)} and probs {np.shape(probs)} differ")


def multinomial_nll(targets: Tensor2, probs: Tensor2) -> float:
    """-sum t * log(p + floor) over all rows; probs rows must be distributions."""
    _same_shape(targets, probs)
    if np.any(probs < 0.0):
        raise DomainError("negative probability")
    if probs.size and np.max(np.abs(probs.sum(axis=-1) - 1.0)) > 1e-6:
        raise DomainError("probability rows do not sum to 1")
    return float(-np.sum(targets * np.log(probs + MULTINOMIAL_FLOOR)))


def multinomial_nll_grad(targets: Tensor2, probs: Tensor2) -> Tensor2:
    return -targets / (probs + MULTINOMIAL_FLOOR)


def multilabel_bce(targets: Tensor2, probs: Tensor2) -> float:
    """Sum of independent per-style Bernoulli cross-entropies."""
    _same_shape(targets, probs)
    p = np.clip(probs, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(-np.sum(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p)))


def multilabel_bce_grad(targets: Tensor2, probs: Tensor2) -> Tensor2:
    p = np.clip(probs, BCE_CLAMP, 1.0 - BCE_CLAMP)
    grad = -(targets / p - (1.0 - targets) / (1.0 - p))
    inside = (probs > BCE_CLAMP) & (probs < 1.0 - BCE_CLAMP)
    return grad * inside


def gaussian_kl(params: GaussianParams) -> float:
    """KL(q || N(0, I)) = 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)."""
    if not (np.all(np.isfinite(params.mu)) and np.all(np.isfinite(params.log_var))):
        raise DomainError("non-finite Gaussian parameters")
    total = 0.5 * np.sum(params.mu ** 2 + np.expm1(params.log_var) - params.log_var)
    return max(float(total), 0.0)


def gaussian_kl_rows(params: GaussianParams) -> np.ndarray:
    """Per-row KL for a batch of Gaussians."""
    return 0.5 * np.sum(params.mu ** 2 + np.expm1(params.log_var) - params.log_var, axis=-1)


def gaussian_kl_grad(params: GaussianParams) -> Tuple[np.ndarray, np.ndarray]:
    return params.mu.copy(), 0.5 * np.expm1(params.log_var)


# -------------
# Dropout
# -------------

def dropout_mask(shape, rate: float, rng: Optional[np.random.Generator] = None,
                 training: bool = True) -> np.ndarray:
    """Inverted-dropout mask: kept entries are 1/(1-rate), dropped entries 0."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return np.ones(shape)
    if rng is None:
        raise ConfigError("training-mode dropout needs an rng")
    return (rng.random(shape) >= rate) / (1.0 - rate)


# -------------
# Adam
# -------------

@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    first_moment: List[np.ndarray] = field(default_factory=list)
    second_moment: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        return cls(first_moment=[np.zeros_like(p) for p in params],
                   second_moment=[np.zeros_like(p) for p in params], **hyper)


def adam_step(state: AdamState, params: Sequence[np.ndarray],
              grads: Sequence[np.ndarray]) -> Tuple[Sequence[np.ndarray], AdamState]:
    """One bias-corrected Adam update; parameters are updated in place."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params, grads and optimizer moments must align")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ShapeError(f"grad {i} has shape {g.shape}, param has {params[i].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter {i} at step {state.step + 1}")

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


# -------------
# Gradient check
# -------------

@dataclass(frozen=True)
class GradCheckReport:
    name: str
    max_rel_error: float
    n_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def grad_check(loss_and_grads: Callable[[], Tuple[float, List[np.ndarray]]],
               params: Sequence[np.ndarray], tolerance: float = 1e-4, h: float = 1e-4,
               max_checks_per_param: Optional[int] = None,
               rng: Optional[np.random.Generator] = None, name: str = "") -> GradCheckReport:
    """Compare analytic gradients with central differences.

    `loss_and_grads` must read the arrays in `params` in place; entries are
    perturbed by +/-h one at a time and restored. The error of an entry is
    |a - n| / max(|a|, |n|); entries where both gradients vanish (below
    1e-6) are compared by absolute difference.
    """
    _, analytic = loss_and_grads()
    analytic = [np.array(g, dtype=np.float64, copy=True) for g in analytic]
    rng = rng or np.random.default_rng(0)

    worst = 0.0
    checked = 0
    for p, g in zip(params, analytic):
        flat_idx = np.arange(p.size)
        if max_checks_per_param is not None and p.size > max_checks_per_param:
            flat_idx = rng.choice(p.size, size=max_checks_per_param, replace=False)
        for j in flat_idx:
            idx = np.unravel_index(j, p.shape)
            original = p[idx]
            p[idx] = original + h
            plus = loss_and_grads()[0]
            p[idx] = original - h
            minus = loss_and_grads()[0]
            p[idx] = original
            numeric = (plus - minus) / (2.0 * h)
            a = g[idx]
            scale = max(abs(a), abs(numeric))
            rel = abs(a - numeric) / scale if scale > 1e-6 else abs(a - numeric)
            worst = max(worst, rel)
            checked += 1
    return GradCheckReport(name, worst, checked, tolerance)
