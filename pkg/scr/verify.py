"""
Finite-difference verification of every hand-written gradient.

Each check builds a small random instance (fixed seed) and compares the
analytic gradient of its loss against central differences.
"""

from typing import Callable, List

import numpy as np

from . import clickvae, nncore as nn, textenc
from .logs import get_logger

logger = get_logger("verify")

STYLES = ("style_a", "style_b")


def _binary_targets(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    targets = (rng.random((rows, cols)) < 0.5).astype(np.float64)
    targets[np.arange(rows), rng.integers(0, cols, size=rows)] = 1.0
    return targets


def check_linear(rng: np.random.Generator, tolerance: float) -> nn.GradCheckReport:
    w = rng.standard_normal((3, 4))
    x = rng.standard_normal((3, 4))
    return nn.grad_check(lambda: (float(np.sum(w * x)), [x]), [w], tolerance, name="linear")


def check_text_encoder(rng: np.random.Generator, tolerance: float,
                       variant: str = textenc.PLAIN) -> nn.GradCheckReport:
    model = textenc.TextEncoderModel.create(6, STYLES + ("style_c",), hidden=(5, 4),
                                            input_dropout=0.5, variant=variant, rng=rng)
    x = rng.standard_normal((3, 6))
    targets = _binary_targets(rng, 3, model.n_styles)
    mask = nn.dropout_mask(x.shape, 0.5, rng)
    eps = rng.standard_normal((3, model.n_styles)) if variant == textenc.GAUSSIAN else None
    return nn.grad_check(lambda: textenc.loss_and_grads(model, x, targets, mask, eps),
                         model.parameters(), tolerance, name=f"text encoder ({variant})")


def check_click_vae(rng: np.random.Generator, tolerance: float) -> nn.GradCheckReport:
    """3 users, 10 items, 2 styles, fixed epsilon and dropout mask."""
    model = clickvae.ClickVaeModel.create(10, len(STYLES), hidden_dim=6, latent_dim=3,
                                          decoder_dropout=0.5, rng=rng)
    x = _binary_targets(rng, 3, 10)
    z_t = rng.random((3, len(STYLES)))
    eps = rng.standard_normal((3, model.latent_dim))
    mask = nn.dropout_mask((3, model.latent_dim), 0.5, rng)
    return nn.grad_check(lambda: clickvae.loss_and_grads(model, x, z_t, eps, 0.17, mask)[:2],
                         model.parameters(), tolerance, name="click vae")


def check_joint(rng: np.random.Generator, tolerance: float) -> nn.GradCheckReport:
    """Click VAE loss with z_T produced by a plain text encoder; gradients for both."""
    encoder = textenc.TextEncoderModel.create(6, STYLES, hidden=(5, 4), input_dropout=0.5, rng=rng)
    model = clickvae.ClickVaeModel.create(10, len(STYLES), hidden_dim=6, latent_dim=3,
                                          decoder_dropout=0.5, rng=rng)
    x = _binary_targets(rng, 3, 10)
    content = rng.standard_normal((3, 6))
    text_mask = nn.dropout_mask(content.shape, 0.5, rng)
    eps = rng.standard_normal((3, model.latent_dim))
    mask = clickvae.latent_mask(3, model.latent_dim, 0.5, 0.0, rng)

    def loss():
        z_t, caches = textenc.profile_forward(encoder, content, text_mask)
        value, grads, stats = clickvae.loss_and_grads(model, x, z_t, eps, 0.17, mask)
        return value, grads + textenc.profile_backward(encoder, caches, stats.condition_grad)

    return nn.grad_check(loss, model.parameters() + encoder.parameters(), tolerance,
                         name="click vae + text encoder")


def check_lr_baseline(rng: np.random.Generator, tolerance: float) -> nn.GradCheckReport:
    baseline = textenc.LogisticBaseline(
        nn.DenseLayer.glorot(6, len(STYLES), nn.Activation.SIGMOID, rng), STYLES)
    x = rng.standard_normal((3, 6))
    targets = _binary_targets(rng, 3, len(STYLES))
    return nn.grad_check(lambda: textenc.lr_loss_and_grads(baseline, x, targets),
                         baseline.parameters(), tolerance, name="logistic regression")


CHECKS: List[Callable[..., nn.GradCheckReport]] = [
    check_linear,
    check_text_encoder,
    lambda rng, tol: check_text_encoder(rng, tol, textenc.GAUSSIAN),
    check_click_vae,
    check_joint,
    check_lr_baseline,
]


def run_suite(seed: int = 0, tolerance: float = 1e-4) -> List[nn.GradCheckReport]:
    reports = []
    for check in CHECKS:
        report = check(np.random.default_rng(seed), tolerance)
        status = "PASS" if report.passed else "FAIL"
        logger.info(f"{report.name:<28} max rel error {report.max_rel_error:.3e} "
                    f"over {report.n_checked} entries  {status}")
        reports.append(report)
    return reports
