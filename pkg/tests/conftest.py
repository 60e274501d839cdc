from types import SimpleNamespace

import numpy as np
import pytest

from scr import clickvae, textenc
from scr.data import SynthConfig, build_labelprop_dataset, holdout_split, synth_generate

TINY = SynthConfig(n_users=300, n_items=80, n_styles=4, dim=16, density=0.2, noise=0.3,
                   label_coverage=0.5, min_clicks=10)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def tiny_synth():
    return synth_generate(TINY, np.random.default_rng(0))


@pytest.fixture(scope="session")
def trained(tiny_synth):
    """Text encoder, conditioned click VAE and unconditioned ablation trained on the tiny dataset."""
    ds = tiny_synth
    vectors = ds.embeddings.vectors
    split = holdout_split(ds.clicks, 30, 0.2, np.random.default_rng(1))
    heldout = [int(u) for u in split.heldout_users]
    train_users = np.setdiff1d(np.arange(ds.clicks.n_users), heldout)
    train_profiles = build_labelprop_dataset(split.train, ds.labels, vectors, 5, 10,
                                             np.random.default_rng(2), users=train_users)
    test_profiles = build_labelprop_dataset(split.train, ds.labels, vectors, 5, 10,
                                            np.random.default_rng(3), users=heldout)

    names = ds.labels.style_names
    text_config = textenc.TextEncoderConfig(hidden=(32, 16), input_dropout=0.2, epochs=30,
                                            batch_size=64, learning_rate=3e-3, seed=5)
    encoder = textenc.TextEncoderModel.create(TINY.dim, names, text_config.hidden,
                                              text_config.input_dropout, rng=np.random.default_rng(4))
    encoder, text_curve = textenc.train_text_encoder(encoder, train_profiles, text_config)
    frozen = encoder.fingerprint()

    vae_config = clickvae.TrainingConfig(epochs=60, batch_size=50, learning_rate=3e-3, latent_dim=8,
                                         hidden_dim=48, seed=7, decoder_dropout=0.2)
    model = clickvae.ClickVaeModel.create(TINY.n_items, len(names), 48, 8, 0.2, np.random.default_rng(6))
    model, vae_curve = clickvae.train_click_vae(model, split.train, encoder, vectors, vae_config)

    ablation = clickvae.ClickVaeModel.create(TINY.n_items, 0, 48, 8, 0.2, np.random.default_rng(6))
    ablation, _ = clickvae.train_click_vae(ablation, split.train, None, vectors, vae_config)

    return SimpleNamespace(dataset=ds, vectors=vectors, split=split, train_profiles=train_profiles,
                           test_profiles=test_profiles, encoder=encoder, text_curve=text_curve,
                           frozen=frozen, model=model, vae_curve=vae_curve, ablation=ablation)
