import itertools
import logging

import numpy as np
import pytest

from scr import data
from scr.data import (ClickMatrix, DictEmbedder, HashingEmbedder, StyleLabelMatrix, SynthConfig,
                      audit_planted_styles, build_labelprop_dataset, filter_interactions,
                      holdout_split, item_vector, load_dataset, split_labeled_items, synth_generate,
                      tokenize, user_content_vector)
from scr.errors import ConfigError, DataError


def write(path, lines):
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")
    return path


@pytest.fixture
def fixture_files(tmp_path):
    clicks = write(tmp_path / "clicks.tsv", ["u1\ti1", "u1\ti2", "u2\ti2", "u2\ti2"])
    emb = write(tmp_path / "emb.tsv", ["i1\t1.0,0.0", "i2\t0.0,1.0", "i3\t0.5,0.5"])
    labels = write(tmp_path / "labels.tsv", ["i1\tmodern", "i2\ttraditional|modern", "i9\tmodern"])
    return clicks, emb, labels


def clicks_from(rows):
    """ClickMatrix from a dense 0/1 array, users u0.., items i0.."""
    rows = np.asarray(rows)
    users = [f"u{u}" for u in range(rows.shape[0])]
    items = [f"i{i}" for i in range(rows.shape[1])]
    pairs = [(u, i) for u in range(rows.shape[0]) for i in range(rows.shape[1]) if rows[u, i]]
    return ClickMatrix.from_pairs(users, items, pairs)[0]


# loading

def test_load_dataset_fixture(fixture_files, caplog):
    with caplog.at_level(logging.INFO, logger="scr"):
        loaded = load_dataset(*fixture_files)
    assert loaded.clicks.n_users == 2 and loaded.clicks.n_items == 2
    assert loaded.clicks.nnz == 3
    assert loaded.embeddings.vectors.shape == (2, 2)
    assert loaded.labels.style_names == ("modern", "traditional")
    assert loaded.labels.item_ids == ("i1", "i2")
    assert "Dropped 1 duplicate" in caplog.text
    assert "Dropped 1 labeled items" in caplog.text


def test_empty_labels_file(fixture_files, tmp_path):
    clicks, emb, _ = fixture_files
    loaded = load_dataset(clicks, emb, write(tmp_path / "empty.tsv", []))
    assert loaded.labels.n_labeled == 0
    assert loaded.labels.n_styles == 0


def test_missing_embedding_is_an_error(fixture_files, tmp_path):
    clicks, _, labels = fixture_files
    with pytest.raises(DataError):
        load_dataset(clicks, write(tmp_path / "e.tsv", ["i1\t1.0,0.0"]), labels)


def test_malformed_line_reports_line_number(tmp_path):
    path = write(tmp_path / "clicks.tsv", ["u1\ti1", "u2 i2"])
    with pytest.raises(DataError, match=r"clicks.tsv:2:"):
        data.read_clicks(path)


def test_inconsistent_embedding_dimension(tmp_path):
    path = write(tmp_path / "emb.tsv", ["i1\t1.0,2.0", "i2\t1.0"])
    with pytest.raises(DataError, match=":2:"):
        data.read_embeddings(path)


def test_items_by_recency_follows_arrival_order():
    clicks, _ = ClickMatrix.from_pairs(["u"], ["a", "b", "c"], [(0, 2), (0, 0), (0, 1), (0, 0)])
    assert list(clicks.items_by_recency(0)) == [2, 0, 1]
    assert list(clicks.items_of(0)) == [0, 1, 2]


def test_written_files_load_back(tmp_path, tiny_synth):
    data.write_clicks(tmp_path / "c.tsv", tiny_synth.clicks)
    data.write_embeddings(tmp_path / "e.tsv", tiny_synth.embeddings)
    data.write_labels(tmp_path / "l.tsv", tiny_synth.labels)
    loaded = load_dataset(tmp_path / "c.tsv", tmp_path / "e.tsv", tmp_path / "l.tsv")
    assert loaded.clicks.nnz == tiny_synth.clicks.nnz
    np.testing.assert_array_equal(loaded.embeddings.vectors,
                                  tiny_synth.embeddings.aligned_to(loaded.clicks.item_ids))


# filtering

def test_filter_with_unit_thresholds_is_identity():
    clicks = clicks_from(np.eye(3))
    assert filter_interactions(clicks, 1, 1) is clicks


def _maximal_feasible(rows, min_items, min_users):
    """Brute force: union of every (users, items) sub-block meeting both thresholds."""
    n_u, n_i = rows.shape
    keep_u, keep_i = set(), set()
    for mu in itertools.product([0, 1], repeat=n_u):
        users = [u for u in range(n_u) if mu[u]]
        for mi in itertools.product([0, 1], repeat=n_i):
            items = [i for i in range(n_i) if mi[i]]
            if not users or not items:
                continue
            sub = rows[np.ix_(users, items)]
            if sub.sum(axis=1).min() >= min_items and sub.sum(axis=0).min() >= min_users:
                keep_u.update(users)
                keep_i.update(items)
    return sorted(keep_u), sorted(keep_i)


def test_filter_chain_reaches_brute_force_fixed_point():
    rows = np.array([[1, 1, 1, 0, 0],
                     [1, 1, 1, 0, 0],
                     [1, 1, 1, 0, 0],
                     [0, 0, 1, 1, 0],
                     [0, 0, 0, 1, 1]])
    out = filter_interactions(clicks_from(rows), 2, 2)
    users, items = _maximal_feasible(rows, 2, 2)
    assert out.user_ids == tuple(f"u{u}" for u in users)
    assert out.item_ids == tuple(f"i{i}" for i in items)
    assert out.user_ids == ("u0", "u1", "u2")


def test_filter_output_is_a_fixed_point(tiny_synth):
    once = filter_interactions(tiny_synth.clicks, 12, 20)
    assert filter_interactions(once, 12, 20) is once


def test_filter_errors():
    clicks = clicks_from(np.eye(3))
    with pytest.raises(DataError, match="lower the thresholds"):
        filter_interactions(clicks, 2, 2)
    with pytest.raises(ConfigError):
        filter_interactions(clicks, 0, 1)


# text and content vectors

def test_tokenize_lowercases_strips_and_stems():
    assert tokenize("The Chairs, painted!") == ["chair", "paint"]


def test_item_vector_means_found_tokens():
    v1, v2 = np.array([1.0, 0.0]), np.array([0.0, 3.0])
    embedder = DictEmbedder({"oak": v1, "table": v2}, 2)
    np.testing.assert_array_equal(item_vector("oak", embedder), v1)
    np.testing.assert_array_equal(item_vector("Oak tables", embedder), (v1 + v2) / 2)


def test_item_vector_all_miss_warns(caplog):
    embedder = DictEmbedder({}, 3)
    with caplog.at_level(logging.WARNING, logger="scr"):
        out = item_vector("the and of", embedder)
    np.testing.assert_array_equal(out, np.zeros(3))
    assert "No embeddable tokens" in caplog.text
    np.testing.assert_array_equal(item_vector("", embedder), np.zeros(3))


def test_hashing_embedder_is_deterministic_unit_norm():
    embedder = HashingEmbedder(16)
    a, b = embedder.lookup("velvet"), HashingEmbedder(16).lookup("velvet")
    np.testing.assert_array_equal(a, b)
    assert np.linalg.norm(a) == pytest.approx(1.0)
    assert HashingEmbedder.fnv1a_64("") == 0xCBF29CE484222325
    assert HashingEmbedder.fnv1a_64("a") == 0xAF63DC4C8601EC8C


def test_user_content_vector_of_identical_items_is_exact(rng):
    v = np.array([0.5, 0.25, -1.0])
    vectors = np.tile(v, (4, 1))
    np.testing.assert_array_equal(user_content_vector(np.arange(4), vectors, 5, rng), v)


def test_user_content_vector_replays_under_seed():
    vectors = np.arange(6.0).reshape(3, 2)
    a = user_content_vector(np.arange(3), vectors, 2, np.random.default_rng(7))
    b = user_content_vector(np.arange(3), vectors, 2, np.random.default_rng(7))
    np.testing.assert_array_equal(a, b)


def test_user_content_vector_needs_items(rng):
    with pytest.raises(DataError, match="u42"):
        user_content_vector(np.array([], dtype=int), np.zeros((2, 2)), 5, rng, user="u42")


# label propagation

def _five_item_user(style_rows):
    items = [f"i{i}" for i in range(len(style_rows))]
    clicks, _ = ClickMatrix.from_pairs(["u"], items, [(0, i) for i in range(len(items))])
    names = tuple(f"s{s}" for s in range(len(style_rows[0])))
    labels = StyleLabelMatrix(tuple(items), names, np.array(style_rows, dtype=np.int8))
    return clicks, labels, np.eye(len(items))


def test_threshold_counts_one_item_of_five():
    clicks, labels, vectors = _five_item_user([[1, 0, 0, 0], [1, 0, 0, 0], [0, 1, 0, 0],
                                               [0, 0, 0, 1], [0, 0, 0, 1]])
    ds = build_labelprop_dataset(clicks, labels, vectors, k=5, repeats=1)
    np.testing.assert_array_equal(ds.profiles[0], [1, 1, 0, 1])
    strict = build_labelprop_dataset(clicks, labels, vectors, k=5, repeats=1, strict=True)
    np.testing.assert_array_equal(strict.profiles[0], [1, 0, 0, 1])


def test_shared_single_style_gives_one_hot():
    clicks, labels, vectors = _five_item_user([[0, 1, 0]] * 5)
    ds = build_labelprop_dataset(clicks, labels, vectors, k=5, repeats=3)
    np.testing.assert_array_equal(ds.profiles, np.tile([0, 1, 0], (3, 1)))


def test_profiles_are_recomputable_from_sample_indices(tiny_synth):
    ds = build_labelprop_dataset(tiny_synth.clicks, tiny_synth.labels, tiny_synth.embeddings.vectors,
                                 k=5, repeats=2, rng=np.random.default_rng(3))
    dense, _ = tiny_synth.labels.for_catalog(tiny_synth.clicks.item_ids)
    mass = dense[ds.sample_items].mean(axis=1)
    np.testing.assert_array_equal(ds.profiles, (mass >= 0.2).astype(float))
    np.testing.assert_allclose(ds.vectors, tiny_synth.embeddings.vectors[ds.sample_items].mean(axis=1))
    assert np.all(ds.profiles.sum(axis=1) >= 1)


def test_labelprop_without_labeled_clicks_fails():
    clicks, _ = ClickMatrix.from_pairs(["u"], ["a", "b"], [(0, 0)])
    labels = StyleLabelMatrix(("b",), ("s",), np.ones((1, 1), dtype=np.int8))
    with pytest.raises(DataError):
        build_labelprop_dataset(clicks, labels, np.eye(2))


def test_split_labeled_items(tiny_synth, rng):
    train, val = split_labeled_items(tiny_synth.labels, 0.25, rng)
    assert val.n_labeled == int(0.25 * tiny_synth.labels.n_labeled)
    assert not set(train.item_ids) & set(val.item_ids)
    assert train.n_labeled + val.n_labeled == tiny_synth.labels.n_labeled
    assert split_labeled_items(tiny_synth.labels, 0.0, rng)[1].n_labeled == 0


# holdout

def test_holdout_masks_floor_of_fraction():
    clicks = clicks_from(np.vstack([np.ones(15), np.r_[np.ones(5), np.zeros(10)]]))
    split = holdout_split(clicks, 1, 0.2, np.random.default_rng(0))
    u = split.heldout_users[0]
    total = clicks.items_of(u)
    if len(total) == 15:
        assert len(split.masked[0]) == 3 and len(split.fold_in[0]) == 12
    else:
        assert len(split.masked[0]) == 1 and len(split.fold_in[0]) == 4


def test_holdout_invariants(tiny_synth):
    split = holdout_split(tiny_synth.clicks, 20, 0.2, np.random.default_rng(5))
    for u, fold_in, masked in zip(split.heldout_users, split.fold_in, split.masked):
        history = set(tiny_synth.clicks.items_of(u))
        assert not set(fold_in) & set(masked)
        assert set(fold_in) | set(masked) == history
        assert len(masked) == max(1, int(0.2 * len(history)))
        assert set(split.train.items_of(u)) == set(fold_in)
    assert split.train.nnz == tiny_synth.clicks.nnz - sum(len(m) for m in split.masked)


def test_holdout_min_one_masked(tiny_synth):
    split = holdout_split(tiny_synth.clicks, 10, 0.0, np.random.default_rng(0))
    assert all(len(m) == 1 for m in split.masked)


def test_holdout_is_deterministic(tiny_synth):
    a = holdout_split(tiny_synth.clicks, 10, 0.2, np.random.default_rng(9))
    b = holdout_split(tiny_synth.clicks, 10, 0.2, np.random.default_rng(9))
    np.testing.assert_array_equal(a.heldout_users, b.heldout_users)
    for x, y in zip(a.masked, b.masked):
        np.testing.assert_array_equal(x, y)


def test_holdout_rejects_too_many_users(tiny_synth):
    with pytest.raises(ConfigError):
        holdout_split(tiny_synth.clicks, tiny_synth.clicks.n_users, 0.2)


# synthetic generator

def test_noise_free_single_style_items_sit_on_centroids():
    ds = synth_generate(SynthConfig(n_users=50, n_items=40, n_styles=4, dim=8, density=0.3,
                                    noise=0.0, min_clicks=5), np.random.default_rng(1))
    single = np.flatnonzero(ds.item_styles.sum(axis=1) == 1)
    for i in single:
        s = int(np.argmax(ds.item_styles[i]))
        np.testing.assert_array_equal(ds.embeddings.vectors[i], ds.centroids[s])


def test_default_synth_scale_and_audit():
    ds = synth_generate(SynthConfig(), np.random.default_rng(0))
    assert (ds.clicks.n_users, ds.clicks.n_items, ds.labels.n_styles) == (2000, 500, 8)
    assert ds.embeddings.dim == 32
    assert audit_planted_styles(ds) >= 0.9
    assert np.diff(ds.clicks.matrix.indptr).min() >= 15


def test_synth_rejects_infeasible_config():
    with pytest.raises(ConfigError):
        SynthConfig(n_items=4, n_styles=8)
