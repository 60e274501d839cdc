import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import assume, given

from scr import evaluation as ev
from scr.data import LabeledProfileDataset
from scr.errors import ConfigError, DataError, ShapeError

REFERENCE = {"manifest": "00ff00ff00ff00ff", "seed": "11"}


# ranking metrics

def test_ndcg_examples():
    assert ev.ndcg_at_k([5, 1, 2], {5}, 3) == pytest.approx(1.0)
    assert ev.ndcg_at_k([1, 5, 2], {5}, 3) == pytest.approx(1.0 / math.log2(3))
    assert ev.ndcg_at_k([1, 2, 3], {5}, 3) == 0.0
    idcg = 1.0 + 1.0 / math.log2(3)
    assert ev.ndcg_at_k([7, 1, 8], {7, 8}, 3) == pytest.approx((1.0 + 0.5) / idcg)
    assert ev.ndcg_at_k([1, 2], set(), 2) is None


def test_recall_examples():
    assert ev.recall_at_k([1, 2, 3, 4], {2, 9}, 2) == pytest.approx(0.5)
    assert ev.recall_at_k([1, 2], {1, 2, 3, 4, 5}, 2) == pytest.approx(1.0)
    assert ev.recall_at_k([1, 2], [], 2) is None


def test_ranked_lists_must_be_unique():
    with pytest.raises(ShapeError):
        ev.ndcg_at_k([1, 1, 2], {1}, 3)
    with pytest.raises(ShapeError):
        ev.recall_at_k([3, 3], {3}, 2)


@given(st.permutations(list(range(12))), st.sets(st.integers(0, 11), min_size=1), st.integers(1, 12))
def test_ranking_metrics_lie_in_unit_interval(ranked, relevant, k):
    assert 0.0 <= ev.ndcg_at_k(ranked, relevant, k) <= 1.0 + 1e-12
    assert 0.0 <= ev.recall_at_k(ranked, relevant, k) <= 1.0


# AUC

def test_auc_examples():
    assert ev.auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert ev.auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0
    assert ev.auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5
    assert ev.auc([0.3, 0.7], [1, 1]) is None
    with pytest.raises(ShapeError):
        ev.auc([0.1, 0.2], [1])


def _pairwise_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=30))
def test_auc_matches_pairwise_count(pairs):
    scores = [float(s) for s, _ in pairs]
    labels = [int(y) for _, y in pairs]
    assume(0 < sum(labels) < len(labels))
    assert ev.auc(scores, labels) == pytest.approx(_pairwise_auc(scores, labels))


@given(st.lists(st.integers(-500, 500), min_size=4, max_size=20, unique=True))
def test_auc_is_invariant_to_monotone_transforms(scores):
    labels = [i % 2 for i in range(len(scores))]
    transformed = [math.exp(s / 100.0) * 3.0 + 1.0 for s in scores]
    assert ev.auc(scores, labels) == pytest.approx(ev.auc(transformed, labels))


def test_per_style_auc_and_mean():
    scores = np.array([[0.9, 0.1], [0.2, 0.8], [0.7, 0.3]])
    labels = np.array([[1, 0], [0, 0], [1, 0]])
    report = ev.per_style_auc(scores, labels, ("a", "b"))
    assert report == {"a": 1.0, "b": None}
    assert ev.mean_auc(report) == 1.0
    assert ev.mean_auc({"a": None}) is None


# correlation and prevalence

def test_pearson_examples():
    x = np.array([[1.0, 2.0, 1.0], [2.0, 4.0, 3.0], [3.0, 6.0, 2.0]])
    corr = ev.pearson_matrix(x)
    assert corr[0, 1] == pytest.approx(1.0)
    assert corr[0, 2] == pytest.approx(0.5)
    np.testing.assert_allclose(corr, corr.T)
    np.testing.assert_array_equal(np.diag(corr), np.ones(3))
    y = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 1.0]])
    assert ev.pearson_matrix(y)[0, 1] == pytest.approx(math.sqrt(3) / 3)


def test_pearson_marks_constant_styles():
    corr = ev.pearson_matrix(np.array([[1.0, 0.2], [1.0, 0.4], [1.0, 0.9]]))
    assert np.isnan(corr[0, 1]) and np.isnan(corr[0, 0])
    assert corr[1, 1] == 1.0
    with pytest.raises(DataError):
        ev.pearson_matrix(np.ones((1, 3)))


def test_style_prevalence():
    data = LabeledProfileDataset(np.zeros((4, 2)), np.array([[1, 0], [1, 1], [0, 1], [1, 0.0]]))
    np.testing.assert_allclose(ev.style_distribution_report(data), [0.75, 0.5])


# variance study

def test_variance_shrinks_with_sample_size(tiny_synth):
    study = ev.variance_vs_k_study(tiny_synth.embeddings.vectors, tiny_synth.clicks,
                                   [1, 5, 10, ev.FULL], np.random.default_rng(0))
    assert [k for k, _ in study] == ["1", "5", "10", "full"]
    values = [v for _, v in study]
    assert all(later <= earlier * 1.05 for earlier, later in zip(values, values[1:]))
    assert values[-1] < values[0]


def test_variance_study_validates_k(tiny_synth):
    args = (tiny_synth.embeddings.vectors, tiny_synth.clicks)
    with pytest.raises(ConfigError):
        ev.variance_vs_k_study(*args, [5, 1], np.random.default_rng(0))
    with pytest.raises(ConfigError):
        ev.variance_vs_k_study(*args, [ev.FULL, 5], np.random.default_rng(0))
    with pytest.raises(ConfigError):
        ev.variance_vs_k_study(*args, [0, 5], np.random.default_rng(0))


# reports

def test_compare_gives_absolute_and_relative_deltas():
    scr = ev.RankingReport("scr", ["u"], {"ndcg@20": [0.157]})
    ablation = ev.RankingReport("vae-cf", ["u"], {"ndcg@20": [0.140]})
    delta = ev.compare(scr, ablation)
    absolute, relative = delta["ndcg@20"]
    assert absolute == pytest.approx(0.017)
    assert relative == pytest.approx(0.1214, abs=1e-4)
    assert delta["recall@50"] == (0.0, None)


def test_validation_rng_is_fixed_per_user():
    a = ev.validation_rng(3, 17).random(4)
    np.testing.assert_array_equal(a, ev.validation_rng(3, 17).random(4))
    assert not np.array_equal(a, ev.validation_rng(3, 18).random(4))


def test_write_tsv_leads_with_the_reference(tmp_path):
    path = ev.write_tsv(tmp_path / "out" / "t.tsv", REFERENCE, ["style", "auc"],
                        [["a", 0.5], ["b", None], ["c", float("nan")]])
    lines = path.read_text(encoding="utf-8").splitlines()
    assert lines[:3] == ["# manifest\t00ff00ff00ff00ff", "# seed\t11", "style\tauc"]
    assert lines[3:] == ["a\t0.500000", "b\tNA", "c\tNA"]


def test_summary_lists_deltas():
    scr = ev.RankingReport("scr", ["u"], {"ndcg@20": [0.2]})
    ablation = ev.RankingReport("vae-cf", ["u"], {"ndcg@20": [0.1]})
    text = ev.summary_text(REFERENCE, [scr, ablation], study=[("1", 0.5), ("full", 0.1)])
    assert "delta ndcg@20 vs vae-cf: +0.1000 (+100.0%)" in text
    assert "k=full" in text
    assert text.startswith("manifest 00ff00ff00ff00ff  seed 11")


def test_summary_compares_the_first_run_with_every_ablation():
    scr = ev.RankingReport("scr", ["u"], {"ndcg@20": [0.2]})
    reports = [scr, ev.RankingReport("vae-cf", ["u"], {"ndcg@20": [0.1]}),
               ev.RankingReport("scr-no-lp", ["u"], {"ndcg@20": [0.4]})]
    text = ev.summary_text(REFERENCE, reports)
    assert "delta ndcg@20 vs vae-cf: +0.1000 (+100.0%)" in text
    assert "delta ndcg@20 vs scr-no-lp: -0.2000 (-50.0%)" in text


@pytest.mark.slow
def test_evaluate_ranking_on_the_holdout(trained, tmp_path):
    report = ev.evaluate_ranking(trained.model, trained.encoder, trained.split, trained.vectors, "scr")
    assert report.skipped == 0
    assert len(report.users) == len(trained.split.heldout_users)
    for metric in report.metrics:
        assert 0.0 <= report.mean(metric) <= 1.0
    assert report.mean("recall@50") >= report.mean("recall@20") - 1e-12
    again = ev.evaluate_ranking(trained.model, trained.encoder, trained.split, trained.vectors, "scr")
    assert again.per_user == report.per_user

    ablation = ev.evaluate_ranking(trained.ablation, None, trained.split, trained.vectors, "vae-cf")
    ev.write_ranking(tmp_path, REFERENCE, [report, ablation])
    rows = (tmp_path / "ranking.tsv").read_text(encoding="utf-8").splitlines()
    assert rows[2].split("\t")[0] == "model"
    assert [r.split("\t")[0] for r in rows[3:]] == ["scr", "vae-cf"]
    assert report.mean("ndcg@20") >= ablation.mean("ndcg@20")


@pytest.mark.slow
def test_evaluate_styles_writes_reports(trained, tmp_path):
    report = ev.evaluate_styles(trained.encoder, trained.train_profiles, trained.test_profiles)
    names = trained.encoder.style_names
    assert report.correlation.shape == (len(names), len(names))
    assert np.all((report.prevalence >= 0.0) & (report.prevalence <= 1.0))
    ev.write_style_reports(tmp_path, REFERENCE, report)
    for name in ("style_auc.tsv", "style_prevalence.tsv", "style_correlation.tsv"):
        assert (tmp_path / name).read_text(encoding="utf-8").startswith("# manifest\t")
