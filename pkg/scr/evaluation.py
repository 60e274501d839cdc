"""
Metrics and analyses: ranking metrics on the masked holdout, per-style AUC,
style prevalence and correlation, and the sample-size variance study.

Every report is written as TSV whose first two lines reference the run
manifest and seed.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import rankdata

from . import clickvae, textenc
from .data import ClickMatrix, HoldoutSplit, LabeledProfileDataset, sample_items
from .errors import ConfigError, DataError, ShapeError
from .logs import get_logger

logger = get_logger("eval")

CUTOFFS = (20, 50)
FULL = "full"


# -------------
# Ranking metrics
# -------------

def _check_ranked(ranked: Sequence[int]) -> None:
    if len(set(ranked)) != len(ranked):
        raise ShapeError("ranked list contains duplicates")


def ndcg_at_k(ranked: Sequence[int], relevant: Iterable[int], k: int) -> Optional[float]:
    """Binary-gain NDCG with a log2(rank + 1) discount; None for an empty relevant set."""
    _check_ranked(ranked)
    relevant = set(relevant)
    if not relevant:
        return None
    dcg = sum(1.0 / math.log2(r + 2) for r, item in enumerate(ranked[:k]) if item in relevant)
    idcg = sum(1.0 / math.log2(r + 2) for r in range(min(k, len(relevant))))
    return dcg / idcg


def recall_at_k(ranked: Sequence[int], relevant: Iterable[int], k: int) -> Optional[float]:
    """|top-k & relevant| / min(k, |relevant|); None for an empty relevant set."""
    _check_ranked(ranked)
    relevant = set(relevant)
    if not relevant:
        return None
    hits = len(relevant.intersection(ranked[:k]))
    return hits / min(k, len(relevant))


# -------------
# Style metrics
# -------------

def auc(scores: Sequence[float], labels: Sequence[int]) -> Optional[float]:
    """Rank-sum AUC with ties counted as one half; None when only one class is present."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels) > 0
    if scores.shape != labels.shape:
        raise ShapeError("scores and labels must have the same length")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def per_style_auc(scores: np.ndarray, labels: np.ndarray,
                  style_names: Sequence[str]) -> Dict[str, Optional[float]]:
    scores, labels = np.atleast_2d(scores), np.atleast_2d(labels)
    if scores.shape != labels.shape or scores.shape[1] != len(style_names):
        raise ShapeError("scores, labels and style names must agree on the style count")
    return {name: auc(scores[:, s], labels[:, s]) for s, name in enumerate(style_names)}


def mean_auc(report: Mapping[str, Optional[float]]) -> Optional[float]:
    defined = [v for v in report.values() if v is not None]
    return float(np.mean(defined)) if defined else None


def pearson_matrix(profiles: np.ndarray) -> np.ndarray:
    """Style x style Pearson correlation; NaN marks entries of a zero-variance style."""
    x = np.asarray(profiles, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DataError("correlation needs at least two profiles")
    centered = x - x.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    valid = norms > 1e-12
    safe = np.where(valid, norms, 1.0)
    corr = np.clip((centered.T @ centered) / np.outer(safe, safe), -1.0, 1.0)
    corr = 0.5 * (corr + corr.T)
    np.fill_diagonal(corr, 1.0)
    corr[~valid, :] = np.nan
    corr[:, ~valid] = np.nan
    return corr


def style_distribution_report(dataset: LabeledProfileDataset) -> np.ndarray:
    """Fraction of samples in which each style is positive."""
    if len(dataset) == 0:
        raise DataError("style distribution needs a non-empty dataset")
    return (dataset.profiles > 0).mean(axis=0)


# -------------
# Variance study
# -------------

def variance_vs_k_study(vectors: np.ndarray, clicks: ClickMatrix,
                        k_values: Sequence[Union[int, str]],
                        rng: np.random.Generator) -> List[Tuple[str, float]]:
    """Mean per-feature variance of user content vectors for each sample size k.

    `FULL` averages the whole history of each user.
    """
    numeric = [k for k in k_values if k != FULL]
    if any(int(k) < 1 for k in numeric) or list(numeric) != sorted(numeric):
        raise ConfigError("k values must be positive and ascending")
    if FULL in k_values and k_values[-1] != FULL:
        raise ConfigError(f"{FULL!r} must be the last k value")
    users = [u for u in range(clicks.n_users) if len(clicks.items_of(u))]
    if len(users) < 2:
        raise DataError("variance study needs at least two users with clicks")

    results = []
    for k in k_values:
        content = np.empty((len(users), vectors.shape[1]))
        for row, u in enumerate(users):
            items = clicks.items_of(u)
            chosen = items if k == FULL else sample_items(items, int(k), rng)
            content[row] = vectors[chosen].mean(axis=0)
        value = float(content.var(axis=0).mean())
        results.append((str(k), value))
        logger.debug(f"k={k}: mean feature variance {value:.6f}")
    return results


# -------------
# Holdout ranking evaluation
# -------------

@dataclass
class RankingReport:
    """Aggregate and per-user NDCG / Recall at the standard cut-offs."""
    label: str
    users: List[str] = field(default_factory=list)
    per_user: Dict[str, List[float]] = field(default_factory=dict)
    skipped: int = 0

    def __post_init__(self):
        for metric in self.metrics:
            self.per_user.setdefault(metric, [])

    def mean(self, metric: str) -> float:
        values = self.per_user.get(metric, [])
        return float(np.mean(values)) if values else 0.0

    @property
    def metrics(self) -> List[str]:
        return [f"{m}@{k}" for m in ("ndcg", "recall") for k in CUTOFFS]


def validation_rng(seed: int, user: int) -> np.random.Generator:
    """Fixed per-user stream so validation content samples do not change between runs."""
    return np.random.default_rng([seed, user])


def evaluate_ranking(model: clickvae.ClickVaeModel, text_encoder: Optional[textenc.TextEncoderModel],
                     split: HoldoutSplit, vectors: np.ndarray, label: str, seed: int = 0,
                     mode: str = clickvae.SAMPLE_K, k: int = 5) -> RankingReport:
    report = RankingReport(label)
    top_n = max(CUTOFFS)
    for u, fold_in, masked in zip(split.heldout_users, split.fold_in, split.masked):
        if len(masked) == 0 or len(fold_in) == 0:
            report.skipped += 1
            continue
        ranked = clickvae.recommend(model, text_encoder, fold_in, vectors, top_n, mode, k,
                                    validation_rng(seed, int(u)))
        report.users.append(split.train.user_ids[u])
        for cutoff in CUTOFFS:
            report.per_user[f"ndcg@{cutoff}"].append(ndcg_at_k(ranked, masked, cutoff))
            report.per_user[f"recall@{cutoff}"].append(recall_at_k(ranked, masked, cutoff))
    if report.skipped:
        logger.warning(f"{label}: skipped {report.skipped} heldout users with an empty masked set")
    logger.info(f"{label}: NDCG@20 {report.mean('ndcg@20'):.4f}  Recall@20 {report.mean('recall@20'):.4f}"
                f"  NDCG@50 {report.mean('ndcg@50'):.4f}  Recall@50 {report.mean('recall@50'):.4f}"
                f"  over {len(report.users)} users")
    return report


def compare(scr: RankingReport, ablation: RankingReport) -> Dict[str, Tuple[float, Optional[float]]]:
    """Absolute and relative deltas (scr - ablation) per metric."""
    out = {}
    for metric in scr.metrics:
        a, b = scr.mean(metric), ablation.mean(metric)
        out[metric] = (a - b, (a - b) / b if b > 0 else None)
    return out


@dataclass
class StyleReport:
    style_names: Tuple[str, ...]
    auc: Dict[str, Optional[float]]
    prevalence: np.ndarray
    correlation: np.ndarray
    baseline_auc: Dict[str, Optional[float]] = field(default_factory=dict)


def evaluate_styles(text_encoder: textenc.TextEncoderModel, train: LabeledProfileDataset,
                    test: LabeledProfileDataset,
                    baseline_auc: Optional[Dict[str, Optional[float]]] = None) -> StyleReport:
    """Per-style AUC on `test`, prevalence on `train`, correlation of predicted test profiles."""
    predicted = textenc.encode_batch(text_encoder, test.vectors)
    report = StyleReport(text_encoder.style_names,
                         per_style_auc(predicted, test.profiles, text_encoder.style_names),
                         style_distribution_report(train), pearson_matrix(predicted),
                         dict(baseline_auc or {}))
    avg = mean_auc(report.auc)
    logger.info(f"Text encoder average AUC {'NA' if avg is None else f'{avg:.4f}'} "
                f"on {len(test)} heldout profiles")
    return report


# -------------
# Writers
# -------------

def _cell(value) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NA"
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    return str(value)


def write_tsv(path, reference: Mapping[str, str], columns: Sequence[str],
              rows: Iterable[Sequence]) -> Path:
    """TSV with the manifest hash and seed on the first two lines."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# manifest\t{reference['manifest']}", f"# seed\t{reference['seed']}",
             "\t".join(columns)]
    lines.extend("\t".join(_cell(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_ranking(out_dir, reference, reports: Sequence[RankingReport]) -> None:
    out_dir = Path(out_dir)
    metrics = reports[0].metrics
    write_tsv(out_dir / "ranking.tsv", reference, ["model", *metrics, "users", "skipped"],
              [[r.label, *(r.mean(m) for m in metrics), len(r.users), r.skipped] for r in reports])
    rows = []
    for r in reports:
        for j, user in enumerate(r.users):
            rows.append([r.label, user, *(r.per_user[m][j] for m in metrics)])
    write_tsv(out_dir / "ranking_users.tsv", reference, ["model", "user", *metrics], rows)


def write_style_reports(out_dir, reference, report: StyleReport) -> None:
    out_dir = Path(out_dir)
    write_tsv(out_dir / "style_auc.tsv", reference, ["style", "text_encoder", "logistic_regression"],
              [[s, report.auc.get(s), report.baseline_auc.get(s)] for s in report.style_names])
    write_tsv(out_dir / "style_prevalence.tsv", reference, ["style", "prevalence"],
              zip(report.style_names, report.prevalence.tolist()))
    write_tsv(out_dir / "style_correlation.tsv", reference, ["style", *report.style_names],
              [[s, *row] for s, row in zip(report.style_names, report.correlation.tolist())])


def write_variance(out_dir, reference, study: Sequence[Tuple[str, float]]) -> None:
    write_tsv(Path(out_dir) / "variance_vs_k.tsv", reference, ["k", "mean_feature_variance"], study)


def summary_text(reference: Mapping[str, str], reports: Sequence[RankingReport],
                 styles: Optional[StyleReport] = None,
                 study: Optional[Sequence[Tuple[str, float]]] = None) -> str:
    """Human-readable summary block."""
    lines = [f"manifest {reference['manifest']}  seed {reference['seed']}", ""]
    lines.append("Ranking (mean over heldout users)")
    for r in reports:
        lines.append(f"  {r.label:<16}" + "  ".join(f"{m} {r.mean(m):.4f}" for m in r.metrics)
                     + f"  users {len(r.users)}  skipped {r.skipped}")
    for other in reports[1:]:
        for metric, (absolute, relative) in compare(reports[0], other).items():
            rel = "NA" if relative is None else f"{100.0 * relative:+.1f}%"
            lines.append(f"  delta {metric} vs {other.label}: {absolute:+.4f} ({rel})")
    if styles is not None:
        lines += ["", "Style profile AUC (text encoder / logistic regression)"]
        for s in styles.style_names:
            lines.append(f"  {s:<16}{_cell(styles.auc.get(s))}  {_cell(styles.baseline_auc.get(s))}")
        lines.append(f"  average         {_cell(mean_auc(styles.auc))}  "
                     f"{_cell(mean_auc(styles.baseline_auc))}")
    if study:
        lines += ["", "Mean feature variance vs k"]
        lines.extend(f"  k={k:<6}{v:.6f}" for k, v in study)
    return "\n".join(lines) + "\n"
