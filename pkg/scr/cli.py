"""
Command-line entry point: synth, embed, train, eval, inject, grad-check.

    python -m scr synth --out data/ --seed 1
    python -m scr train --clicks data/clicks.tsv --embeddings data/embeddings.tsv \
        --labels data/labels.tsv --run-dir runs/scr
    python -m scr eval --run-dir runs/scr --ablation runs/vae-cf runs/scr-no-lp
    python -m scr inject --run-dir runs/scr --style all

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure.
"""

import argparse
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from . import __version__, clickvae, evaluation, experiment, inject, textenc, verify
from .data import (DictEmbedder, HashingEmbedder, StyleLabelMatrix, SynthConfig, audit_planted_styles,
                   embed_item_texts, read_embeddings, read_item_texts, synth_generate, write_clicks,
                   write_embeddings, write_labels, write_vectors)
from .errors import ConfigError, DataError, DomainError, NumericError, ShapeError, TrainingDiverged
from .logs import configure, get_logger
from .manifest import RunManifest

logger = get_logger("cli")

TEXT_CKPT = "text_encoder.ckpt"
VAE_CKPT = "click_vae.ckpt"
DEFAULT_VARIANCE_K = "1,2,5,10,20,50,full"


class ScrArgumentParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# -------------
# Argument types
# -------------

def _int_pair(value: str):
    try:
        a, b = (int(v) for v in value.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two integers like 128,64, got {value!r}")
    return a, b


def _k_values(value: str) -> List:
    out = []
    for part in value.split(","):
        part = part.strip()
        if part == evaluation.FULL:
            out.append(part)
            continue
        try:
            out.append(int(part))
        except ValueError:
            raise argparse.ArgumentTypeError(f"k values must be integers or {evaluation.FULL!r}")
    return out


_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def config_defaults(parser: argparse.ArgumentParser, path) -> Dict[str, object]:
    """Parse a key=value file into defaults for `parser`; keys are option names."""
    actions = {a.dest: a for a in parser._actions if a.dest not in ("help", "config")}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip().lstrip("-").replace("-", "_"), value.strip()
        action = actions.get(key)
        if not sep or action is None:
            raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
        try:
            if action.nargs == 0:
                if value.lower() not in _TRUE + _FALSE:
                    raise ValueError(value)
                converted = value.lower() in _TRUE
            elif action.nargs == "+":
                converted = [(action.type or str)(v.strip()) for v in value.split(",")]
            else:
                converted = (action.type or str)(value)
        except (ValueError, argparse.ArgumentTypeError):
            raise ConfigError(f"{path}:{lineno}: bad value {value!r} for {key}") from None
        if action.choices and converted not in action.choices:
            raise ConfigError(f"{path}:{lineno}: {key} must be one of {', '.join(action.choices)}")
        values[key] = converted
    return values


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise ConfigError(f"{args.command} needs {', '.join(missing)}")


# -------------
# synth / embed
# -------------

def cmd_synth(args: argparse.Namespace) -> int:
    _require(args, "out")
    config = SynthConfig(n_users=args.users, n_items=args.items, n_styles=args.styles, dim=args.dim,
                         density=args.density, noise=args.noise,
                         multi_style_rate=args.multi_style_rate, label_coverage=args.label_coverage,
                         two_style_user_rate=args.two_style_rate, min_clicks=args.min_clicks)
    ds = synth_generate(config, np.random.default_rng(args.seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_clicks(out / "clicks.tsv", ds.clicks)
    write_embeddings(out / "embeddings.tsv", ds.embeddings)
    write_labels(out / "labels.tsv", ds.labels)
    write_labels(out / "item_styles.tsv",
                 StyleLabelMatrix(ds.clicks.item_ids, ds.labels.style_names, ds.item_styles))
    write_vectors(out / "preferences.tsv", ds.clicks.user_ids, ds.preferences,
                  header="# user\t" + ",".join(ds.labels.style_names))
    logger.info(f"Wrote {config.n_users} users x {config.n_items} items x {config.n_styles} styles "
                f"to {out}; {100.0 * audit_planted_styles(ds):.1f}% of clicks hit a dominant style")
    return 0


def cmd_embed(args: argparse.Namespace) -> int:
    _require(args, "texts", "out")
    if args.word_vectors:
        words = read_embeddings(args.word_vectors)
        embedder = DictEmbedder(dict(zip(words.item_ids, words.vectors)), words.dim)
    else:
        embedder = HashingEmbedder(args.dim)
    table = embed_item_texts(read_item_texts(args.texts), embedder)
    write_embeddings(args.out, table)
    logger.info(f"Embedded {len(table.item_ids)} items (D={table.dim}) into {args.out}")
    return 0


# -------------
# train
# -------------

def settings_from_args(args: argparse.Namespace) -> experiment.ExperimentSettings:
    _require(args, "clicks", "embeddings", "labels")
    return experiment.ExperimentSettings(
        clicks=str(args.clicks), embeddings=str(args.embeddings), labels=str(args.labels),
        seed=args.seed, min_user_items=args.min_user_items, min_item_users=args.min_item_users,
        heldout_frac=args.heldout_frac, mask_fraction=args.mask_fraction,
        label_holdout_frac=args.label_holdout_frac, k=args.k, repeats=args.repeats,
        strict_threshold=args.strict_threshold)


def _stored(config) -> Dict[str, object]:
    return {k: v for k, v in asdict(config).items() if k != "progress"}


def _write_curve(path, reference, curve: Sequence[float]) -> None:
    evaluation.write_tsv(path, reference, ["epoch", "loss"],
                         [[e + 1, loss] for e, loss in enumerate(curve)])


def cmd_train(args: argparse.Namespace) -> int:
    _require(args, "run_dir")
    if args.no_label_prop and args.no_condition:
        raise ConfigError("--no-label-prop needs a conditioned model; drop --no-condition")
    if args.no_label_prop and args.variant != textenc.PLAIN:
        raise ConfigError("--no-label-prop supports the plain text encoder only")
    settings = settings_from_args(args)
    run_dir = Path(args.run_dir)
    progress = args.verbosity > 0
    text_config = textenc.TextEncoderConfig(
        hidden=args.text_hidden, input_dropout=args.input_dropout, variant=args.variant,
        epochs=args.epochs_text, batch_size=args.text_batch_size, learning_rate=args.lr,
        seed=experiment.stream_seed(args.seed, experiment.TEXT), progress=progress)
    vae_config = clickvae.TrainingConfig(
        beta=args.beta, k=args.k, epochs=args.epochs_vae, batch_size=args.batch_size,
        learning_rate=args.lr, latent_dim=args.latent_dim, hidden_dim=args.hidden_dim,
        seed=experiment.stream_seed(args.seed, experiment.VAE),
        decoder_dropout=args.decoder_dropout, condition_only_rate=args.condition_only_rate,
        joint_text_encoder=args.no_label_prop, beta_warmup=args.beta_warmup, progress=progress)

    prepared = experiment.prepare(settings)
    manifest = RunManifest(
        seed=args.seed,
        config={"experiment": asdict(settings), "text_encoder": _stored(text_config),
                "click_vae": _stored(vae_config), "no_condition": args.no_condition,
                "no_label_prop": args.no_label_prop},
        style_vocabulary=list(prepared.style_names), dataset_checksums=prepared.checksums)
    manifest.save(run_dir)
    reference = manifest.reference()
    logger.info(f"Run manifest {manifest.hash} written to {run_dir}")

    text_encoder = None
    conditioned = not args.no_condition and prepared.train_profiles is not None
    if conditioned:
        rng = experiment.streams(args.seed)[experiment.TEXT]
        text_encoder = textenc.TextEncoderModel.create(
            prepared.vectors.shape[1], prepared.style_names, text_config.hidden,
            text_config.input_dropout, text_config.variant, rng)
    if conditioned and args.no_label_prop:
        logger.info("Skipping label propagation fit; the text encoder trains through the click VAE")
    elif conditioned:
        try:
            text_encoder, curve = textenc.train_text_encoder(text_encoder, prepared.train_profiles,
                                                             text_config)
        except TrainingDiverged as exc:
            if exc.last_good is not None:
                textenc.save_model(run_dir / TEXT_CKPT, exc.last_good, reference)
            raise
        textenc.save_model(run_dir / TEXT_CKPT, text_encoder, reference)
        _write_curve(run_dir / "loss_text.tsv", reference, curve)
        if not textenc.curve_improved(curve):
            logger.warning("Text encoder loss did not decrease over training")

    n_styles = len(prepared.style_names) if not args.no_condition else 0
    model = clickvae.ClickVaeModel.create(
        prepared.clicks.n_items, n_styles, vae_config.hidden_dim, vae_config.latent_dim,
        vae_config.decoder_dropout, experiment.streams(args.seed)[experiment.VAE])
    try:
        model, curve = clickvae.train_click_vae(model, prepared.split.train, text_encoder,
                                                prepared.vectors, vae_config)
    except TrainingDiverged as exc:
        if exc.last_good is not None:
            clickvae.save_model(run_dir / VAE_CKPT, exc.last_good, reference)
        raise
    clickvae.save_model(run_dir / VAE_CKPT, model, reference)
    if vae_config.joint_text_encoder and text_encoder is not None:
        textenc.save_model(run_dir / TEXT_CKPT, text_encoder, reference)
    _write_curve(run_dir / "loss_vae.tsv", reference, curve)
    if not textenc.curve_improved(curve):
        logger.warning("Click VAE loss did not decrease over training")
    return 0


# -------------
# Loading a trained run
# -------------

class TrainedRun:
    """Manifest, rebuilt data and checkpoints of one run directory."""

    def __init__(self, run_dir, prepared: Optional[experiment.PreparedData] = None):
        self.run_dir = Path(run_dir)
        self.manifest = RunManifest.load(self.run_dir)
        self.settings = experiment.ExperimentSettings(**self.manifest.config["experiment"])
        current = experiment.checksums(self.settings)
        if current != self.manifest.dataset_checksums:
            raise DataError(f"input files changed since {self.run_dir} was trained")
        self.prepared = prepared or experiment.prepare(self.settings)
        self.model, header = clickvae.load_model(self.run_dir / VAE_CKPT)
        self.manifest.check_reference(header, VAE_CKPT)
        self.text_encoder = None
        if (self.run_dir / TEXT_CKPT).exists():
            self.text_encoder, header = textenc.load_model(self.run_dir / TEXT_CKPT)
            self.manifest.check_reference(header, TEXT_CKPT)

    @property
    def label(self) -> str:
        if not self.model.conditioned:
            return "vae-cf"
        return "scr-no-lp" if self.manifest.config.get("no_label_prop") else "scr"

    def reference(self) -> Dict[str, str]:
        return self.manifest.reference()


def _check_split_flags(args: argparse.Namespace, settings: experiment.ExperimentSettings) -> None:
    for name in ("heldout_frac", "mask_fraction"):
        given = getattr(args, name, None)
        if given is not None and given != getattr(settings, name):
            raise ConfigError(f"--{name.replace('_', '-')} {given} differs from the run's "
                              f"{getattr(settings, name)}; retrain to change the split")


# -------------
# eval
# -------------

def cmd_eval(args: argparse.Namespace) -> int:
    _require(args, "run_dir")
    run = TrainedRun(args.run_dir)
    _check_split_flags(args, run.settings)
    reference = run.reference()
    seed = run.manifest.seed
    k = args.k or run.settings.k
    out = run.run_dir / "reports"

    reports = [evaluation.evaluate_ranking(run.model, run.text_encoder, run.prepared.split,
                                           run.prepared.vectors, run.label, seed, args.mode, k)]
    for ablation_dir in args.ablation or ():
        ablation = TrainedRun(ablation_dir, run.prepared)
        if ablation.settings.split_key() != run.settings.split_key():
            raise ConfigError(f"{ablation_dir} was trained on a different split")
        reports.append(evaluation.evaluate_ranking(ablation.model, ablation.text_encoder,
                                                   run.prepared.split, run.prepared.vectors,
                                                   ablation.label, seed, args.mode, k))
    evaluation.write_ranking(out, reference, reports)

    styles = None
    prepared = run.prepared
    if run.text_encoder is not None and prepared.test_profiles is not None:
        _, baseline = textenc.lr_baseline(prepared.train_profiles, prepared.test_profiles,
                                          prepared.style_names, epochs=args.lr_epochs,
                                          seed=experiment.stream_seed(seed, experiment.TEXT))
        styles = evaluation.evaluate_styles(run.text_encoder, prepared.train_profiles,
                                            prepared.test_profiles, baseline)
        evaluation.write_style_reports(out, reference, styles)

    study = evaluation.variance_vs_k_study(prepared.vectors, prepared.split.train, args.variance_k,
                                           experiment.streams(seed)[experiment.VARIANCE])
    evaluation.write_variance(out, reference, study)

    summary = evaluation.summary_text(reference, reports, styles, study)
    (out / "summary.txt").write_text(summary, encoding="utf-8")
    print(summary, end="")
    return 0


# -------------
# inject
# -------------

def _injection_users(run: TrainedRun, requested: Optional[Sequence[str]], limit: Optional[int]):
    """(user id, catalog index, fold-in items) for requested users or every heldout user."""
    split = run.prepared.split
    train = split.train
    fold_in = {int(u): f for u, f in zip(split.heldout_users, split.fold_in)}
    if requested:
        index = {user: u for u, user in enumerate(train.user_ids)}
        unknown = [user for user in requested if user not in index]
        if unknown:
            raise DataError(f"unknown user(s) {', '.join(unknown[:5])}")
        chosen = [index[user] for user in requested]
    else:
        chosen = [int(u) for u in split.heldout_users]
    if limit is not None:
        chosen = chosen[:limit]
    return [(train.user_ids[u], u, fold_in.get(u, train.items_by_recency(u))) for u in chosen]


def cmd_inject(args: argparse.Namespace) -> int:
    _require(args, "run_dir")
    run = TrainedRun(args.run_dir)
    if not run.model.conditioned or run.text_encoder is None:
        raise ConfigError(f"{args.run_dir} holds an unconditioned model; nothing to inject")
    names = run.text_encoder.style_names
    styles = inject.resolve_styles(args.style, names)
    users = _injection_users(run, args.user, args.max_users)
    vectors = run.prepared.vectors
    k = args.k or run.settings.k
    reference = run.reference()
    out = run.run_dir / "inject"

    analysis = inject.measure_injection_shift(
        run.model, run.text_encoder, [f for _, _, f in users], vectors,
        experiment.streams(run.manifest.seed)[experiment.INJECT], styles, args.top_n,
        args.sample_k, args.resamples, args.mode, k, user_ids=[user for user, _, _ in users])

    lists = {user: dict(conditions) for user, conditions in analysis.lists.items()}
    catalog = run.prepared.clicks.item_ids
    explicit = []
    if args.target_profile:
        targets = inject.read_target_profiles(args.target_profile, names)
        for user, _, _ in users:
            values = inject.target_for(targets, user)
            if values is not None:
                explicit.append((user, "target", textenc.UserStyleProfile(values, names)))
    if args.rated_items:
        rated = inject.read_rated_items(args.rated_items, catalog)
        rng = experiment.streams(run.manifest.seed)[experiment.INJECT]
        for user, _, _ in users:
            if user in rated:
                profile = inject.profile_from_items(run.text_encoder, rated[user], vectors, k, rng)
                explicit.append((user, "rated", profile))
    folds = {user: (u, f) for user, u, f in users}
    for user, condition, profile in explicit:
        u, fold_in = folds[user]
        request = inject.InjectionRequest(user, profile, args.top_n)
        lists[user][condition] = inject.inject_style(
            run.model, run.text_encoder, fold_in, vectors, request, args.mode, k,
            evaluation.validation_rng(run.manifest.seed, u))

    rows = [[user, condition, rank + 1, catalog[item]]
            for user, conditions in lists.items()
            for condition, ranked in conditions.items()
            for rank, item in enumerate(ranked)]
    evaluation.write_tsv(out / "lists.tsv", reference, ["user", "condition", "rank", "item"], rows)
    evaluation.write_tsv(out / "shift_matrix.tsv", reference, ["injected", *names],
                         analysis.shift.table())
    evaluation.write_tsv(out / "presence.tsv", reference,
                         ["style", "injected_presence", "identity_presence", "relative_increase",
                          "overlap_with_identity"], analysis.table())
    evaluation.write_tsv(out / "overlap_users.tsv", reference, ["user", "style", "overlap_with_identity"],
                         analysis.user_table())
    rel = analysis.mean_relative_increase()
    print(f"[INJECT] {len(users)} users, {len(styles)} styles, diagonal dominant "
          f"{analysis.shift.diagonal_dominant()}, mean presence increase "
          f"{'NA' if rel is None else f'{100.0 * rel:+.1f}%'}")
    return 0


# -------------
# grad-check
# -------------

def cmd_grad_check(args: argparse.Namespace) -> int:
    reports = verify.run_suite(args.seed, args.tolerance)
    failed = [r.name for r in reports if not r.passed]
    if failed:
        raise NumericError(f"gradient check failed for {', '.join(failed)}")
    print(f"[VERIFY] all {len(reports)} gradient checks passed")
    return 0


# -------------
# Parser
# -------------

def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--clicks", help="user<TAB>item click file")
    p.add_argument("--embeddings", help="item<TAB>v1,...,vD embedding file")
    p.add_argument("--labels", help="item<TAB>style|style label file")
    p.add_argument("--min-user-items", type=int, default=15)
    p.add_argument("--min-item-users", type=int, default=30)
    p.add_argument("--heldout-frac", type=float, default=0.05)
    p.add_argument("--mask-fraction", type=float, default=0.2)
    p.add_argument("--label-holdout-frac", type=float, default=experiment.LABEL_HOLDOUT_FRAC,
                   help="fraction of labeled items kept out of label propagation")
    p.add_argument("--k", type=int, default=5, help="items sampled per content vector")
    p.add_argument("--repeats", type=int, default=10, help="label propagation passes")
    p.add_argument("--strict-threshold", action="store_true",
                   help="require mass > 1/k instead of >= 1/k")


def build_parser() -> ScrArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value file of defaults; flags win")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-q", "--quiet", action="store_true")

    parser = ScrArgumentParser(prog="scr", description="Style conditioned recommendations")
    parser.add_argument("--version", action="version", version=f"scr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.commands = {}

    p = sub.add_parser("synth", parents=[common], help="generate a planted-style dataset")
    p.add_argument("--out")
    p.add_argument("--users", type=int, default=2000)
    p.add_argument("--items", type=int, default=500)
    p.add_argument("--styles", type=int, default=8)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--noise", type=float, default=0.5)
    p.add_argument("--multi-style-rate", type=float, default=0.137)
    p.add_argument("--label-coverage", type=float, default=0.2)
    p.add_argument("--two-style-rate", type=float, default=0.3)
    p.add_argument("--min-clicks", type=int, default=15)
    p.set_defaults(handler=cmd_synth)
    parser.commands["synth"] = p

    p = sub.add_parser("embed", parents=[common], help="embed item texts")
    p.add_argument("--texts", help="item<TAB>text file")
    p.add_argument("--out")
    p.add_argument("--dim", type=int, default=64, help="hashing embedder dimension")
    p.add_argument("--word-vectors", help="token<TAB>v1,...,vD file instead of hashing")
    p.set_defaults(handler=cmd_embed)
    parser.commands["embed"] = p

    p = sub.add_parser("train", parents=[common], help="train the text encoder, then the click VAE")
    _add_data_flags(p)
    p.add_argument("--run-dir")
    p.add_argument("--beta", type=float, default=0.17)
    p.add_argument("--beta-warmup", action="store_true", help="ramp beta over the first 20%% of steps")
    p.add_argument("--epochs-text", type=int, default=60)
    p.add_argument("--epochs-vae", type=int, default=60)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--text-batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--latent-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=100)
    p.add_argument("--text-hidden", type=_int_pair, default=(128, 64))
    p.add_argument("--input-dropout", type=float, default=0.5)
    p.add_argument("--decoder-dropout", type=float, default=0.5)
    p.add_argument("--condition-only-rate", type=float, default=0.25,
                   help="share of training rows decoded from the style profile alone")
    p.add_argument("--variant", choices=(textenc.PLAIN, textenc.GAUSSIAN), default=textenc.PLAIN)
    p.add_argument("--no-condition", action="store_true", help="unconditioned VAE-CF ablation")
    p.add_argument("--no-label-prop", action="store_true",
                   help="train the text encoder through the click VAE only (SCR w/o LP ablation)")
    p.set_defaults(handler=cmd_train)
    parser.commands["train"] = p

    p = sub.add_parser("eval", parents=[common], help="ranking, style and variance reports")
    p.add_argument("--run-dir")
    p.add_argument("--ablation", nargs="+", help="run directories of models to compare against")
    p.add_argument("--mode", choices=clickvae.MODES, default=clickvae.SAMPLE_K)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--heldout-frac", type=float, default=None)
    p.add_argument("--mask-fraction", type=float, default=None)
    p.add_argument("--variance-k", type=_k_values, default=_k_values(DEFAULT_VARIANCE_K))
    p.add_argument("--lr-epochs", type=int, default=30)
    p.set_defaults(handler=cmd_eval)
    parser.commands["eval"] = p

    p = sub.add_parser("inject", parents=[common], help="style injection lists and shift matrix")
    p.add_argument("--run-dir")
    p.add_argument("--style", nargs="+", help=f"style names or {inject.ALL!r}")
    p.add_argument("--user", nargs="+", help="user ids (default: every heldout user)")
    p.add_argument("--max-users", type=int, default=None)
    p.add_argument("--top-n", type=int, default=20)
    p.add_argument("--mode", choices=clickvae.MODES, default=clickvae.SAMPLE_K)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--sample-k", type=int, default=5, help="items re-encoded per measurement")
    p.add_argument("--resamples", type=int, default=3)
    p.add_argument("--target-profile", help="user<TAB>p1,...,pS rows; user * applies to all")
    p.add_argument("--rated-items", help="user<TAB>item rows of explicitly liked items")
    p.set_defaults(handler=cmd_inject)
    parser.commands["inject"] = p

    p = sub.add_parser("grad-check", parents=[common], help="finite-difference gradient checks")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(handler=cmd_grad_check)
    parser.commands["grad-check"] = p
    return parser


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        parser.commands[args.command].set_defaults(
            **config_defaults(parser.commands[args.command], args.config))
        args = parser.parse_args(argv)
    args.verbosity = 0 if args.quiet else 1 + args.verbose
    return args


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        configure(1)
        logger.error(str(exc))
        return 1
    configure(args.verbosity)
    try:
        return args.handler(args)
    except ConfigError as exc:
        logger.error(str(exc))
        return 1
    except (DataError, ShapeError, OSError) as exc:
        logger.error(str(exc))
        return 2
    except (NumericError, DomainError) as exc:
        logger.error(str(exc))
        return 3
