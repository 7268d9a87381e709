"""Command-line pipeline: corpus -> PCA -> K-means -> conditioning -> reports.

Subcommands: `cluster fit`, `features emit`, `eval report`, `viz project`,
`synth generate`. Every command is a pure function of (config, input files)
to output bytes; reruns with the same inputs are byte-identical. Exit codes:
1 for usage errors, 2 for data errors, 3 for numeric errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass

from . import conditioning, corpus, fairness_eval, kmeans, pca
from .errors import DataError, NumericError, PipelineError, UsageError
from .randstream import derive_seed


@dataclass(frozen=True)
class PipelineConfig:
    """Defaults for every stage; a JSON config file mirrors these fields."""

    embedding_dim: int = 192
    pca_variance: float | None = 0.90
    pca_rank: int | None = None
    k: int = 50
    seed: int = 0
    p_unknown: float = 0.1
    mode: str = "flat"
    branching: tuple[int, ...] = ()
    workers: int = 1
    corpus_path: str | None = None
    out_dir: str = "artifacts"

    def to_json(self) -> str:
        obj = dataclasses.asdict(self)
        obj["branching"] = list(self.branching)
        return json.dumps(obj, indent=2) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        if "branching" in obj:
            obj = dict(obj, branching=tuple(int(b) for b in obj["branching"]))
        return cls(**obj)

    @classmethod
    def from_file(cls, path: str) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
        except ValueError as exc:
            raise DataError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise DataError(f"config {path} must be a JSON object")
        return cls.from_dict(obj)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems through the exit-code taxonomy."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _parse_branching(text: str) -> tuple[int, ...]:
    try:
        factors = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise UsageError(f"--branching must be comma-separated ints, got {text!r}") from exc
    if not factors:
        raise UsageError("--branching must name at least one factor")
    return factors


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides: dict[str, object] = {}
    for flag, key in [
        ("seed", "seed"), ("k", "k"), ("p_unknown", "p_unknown"),
        ("pca_variance", "pca_variance"), ("pca_rank", "pca_rank"),
        ("mode", "mode"), ("dim", "embedding_dim"), ("workers", "workers"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if getattr(args, "branching", None) is not None:
        overrides["branching"] = _parse_branching(args.branching)
    if getattr(args, "corpus", None) is not None:
        overrides["corpus_path"] = args.corpus
    if getattr(args, "out_dir", None) is not None:
        overrides["out_dir"] = args.out_dir
    cfg = dataclasses.replace(cfg, **overrides)
    if cfg.mode not in ("flat", "hier"):
        raise UsageError(f"--mode must be 'flat' or 'hier', got {cfg.mode!r}")
    if args.pca_rank is not None and args.pca_variance is not None:
        raise UsageError("--pca-rank and --pca-variance are mutually exclusive")
    return cfg


def _rank_policy(cfg: PipelineConfig) -> pca.RankPolicy:
    if cfg.pca_rank is not None:
        return pca.FixedRank(cfg.pca_rank)
    if cfg.pca_variance is not None:
        return pca.VarianceFraction(cfg.pca_variance)
    raise UsageError("config needs pca_rank or pca_variance")


def _require_corpus(cfg: PipelineConfig) -> str:
    if not cfg.corpus_path:
        raise UsageError("a corpus file is required (--corpus or config corpus_path)")
    return cfg.corpus_path


def cmd_cluster_fit(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    data = corpus.load_corpus(_require_corpus(cfg), cfg.embedding_dim)
    X = data.matrix()
    pca_model = pca.fit_pca(X, _rank_policy(cfg))
    reduced = pca.transform_batch(pca_model, X)
    if cfg.mode == "hier":
        if not cfg.branching:
            raise UsageError("--mode hier requires --branching")
        model = kmeans.fit_hierarchical(reduced, list(cfg.branching), cfg.seed, workers=cfg.workers)
    else:
        model = kmeans.fit_kmeans(reduced, cfg.k, cfg.seed, workers=cfg.workers)
    os.makedirs(cfg.out_dir, exist_ok=True)
    pca.save_pca(pca_model, os.path.join(cfg.out_dir, "pca_model.txt"))
    kmeans.save_kmeans(model, os.path.join(cfg.out_dir, "kmeans_model.txt"))
    kmeans.save_assignments(data.ids(), model.labels, os.path.join(cfg.out_dir, "assignments.csv"))
    retained = float(pca_model.explained_variance_ratio.sum())
    print(f"records {len(data)}")
    print(f"pca_rank {pca_model.rank} variance_retained {retained!r}")
    print(f"k {model.k} inertia {model.inertia!r} iterations {model.iterations} "
          f"converged {int(model.converged)} early_stops {model.early_stops}")
    return 0


def _ids_only(path: str) -> tuple[str, ...]:
    """utt_ids from a corpus file; embeddings are never inspected."""
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read corpus file {path}: {exc}") from exc
    ids: list[str] = []
    seen: set[str] = set()
    with fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except ValueError as exc:
                raise DataError(f"line {line_no}: malformed record: {exc}") from exc
            utt_id = obj.get("utt_id") if isinstance(obj, dict) else None
            if not isinstance(utt_id, str) or not utt_id:
                raise DataError(f"line {line_no}: missing or invalid utt_id")
            if utt_id in seen:
                raise DataError(f"duplicate utt_id {utt_id!r}")
            seen.add(utt_id)
            ids.append(utt_id)
    return tuple(ids)


def cmd_features_emit(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.emit_mode == "train":
        if not args.assignments:
            raise UsageError("train mode requires --assignments")
        ids, labels = kmeans.load_assignments(args.assignments)
        bad = [i for i, v in enumerate(labels) if not (0 <= v < cfg.k)]
        if bad:
            raise DataError(
                f"assignment {ids[bad[0]]!r} has cluster_id {int(labels[bad[0]])}, "
                f"outside [0, {cfg.k})"
            )
        cluster_ids = [kmeans.ClusterId(int(v), cfg.k) for v in labels]
        policy = conditioning.MaskingPolicy(cfg.p_unknown, cfg.seed)
        masked = conditioning.apply_masking(cluster_ids, policy)
        features = [conditioning.one_hot(cid, cfg.k) for cid in masked]
    else:
        if args.assignments:
            raise UsageError("inference mode does not take --assignments")
        if args.count is not None:
            if args.count < 1:
                raise UsageError(f"--count must be positive, got {args.count}")
            ids = tuple(f"record-{i:06d}" for i in range(args.count))
        elif cfg.corpus_path:
            ids = _ids_only(cfg.corpus_path)
        else:
            raise UsageError("inference mode requires --corpus or --count")
        features = [conditioning.inference_feature(cfg.k) for _ in ids]
    conditioning.save_features(ids, features, cfg.k, args.out)
    unknowns = sum(1 for f in features if f.value == cfg.k)
    print(f"rows {len(features)} unknown {unknowns}")
    return 0


def cmd_eval_report(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    axes = [a for a in args.axes.split(",") if a.strip()]
    if not axes:
        raise UsageError("--axes must name at least one axis")
    baseline = fairness_eval.load_eval_utterances(args.baseline)
    treatment = fairness_eval.load_eval_utterances(args.treatment)
    report = fairness_eval.group_report(baseline, treatment, axes)
    fairness_eval.save_report(report, args.out)
    for warning in report.warnings:
        print(f"warning: {warning}")
    by_id = {u.utt_id: u for u in treatment}
    for i, row in enumerate(report.rows):
        base_subset = [u for u in baseline if u.groups.get(row.axis) == row.label]
        treat_subset = [by_id[u.utt_id] for u in base_subset]
        boot = fairness_eval.paired_bootstrap(
            base_subset, treat_subset, resamples=args.resamples, seed=derive_seed(cfg.seed, i)
        )
        print(
            f"bootstrap axis={row.axis} label={row.label} n={row.n_utts} "
            f"delta={boot.mean_delta:.4f} ci95=[{boot.ci_low:.4f},{boot.ci_high:.4f}] "
            f"p={boot.p_value:.4f}"
        )
    return 0


def cmd_viz_project(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    data = corpus.load_corpus(_require_corpus(cfg), cfg.embedding_dim)
    X = data.matrix()
    if args.models_dir:
        pca_model = pca.load_pca(os.path.join(args.models_dir, "pca_model.txt"))
        km = kmeans.load_kmeans(os.path.join(args.models_dir, "kmeans_model.txt"))
        if pca_model.rank < 2:
            raise DataError("projection needs a PCA model of rank at least 2")
    else:
        pca_model = pca.fit_pca(X, pca.FixedRank(2))
        km = kmeans.fit_kmeans(pca.transform_batch(pca_model, X), cfg.k, cfg.seed,
                               workers=cfg.workers)
    reduced = pca.transform_batch(pca_model, X)
    labels = kmeans.assign_batch(km, reduced, workers=cfg.workers)
    coords = reduced[:, :2]
    if args.label_axis is not None:
        if not any(args.label_axis in r.meta for r in data.records):
            raise UsageError(f"axis {args.label_axis!r} not present in corpus metadata")
    with open(args.out, "w", encoding="utf-8") as fh:
        if args.label_axis is None:
            fh.write("utt_id,pc1,pc2,cluster_id\n")
            for rec, xy, lab in zip(data.records, coords, labels):
                fh.write(f"{rec.utt_id},{float(xy[0])!r},{float(xy[1])!r},{int(lab)}\n")
        else:
            fh.write("utt_id,pc1,pc2,cluster_id,label\n")
            for rec, xy, lab in zip(data.records, coords, labels):
                label = rec.meta.get(args.label_axis, "")
                fh.write(f"{rec.utt_id},{float(xy[0])!r},{float(xy[1])!r},{int(lab)},{label}\n")
    print(f"projected {len(data)} records")
    return 0


def cmd_synth_generate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    blobs, _truth = corpus.synth_corpus(
        args.clusters, args.per_cluster, cfg.embedding_dim,
        args.separation, args.noise, cfg.seed,
    )
    corpus.save_corpus(blobs, args.out)
    print(f"wrote {len(blobs)} records in {args.clusters} clusters")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--p-unknown", dest="p_unknown", type=float, default=None)
    p.add_argument("--pca-variance", dest="pca_variance", type=float, default=None)
    p.add_argument("--pca-rank", dest="pca_rank", type=int, default=None)
    p.add_argument("--mode", choices=("flat", "hier"), default=None)
    p.add_argument("--branching", default=None, help="comma-separated factors, e.g. 5,10")
    p.add_argument("--dim", type=int, default=None, help="embedding dimension")
    p.add_argument("--workers", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="acoustic-cohorts", description=__doc__)
    groups = parser.add_subparsers(dest="group", required=True)

    cluster = groups.add_parser("cluster").add_subparsers(dest="verb", required=True)
    fit = cluster.add_parser("fit", help="fit PCA and K-means, write models and assignments")
    _add_common(fit)
    fit.add_argument("--corpus", required=False)
    fit.add_argument("--out-dir", dest="out_dir", default=None)
    fit.set_defaults(func=cmd_cluster_fit)

    features = groups.add_parser("features").add_subparsers(dest="verb", required=True)
    emit = features.add_parser("emit", help="emit one-hot conditioning features")
    _add_common(emit)
    emit.add_argument("--emit-mode", choices=("train", "inference"), required=True)
    emit.add_argument("--assignments", help="assignments csv (train mode)")
    emit.add_argument("--corpus", help="corpus file for utt_ids (inference mode)")
    emit.add_argument("--count", type=int, default=None, help="row count (inference mode)")
    emit.add_argument("--out", required=True)
    emit.set_defaults(func=cmd_features_emit)

    evaluation = groups.add_parser("eval").add_subparsers(dest="verb", required=True)
    report = evaluation.add_parser("report", help="per-group WER report with bootstrap")
    _add_common(report)
    report.add_argument("--baseline", required=True)
    report.add_argument("--treatment", required=True)
    report.add_argument("--axes", required=True, help="comma-separated axis names")
    report.add_argument("--out", required=True)
    report.add_argument("--resamples", type=int, default=1000)
    report.set_defaults(func=cmd_eval_report)

    viz = groups.add_parser("viz").add_subparsers(dest="verb", required=True)
    project = viz.add_parser("project", help="export 2-D projection with cluster ids")
    _add_common(project)
    project.add_argument("--corpus", required=False)
    project.add_argument("--models-dir", dest="models_dir", default=None)
    project.add_argument("--label-axis", dest="label_axis", default=None)
    project.add_argument("--out", required=True)
    project.set_defaults(func=cmd_viz_project)

    synth = groups.add_parser("synth").add_subparsers(dest="verb", required=True)
    generate = synth.add_parser("generate", help="write a synthetic blob corpus")
    _add_common(generate)
    generate.add_argument("--clusters", type=int, required=True)
    generate.add_argument("--per-cluster", dest="per_cluster", type=int, required=True)
    generate.add_argument("--separation", type=float, default=30.0)
    generate.add_argument("--noise", type=float, default=1.0)
    generate.add_argument("--out", required=True)
    generate.set_defaults(func=cmd_synth_generate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
