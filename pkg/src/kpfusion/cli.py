"""Command-line interface: ``kpfusion {ingest,enroll,verify,evaluate,synth,inspect}``.

Exit codes: 0 when the command ran (a REJECT decision included), 1 on domain
errors, 2 on usage or file-format errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .clustering import load_clustering_dump, save_clustering
from .errors import FormatError, InvalidConfig, InvalidProfile, KpFusionError
from .evaluation import ordering_holds
from .experiment import read_dataset, run_experiment, synthetic_subjects, write_dataset
from .fusion import MAGIC as FTV_MAGIC
from .fusion import FusedTemplate, load_template, save_template
from .graphs import load_mapping
from .keypoints import MAGIC as KPT_MAGIC
from .keypoints import PROFILES, SynthProfile, load_keypoints
from .matching import METRICS, verify
from .pipeline import build_template_detailed, cluster_modality, load_config

log = logging.getLogger("kpfusion")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2
DEFAULT_SEED = 0


class UsageError(Exception):
    pass


def _config(args):
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return load_config(args.config, overrides)


def _load_kpt(path: str):
    try:
        return load_keypoints(path)
    except FileNotFoundError:
        raise UsageError(f"no such file: {path}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_ingest(args) -> int:
    kset = _load_kpt(args.path)
    print(f"{args.path}: {kset.modality.value} subject={kset.subject_id} capture={kset.capture_id} "
          f"points={len(kset)}")
    if args.clusters:
        config = _config(args)
        clustering = cluster_modality(kset, config)
        save_clustering(clustering, args.clusters)
        sizes = np.bincount(clustering.assignments, minlength=clustering.k).tolist()
        print(f"clusters k={clustering.k} sizes={sizes} excluded={int(clustering.excluded.sum())} -> {args.clusters}")
    return EXIT_OK


def cmd_enroll(args) -> int:
    face, palm = _load_kpt(args.face), _load_kpt(args.palm)
    config = _config(args)
    build = build_template_detailed(face, palm, config)
    sid = args.subject_id or face.subject_id
    store = Path(args.store_dir)
    store.mkdir(parents=True, exist_ok=True)
    out = store / f"{sid}.ftv"
    replaced = out.exists()
    template = build.template
    if sid != template.subject_id:
        template = FusedTemplate(template.values, sid, template.k, template.p, template.padded_count)
    save_template(template, out)
    if replaced:
        print(f"replaced existing template {out}")
    print(f"enrolled {sid} -> {out} length={len(template)} padded={build.padded_count}")
    return EXIT_OK


def cmd_verify(args) -> int:
    path = Path(args.store_dir) / f"{args.claim}.ftv"
    if not path.is_file():
        print(f"error: subject {args.claim!r} is not enrolled in {args.store_dir}", file=sys.stderr)
        return EXIT_DOMAIN
    reference = load_template(path)
    face, palm = _load_kpt(args.face), _load_kpt(args.palm)
    config = _config(args)
    probe = build_template_detailed(face, palm, config).template
    if args.metric:
        config = replace(config, metric=args.metric)
    threshold = config.default_threshold() if args.threshold is None else args.threshold
    metric = config.metric
    decision = verify(metric, probe, [reference], 1, threshold)
    print(decision.line())
    return EXIT_OK


def cmd_evaluate(args) -> int:
    config = _config(args)
    try:
        subjects = read_dataset(args.dataset_dir)
    except FormatError as exc:
        # a malformed dataset is a domain failure, not a usage error
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    if len(subjects) < 2:
        print(f"error: {args.dataset_dir} holds {len(subjects)} subject(s); impostor trials need at least 2",
              file=sys.stderr)
        return EXIT_DOMAIN
    metrics = METRICS if args.metric == "both" else (args.metric,)
    result = run_experiment(subjects, config, metrics, grid_points=args.grid_points)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stem = out.with_suffix("")
    for (modality, metric), report in result.reports.items():
        path = Path(f"{stem}_{modality}_{metric}.roc")
        report.save(path)
        print(f"{modality:5s} {metric:11s} auc={report.auc:.4f} eer={report.eer:.2f}% -> {path}")
    summary = result.comparison.to_text()
    if len(metrics) == 2:
        summary += "".join(f"{name} {'holds' if ok else 'fails'}\n"
                           for name, ok in ordering_holds(result.comparison).items())
    summary_path = Path(f"{stem}_summary.txt")
    summary_path.write_text(summary, encoding="utf-8")
    print(f"summary -> {summary_path}")
    return EXIT_OK


def _profile(spec: str | None) -> SynthProfile:
    if spec is None:
        return PROFILES["default"]
    if spec in PROFILES:
        return PROFILES[spec]
    path = Path(spec)
    if not path.is_file():
        raise UsageError(f"--profile must be one of {sorted(PROFILES)} or a key=value file, got {spec!r}")
    values = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError("expected key=value", line=lineno, path=str(path))
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return SynthProfile.from_mapping(values)


def cmd_synth(args) -> int:
    if args.subjects < 1:
        raise UsageError("--subjects must be >= 1")
    seed = DEFAULT_SEED if args.seed is None else args.seed
    profile = _profile(args.profile)
    print(f"seed={seed}")
    written = write_dataset(synthetic_subjects(args.subjects, seed, profile), args.out_dir)
    print(f"wrote {len(written)} files for {args.subjects} subjects -> {args.out_dir}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.is_file():
        raise UsageError(f"no such file: {path}")
    with path.open(encoding="utf-8") as fh:
        head = fh.readline().split()
    magic = head[0] if head else ""
    if magic == KPT_MAGIC:
        kset = load_keypoints(path)
        norms = np.linalg.norm(kset.descriptors, axis=1)
        print(f"keypoints {kset.modality.value} subject={kset.subject_id} capture={kset.capture_id} "
              f"points={len(kset)}")
        print(f"x [{kset.xy[:, 0].min():.2f}, {kset.xy[:, 0].max():.2f}] "
              f"y [{kset.xy[:, 1].min():.2f}, {kset.xy[:, 1].max():.2f}] "
              f"descriptor norm mean={norms.mean():.4f}")
    elif magic == FTV_MAGIC:
        t = load_template(path)
        zero_blocks = int(np.count_nonzero(~t.values.reshape(-1, 128).any(axis=1)))
        print(f"template subject={t.subject_id} k={t.k} p={t.p} length={len(t)} zero_blocks={zero_blocks}")
    elif magic == "CLU1":
        k, assignments, silhouettes, excluded = load_clustering_dump(path)
        sizes = np.bincount(assignments, minlength=k).tolist()
        print(f"clustering k={k} n={assignments.size} sizes={sizes} excluded={int(np.sum(excluded))} "
              f"mean_silhouette={float(np.mean(silhouettes)):.4f}")
    elif magic == "threshold":
        lines = path.read_text(encoding="utf-8").splitlines()
        tail = lines[-1].split()
        print(f"roc rows={len(lines) - 2} {' '.join(tail)}")
    elif path.suffix == ".map":
        mapping, cost, converged = load_mapping(path)
        print(f"mapping n={mapping.size} cost={cost!r} converged={converged}")
    else:
        raise FormatError("unrecognised file type", line=1, path=str(path))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kpfusion", description="Face/palmprint keypoint feature-level fusion.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate a .kpt file and optionally dump its clustering")
    p.add_argument("path")
    p.add_argument("--clusters", metavar="OUT.clu", help="cluster the set and write a .clu dump")
    _add_config(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("enroll", help="build and store a fused template")
    p.add_argument("face")
    p.add_argument("palm")
    p.add_argument("--store-dir", default="store")
    p.add_argument("--subject-id", help="store under this id instead of the face file's subject id")
    _add_config(p)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("verify", help="verify a probe pair against a claimed identity")
    p.add_argument("face")
    p.add_argument("palm")
    p.add_argument("--claim", required=True)
    p.add_argument("--metric", choices=METRICS)
    p.add_argument("--threshold", type=float)
    p.add_argument("--store-dir", default="store")
    _add_config(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("evaluate", help="six-way ROC evaluation over a dataset directory")
    p.add_argument("--dataset-dir", required=True)
    p.add_argument("--metric", choices=(*METRICS, "both"), default="both")
    p.add_argument("--out", default="report.roc")
    p.add_argument("--grid-points", type=int, default=200)
    _add_config(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("synth", help="write a synthetic dataset directory")
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--seed", type=int, help=f"generator seed (default {DEFAULT_SEED})")
    p.add_argument("--profile", help=f"one of {sorted(PROFILES)} or a key=value file")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inspect", help="summarise a .kpt, .ftv, .clu, .map or .roc file")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, FormatError, InvalidConfig, InvalidProfile, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KpFusionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
