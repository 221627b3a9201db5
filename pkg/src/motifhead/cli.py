"""Command-line entry point.

Subcommands: train, eval, predict, sweep, cluster, gen-synth, extract-check.
Configuration comes from a TOML file plus flag overrides (flags win). All
randomness flows through explicit seeds, so rerunning any command with the
same arguments reproduces its output files byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import clustering, kernels, runconfig, sweeps
from .errors import ConfigError, DataError, NumericError
from .manifest import load_manifest, stratified_split, write_manifest
from .metrics import format_report, slice_report, write_reports
from .store import open_embedding_store, verify_store, write_store
from .synthetic import generate_synthetic
from .training import predict, train


def _add_override_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="run seed (required "
                   "here or in the config file)")
    p.add_argument("--epochs", type=int, default=None, help="training epochs "
                   "(default 200)")
    p.add_argument("--batch-size", type=int, default=None, help="batch size "
                   "(default 256)")
    p.add_argument("--lr", type=float, default=None, help="Adam learning rate "
                   "(default 0.001)")
    p.add_argument("--smt", type=float, default=None, help="secondary-motif "
                   "target (default 0.5)")
    p.add_argument("--rfw", type=float, default=None, help="red-flag weight "
                   "(default 0.5)")
    p.add_argument("--cw", type=float, default=None, help="canonical weight "
                   "(default 2.0)")
    p.add_argument("--threshold", type=float, default=None, help="prediction "
                   "probability threshold (default 0.5)")
    p.add_argument("--eval-every", type=int, default=None, help="epochs between "
                   "test evaluations (default 0 = final only)")


def _overrides_from(args) -> dict:
    return {
        "train.seed": args.seed,
        "train.epochs": args.epochs,
        "train.batch_size": args.batch_size,
        "train.lr": args.lr,
        "train.eval_every": args.eval_every,
        "train.threshold": args.threshold,
        "loss.smt": args.smt,
        "loss.rfw": args.rfw,
        "loss.cw": args.cw,
    }


def _load_inputs(args, doc: dict, input_dim: int):
    data_doc = doc.get("data", {})
    manifest_path = args.manifest or data_doc.get("manifest")
    store_path = args.store or data_doc.get("store")
    if not manifest_path:
        raise ConfigError("no manifest given (flag --manifest or [data].manifest)")
    if not store_path:
        raise ConfigError("no store given (flag --store or [data].store)")
    manifest = load_manifest(manifest_path)
    store = open_embedding_store(store_path, expected_dim=input_dim,
                                 manifest_ids=[r.image_id for r in manifest.records])
    return manifest, store, data_doc


def _ensure_split(manifest, args, data_doc, default_seed: int):
    if manifest.split:
        return manifest
    fraction = args.test_fraction if args.test_fraction is not None \
        else float(data_doc.get("test_fraction", 0.2))
    seed = args.split_seed if args.split_seed is not None \
        else int(data_doc.get("split_seed", default_seed))
    return stratified_split(manifest, fraction, seed)


def cmd_train(args) -> int:
    doc = runconfig.load_config_doc(args.config) if args.config else {}
    config = runconfig.build_train_config(doc, _overrides_from(args))
    manifest, store, data_doc = _load_inputs(args, doc, config.head.input_dim)
    with store:
        manifest = _ensure_split(manifest, args, data_doc, config.seed)
        record = train(manifest, store, config, out_dir=args.out)
    write_manifest(manifest, Path(args.out) / "split_manifest.txt")
    print(f"trained {config.epochs} epochs "
          f"(kernel backend: {kernels.BACKEND}, {record.wall_clock_s:.1f}s)")
    print(f"final train loss: {record.epoch_losses[-1]:.6f}")
    for report in record.final_reports.values():
        sys.stdout.write(format_report(report))
    print(f"run directory: {args.out}")
    return 0


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    if not manifest.ids_for("test"):
        raise DataError("manifest has no test split to evaluate on")
    from .heads import load_checkpoint

    params = load_checkpoint(args.checkpoint)
    store = open_embedding_store(args.store, expected_dim=params.config.input_dim)
    with store:
        preds = predict(params, store, manifest.ids_for("test"), args.threshold)
    reports = [slice_report(preds, manifest, s, conventional_pr=args.conventional_pr)
               for s in ("all", "red_flag", "canonical")]
    for report in reports:
        sys.stdout.write(format_report(report) + "\n")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        for report in reports:
            (Path(args.out) / f"metrics_{report.slice_label}.txt").write_text(
                format_report(report), encoding="utf-8")
        write_reports(reports, Path(args.out) / "metrics.tsv")
    return 0


def cmd_predict(args) -> int:
    from .heads import load_checkpoint

    params = load_checkpoint(args.checkpoint)
    ids = [i for i in args.ids.split(",") if i]
    if not ids:
        raise ConfigError("--ids is empty")
    store = open_embedding_store(args.store, expected_dim=params.config.input_dim)
    with store:
        preds = predict(params, store, ids, args.threshold)
    lines = ["image_id\t" + "\t".join(f"p{j}" for j in range(params.config.output_dim))]
    for pred in preds:
        cells = [pred.image_id] + [format(p, ".17g") for p in pred.probabilities]
        lines.append("\t".join(cells))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    spec = sweeps.load_sweep_spec(args.spec, out_dir=Path(args.out),
                                  overrides=_overrides_from(args))
    manifest, store, data_doc = _load_inputs(args, {"data": spec.data_doc},
                                             spec.base.head.input_dim)
    with store:
        manifest = _ensure_split(manifest, args, data_doc, spec.base.seed)
        rows = sweeps.run_sweep(spec, manifest, store)
    print(f"swept {len(rows)} grid points -> {Path(args.out) / 'sweep.tsv'}")
    for rank, point, value in sweeps.rank_models(rows, args.rank_by):
        print(f"  #{rank} {point}: {args.rank_by}={value:.4f}")
    return 0


def cmd_cluster(args) -> int:
    manifest = load_manifest(args.manifest)
    ids = [r.image_id for r in manifest.records]
    store = open_embedding_store(args.store, manifest_ids=ids)
    with store:
        assignment = clustering.kmeans(store, ids, args.k, args.seed,
                                       max_iters=args.max_iters, tol=args.tol)
    table, purity = clustering.cluster_label_agreement(assignment, manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    clustering.write_assignment(assignment, out / "assignment.tsv")
    clustering.write_contingency(table, purity, manifest.motif_names,
                                 out / "contingency.tsv")
    print(f"k={assignment.k} inertia={assignment.inertia:.6f} "
          f"iters={assignment.n_iters} purity={purity:.4f}")
    print(f"wrote {out / 'assignment.tsv'} and {out / 'contingency.tsv'}")
    return 0


def cmd_gen_synth(args) -> int:
    manifest, embeddings = generate_synthetic(
        n_classes=args.classes, dim=args.dim, per_class=args.per_class,
        sm_rate=args.sm_rate, rf_rate=args.rf_rate, can_rate=args.can_rate,
        noise=args.noise, seed=args.seed)
    if args.test_fraction is not None:
        manifest = stratified_split(manifest, args.test_fraction,
                                    args.split_seed if args.split_seed is not None
                                    else args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(manifest, out / "manifest.txt")
    write_store(out / "embeddings.mhed", args.dim, embeddings)
    print(f"generated {len(manifest.records)} records over {args.classes} motifs "
          f"(dim {args.dim}) -> {out}")
    return 0


def cmd_extract_check(args) -> int:
    report = verify_store(args.store)
    print(report.summary())
    if report.ok and args.manifest:
        manifest = load_manifest(args.manifest)
        with open_embedding_store(args.store) as store:
            missing = [r.image_id for r in manifest.records if r.image_id not in store]
        if missing:
            print(f"ERROR: store lacks {len(missing)} manifest ids: "
                  + ", ".join(missing[:10]))
            return 3
        print(f"manifest coverage OK ({len(manifest.records)} ids)")
    return 0 if report.ok else 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motifhead",
        description="Train, evaluate, and ablate multi-label motif "
                    "classification heads over precomputed image embeddings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a head and write a run directory")
    p.add_argument("--config", help="TOML run config (flags override it)")
    p.add_argument("--manifest", help="dataset manifest path")
    p.add_argument("--store", help="embedding store path")
    p.add_argument("--out", required=True, help="run directory to create")
    p.add_argument("--test-fraction", type=float, default=None,
                   help="test fraction when the manifest has no split (default 0.2)")
    p.add_argument("--split-seed", type=int, default=None,
                   help="split seed (default: the run seed)")
    _add_override_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint over the test split "
                                    "(all / red_flag / canonical slices)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--threshold", type=float, default=0.5,
                   help="prediction probability threshold (default 0.5)")
    p.add_argument("--conventional-pr", action="store_true",
                   help="swap the P/R normalizations to the textbook orientation")
    p.add_argument("--out", help="optional directory for report files")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="per-image probability table for given ids")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--ids", required=True, help="comma-separated image ids")
    p.add_argument("--threshold", type=float, default=0.5,
                   help="prediction probability threshold (default 0.5)")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("sweep", help="train a grid of configs and tabulate metrics")
    p.add_argument("--spec", required=True, help="sweep spec TOML (config + [axes])")
    p.add_argument("--manifest", help="dataset manifest path")
    p.add_argument("--store", help="embedding store path")
    p.add_argument("--out", required=True, help="sweep output directory")
    p.add_argument("--rank-by", default="f1",
                   help="metric for the printed ranking (default f1)")
    p.add_argument("--test-fraction", type=float, default=None,
                   help="test fraction when the manifest has no split (default 0.2)")
    p.add_argument("--split-seed", type=int, default=None,
                   help="split seed (default: the base config seed)")
    _add_override_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cluster", help="k-means over normalized embeddings plus "
                                       "motif agreement table")
    p.add_argument("--manifest", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--k", type=int, default=20, help="cluster count (default 20)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("gen-synth", help="generate a synthetic manifest + store")
    p.add_argument("--classes", type=int, default=20,
                   help="number of motifs (default 20)")
    p.add_argument("--dim", type=int, default=64,
                   help="embedding dim, >= classes (default 64)")
    p.add_argument("--per-class", type=int, default=50,
                   help="records per motif (default 50)")
    p.add_argument("--sm-rate", type=float, default=0.015,
                   help="secondary-motif rate (default 0.015)")
    p.add_argument("--rf-rate", type=float, default=0.056,
                   help="red-flag rate (default 0.056)")
    p.add_argument("--can-rate", type=float, default=0.108,
                   help="canonical rate (default 0.108)")
    p.add_argument("--noise", type=float, default=0.1,
                   help="isotropic noise scale (default 0.1)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--test-fraction", type=float, default=None,
                   help="also assign a stratified split with this test fraction")
    p.add_argument("--split-seed", type=int, default=None,
                   help="split seed (default: --seed)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_synth)

    p = sub.add_parser("extract-check",
                       help="validate an embedding store file (format, offsets, "
                            "finiteness)")
    p.add_argument("--store", required=True)
    p.add_argument("--manifest", help="optionally check id coverage against a manifest")
    p.set_defaults(func=cmd_extract_check)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
