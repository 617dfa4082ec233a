"""``ecgx`` command line.

Every subcommand reads its inputs from files, writes its outputs to files and
prints a one-line JSON summary on stdout. All randomness flows from
``--seed``. Failures print ``error: <ErrorClass>: <message>`` on stderr and
exit with 2 (usage), 3 (data) or 4 (model).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .dataset import (
    ArrayStore,
    extract_feature_store,
    load_bundle,
    load_dataset,
    save_bundle,
    segment_dataset,
    stack_blocks,
    synthesize_cohort,
    write_dataset,
)
from .errors import DataError, EcgxError, ModelError, UsageError
from .metrics import EvalReport, IdentificationReport, compute_accuracy, compute_eer, format_roc, roc_points
from .models import ConvAutoencoder, IdentificationHead, SiameseVerifier
from .protocol import (
    Scenario,
    make_finetune_pairs,
    make_multi_session_pairs,
    make_single_session_pairs,
    make_training_pairs,
    pair_summary,
    pairs_to_arrays,
    read_pair_manifest,
    split_identification,
    split_subjects,
    write_pair_manifest,
)

EVAL_SCENARIOS = ("single-session", "multi-session")
IDENT_SCENARIOS = ("ident-single", "ident-multi", "ident-mixed")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, sort_keys=True))


def _load_store(path) -> ArrayStore:
    return ArrayStore.load(path)


def _subset(store: ArrayStore, subjects) -> ArrayStore:
    keep = set(subjects)
    out = ArrayStore(store.meta)
    for (subject, session, kind), block in store.items():
        if subject in keep:
            out.add(subject, session, kind, block)
    return out


def _exclusions(value: Optional[str]) -> List[str]:
    if not value:
        return []
    path = Path(value)
    if path.is_file():
        return [line.strip() for line in path.read_text().splitlines() if line.strip()]
    return [v for v in value.split(",") if v]


def _check_leads(store: ArrayStore, leads: int) -> None:
    if store.n_leads is not None and store.n_leads < leads:
        raise DataError(f"feature store has {store.n_leads} leads; --leads {leads} needs {leads}")


def _lead_view(store: ArrayStore, leads: int) -> ArrayStore:
    """Lead I only (the first lead) for the 1-lead pathway of a multi-lead store."""
    _check_leads(store, leads)
    if store.n_leads == leads:
        return store
    out = ArrayStore(store.meta)
    for (subject, session, kind), block in store.items():
        out.add(subject, session, kind, block[:, :leads])
    return out


# ------------------------------------------------------------------ commands

def cmd_synth(args) -> dict:
    cohort = synthesize_cohort(args.subjects, args.sessions, args.duration, seed=args.seed, n_leads=args.leads)
    manifest = write_dataset(cohort.records, args.out, name=args.name)
    return {"manifest": str(manifest), "records": len(cohort.records)}


def cmd_preprocess(args) -> dict:
    dataset = load_dataset(args.manifest)
    store = segment_dataset(dataset, on_error="skip" if args.skip_errors else "raise")
    store.save(args.out)
    for message in store.errors:
        print(f"warning: {message}", file=sys.stderr)
    counts = {}
    for (_, _, kind), block in store.items():
        counts[kind] = counts.get(kind, 0) + len(block)
    return {"out": args.out, "records": len(store) // 3, "segments": counts, "skipped": len(store.errors)}


def _fit_kwargs(args) -> dict:
    return {"max_epochs": args.max_epochs, "batch_size": args.batch_size, "learning_rate": args.learning_rate,
            "random_state": args.seed, "verbose": args.verbose}


def cmd_train_ae(args) -> dict:
    segments = _load_store(args.segments)
    X = stack_blocks(segments, "single", limit_per_block=args.max_per_record, seed=args.seed)
    ae = ConvAutoencoder(**_fit_kwargs(args)).fit(X)
    save_bundle(ae.to_bundle(), args.out)
    return {"out": args.out, "segments": int(len(X)), "epochs": ae.n_iter_,
            "best_val_loss": ae.best_validation_loss_}


def cmd_extract(args) -> dict:
    segments = _load_store(args.segments)
    ae = ConvAutoencoder.from_bundle(load_bundle(args.ae))
    features = extract_feature_store(segments, ae)
    features.save(args.out)
    return {"out": args.out, "blocks": len(features), "n_leads": features.n_leads}


def cmd_train_siamese(args) -> dict:
    features = _lead_view(_load_store(args.features), args.leads)
    train_subjects, test_subjects = split_subjects(features.subjects(), (args.train_fraction, 1 - args.train_fraction),
                                                   seed=args.seed)
    train = _subset(features, train_subjects)
    pairs = make_training_pairs(train, seed=args.seed, genuine_per_subject=args.genuine_per_subject)
    X, y = pairs_to_arrays(pairs, train)
    model = SiameseVerifier(n_leads=args.leads, **_fit_kwargs(args)).fit(X, y)
    bundle = model.to_bundle()
    bundle.metadata.update({"train_subjects": train_subjects, "test_subjects": test_subjects, "seed": args.seed})
    save_bundle(bundle, args.out)
    return {"out": args.out, "pairs": pair_summary(pairs), "epochs": model.n_iter_,
            "best_val_loss": model.best_validation_loss_, "test_subjects": len(test_subjects)}


def cmd_finetune_siamese(args) -> dict:
    bundle = load_bundle(args.siamese)
    model = SiameseVerifier.from_bundle(bundle)
    features = _lead_view(_load_store(args.features), model.n_leads)
    train_pairs, val_pairs = make_finetune_pairs(features, _exclusions(args.exclude), seed=args.seed,
                                                 genuine_per_subject=args.genuine_per_subject)
    X, y = pairs_to_arrays(train_pairs, features)
    Xv, yv = pairs_to_arrays(val_pairs, features)
    model.set_params(warm_start=True, **_fit_kwargs(args))
    model.fit(X, y, X_val=Xv, y_val=yv)
    out = model.to_bundle()
    out.metadata.update({key: value for key, value in bundle.metadata.items() if key != "n_iter"})
    out.metadata["finetune"] = {"seed": args.seed, "excluded": sorted(_exclusions(args.exclude))}
    save_bundle(out, args.out)
    return {"out": args.out, "train_pairs": pair_summary(train_pairs), "val_pairs": pair_summary(val_pairs),
            "epochs": model.n_iter_}


def _ident_split(features, scenario, seed, quota):
    split = split_identification(features, scenario, seed=seed, quota=quota)
    return split, {name: (features.gather(part.refs), part.labels)
                   for name, part in (("train", split.train), ("val", split.val), ("test", split.test))}


def cmd_train_ident(args) -> dict:
    verifier = SiameseVerifier.from_bundle(load_bundle(args.siamese))
    features = _lead_view(_load_store(args.features), verifier.n_leads)
    split, data = _ident_split(features, args.scenario, args.seed, args.quota)
    head = IdentificationHead(verifier=verifier, **_fit_kwargs(args))
    head.fit(*data["train"], *data["val"])
    bundle = head.to_bundle()
    bundle.metadata.update({"scenario": args.scenario, "seed": args.seed, "quota": split.quota})
    save_bundle(bundle, args.out)
    accuracy = compute_accuracy(head.predict(data["test"][0]), data["test"][1])
    return {"out": args.out, "subjects": len(split.classes), "quota": split.quota, "epochs": head.n_iter_,
            "test_accuracy": accuracy}


def _verification_pairs(features, scenario, seed):
    fn = make_single_session_pairs if scenario == "single-session" else make_multi_session_pairs
    return fn(features, seed=seed)


def _eval_subjects(features: ArrayStore, bundle, which: str) -> ArrayStore:
    if which == "all":
        return features
    subjects = bundle.metadata.get("test_subjects")
    if not subjects:
        raise ModelError("bundle records no held-out test subjects; use --subjects all")
    return _subset(features, subjects)


def _provenance(path) -> dict:
    # name and content digest only, so reports do not depend on where files live
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return {"name": Path(path).name, "sha256": digest}


def cmd_eval_verify(args) -> dict:
    bundle = load_bundle(args.siamese)
    model = SiameseVerifier.from_bundle(bundle)
    features = _eval_subjects(_lead_view(_load_store(args.features), model.n_leads), bundle, args.subjects)
    results, counts = [], None
    if args.pairs:
        pair_sets = [read_pair_manifest(args.pairs)]
    else:
        pair_sets = [_verification_pairs(features, args.scenario, args.seed + r) for r in range(args.runs)]
    for pairs in pair_sets:
        X, y = pairs_to_arrays(pairs, features)
        scores = model.decision_function(X)
        results.append(compute_eer(scores[y == 1], scores[y == 0]))
        counts = pair_summary(pairs)
    config = {"command": "eval-verify", "features": _provenance(args.features),
              "siamese": _provenance(args.siamese), "scenario": args.scenario, "seed": args.seed,
              "runs": len(pair_sets), "subjects": args.subjects,
              "pairs": _provenance(args.pairs) if args.pairs else None, "leads": model.n_leads,
              "model_checksum": bundle.checksum()}
    report = EvalReport.from_runs(args.scenario, results, counts["genuine"], counts["impostor"], config)
    report.save(args.out)
    return {"out": args.out, "mean_eer": report.mean_eer, "std_eer": report.std_eer, "runs": report.runs}


def cmd_eval_ident(args) -> dict:
    bundle = load_bundle(args.ident)
    head = IdentificationHead.from_bundle(bundle)
    scenario = args.scenario or bundle.metadata.get("scenario", "ident-mixed")
    seed = args.seed if args.seed is not None else bundle.metadata.get("seed", 0)
    features = _lead_view(_load_store(args.features), head.network_.n_leads)
    split, data = _ident_split(features, scenario, seed, bundle.metadata.get("quota"))
    X, y = data["test"]
    accuracy = compute_accuracy(head.predict(X), y)
    config = {"command": "eval-ident", "features": _provenance(args.features), "ident": _provenance(args.ident),
              "scenario": scenario,
              "seed": seed, "quota": split.quota, "model_checksum": bundle.checksum()}
    report = IdentificationReport.from_runs(scenario, [accuracy], len(split.classes), len(y), config)
    report.save(args.out)
    return {"out": args.out, "accuracy": accuracy}


def cmd_export_pairs(args) -> dict:
    store = _load_store(args.store)
    if args.scenario == "training":
        pairs = make_training_pairs(store, seed=args.seed)
    elif args.scenario == "finetune":
        train, val = make_finetune_pairs(store, _exclusions(args.exclude), seed=args.seed)
        pairs = train if args.split == "train" else val
    else:
        pairs = _verification_pairs(store, args.scenario, args.seed)
    write_pair_manifest(pairs, args.out)
    return {"out": args.out, **pair_summary(pairs)}


def cmd_roc(args) -> dict:
    bundle = load_bundle(args.siamese)
    model = SiameseVerifier.from_bundle(bundle)
    features = _eval_subjects(_lead_view(_load_store(args.features), model.n_leads), bundle, args.subjects)
    pairs = _verification_pairs(features, args.scenario, args.seed)
    X, y = pairs_to_arrays(pairs, features)
    scores = model.decision_function(X)
    points = roc_points(scores[y == 1], scores[y == 0])
    Path(args.out).write_text(format_roc(points), encoding="utf-8")
    eer, threshold = compute_eer(scores[y == 1], scores[y == 0])
    return {"out": args.out, "points": len(points), "eer": eer, "threshold": threshold}


# ------------------------------------------------------------------ parser

def _training_flags(p, epochs: int = 200) -> None:
    p.add_argument("--max-epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--learning-rate", type=float, default=1e-3)


def _common_flags(p, seed_default: Optional[int] = 0) -> None:
    p.add_argument("--seed", type=int, default=seed_default, help="seed for every random choice")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on numeric worker threads (fallback: $ECGX_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ecgx", description="ECG biometric verification and identification toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, seed_default=0):
        p = sub.add_parser(name, help=help_text)
        _common_flags(p, seed_default)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic cohort (manifest + record tables)")
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--sessions", type=int, default=2)
    p.add_argument("--duration", type=float, default=60.0, help="seconds per session")
    p.add_argument("--leads", type=int, choices=(1, 12), default=1)
    p.add_argument("--name", default="synthetic")
    p.add_argument("--out", required=True)

    p = add("preprocess", cmd_preprocess, "filter, segment and normalize a dataset into a segment store")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--skip-errors", action="store_true", help="skip failing records instead of aborting")

    p = add("train-ae", cmd_train_ae, "train the autoencoder on single segments")
    p.add_argument("--segments", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-per-record", type=int, default=None, help="cap on singles used per record")
    _training_flags(p)

    p = add("extract", cmd_extract, "encode a segment store into a feature store")
    p.add_argument("--segments", required=True)
    p.add_argument("--ae", required=True)
    p.add_argument("--out", required=True)

    p = add("train-siamese", cmd_train_siamese, "train a 1-lead or 12-lead Siamese verifier")
    p.add_argument("--features", required=True)
    p.add_argument("--leads", type=int, choices=(1, 12), default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--genuine-per-subject", type=int, default=3)
    p.add_argument("--train-fraction", type=float, default=0.7,
                   help="fraction of subjects used for training; the rest are held out for evaluation")
    _training_flags(p)

    p = add("finetune-siamese", cmd_finetune_siamese, "fine-tune a verifier on single-vs-single pairs")
    p.add_argument("--features", required=True)
    p.add_argument("--siamese", required=True)
    p.add_argument("--exclude", default=None, help="file with one subject id per line, or a comma list")
    p.add_argument("--out", required=True)
    p.add_argument("--genuine-per-subject", type=int, default=50)
    _training_flags(p)

    p = add("train-ident", cmd_train_ident, "train an identification head on a frozen verifier branch")
    p.add_argument("--features", required=True)
    p.add_argument("--siamese", required=True)
    p.add_argument("--scenario", choices=IDENT_SCENARIOS, default="ident-mixed")
    p.add_argument("--quota", type=int, default=None, help="training summaries per subject")
    p.add_argument("--out", required=True)
    _training_flags(p)

    p = add("eval-verify", cmd_eval_verify, "equal error rate over seeded evaluation runs")
    p.add_argument("--features", required=True)
    p.add_argument("--siamese", required=True)
    p.add_argument("--scenario", choices=EVAL_SCENARIOS, required=True)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--subjects", choices=("all", "test"), default="all",
                   help="evaluate every subject, or only those held out when the verifier was trained")
    p.add_argument("--pairs", default=None, help="score this pair manifest instead of generating pairs")
    p.add_argument("--out", required=True)

    # the seed defaults to the one the head was trained with
    p = add("eval-ident", cmd_eval_ident, "top-1 accuracy of an identification head on its test split",
            seed_default=None)
    p.add_argument("--features", required=True)
    p.add_argument("--ident", required=True)
    p.add_argument("--scenario", choices=IDENT_SCENARIOS, default=None)
    p.add_argument("--out", required=True)

    p = add("export-pairs", cmd_export_pairs, "write a pair manifest")
    p.add_argument("--store", required=True, help="segment or feature store")
    p.add_argument("--scenario", choices=("training", "single-session", "multi-session", "finetune"), required=True)
    p.add_argument("--exclude", default=None)
    p.add_argument("--split", choices=("train", "val"), default="train", help="fine-tune split to export")
    p.add_argument("--out", required=True)

    p = add("roc", cmd_roc, "ROC points (threshold,far,frr) for one evaluation run")
    p.add_argument("--features", required=True)
    p.add_argument("--siamese", required=True)
    p.add_argument("--scenario", choices=EVAL_SCENARIOS, required=True)
    p.add_argument("--subjects", choices=("all", "test"), default="all")
    p.add_argument("--out", required=True)
    return parser


def _threads(args) -> Optional[int]:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("ECGX_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"ECGX_THREADS must be an integer, got {env!r}") from None
    return None


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        threads = _threads(args)
        if threads is not None and threads < 1:
            raise UsageError("--threads must be at least 1")
        with threadpool_limits(limits=threads):
            _emit(args.func(args))
        return 0
    except EcgxError as exc:
        print(f"error: {type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: DataError: {exc}", file=sys.stderr)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
