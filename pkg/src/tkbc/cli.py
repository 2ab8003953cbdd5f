"""Command-line entry points tying ingestion, training, inference and evaluation together.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Human-readable summaries go to stdout; machine-readable reports go to files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, gadgets as gadgets_mod, inference, kb as kb_mod
from . import persistence, training

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures to exit code 1
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tkbc", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="fit embeddings and optionally gadget weights")
    train.add_argument("--data", required=True, help="dataset directory")
    train.add_argument("--config", help="training config JSON")
    train.add_argument("--out", required=True, help="output bundle directory")
    train.add_argument("--seed", type=int, help="override the config seed")
    train.add_argument("--gadgets", action="store_true",
                       help="run the gadget phase after embedding training")
    train.add_argument("--phase", type=int, choices=(1, 2), default=1)
    train.add_argument("--from", dest="from_dir",
                       help="existing embedding bundle (required for --phase 2)")

    def eval_common(p):
        p.add_argument("--model", required=True, help="bundle directory")
        p.add_argument("--data", required=True, help="dataset directory")
        p.add_argument("--fold", default="test", choices=("valid", "test"))
        p.add_argument("--out", help="write the JSON report here")
        p.add_argument("--base-only", action="store_true",
                       help="ignore stored gadget parameters")
        p.add_argument("--max-queries", type=int)

    ev_link = sub.add_parser("eval-link", help="link-prediction MRR/HITS under a filter")
    eval_common(ev_link)
    ev_link.add_argument("--filter", default="time-aware",
                         choices=evaluation.FILTER_METHODS)
    ev_link.add_argument("--direction", default="both",
                         choices=("object", "subject", "both"))

    ev_time = sub.add_parser("eval-time", help="interval prediction metrics")
    eval_common(ev_time)
    ev_time.add_argument("--tune", action="store_true",
                         help="tune per-relation thresholds on the valid fold first")
    ev_time.add_argument("--metric", default="all",
                         choices=("all",) + tuple(evaluation.INTERVAL_METRICS))
    ev_time.add_argument("--dump", help="write per-query records (JSON lines) here")

    tune = sub.add_parser("tune-thresholds",
                          help="fit per-relation coalescing thresholds on the valid fold")
    eval_common(tune)

    mine = sub.add_parser("mine-constraints", help="extract relation ordering rules")
    mine.add_argument("--data", required=True)
    mine.add_argument("--confidence", type=float, default=0.99)
    mine.add_argument("--min-support", type=int, default=100)
    mine.add_argument("--out", help="constraint JSON path")

    diag = sub.add_parser("diagnose",
                          help="ordering-violation rate and embedding distance curve")
    eval_common(diag)
    diag.add_argument("--constraints", help="constraint JSON (mined when absent)")
    diag.add_argument("--confidence", type=float, default=0.99)
    diag.add_argument("--min-support", type=int, default=100)
    diag.add_argument("--curve", help="write (gap, mean_l2, support) CSV here")
    diag.add_argument("--min-gap-support", type=int, default=30)

    export = sub.add_parser("export-report",
                            help="render JSON report(s) as an aligned text table")
    export.add_argument("reports", nargs="+", help="report JSON files")
    export.add_argument("--out", help="write the table here instead of stdout")

    return parser


def _load_kb(data_dir: str) -> kb_mod.TemporalKB:
    kb = kb_mod.load_dataset(data_dir)
    if not kb.has_inverses:
        kb = kb_mod.add_inverse_facts(kb)
    return kb


def _load_bundle(model_dir: str, kb: kb_mod.TemporalKB):
    bundle = persistence.load_model(model_dir)
    if bundle.manifest.get("vocab_checksum") != kb.vocabulary.checksum():
        raise kb_mod.KbError(
            "model bundle was trained on a different vocabulary than this dataset")
    return bundle


def _scorer_from_bundle(bundle, kb, base_only: bool):
    if base_only:
        return None
    g = bundle.to_gadgets()
    if g is None:
        return None
    return inference.GadgetScorer(kb, g)


def _write_json(path: str | None, payload) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n",
                              encoding="utf-8")


def cmd_train(args) -> int:
    config = (training.TrainingConfig.from_json(args.config)
              if args.config else training.TrainingConfig())
    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    kb = _load_kb(args.data)
    rng = np.random.default_rng(config.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "training_log.jsonl"
    records: list[dict] = []

    def sink(rec):
        records.append(rec)

    if args.phase == 2:
        if not args.from_dir:
            raise _UsageError("--phase 2 requires --from <bundle>")
        bundle = _load_bundle(args.from_dir, kb)
        model = bundle.to_model()
        fitted = gadgets_mod.Gadgets.fit(kb, k_rec=config.k_rec,
                                         kappa=config.kappa, lam=config.lam)
        trained, _ = training.train_phase2(kb, model, fitted, config, rng=rng,
                                           log_sink=sink)
        bundle = persistence.ModelBundle.build(model, kb, gadgets=trained)
    else:
        model, _ = training.train_phase1(kb, config, rng=rng, log_sink=sink)
        trained = None
        if args.gadgets:
            fitted = gadgets_mod.Gadgets.fit(kb, k_rec=config.k_rec,
                                             kappa=config.kappa, lam=config.lam)
            trained, _ = training.train_phase2(kb, model, fitted, config, rng=rng,
                                               log_sink=sink)
        bundle = persistence.ModelBundle.build(model, kb, gadgets=trained)
    persistence.save_model(bundle, out)
    with open(log_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    (out / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"saved model bundle to {out} ({len(records)} logged epochs)")
    return EXIT_OK


def cmd_eval_link(args) -> int:
    kb = _load_kb(args.data)
    bundle = _load_bundle(args.model, kb)
    model = bundle.to_model()
    scorer = _scorer_from_bundle(bundle, kb, args.base_only)
    directions = ("object", "subject") if args.direction == "both" else (args.direction,)
    _, summary = evaluation.evaluate_link_fold(
        model, kb, fold=args.fold, method=args.filter, gadget_scorer=scorer,
        directions=directions, max_queries=args.max_queries)
    print(f"fold={args.fold} filter={args.filter} queries={summary['queries']}")
    for key in ("mrr", "hits@1", "hits@10"):
        print(f"  {key:<8} {summary[key]:.4f}")
    _write_json(args.out, summary)
    return EXIT_OK


def cmd_eval_time(args) -> int:
    kb = _load_kb(args.data)
    bundle = _load_bundle(args.model, kb)
    model = bundle.to_model()
    scorer = _scorer_from_bundle(bundle, kb, args.base_only)
    if args.tune:
        thresholds = inference.tune_thresholds(model, scorer, kb, fold="valid")
    else:
        thresholds = bundle.thresholds()
        if thresholds is None:
            thresholds = inference.ThresholdTable(
                theta=np.full(kb.vocabulary.n_relations, inference.DEFAULT_THETA))
    metrics = (tuple(evaluation.INTERVAL_METRICS) if args.metric == "all"
               else (args.metric,))
    reports, summary = evaluation.evaluate_time_fold(
        model, kb, thresholds, fold=args.fold, gadget_scorer=scorer,
        metrics=metrics, max_queries=args.max_queries)
    print(f"fold={args.fold} queries={summary['queries']}")
    for name in metrics:
        print(f"  {name:<11} {summary[name]:.4f}")
    _write_json(args.out, summary)
    if args.dump:
        with open(args.dump, "w", encoding="utf-8") as fh:
            for r in reports:
                fh.write(json.dumps({
                    "subject": r.subject, "relation": r.relation, "object": r.object,
                    "gold": list(r.gold), "predicted": list(r.predicted),
                    "metrics": r.metrics}, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_tune_thresholds(args) -> int:
    kb = _load_kb(args.data)
    bundle = _load_bundle(args.model, kb)
    model = bundle.to_model()
    scorer = _scorer_from_bundle(bundle, kb, args.base_only)
    table = inference.tune_thresholds(model, scorer, kb, fold="valid")
    bundle.manifest["has_thresholds"] = True
    bundle.manifest["threshold_default"] = table.default
    bundle.arrays["thresholds"] = table.theta.astype("<f4")
    persistence.save_model(bundle, args.model)
    payload = {"default": table.default,
               "theta": {kb.vocabulary.relation_names[r]: float(v)
                         for r, v in enumerate(table.theta)}}
    _write_json(args.out, payload)
    print(f"tuned thresholds for {table.theta.shape[0]} relations "
          f"(default {table.default:.2f})")
    return EXIT_OK


def cmd_mine(args) -> int:
    kb = _load_kb(args.data)
    constraints = gadgets_mod.mine_ordering_constraints(
        kb, confidence=args.confidence, min_support=args.min_support)
    print(f"mined {len(constraints)} ordering constraints "
          f"(confidence>={args.confidence}, support>={args.min_support})")
    names = kb.vocabulary.relation_names
    for c in constraints[:20]:
        print(f"  {names[c.earlier]} -> {names[c.later]} "
              f"(confidence {c.confidence:.3f}, support {c.support})")
    if args.out:
        gadgets_mod.write_constraints(constraints, kb, args.out)
    return EXIT_OK


def cmd_diagnose(args) -> int:
    kb = _load_kb(args.data)
    bundle = _load_bundle(args.model, kb)
    model = bundle.to_model()
    scorer = _scorer_from_bundle(bundle, kb, args.base_only)
    if args.constraints:
        constraints = gadgets_mod.read_constraints(args.constraints)
    else:
        constraints = gadgets_mod.mine_ordering_constraints(
            kb, confidence=args.confidence, min_support=args.min_support)
    queries = []
    for f in kb.folds[args.fold]:
        clipped = kb.clip_interval(f.interval)
        if clipped is None:
            continue
        queries.append(inference.LinkQuery("subject", f.object, f.relation, clipped)
                       .normalized(kb.vocabulary))
    if args.max_queries:
        queries = queries[:args.max_queries]
    rate = evaluation.ordering_violation_rate(model, scorer, queries, constraints, kb)
    print(f"ordering violations: {rate:.4f} of {len(queries)} queries "
          f"({len(constraints)} constraints)")
    payload = {"violation_rate": rate, "queries": len(queries),
               "constraints": len(constraints)}
    _write_json(args.out, payload)
    if args.curve:
        rows = evaluation.embedding_distance_curve(
            model, min_support=args.min_gap_support)
        with open(args.curve, "w", encoding="utf-8") as fh:
            fh.write("gap,mean_l2,support\n")
            for gap, dist, support in rows:
                fh.write(f"{gap},{dist:.6f},{support}\n")
    return EXIT_OK


def cmd_export_report(args) -> int:
    rows = []
    keys: list[str] = []
    for path in args.reports:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        flat = {k: v for k, v in payload.items() if isinstance(v, (int, float, str))}
        rows.append((Path(path).stem, flat))
        for k in flat:
            if k not in keys:
                keys.append(k)
    widths = {k: max(len(k), *(len(_fmt(flat.get(k))) for _, flat in rows))
              for k in keys}
    name_w = max(len("report"), *(len(name) for name, _ in rows))
    lines = ["report".ljust(name_w) + "  " +
             "  ".join(k.rjust(widths[k]) for k in keys)]
    for name, flat in rows:
        lines.append(name.ljust(name_w) + "  " +
                     "  ".join(_fmt(flat.get(k)).rjust(widths[k]) for k in keys))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _fmt(value) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


_COMMANDS = {
    "train": cmd_train,
    "eval-link": cmd_eval_link,
    "eval-time": cmd_eval_time,
    "tune-thresholds": cmd_tune_thresholds,
    "mine-constraints": cmd_mine,
    "diagnose": cmd_diagnose,
    "export-report": cmd_export_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (kb_mod.KbError, persistence.PersistenceError,
            evaluation.EvaluationError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except training.NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
