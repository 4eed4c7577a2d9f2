"""Command-line entry points.

One `modpipe` executable with subcommands covering the pipeline stages:
corpus import, synthetic expansion, training, selection, the iterative
loop, label-quality checks, model probing, evaluation, and the HTTP
service.  Every subcommand reads the shared JSON config file (``--config``
flag, ``MODPIPE_CONFIG`` env var, or ``./modpipe.json``) and applies flag
overrides on top.  Failures print a single ``error: ...`` line on stderr
and exit 1; unknown commands exit 2 with usage text.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evalx, quality, synthgen
from .config import Config, ConfigError, load_config, write_default
from .corpus import CorpusError, Dataset, consolidate, export_jsonl, import_jsonl, mask_pii
from .net import CheckpointError, NetError, load as load_checkpoint, save_model
from .probe import ProbeError, keytoken_report
from .select import (
    DatasetOracle,
    SelectError,
    StrategyMix,
    run_loop,
    score_pool,
    select_batch,
)
from .service import ServiceConfig, ServiceError, serve
from .taxonomy import TaxonomyError
from .train import TrainError, train

KNOWN_ERRORS = (
    ConfigError,
    CorpusError,
    TaxonomyError,
    NetError,
    CheckpointError,
    TrainError,
    SelectError,
    ProbeError,
    ServiceError,
    quality.QualityError,
    synthgen.SynthError,
    evalx.EvalError,
    OSError,
    ValueError,
)


def _write_json(obj, path):
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_dataset(path) -> Dataset:
    p = Path(path)
    if not p.exists():
        raise CorpusError(f"dataset file not found: {p}")
    return import_jsonl(p)


def _truth_map(ds: Dataset):
    return {s.id: (s.consolidated if s.consolidated is not None else consolidate(s)) for s in ds if s.labels}


def cmd_init(cfg: Config, args) -> int:
    path = write_default(args.path)
    print(f"wrote default config to {path}")
    return 0


def cmd_import(cfg: Config, args) -> int:
    ds = _load_dataset(args.input)
    if args.mask_pii:
        masked = Dataset(name=ds.name)
        for s in ds:
            masked.add(
                type(s)(
                    id=s.id,
                    text=mask_pii(s.text),
                    domain=s.domain,
                    metadata=dict(s.metadata),
                    labels=list(s.labels),
                    consolidated=s.consolidated,
                )
            )
        ds = masked
    export_jsonl(ds, args.output)
    print(f"imported {len(ds)} samples -> {args.output}")
    return 0


def cmd_synth(cfg: Config, args) -> int:
    templates = synthgen.load_templates(args.templates)
    out = Dataset(name="synthetic")
    for t in templates:
        count = min(args.count, t.combinations())
        for s in synthgen.expand_template(t, count, args.seed):
            out.add(s)
    export_jsonl(out, args.output)
    print(f"expanded {len(templates)} templates into {len(out)} samples -> {args.output}")
    return 0


def cmd_train(cfg: Config, args) -> int:
    data = _load_dataset(args.data)
    feat_cfg = cfg.featurizer_config()
    net_cfg = cfg.network_config(**({"seed": args.seed} if args.seed is not None else {}))
    overrides = {}
    if args.mode:
        overrides["mode"] = args.mode
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    if args.lr is not None:
        overrides["lr"] = args.lr
    if args.seed is not None:
        overrides["seed"] = args.seed
    train_cfg = cfg.train_config(**overrides)
    validation = _load_dataset(args.validation) if args.validation else None
    target = _load_dataset(args.target) if args.target else None
    result = train(data, train_cfg, net_cfg, feat_cfg, validation=validation, target_pool=target)
    digest = save_model(result.model, args.output)
    entries = result.report.entries
    loss = f", final loss {entries[-1].objective:.6f}" if entries else ""
    print(f"saved checkpoint {digest} -> {args.output}{loss}")
    return 0


def cmd_select(cfg: Config, args) -> int:
    model = load_checkpoint(args.checkpoint)
    pool = _load_dataset(args.pool)
    scores = score_pool(model, pool)
    loop_cfg = cfg.loop_config()
    batch = select_batch(
        pool,
        scores,
        cfg.strategy_mix(),
        args.n,
        args.seed,
        reweight_key=args.reweight_key or loop_cfg.reweight_key,
        oversample=loop_cfg.oversample,
    )
    _write_json(batch.as_obj(), args.output)
    for w in batch.warnings:
        print(f"warning: {w}", file=sys.stderr)
    print(f"selected {len(batch)} samples -> {args.output}")
    return 0


def cmd_loop(cfg: Config, args) -> int:
    pool = _load_dataset(args.pool)
    truth = _truth_map(pool)
    unlabeled = {sid for sid in pool.ids() if sid not in truth}
    if unlabeled:
        raise SelectError(f"loop pool must be fully labeled; {len(unlabeled)} samples lack labels")

    loop_cfg = cfg.loop_config(**({"iterations": args.iterations} if args.iterations is not None else {}))
    feat_cfg = cfg.featurizer_config()
    net_cfg = cfg.network_config(**({"seed": args.seed} if args.seed is not None else {}))
    train_cfg = cfg.train_config(**({"seed": args.seed} if args.seed is not None else {}))
    seed = args.seed if args.seed is not None else 0

    ids = sorted(pool.ids())
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(31,)))
    order = [ids[i] for i in rng.permutation(len(ids))]
    seed_size = min(loop_cfg.seed_size, max(1, len(order) // 4))
    val_size = min(max(len(order) // 5, 1), max(len(order) - seed_size - 1, 1))
    seed_ids = order[:seed_size]
    val_ids = order[seed_size : seed_size + val_size]
    reservoir_ids = order[seed_size + val_size :]
    if not reservoir_ids:
        raise SelectError("loop pool too small to hold a candidate reservoir")

    initial = pool.subset(seed_ids, name="seed")
    validation = pool.subset(val_ids, name="validation")
    # Candidates enter the loop unlabeled; the oracle reveals their labels.
    reservoir = Dataset(name="pool")
    for sid in reservoir_ids:
        s = pool.get(sid)
        reservoir.add(type(s)(id=s.id, text=s.text, domain=s.domain, metadata=dict(s.metadata)))

    def pools(i: int) -> Dataset:
        if len(reservoir) <= loop_cfg.pool_size:
            return reservoir
        r = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(32, i)))
        pick = r.choice(len(reservoir), size=loop_cfg.pool_size, replace=False)
        all_ids = reservoir.ids()
        return reservoir.subset([all_ids[j] for j in sorted(pick)], name=f"pool-{i}")

    oracle = DatasetOracle(truth, seed=seed)
    result = run_loop(
        initial,
        pools,
        cfg.strategy_mix(),
        loop_cfg,
        train_cfg,
        net_cfg,
        feat_cfg,
        oracle,
        validation,
        seed=seed,
    )

    outdir = Path(args.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, model in enumerate(result.models):
        p = outdir / f"checkpoint-{i:02d}.json"
        save_model(model, p)
        paths.append(str(p))
    _write_json({"rows": result.metrics_rows()}, outdir / "metrics.json")
    print(f"wrote {len(paths)} checkpoints and metrics.json -> {outdir}")
    return 0


def cmd_audit(cfg: Config, args) -> int:
    model = load_checkpoint(args.checkpoint)
    data = _load_dataset(args.data)
    auditor_ds = _load_dataset(args.auditor)
    scores = score_pool(model, data)
    qc = cfg.section("quality")
    picks = quality.audit_select(data, scores, args.seed, per_side=int(qc.get("audit_per_side", 10)))
    audited = sorted({sid for ids in picks.values() for sid in ids})
    annotator = {sid: consolidate(data.get(sid)) for sid in audited if data.get(sid).labels}
    auditor = {
        sid: consolidate(auditor_ds.get(sid))
        for sid in annotator
        if sid in auditor_ds and auditor_ds.get(sid).labels
    }
    missing = sorted(set(annotator) - set(auditor))
    if missing:
        raise quality.QualityError(f"auditor file lacks labels for audited ids: {missing[:5]}")
    report = quality.audit_f1(annotator, auditor, flag_below=float(qc.get("flag_below", 0.6)))
    report.write(args.output)
    flagged = [c for c, a in report.categories.items() if a.flagged]
    print(f"audited {len(annotator)} samples; flagged categories: {flagged or 'none'} -> {args.output}")
    return 0


def cmd_crossval(cfg: Config, args) -> int:
    data = _load_dataset(args.data)
    flagged = quality.crossval_flag(
        data,
        cfg.train_config(),
        cfg.network_config(),
        cfg.featurizer_config(),
        args.seed,
    )
    _write_json({"flagged": sorted(flagged)}, args.output)
    print(f"flagged {len(flagged)} of {len(data)} samples -> {args.output}")
    return 0


def cmd_probe(cfg: Config, args) -> int:
    model = load_checkpoint(args.checkpoint)
    data = _load_dataset(args.data)
    pc = cfg.section("probe")
    report = keytoken_report(
        model,
        data,
        args.lexicon,
        keep_threshold=args.threshold if args.threshold is not None else float(pc.get("keep_threshold", 0.8)),
    )
    _write_json(report.as_obj(), args.output)
    print(
        f"reduced {len(report.results)} (sample, category) pairs; "
        f"lexicon match {report.lexicon_match_fraction:.3f} -> {args.output}"
    )
    return 0


def cmd_eval(cfg: Config, args) -> int:
    model = load_checkpoint(args.checkpoint)
    data = _load_dataset(args.data)
    cases = list(_load_dataset(args.redteam)) if args.redteam else None
    table = evalx.evaluate(model, data, redteam_cases=cases)
    evalx.write_table(table, args.output)
    print(table.as_text())
    print(f"wrote evaluation table -> {args.output}")
    return 0


def cmd_serve(cfg: Config, args) -> int:
    sec = dict(cfg.section("service"))
    for key in ("host", "checkpoint", "store", "redteam", "pool", "token"):
        value = getattr(args, key, None)
        if value is not None:
            sec[key] = value
    if args.port is not None:
        sec["port"] = args.port
    service_cfg = ServiceConfig.from_section(sec)
    serve(service_cfg)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="modpipe", description="Undesired-content detection pipeline")
    parser.add_argument("--config", help="path to the JSON config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="write a default config file")
    p.add_argument("--path", default="modpipe.json")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("import", help="validate and re-export a JSONL corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--mask-pii", action="store_true")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("synth", help="expand templates into synthetic samples")
    p.add_argument("--templates", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--count", type=int, default=100, help="draws per template (capped at its combinations)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model and save a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--mode", choices=("supervised", "wdat"))
    p.add_argument("--target", help="unlabeled target-domain pool (wdat mode)")
    p.add_argument("--validation")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("select", help="select a labeling batch from a pool")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reweight-key")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("loop", help="run the iterative train/select/label loop")
    p.add_argument("--pool", required=True, help="fully labeled corpus acting as pool plus oracle")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--iterations", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("audit", help="compare annotator labels against an auditor file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--auditor", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("crossval", help="flag suspicious labels by cross-training halves")
    p.add_argument("--data", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("probe", help="reduce inputs to key tokens and match a lexicon")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labeled dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--redteam", help="stored red-team cases for the regression section")
    p.add_argument("--output", default="eval.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP scoring and labeling service")
    p.add_argument("--host")
    p.add_argument("--port", type=int)
    p.add_argument("--checkpoint")
    p.add_argument("--store")
    p.add_argument("--redteam")
    p.add_argument("--pool")
    p.add_argument("--token")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        return args.func(cfg, args)
    except KNOWN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
