"""Command-line front end over the library.

Subcommands: generate, stats, ingest, train, eval, experiment, sweep.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .experiment import (
    METHODS,
    METHOD_OPTIONS,
    evaluate_scenes,
    generalization_gate,
    run_generalization_experiment,
    run_source_count_sweep,
    sweep_gate,
)
from .model import MultiDomainPredictor
from .pipeline import (
    DomainCorpus,
    RawTrack,
    build_corpus,
    format_stats_table,
    resample_and_normalize,
)
from .scenes import HyperParams
from .synth import DomainProfile, generate_synthetic_domain


def _load_profiles(path) -> list[DomainProfile]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = [data]
    return [DomainProfile.from_dict(d) for d in data]


def _cmd_generate(args) -> int:
    profiles = _load_profiles(args.profile)
    for profile in profiles:
        corpus = generate_synthetic_domain(profile, args.seed)
        out = Path(args.out) / profile.domain_id if len(profiles) > 1 else Path(args.out)
        corpus.save(out)
        print(f"{profile.domain_id}: {len(corpus.scenes)} scenes -> {out}")
    return 0


def _cmd_stats(args) -> int:
    corpus = DomainCorpus.load(args.in_dir)
    print(format_stats_table({corpus.domain_id: corpus.stats}))
    return 0


def _read_raw_tracks(path) -> list[RawTrack]:
    """Raw file: one JSON record per line {agent, t, x, y}."""
    samples: dict[str, list[tuple[float, float, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            samples.setdefault(str(rec["agent"]), []).append(
                (float(rec["t"]), float(rec["x"]), float(rec["y"]))
            )
    tracks = []
    for agent, rows in sorted(samples.items()):
        rows.sort(key=lambda r: r[0])
        arr = np.asarray(rows, dtype=float)
        tracks.append(RawTrack(agent_id=agent, times=arr[:, 0], points=arr[:, 1:]))
    return tracks


def _cmd_ingest(args) -> int:
    tracks = _read_raw_tracks(args.raw)
    scenes = resample_and_normalize(tracks, args.units, domain_id=args.domain)
    if not scenes:
        print("no complete 20-frame windows found", file=sys.stderr)
        return 1
    corpus = build_corpus(args.domain, scenes)
    corpus.save(args.out)
    print(f"{args.domain}: {len(corpus.scenes)} scenes -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .training import run_training

    hp = HyperParams.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
    corpora = [DomainCorpus.load(d) for d in args.sources.split(",")]
    options = METHOD_OPTIONS[args.method]
    result = run_training(corpora, hp, options)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.model.save(out / "checkpoint.npz")
    result.write_log(out / "metrics.jsonl")
    print(
        f"trained on {[c.domain_id for c in corpora]}; "
        f"best val ADE {result.best_val_ade:.4f} @ epoch {result.best_epoch}"
    )
    return 0


def _cmd_eval(args) -> int:
    model = MultiDomainPredictor.load(args.ckpt)
    corpus = DomainCorpus.load(args.target)
    a, f = evaluate_scenes(model, list(corpus.test_scenes), k_samples=args.k)
    report = {
        "domain_id": corpus.domain_id,
        "ade": a,
        "fde": f,
        "n_scenes": len(corpus.test_scenes),
        "k": args.k,
    }
    print(json.dumps(report, sort_keys=True))
    return 0


def _cmd_experiment(args) -> int:
    profiles = _load_profiles(args.profiles)
    hp = (
        HyperParams.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
        if args.config
        else HyperParams()
    )
    result = run_generalization_experiment(
        profiles,
        target_index=args.target_index,
        methods=tuple(args.methods),
        seeds=tuple(args.seeds),
        hp=hp,
    )
    print(result.to_text())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(result.to_jsonl(), encoding="utf-8")
    if args.gate:
        failures = generalization_gate(result)
        for msg in failures:
            print(f"GATE FAIL: {msg}", file=sys.stderr)
        return 1 if failures else 0
    return 0


def _cmd_sweep(args) -> int:
    profiles = _load_profiles(args.profiles)
    hp = (
        HyperParams.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
        if args.config
        else HyperParams()
    )
    result = run_source_count_sweep(
        profiles,
        target_index=args.target_index,
        max_sources=args.max_sources,
        seeds=tuple(args.seeds),
        hp=hp,
    )
    print(result.to_text())
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(result.to_jsonl(), encoding="utf-8")
    if args.gate:
        failures = sweep_gate(result)
        for msg in failures:
            print(f"GATE FAIL: {msg}", file=sys.stderr)
        return 1 if failures else 0
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajdg",
        description="Multi-source domain generalization lab for trajectory prediction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize a domain corpus from a profile")
    p.add_argument("--profile", required=True, help="JSON profile file (one or a list)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output corpus directory")
    p.set_defaults(fn=_cmd_generate)

    p = sub.add_parser("stats", help="print corpus motion statistics")
    p.add_argument("--in", dest="in_dir", required=True, help="corpus directory")
    p.set_defaults(fn=_cmd_stats)

    p = sub.add_parser("ingest", help="resample raw tracks into canonical scenes")
    p.add_argument("--raw", required=True, help="newline-delimited {agent,t,x,y} records")
    p.add_argument("--units", required=True, help="'m' or 'px:<meters-per-pixel>'")
    p.add_argument("--out", required=True)
    p.add_argument("--domain", default="ingest")
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("train", help="train on source corpora")
    p.add_argument("--sources", required=True, help="comma-separated corpus dirs")
    p.add_argument("--config", required=True, help="JSON file of hyperparameters")
    p.add_argument("--out", required=True, help="checkpoint directory")
    p.add_argument("--method", default="adaptraj", choices=METHODS)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a target corpus")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--target", required=True, help="target corpus directory")
    p.add_argument("--k", type=int, default=1, help="samples per scene (best-of-K)")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("experiment", help="leave-one-domain-out method comparison")
    p.add_argument("--profiles", required=True, help="JSON list of domain profiles")
    p.add_argument("--target-index", type=int, required=True)
    p.add_argument("--methods", nargs="+", default=["vanilla", "adaptraj"], choices=METHODS)
    p.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    p.add_argument("--config", default=None, help="optional hyperparameter JSON")
    p.add_argument("--out", default=None, help="write machine-readable report here")
    p.add_argument("--gate", action="store_true", help="nonzero exit on directional failures")
    p.set_defaults(fn=_cmd_experiment)

    p = sub.add_parser("sweep", help="source-count trend on a fixed target")
    p.add_argument("--profiles", required=True)
    p.add_argument("--target-index", type=int, required=True)
    p.add_argument("--max-sources", type=int, default=None)
    p.add_argument("--seeds", nargs="+", type=int, default=[0, 1, 2])
    p.add_argument("--config", default=None, help="optional hyperparameter JSON")
    p.add_argument("--out", default=None)
    p.add_argument("--gate", action="store_true")
    p.set_defaults(fn=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
