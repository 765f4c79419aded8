"""Command-line surface for the strategic brain.

Subcommands: ingest, train, evaluate, assess, infer, gate, advise,
simulate.  Every command prints human-readable text by default and the
structured interchange format with --json; gate exits 0/2/3 for
GO/INHIBIT/CANCEL.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import catalog_ingest as ci
from . import monitor
from .cie import load_kb
from .ere import cluster as ere_cluster
from .ere import forest as ere_forest
from .ere import model as ere_model
from .gvk import SafetyConfig
from .scene_model import load_scenario, load_scene, parse_event


def _engines(args) -> monitor.EngineSet:
    model = ere_model.load_model(args.model) if getattr(args, "model", None) else None
    kb = load_kb(args.kb) if getattr(args, "kb", None) else None
    safety = SafetyConfig.load(args.config) if getattr(args, "config", None) else SafetyConfig.default()
    return monitor.EngineSet(ere=model, kb=kb, safety=safety)


def _emit(args, payload: dict, text: str) -> None:
    if args.json:
        print(json.dumps(payload, sort_keys=True, separators=(",", ":")))
    else:
        print(text)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_ingest(args) -> int:
    catalog = ci.load_catalog(args.catalog)
    report = ci.IngestReport()
    levels = {}
    for item in args.level or ():
        name, _, level = item.partition("=")
        levels[name] = level.upper()
    raw_cases = ci.parse_year(args.files, args.year, catalog, report=report, levels=levels)
    cases = [ci.consolidate(raw, catalog, report=report) for raw in raw_cases]
    ci.write_consolidated(cases, args.out)
    if args.errors:
        report.write(args.errors)
    _emit(
        args,
        {
            "cases": len(cases),
            "issues": report.count(),
            "out": str(args.out),
            "errors": str(args.errors) if args.errors else None,
        },
        f"consolidated {len(cases)} cases from year {args.year} -> {args.out} "
        f"({report.count()} quarantined/warned rows{', report ' + str(args.errors) if args.errors else ''})",
    )
    return 0


def cmd_train(args) -> int:
    catalog = ci.load_catalog(args.catalog)
    cases = ci.read_consolidated(args.data)
    holdout: list = []
    if args.holdout_fraction:
        cases, holdout = ci.split_dataset(cases, args.holdout_fraction, args.seed)
        if args.holdout_out:
            ci.write_consolidated(holdout, args.holdout_out)
    config = ere_model.EreTrainConfig(
        seed=args.seed,
        reduce_k=args.reduce_k,
        cluster=ere_cluster.ClusterParams(
            method=args.cluster,
            k=args.kmeans_k,
            min_cluster_size=args.min_cluster_size,
        ),
        forest=ere_forest.ForestParams(
            n_trees=args.trees,
            max_depth=args.max_depth,
            min_leaf=args.min_leaf,
            max_features=args.max_features if args.max_features != "all" else None,
        ),
        threshold_percentile=args.threshold_percentile,
    )
    model = ere_model.train_ere(cases, catalog, config)
    ere_model.save_model(model, args.out)
    _emit(
        args,
        {"train_size": len(cases), "holdout_size": len(holdout), "out": str(args.out)},
        f"trained on {len(cases)} cases (holdout {len(holdout)}) -> {args.out}",
    )
    return 0


def cmd_evaluate(args) -> int:
    model = ere_model.load_model(args.model)
    holdout = ci.read_consolidated(args.data)
    targets = ["binary", "rating"] if args.target == "both" else [args.target]
    payload = {}
    blocks = []
    for target in targets:
        report = ere_model.evaluate(model, holdout, target=target)
        payload[target] = {
            "accuracy": report.accuracy,
            "entries": [
                {
                    "label": e.label,
                    "precision": e.precision,
                    "recall": e.recall,
                    "f1": e.f1,
                    "support": e.support,
                }
                for e in report.entries
            ],
        }
        title = "severe damage detection" if target == "binary" else "severity rating"
        blocks.append(f"[{title}]\n{report.format()}")
    _emit(args, payload, "\n\n".join(blocks))
    return 0


def cmd_assess(args) -> int:
    engines = _engines(args)
    scene = load_scene(args.scene)
    assessment = monitor.assess(engines, scene)
    payload = {
        "overall_risk": assessment.overall_risk.name,
        "fail_soft": assessment.fail_soft,
        "findings": [f.to_dict() for f in assessment.findings],
    }
    lines = [f"overall risk: {assessment.overall_risk.name}", f"fail-soft: {assessment.fail_soft}"]
    lines += [f"  [{f.engine}/{f.kind}] {f.detail}" for f in assessment.findings] or ["  no findings"]
    _emit(args, payload, "\n".join(lines))
    return 0


def cmd_infer(args) -> int:
    kb = load_kb(args.kb)
    if args.hops <= 1:
        results = kb.infer(parse_event(args.event), args.relation)
        payload = {"tails": [r.event.normalized for r in results]}
        text = "\n".join(r.event.raw_text or r.event.normalized for r in results) or "(no knowledge)"
    else:
        chains = kb.chain(parse_event(args.event), args.relation, args.hops)
        payload = {
            "chains": [
                {"hops": c.hops, "events": [e.normalized for e in c.events]} for c in chains
            ]
        }
        text = "\n".join(
            f"[{c.hops} hop] " + " -> ".join(e.normalized for e in c.events) for c in chains
        ) or "(no knowledge)"
    _emit(args, payload, text)
    return 0


def cmd_gate(args) -> int:
    engines = _engines(args)
    current = load_scene(args.current)
    proposed = load_scene(args.proposed)
    decision = monitor.gate(engines, current, proposed)
    lines = [f"verdict: {decision.verdict.name} (risk {decision.risk.name}, fail-soft {decision.fail_soft})"]
    lines += [f"  [{f.engine}/{f.kind}] {f.detail}" for f in decision.reasons]
    _emit(args, decision.to_dict(), "\n".join(lines))
    return int(decision.verdict)


def cmd_advise(args) -> int:
    engines = _engines(args)
    scene = load_scene(args.scene)
    profile = {}
    if args.profile:
        with open(args.profile, "r", encoding="utf-8") as fh:
            profile = json.load(fh)
    advisory = monitor.advise(engines, scene, profile, engines.safety)
    lines = [
        f"safe speed: {advisory.safe_speed if advisory.safe_speed is not None else 'n/a'} m/s",
        f"lane: {advisory.lane_recommendation}",
    ]
    lines += [f"required gap to {a}: {g} m" for a, g in advisory.distancing]
    lines += [f"note: {n}" for n in advisory.surrounding_pattern_notes]
    lines += [f"caution: {c}" for c in advisory.cautions]
    _emit(args, advisory.to_dict(), "\n".join(lines))
    return 0


def cmd_simulate(args) -> int:
    engines = _engines(args)
    scenario = load_scenario(args.scenario)
    report = monitor.run_scenario(engines, scenario)
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    lines = [
        f"steps: {len(report.decisions)}  intervention rate: {report.intervention_rate:.2f}  "
        f"fail-soft steps: {report.fail_soft_count}"
    ]
    for i, d in enumerate(report.decisions):
        lines.append(f"  step {i}: {d.verdict.name} ({d.risk.name})")
        lines += [f"    [{f.engine}/{f.kind}] {f.detail}" for f in d.reasons]
    _emit(args, report.to_dict(), "\n".join(lines))
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adsb", description="Strategic scene-safety engine")
    parser.add_argument("--json", action="store_true", help="emit structured JSON instead of text")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="normalize yearly release files into a consolidated dataset")
    p.add_argument("files", nargs="+", type=Path)
    p.add_argument("--year", type=int, required=True)
    p.add_argument("--catalog", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--errors", type=Path, help="quarantine/warning report (JSONL)")
    p.add_argument("--level", action="append", help="override level detection: FILENAME=LEVEL")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train the experience model from a consolidated dataset")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--catalog", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reduce-k", type=int, default=32)
    p.add_argument("--cluster", choices=["kmeans", "hdbscan"], default="kmeans")
    p.add_argument("--kmeans-k", type=int, default=None)
    p.add_argument("--min-cluster-size", type=int, default=5)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-depth", type=int, default=16)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--max-features", default="sqrt", help='"sqrt", "all" or an integer')
    p.add_argument("--threshold-percentile", type=float, default=95.0)
    p.add_argument("--holdout-fraction", type=float, default=0.0)
    p.add_argument("--holdout-out", type=Path)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="holdout classification report")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--target", choices=["binary", "rating", "both"], default="both")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("assess", help="assess one scene with all loaded engines")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--model", type=Path)
    p.add_argument("--kb", type=Path)
    p.add_argument("--config", type=Path)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("infer", help="query the knowledge base")
    p.add_argument("--kb", type=Path, required=True)
    p.add_argument("--event", required=True)
    p.add_argument("--relation", required=True)
    p.add_argument("--hops", type=int, default=1)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("gate", help="gate a state transition (exit 0=GO, 2=INHIBIT, 3=CANCEL)")
    p.add_argument("--current", type=Path, required=True)
    p.add_argument("--proposed", type=Path, required=True)
    p.add_argument("--model", type=Path)
    p.add_argument("--kb", type=Path)
    p.add_argument("--config", type=Path)
    p.set_defaults(func=cmd_gate)

    p = sub.add_parser("advise", help="driver advisory for a scene and profile")
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--profile", type=Path)
    p.add_argument("--model", type=Path)
    p.add_argument("--kb", type=Path)
    p.add_argument("--config", type=Path)
    p.set_defaults(func=cmd_advise)

    p = sub.add_parser("simulate", help="replay a scripted scenario through the gate")
    p.add_argument("--scenario", type=Path, required=True)
    p.add_argument("--model", type=Path)
    p.add_argument("--kb", type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, help="write the report JSON here as well")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
