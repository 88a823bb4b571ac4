"""Command-line interface for the noise management pipeline.

Every stage is its own subcommand, so a run can execute end to end
(`run`) or stage by stage (`ingest`, `detect`, `ensemble`, `signature`,
`evaluate`) against the same artifact directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .dataset import Scale, load_ratings
from .ioutil import read_json
from .pipeline import (
    ConfigError,
    DataError,
    NoiseKind,
    PipelineConfig,
    StageError,
    cli_detect,
    cli_ensemble,
    cli_evaluate,
    cli_ingest,
    cli_signature,
    config_from_dict,
    inject_noise,
    load_config,
    run_baseline,
    run_framework,
    run_paths,
    write_mask,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_STAGE = 4

_STAGE_COMMANDS = ("ingest", "detect", "ensemble", "signature", "evaluate")


def _common_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--verbose", action="store_true", help="log stage progress")
    return p


def _config_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="FILE", help="JSON file of config key-value pairs")
    defaults = PipelineConfig()
    for f in dataclasses.fields(PipelineConfig):
        flag = "--" + f.name.replace("_", "-")
        p.add_argument(
            flag,
            dest=f.name,
            default=None,
            metavar="V",
            help=f"config key {f.name} (default: {getattr(defaults, f.name)!r})",
        )
    return p


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    values: dict[str, object] = {}
    if args.config:
        file_cfg = load_config(args.config)
        values.update(
            {
                k: v
                for k, v in dataclasses.asdict(file_cfg).items()
                if v != getattr(PipelineConfig(), k)
            }
        )
    for f in dataclasses.fields(PipelineConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return config_from_dict(values)


def build_parser() -> argparse.ArgumentParser:
    common = _common_parent()
    config = _config_parent()
    parser = argparse.ArgumentParser(
        prog="noisegate",
        description="Natural-noise management for rating data: detect, arbitrate, "
        "de-obfuscate, remove, and measure the before/after impact.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("ingest", parents=[common, config],
                   help="load, dedupe, filter, and write the three splits")
    sub.add_parser("detect", parents=[common, config],
                   help="run the four-detector board on the detect split")
    sub.add_parser("ensemble", parents=[common, config],
                   help="classify the Uncertain set with the configured learner")
    sub.add_parser("signature", parents=[common, config],
                   help="scan labeled ratings for opt-out obfuscation")
    sub.add_parser("evaluate", parents=[common, config],
                   help="retrain before/after and write the delta report")
    sub.add_parser("run", parents=[common, config],
                   help="all stages end to end")

    pb = sub.add_parser("baseline", parents=[common, config],
                        help="single-detector removal with the identical protocol")
    pb.add_argument("--detector", required=True, choices=["NF1", "NF2", "NF3", "NF4"])

    pi = sub.add_parser("inject-noise", parents=[common],
                        help="perturb a seeded share of ratings and write the mask")
    pi.add_argument("--ratings", required=True, help="input ratings CSV")
    pi.add_argument("--rate", type=float, required=True, help="share to perturb, in [0, 0.5]")
    pi.add_argument("--kind", required=True, choices=[k.value for k in NoiseKind])
    pi.add_argument("--seed", type=int, default=0)
    pi.add_argument("--out-ratings", required=True, help="output ratings CSV")
    pi.add_argument("--out-mask", required=True, help="output mask JSON")
    pi.add_argument("--scale-min", type=float, default=0.5)
    pi.add_argument("--scale-max", type=float, default=5.0)

    pr = sub.add_parser("report", parents=[common], help="summarize a report.json")
    pr.add_argument("path", help="path to report.json")
    return parser


def _print_json(data: dict) -> None:
    print(json.dumps(data, indent=2, sort_keys=True))


def _cmd_inject(args: argparse.Namespace) -> int:
    path = Path(args.ratings)
    if not path.exists():
        raise DataError(f"ratings file not found: {path}")
    try:
        table = load_ratings(path, Scale(args.scale_min, args.scale_max))
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    noisy, mask = inject_noise(table, args.rate, NoiseKind(args.kind), args.seed)
    noisy.to_csv(args.out_ratings)
    write_mask(mask, args.out_mask)
    _print_json(
        {
            "perturbed": len(mask.keys),
            "total": len(table),
            "kind": mask.kind.value,
            "ratings": str(args.out_ratings),
            "mask": str(args.out_mask),
        }
    )
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if not path.exists():
        raise DataError(f"report file not found: {path}")
    r = read_json(path)
    lines: list[str] = []
    lines.append(f"mode: {r.get('mode')}"
                 + (f" (detector {r['detector']})" if r.get("detector") else ""))
    c = r.get("counts", {})
    lines.append(
        f"ratings: {c.get('ratings_after_filter')} "
        f"(train {c.get('train')} / detect {c.get('detect')} / eval {c.get('eval')})"
    )
    b = r.get("board", {}).get("consensus", {})
    lines.append(
        f"consensus: noisy {b.get('noisy')}, clean {b.get('clean')}, "
        f"uncertain {b.get('uncertain')}"
    )
    pd = r.get("board", {}).get("per_detector_noisy", {})
    lines.append("per-detector noisy: " + ", ".join(f"{d} {pd[d]}" for d in sorted(pd)))
    e = r.get("ensemble", {})
    if e.get("variant"):
        lines.append(
            f"ensemble {e['variant']}: {e.get('classified_noisy')} noisy / "
            f"{e.get('classified_clean')} clean of {e.get('uncertain_total')} uncertain"
        )
    s = r.get("signature", {})
    lines.append(f"signature hits: {s.get('count')} user(s) {s.get('flagged_users')}")
    rm = r.get("removal", {})
    lines.append(
        f"removal: {rm.get('noisy_ratings_removed')} noisy + "
        f"{rm.get('signature_ratings_removed')} signature ratings; "
        f"corpus {rm.get('corpus_size')} -> {rm.get('cleaned_size')}"
    )
    ev = r.get("evaluation", {})
    lines.append(
        f"evaluated users: {ev.get('universe_users')} "
        f"(excluded: {len(ev.get('excluded_users', []))})"
    )
    for pair, sec in sorted(ev.get("pairs", {}).items()):
        lines.append(f"  {pair}: percent positive {sec.get('percent_positive'):.2f} "
                     f"quadrants {sec.get('quadrant_counts')}")
    lines.append(
        f"critical groups: before {ev.get('critical_group_pct_before'):.2f}% "
        f"-> after {ev.get('critical_group_pct_after'):.2f}%"
    )
    gt = r.get("ground_truth")
    if gt:
        lines.append(
            f"ground truth ({gt.get('kind')}, rate {gt.get('rate')}): "
            f"consensus precision {gt['consensus']['precision']:.3f} "
            f"recall {gt['consensus']['recall']:.3f}"
        )
    print("\n".join(lines))
    return EXIT_OK


def _cmd_stage_or_run(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    if args.command == "run":
        result = run_framework(cfg)
        ev = result.report_dict["evaluation"]
        _print_json(
            {
                "report": str(result.paths.report),
                "percent_positive": {
                    pair: sec["percent_positive"] for pair, sec in ev["pairs"].items()
                },
                "critical_group_pct_after": ev["critical_group_pct_after"],
                "flagged_users": result.report_dict["signature"]["flagged_users"],
            }
        )
        return EXIT_OK
    if args.command == "baseline":
        result = run_baseline(cfg, args.detector)
        ev = result.report_dict["evaluation"]
        _print_json(
            {
                "report": str(result.paths.report),
                "detector": args.detector,
                "percent_positive": {
                    pair: sec["percent_positive"] for pair, sec in ev["pairs"].items()
                },
            }
        )
        return EXIT_OK
    paths = run_paths(cfg)
    if args.command == "ingest":
        _print_json(cli_ingest(cfg, paths))
    elif args.command == "detect":
        _print_json(cli_detect(cfg, paths))
    elif args.command == "ensemble":
        _print_json(cli_ensemble(cfg, paths))
    elif args.command == "signature":
        hits = cli_signature(cfg, paths)
        _print_json({"flagged_users": sorted(h.user_id for h in hits), "count": len(hits)})
    elif args.command == "evaluate":
        report = cli_evaluate(cfg, paths)
        _print_json(
            {
                "report": str(paths.report),
                "percent_positive": {
                    pair: sec["percent_positive"]
                    for pair, sec in report["evaluation"]["pairs"].items()
                },
            }
        )
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "inject-noise":
            return _cmd_inject(args)
        if args.command == "report":
            return _cmd_report(args)
        return _cmd_stage_or_run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StageError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
