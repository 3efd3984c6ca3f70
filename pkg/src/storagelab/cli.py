"""Command-line pipelines tying trace generation, simulation, and metrics.

Subcommands write their artifacts plus a ``manifest.json`` echoing the
resolved configuration and input content hashes; reruns with identical
manifests produce byte-identical outputs (no timestamps, sorted keys,
deterministic float formatting).

Exit codes: 0 success, 1 usage, 2 input/parse failure, 3 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import random
import sys
import traceback
from fractions import Fraction
from pathlib import Path

from storagelab import __version__
from storagelab.filterlist import EMPTY_RULES, parse_rules
from storagelab.metrics import (
    FrameStat,
    align_curve_inputs,
    build_optimize_sample,
    cross_site_scores,
    cross_time_scores,
    curve_rows,
    extract_picfs,
    frame_similarity,
    grade_stats,
    mean_defined,
    optimize_node_types,
    select_candidates,
    similarity_curve,
)
from storagelab.policy import PolicyKind, host_of
from storagelab.psl import PslParseError, builtin_rules, etld_plus_one, parse_psl
from storagelab.simulator import (
    ReplayError,
    SimOutput,
    read_flows_csv,
    read_frames_jsonl,
    replay,
    write_flows_csv,
    write_frames_jsonl,
)
from storagelab.synthetic import SyntheticSpec, TrackerSpec, default_tracker_sites, generate_synthetic_trace
from storagelab.trace import NodeType, OPTIMAL_NODE_TYPES, TraceFormatError, load_trace, write_trace

POLICY_NAMES = {p.value: p for p in PolicyKind}

DEFAULT_PICF_THRESHOLD = 8


class InputError(Exception):
    """Bad or mismatched input files; maps to exit code 2."""


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _out_dir(path_str: str) -> Path:
    out = Path(path_str)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, config: dict, inputs: dict, outputs: list[str],
                    extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "version": __version__,
    }
    if extra:
        manifest.update(extra)
    (out / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _input_entry(path_str: str) -> dict:
    path = Path(path_str)
    if not path.is_file():
        raise InputError(f"input file not found: {path}")
    return {"path": path_str, "sha256": _sha256(path)}


def _load_suffix_rules(psl_path: str | None):
    if psl_path is None:
        return builtin_rules(), {"builtin": True}
    entry = _input_entry(psl_path)
    return parse_psl(Path(psl_path).read_text(encoding="utf-8")), entry


def _load_ad_rules(filters_path: str | None):
    if filters_path is None:
        return EMPTY_RULES, None
    entry = _input_entry(filters_path)
    return parse_rules(Path(filters_path).read_text(encoding="utf-8")), entry


def _fnum(value) -> str:
    """Deterministic decimal rendering for CSV/report floats."""
    return repr(float(value))


def _frac(value: Fraction | None) -> str | None:
    return None if value is None else f"{value.numerator}/{value.denominator}"


# ---------------------------------------------------------------------------
# gen-trace


def cmd_gen_trace(args) -> int:
    if args.sites < 1 or args.profiles < 1:
        raise InputError("--sites and --profiles must be >= 1")
    trackers = tuple(
        TrackerSpec(site, args.tracker_prob) for site in default_tracker_sites(args.trackers)
    )
    spec = SyntheticSpec(
        n_sites=args.sites,
        trackers=trackers,
        pages_per_site=args.pages,
        crawl_iters=args.iters,
        profiles=args.profiles,
        seed=args.seed,
        policy=POLICY_NAMES[args.policy],
    )
    trace = generate_synthetic_trace(spec)
    out = _out_dir(args.out)
    write_trace(trace, out / "trace.jsonl")
    _write_manifest(
        out, "gen-trace",
        config={"sites": args.sites, "trackers": args.trackers,
                "tracker_prob": args.tracker_prob, "pages": args.pages,
                "iters": args.iters, "profiles": args.profiles,
                "seed": args.seed, "policy": args.policy, "out": args.out},
        inputs={},
        outputs=["trace.jsonl"],
        extra={"trace_scenario": trace.meta.scenario, "trace_policy": trace.meta.policy},
    )
    return 0


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    rules, psl_entry = _load_suffix_rules(args.psl)
    ads, filters_entry = _load_ad_rules(args.filters)
    trace_entry = _input_entry(args.trace)
    trace = load_trace(args.trace)
    output = replay(trace, POLICY_NAMES[args.policy], rules, ads,
                    origin_keyed=args.origin_keyed)
    out = _out_dir(args.out)
    write_flows_csv(output.flows, out / "flows.csv")
    write_frames_jsonl(output.frames, out / "frames.jsonl")
    inputs = {"trace": trace_entry, "psl": psl_entry}
    if filters_entry:
        inputs["filters"] = filters_entry
    _write_manifest(
        out, "simulate",
        config={"policy": args.policy, "trace": args.trace, "psl": args.psl,
                "filters": args.filters, "origin_keyed": args.origin_keyed,
                "out": args.out},
        inputs=inputs,
        outputs=["flows.csv", "frames.jsonl"],
        extra={
            "trace_scenario": trace.meta.scenario if trace.meta else None,
            "trace_policy": trace.meta.policy if trace.meta else None,
            "trace_sha256": trace_entry["sha256"],
        },
    )
    return 0


def _load_sim_dir(path_str: str) -> tuple[SimOutput, dict]:
    sim_dir = Path(path_str)
    manifest_path = sim_dir / "manifest.json"
    if not manifest_path.is_file():
        raise InputError(f"not a simulation output directory (no manifest): {sim_dir}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("command") != "simulate":
        raise InputError(f"{sim_dir}: manifest is not from a simulate run")
    output = SimOutput(
        flows=read_flows_csv(sim_dir / "flows.csv"),
        frames=read_frames_jsonl(sim_dir / "frames.jsonl"),
        scenario=manifest.get("trace_scenario"),
        policy=manifest.get("config", {}).get("policy"),
    )
    return output, manifest


def _require_same_trace(a: dict, b: dict, what: str) -> None:
    scenario_a, scenario_b = a.get("trace_scenario"), b.get("trace_scenario")
    if scenario_a is not None and scenario_b is not None:
        if scenario_a != scenario_b:
            raise InputError(f"{what}: outputs come from different scenarios "
                             f"({scenario_a} vs {scenario_b})")
        return
    if a.get("trace_sha256") != b.get("trace_sha256"):
        raise InputError(f"{what}: outputs come from different traces")


# ---------------------------------------------------------------------------
# metrics subcommands


def _read_all_flows(paths: list[str]):
    entries = {}
    flows = []
    for i, path in enumerate(paths):
        entries[f"flows_{i}"] = _input_entry(path)
        flows.extend(read_flows_csv(path))
    return flows, entries


def cmd_metrics_picf(args) -> int:
    flows, entries = _read_all_flows(args.flows)
    picfs = extract_picfs(flows, args.threshold)
    out = _out_dir(args.out)
    with open(out / "picfs.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["third_party_site", "cookie_name", "cookie_value", "owning_profile"])
        for p in sorted(picfs, key=lambda p: (p.third_party_site, p.cookie_name,
                                              p.cookie_value, p.owning_profile)):
            writer.writerow([p.third_party_site, p.cookie_name, p.cookie_value, p.owning_profile])
    _write_manifest(out, "metrics picf",
                    config={"flows": args.flows, "threshold": args.threshold, "out": args.out},
                    inputs=entries, outputs=["picfs.csv"])
    return 0


def _write_curve_csv(path: Path, key_name: str, scores: dict[str, int]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", key_name, "score", "cumulative"])
        for rank, key, score, total in curve_rows(scores):
            writer.writerow([rank, key, score, total])


def cmd_metrics_cross_site(args) -> int:
    flows, entries = _read_all_flows(args.flows)
    picfs = extract_picfs(flows, args.threshold)
    scores = cross_site_scores(picfs, flows)
    out = _out_dir(args.out)
    _write_curve_csv(out / "cross_site_curve.csv", "third_party_site", scores)
    _write_manifest(out, "metrics cross-site",
                    config={"flows": args.flows, "threshold": args.threshold, "out": args.out},
                    inputs=entries, outputs=["cross_site_curve.csv"],
                    extra={"total": sum(scores.values())})
    return 0


def cmd_metrics_cross_time(args) -> int:
    flows, entries = _read_all_flows(args.flows)
    picfs = extract_picfs(flows, args.threshold)
    scores = cross_time_scores(picfs, flows,
                               across_iterations_only=args.across_iterations_only)
    out = _out_dir(args.out)
    _write_curve_csv(out / "cross_time_curve.csv", "top_site", scores)
    _write_manifest(out, "metrics cross-time",
                    config={"flows": args.flows, "threshold": args.threshold,
                            "across_iterations_only": args.across_iterations_only,
                            "out": args.out},
                    inputs=entries, outputs=["cross_time_curve.csv"],
                    extra={"total": sum(scores.values())})
    return 0


def _parse_node_filter(value: str) -> frozenset[NodeType]:
    if value == "all":
        return frozenset(NodeType)
    if value == "optimal":
        return OPTIMAL_NODE_TYPES
    names = [name.strip() for name in value.split(",") if name.strip()]
    try:
        return frozenset(NodeType(name) for name in names)
    except ValueError as exc:
        raise InputError(f"unknown node type in --node-filter: {exc}") from None


def cmd_metrics_similarity(args) -> int:
    permissive, perm_manifest = _load_sim_dir(args.permissive)
    compared, comp_manifest = _load_sim_dir(args.compared)
    _require_same_trace(perm_manifest, comp_manifest, "similarity")
    node_filter = _parse_node_filter(args.node_filter)

    baseline = frame_similarity(permissive, permissive, node_filter,
                                args.anchor_profile, args.baseline_profile)
    scores = frame_similarity(permissive, compared, node_filter,
                              args.anchor_profile, args.compared_profile)
    aligned, baseline_defined, dropped = align_curve_inputs(baseline, scores)
    curve = similarity_curve(aligned, baseline_defined)

    out = _out_dir(args.out)
    with open(out / "similarity_scores.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["page_url", "frame_url", "crawl_iter", "score", "score_exact"])
        for s in scores:
            writer.writerow([
                s.page_url, s.frame_url, s.crawl_iter,
                "" if s.score is None else _fnum(s.score),
                "undefined" if s.score is None else _frac(s.score),
            ])
    with open(out / "similarity_curve.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "cumulative", "cumulative_exact"])
        for rank, value in curve:
            writer.writerow([rank, _fnum(value), _frac(value)])
    mean = mean_defined([s.score for s in scores])
    report = {
        "instances": len(aligned),
        "baseline_defined": baseline_defined,
        "dropped_undefined_in_both": dropped,
        "undefined_scored_zero": sum(1 for s in aligned if s is None),
        "mean_defined": _frac(mean),
        "mean_defined_float": None if mean is None else float(mean),
        "final_point": float(curve[-1][1]) if curve else None,
        "node_filter": sorted(t.value for t in node_filter),
    }
    (out / "similarity_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _write_manifest(out, "metrics similarity",
                    config={"permissive": args.permissive, "compared": args.compared,
                            "anchor_profile": args.anchor_profile,
                            "baseline_profile": args.baseline_profile,
                            "compared_profile": args.compared_profile,
                            "node_filter": args.node_filter, "out": args.out},
                    inputs={"permissive_manifest": {"path": args.permissive},
                            "compared_manifest": {"path": args.compared}},
                    outputs=["similarity_scores.csv", "similarity_curve.csv",
                             "similarity_report.json"])
    return 0


def cmd_metrics_optimize(args) -> int:
    permissive, perm_manifest = _load_sim_dir(args.permissive)
    contrast, contrast_manifest = _load_sim_dir(args.contrast)
    _require_same_trace(perm_manifest, contrast_manifest, "optimize")
    profiles = [p.strip() for p in args.baseline_profiles.split(",")]
    if len(profiles) != 2:
        raise InputError("--baseline-profiles must name two profiles, comma-separated")
    sample = build_optimize_sample(permissive, contrast, (profiles[0], profiles[1]),
                                   args.contrast_profile)
    if not sample:
        raise InputError("no comparable third-party frame instances between outputs")
    if args.sample_size and len(sample) > args.sample_size:
        rng = random.Random(args.seed)
        sample = rng.sample(sample, args.sample_size)
    result = optimize_node_types(sample)
    out = _out_dir(args.out)
    report = {
        "best_subset": sorted(t.value for t in result.best_subset),
        "separation": _frac(result.separation),
        "separation_float": float(result.separation),
        "baseline_mean": _frac(result.baseline_mean),
        "contrast_mean": _frac(result.contrast_mean),
        "subsets_evaluated": result.subsets_evaluated,
        "sample_size": len(sample),
    }
    (out / "optimize_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _write_manifest(out, "metrics optimize",
                    config={"permissive": args.permissive, "contrast": args.contrast,
                            "baseline_profiles": args.baseline_profiles,
                            "contrast_profile": args.contrast_profile,
                            "sample_size": args.sample_size, "seed": args.seed,
                            "out": args.out},
                    inputs={"permissive_manifest": {"path": args.permissive},
                            "contrast_manifest": {"path": args.contrast}},
                    outputs=["optimize_report.json"])
    return 0


def cmd_metrics_candidates(args) -> int:
    rules, psl_entry = _load_suffix_rules(args.psl)
    output, _ = _load_sim_dir(args.sim)
    pages_by_frame: dict[str, set[str]] = {}
    for (page_url, frame_url, _profile, _iter), record in output.frames.items():
        if record.party.value != "third" or record.is_ad:
            continue
        pages_by_frame.setdefault(frame_url, set()).add(page_url)
    cookies_by_site: dict[str, set[tuple[str, str]]] = {}
    for flow in output.flows:
        cookies_by_site.setdefault(flow.third_party_site, set()).add(
            (flow.cookie_name, flow.cookie_value))
    stats = []
    for frame_url in sorted(pages_by_frame):
        host = host_of(frame_url)
        site = etld_plus_one(host, rules) or host
        stats.append(FrameStat(
            frame_url=frame_url,
            n_embedding_pages=len(pages_by_frame[frame_url]),
            n_cookies=len(cookies_by_site.get(site, ())),
        ))
    selection = select_candidates(stats, args.top, rules)
    out = _out_dir(args.out)
    with open(out / "candidates.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rank", "frame_url", "site", "n_embedding_pages",
                         "n_cookies", "score"])
        for rank, c in enumerate(selection.candidates, start=1):
            writer.writerow([rank, c.frame_url, c.site, c.n_embedding_pages,
                             c.n_cookies, _fnum(c.score)])
    if selection.short:
        print(f"note: only {len(selection.candidates)} distinct-site candidates "
              f"available (requested {args.top})", file=sys.stderr)
    _write_manifest(out, "metrics candidates",
                    config={"sim": args.sim, "psl": args.psl, "top": args.top,
                            "out": args.out},
                    inputs={"psl": psl_entry, "sim_manifest": {"path": args.sim}},
                    outputs=["candidates.csv"],
                    extra={"short": selection.short})
    return 0


def _read_grades_csv(path_str: str) -> dict[tuple[str, str], tuple[int, int]]:
    entry_path = Path(path_str)
    if not entry_path.is_file():
        raise InputError(f"grades file not found: {entry_path}")
    grades: dict[tuple[str, str], tuple[int, int]] = {}
    with open(entry_path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"url", "profile", "grader_a", "grader_b"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InputError(f"{entry_path}: grades CSV needs columns {sorted(required)}")
        for row in reader:
            cell = (row["url"], row["profile"])
            if cell in grades:
                raise InputError(f"{entry_path}: duplicate cell {cell!r}")
            try:
                grades[cell] = (int(row["grader_a"]), int(row["grader_b"]))
            except ValueError:
                raise InputError(f"{entry_path}: non-integer grade in {cell!r}") from None
    return grades


def cmd_metrics_kappa(args) -> int:
    grades = _read_grades_csv(args.grades)
    try:
        stats = grade_stats(grades)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = _out_dir(args.out)
    report = {
        "agreement_pct": float(stats.agreement * 100),
        "agreement_exact": _frac(stats.agreement),
        "cohens_kappa": float(stats.kappa),
        "kappa_exact": _frac(stats.kappa),
        "breakage": {
            profile: {"broken": row.broken, "n": row.n, "pct": float(row.pct * 100)}
            for profile, row in sorted(stats.breakage.items())
        },
    }
    (out / "grading_report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    _write_manifest(out, "metrics kappa",
                    config={"grades": args.grades, "out": args.out},
                    inputs={"grades": _input_entry(args.grades)},
                    outputs=["grading_report.json"])
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="storagelab",
                     description="Replay crawl traces under third-party storage "
                                 "policies and compare privacy/compatibility metrics.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("gen-trace", help="generate a deterministic synthetic trace")
    gen.add_argument("--sites", type=int, required=True)
    gen.add_argument("--trackers", type=int, default=1, help="number of tracker sites")
    gen.add_argument("--tracker-prob", type=float, default=1.0,
                     help="per-page embedding probability (1.0 = every page)")
    gen.add_argument("--pages", type=int, default=1, help="pages per site")
    gen.add_argument("--iters", type=int, default=1, help="crawl iterations")
    gen.add_argument("--profiles", type=int, default=1)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--policy", choices=sorted(POLICY_NAMES), default="permissive",
                     help="policy the adaptive content is modeled against")
    gen.add_argument("--out", required=True, help="output directory")
    gen.set_defaults(func=cmd_gen_trace)

    sim = sub.add_parser("simulate", help="replay a trace under a policy")
    sim.add_argument("--policy", choices=sorted(POLICY_NAMES), required=True)
    sim.add_argument("--trace", required=True)
    sim.add_argument("--psl", default=None, help="public suffix list file (default: builtin)")
    sim.add_argument("--filters", default=None, help="ad filter list file")
    sim.add_argument("--origin-keyed", action="store_true",
                     help="key third-party partitions by origin instead of site")
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    metrics = sub.add_parser("metrics", help="compute metrics over simulation outputs")
    msub = metrics.add_subparsers(dest="metric", required=True, parser_class=_Parser)

    picf = msub.add_parser("picf", help="extract potentially identifying cookie flows")
    picf.add_argument("--flows", nargs="+", required=True)
    picf.add_argument("--threshold", type=int, default=DEFAULT_PICF_THRESHOLD)
    picf.add_argument("--out", required=True)
    picf.set_defaults(func=cmd_metrics_picf)

    xsite = msub.add_parser("cross-site", help="cross-site trackability curve")
    xsite.add_argument("--flows", nargs="+", required=True)
    xsite.add_argument("--threshold", type=int, default=DEFAULT_PICF_THRESHOLD)
    xsite.add_argument("--out", required=True)
    xsite.set_defaults(func=cmd_metrics_cross_site)

    xtime = msub.add_parser("cross-time", help="cross-time trackability curve")
    xtime.add_argument("--flows", nargs="+", required=True)
    xtime.add_argument("--threshold", type=int, default=DEFAULT_PICF_THRESHOLD)
    xtime.add_argument("--across-iterations-only", action="store_true",
                       help="count repeats only across crawl iterations")
    xtime.add_argument("--out", required=True)
    xtime.set_defaults(func=cmd_metrics_cross_time)

    simil = msub.add_parser("similarity", help="behavior-edge similarity vs permissive")
    simil.add_argument("--permissive", required=True, help="permissive simulate output dir")
    simil.add_argument("--compared", required=True, help="compared simulate output dir")
    simil.add_argument("--anchor-profile", default="prof0")
    simil.add_argument("--baseline-profile", default="prof1")
    simil.add_argument("--compared-profile", default="prof0")
    simil.add_argument("--node-filter", default="all",
                       help="'all', 'optimal', or comma-separated node types")
    simil.add_argument("--out", required=True)
    simil.set_defaults(func=cmd_metrics_similarity)

    opt = msub.add_parser("optimize", help="brute-force the node-type power set")
    opt.add_argument("--permissive", required=True)
    opt.add_argument("--contrast", required=True)
    opt.add_argument("--baseline-profiles", default="prof0,prof1")
    opt.add_argument("--contrast-profile", default="prof0")
    opt.add_argument("--sample-size", type=int, default=100)
    opt.add_argument("--seed", type=int, default=0)
    opt.add_argument("--out", required=True)
    opt.set_defaults(func=cmd_metrics_optimize)

    cand = msub.add_parser("candidates", help="select frames for manual grading")
    cand.add_argument("--sim", required=True, help="simulate output dir")
    cand.add_argument("--psl", default=None)
    cand.add_argument("--top", type=int, default=10)
    cand.add_argument("--out", required=True)
    cand.set_defaults(func=cmd_metrics_candidates)

    kappa = msub.add_parser("kappa", help="grading agreement statistics")
    kappa.add_argument("--grades", required=True, help="CSV: url,profile,grader_a,grader_b")
    kappa.add_argument("--out", required=True)
    kappa.set_defaults(func=cmd_metrics_kappa)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    try:
        return args.func(args)
    except (InputError, TraceFormatError, PslParseError, ReplayError,
            OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"storagelab: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
