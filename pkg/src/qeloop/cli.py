"""Command-line entry point.

    qeloop ingest --kind requirement --project demo specs.txt
    qeloop run --project demo --provider mock
    qeloop negative-validate --project demo --level 0.8
    qeloop report --project demo [--cycle N] [--json]
    qeloop serve --project demo

Exit codes: 0 success, 1 validation error, 2 provider or IO error.
Diagnostics go to stderr; data goes to files or stdout.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from qeloop.artefacts import ArtefactKind, ParseError, parse_corpus
from qeloop.config import ConfigError, ProjectConfig, load_config
from qeloop.embedding import EmbeddingError
from qeloop.generation import DegradationSpec, GenerationError
from qeloop.orchestrator import OrchestrationError
from qeloop.reporting import ReportingError, SummaryRecord, read_json
from qeloop.runner import (
    Workspace,
    build_run_context,
    negative_validate_project,
    run_project,
)

_KINDS = {
    "requirement": ArtefactKind.REQUIREMENT,
    "testcase": ArtefactKind.TEST_CASE,
    "bdd": ArtefactKind.BDD_SCENARIO,
}

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PROVIDER_IO = 2


def _err(message: str) -> None:
    print(f"qeloop: {message}", file=sys.stderr)


def _load_project_config(args) -> ProjectConfig:
    config_path = Path(args.config) if args.config else Path("qeloop.yaml")
    config = load_config(config_path if config_path.exists() else None)
    if args.workspace:
        config = type(config)(**{**config.__dict__, "workspace": Path(args.workspace)})
    return config


def _fixed_clock(value: str | None):
    if not value:
        return None
    return lambda: value


def cmd_ingest(args) -> int:
    config = _load_project_config(args)
    kind = _KINDS[args.kind]
    path = Path(args.file)
    if not path.exists():
        _err(f"input file not found: {path}")
        return EXIT_PROVIDER_IO
    try:
        corpus = parse_corpus(path.read_text(encoding="utf-8"), kind, args.project)
    except ParseError as exc:
        _err(f"cannot parse {path}: {exc}")
        return EXIT_VALIDATION
    workspace = Workspace(config.workspace, args.project)
    stored = workspace.store_corpus(corpus)
    print(f"ingested {len(corpus)} {kind.value} artefact(s) into {stored}")
    return EXIT_OK


def cmd_run(args) -> int:
    config = _load_project_config(args)
    if args.max_cycles:
        config = type(config)(**{**config.__dict__, "max_cycles": args.max_cycles})
    workspace = Workspace(config.workspace, args.project)
    try:
        original = workspace.load_corpus(ArtefactKind.REQUIREMENT)
    except FileNotFoundError as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    except ParseError as exc:
        _err(f"stored corpus is invalid: {exc}")
        return EXIT_VALIDATION
    ctx = build_run_context(
        config, workspace, provider_override=args.provider, clock=_fixed_clock(args.clock)
    )
    working = None
    if args.degrade is not None:
        from qeloop.generation import degrade

        working = degrade(original, DegradationSpec(level=args.degrade))
    try:
        session = run_project(
            args.project, original, config, workspace, ctx=ctx, working=working
        )
    except (GenerationError, EmbeddingError, ReportingError, OSError) as exc:
        _err(f"run failed: {exc}")
        return EXIT_PROVIDER_IO
    except OrchestrationError as exc:
        _err(f"run failed: {exc}")
        return EXIT_VALIDATION
    last = session.state.history[-1]
    print(
        f"project {args.project}: {session.status.value} after cycle {last.cycle}, "
        f"mean cosine {last.mean_cosine:.4f}; reports in {workspace.project_dir}"
    )
    return EXIT_OK


def cmd_negative_validate(args) -> int:
    config = _load_project_config(args)
    workspace = Workspace(config.workspace, args.project)
    try:
        corpus = workspace.load_corpus(ArtefactKind.REQUIREMENT)
    except FileNotFoundError as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    ctx = build_run_context(
        config, workspace, provider_override=args.provider, clock=_fixed_clock(args.clock)
    )
    try:
        report = negative_validate_project(
            args.project, corpus, args.level, config, workspace, ctx=ctx
        )
    except (GenerationError, EmbeddingError, OSError) as exc:
        _err(f"negative validation failed: {exc}")
        return EXIT_PROVIDER_IO
    print(json.dumps(report.to_dict(), indent=2))
    return EXIT_OK


def _format_summary_table(rows: list[SummaryRecord]) -> str:
    headers = ["cycle", "mean_cosine", "high", "medium", "low", "no_match",
               "clarity", "complete", "testable", "consistent", "alignment", "ops"]
    lines = ["  ".join(f"{h:>10}" for h in headers)]
    for r in rows:
        ops = r.forward_ops + r.reverse_ops + r.judge_ops
        cells = [
            str(r.cycle), f"{r.mean_cosine:.4f}", str(r.count_high), str(r.count_medium),
            str(r.count_low), str(r.count_no_match), f"{r.mean_clarity:.2f}",
            f"{r.mean_completeness:.2f}", f"{r.mean_testability:.2f}",
            f"{r.mean_consistency:.2f}", f"{r.mean_semantic_alignment:.2f}", str(ops),
        ]
        lines.append("  ".join(f"{c:>10}" for c in cells))
    return "\n".join(lines)


def cmd_report(args) -> int:
    config = _load_project_config(args)
    workspace = Workspace(config.workspace, args.project)
    summary_path = workspace.project_dir / "overall_summary.json"
    if not summary_path.exists():
        _err(f"no cycles completed for project {args.project!r}")
        return EXIT_VALIDATION
    _, rows = read_json(summary_path)
    if args.cycle is not None:
        rows = [r for r in rows if r.cycle == args.cycle]
        if not rows:
            _err(f"no summary for cycle {args.cycle}")
            return EXIT_VALIDATION
    if args.json:
        payload = [{k: getattr(r, k) for k in (
            "cycle", "mean_cosine", "count_high", "count_medium", "count_low",
            "count_no_match", "mean_clarity", "mean_completeness", "mean_testability",
            "mean_consistency", "mean_semantic_alignment", "forward_ops", "reverse_ops",
            "judge_ops")} for r in rows]
        print(json.dumps(payload, indent=2))
    else:
        print(_format_summary_table(rows))
    return EXIT_OK


def cmd_serve(args) -> int:
    config = _load_project_config(args)
    workspace = Workspace(config.workspace, args.project)
    try:
        original = workspace.load_corpus(ArtefactKind.REQUIREMENT)
    except FileNotFoundError as exc:
        _err(str(exc))
        return EXIT_VALIDATION
    ctx = build_run_context(
        config, workspace, provider_override=args.provider, clock=_fixed_clock(args.clock)
    )
    from qeloop.orchestrator import Session
    from qeloop.service import SessionRegistry, serve
    from qeloop.session_store import load_session

    registry = SessionRegistry(workspace)
    state_path = workspace.project_dir / "state.json"
    if state_path.exists() and not args.fresh:
        session = load_session(state_path, ctx, audit=workspace.audit_writer(ctx.clock))
        print(f"resumed session {session.session_id} at cycle "
              f"{len(session.state.history)} ({session.status.value})", file=sys.stderr)
    else:
        working = None
        if args.degrade is not None:
            from qeloop.generation import degrade

            working = degrade(original, DegradationSpec(level=args.degrade))
        session = Session.start(
            args.project, args.project, original, ctx, working=working,
            audit=workspace.audit_writer(ctx.clock),
        )
    registry.add(session)
    print(
        f"serving project {args.project} on http://{config.service_host}:{config.service_port}",
        file=sys.stderr,
    )
    serve(registry, config.service_host, config.service_port,
          config.service_token_env, config.cors_origin)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qeloop",
        description="Closed-loop validation and refinement for QE artefacts.",
    )
    parser.add_argument("--config", help="path to the project config file (default qeloop.yaml)")
    parser.add_argument("--workspace", help="override the workspace directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse an artefact document into the workspace")
    p.add_argument("--kind", choices=sorted(_KINDS), required=True)
    p.add_argument("--project", required=True)
    p.add_argument("file")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("run", help="full refinement run with the auto-review policy")
    p.add_argument("--project", required=True)
    p.add_argument("--provider", choices=["mock", "remote"], default=None)
    p.add_argument("--max-cycles", type=int, default=None)
    p.add_argument("--degrade", type=float, default=None,
                   help="degrade the working copy first (mock experiments)")
    p.add_argument("--clock", default=None, help="fixed ISO timestamp for reproducible output")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("negative-validate", help="degraded-versus-baseline sensitivity check")
    p.add_argument("--project", required=True)
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--provider", choices=["mock", "remote"], default=None)
    p.add_argument("--clock", default=None)
    p.set_defaults(func=cmd_negative_validate)

    p = sub.add_parser("report", help="print the cycle summary table")
    p.add_argument("--project", required=True)
    p.add_argument("--cycle", type=int, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve", help="start the review service for a project")
    p.add_argument("--project", required=True)
    p.add_argument("--provider", choices=["mock", "remote"], default=None)
    p.add_argument("--degrade", type=float, default=None)
    p.add_argument("--clock", default=None)
    p.add_argument("--fresh", action="store_true",
                   help="ignore persisted session state and start over")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
