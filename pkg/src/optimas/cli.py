"""Command line entry points.

`optimas run --config config.yml` is the canonical invocation; the other
subcommands expose individual stages so a run can be inspected or redone
piecemeal. Exit status reflects the run outcome: 0 improved, 2 no-gain,
3 invalid-output, 4 compile-failed, 5 runtime-error, 1 for errors before
a status exists.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import PipelineConfig, load_config
from .errors import OptimasError
from .evaluate import (
    STATUS_COMPILE_FAILED,
    STATUS_IMPROVED,
    STATUS_INVALID_OUTPUT,
    STATUS_NO_GAIN,
    STATUS_RUNTIME_ERROR,
    load_manifest,
    verify_digests,
)
from .gateway import complete_chunked
from .pipeline import (
    analyze_bundle,
    build_package,
    find_run,
    ingest_sources,
    reprofile_run,
    run_pipeline,
)
from .prompt import FIXED_GUARDRAILS, PromptPackage, chunk_prompt

EXIT_BY_STATUS = {
    STATUS_IMPROVED: 0,
    STATUS_NO_GAIN: 2,
    STATUS_INVALID_OUTPUT: 3,
    STATUS_COMPILE_FAILED: 4,
    STATUS_RUNTIME_ERROR: 5,
}

log = logging.getLogger("optimas")


def _config(args) -> PipelineConfig:
    return load_config(args.config)


def _resolve_run_dir(args) -> Path:
    """Accept either a run directory path or a run id under output_root."""
    candidate = Path(args.run)
    if (candidate / "manifest.json").exists():
        return candidate
    if not args.config:
        raise OptimasError(
            f"{args.run} is not a run directory; pass --config to look ids up"
        )
    manifest = find_run(_config(args).output_root, args.run)
    if manifest is None:
        raise OptimasError(f"no unique run matching {args.run!r}")
    return manifest.run_dir


def _cmd_ingest(args) -> int:
    from .ingest import save_bundle

    config = _config(args)
    bundle = ingest_sources(config)
    counters = 0 if bundle.counters is None else len(bundle.counters.counter_names)
    print(
        f"{bundle.app_name}: {len(bundle.kernels)} kernels, "
        f"{len(bundle.stalls)} stall locations, {len(bundle.roofline)} roofline entries, "
        f"{counters} counters"
    )
    if args.out:
        written = save_bundle(bundle, args.out)
        for path in written.values():
            print(f"wrote {path}")
    return 0


def _cmd_analyze(args) -> int:
    config = _config(args)
    analysis = analyze_bundle(ingest_sources(config), config)
    if args.json:
        print(json.dumps(analysis.to_dict(), indent=2))
        return 0
    names = ", ".join(k.kernel_name for k in analysis.kernel_set.selected)
    print(f"hot kernels (coverage {analysis.kernel_set.coverage_fraction:.3f}): {names}")
    for _, text in [*analysis.roofline_lines, *analysis.stall_lines, *analysis.counter_lines]:
        print(text)
    return 0


def _build_chunks(config: PipelineConfig) -> list[PromptPackage]:
    pkg = build_package(analyze_bundle(ingest_sources(config), config), config)
    if config.prompt_char_limit:
        return chunk_prompt(pkg, config.prompt_char_limit)
    return [pkg]


def _cmd_prompt(args) -> int:
    chunks = _build_chunks(_config(args))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for i, chunk in enumerate(chunks, start=1):
            path = out / f"prompt_{i}.txt"
            path.write_text(chunk.prompt_text, encoding="utf-8")
            print(f"wrote {path}")
    else:
        for chunk in chunks:
            print(chunk.prompt_text)
    return 0


def _cmd_optimize(args) -> int:
    config = _config(args)
    if args.prompt:
        text = Path(args.prompt).read_text(encoding="utf-8")
        chunks = [
            PromptPackage(
                prompt_text=text,
                embedded_ids=(),
                numbered_source="",
                guardrails=FIXED_GUARDRAILS,
            )
        ]
    else:
        chunks = _build_chunks(config)
    response = complete_chunked(chunks, config.llm)
    if args.out:
        Path(args.out).write_text(response.text, encoding="utf-8")
        print(f"wrote {args.out} ({response.output_tokens} tokens)", file=sys.stderr)
    else:
        print(response.text)
    return 0


def _cmd_evaluate(args) -> int:
    """Compile, validate, and time one candidate source (no model calls)."""
    import tempfile

    from .evaluate import (
        BuildSpec,
        capture_reference,
        compile_source,
        improvement_percent,
        measure_runtime,
        validate_output,
    )

    config = _config(args)
    candidate = Path(args.candidate).read_text(encoding="utf-8")
    baseline = Path(config.app.source).read_text(encoding="utf-8")
    with tempfile.TemporaryDirectory(prefix="optimas-eval-") as scratch:
        def spec_for(sub: str) -> BuildSpec:
            return BuildSpec(
                compile_cmd=config.eval.compile_cmd,
                exec_cmd=config.eval.exec_cmd,
                workdir=Path(scratch) / sub,
                args=config.eval.args,
                runs=config.eval.runs,
                reference_files=[tuple(e) for e in config.eval.reference_files],
                source_name=config.eval.source_name,
            )

        base_spec = spec_for("baseline")
        base_bin, tail = compile_source(baseline, base_spec)
        if base_bin is None:
            print(f"baseline does not compile:\n{tail}", file=sys.stderr)
            return 1
        if config.eval.reference_capture == "auto":
            reference = capture_reference(base_bin, base_spec)
        else:
            reference = Path(config.eval.reference_capture).read_bytes()
        base_spec.reference_stdout = reference
        base_stats = measure_runtime(base_bin, base_spec)

        opt_spec = spec_for("candidate")
        opt_spec.reference_stdout = reference
        opt_bin, tail = compile_source(candidate, opt_spec)
        if opt_bin is None:
            print(f"candidate does not compile:\n{tail}", file=sys.stderr)
            return EXIT_BY_STATUS[STATUS_COMPILE_FAILED]
        validation = validate_output(opt_bin, opt_spec)
        if not validation.ok:
            print(f"validation failed: {validation.reason}", file=sys.stderr)
            return EXIT_BY_STATUS[STATUS_INVALID_OUTPUT]
        opt_stats = measure_runtime(opt_bin, opt_spec)

    gain = improvement_percent(base_stats, opt_stats)
    print(
        f"baseline {base_stats.mean_s * 1000:.4g}ms, "
        f"candidate {opt_stats.mean_s * 1000:.4g}ms, improvement {gain:.2f}%"
    )
    return 0 if gain > 0 else EXIT_BY_STATUS[STATUS_NO_GAIN]


def _cmd_run(args) -> int:
    config = _config(args)
    manifest = run_pipeline(
        config, do_ear=not args.no_ear, do_corpus=not args.no_corpus
    )
    print(f"run {manifest.run_uuid}: {manifest.status}")
    print(f"artifacts in {manifest.run_dir}")
    return EXIT_BY_STATUS.get(manifest.status, 1)


def _cmd_ear(args) -> int:
    run_dir = _resolve_run_dir(args)
    if args.post:
        report = reprofile_run(run_dir, args.post)
        body = report.to_dict()
    else:
        body = json.loads((run_dir / "ear_report.json").read_text(encoding="utf-8"))
    print(json.dumps(body, indent=2))
    return 0


def _cmd_reprofile(args) -> int:
    run_dir = _resolve_run_dir(args)
    report = reprofile_run(run_dir, args.post)
    print(f"directional consistency: {report.directional_consistency}")
    return 0


def _cmd_report(args) -> int:
    run_dir = _resolve_run_dir(args)
    manifest = load_manifest(run_dir)
    if args.verify:
        verify_digests(run_dir)
        print("digests: ok")
    print(f"run {manifest.run_uuid}  status: {manifest.status}")
    app = manifest.config_snapshot.get("app", {})
    llm = manifest.config_snapshot.get("llm", {})
    print(f"app: {app.get('name', '?')}  model: {llm.get('model', '?')}")
    base = json.loads((run_dir / "baseline_stats.json").read_text(encoding="utf-8"))
    opt = json.loads((run_dir / "opt_stats.json").read_text(encoding="utf-8"))
    if base:
        print(f"baseline mean {base['mean_ns'] / 1e6:.4g}ms over {len(base['samples_ns'])} runs")
    if opt:
        analysis = json.loads((run_dir / "analysis.json").read_text(encoding="utf-8"))
        gain = analysis.get("improvement_percent")
        gain_text = f"{gain:.2f}%" if gain is not None else "n/a"
        print(f"optimized mean {opt['mean_ns'] / 1e6:.4g}ms, improvement {gain_text}")
    ear = json.loads((run_dir / "ear_report.json").read_text(encoding="utf-8"))
    if ear:
        print(
            f"EAR: coverage {ear['evidence_coverage']:.3f}, "
            f"localization {ear['localization_agreement']:.3f}, "
            f"directional {ear['directional_consistency']}"
        )
        print(
            f"edits: {ear['implemented']} implemented, {ear['withheld']} withheld, "
            f"{ear['hallucinated']} hallucinated"
        )
    return 0


def _cmd_serve(args) -> int:
    from .api import serve_api

    config = _config(args)
    Path(config.output_root).mkdir(parents=True, exist_ok=True)
    serve_api(config, host=args.host, port=args.port, static_dir=args.static)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="optimas",
        description="Profile-guided LLM code optimization pipeline.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        return p

    p = add("ingest", _cmd_ingest, "parse diagnostic sources and report counts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="write the normalized bundle here")

    p = add("analyze", _cmd_analyze, "select hot kernels and rank diagnostics")
    p.add_argument("--config", required=True)
    p.add_argument("--json", action="store_true", help="machine-readable output")

    p = add("prompt", _cmd_prompt, "build the prompt(s) without sending them")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="directory for prompt_<i>.txt files")

    p = add("optimize", _cmd_optimize, "send the prompt to the model backend")
    p.add_argument("--config", required=True)
    p.add_argument("--prompt", help="send this file instead of building a prompt")
    p.add_argument("--out", help="write the raw response here")

    p = add("evaluate", _cmd_evaluate, "compile, validate, and time a candidate")
    p.add_argument("--config", required=True)
    p.add_argument("--candidate", required=True, help="candidate source file")

    p = add("run", _cmd_run, "run all stages and persist a run directory")
    p.add_argument("--config", required=True)
    p.add_argument("--no-ear", action="store_true", help="skip EAR scoring")
    p.add_argument("--no-corpus", action="store_true", help="skip the corpus append")

    p = add("ear", _cmd_ear, "print a run's EAR report (recompute with --post)")
    p.add_argument("--run", required=True, help="run directory or id")
    p.add_argument("--config", help="needed to resolve run ids")
    p.add_argument("--post", help="post-optimization profile directory")

    p = add("reprofile", _cmd_reprofile, "fold a post-optimization profile into a run")
    p.add_argument("run", help="run directory or id")
    p.add_argument("--config", help="needed to resolve run ids")
    p.add_argument("--post", required=True, help="post-optimization profile directory")

    p = add("report", _cmd_report, "summarize a persisted run")
    p.add_argument("--run", required=True, help="run directory or id")
    p.add_argument("--config", help="needed to resolve run ids")
    p.add_argument("--verify", action="store_true", help="check artifact digests first")

    p = add("serve", _cmd_serve, "serve the HTTP API for the dashboard")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8420)
    p.add_argument("--static", help="serve a built dashboard from this directory")

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except OptimasError as exc:
        stage = getattr(exc, "stage", None)
        where = f" [{stage}]" if stage else ""
        print(f"error{where}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
