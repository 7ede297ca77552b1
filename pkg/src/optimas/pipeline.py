"""End-to-end orchestration: ingest, analyze, prompt, optimize, evaluate,
score, record.

Each stage is a plain function over the previous stage's output so the
CLI can stop at any point. run_pipeline drives all of them and always
persists a run directory, whatever the outcome; with a scripted mock
backend and a fixed seed two runs produce byte-identical prompts,
selections, and reports (timings excepted).
"""

from __future__ import annotations

import json
import logging
import tempfile
import uuid
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

from . import corpus as corpus_store
from .config import PipelineConfig
from .counters import CounterImportance, describe_counters, eomp_select, EompConfig, zscore_normalize
from .ear import (
    DirectionRule,
    EARReport,
    build_direction_rules,
    compute_ear,
    directional_consistency,
)
from .errors import CompilerMissing, ExecutionFailure, OptimasError, RetryExhausted
from .evaluate import (
    BuildSpec,
    CompileOutcome,
    RunArtifacts,
    RunManifest,
    RuntimeStats,
    STATUS_COMPILE_FAILED,
    STATUS_IMPROVED,
    STATUS_INVALID_OUTPUT,
    STATUS_NO_GAIN,
    STATUS_RUNTIME_ERROR,
    capture_reference,
    compile_source,
    compile_with_retry,
    improvement_percent,
    load_manifest,
    measure_runtime,
    persist_run,
    update_run_artifact,
    validate_output,
)
from .gateway import complete, complete_chunked
from .ingest import (
    DiagnosticBundle,
    assemble_bundle,
    load_bundle,
    load_counter_dictionary,
    parse_counter_matrix,
    parse_kernel_times,
    parse_pc_samples,
    parse_roofline,
    save_bundle,
)
from .insights import (
    KernelSet,
    RooflineSummary,
    SalientStall,
    aggregate_stalls,
    filter_salient,
    render_stall_summary,
    select_hot_kernels,
    summarize_rooflines,
)
from .prompt import (
    OptimizedArtifact,
    PromptPackage,
    build_prompt,
    chunk_prompt,
    parse_response,
)

logger = logging.getLogger(__name__)

BUNDLE_DIR = "bundle"


@dataclass(slots=True)
class AnalysisResult:
    kernel_set: KernelSet
    roofline_summaries: list[RooflineSummary]
    salient: list[SalientStall]
    importances: list[CounterImportance]
    stall_lines: list[tuple[str, str]]
    counter_lines: list[tuple[str, str]]
    roofline_lines: list[tuple[str, str]]
    rules: list[DirectionRule]
    id_map: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "selected_kernels": [k.kernel_name for k in self.kernel_set.selected],
            "coverage_fraction": self.kernel_set.coverage_fraction,
            "alpha": self.kernel_set.alpha,
            "salient": [
                {
                    "kernel_name": s.kernel_name,
                    "source_line": s.source_line,
                    "stall_type": s.stall_type,
                    "dominance_share": s.dominance_share,
                    "kernel_share": s.kernel_share,
                    "line_cycles": s.line_cycles,
                }
                for s in self.salient
            ],
            "counters": [
                {
                    "counter_name": c.counter_name,
                    "avg_weight": c.avg_weight,
                    "selection_frequency": c.selection_frequency,
                    "diagnostic_id": c.diagnostic_id,
                    "coefficient_sign": c.coefficient_sign,
                }
                for c in self.importances
            ],
            "rules": [r.to_dict() for r in self.rules],
            "id_map": self.id_map,
        }


def ingest_sources(config: PipelineConfig) -> DiagnosticBundle:
    """Parse every enabled diagnostic source into one bundle."""
    kernels = parse_kernel_times(config.sources.kernels)
    stalls = None
    if config.sources.pc_enabled and config.sources.pcsamples:
        stalls = parse_pc_samples(config.sources.pcsamples)
    counters = None
    if config.sources.ia_enabled and config.sources.counters:
        counters = parse_counter_matrix(config.sources.counters)
    roofline = None
    if config.sources.roofline_enabled and config.sources.roofline:
        roofline = parse_roofline(config.sources.roofline)
    return assemble_bundle(config.app.name, kernels, roofline, stalls, counters)


def _kernel_sources(config: PipelineConfig, kernel_names: set[str]) -> dict[str, str]:
    default_text = Path(config.app.source).read_text(encoding="utf-8")
    sources = {name: default_text for name in kernel_names}
    for kernel, path in config.app.kernel_sources.items():
        sources[kernel] = Path(path).read_text(encoding="utf-8")
    return sources


def analyze_bundle(bundle: DiagnosticBundle, config: PipelineConfig) -> AnalysisResult:
    """Reduce the bundle to ranked, cited diagnostics for the hot kernels."""
    thr = config.thresholds
    kernel_set = select_hot_kernels(bundle.kernels, thr.alpha)
    hot = {k.kernel_name for k in kernel_set.selected}

    roofline_summaries = summarize_rooflines(
        [r for r in bundle.roofline if r.kernel_name in hot], thr.tau_sat
    )
    roofline_lines = [line for s in roofline_summaries for line in s.summary_lines]

    aggregated = {
        key: cycles
        for key, cycles in aggregate_stalls(bundle.stalls).items()
        if key[0] in hot
    }
    salient: list[SalientStall] = []
    stall_lines: list[tuple[str, str]] = []
    if aggregated:
        sources = _kernel_sources(config, hot)
        salient = filter_salient(aggregated, sources, thr.tau_saliency, thr.top_n)
        stall_lines = render_stall_summary(salient)

    importances: list[CounterImportance] = []
    counter_lines: list[tuple[str, str]] = []
    if bundle.counters is not None:
        normalized = zscore_normalize(bundle.counters)
        cfg = EompConfig(
            kappa=min(thr.kappa, len(normalized.counter_names)),
            tau_pool=thr.tau_pool,
            ensembles=thr.ensembles,
            seed=thr.seed,
            epsilon_stop=thr.epsilon_stop,
        )
        importances = eomp_select(normalized, normalized.runtimes_s, cfg)
        dictionary = {}
        if config.sources.counter_dictionary:
            dictionary = load_counter_dictionary(config.sources.counter_dictionary)
        counter_lines = describe_counters(importances, dictionary)

    rules = build_direction_rules(tuple(stall_lines), salient, roofline_summaries, importances)
    if config.ear.rules:
        overrides = {entry["diagnostic_id"]: DirectionRule.from_dict(entry) for entry in config.ear.rules}
        rules = [overrides.pop(r.diagnostic_id, r) for r in rules]
        rules.extend(overrides.values())
    id_map: dict[str, str] = {}
    for diag_id, text in [*stall_lines, *counter_lines, *roofline_lines]:
        id_map[diag_id] = text
    bundle.id_map.update(id_map)
    return AnalysisResult(
        kernel_set=kernel_set,
        roofline_summaries=roofline_summaries,
        salient=salient,
        importances=importances,
        stall_lines=stall_lines,
        counter_lines=counter_lines,
        roofline_lines=roofline_lines,
        rules=rules,
        id_map=id_map,
    )


def build_package(analysis: AnalysisResult, config: PipelineConfig) -> PromptPackage:
    source_text = Path(config.app.source).read_text(encoding="utf-8")
    return build_prompt(
        source_text,
        stall_lines=analysis.stall_lines,
        counter_lines=analysis.counter_lines,
        roofline_lines=analysis.roofline_lines,
        app_name=config.app.name,
    )


def _format_command(template: str, spec: BuildSpec) -> str:
    try:
        return template.format(src=spec.source_name, bin=spec.binary_name, args=spec.args)
    except (KeyError, IndexError):
        return template


@contextmanager
def _stage(name: str):
    """Tag errors escaping a stage so callers can say where the run died."""
    try:
        yield
    except OptimasError as exc:
        exc.stage = name
        raise


def _build_spec(config: PipelineConfig, workdir: Path, reference_stdout: bytes | None = None) -> BuildSpec:
    return BuildSpec(
        compile_cmd=config.eval.compile_cmd,
        exec_cmd=config.eval.exec_cmd,
        workdir=workdir,
        args=config.eval.args,
        runs=config.eval.runs,
        reference_stdout=reference_stdout,
        reference_files=[tuple(entry) for entry in config.eval.reference_files],
        source_name=config.eval.source_name,
    )


def run_pipeline(
    config: PipelineConfig,
    do_ear: bool = True,
    do_corpus: bool = True,
    run_uuid: str | None = None,
) -> RunManifest:
    """Execute the full loop and persist one run directory.

    Whatever happens after the prompt is sent (unparseable reply, compile
    failures, validation mismatch, crashes while timing), the run is still
    persisted with an honest status and every prompt that was sent.
    Directional consistency stays "not-measured" until reprofile_run folds
    a post-optimization profile in.
    """
    log_lines: list[str] = []

    def note(msg: str) -> None:
        logger.info(msg)
        log_lines.append(msg)

    run_uuid = run_uuid or str(uuid.uuid4())
    with _stage("ingest"):
        bundle = ingest_sources(config)
    note(
        f"ingested {len(bundle.kernels)} kernels, {len(bundle.stalls)} stall locations, "
        f"{len(bundle.roofline)} roofline entries, "
        f"{0 if bundle.counters is None else len(bundle.counters.counter_names)} counters"
    )
    with _stage("analyze"):
        analysis = analyze_bundle(bundle, config)
    note(
        f"selected {len(analysis.kernel_set.selected)} hot kernels "
        f"(coverage {analysis.kernel_set.coverage_fraction:.3f}); "
        f"{len(analysis.stall_lines)} stall lines, {len(analysis.counter_lines)} counters, "
        f"{len(analysis.roofline_lines)} roofline lines"
    )
    with _stage("prompt"):
        pkg = build_package(analysis, config)
        if config.prompt_char_limit:
            chunks = chunk_prompt(pkg, config.prompt_char_limit)
        else:
            chunks = [pkg]
    original_source = pkg.source
    note(f"prompt built: {len(pkg.prompt_text)} chars in {len(chunks)} chunk(s)")

    prompts: list[str] = [c.prompt_text for c in chunks]
    with _stage("optimize"):
        response = complete_chunked(chunks, config.llm)
    note(f"model replied: {len(response.text)} chars, latency {response.latency_s:.3f}s")

    status = STATUS_IMPROVED
    improvement: float | None = None
    baseline_stats: RuntimeStats | None = None
    opt_stats: RuntimeStats | None = None
    artifact: OptimizedArtifact | None = None
    errors = ""
    response_text = response.text
    optimized_source = ""

    try:
        artifact = parse_response(response.text)
        optimized_source = artifact.full_source
    except OptimasError as exc:
        status = STATUS_INVALID_OUTPUT
        errors = f"response did not follow the output grammar: {exc}"
        note(errors)

    if artifact is not None:
        with tempfile.TemporaryDirectory(prefix="optimas-work-") as scratch:
            try:
                with _stage("evaluate"):
                    ev = _evaluate_candidate(config, Path(scratch), pkg, artifact, prompts, note)
                status = ev.status
                improvement = ev.improvement
                baseline_stats = ev.baseline_stats
                opt_stats = ev.opt_stats
                artifact = ev.artifact
                errors = ev.errors
                if ev.response_text is not None:
                    response_text = ev.response_text
                optimized_source = ev.source
            except ExecutionFailure as exc:
                status = STATUS_RUNTIME_ERROR
                errors = f"execution failed: {exc}"
                note(errors)
            optimized_source = optimized_source or artifact.full_source

    ear_report: EARReport | None = None
    if do_ear and artifact is not None:
        with _stage("score"):
            ear_report = compute_ear(
                artifact,
                pkg,
                analysis.salient,
                original_source,
                pre_bundle=bundle,
                post_bundle=None,
                rules=analysis.rules,
                window=config.ear.window,
            )
        note(
            f"EAR: coverage {ear_report.evidence_coverage:.3f}, "
            f"localization {ear_report.localization_agreement:.3f}, "
            f"directional {ear_report.directional_consistency}"
        )

    record = None
    if do_corpus:
        spec_shape = _build_spec(config, Path("."))
        record = corpus_store.emit_record(
            app=config.app.name,
            llm=config.llm.model_name,
            hw=config.app.hw or "unspecified",
            sw=config.app.sw or "unspecified",
            compile_cmd=_format_command(config.eval.compile_cmd, spec_shape),
            exec_cmd=_format_command(config.eval.exec_cmd, spec_shape),
            applied=[e.transformation for e in artifact.applied] if artifact else [],
            ignored=[candidate for candidate, _ in artifact.withheld] if artifact else [],
            errors=errors,
            base_mean_s=baseline_stats.mean_s if baseline_stats else None,
            opt_mean_s=opt_stats.mean_s if opt_stats else None,
            config=config.to_dict(),
        )
        record.prompt_url, record.opt_code_url = corpus_store.corpus_urls(
            config.app.name, run_uuid
        )

    analysis_dict = analysis.to_dict()
    analysis_dict["improvement_percent"] = improvement
    with tempfile.TemporaryDirectory(prefix="optimas-bundle-") as tmp:
        saved = save_bundle(bundle, tmp)
        extra_files = {
            f"{BUNDLE_DIR}/{path.name}": path.read_text(encoding="utf-8")
            for path in saved.values()
        }
    extra_files["baseline.src"] = original_source

    artifacts = RunArtifacts(
        prompts=prompts,
        response_text=response_text,
        optimized_source=optimized_source,
        status=status,
        baseline_stats=baseline_stats,
        opt_stats=opt_stats,
        ear_report=ear_report.to_dict() if ear_report else {},
        corpus_record=record.to_dict() if record else {},
        analysis=analysis_dict,
        logs={"pipeline": "\n".join(log_lines)},
        config_snapshot=config.to_dict(),
        extra_files=extra_files,
    )
    with _stage("record"):
        manifest = persist_run(artifacts, config.output_root, run_uuid=run_uuid)
        if do_corpus and record is not None:
            corpus_store.append_record(
                record,
                config.corpus_root,
                run_uuid=run_uuid,
                prompt_text=prompts[0],
                opt_code_text=optimized_source,
            )
    logger.info("persisted run %s (%s)", manifest.run_uuid, status)
    return manifest


@dataclass(slots=True)
class _EvalResult:
    status: str
    baseline_stats: RuntimeStats
    artifact: OptimizedArtifact
    source: str
    errors: str = ""
    improvement: float | None = None
    opt_stats: RuntimeStats | None = None
    response_text: str | None = None


def _evaluate_candidate(
    config: PipelineConfig,
    scratch: Path,
    pkg: PromptPackage,
    artifact: OptimizedArtifact,
    prompts: list[str],
    note,
) -> _EvalResult:
    """Baseline, compile-with-retry, validate, measure."""
    baseline_spec = _build_spec(config, scratch / "baseline")
    baseline_bin, error_tail = compile_source(
        Path(config.app.source).read_text(encoding="utf-8"), baseline_spec
    )
    if baseline_bin is None:
        raise CompilerMissing(f"the baseline itself does not compile:\n{error_tail}")
    if config.eval.reference_capture == "auto":
        reference_stdout = capture_reference(baseline_bin, baseline_spec)
    else:
        reference_stdout = Path(config.eval.reference_capture).read_bytes()
    baseline_spec.reference_stdout = reference_stdout
    baseline_stats = measure_runtime(baseline_bin, baseline_spec)
    note(f"baseline mean {baseline_stats.mean_ns / 1e6:.3f}ms over {config.eval.runs} runs")

    opt_spec = _build_spec(config, scratch / "opt", reference_stdout)

    def gateway(p: PromptPackage):
        return complete(p, config.llm)

    try:
        outcome = compile_with_retry(
            artifact.full_source, opt_spec, gateway, pkg, config.eval.max_compile_retries
        )
    except RetryExhausted as exc:
        failed: CompileOutcome = exc.outcome
        prompts.extend(failed.retry_prompts)
        note(f"candidate failed to compile after {failed.attempts} attempts")
        return _EvalResult(
            status=STATUS_COMPILE_FAILED,
            baseline_stats=baseline_stats,
            artifact=artifact,
            source=failed.source,
            errors=f"compilation failed after {failed.attempts} attempts:\n{failed.log}",
            response_text=failed.retry_responses[-1] if failed.retry_responses else None,
        )
    prompts.extend(outcome.retry_prompts)
    response_text = None
    if outcome.artifact is not None:
        artifact = outcome.artifact
        response_text = outcome.retry_responses[-1]
    note(f"candidate compiled on attempt {outcome.attempts}")

    validation = validate_output(outcome.binary, opt_spec)
    if not validation.ok:
        note(f"validation failed: {validation.reason}")
        return _EvalResult(
            status=STATUS_INVALID_OUTPUT,
            baseline_stats=baseline_stats,
            artifact=artifact,
            source=outcome.source,
            errors=validation.reason,
            response_text=response_text,
        )
    note("validation passed: output is bit-exact")

    opt_stats = measure_runtime(outcome.binary, opt_spec)
    improvement = improvement_percent(baseline_stats, opt_stats)
    status = STATUS_IMPROVED if improvement > 0 else STATUS_NO_GAIN
    note(f"optimized mean {opt_stats.mean_ns / 1e6:.3f}ms, improvement {improvement:.2f}%")
    return _EvalResult(
        status=status,
        baseline_stats=baseline_stats,
        artifact=artifact,
        source=outcome.source,
        improvement=improvement,
        opt_stats=opt_stats,
        response_text=response_text,
    )


def reprofile_run(run_dir: str | Path, post_dir: str | Path) -> EARReport:
    """Fold post-optimization diagnostics into an existing run's report.

    post_dir holds the same normalized files the ingest stage reads
    (kernels.csv, pcsamples.csv, counters.csv, roofline.json). The run's
    directional consistency moves from "not-measured" to a number and the
    run directory is updated in place (manifest digests included).
    """
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    app_name = manifest.config_snapshot.get("app", {}).get("name", "app")
    pre = load_bundle(app_name, run_dir / BUNDLE_DIR)
    post = load_bundle(app_name, post_dir)
    analysis = json.loads((run_dir / "analysis.json").read_text(encoding="utf-8"))
    rules = [DirectionRule.from_dict(entry) for entry in analysis.get("rules", [])]
    artifact = parse_response((run_dir / "response.txt").read_text(encoding="utf-8"))
    report_dict = json.loads((run_dir / "ear_report.json").read_text(encoding="utf-8"))
    if not report_dict:
        raise OptimasError(f"run {manifest.run_uuid} has no EAR report to update")
    report = EARReport.from_dict(report_dict)
    report.directional_consistency = directional_consistency(pre, post, artifact, rules)
    update_run_artifact(run_dir, "ear_report.json", json.dumps(report.to_dict(), indent=2))
    return report


def list_runs(output_root: str | Path) -> list[RunManifest]:
    """All persisted runs under a root, newest first."""
    root = Path(output_root)
    if not root.exists():
        return []
    manifests = []
    for entry in root.iterdir():
        if entry.is_dir() and (entry / "manifest.json").exists():
            manifests.append(load_manifest(entry))
    manifests.sort(key=lambda m: (m.created_at, m.run_uuid), reverse=True)
    return manifests


def find_run(output_root: str | Path, run_id: str) -> RunManifest | None:
    """Look a run up by full UUID or unique prefix."""
    matches = [
        m for m in list_runs(output_root)
        if m.run_uuid == run_id or m.run_uuid.startswith(run_id) or m.run_dir.name == run_id
    ]
    return matches[0] if len(matches) == 1 else None
