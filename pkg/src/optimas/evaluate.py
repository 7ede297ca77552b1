"""Compile, validate, measure, and persist optimization candidates.

The compile step closes the loop with the model: compiler errors are fed
back verbatim (last 60 lines) under a `# Compiler Feedback` section and
the model gets a bounded number of chances to fix its own output. Runtime
measurement is serialized host-wide through a lock file so two runs never
time against each other. Every artifact a run produces lands in one
timestamped directory with SHA-256 digests recorded in its manifest.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import logging
import shlex
import statistics
import subprocess
import tempfile
import time
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from .errors import (
    DigestMismatch,
    ExecutionFailure,
    IncompleteRun,
    RetryExhausted,
    WriteFailure,
    ZeroBaseline,
)
from .prompt import OptimizedArtifact, PromptPackage, parse_response
from .errors import MissingCodeBlock, MultipleCodeBlocks

logger = logging.getLogger(__name__)

COMPILER_TAIL_LINES = 60
FEEDBACK_HEADER = "# Compiler Feedback"
DEFAULT_LOCK_PATH = Path(tempfile.gettempdir()) / "optimas-runtime.lock"

STATUS_IMPROVED = "improved"
STATUS_NO_GAIN = "no-gain"
STATUS_INVALID_OUTPUT = "invalid-output"
STATUS_COMPILE_FAILED = "compile-failed"
STATUS_RUNTIME_ERROR = "runtime-error"
STATUSES = (
    STATUS_IMPROVED,
    STATUS_NO_GAIN,
    STATUS_INVALID_OUTPUT,
    STATUS_COMPILE_FAILED,
    STATUS_RUNTIME_ERROR,
)

FIXED_ARTIFACTS = (
    "response.txt",
    "optimized.src",
    "baseline_stats.json",
    "opt_stats.json",
    "ear_report.json",
    "corpus_record.json",
)


@dataclass(slots=True)
class BuildSpec:
    """How to build and run one candidate in an isolated workdir."""

    compile_cmd: str
    exec_cmd: str
    workdir: Path
    args: str = ""
    runs: int = 5
    reference_stdout: bytes | None = None
    reference_files: list[tuple[str, str]] = field(default_factory=list)
    source_name: str = "candidate.src"
    binary_name: str = "candidate.bin"

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        for placeholder in ("{src}", "{bin}"):
            if placeholder not in self.compile_cmd:
                raise ValueError(f"compile_cmd lacks {placeholder}")
        if "{bin}" not in self.exec_cmd:
            raise ValueError("exec_cmd lacks {bin}")


@dataclass(frozen=True, slots=True)
class RuntimeStats:
    """Wall-clock samples in integer nanoseconds; mean rounds to the
    nearest nanosecond (negligible against ms-scale runtimes)."""

    samples_ns: tuple[int, ...]
    mean_ns: int
    min_ns: int
    max_ns: int

    @classmethod
    def from_samples(cls, samples_ns: list[int]) -> "RuntimeStats":
        return cls(
            samples_ns=tuple(samples_ns),
            mean_ns=round(statistics.fmean(samples_ns)),
            min_ns=min(samples_ns),
            max_ns=max(samples_ns),
        )

    @property
    def mean_s(self) -> float:
        return self.mean_ns / 1e9

    def to_dict(self) -> dict:
        return {
            "samples_ns": list(self.samples_ns),
            "mean_ns": self.mean_ns,
            "min_ns": self.min_ns,
            "max_ns": self.max_ns,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RuntimeStats":
        return cls(
            samples_ns=tuple(data["samples_ns"]),
            mean_ns=data["mean_ns"],
            min_ns=data["min_ns"],
            max_ns=data["max_ns"],
        )


@dataclass(slots=True)
class ValidationResult:
    ok: bool
    reason: str = ""
    divergence_offset: int | None = None
    mismatched_file: str | None = None


@dataclass(slots=True)
class CompileOutcome:
    ok: bool
    binary: Path | None
    attempts: int
    source: str
    log: str
    retry_prompts: list[str] = field(default_factory=list)
    retry_responses: list[str] = field(default_factory=list)
    artifact: OptimizedArtifact | None = None


def _tail(text: str, n: int = COMPILER_TAIL_LINES) -> str:
    return "\n".join(text.splitlines()[-n:])


def compile_source(source: str, spec: BuildSpec) -> tuple[Path | None, str]:
    """Write the source and run the compile command once.

    Returns (binary path, "") on success or (None, error tail) on failure.
    """
    spec.workdir.mkdir(parents=True, exist_ok=True)
    src_path = spec.workdir / spec.source_name
    bin_path = spec.workdir / spec.binary_name
    src_path.write_text(source, encoding="utf-8")
    command = spec.compile_cmd.format(src=src_path, bin=bin_path)
    proc = subprocess.run(
        shlex.split(command), cwd=spec.workdir, capture_output=True, text=True
    )
    if proc.returncode == 0:
        return bin_path, ""
    stderr = proc.stderr if proc.stderr.strip() else proc.stdout
    return None, _tail(stderr)


def compile_with_retry(
    source: str,
    spec: BuildSpec,
    gateway,
    pkg: PromptPackage,
    max_retries: int = 3,
) -> CompileOutcome:
    """Compile a candidate, feeding compiler errors back to the model.

    The provided source (the model's first answer) gets the initial
    attempt. Each failure appends the error tail under a `# Compiler
    Feedback` section of the original prompt and asks the model again, up
    to max_retries times, so total compile attempts never exceed
    max_retries + 1. Raises RetryExhausted (carrying the accumulated log
    and the outcome so far) when the last attempt still fails.

    `gateway` is any callable taking a PromptPackage and returning an
    object with a `.text` attribute.
    """
    current_source = source
    feedback_blocks: list[str] = []
    log_parts: list[str] = []
    outcome = CompileOutcome(ok=False, binary=None, attempts=0, source=source, log="")
    for attempt in range(max_retries + 1):
        binary, error_tail = compile_source(current_source, spec)
        outcome.attempts = attempt + 1
        outcome.source = current_source
        if binary is not None:
            outcome.ok = True
            outcome.binary = binary
            outcome.log = "\n".join(log_parts)
            return outcome
        log_parts.append(f"attempt {attempt + 1} failed:\n{error_tail}")
        if attempt == max_retries:
            break
        feedback_blocks.append(f"Attempt {attempt + 1} compiler errors:\n{error_tail}")
        retry_text = (
            f"{pkg.prompt_text}\n{FEEDBACK_HEADER}\n"
            "The previous candidate failed to compile. Fix the errors below and "
            "reply again in the exact response format.\n"
            + "\n".join(feedback_blocks)
        )
        retry_pkg = replace(pkg, prompt_text=retry_text)
        response = gateway(retry_pkg)
        outcome.retry_prompts.append(retry_text)
        outcome.retry_responses.append(response.text)
        try:
            artifact = parse_response(response.text)
        except (MissingCodeBlock, MultipleCodeBlocks) as exc:
            log_parts.append(f"attempt {attempt + 2} response unusable: {exc}")
            continue
        outcome.artifact = artifact
        current_source = artifact.full_source
    outcome.log = "\n".join(log_parts)
    error = RetryExhausted(outcome.attempts, outcome.log)
    error.outcome = outcome
    raise error


def _run_once(binary: Path, spec: BuildSpec) -> subprocess.CompletedProcess:
    command = spec.exec_cmd.format(bin=binary, args=spec.args)
    proc = subprocess.run(shlex.split(command), cwd=spec.workdir, capture_output=True)
    if proc.returncode != 0:
        raise ExecutionFailure(proc.returncode, proc.stderr.decode(errors="replace")[-500:])
    return proc


def _first_divergence(a: bytes, b: bytes) -> int:
    limit = min(len(a), len(b))
    for i in range(limit):
        if a[i] != b[i]:
            return i
    return limit


def validate_output(binary: Path, spec: BuildSpec) -> ValidationResult:
    """Run once and require bit-exact stdout and output-file digests."""
    proc = _run_once(binary, spec)
    if spec.reference_stdout is not None and proc.stdout != spec.reference_stdout:
        offset = _first_divergence(proc.stdout, spec.reference_stdout)
        return ValidationResult(
            ok=False,
            reason=f"stdout diverges from reference at byte {offset}",
            divergence_offset=offset,
        )
    for rel_path, expected_digest in spec.reference_files:
        target = spec.workdir / rel_path
        if not target.exists():
            return ValidationResult(ok=False, reason=f"missing output file {rel_path}", mismatched_file=rel_path)
        actual = hashlib.sha256(target.read_bytes()).hexdigest()
        if actual != expected_digest:
            return ValidationResult(
                ok=False,
                reason=f"output file {rel_path} digest mismatch",
                mismatched_file=rel_path,
            )
    return ValidationResult(ok=True)


def capture_reference(binary: Path, spec: BuildSpec) -> bytes:
    """Run the baseline once and record its stdout as the reference."""
    return _run_once(binary, spec).stdout


def measure_runtime(
    binary: Path, spec: BuildSpec, lock_path: Path | None = None
) -> RuntimeStats:
    """Measure sequential wall-clock runs under a host-wide lock.

    The exclusive lock spans the full batch so concurrent pipelines cannot
    interleave their timing runs and skew each other.
    """
    lock_path = lock_path or DEFAULT_LOCK_PATH
    samples: list[int] = []
    with open(lock_path, "w") as lock_fh:
        fcntl.flock(lock_fh, fcntl.LOCK_EX)
        try:
            for _ in range(spec.runs):
                started = time.perf_counter_ns()
                _run_once(binary, spec)
                samples.append(time.perf_counter_ns() - started)
        finally:
            fcntl.flock(lock_fh, fcntl.LOCK_UN)
    return RuntimeStats.from_samples(samples)


def improvement_percent(base: RuntimeStats, opt: RuntimeStats) -> float:
    """Mean runtime improvement: positive is faster, negative is a regression."""
    if base.mean_ns == 0:
        raise ZeroBaseline("baseline mean runtime is zero")
    return 100.0 * (base.mean_ns - opt.mean_ns) / base.mean_ns


@dataclass(slots=True)
class RunArtifacts:
    """Everything a finished (or failed) run wants written to disk."""

    prompts: list[str]
    response_text: str
    optimized_source: str
    status: str
    baseline_stats: RuntimeStats | None = None
    opt_stats: RuntimeStats | None = None
    ear_report: dict = field(default_factory=dict)
    corpus_record: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    logs: dict[str, str] = field(default_factory=dict)
    config_snapshot: dict = field(default_factory=dict)
    extra_files: dict[str, str] = field(default_factory=dict)


@dataclass(slots=True)
class RunManifest:
    run_uuid: str
    created_at: str
    status: str
    digests: dict[str, str]
    config_snapshot: dict
    run_dir: Path

    def to_dict(self) -> dict:
        return {
            "run_uuid": self.run_uuid,
            "created_at": self.created_at,
            "status": self.status,
            "digests": self.digests,
            "config_snapshot": self.config_snapshot,
        }


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write(path: Path, text: str, digests: dict[str, str], root: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise WriteFailure(str(path), str(exc)) from None
    digests[str(path.relative_to(root))] = _sha256_file(path)


def persist_run(
    artifacts: RunArtifacts, root: str | Path, run_uuid: str | None = None
) -> RunManifest:
    """Write one run's artifacts into a fresh timestamped directory.

    Layout: <root>/<timestamp>-<uuid>/ with prompt_<i>.txt, response.txt,
    optimized.src, baseline_stats.json, opt_stats.json, ear_report.json,
    corpus_record.json, analysis.json, logs/, and manifest.json carrying a
    SHA-256 digest for every other file.
    """
    if artifacts.status not in STATUSES:
        raise ValueError(f"unknown status {artifacts.status!r}")
    run_uuid = run_uuid or str(uuid.uuid4())
    now = datetime.now(timezone.utc)
    created_at = now.strftime("%Y-%m-%dT%H:%M:%SZ")
    run_dir = Path(root) / f"{now.strftime('%Y%m%d-%H%M%S')}-{run_uuid}"
    run_dir.mkdir(parents=True, exist_ok=False)

    digests: dict[str, str] = {}
    for i, prompt_text in enumerate(artifacts.prompts, start=1):
        _write(run_dir / f"prompt_{i}.txt", prompt_text, digests, run_dir)
    _write(run_dir / "response.txt", artifacts.response_text, digests, run_dir)
    _write(run_dir / "optimized.src", artifacts.optimized_source, digests, run_dir)
    _write(
        run_dir / "baseline_stats.json",
        json.dumps(artifacts.baseline_stats.to_dict() if artifacts.baseline_stats else {}, indent=2),
        digests,
        run_dir,
    )
    _write(
        run_dir / "opt_stats.json",
        json.dumps(artifacts.opt_stats.to_dict() if artifacts.opt_stats else {}, indent=2),
        digests,
        run_dir,
    )
    _write(run_dir / "ear_report.json", json.dumps(artifacts.ear_report, indent=2), digests, run_dir)
    _write(run_dir / "corpus_record.json", json.dumps(artifacts.corpus_record, indent=2), digests, run_dir)
    _write(run_dir / "analysis.json", json.dumps(artifacts.analysis, indent=2), digests, run_dir)
    for name, text in artifacts.logs.items():
        _write(run_dir / "logs" / f"{name}.log", text, digests, run_dir)
    for rel_name, text in artifacts.extra_files.items():
        _write(run_dir / rel_name, text, digests, run_dir)

    manifest = RunManifest(
        run_uuid=run_uuid,
        created_at=created_at,
        status=artifacts.status,
        digests=digests,
        config_snapshot=artifacts.config_snapshot,
        run_dir=run_dir,
    )
    _write_manifest(manifest)
    return manifest


def _write_manifest(manifest: RunManifest) -> None:
    path = manifest.run_dir / "manifest.json"
    try:
        path.write_text(json.dumps(manifest.to_dict(), indent=2), encoding="utf-8")
    except OSError as exc:
        raise WriteFailure(str(path), str(exc)) from None


def update_run_artifact(run_dir: str | Path, name: str, text: str) -> RunManifest:
    """Rewrite one artifact in an existing run and refresh its manifest digest."""
    run_dir = Path(run_dir)
    manifest = load_manifest(run_dir)
    target = run_dir / name
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise WriteFailure(str(target), str(exc)) from None
    manifest.digests[name] = _sha256_file(target)
    _write_manifest(manifest)
    return manifest


def load_manifest(run_dir: str | Path) -> RunManifest:
    run_dir = Path(run_dir)
    path = run_dir / "manifest.json"
    if not path.exists():
        raise IncompleteRun(["manifest.json"])
    data = json.loads(path.read_text(encoding="utf-8"))
    return RunManifest(
        run_uuid=data["run_uuid"],
        created_at=data["created_at"],
        status=data["status"],
        digests=data["digests"],
        config_snapshot=data.get("config_snapshot", {}),
        run_dir=run_dir,
    )


def verify_digests(run_dir: str | Path) -> RunManifest:
    """Reload a manifest and check every artifact against its digest."""
    manifest = load_manifest(run_dir)
    run_dir = Path(run_dir)
    missing = [name for name in manifest.digests if not (run_dir / name).exists()]
    if missing:
        raise IncompleteRun(sorted(missing))
    for name, expected in manifest.digests.items():
        actual = _sha256_file(run_dir / name)
        if actual != expected:
            raise DigestMismatch(name, expected, actual)
    return manifest
