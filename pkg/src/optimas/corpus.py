"""Append-only optimization corpus.

Every evaluated exchange becomes one self-contained record: what ran,
with which prompt, on what hardware, what the model changed or refused to
change, and how the runtimes compared. Records are one file each plus an
NDJSON index for cheap scanning; all paths are relative to the corpus
root so the directory can be moved or published wholesale.
"""

from __future__ import annotations

import fcntl
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import IncompleteRun, WriteFailure

RECORD_KEYS = (
    "App",
    "Prompt",
    "LLM",
    "HW",
    "SW",
    "Compile",
    "Exec",
    "Opt_Code",
    "Applied",
    "Ignored",
    "Errors",
    "Base_RT",
    "Opt_RT",
    "Config",
)

_DURATION_RE = re.compile(r"^(\d+(?:\.\d+)?)ms$")


@dataclass(slots=True)
class CorpusRecord:
    app: str
    llm: str
    hw: str
    sw: str
    compile_cmd: str
    exec_cmd: str
    applied: list[str] = field(default_factory=list)
    ignored: list[str] = field(default_factory=list)
    errors: str = ""
    base_rt: str = ""
    opt_rt: str = ""
    prompt_url: str = ""
    opt_code_url: str = ""
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "App": self.app,
            "Prompt": self.prompt_url,
            "LLM": self.llm,
            "HW": self.hw,
            "SW": self.sw,
            "Compile": self.compile_cmd,
            "Exec": self.exec_cmd,
            "Opt_Code": self.opt_code_url,
            "Applied": list(self.applied),
            "Ignored": list(self.ignored),
            "Errors": self.errors,
            "Base_RT": self.base_rt,
            "Opt_RT": self.opt_rt,
            "Config": self.config,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CorpusRecord":
        return cls(
            app=data["App"],
            llm=data["LLM"],
            hw=data["HW"],
            sw=data["SW"],
            compile_cmd=data["Compile"],
            exec_cmd=data["Exec"],
            applied=list(data.get("Applied", [])),
            ignored=list(data.get("Ignored", [])),
            errors=data.get("Errors", ""),
            base_rt=data.get("Base_RT", ""),
            opt_rt=data.get("Opt_RT", ""),
            prompt_url=data.get("Prompt", ""),
            opt_code_url=data.get("Opt_Code", ""),
            config=data.get("Config", {}),
        )


def format_duration_ms(seconds: float) -> str:
    """Canonical duration string: decimal milliseconds with an ms suffix.

    Always plain decimal ("%g" would lose digits and drift into scientific
    notation past 1e6 ms, which the parser rightly refuses).
    """
    ms = round(seconds * 1000.0, 4)
    text = f"{ms:.4f}".rstrip("0").rstrip(".")
    return f"{text}ms"


def parse_duration_ms(text: str) -> float:
    """Parse a canonical duration back into seconds."""
    m = _DURATION_RE.match(text.strip())
    if not m:
        raise ValueError(f"not a canonical duration: {text!r}")
    return float(m.group(1)) / 1000.0


def emit_record(
    *,
    app: str,
    llm: str,
    hw: str,
    sw: str,
    compile_cmd: str,
    exec_cmd: str,
    applied: list[str] | None = None,
    ignored: list[str] | None = None,
    errors: str = "",
    base_mean_s: float | None = None,
    opt_mean_s: float | None = None,
    config: dict | None = None,
) -> CorpusRecord:
    """Shape one run's outcome into a corpus record (URLs filled on append).

    A failed run keeps an empty Opt_RT but must say why in Errors.
    """
    base_rt = format_duration_ms(base_mean_s) if base_mean_s is not None else ""
    opt_rt = format_duration_ms(opt_mean_s) if opt_mean_s is not None else ""
    if not opt_rt and not errors:
        raise ValueError("a record without an optimized runtime must carry an error")
    return CorpusRecord(
        app=app,
        llm=llm,
        hw=hw,
        sw=sw,
        compile_cmd=compile_cmd,
        exec_cmd=exec_cmd,
        applied=list(applied or []),
        ignored=list(ignored or []),
        errors=errors,
        base_rt=base_rt,
        opt_rt=opt_rt,
        config=dict(config or {}),
    )


def record_from_run(run_dir: str | Path) -> CorpusRecord:
    """Rebuild the record a persisted run carries in corpus_record.json."""
    from .evaluate import load_manifest

    run_dir = Path(run_dir)
    load_manifest(run_dir)
    path = run_dir / "corpus_record.json"
    data = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    if not data:
        raise IncompleteRun(["corpus_record.json"])
    return CorpusRecord.from_dict(data)


def _slug(name: str) -> str:
    return re.sub(r"[^a-zA-Z0-9_.-]+", "_", name).strip("_").lower() or "app"


def corpus_urls(app: str, run_uuid: str) -> tuple[str, str]:
    """The (Prompt, Opt_Code) URLs a record will get when appended."""
    app_slug = _slug(app)
    return (
        f"./prompts/{app_slug}/{run_uuid}.txt",
        f"./opt_code/{app_slug}/{run_uuid}.txt",
    )


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def append_record(
    record: CorpusRecord,
    corpus_root: str | Path,
    *,
    run_uuid: str,
    prompt_text: str,
    opt_code_text: str,
) -> Path:
    """Write the record, its prompt, and its optimized code into the corpus.

    Append-only: an existing record for the same run UUID is refused. The
    NDJSON index append happens under an exclusive lock so concurrent
    pipelines interleave cleanly.
    """
    root = Path(corpus_root)
    records_dir = root / "records"
    record_path = records_dir / f"{run_uuid}.json"
    if record_path.exists():
        raise WriteFailure(str(record_path), "record already exists; corpus is append-only")
    record.prompt_url, record.opt_code_url = corpus_urls(record.app, run_uuid)
    prompt_rel = record.prompt_url[2:]
    opt_rel = record.opt_code_url[2:]

    records_dir.mkdir(parents=True, exist_ok=True)
    (root / prompt_rel).parent.mkdir(parents=True, exist_ok=True)
    (root / opt_rel).parent.mkdir(parents=True, exist_ok=True)
    (root / prompt_rel).write_text(prompt_text, encoding="utf-8")
    (root / opt_rel).write_text(opt_code_text, encoding="utf-8")
    record_path.write_text(json.dumps(record.to_dict(), indent=2), encoding="utf-8")

    index_entry = {
        "uuid": run_uuid,
        "app": record.app,
        "record": f"records/{run_uuid}.json",
        "prompt_sha256": _sha256_text(prompt_text),
        "opt_code_sha256": _sha256_text(opt_code_text),
    }
    with open(root / "index.lock", "w") as lock_fh:
        fcntl.flock(lock_fh, fcntl.LOCK_EX)
        try:
            with open(root / "index.ndjson", "a", encoding="utf-8") as index_fh:
                index_fh.write(json.dumps(index_entry) + "\n")
        finally:
            fcntl.flock(lock_fh, fcntl.LOCK_UN)
    return record_path


def read_index(corpus_root: str | Path) -> list[dict]:
    path = Path(corpus_root) / "index.ndjson"
    if not path.exists():
        return []
    entries = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if line.strip():
            entries.append(json.loads(line))
    return entries


def load_record(corpus_root: str | Path, run_uuid: str) -> CorpusRecord:
    path = Path(corpus_root) / "records" / f"{run_uuid}.json"
    return CorpusRecord.from_dict(json.loads(path.read_text(encoding="utf-8")))


def _check_url(url: str, root: Path, violations: list[str], label: str) -> Path | None:
    if not url:
        violations.append(f"{label} is empty")
        return None
    if url.startswith("/"):
        violations.append(f"{label} must be relative, got {url!r}")
        return None
    rel = url[2:] if url.startswith("./") else url
    if ".." in Path(rel).parts:
        violations.append(f"{label} escapes the corpus root: {url!r}")
        return None
    target = root / rel
    if not target.exists():
        violations.append(f"{label} does not resolve: {url!r}")
        return None
    return target


def validate_record(
    record: CorpusRecord,
    corpus_root: str | Path,
    index_entry: dict | None = None,
) -> list[str]:
    """Check one record's invariants; returns a list of violations (empty = ok)."""
    root = Path(corpus_root)
    violations: list[str] = []
    for label, value in (
        ("App", record.app),
        ("LLM", record.llm),
        ("HW", record.hw),
        ("SW", record.sw),
        ("Compile", record.compile_cmd),
        ("Exec", record.exec_cmd),
    ):
        if not value:
            violations.append(f"{label} is empty")
    for label, value in (("Base_RT", record.base_rt), ("Opt_RT", record.opt_rt)):
        if value:
            try:
                if parse_duration_ms(value) <= 0:
                    violations.append(f"{label} must be positive, got {value!r}")
            except ValueError as exc:
                violations.append(str(exc))
        elif not record.errors:
            violations.append(f"{label} is empty but Errors gives no reason")
    prompt_path = _check_url(record.prompt_url, root, violations, "Prompt")
    opt_path = _check_url(record.opt_code_url, root, violations, "Opt_Code")
    if index_entry is not None:
        if prompt_path is not None:
            actual = _sha256_text(prompt_path.read_text(encoding="utf-8"))
            if actual != index_entry.get("prompt_sha256"):
                violations.append("Prompt content does not match its indexed digest")
        if opt_path is not None:
            actual = _sha256_text(opt_path.read_text(encoding="utf-8"))
            if actual != index_entry.get("opt_code_sha256"):
                violations.append("Opt_Code content does not match its indexed digest")
    return violations
