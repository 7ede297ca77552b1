"""Prompt assembly and response parsing.

The prompt is a single structured document: numbered source, then the
three diagnostic sections (stalls, counters, roofline), then instructions
with guardrails and the exact response grammar. Responses come back in a
matching grammar; both directions are strict so that downstream scoring
can trust IDs and line numbers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from .errors import (
    LineTooLong,
    MissingCodeBlock,
    MultipleCodeBlocks,
    NoDiagnostics,
)

NO_DATA_MARKER = "(no data provided)"

FIXED_GUARDRAILS = (
    "Do not change any kernel or function signatures.",
    "Do not duplicate kernels or emit renamed copies of them.",
    "The optimized code must be syntactically valid and complete.",
    "Cite the diagnostic evidence IDs that motivated each edit.",
    "Reply only in the exact response format described below.",
)

RESPONSE_FORMAT_INSTRUCTIONS = """Reply exactly in this format:
### OPTIMIZED CODE
A single fenced code block containing the complete replacement source file.
### APPLIED
- [A1] lines <start>-<end> | <what changed and why> | evidence: <comma-separated diagnostic IDs>
### WITHHELD
- <candidate transformation> | reason: <why it was not applied>"""

INSTRUCTIONS_PREAMBLE = (
    "You are an HPC performance optimization expert. You must optimize the "
    "source code provided above using only the performance data provided above.\n"
    "Can you give me the fixed optimized code that will replace the full source "
    "code including headers and main function body? Consider the following "
    "instructions:"
)

_APPLIED_RE = re.compile(
    r"^- \[A(\d+)\] lines (\d+)-(\d+) \| (.*?) \| evidence: (.*)$"
)
_WITHHELD_RE = re.compile(r"^- (.*?) \| reason: (.*)$")
_STALL_LINE_NO_RE = re.compile(r"^PC-\d+: line (\d+) ")
_STALL_TYPE_RE = re.compile(r"` — ([^:`]+): \d+% of line stalls")
_COUNTER_NAME_RE = re.compile(r"^IA-\d+: (\S+) — ")
_NUMBER_PREFIX_RE = re.compile(r"^ *\d+\| ")

Lines = tuple[tuple[str, str], ...]


@dataclass(frozen=True, slots=True)
class PromptPackage:
    """A ready-to-send prompt plus the metadata later stages score against."""

    prompt_text: str
    embedded_ids: tuple[str, ...]
    numbered_source: str
    guardrails: tuple[str, ...]
    chunk_index: int = 0
    chunk_total: int = 1
    source: str = ""
    app_name: str = ""
    stall_lines: Lines = ()
    counter_lines: Lines = ()
    roofline_lines: Lines = ()
    evidence_terms: tuple[str, ...] = ()


@dataclass(frozen=True, slots=True)
class EditRecord:
    """One claimed edit from the APPLIED section.

    Line numbers refer to the original numbered source. parsed=False marks
    an entry that did not match the grammar; it is kept verbatim (never
    dropped) with no evidence and no line range.
    """

    edit_id: str
    line_start: int | None
    line_end: int | None
    transformation: str
    evidence_ids: tuple[str, ...] = ()
    parsed: bool = True


@dataclass(frozen=True, slots=True)
class OptimizedArtifact:
    full_source: str
    language: str
    applied: tuple[EditRecord, ...]
    withheld: tuple[tuple[str, str], ...]
    raw_text: str


def number_source(source: str) -> str:
    """Prefix each line with a 1-based, width-4 line number ("   1| ...")."""
    if source == "":
        return ""
    return "\n".join(
        f"{i:4d}| {line}" for i, line in enumerate(source.split("\n"), start=1)
    )


def strip_numbering(numbered: str) -> str:
    """Invert number_source exactly."""
    if numbered == "":
        return ""
    return "\n".join(
        _NUMBER_PREFIX_RE.sub("", line, count=1) for line in numbered.split("\n")
    )


def _section(lines: Lines) -> str:
    if not lines:
        return NO_DATA_MARKER
    return "\n".join(text for _, text in lines)


def _render(
    numbered_source: str,
    stall_lines: Lines,
    counter_lines: Lines,
    roofline_lines: Lines,
    guardrails: tuple[str, ...],
) -> str:
    rules = "\n".join(f"{i}. {g}" for i, g in enumerate(guardrails, start=1))
    return (
        "# Begin Source Code\n"
        f"{numbered_source}\n"
        "# End Source Code\n"
        "# Begin Performance Analysis\n"
        "### STALL ANALYSIS:\n"
        f"{_section(stall_lines)}\n"
        "### IMPORTANT HARDWARE COUNTERS:\n"
        f"{_section(counter_lines)}\n"
        "### ROOFLINE ANALYSIS:\n"
        f"{_section(roofline_lines)}\n"
        "# End Performance Analysis\n"
        "# Instructions\n"
        f"{INSTRUCTIONS_PREAMBLE}\n"
        f"{rules}\n"
        f"{RESPONSE_FORMAT_INSTRUCTIONS}"
    )


def _evidence_terms(stall_lines: Lines, counter_lines: Lines) -> tuple[str, ...]:
    terms: list[str] = []
    for _, text in stall_lines:
        m = _STALL_TYPE_RE.search(text)
        if m:
            terms.append(m.group(1))
    for _, text in counter_lines:
        m = _COUNTER_NAME_RE.match(text)
        if m:
            terms.append(m.group(1))
    # Deduplicate, preserving order.
    return tuple(dict.fromkeys(terms))


def build_prompt(
    source: str,
    stall_lines: Lines | list = (),
    counter_lines: Lines | list = (),
    roofline_lines: Lines | list = (),
    extra_guardrails: tuple[str, ...] | list = (),
    app_name: str = "",
) -> PromptPackage:
    """Assemble the full prompt document for one application.

    Sections always appear, in the fixed order; a section without data
    carries the explicit "(no data provided)" marker so the model never
    guesses at missing diagnostics. At least one section must have data.
    The fixed guardrails are always present; callers may append more.
    """
    stall_lines = tuple(stall_lines)
    counter_lines = tuple(counter_lines)
    roofline_lines = tuple(roofline_lines)
    if not (stall_lines or counter_lines or roofline_lines):
        raise NoDiagnostics("refusing to build a prompt with no diagnostic sections")
    guardrails = FIXED_GUARDRAILS + tuple(g for g in extra_guardrails if g not in FIXED_GUARDRAILS)
    numbered = number_source(source)
    ids = [i for i, _ in stall_lines]
    ids += [i for i, _ in counter_lines]
    ids += [i for i, _ in roofline_lines]
    return PromptPackage(
        prompt_text=_render(numbered, stall_lines, counter_lines, roofline_lines, guardrails),
        embedded_ids=tuple(dict.fromkeys(ids)),
        numbered_source=numbered,
        guardrails=guardrails,
        source=source,
        app_name=app_name,
        stall_lines=stall_lines,
        counter_lines=counter_lines,
        roofline_lines=roofline_lines,
        evidence_terms=_evidence_terms(stall_lines, counter_lines),
    )


def _stall_line_no(text: str) -> int | None:
    m = _STALL_LINE_NO_RE.match(text)
    return int(m.group(1)) if m else None


def chunk_prompt(pkg: PromptPackage, limit_chars: int) -> list[PromptPackage]:
    """Split an oversized prompt at source line boundaries.

    Each chunk keeps the original line numbering, its slice of the stall
    lines (those whose source line falls inside the chunk; lines without a
    parseable location ride along in every chunk), and the full counter
    and roofline sections, so every chunk is independently interpretable.
    Raises LineTooLong when one source line can never fit.
    """
    if limit_chars <= 0:
        raise ValueError("limit_chars must be positive")
    if len(pkg.prompt_text) <= limit_chars:
        return [replace(pkg, chunk_index=0, chunk_total=1)]

    source_lines = pkg.source.split("\n")
    numbered_lines = pkg.numbered_source.split("\n")
    located = [(_stall_line_no(text), (sid, text)) for sid, text in pkg.stall_lines]

    chunks: list[PromptPackage] = []
    start = 0
    while start < len(source_lines):
        end = start
        chunk_pkg = None
        while end < len(source_lines):
            candidate = _make_chunk(pkg, source_lines, numbered_lines, located, start, end + 1)
            if len(candidate.prompt_text) > limit_chars:
                break
            chunk_pkg = candidate
            end += 1
        if chunk_pkg is None:
            line_no = start + 1
            raise LineTooLong(line_no, len(numbered_lines[start]), limit_chars)
        chunks.append(chunk_pkg)
        start = end
    total = len(chunks)
    return [replace(c, chunk_index=i, chunk_total=total) for i, c in enumerate(chunks)]


def _make_chunk(
    pkg: PromptPackage,
    source_lines: list[str],
    numbered_lines: list[str],
    located: list[tuple[int | None, tuple[str, str]]],
    start: int,
    end: int,
) -> PromptPackage:
    lo, hi = start + 1, end  # 1-based inclusive source line range
    stall_subset = tuple(
        entry for line_no, entry in located if line_no is None or lo <= line_no <= hi
    )
    numbered = "\n".join(numbered_lines[start:end])
    source = "\n".join(source_lines[start:end])
    ids = [i for i, _ in stall_subset]
    ids += [i for i, _ in pkg.counter_lines]
    ids += [i for i, _ in pkg.roofline_lines]
    return PromptPackage(
        prompt_text=_render(numbered, stall_subset, pkg.counter_lines, pkg.roofline_lines, pkg.guardrails),
        embedded_ids=tuple(dict.fromkeys(ids)),
        numbered_source=numbered,
        guardrails=pkg.guardrails,
        source=source,
        app_name=pkg.app_name,
        stall_lines=stall_subset,
        counter_lines=pkg.counter_lines,
        roofline_lines=pkg.roofline_lines,
        evidence_terms=_evidence_terms(stall_subset, pkg.counter_lines),
    )


def _split_evidence(raw: str) -> tuple[str, ...]:
    raw = raw.strip()
    if not raw or raw.lower() == "none":
        return ()
    return tuple(part.strip() for part in raw.split(",") if part.strip())


def parse_response(raw: str) -> OptimizedArtifact:
    """Parse a model response into its code block and claimed edits.

    Exactly one fenced code block must be present. APPLIED entries that do
    not match the grammar are preserved verbatim with no evidence so they
    still count against coverage; they are never silently dropped.
    """
    lines = raw.split("\n")
    fence_rows = [i for i, line in enumerate(lines) if line.lstrip().startswith("```")]
    if len(fence_rows) < 2:
        raise MissingCodeBlock("no complete fenced code block in response")
    if len(fence_rows) > 2:
        raise MultipleCodeBlocks((len(fence_rows) + 1) // 2)
    open_row, close_row = fence_rows
    language = lines[open_row].lstrip().removeprefix("```").strip()
    full_source = "\n".join(lines[open_row + 1 : close_row])

    applied: list[EditRecord] = []
    withheld: list[tuple[str, str]] = []
    seen_ids: set[str] = set()
    section = None
    raw_counter = 0
    for i, line in enumerate(lines):
        if open_row <= i <= close_row:
            continue
        stripped = line.strip()
        if stripped.startswith("### "):
            header = stripped.removeprefix("### ").rstrip(": ").upper()
            section = header if header in ("APPLIED", "WITHHELD", "OPTIMIZED CODE") else None
            continue
        if not stripped.startswith("- "):
            continue
        if section == "APPLIED":
            m = _APPLIED_RE.match(stripped)
            if m:
                edit_id = f"A{m.group(1)}"
                start, end = int(m.group(2)), int(m.group(3))
                if edit_id not in seen_ids and 1 <= start <= end:
                    seen_ids.add(edit_id)
                    applied.append(
                        EditRecord(
                            edit_id=edit_id,
                            line_start=start,
                            line_end=end,
                            transformation=m.group(4).strip(),
                            evidence_ids=_split_evidence(m.group(5)),
                        )
                    )
                    continue
            raw_counter += 1
            applied.append(
                EditRecord(
                    edit_id=f"raw-{raw_counter}",
                    line_start=None,
                    line_end=None,
                    transformation=stripped.removeprefix("- ").strip(),
                    evidence_ids=(),
                    parsed=False,
                )
            )
        elif section == "WITHHELD":
            m = _WITHHELD_RE.match(stripped)
            if m:
                withheld.append((m.group(1).strip(), m.group(2).strip()))
            else:
                withheld.append((stripped.removeprefix("- ").strip(), ""))

    return OptimizedArtifact(
        full_source=full_source,
        language=language,
        applied=tuple(applied),
        withheld=tuple(withheld),
        raw_text=raw,
    )
