"""Prompt assembly, chunking, and response parsing.

tests/fixtures/golden_prompt.txt is the frozen rendering of GOLDEN_*
below; any layout drift in the prompt document fails byte-for-byte.
"""

from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from optimas.errors import LineTooLong, MissingCodeBlock, MultipleCodeBlocks, NoDiagnostics
from optimas.prompt import (
    FIXED_GUARDRAILS,
    NO_DATA_MARKER,
    build_prompt,
    chunk_prompt,
    number_source,
    parse_response,
    strip_numbering,
)

FIXTURES = Path(__file__).parent / "fixtures"

GOLDEN_SOURCE = """def kernel_alpha(n):
    acc = 0.0
    for i in range(n):
        acc += (i % 7) * 0.5
    return acc

print(kernel_alpha(4000))"""

GOLDEN_STALLS = (
    ("PC-01", "PC-01: line 4 `acc += (i % 7) * 0.5` — stall_wait: 94% of line stalls, 69% of kernel stalls"),
    ("PC-02", "PC-02: line 3 `for i in range(n):` — stall_dispatch: 61% of line stalls, 12% of kernel stalls"),
)
GOLDEN_COUNTERS = (
    ("IA-01", "IA-01: dram__bytes_write — DRAM write volume (impact 1.00)"),
    ("IA-02", "IA-02: smsp__warps_eligible — eligible warps per cycle (impact 0.312)"),
)
GOLDEN_ROOFLINE = (
    ("RL-01", "RL-01: kernel_alpha — Compute underutilized (62%), memory bandwidth saturated (91%)"),
    ("RL-02", "RL-02: kernel_alpha — memory-bound: arithmetic intensity 0.50 ops/byte vs ridge 12.00 ops/byte"),
)


def golden_package():
    return build_prompt(
        GOLDEN_SOURCE,
        GOLDEN_STALLS,
        GOLDEN_COUNTERS,
        GOLDEN_ROOFLINE,
        extra_guardrails=("Do not change the output format.",),
        app_name="golden",
    )


# --- numbering ---


def test_numbering_layout():
    assert number_source("a\n\nb") == "   1| a\n   2| \n   3| b"
    assert number_source("") == ""


@given(st.text())
def test_numbering_round_trips(source):
    assert strip_numbering(number_source(source)) == source


def test_strip_removes_only_the_added_prefix():
    assert strip_numbering(number_source("  12| tricky")) == "  12| tricky"


# --- document assembly ---


def test_golden_prompt_is_byte_exact():
    frozen = (FIXTURES / "golden_prompt.txt").read_text(encoding="utf-8")
    assert golden_package().prompt_text == frozen


def test_embedded_ids_and_evidence_terms():
    pkg = golden_package()
    assert pkg.embedded_ids == ("PC-01", "PC-02", "IA-01", "IA-02", "RL-01", "RL-02")
    assert pkg.evidence_terms == (
        "stall_wait",
        "stall_dispatch",
        "dram__bytes_write",
        "smsp__warps_eligible",
    )


def test_empty_sections_carry_the_marker():
    pkg = build_prompt("x = 1", stall_lines=GOLDEN_STALLS)
    text = pkg.prompt_text
    assert text.count(NO_DATA_MARKER) == 2
    assert f"### IMPORTANT HARDWARE COUNTERS:\n{NO_DATA_MARKER}" in text
    assert f"### ROOFLINE ANALYSIS:\n{NO_DATA_MARKER}" in text


def test_no_sections_at_all_is_refused():
    with pytest.raises(NoDiagnostics):
        build_prompt("x = 1")


def test_extra_guardrails_are_appended_and_deduplicated():
    pkg = build_prompt(
        "x = 1",
        stall_lines=GOLDEN_STALLS,
        extra_guardrails=(FIXED_GUARDRAILS[0], "Keep the CLI flags stable."),
    )
    assert pkg.guardrails == FIXED_GUARDRAILS + ("Keep the CLI flags stable.",)
    n = len(FIXED_GUARDRAILS)
    assert f"{n + 1}. Keep the CLI flags stable." in pkg.prompt_text
    assert pkg.prompt_text.count(FIXED_GUARDRAILS[0]) == 1


# --- chunking ---


def _chunky_package():
    source = "\n".join(f"row_{i:03d} = compute_{i:03d}()" for i in range(1, 41))
    stalls = (
        ("PC-01", "PC-01: line 2 `row_002 = compute_002()` — stall_wait: 90% of line stalls, 40% of kernel stalls"),
        ("PC-02", "PC-02: line 39 `row_039 = compute_039()` — stall_math: 80% of line stalls, 30% of kernel stalls"),
        ("PC-03", "PC-03: aggregate spill traffic across the kernel"),
    )
    return build_prompt(source, stalls, GOLDEN_COUNTERS, GOLDEN_ROOFLINE)


def test_small_prompt_is_a_single_chunk():
    pkg = golden_package()
    chunks = chunk_prompt(pkg, limit_chars=len(pkg.prompt_text))
    assert len(chunks) == 1
    assert chunks[0].prompt_text == pkg.prompt_text
    assert (chunks[0].chunk_index, chunks[0].chunk_total) == (0, 1)


def test_chunks_partition_source_and_restrict_stalls():
    pkg = _chunky_package()
    limit = len(pkg.prompt_text) - 300
    chunks = chunk_prompt(pkg, limit)
    assert len(chunks) >= 2
    assert all(len(c.prompt_text) <= limit for c in chunks)
    assert [c.chunk_index for c in chunks] == list(range(len(chunks)))
    assert all(c.chunk_total == len(chunks) for c in chunks)
    # Sources reassemble exactly and keep original numbering.
    assert "\n".join(c.source for c in chunks) == pkg.source
    second_first_line = len(chunks[0].source.split("\n")) + 1
    assert chunks[1].numbered_source.startswith(f"{second_first_line:4d}| ")
    for c in chunks:
        lo = pkg.source.split("\n").index(c.source.split("\n")[0]) + 1
        hi = lo + len(c.source.split("\n")) - 1
        located = [sid for sid, _ in c.stall_lines if sid != "PC-03"]
        assert located == [
            sid for sid, line in (("PC-01", 2), ("PC-02", 39)) if lo <= line <= hi
        ]
        # Unlocatable stalls and app-wide sections ride along everywhere.
        assert "PC-03" in [sid for sid, _ in c.stall_lines]
        assert "IA-01: dram__bytes_write" in c.prompt_text
        assert "RL-01: kernel_alpha" in c.prompt_text


def test_one_giant_line_cannot_fit():
    pkg = build_prompt("x = " + "y" * 5000, stall_lines=GOLDEN_STALLS)
    with pytest.raises(LineTooLong) as exc:
        chunk_prompt(pkg, limit_chars=2000)
    assert exc.value.line_no == 1
    assert exc.value.length == len(pkg.numbered_source)
    assert exc.value.limit == 2000
    with pytest.raises(ValueError):
        chunk_prompt(pkg, limit_chars=0)


# --- response parsing ---

GOOD_RESPONSE = """### OPTIMIZED CODE
```python
def kernel_alpha(n):
    return sum((i % 7) * 0.5 for i in range(n))
```
### APPLIED
- [A1] lines 3-4 | replaced the loop with a generator reduction | evidence: PC-01, IA-01
- [A2] lines 1-1 | kept the signature untouched | evidence: none
### WITHHELD
- vectorize with numpy | reason: adds a dependency
- unroll the modulo
"""


def test_parses_code_edits_and_withheld():
    art = parse_response(GOOD_RESPONSE)
    assert art.language == "python"
    assert art.full_source == "def kernel_alpha(n):\n    return sum((i % 7) * 0.5 for i in range(n))"
    a1, a2 = art.applied
    assert (a1.edit_id, a1.line_start, a1.line_end, a1.parsed) == ("A1", 3, 4, True)
    assert a1.evidence_ids == ("PC-01", "IA-01")
    assert a2.evidence_ids == ()  # literal "none"
    assert art.withheld == (
        ("vectorize with numpy", "adds a dependency"),
        ("unroll the modulo", ""),
    )
    assert art.raw_text == GOOD_RESPONSE


def test_missing_or_extra_code_blocks():
    with pytest.raises(MissingCodeBlock):
        parse_response("### APPLIED\n- [A1] lines 1-1 | x | evidence: none")
    with pytest.raises(MissingCodeBlock):
        parse_response("```python\nunterminated")
    with pytest.raises(MultipleCodeBlocks) as exc:
        parse_response("```\na\n```\ntext\n```\nb\n```")
    assert exc.value.count == 2


def test_malformed_applied_entries_are_kept_raw():
    raw = """```c
int main() { return 0; }
```
### APPLIED
- [A1] lines 5-3 | inverted range | evidence: PC-01
- [A1] lines 1-2 | fine | evidence: PC-01
- [A1] lines 6-7 | duplicate id | evidence: PC-02
- totally freeform claim
"""
    art = parse_response(raw)
    assert [(e.edit_id, e.parsed) for e in art.applied] == [
        ("raw-1", False),
        ("A1", True),
        ("raw-2", False),
        ("raw-3", False),
    ]
    assert art.applied[0].transformation == "[A1] lines 5-3 | inverted range | evidence: PC-01"
    assert art.applied[0].line_start is None and art.applied[0].evidence_ids == ()
    assert art.applied[3].transformation == "totally freeform claim"
    assert art.language == "c"


def test_bullets_outside_known_sections_are_ignored():
    raw = """- stray note
```python
pass
```
### NOTES
- not an edit
### APPLIED
- [A1] lines 1-1 | real | evidence: RL-01
"""
    art = parse_response(raw)
    assert [e.edit_id for e in art.applied] == ["A1"]
    assert art.withheld == ()
