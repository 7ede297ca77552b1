"""Turns raw diagnostics into the compact analysis a prompt can carry.

Three reductions happen here: picking the hot kernels that dominate total
runtime, classifying each kernel against its roofline, and boiling a PC
sampling trace down to the few source lines whose stalls matter. Each
rendered line carries a stable diagnostic ID (PC-xx, RL-xx) that later
stages cite as evidence, so the line formats are exact contracts.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import EmptyProfile
from .ingest import KernelProfile, RooflineRaw, StallSample, aggregate_samples

logger = logging.getLogger(__name__)

SNIPPET_MAX_CHARS = 120
STALL_TYPE_MAX_CHARS = 60
SUMMARY_BYTE_BUDGET = 6144
MISSING_SNIPPET = "<line unavailable>"


@dataclass(frozen=True, slots=True)
class KernelSet:
    """The smallest descending-time prefix covering at least alpha of runtime."""

    selected: tuple[KernelProfile, ...]
    coverage_fraction: float
    alpha: float


@dataclass(frozen=True, slots=True)
class RooflineSummary:
    kernel_name: str
    rho_compute: float
    rho_memory: float
    compute_state: str
    memory_state: str
    bound_type: str
    ridge_point: float
    sentence: str
    summary_lines: tuple[tuple[str, str], ...]


@dataclass(frozen=True, slots=True)
class SalientStall:
    """A source line kept by the saliency filter, with its dominant stall."""

    kernel_name: str
    source_line: int
    stall_type: str
    dominant_cycles: int
    line_cycles: int
    dominance_share: float
    kernel_share: float
    snippet: str


def select_hot_kernels(profiles: list[KernelProfile], alpha: float = 0.8) -> KernelSet:
    """Pick the shortest prefix of kernels (by descending time) covering alpha.

    Ties in time break lexicographically by name so selection is
    deterministic. Coverage uses the exact ratio cum/total, so a profile
    sitting exactly on the alpha boundary is accepted.
    """
    if not profiles:
        raise EmptyProfile("no kernels in profile")
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must be in (0, 1], got {alpha}")
    ordered = sorted(profiles, key=lambda p: (-p.time_ns, p.kernel_name))
    total = sum(p.time_ns for p in ordered)
    if total == 0:
        # No time anywhere: shares are undefined, keep the first kernel.
        return KernelSet((ordered[0],), 1.0, alpha)
    selected: list[KernelProfile] = []
    cum = 0
    for p in ordered:
        selected.append(p)
        cum += p.time_ns
        if cum / total >= alpha:
            break
    return KernelSet(tuple(selected), cum / total, alpha)


def classify_roofline(raw: RooflineRaw, tau_sat: float = 0.70, start_index: int = 1) -> RooflineSummary:
    """Classify one kernel's compute and bandwidth utilization.

    rho values are achieved/peak clamped into [0, 1] (a ratio above 1 is a
    measurement artifact and is clamped with a warning). A resource is
    saturated when rho >= tau_sat, otherwise underutilized. The kernel is
    memory-bound when arithmetic intensity falls left of the ridge point.
    """
    def _rho(achieved: float, peak: float, label: str) -> float:
        rho = achieved / peak
        if rho > 1.0:
            logger.warning("%s: %s ratio %.3f exceeds 1, clamping", raw.kernel_name, label, rho)
            rho = 1.0
        return max(rho, 0.0)

    rho_c = _rho(raw.achieved_compute, raw.peak_compute, "compute")
    rho_m = _rho(raw.achieved_bandwidth, raw.peak_bandwidth, "bandwidth")
    compute_state = "saturated" if rho_c >= tau_sat else "underutilized"
    memory_state = "saturated" if rho_m >= tau_sat else "underutilized"
    ridge = raw.peak_compute / raw.peak_bandwidth
    bound = "memory-bound" if raw.arithmetic_intensity < ridge else "compute-bound"
    sentence = (
        f"Compute {compute_state} ({round(rho_c * 100)}%), "
        f"memory bandwidth {memory_state} ({round(rho_m * 100)}%)"
    )
    lines = [(_rl_id(start_index), f"{_rl_id(start_index)}: {raw.kernel_name} — {sentence}")]
    detail = (
        f"{raw.kernel_name} — {bound} (arithmetic intensity {raw.arithmetic_intensity:g} "
        f"ops/byte, ridge point {ridge:g} ops/byte)"
    )
    lines.append((_rl_id(start_index + 1), f"{_rl_id(start_index + 1)}: {detail}"))
    for i, note in enumerate(raw.profiler_notes):
        rl = _rl_id(start_index + 2 + i)
        lines.append((rl, f"{rl}: {raw.kernel_name} — {note}"))
    return RooflineSummary(
        kernel_name=raw.kernel_name,
        rho_compute=rho_c,
        rho_memory=rho_m,
        compute_state=compute_state,
        memory_state=memory_state,
        bound_type=bound,
        ridge_point=ridge,
        sentence=sentence,
        summary_lines=tuple(lines),
    )


def _rl_id(k: int) -> str:
    return f"RL-{k:02d}"


def summarize_rooflines(raws: list[RooflineRaw], tau_sat: float = 0.70) -> list[RooflineSummary]:
    """Classify every kernel, numbering RL IDs sequentially across kernels."""
    summaries = []
    next_index = 1
    for raw in raws:
        summary = classify_roofline(raw, tau_sat, start_index=next_index)
        summaries.append(summary)
        next_index += len(summary.summary_lines)
    return summaries


def aggregate_stalls(samples: Iterable[StallSample]) -> dict[tuple[str, int, str], int]:
    """Sum stalled cycles per (kernel, line, stall_type), streaming."""
    return aggregate_samples(samples)


def filter_salient(
    aggregated: Mapping[tuple[str, int, str], int],
    sources: Mapping[str, str] | str | None = None,
    tau_saliency: float = 0.30,
    top_n: int = 10,
) -> list[SalientStall]:
    """Keep lines where one stall type dominates, ranked by stalled cycles.

    A line is retained when its dominant stall accounts for at least
    tau_saliency of that line's stalled cycles. The dominant stall on a
    tie is the lexicographically first type. Results are ordered by line
    cycles descending (ties by kernel then line) and truncated to top_n.
    """
    if not 0 <= tau_saliency <= 1:
        raise ValueError(f"tau_saliency must be in [0, 1], got {tau_saliency}")
    per_line: dict[tuple[str, int], dict[str, int]] = {}
    kernel_totals: dict[str, int] = {}
    for (kernel, line, stype), cycles in aggregated.items():
        per_line.setdefault((kernel, line), {})[stype] = cycles
        kernel_totals[kernel] = kernel_totals.get(kernel, 0) + cycles

    retained: list[SalientStall] = []
    for (kernel, line), by_type in per_line.items():
        line_cycles = sum(by_type.values())
        if line_cycles <= 0:
            continue
        stype, cycles = min(by_type.items(), key=lambda kv: (-kv[1], kv[0]))
        share = cycles / line_cycles
        if share < tau_saliency:
            continue
        retained.append(
            SalientStall(
                kernel_name=kernel,
                source_line=line,
                stall_type=stype,
                dominant_cycles=cycles,
                line_cycles=line_cycles,
                dominance_share=share,
                kernel_share=cycles / kernel_totals[kernel],
                snippet=_snippet(sources, kernel, line),
            )
        )
    retained.sort(key=lambda s: (-s.line_cycles, s.kernel_name, s.source_line))
    return retained[:top_n]


def _snippet(sources: Mapping[str, str] | str | None, kernel: str, line: int) -> str:
    if sources is None:
        return MISSING_SNIPPET
    text = sources if isinstance(sources, str) else sources.get(kernel)
    if text is None:
        return MISSING_SNIPPET
    lines = text.split("\n")
    if not 1 <= line <= len(lines):
        return MISSING_SNIPPET
    return lines[line - 1].strip()[:SNIPPET_MAX_CHARS]


def render_stall_summary(salient: list[SalientStall]) -> list[tuple[str, str]]:
    """Render salient stalls as cited summary lines within a fixed byte budget.

    Line format (exact):
    PC-<k>: line <n> `<snippet>` — <stall_type>: <share%> of line stalls,
    <kernel_share%> of kernel stalls. The joined summary never exceeds
    SUMMARY_BYTE_BUDGET bytes; lines past the budget are dropped from the
    bottom of the ranking.
    """
    lines: list[tuple[str, str]] = []
    used = 0
    for k, stall in enumerate(salient, start=1):
        pc = f"PC-{k:02d}"
        stype = stall.stall_type[:STALL_TYPE_MAX_CHARS]
        text = (
            f"{pc}: line {stall.source_line} `{stall.snippet}` — "
            f"{stype}: {round(stall.dominance_share * 100)}% of line stalls, "
            f"{round(stall.kernel_share * 100)}% of kernel stalls"
        )
        cost = len(text.encode("utf-8")) + (1 if lines else 0)
        if used + cost > SUMMARY_BYTE_BUDGET:
            logger.warning("stall summary truncated at %d of %d lines (byte budget)", len(lines), len(salient))
            break
        lines.append((pc, text))
        used += cost
    return lines
