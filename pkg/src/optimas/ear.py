"""Evidence-aligned reasoning metrics.

These score how honestly a model's claimed edits line up with the
diagnostics it was given: did each edit cite real evidence, did it land
near a hot line, did the cited signals actually move the right way after
optimization, and do the claims match the code diff at all.
"""

from __future__ import annotations

import difflib
from dataclasses import dataclass, field

from .counters import CounterImportance
from .ingest import DiagnosticBundle
from .insights import RooflineSummary, SalientStall
from .prompt import EditRecord, OptimizedArtifact, PromptPackage

NOT_MEASURED = "not-measured"
DEFAULT_WINDOW = 3

FLAG_EMPTY_APPLIED = "empty-applied"
FLAG_NO_HOTSPOTS = "no-hotspots"


@dataclass(frozen=True, slots=True)
class DirectionRule:
    """Expected post-optimization movement for one cited diagnostic.

    Stall rules expect their stalled cycles to drop. Roofline rules are
    emitted only for an underutilized bound resource, which should rise
    toward saturation. Counter rules follow the sign of the selection
    coefficient: a counter that grows with runtime should fall.
    """

    diagnostic_id: str
    kind: str  # "stall" | "roofline" | "counter"
    direction: str  # "decrease" | "increase"
    kernel_name: str = ""
    source_line: int = 0
    stall_type: str = ""
    metric: str = ""  # "rho_compute" | "rho_memory"
    counter_name: str = ""

    def to_dict(self) -> dict:
        return {
            "diagnostic_id": self.diagnostic_id,
            "kind": self.kind,
            "direction": self.direction,
            "kernel_name": self.kernel_name,
            "source_line": self.source_line,
            "stall_type": self.stall_type,
            "metric": self.metric,
            "counter_name": self.counter_name,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DirectionRule":
        return cls(
            diagnostic_id=data["diagnostic_id"],
            kind=data["kind"],
            direction=data["direction"],
            kernel_name=data.get("kernel_name", ""),
            source_line=int(data.get("source_line", 0)),
            stall_type=data.get("stall_type", ""),
            metric=data.get("metric", ""),
            counter_name=data.get("counter_name", ""),
        )


@dataclass(slots=True)
class EARReport:
    evidence_coverage: float
    localization_agreement: float
    directional_consistency: float | str
    implemented: int
    withheld: int
    hallucinated: int
    window: int = DEFAULT_WINDOW
    per_edit: list[dict] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "evidence_coverage": self.evidence_coverage,
            "localization_agreement": self.localization_agreement,
            "directional_consistency": self.directional_consistency,
            "implemented": self.implemented,
            "withheld": self.withheld,
            "hallucinated": self.hallucinated,
            "window": self.window,
            "per_edit": self.per_edit,
            "flags": self.flags,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "EARReport":
        return cls(
            evidence_coverage=data["evidence_coverage"],
            localization_agreement=data["localization_agreement"],
            directional_consistency=data["directional_consistency"],
            implemented=data["implemented"],
            withheld=data["withheld"],
            hallucinated=data["hallucinated"],
            window=data.get("window", DEFAULT_WINDOW),
            per_edit=data.get("per_edit", []),
            flags=data.get("flags", []),
        )


def _edit_covered(edit: EditRecord, embedded: set[str], terms: tuple[str, ...]) -> bool:
    if set(edit.evidence_ids) & embedded:
        return True
    return any(term and term in edit.transformation for term in terms)


def evidence_coverage(artifact: OptimizedArtifact, pkg: PromptPackage) -> float:
    """Fraction of applied edits citing evidence that exists in the prompt.

    An edit counts as covered if any cited ID was embedded in the prompt,
    or (fallback) its description mentions a stall type or counter name
    from the prompt verbatim. No applied edits scores 0.
    """
    if not artifact.applied:
        return 0.0
    embedded = set(pkg.embedded_ids)
    covered = sum(1 for e in artifact.applied if _edit_covered(e, embedded, pkg.evidence_terms))
    return covered / len(artifact.applied)


def _edit_localized(edit: EditRecord, salient_lines: list[int], window: int) -> bool:
    if not edit.parsed or edit.line_start is None or edit.line_end is None:
        return False
    lo, hi = edit.line_start - window, edit.line_end + window
    return any(lo <= line <= hi for line in salient_lines)


def localization_agreement(
    artifact: OptimizedArtifact, salient: list[SalientStall], window: int = DEFAULT_WINDOW
) -> float:
    """Fraction of applied edits landing within `window` lines of a hot line."""
    if not artifact.applied or not salient:
        return 0.0
    lines = [s.source_line for s in salient]
    localized = sum(1 for e in artifact.applied if _edit_localized(e, lines, window))
    return localized / len(artifact.applied)


def build_direction_rules(
    stall_lines: tuple[tuple[str, str], ...],
    salient: list[SalientStall],
    roofline_summaries: list[RooflineSummary],
    importances: list[CounterImportance],
) -> list[DirectionRule]:
    """Derive the expected movement for every diagnostic the prompt carried."""
    rules: list[DirectionRule] = []
    for (pc_id, _), stall in zip(stall_lines, salient):
        rules.append(
            DirectionRule(
                diagnostic_id=pc_id,
                kind="stall",
                direction="decrease",
                kernel_name=stall.kernel_name,
                source_line=stall.source_line,
                stall_type=stall.stall_type,
            )
        )
    for summary in roofline_summaries:
        if summary.bound_type == "memory-bound":
            metric, state = "rho_memory", summary.memory_state
        else:
            metric, state = "rho_compute", summary.compute_state
        if state != "underutilized":
            continue  # a saturated resource has no expected direction
        rules.append(
            DirectionRule(
                diagnostic_id=summary.summary_lines[0][0],
                kind="roofline",
                direction="increase",
                kernel_name=summary.kernel_name,
                metric=metric,
            )
        )
    for imp in importances:
        if imp.coefficient_sign == 0:
            continue
        rules.append(
            DirectionRule(
                diagnostic_id=imp.diagnostic_id,
                kind="counter",
                direction="decrease" if imp.coefficient_sign > 0 else "increase",
                counter_name=imp.counter_name,
            )
        )
    return rules


def _measure(rule: DirectionRule, bundle: DiagnosticBundle) -> float | None:
    if rule.kind == "stall":
        for s in bundle.stalls:
            if (s.kernel_name, s.source_line, s.stall_type) == (
                rule.kernel_name,
                rule.source_line,
                rule.stall_type,
            ):
                return float(s.cycles)
        return None
    if rule.kind == "roofline":
        for r in bundle.roofline:
            if r.kernel_name == rule.kernel_name:
                if rule.metric == "rho_memory":
                    rho = r.achieved_bandwidth / r.peak_bandwidth
                else:
                    rho = r.achieved_compute / r.peak_compute
                return min(max(rho, 0.0), 1.0)
        return None
    if rule.kind == "counter":
        cm = bundle.counters
        if cm is None or rule.counter_name not in cm.counter_names:
            return None
        col = cm.counter_names.index(rule.counter_name)
        return float(cm.values[:, col].mean())
    return None


def directional_consistency(
    pre: DiagnosticBundle,
    post: DiagnosticBundle | None,
    artifact: OptimizedArtifact,
    rules: list[DirectionRule],
) -> float | str:
    """Share of edited kernels whose cited diagnostics moved as expected.

    Requires a post-optimization bundle; without one the result is
    "not-measured". A kernel counts as consistent when a strict majority
    of its cited, measurable diagnostics moved in the expected direction.
    Counter diagnostics are application-wide and vote in every edited
    kernel. A stall absent from the post bundle measures as zero cycles
    (the stall disappeared).
    """
    if post is None:
        return NOT_MEASURED
    rule_by_id = {r.diagnostic_id: r for r in rules}
    cited_by_scope: dict[str, set[str]] = {}
    app_cited: set[str] = set()
    for edit in artifact.applied:
        for ev_id in edit.evidence_ids:
            rule = rule_by_id.get(ev_id)
            if rule is None:
                continue
            if rule.kind == "counter":
                app_cited.add(ev_id)
            else:
                cited_by_scope.setdefault(rule.kernel_name, set()).add(ev_id)
    if cited_by_scope:
        groups = {k: ids | app_cited for k, ids in cited_by_scope.items()}
    elif app_cited:
        groups = {"": set(app_cited)}
    else:
        return NOT_MEASURED

    assessed = consistent = 0
    for ids in groups.values():
        total = expected = 0
        for ev_id in sorted(ids):
            rule = rule_by_id[ev_id]
            pre_value = _measure(rule, pre)
            if pre_value is None:
                continue
            post_value = _measure(rule, post)
            if post_value is None:
                if rule.kind != "stall":
                    continue
                post_value = 0.0
            total += 1
            if rule.direction == "decrease":
                expected += post_value < pre_value
            else:
                expected += post_value > pre_value
        if total == 0:
            continue
        assessed += 1
        consistent += 2 * expected > total
    if assessed == 0:
        return NOT_MEASURED
    return consistent / assessed


def _changed_original_lines(original_source: str, new_source: str) -> set[int]:
    orig_lines = original_source.split("\n")
    new_lines = new_source.split("\n")
    matcher = difflib.SequenceMatcher(None, orig_lines, new_lines, autojunk=False)
    changed: set[int] = set()
    for tag, i1, i2, _, _ in matcher.get_opcodes():
        if tag in ("replace", "delete"):
            changed.update(range(i1 + 1, i2 + 1))
        elif tag == "insert":
            # An insertion touches the original lines on either side of it.
            changed.add(max(1, i1))
            changed.add(min(len(orig_lines), i1 + 1))
    return changed


def _edit_implemented(edit: EditRecord, changed: set[int]) -> bool:
    if not edit.parsed or edit.line_start is None or edit.line_end is None:
        return False
    return any(edit.line_start <= line <= edit.line_end for line in changed)


def edit_accounting(
    artifact: OptimizedArtifact, original_source: str
) -> tuple[int, int, int]:
    """Count (implemented, withheld, hallucinated) claims.

    A claimed edit is implemented when its line range overlaps a region
    the diff says actually changed; a claim over untouched code is a
    hallucination. Withheld entries are taken at face value.
    """
    changed = _changed_original_lines(original_source, artifact.full_source)
    implemented = sum(1 for e in artifact.applied if _edit_implemented(e, changed))
    hallucinated = len(artifact.applied) - implemented
    return implemented, len(artifact.withheld), hallucinated


def compute_ear(
    artifact: OptimizedArtifact,
    pkg: PromptPackage,
    salient: list[SalientStall],
    original_source: str,
    pre_bundle: DiagnosticBundle | None = None,
    post_bundle: DiagnosticBundle | None = None,
    rules: list[DirectionRule] | None = None,
    window: int = DEFAULT_WINDOW,
) -> EARReport:
    """Assemble the full report; directional needs both bundles and rules."""
    flags: list[str] = []
    if not artifact.applied:
        flags.append(FLAG_EMPTY_APPLIED)
    if not salient:
        flags.append(FLAG_NO_HOTSPOTS)
    coverage = evidence_coverage(artifact, pkg)
    localization = localization_agreement(artifact, salient, window)
    if pre_bundle is not None and rules:
        directional = directional_consistency(pre_bundle, post_bundle, artifact, rules)
    else:
        directional = NOT_MEASURED
    implemented, withheld, hallucinated = edit_accounting(artifact, original_source)

    embedded = set(pkg.embedded_ids)
    salient_lines = [s.source_line for s in salient]
    per_edit = [
        {
            "edit_id": e.edit_id,
            "covered": _edit_covered(e, embedded, pkg.evidence_terms),
            "localized": _edit_localized(e, salient_lines, window),
        }
        for e in artifact.applied
    ]
    return EARReport(
        evidence_coverage=coverage,
        localization_agreement=localization,
        directional_consistency=directional,
        implemented=implemented,
        withheld=withheld,
        hallucinated=hallucinated,
        window=window,
        per_edit=per_edit,
        flags=flags,
    )
