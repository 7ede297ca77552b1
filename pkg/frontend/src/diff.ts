/**
 * View-model for the diff inspector: joins the diff payload with the EAR
 * report and the persisted analysis into render-ready rows. Badges and
 * hover text come straight from the server's evidence_ids and id_map;
 * coverage/localization verdicts are the server's per_edit flags, never
 * recomputed here.
 */

import {
  AnalysisArtifact,
  AppliedEdit,
  DiffPayload,
  EarReport,
  PerEditScore,
} from './types.js';

export interface EvidenceBadge {
  id: string;
  /** Evidence line from id_map; a cited id the map lacks still badges. */
  hover: string;
}

export type DiffLineKind = 'add' | 'del' | 'ctx';

export interface DiffLineView {
  text: string;
  kind: DiffLineKind;
  /** Baseline line number; null for added lines. */
  oldLine: number | null;
  /** True when the baseline line is one the stall analysis flagged. */
  salient: boolean;
}

export interface HunkView {
  header: string;
  badges: EvidenceBadge[];
  noEvidence: boolean;
  lines: DiffLineView[];
}

export interface EditView {
  edit: AppliedEdit;
  badges: EvidenceBadge[];
  /** Server verdicts; null when the run has no EAR report yet. */
  score: PerEditScore | null;
}

export interface DiffViewModel {
  hunks: HunkView[];
  edits: EditView[];
}

export function evidenceBadges(
  ids: string[],
  idMap: Record<string, string>,
): EvidenceBadge[] {
  return ids.map((id) => ({ id, hover: idMap[id] ?? id }));
}

function lineKind(text: string): DiffLineKind {
  if (text.startsWith('+')) return 'add';
  if (text.startsWith('-')) return 'del';
  return 'ctx';
}

function hunkLines(
  rawLines: string[],
  oldStart: number,
  salientLines: Set<number>,
): DiffLineView[] {
  let oldLine = oldStart;
  return rawLines.map((text) => {
    const kind = lineKind(text);
    const numbered = kind !== 'add' ? oldLine++ : null;
    return {
      text,
      kind,
      oldLine: numbered,
      salient: numbered !== null && salientLines.has(numbered),
    };
  });
}

export function buildDiffViewModel(
  diff: DiffPayload,
  ear: EarReport | null,
  analysis: AnalysisArtifact | null,
): DiffViewModel {
  const salientLines = new Set(
    (analysis?.salient ?? []).map((s) => s.source_line),
  );
  const scores = new Map<string, PerEditScore>(
    (ear?.per_edit ?? []).map((p) => [p.edit_id, p]),
  );

  return {
    hunks: diff.hunks.map((hunk) => ({
      header: hunk.header,
      badges: evidenceBadges(hunk.evidence_ids, diff.id_map),
      noEvidence: hunk.evidence_ids.length === 0,
      lines: hunkLines(hunk.lines, hunk.old_start, salientLines),
    })),
    edits: diff.applied_edits.map((edit) => ({
      edit,
      badges: evidenceBadges(edit.evidence_ids, diff.id_map),
      score: scores.get(edit.edit_id) ?? null,
    })),
  };
}
