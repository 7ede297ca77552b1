/**
 * HTML renderers. Every view is a pure string function over server
 * records (plus form state), so the whole surface is testable without a
 * DOM; app.ts only assigns the results to innerHTML and wires events.
 */

import { DiffViewModel, EvidenceBadge, HunkView } from './diff.js';
import {
  escapeHtml,
  formatFraction,
  formatImprovement,
  formatTimestamp,
  shortId,
} from './format.js';
import { LauncherState, LLM_KINDS } from './launcher.js';
import { EarReport, RunDetail, RunSummary } from './types.js';

export function statusBadge(status: string): string {
  return `<span class="badge badge-${escapeHtml(status)}">${escapeHtml(status)}</span>`;
}

function evidenceBadge(badge: EvidenceBadge): string {
  return `<span class="badge badge-evidence" title="${escapeHtml(badge.hover)}">${escapeHtml(badge.id)}</span>`;
}

export function noEvidenceBadge(): string {
  return '<span class="badge badge-none">no evidence</span>';
}

export function renderRunsTable(rows: RunSummary[]): string {
  if (!rows.length) {
    return '<p class="empty">No runs yet. <a href="#/new">Launch one</a>.</p>';
  }
  const body = rows
    .map((row) => {
      const link = `<a class="run-link" href="#/runs/${escapeHtml(row.run_id)}">${escapeHtml(shortId(row.run_id))}</a>`;
      const note = row.error ? `<div class="row-error">${escapeHtml(row.error)}</div>` : '';
      return (
        '<tr>' +
        `<td class="mono">${link}</td>` +
        `<td>${escapeHtml(row.app ?? '—')}</td>` +
        `<td>${statusBadge(row.status)}${note}</td>` +
        `<td class="muted">${escapeHtml(formatTimestamp(row.created_at))}</td>` +
        '</tr>'
      );
    })
    .join('\n');
  return `<table class="runs">
<thead><tr><th>run</th><th>app</th><th>status</th><th>created</th></tr></thead>
<tbody>
${body}
</tbody>
</table>`;
}

export function renderRunHeader(detail: RunDetail, ear: EarReport | null): string {
  const snapshot = detail.config_snapshot;
  const fields = [
    ['app', snapshot.app?.name ?? '—'],
    ['llm', snapshot.llm?.model ?? '—'],
    ['improvement', formatImprovement(detail.improvement_percent)],
    ['created', formatTimestamp(detail.created_at)],
    [
      'EAR',
      ear
        ? `${formatFraction(ear.evidence_coverage)} / ${formatFraction(ear.localization_agreement)} / ${formatFraction(ear.directional_consistency)}`
        : '—',
    ],
  ]
    .map(
      ([label, value]) =>
        `<div class="field"><div class="label">${label}</div><div class="value">${escapeHtml(value)}</div></div>`,
    )
    .join('\n');
  return `<div class="card header-card">
<div class="title-row"><h2 class="mono">${escapeHtml(detail.run_id)}</h2>${statusBadge(detail.status)}</div>
<div class="field-grid">
${fields}
</div>
</div>`;
}

export function renderEarPanel(ear: EarReport | null, reprofileNote = ''): string {
  const note = reprofileNote
    ? `<div class="reprofile-note">${escapeHtml(reprofileNote)}</div>`
    : '';
  const form = `<form id="reprofile-form" class="inline-form">
<input name="post_dir" placeholder="post-optimization profile dir" required>
<button type="submit">Re-profile</button>
</form>${note}`;

  if (!ear) {
    return `<div class="card"><h3>Evidence-aligned scores</h3><p class="empty">No EAR report for this run.</p>${form}</div>`;
  }

  const directional = formatFraction(ear.directional_consistency);
  const directionalClass =
    ear.directional_consistency === 'not-measured' ? 'metric-value pending' : 'metric-value';
  const flags = ear.flags.length
    ? `<ul class="flags">${ear.flags.map((f) => `<li>${escapeHtml(f)}</li>`).join('')}</ul>`
    : '';
  const perEdit = ear.per_edit
    .map(
      (p) =>
        `<tr><td class="mono">${escapeHtml(p.edit_id)}</td><td>${p.covered ? 'cited' : 'uncited'}</td><td>${p.localized ? 'on a hot line' : 'elsewhere'}</td></tr>`,
    )
    .join('\n');
  const perEditTable = ear.per_edit.length
    ? `<table class="per-edit"><thead><tr><th>edit</th><th>evidence</th><th>locality</th></tr></thead><tbody>${perEdit}</tbody></table>`
    : '';

  return `<div class="card">
<h3>Evidence-aligned scores</h3>
<div class="metric-grid">
<div class="metric"><div class="metric-value">${formatFraction(ear.evidence_coverage)}</div><div class="metric-label">evidence coverage</div></div>
<div class="metric"><div class="metric-value">${formatFraction(ear.localization_agreement)}</div><div class="metric-label">localization agreement</div></div>
<div class="metric"><div class="${directionalClass}" id="directional-value">${escapeHtml(directional)}</div><div class="metric-label">directional consistency</div></div>
</div>
<p class="muted">${ear.implemented} implemented · ${ear.withheld} withheld · ${ear.hallucinated} hallucinated · window ±${ear.window}</p>
${perEditTable}
${flags}
${form}
</div>`;
}

function renderHunk(hunk: HunkView): string {
  const badges = hunk.noEvidence
    ? noEvidenceBadge()
    : hunk.badges.map(evidenceBadge).join(' ');
  const lines = hunk.lines
    .map((line) => {
      const classes = `line ${line.kind}${line.salient ? ' salient' : ''}`;
      const marker = line.salient ? '<span class="salient-dot" title="flagged hot line">●</span>' : '';
      return `<div class="${classes}">${marker}${escapeHtml(line.text)}</div>`;
    })
    .join('\n');
  return `<div class="hunk">
<div class="hunk-head"><span class="mono muted">${escapeHtml(hunk.header)}</span> ${badges}</div>
<pre class="hunk-body">
${lines}
</pre>
</div>`;
}

export function renderDiffInspector(vm: DiffViewModel | null): string {
  if (!vm) {
    return '<div class="card"><h3>Optimized diff</h3><p class="empty">No diff available for this run.</p></div>';
  }
  const hunks = vm.hunks.length
    ? vm.hunks.map(renderHunk).join('\n')
    : '<p class="empty">Baseline and optimized sources are identical.</p>';
  const edits = vm.edits
    .map((view) => {
      const badges = view.badges.length
        ? view.badges.map(evidenceBadge).join(' ')
        : noEvidenceBadge();
      const span =
        view.edit.line_start != null && view.edit.line_end != null
          ? `L${view.edit.line_start}–${view.edit.line_end}`
          : 'unparsed range';
      const verdict = view.score
        ? `${view.score.covered ? 'cited' : 'uncited'} · ${view.score.localized ? 'on a hot line' : 'elsewhere'}`
        : '—';
      return (
        '<tr>' +
        `<td class="mono">${escapeHtml(view.edit.edit_id)}</td>` +
        `<td>${escapeHtml(view.edit.transformation)}</td>` +
        `<td class="mono">${escapeHtml(span)}</td>` +
        `<td>${badges}</td>` +
        `<td class="muted">${escapeHtml(verdict)}</td>` +
        '</tr>'
      );
    })
    .join('\n');
  const editTable = vm.edits.length
    ? `<h4>Applied edits</h4>
<table class="edits"><thead><tr><th>edit</th><th>transformation</th><th>lines</th><th>evidence</th><th>EAR verdict</th></tr></thead>
<tbody>${edits}</tbody></table>`
    : '';
  return `<div class="card">
<h3>Optimized diff</h3>
${hunks}
${editTable}
</div>`;
}

export function renderArtifactList(detail: RunDetail): string {
  const names = Object.keys(detail.digests).sort();
  const items = names
    .map(
      (name) =>
        `<li><a class="mono" href="/runs/${escapeHtml(detail.run_id)}/artifacts/${escapeHtml(name)}" target="_blank">${escapeHtml(name)}</a></li>`,
    )
    .join('\n');
  return `<div class="card"><h3>Artifacts</h3><ul class="artifacts">${items}</ul></div>`;
}

export function renderPendingDetail(runId: string, status: string, error?: string): string {
  const note = error ? `<p class="row-error">${escapeHtml(error)}</p>` : '<p class="muted">Waiting for the pipeline…</p>';
  return `<div class="card header-card">
<div class="title-row"><h2 class="mono">${escapeHtml(runId)}</h2>${statusBadge(status)}</div>
${note}
</div>`;
}

function input(
  label: string,
  name: keyof LauncherState,
  value: string,
  placeholder = '',
): string {
  return `<label class="form-field"><span>${label}</span><input name="${name}" value="${escapeHtml(value)}" placeholder="${escapeHtml(placeholder)}"></label>`;
}

function checkbox(label: string, name: keyof LauncherState, checked: boolean): string {
  return `<label class="form-check"><input type="checkbox" name="${name}"${checked ? ' checked' : ''}> ${label}</label>`;
}

function textarea(label: string, name: keyof LauncherState, value: string, placeholder = ''): string {
  return `<label class="form-field wide"><span>${label}</span><textarea name="${name}" rows="2" placeholder="${escapeHtml(placeholder)}">${escapeHtml(value)}</textarea></label>`;
}

/**
 * The full config form. Field names mirror LauncherState so readLauncherForm
 * can round-trip the DOM back into state; blanks defer to server defaults.
 */
export function renderLauncherForm(state: LauncherState, error = '', submitting = false): string {
  const kinds = LLM_KINDS.map(
    (kind) =>
      `<option value="${kind}"${kind === state.llmKind ? ' selected' : ''}>${kind}</option>`,
  ).join('');
  const errorBox = error ? `<div class="form-error" id="launch-error">${escapeHtml(error)}</div>` : '';
  return `<form id="launch-form" class="card launch">
<h3>Launch a run</h3>
<p class="muted">Paths resolve on the server against its config directory; blank fields use server defaults.</p>

<h4>Application</h4>
<div class="form-grid">
${input('name', 'appName', state.appName, 'miniapp')}
${input('source file', 'appSource', state.appSource, 'app.src')}
${input('hardware tag', 'appHw', state.appHw)}
${input('software tag', 'appSw', state.appSw)}
${textarea('per-kernel source overrides', 'kernelSources', state.kernelSources, 'kernel_alpha: alpha.src')}
</div>

<h4>Diagnostic sources</h4>
<div class="form-grid">
${input('kernel times CSV', 'kernels', state.kernels, 'profile/kernels.csv')}
${input('PC samples CSV', 'pcsamples', state.pcsamples)}
${input('counters CSV', 'counters', state.counters)}
${input('roofline JSON', 'roofline', state.roofline)}
${input('counter dictionary', 'counterDictionary', state.counterDictionary)}
</div>
<div class="form-checks">
${checkbox('stall samples (PC)', 'pcEnabled', state.pcEnabled)}
${checkbox('counter importance (IA)', 'iaEnabled', state.iaEnabled)}
${checkbox('roofline (RL)', 'rooflineEnabled', state.rooflineEnabled)}
</div>

<h4>Analysis thresholds</h4>
<div class="form-grid">
${input('alpha (hotspot coverage)', 'alpha', state.alpha, '0.8')}
${input('tau_sat (roofline saturation)', 'tauSat', state.tauSat, '0.7')}
${input('tau_saliency (stall dominance)', 'tauSaliency', state.tauSaliency, '0.3')}
${input('top_n stalls', 'topN', state.topN, '10')}
${input('kappa (counters kept)', 'kappa', state.kappa, '5')}
${input('tau_pool (candidate pool)', 'tauPool', state.tauPool, '5')}
${input('ensembles', 'ensembles', state.ensembles, '10')}
${input('seed', 'seed', state.seed, '0')}
${input('epsilon_stop', 'epsilonStop', state.epsilonStop, '1e-10')}
</div>

<h4>Model backend</h4>
<div class="form-grid">
<label class="form-field"><span>kind</span><select name="llmKind">${kinds}</select></label>
${input('model', 'llmModel', state.llmModel, 'mock-model')}
${input('temperature', 'temperature', state.temperature, '0.15')}
${input('endpoint', 'endpoint', state.endpoint, 'http://… (remote/local kinds)')}
${input('auth env var', 'authEnv', state.authEnv)}
${input('timeout (s)', 'timeoutS', state.timeoutS, '120')}
${input('max output tokens', 'maxOutputTokens', state.maxOutputTokens, '4096')}
${input('in-flight limit', 'inFlightLimit', state.inFlightLimit, '2')}
${input('fixture dir (scripted-mock)', 'fixtureDir', state.fixtureDir, 'fixtures')}
${input('prompt char limit', 'promptCharLimit', state.promptCharLimit, '0 = unchunked')}
</div>

<h4>Build &amp; measure</h4>
<div class="form-grid">
${input('compile command', 'compileCmd', state.compileCmd, './compiler {src} {bin}')}
${input('exec command', 'execCmd', state.execCmd, '{bin}')}
${input('exec args', 'evalArgs', state.evalArgs)}
${input('timing runs', 'runs', state.runs, '5')}
${input('reference capture', 'referenceCapture', state.referenceCapture, 'auto')}
${input('max compile retries', 'maxCompileRetries', state.maxCompileRetries, '3')}
${input('reference files', 'referenceFiles', state.referenceFiles, 'out.txt, checksums.txt')}
${input('candidate source name', 'sourceName', state.sourceName, 'candidate.src')}
${input('profiled compile command', 'compileCmdProfiled', state.compileCmdProfiled)}
</div>

<h4>Scoring &amp; output</h4>
<div class="form-grid">
${input('EAR window (± lines)', 'earWindow', state.earWindow, '3')}
${textarea('direction-rule overrides (JSON list)', 'earRules', state.earRules, '[{"diagnostic_id": "PC-01", "kind": "stall", "direction": "decrease"}]')}
${input('output root', 'outputRoot', state.outputRoot, 'runs')}
${input('corpus root', 'corpusRoot', state.corpusRoot, 'defaults to <output root>/corpus')}
</div>

${errorBox}
<button type="submit"${submitting ? ' disabled' : ''}>${submitting ? 'Submitting…' : 'Launch'}</button>
</form>`;
}
