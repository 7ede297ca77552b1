import { describe, expect, it } from 'vitest';

import { parseRoute } from '../src/app.js';
import { buildDiffViewModel } from '../src/diff.js';
import { defaultLauncherState } from '../src/launcher.js';
import {
  renderDiffInspector,
  renderEarPanel,
  renderLauncherForm,
  renderRunHeader,
  renderRunsTable,
  statusBadge,
} from '../src/views.js';
import { EarReport, RunDetail, RunSummary } from '../src/types.js';

function summary(overrides: Partial<RunSummary> = {}): RunSummary {
  return {
    run_id: 'c0ffee00-dead-beef-0000-000000000000',
    status: 'improved',
    created_at: '2026-08-14T10:30:00.123456',
    app: 'miniapp',
    ...overrides,
  };
}

function detail(): RunDetail {
  return {
    run_id: 'c0ffee00-dead-beef-0000-000000000000',
    run_uuid: 'c0ffee00-dead-beef-0000-000000000000',
    created_at: '2026-08-14T10:30:00',
    status: 'improved',
    digests: { 'optimized.src': 'abc', 'analysis.json': 'def' },
    config_snapshot: {
      app: { name: 'miniapp', source: '/x/miniapp.src' },
      sources: { kernels: '/x/kernels.csv' },
      llm: { kind: 'scripted-mock', model: 'mock-model' },
      eval: { compile_cmd: 'cc', exec_cmd: 'run' },
      output_root: '/x/runs',
    },
    improvement_percent: 33.87,
  };
}

function earReport(overrides: Partial<EarReport> = {}): EarReport {
  return {
    evidence_coverage: 0.667,
    localization_agreement: 0.667,
    directional_consistency: 'not-measured',
    implemented: 2,
    withheld: 1,
    hallucinated: 0,
    window: 3,
    per_edit: [{ edit_id: 'edit-1', covered: true, localized: true }],
    flags: [],
    ...overrides,
  };
}

describe('renderRunsTable', () => {
  it('badges each status with its own class', () => {
    const html = renderRunsTable([
      summary(),
      summary({ run_id: 'r2', status: 'no-gain' }),
      summary({ run_id: 'r3', status: 'submitted', created_at: undefined, app: undefined }),
    ]);
    expect(html).toContain('badge-improved');
    expect(html).toContain('badge-no-gain');
    expect(html).toContain('badge-submitted');
    expect(html).toContain('#/runs/c0ffee00-dead-beef-0000-000000000000');
    expect(html).toContain('>c0ffee00<');
  });

  it('shows the failure reason on a dead pending row', () => {
    const html = renderRunsTable([
      summary({ status: 'failed', error: 'ingest: cannot read: kernels.csv' }),
    ]);
    expect(html).toContain('badge-failed');
    expect(html).toContain('ingest: cannot read: kernels.csv');
  });

  it('points an empty corpus at the launcher', () => {
    expect(renderRunsTable([])).toContain('#/new');
  });
});

describe('renderRunHeader', () => {
  it('shows the server record verbatim: app, llm, improvement, timestamps', () => {
    const html = renderRunHeader(detail(), earReport());
    expect(html).toContain('miniapp');
    expect(html).toContain('mock-model');
    expect(html).toContain('+33.87%');
    expect(html).toContain('2026-08-14 10:30:00');
    expect(html).toContain('badge-improved');
    // EAR fractions come straight off the report.
    expect(html).toContain('0.667 / 0.667 / not-measured');
  });
});

describe('renderEarPanel', () => {
  it('renders the unmeasured directional state distinctly', () => {
    const html = renderEarPanel(earReport());
    expect(html).toContain('not-measured');
    expect(html).toContain('metric-value pending');
    expect(html).toContain('id="reprofile-form"');
  });

  it('renders a measured directional fraction', () => {
    const html = renderEarPanel(earReport({ directional_consistency: 1.0 }));
    expect(html).toContain('1.000');
    expect(html).not.toContain('not-measured');
  });

  it('keeps the reprofile form available when no report exists', () => {
    const html = renderEarPanel(null);
    expect(html).toContain('No EAR report');
    expect(html).toContain('id="reprofile-form"');
  });

  it('lists scoring flags', () => {
    const html = renderEarPanel(earReport({ flags: ['uncited edit edit-2'] }));
    expect(html).toContain('uncited edit edit-2');
  });
});

describe('renderDiffInspector', () => {
  const vm = buildDiffViewModel(
    {
      hunks: [
        {
          header: '@@ -1,2 +1,2 @@',
          old_start: 1,
          old_count: 2,
          lines: ['-a', '+b', ' c'],
          evidence_ids: ['PC-01'],
        },
        {
          header: '@@ -9,1 +9,1 @@',
          old_start: 9,
          old_count: 1,
          lines: ['-x', '+y'],
          evidence_ids: [],
        },
      ],
      id_map: { 'PC-01': 'Stall LG_THROTTLE at miniapp.src:1' },
      applied_edits: [
        {
          edit_id: 'edit-1',
          line_start: 1,
          line_end: 1,
          transformation: 'unroll',
          evidence_ids: ['PC-01'],
          parsed: true,
        },
      ],
    },
    earReport(),
    {
      selected_kernels: [],
      coverage_fraction: 1,
      alpha: 0.8,
      salient: [
        {
          kernel_name: 'k',
          source_line: 1,
          stall_type: 'LG_THROTTLE',
          dominance_share: 0.9,
          kernel_share: 0.5,
          line_cycles: 10,
        },
      ],
      id_map: {},
    },
  );

  it('badges a cited hunk with hover text from id_map', () => {
    const html = renderDiffInspector(vm);
    expect(html).toContain('badge-evidence');
    expect(html).toContain('title="Stall LG_THROTTLE at miniapp.src:1"');
    expect(html).toContain('>PC-01<');
  });

  it('marks the uncited hunk with a no-evidence badge', () => {
    const html = renderDiffInspector(vm);
    expect(html).toContain('badge-none');
    expect(html).toContain('no evidence');
  });

  it('overlays the salient baseline line', () => {
    const html = renderDiffInspector(vm);
    expect(html).toContain('line del salient');
    expect(html).toContain('salient-dot');
  });

  it('renders the empty state when the run produced no diff', () => {
    expect(renderDiffInspector(null)).toContain('No diff available');
  });
});

describe('renderLauncherForm', () => {
  it('binds every launcher field by name', () => {
    const state = defaultLauncherState();
    const html = renderLauncherForm(state);
    for (const key of Object.keys(state)) {
      expect(html, `missing form binding for ${key}`).toContain(`name="${key}"`);
    }
  });

  it('reflects the source-enable toggles', () => {
    const state = { ...defaultLauncherState(), iaEnabled: false };
    const html = renderLauncherForm(state);
    expect(html).toMatch(/name="pcEnabled" checked/);
    expect(html).toMatch(/name="iaEnabled">/);
    expect(html).toMatch(/name="rooflineEnabled" checked/);
  });

  it('surfaces a server validation message inline', () => {
    const html = renderLauncherForm(
      defaultLauncherState(),
      "config key 'thresholds.alpha': must be <= 1.0, got 1.5",
    );
    expect(html).toContain('id="launch-error"');
    expect(html).toContain('thresholds.alpha');
    expect(html).toContain('must be &lt;= 1.0');
  });

  it('disables the submit button while a launch is in flight', () => {
    const html = renderLauncherForm(defaultLauncherState(), '', true);
    expect(html).toContain('disabled');
    expect(html).toContain('Submitting');
  });
});

describe('statusBadge', () => {
  it('escapes hostile status strings', () => {
    expect(statusBadge('<img>')).not.toContain('<img>');
  });
});

describe('parseRoute', () => {
  it('routes the empty hash to the list', () => {
    expect(parseRoute('')).toEqual({ view: 'list' });
    expect(parseRoute('#/')).toEqual({ view: 'list' });
  });

  it('routes the launcher', () => {
    expect(parseRoute('#/new')).toEqual({ view: 'new' });
  });

  it('routes run detail with the id intact', () => {
    expect(parseRoute('#/runs/abc-123')).toEqual({ view: 'run', runId: 'abc-123' });
  });

  it('falls back to the list on junk', () => {
    expect(parseRoute('#/nonsense/deep')).toEqual({ view: 'list' });
  });
});
