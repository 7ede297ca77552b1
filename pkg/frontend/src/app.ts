/**
 * SPA entry point: a hash router over three views (run list, launcher,
 * run detail) plus the event wiring the pure renderers cannot carry.
 * All data flows through the typed API client; nothing is computed here.
 */

import { ApiClient, createClient } from './api.js';
import { buildDiffViewModel } from './diff.js';
import {
  buildConfigBody,
  defaultLauncherState,
  errorMessage,
  LauncherState,
  LlmKind,
} from './launcher.js';
import { startPolling } from './poll.js';
import {
  renderArtifactList,
  renderDiffInspector,
  renderEarPanel,
  renderLauncherForm,
  renderPendingDetail,
  renderRunHeader,
  renderRunsTable,
} from './views.js';
import { RunDetail } from './types.js';

export type Route =
  | { view: 'list' }
  | { view: 'new' }
  | { view: 'run'; runId: string };

export function parseRoute(hash: string): Route {
  const path = hash.replace(/^#/, '');
  if (path === '/new') return { view: 'new' };
  const match = path.match(/^\/runs\/([^/]+)$/);
  if (match) return { view: 'run', runId: match[1] };
  return { view: 'list' };
}

/** Pull LauncherState back out of the form; names match the state keys. */
function readLauncherForm(form: HTMLFormElement): LauncherState {
  const state = defaultLauncherState();
  for (const key of Object.keys(state) as (keyof LauncherState)[]) {
    const field = form.elements.namedItem(key);
    if (!field) continue;
    if (field instanceof HTMLInputElement && field.type === 'checkbox') {
      (state[key] as boolean) = field.checked;
    } else if (
      field instanceof HTMLInputElement ||
      field instanceof HTMLTextAreaElement
    ) {
      (state[key] as string) = field.value;
    } else if (field instanceof HTMLSelectElement) {
      (state[key] as LlmKind) = field.value as LlmKind;
    }
  }
  return state;
}

function bootstrap(root: HTMLElement): void {
  const client: ApiClient = createClient('');
  let launcherState = defaultLauncherState();
  let reprofileNote = '';
  let lastRendered = '';
  let stopPolling: (() => void) | null = null;

  // Re-rendering replaces form inputs, so only touch innerHTML when the
  // markup actually changed (polled data is usually identical).
  function draw(html: string): void {
    if (html === lastRendered) return;
    lastRendered = html;
    root.innerHTML = html;
    wireEvents();
  }

  async function drawList(): Promise<void> {
    const rows = await client.listRuns();
    draw(
      `<div class="toolbar"><h2>Runs</h2><a class="button" href="#/new">New run</a></div>` +
        renderRunsTable(rows),
    );
  }

  function drawLauncher(error = '', submitting = false): void {
    draw(renderLauncherForm(launcherState, error, submitting));
  }

  async function drawRun(runId: string): Promise<void> {
    const detail = await client.getRun(runId);
    if (!('digests' in detail)) {
      draw(renderPendingDetail(runId, detail.status, detail.error));
      return;
    }
    const full = detail as RunDetail;
    const [ear, analysis] = await Promise.all([
      client.getEar(runId),
      client.getAnalysis(runId),
    ]);
    let vm = null;
    try {
      vm = buildDiffViewModel(await client.getDiff(runId), ear, analysis);
    } catch {
      // Runs that failed before producing an optimized source have no
      // diff; the inspector renders its empty state.
    }
    draw(
      renderRunHeader(full, ear) +
        renderEarPanel(ear, reprofileNote) +
        renderDiffInspector(vm) +
        renderArtifactList(full),
    );
  }

  async function refresh(): Promise<void> {
    const route = parseRoute(location.hash);
    if (route.view === 'list') await drawList();
    else if (route.view === 'run') await drawRun(route.runId);
  }

  function wireEvents(): void {
    const launchForm = root.querySelector<HTMLFormElement>('#launch-form');
    if (launchForm) {
      launchForm.addEventListener('submit', (event) => {
        event.preventDefault();
        launcherState = readLauncherForm(launchForm);
        void submitLaunch();
      });
    }
    const reprofileForm = root.querySelector<HTMLFormElement>('#reprofile-form');
    if (reprofileForm) {
      reprofileForm.addEventListener('submit', (event) => {
        event.preventDefault();
        const postDir = (
          reprofileForm.elements.namedItem('post_dir') as HTMLInputElement
        ).value;
        void submitReprofile(postDir);
      });
    }
  }

  async function submitLaunch(): Promise<void> {
    let body;
    try {
      body = buildConfigBody(launcherState);
    } catch (err) {
      drawLauncher(errorMessage(err));
      return;
    }
    drawLauncher('', true);
    try {
      const ack = await client.submitRun(body);
      launcherState = defaultLauncherState();
      location.hash = `#/runs/${ack.run_id}`;
    } catch (err) {
      drawLauncher(errorMessage(err));
    }
  }

  async function submitReprofile(postDir: string): Promise<void> {
    const route = parseRoute(location.hash);
    if (route.view !== 'run') return;
    try {
      const report = await client.reprofile(route.runId, postDir);
      reprofileNote = `directional consistency: ${report.directional_consistency}`;
    } catch (err) {
      reprofileNote = errorMessage(err);
    }
    lastRendered = '';
    await drawRun(route.runId);
  }

  function onRouteChange(): void {
    const route = parseRoute(location.hash);
    reprofileNote = '';
    lastRendered = '';
    if (stopPolling) stopPolling();
    stopPolling = null;
    if (route.view === 'new') {
      drawLauncher();
      return;
    }
    // List and detail views poll; 'run' keeps polling past terminal
    // status so a reprofiled EAR report shows up without a reload.
    stopPolling = startPolling(refresh);
  }

  window.addEventListener('hashchange', onRouteChange);
  onRouteChange();
}

const mount = typeof document !== 'undefined' ? document.getElementById('app') : null;
if (mount) bootstrap(mount);
