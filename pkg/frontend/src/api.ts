/**
 * Typed client for the pipeline HTTP API. One factory per server so the
 * e2e suite can point it at an ephemeral port; the app binds it to the
 * origin the page was served from.
 */

import {
  AnalysisArtifact,
  ConfigBody,
  DiffPayload,
  EarReport,
  PendingDetail,
  RunDetail,
  RunSummary,
  SubmitAck,
} from './types.js';

/** Non-2xx response, carrying the server's detail string verbatim. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(detail);
    this.name = 'ApiError';
  }
}

async function parseDetail(response: Response): Promise<string> {
  const text = await response.text();
  try {
    const body = JSON.parse(text);
    if (typeof body?.detail === 'string') return body.detail;
  } catch {
    // fall through to the raw body
  }
  return text || `HTTP ${response.status}`;
}

export interface ApiClient {
  listRuns(): Promise<RunSummary[]>;
  getRun(runId: string): Promise<RunDetail | PendingDetail>;
  getEar(runId: string): Promise<EarReport | null>;
  getDiff(runId: string): Promise<DiffPayload>;
  getAnalysis(runId: string): Promise<AnalysisArtifact | null>;
  getArtifactText(runId: string, name: string): Promise<string>;
  submitRun(config: ConfigBody): Promise<SubmitAck>;
  reprofile(runId: string, postDir: string): Promise<EarReport>;
  artifactUrl(runId: string, name: string): string;
}

export function createClient(baseUrl: string): ApiClient {
  const base = baseUrl.replace(/\/+$/, '');

  async function request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(base + path, init);
    if (!response.ok) {
      throw new ApiError(response.status, await parseDetail(response));
    }
    return (await response.json()) as T;
  }

  return {
    listRuns: () => request<RunSummary[]>('/runs'),

    getRun: (runId) => request<RunDetail | PendingDetail>(`/runs/${runId}`),

    // 404 here means "no EAR report for this run", a normal state for
    // runs that failed before scoring; surface it as null, not an error.
    async getEar(runId) {
      try {
        return await request<EarReport>(`/runs/${runId}/ear`);
      } catch (err) {
        if (err instanceof ApiError && err.status === 404) return null;
        throw err;
      }
    },

    getDiff: (runId) => request<DiffPayload>(`/runs/${runId}/diff`),

    async getAnalysis(runId) {
      try {
        return await request<AnalysisArtifact>(
          `/runs/${runId}/artifacts/analysis.json`,
        );
      } catch (err) {
        if (err instanceof ApiError && err.status === 404) return null;
        throw err;
      }
    },

    async getArtifactText(runId, name) {
      const response = await fetch(`${base}/runs/${runId}/artifacts/${name}`);
      if (!response.ok) {
        throw new ApiError(response.status, await parseDetail(response));
      }
      return response.text();
    },

    submitRun: (config) =>
      request<SubmitAck>('/runs', {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify(config),
      }),

    reprofile: (runId, postDir) =>
      request<EarReport>(`/runs/${runId}/reprofile`, {
        method: 'POST',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ post_dir: postDir }),
      }),

    artifactUrl: (runId, name) => `${base}/runs/${runId}/artifacts/${name}`,
  };
}
