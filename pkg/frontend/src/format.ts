/**
 * Display formatting for server values. Nothing here computes a metric:
 * numbers arrive final from the API and are only shaped for the page.
 */

export function escapeHtml(value: unknown): string {
  if (value == null) return '';
  return String(value)
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

/** improvement_percent -> '+33.87%' / '-4.47%' / '—' when absent. */
export function formatImprovement(value: number | null | undefined): string {
  if (value == null) return '—';
  const sign = value > 0 ? '+' : '';
  return `${sign}${value.toFixed(2)}%`;
}

/** EAR fractions render to three places; 'not-measured' passes through. */
export function formatFraction(value: number | 'not-measured'): string {
  if (value === 'not-measured') return 'not-measured';
  return value.toFixed(3);
}

/** ISO timestamps from the server, shown without the fractional tail. */
export function formatTimestamp(iso: string | undefined): string {
  if (!iso) return '—';
  return iso.replace('T', ' ').replace(/\.\d+.*$/, '');
}

export function shortId(runId: string): string {
  return runId.length > 8 ? runId.slice(0, 8) : runId;
}

/** Statuses after which a run stops changing and polling can relax. */
export function isTerminal(status: string): boolean {
  return status !== 'submitted';
}
