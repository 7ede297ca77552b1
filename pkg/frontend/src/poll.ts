/**
 * Status polling. The server pushes nothing; every view refreshes on a
 * fixed 2-second cadence, with overlapping ticks suppressed so a slow
 * response never stacks requests.
 */

export const POLL_INTERVAL_MS = 2000;

export function startPolling(
  tick: () => Promise<void>,
  intervalMs: number = POLL_INTERVAL_MS,
): () => void {
  let inFlight = false;
  let stopped = false;

  const run = async () => {
    if (inFlight || stopped) return;
    inFlight = true;
    try {
      await tick();
    } catch {
      // A failed poll is retried on the next interval; the view keeps
      // showing the last good data rather than flashing an error.
    } finally {
      inFlight = false;
    }
  };

  void run();
  const timer = setInterval(run, intervalMs);
  return () => {
    stopped = true;
    clearInterval(timer);
  };
}
