/**
 * Payload shapes of the pipeline HTTP API, mirrored field-for-field.
 *
 * The dashboard never derives metrics of its own: everything rendered
 * comes out of these records verbatim, so the interfaces here are the
 * whole contract between the UI and the server.
 */

/** Terminal pipeline statuses, as persisted in a run manifest. */
export type RunStatus =
  | 'improved'
  | 'no-gain'
  | 'invalid-output'
  | 'compile-failed'
  | 'runtime-error';

/** Statuses of runs the server has accepted but not yet persisted. */
export type PendingStatus = 'submitted' | 'failed';

/** One row of GET /runs. Pending rows carry no created_at/app yet. */
export interface RunSummary {
  run_id: string;
  status: RunStatus | PendingStatus;
  created_at?: string;
  app?: string;
  /** Present only on pending rows that failed before persisting. */
  error?: string;
}

/** GET /runs/{id}: the manifest plus the persisted improvement figure. */
export interface RunDetail {
  run_id: string;
  run_uuid: string;
  created_at: string;
  status: RunStatus;
  /** artifact path -> sha256; the keys enumerate the run's artifacts. */
  digests: Record<string, string>;
  config_snapshot: ConfigBody;
  improvement_percent: number | null;
}

/** Pending body returned from GET /runs/{id} before the run lands. */
export interface PendingDetail {
  run_id: string;
  status: PendingStatus;
  error?: string;
}

/** GET /runs/{id}/ear and POST /runs/{id}/reprofile response. */
export interface EarReport {
  evidence_coverage: number;
  localization_agreement: number;
  /** 'not-measured' until a post-optimization profile is supplied. */
  directional_consistency: number | 'not-measured';
  implemented: number;
  withheld: number;
  hallucinated: number;
  window: number;
  per_edit: PerEditScore[];
  flags: string[];
}

export interface PerEditScore {
  edit_id: string;
  covered: boolean;
  localized: boolean;
}

/** One hunk of GET /runs/{id}/diff, baseline-relative. */
export interface DiffHunk {
  header: string;
  old_start: number;
  old_count: number;
  lines: string[];
  /** Diagnostic ids cited by applied edits overlapping this hunk. */
  evidence_ids: string[];
}

/** An applied-edit claim recovered from the model response. */
export interface AppliedEdit {
  edit_id: string;
  line_start: number | null;
  line_end: number | null;
  transformation: string;
  evidence_ids: string[];
  parsed: boolean;
}

export interface DiffPayload {
  hunks: DiffHunk[];
  /** diagnostic id -> the evidence line it stands for. */
  id_map: Record<string, string>;
  applied_edits: AppliedEdit[];
}

/** A salient stall row of the persisted analysis.json artifact. */
export interface SalientStall {
  kernel_name: string;
  source_line: number;
  stall_type: string;
  dominance_share: number;
  kernel_share: number;
  line_cycles: number;
}

/** The slice of analysis.json the diff inspector overlays. */
export interface AnalysisArtifact {
  selected_kernels: string[];
  coverage_fraction: number;
  alpha: number;
  salient: SalientStall[];
  id_map: Record<string, string>;
  improvement_percent?: number | null;
}

/** POST /runs acknowledgement (202). */
export interface SubmitAck {
  run_id: string;
  status: PendingStatus;
}

/**
 * POST /runs body: the pipeline config mapping, exactly as the YAML
 * loader accepts it. Optional keys omitted fall back to server defaults.
 */
export interface ConfigBody {
  app: {
    name: string;
    source: string;
    kernel_sources?: Record<string, string>;
    hw?: string;
    sw?: string;
  };
  sources: {
    kernels: string;
    pcsamples?: string;
    counters?: string;
    roofline?: string;
    counter_dictionary?: string;
    enabled?: { pc: boolean; ia: boolean; roofline: boolean };
  };
  thresholds?: {
    alpha?: number;
    tau_sat?: number;
    tau_saliency?: number;
    top_n?: number;
    kappa?: number;
    tau_pool?: number;
    ensembles?: number;
    seed?: number;
    epsilon_stop?: number;
  };
  llm: {
    kind: 'remote-http' | 'local-server' | 'scripted-mock';
    model: string;
    temperature?: number;
    endpoint?: string;
    auth_env?: string;
    timeout_s?: number;
    max_output_tokens?: number;
    in_flight_limit?: number;
    fixture_dir?: string;
    prompt_char_limit?: number;
  };
  eval: {
    compile_cmd: string;
    exec_cmd: string;
    args?: string;
    runs?: number;
    reference_capture?: string;
    max_compile_retries?: number;
    reference_files?: string[];
    source_name?: string;
    compile_cmd_profiled?: string;
  };
  ear?: {
    window?: number;
    rules?: Record<string, unknown>[];
  };
  output_root: string;
  corpus_root?: string;
}
