/**
 * Run-launcher form state and its translation into a POST /runs body.
 *
 * Every pipeline config field is bound here. Numeric inputs stay strings
 * until submission; blank optional fields are omitted so server defaults
 * apply, and non-numeric text is sent as-is so the server's schema
 * message ("must be a number, got ...") comes back for inline display.
 */

import { ConfigBody } from './types.js';

export type LlmKind = ConfigBody['llm']['kind'];

export const LLM_KINDS: LlmKind[] = [
  'remote-http',
  'local-server',
  'scripted-mock',
];

export interface LauncherState {
  appName: string;
  appSource: string;
  appHw: string;
  appSw: string;
  /** One 'kernel: path' override per line. */
  kernelSources: string;

  kernels: string;
  pcsamples: string;
  counters: string;
  roofline: string;
  counterDictionary: string;
  pcEnabled: boolean;
  iaEnabled: boolean;
  rooflineEnabled: boolean;

  alpha: string;
  tauSat: string;
  tauSaliency: string;
  topN: string;
  kappa: string;
  tauPool: string;
  ensembles: string;
  seed: string;
  epsilonStop: string;

  llmKind: LlmKind;
  llmModel: string;
  temperature: string;
  endpoint: string;
  authEnv: string;
  timeoutS: string;
  maxOutputTokens: string;
  inFlightLimit: string;
  fixtureDir: string;
  promptCharLimit: string;

  compileCmd: string;
  execCmd: string;
  evalArgs: string;
  runs: string;
  referenceCapture: string;
  maxCompileRetries: string;
  /** Whitespace- or comma-separated reference output names. */
  referenceFiles: string;
  sourceName: string;
  compileCmdProfiled: string;

  earWindow: string;
  /** JSON list of direction-rule overrides; blank for none. */
  earRules: string;

  outputRoot: string;
  corpusRoot: string;
}

export function defaultLauncherState(): LauncherState {
  return {
    appName: '',
    appSource: '',
    appHw: '',
    appSw: '',
    kernelSources: '',
    kernels: '',
    pcsamples: '',
    counters: '',
    roofline: '',
    counterDictionary: '',
    pcEnabled: true,
    iaEnabled: true,
    rooflineEnabled: true,
    alpha: '',
    tauSat: '',
    tauSaliency: '',
    topN: '',
    kappa: '',
    tauPool: '',
    ensembles: '',
    seed: '',
    epsilonStop: '',
    llmKind: 'scripted-mock',
    llmModel: '',
    temperature: '',
    endpoint: '',
    authEnv: '',
    timeoutS: '',
    maxOutputTokens: '',
    inFlightLimit: '',
    fixtureDir: '',
    promptCharLimit: '',
    compileCmd: '',
    execCmd: '',
    evalArgs: '',
    runs: '',
    referenceCapture: '',
    maxCompileRetries: '',
    referenceFiles: '',
    sourceName: '',
    compileCmdProfiled: '',
    earWindow: '',
    earRules: '',
    outputRoot: 'runs',
    corpusRoot: '',
  };
}

/** Number when the text parses, otherwise the raw text for the server
 * to reject with its own message. */
function num(text: string): number {
  const value = Number(text);
  return Number.isFinite(value) ? value : (text as unknown as number);
}

function setIf<T extends object, K extends keyof T>(
  target: T,
  key: K,
  text: string,
  parse: (text: string) => T[K],
): void {
  if (text.trim() !== '') target[key] = parse(text.trim());
}

function parseKernelSources(text: string): Record<string, string> {
  const map: Record<string, string> = {};
  for (const line of text.split('\n')) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    const sep = trimmed.indexOf(':');
    if (sep < 0) throw new Error(`kernel source override needs 'kernel: path', got '${trimmed}'`);
    map[trimmed.slice(0, sep).trim()] = trimmed.slice(sep + 1).trim();
  }
  return map;
}

function parseRules(text: string): Record<string, unknown>[] {
  let parsed: unknown;
  try {
    parsed = JSON.parse(text);
  } catch {
    throw new Error('EAR rules must be a JSON list');
  }
  if (!Array.isArray(parsed)) throw new Error('EAR rules must be a JSON list');
  return parsed as Record<string, unknown>[];
}

/**
 * Assemble the POST body from the form. Only form-mechanics errors
 * (unparseable kernel map / rules JSON) throw here; everything about
 * config validity is the server's call.
 */
export function buildConfigBody(state: LauncherState): ConfigBody {
  const body: ConfigBody = {
    app: { name: state.appName.trim(), source: state.appSource.trim() },
    sources: {
      kernels: state.kernels.trim(),
      enabled: {
        pc: state.pcEnabled,
        ia: state.iaEnabled,
        roofline: state.rooflineEnabled,
      },
    },
    llm: { kind: state.llmKind, model: state.llmModel.trim() },
    eval: {
      compile_cmd: state.compileCmd.trim(),
      exec_cmd: state.execCmd.trim(),
    },
    output_root: state.outputRoot.trim(),
  };

  setIf(body.app, 'hw', state.appHw, (t) => t);
  setIf(body.app, 'sw', state.appSw, (t) => t);
  if (state.kernelSources.trim()) {
    body.app.kernel_sources = parseKernelSources(state.kernelSources);
  }

  setIf(body.sources, 'pcsamples', state.pcsamples, (t) => t);
  setIf(body.sources, 'counters', state.counters, (t) => t);
  setIf(body.sources, 'roofline', state.roofline, (t) => t);
  setIf(body.sources, 'counter_dictionary', state.counterDictionary, (t) => t);

  const thresholds: NonNullable<ConfigBody['thresholds']> = {};
  setIf(thresholds, 'alpha', state.alpha, num);
  setIf(thresholds, 'tau_sat', state.tauSat, num);
  setIf(thresholds, 'tau_saliency', state.tauSaliency, num);
  setIf(thresholds, 'top_n', state.topN, num);
  setIf(thresholds, 'kappa', state.kappa, num);
  setIf(thresholds, 'tau_pool', state.tauPool, num);
  setIf(thresholds, 'ensembles', state.ensembles, num);
  setIf(thresholds, 'seed', state.seed, num);
  setIf(thresholds, 'epsilon_stop', state.epsilonStop, num);
  if (Object.keys(thresholds).length) body.thresholds = thresholds;

  setIf(body.llm, 'temperature', state.temperature, num);
  setIf(body.llm, 'endpoint', state.endpoint, (t) => t);
  setIf(body.llm, 'auth_env', state.authEnv, (t) => t);
  setIf(body.llm, 'timeout_s', state.timeoutS, num);
  setIf(body.llm, 'max_output_tokens', state.maxOutputTokens, num);
  setIf(body.llm, 'in_flight_limit', state.inFlightLimit, num);
  setIf(body.llm, 'fixture_dir', state.fixtureDir, (t) => t);
  setIf(body.llm, 'prompt_char_limit', state.promptCharLimit, num);

  setIf(body.eval, 'args', state.evalArgs, (t) => t);
  setIf(body.eval, 'runs', state.runs, num);
  setIf(body.eval, 'reference_capture', state.referenceCapture, (t) => t);
  setIf(body.eval, 'max_compile_retries', state.maxCompileRetries, num);
  if (state.referenceFiles.trim()) {
    body.eval.reference_files = state.referenceFiles
      .split(/[\s,]+/)
      .filter(Boolean);
  }
  setIf(body.eval, 'source_name', state.sourceName, (t) => t);
  setIf(body.eval, 'compile_cmd_profiled', state.compileCmdProfiled, (t) => t);

  const ear: NonNullable<ConfigBody['ear']> = {};
  setIf(ear, 'window', state.earWindow, num);
  if (state.earRules.trim()) ear.rules = parseRules(state.earRules);
  if (Object.keys(ear).length) body.ear = ear;

  setIf(body as { corpus_root?: string }, 'corpus_root', state.corpusRoot, (t) => t);
  return body;
}

/** The message to show inline under the form. */
export function errorMessage(err: unknown): string {
  if (err instanceof Error) return err.message;
  return String(err);
}
