"""Pipeline configuration.

One YAML file drives a whole run: what app to optimize, which diagnostic
sources to ingest (and which of the three to actually feed the model),
analysis thresholds, the model backend, and how to build and time the
candidates. Paths are resolved relative to the config file so a config
travels with its data.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import SchemaViolation
from .gateway import BACKEND_KINDS, BackendConfig


@dataclass(slots=True)
class AppConfig:
    name: str
    source: str
    kernel_sources: dict[str, str] = field(default_factory=dict)
    hw: str = ""
    sw: str = ""


@dataclass(slots=True)
class SourcesConfig:
    kernels: str = ""
    pcsamples: str = ""
    counters: str = ""
    roofline: str = ""
    counter_dictionary: str = ""
    pc_enabled: bool = True
    ia_enabled: bool = True
    roofline_enabled: bool = True


@dataclass(slots=True)
class Thresholds:
    alpha: float = 0.8
    tau_sat: float = 0.70
    tau_saliency: float = 0.30
    top_n: int = 10
    kappa: int = 5
    tau_pool: int = 5
    ensembles: int = 10
    seed: int = 0
    epsilon_stop: float = 1e-10


@dataclass(slots=True)
class EvalConfig:
    compile_cmd: str = ""
    exec_cmd: str = ""
    args: str = ""
    runs: int = 5
    reference_capture: str = "auto"
    max_compile_retries: int = 3
    reference_files: list = field(default_factory=list)
    source_name: str = "candidate.src"
    # Profiling builds may need extra flags (e.g. -lineinfo) that distort
    # timing; candidates are always built with compile_cmd.
    compile_cmd_profiled: str = ""


@dataclass(slots=True)
class EarConfig:
    window: int = 3
    # Direction-rule overrides: entries shaped like DirectionRule.to_dict().
    # A rule whose diagnostic_id matches a derived rule replaces it;
    # otherwise it is added.
    rules: list = field(default_factory=list)


@dataclass(slots=True)
class PipelineConfig:
    app: AppConfig
    sources: SourcesConfig
    thresholds: Thresholds
    llm: BackendConfig
    eval: EvalConfig
    ear: EarConfig
    output_root: str
    corpus_root: str = ""
    prompt_char_limit: int = 0

    def to_dict(self) -> dict:
        """Snapshot in the same block shape the loader accepts.

        A manifest's config_snapshot can be fed back through
        config_from_dict unchanged (paths are already resolved).
        """
        return {
            "app": asdict(self.app),
            "sources": {
                "kernels": self.sources.kernels,
                "pcsamples": self.sources.pcsamples,
                "counters": self.sources.counters,
                "roofline": self.sources.roofline,
                "counter_dictionary": self.sources.counter_dictionary,
                "enabled": {
                    "pc": self.sources.pc_enabled,
                    "ia": self.sources.ia_enabled,
                    "roofline": self.sources.roofline_enabled,
                },
            },
            "thresholds": asdict(self.thresholds),
            "llm": {
                "kind": self.llm.backend_kind,
                "model": self.llm.model_name,
                "temperature": self.llm.temperature,
                "endpoint": self.llm.endpoint,
                "auth_env": self.llm.auth_env_var,
                "timeout_s": self.llm.request_timeout_s,
                "max_output_tokens": self.llm.max_output_tokens,
                "in_flight_limit": self.llm.in_flight_limit,
                "fixture_dir": self.llm.fixture_dir,
                "prompt_char_limit": self.prompt_char_limit,
            },
            "eval": asdict(self.eval),
            "ear": asdict(self.ear),
            "output_root": self.output_root,
            "corpus_root": self.corpus_root,
        }


def _block(raw: dict, name: str, allowed: set[str]) -> dict:
    block = raw.get(name) or {}
    if not isinstance(block, dict):
        raise SchemaViolation(name, "must be a mapping")
    for key in block:
        if key not in allowed:
            raise SchemaViolation(f"{name}.{key}", "unknown key")
    return block


def _require(block: dict, block_name: str, key: str) -> object:
    value = block.get(key)
    if value in (None, ""):
        raise SchemaViolation(f"{block_name}.{key}", "required")
    return value


def _number(block: dict, block_name: str, key: str, default, lo=None, hi=None):
    value = block.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation(f"{block_name}.{key}", f"must be a number, got {value!r}")
    if lo is not None and value < lo:
        raise SchemaViolation(f"{block_name}.{key}", f"must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise SchemaViolation(f"{block_name}.{key}", f"must be <= {hi}, got {value}")
    return value


def _resolve(base: Path, value: str) -> str:
    if not value:
        return ""
    path = Path(value)
    return str(path if path.is_absolute() else base / path)


def load_config(path: str | Path) -> PipelineConfig:
    """Load and validate a pipeline config; paths resolve against the file."""
    path = Path(path)
    raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    return config_from_dict(raw, path.parent)


def config_from_dict(raw: object, base: str | Path = ".") -> PipelineConfig:
    """Validate an already-parsed config mapping (API bodies, snapshots)."""
    if not isinstance(raw, dict):
        raise SchemaViolation("<root>", "config must be a mapping")
    base = Path(base)
    for key in raw:
        if key not in {"app", "sources", "thresholds", "llm", "eval", "ear", "output_root", "corpus_root"}:
            raise SchemaViolation(key, "unknown top-level key")

    app_raw = _block(raw, "app", {"name", "source", "kernel_sources", "hw", "sw"})
    app = AppConfig(
        name=str(_require(app_raw, "app", "name")),
        source=_resolve(base, str(_require(app_raw, "app", "source"))),
        kernel_sources={
            k: _resolve(base, v) for k, v in (app_raw.get("kernel_sources") or {}).items()
        },
        hw=app_raw.get("hw", ""),
        sw=app_raw.get("sw", ""),
    )

    src_raw = _block(
        raw,
        "sources",
        {"kernels", "pcsamples", "counters", "roofline", "counter_dictionary", "enabled"},
    )
    enabled = src_raw.get("enabled") or {}
    if not isinstance(enabled, dict):
        raise SchemaViolation("sources.enabled", "must be a mapping")
    for key in enabled:
        if key not in {"pc", "ia", "roofline"}:
            raise SchemaViolation(f"sources.enabled.{key}", "unknown key")
    sources = SourcesConfig(
        kernels=_resolve(base, str(_require(src_raw, "sources", "kernels"))),
        pcsamples=_resolve(base, src_raw.get("pcsamples", "")),
        counters=_resolve(base, src_raw.get("counters", "")),
        roofline=_resolve(base, src_raw.get("roofline", "")),
        counter_dictionary=_resolve(base, src_raw.get("counter_dictionary", "")),
        pc_enabled=bool(enabled.get("pc", True)),
        ia_enabled=bool(enabled.get("ia", True)),
        roofline_enabled=bool(enabled.get("roofline", True)),
    )
    if not (sources.pc_enabled or sources.ia_enabled or sources.roofline_enabled):
        raise SchemaViolation("sources.enabled", "at least one diagnostic source must be enabled")
    if sources.pc_enabled and not sources.pcsamples:
        raise SchemaViolation("sources.pcsamples", "required when enabled.pc is true")
    if sources.ia_enabled and not sources.counters:
        raise SchemaViolation("sources.counters", "required when enabled.ia is true")
    if sources.roofline_enabled and not sources.roofline:
        raise SchemaViolation("sources.roofline", "required when enabled.roofline is true")

    thr_raw = _block(
        raw,
        "thresholds",
        {"alpha", "tau_sat", "tau_saliency", "top_n", "kappa", "tau_pool", "ensembles", "seed", "epsilon_stop"},
    )
    alpha = _number(thr_raw, "thresholds", "alpha", 0.8, hi=1.0)
    if alpha <= 0:
        raise SchemaViolation("thresholds.alpha", f"must be in (0, 1], got {alpha}")
    thresholds = Thresholds(
        alpha=float(alpha),
        tau_sat=float(_number(thr_raw, "thresholds", "tau_sat", 0.70, lo=0.0, hi=1.0)),
        tau_saliency=float(_number(thr_raw, "thresholds", "tau_saliency", 0.30, lo=0.0, hi=1.0)),
        top_n=int(_number(thr_raw, "thresholds", "top_n", 10, lo=1)),
        kappa=int(_number(thr_raw, "thresholds", "kappa", 5, lo=1)),
        tau_pool=int(_number(thr_raw, "thresholds", "tau_pool", 5, lo=1)),
        ensembles=int(_number(thr_raw, "thresholds", "ensembles", 10, lo=1)),
        seed=int(_number(thr_raw, "thresholds", "seed", 0)),
        epsilon_stop=float(_number(thr_raw, "thresholds", "epsilon_stop", 1e-10, lo=0.0)),
    )

    llm_raw = _block(
        raw,
        "llm",
        {"kind", "model", "temperature", "endpoint", "auth_env", "timeout_s",
         "max_output_tokens", "in_flight_limit", "fixture_dir", "prompt_char_limit"},
    )
    kind = str(_require(llm_raw, "llm", "kind"))
    if kind not in BACKEND_KINDS:
        raise SchemaViolation("llm.kind", f"must be one of {BACKEND_KINDS}, got {kind!r}")
    try:
        llm = BackendConfig(
            backend_kind=kind,
            model_name=str(_require(llm_raw, "llm", "model")),
            temperature=float(_number(llm_raw, "llm", "temperature", 0.15, lo=0.0)),
            max_output_tokens=int(_number(llm_raw, "llm", "max_output_tokens", 4096, lo=1)),
            endpoint=str(llm_raw.get("endpoint", "")),
            auth_env_var=str(llm_raw.get("auth_env", "")),
            request_timeout_s=float(_number(llm_raw, "llm", "timeout_s", 120.0, lo=0.0)),
            fixture_dir=_resolve(base, str(llm_raw.get("fixture_dir", ""))),
            in_flight_limit=int(_number(llm_raw, "llm", "in_flight_limit", 2, lo=1)),
        )
    except ValueError as exc:
        raise SchemaViolation("llm", str(exc)) from None

    eval_raw = _block(
        raw,
        "eval",
        {"compile_cmd", "exec_cmd", "args", "runs", "reference_capture",
         "max_compile_retries", "reference_files", "source_name", "compile_cmd_profiled"},
    )
    reference_capture = eval_raw.get("reference_capture", "auto")
    if reference_capture != "auto":
        reference_capture = _resolve(base, str(reference_capture))
    eval_cfg = EvalConfig(
        compile_cmd=str(_require(eval_raw, "eval", "compile_cmd")),
        exec_cmd=str(_require(eval_raw, "eval", "exec_cmd")),
        args=str(eval_raw.get("args", "")),
        runs=int(_number(eval_raw, "eval", "runs", 5, lo=1)),
        reference_capture=reference_capture,
        max_compile_retries=int(_number(eval_raw, "eval", "max_compile_retries", 3, lo=0)),
        reference_files=list(eval_raw.get("reference_files", [])),
        source_name=str(eval_raw.get("source_name", "candidate.src")),
        compile_cmd_profiled=str(eval_raw.get("compile_cmd_profiled", "")),
    )

    ear_raw = _block(raw, "ear", {"window", "rules"})
    ear_rules = ear_raw.get("rules") or []
    if not isinstance(ear_rules, list):
        raise SchemaViolation("ear.rules", "must be a list of rule mappings")
    for i, entry in enumerate(ear_rules):
        if not isinstance(entry, dict):
            raise SchemaViolation(f"ear.rules[{i}]", "must be a mapping")
        for needed in ("diagnostic_id", "kind", "direction"):
            if needed not in entry:
                raise SchemaViolation(f"ear.rules[{i}]", f"missing {needed}")
    ear = EarConfig(
        window=int(_number(ear_raw, "ear", "window", 3, lo=0)),
        rules=list(ear_rules),
    )

    output_root = _resolve(base, str(_require(raw, "<root>", "output_root")))
    corpus_root = _resolve(base, str(raw.get("corpus_root", ""))) or str(Path(output_root) / "corpus")

    return PipelineConfig(
        app=app,
        sources=sources,
        thresholds=thresholds,
        llm=llm,
        eval=eval_cfg,
        ear=ear,
        output_root=output_root,
        corpus_root=corpus_root,
        prompt_char_limit=int(_number(llm_raw, "llm", "prompt_char_limit", 0, lo=0)),
    )
