"""Shared fixtures: a tiny self-contained app the pipeline can actually
compile, run, and optimize end to end without a GPU or a network.

The "toolchain" is a stub: compiling copies the source to the binary and
marks it executable (the sources are python scripts with a shebang), so
compile failures, output validation, and timing all behave like the real
thing at millisecond scale. The model backend is the scripted mock; the
canned response lives in the fixture directory as default.txt.
"""

from __future__ import annotations

import json
import stat
import textwrap
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pytest
import yaml

from optimas.config import PipelineConfig, load_config
from optimas.pipeline import analyze_bundle, build_package, ingest_sources

BASELINE_SLEEP = 0.020
OPT_SLEEP = 0.001
SLOW_SLEEP = 0.060

COUNTER_NAMES = [
    "dram__bytes_write",
    "lts__t_sectors_miss",
    "smsp__warps_eligible",
    "sm__inst_executed",
    "l1tex__data_bank_conflicts",
    "sm__warps_active",
]

COUNTER_DESCRIPTIONS = {
    "dram__bytes_write": "bytes written to device memory",
    "lts__t_sectors_miss": "L2 sector misses",
    "smsp__warps_eligible": "average warps eligible to issue per cycle",
    "sm__inst_executed": "instructions executed",
    "l1tex__data_bank_conflicts": "shared-memory bank conflicts",
    "sm__warps_active": "average active warps per cycle",
}


def app_source(sleep_s: float = BASELINE_SLEEP) -> str:
    # Line numbers are load-bearing: the pcsamples fixture points at
    # lines 7/8 (kernel_alpha) and 14 (kernel_beta), the sleep is line 18.
    return textwrap.dedent(f'''\
        #!/usr/bin/env python3
        """Fixed two-kernel workload with deterministic output."""
        import time

        def kernel_alpha(n):
            total = 0
            for i in range(n):
                total += (i * i) % 9973
            return total

        def kernel_beta(n):
            acc = 1
            for i in range(1, n):
                acc = (acc * 31 + i) % 65521
            return acc

        def main():
            time.sleep({sleep_s})
            print(kernel_alpha(4000))
            print(kernel_beta(2000))

        if __name__ == "__main__":
            main()
        ''')


def optimized_source(sleep_s: float = OPT_SLEEP, corrupt: bool = False) -> str:
    tail = '    print("oops")\n' if corrupt else ""
    return textwrap.dedent(f'''\
        #!/usr/bin/env python3
        """Fixed two-kernel workload with deterministic output."""
        import time

        def kernel_alpha(n):
            return sum((i * i) % 9973 for i in range(n))

        def kernel_beta(n):
            acc = 1
            for i in range(1, n):
                acc = (acc * 31 + i) % 65521
            return acc

        def main():
            time.sleep({sleep_s})
            print(kernel_alpha(4000))
            print(kernel_beta(2000))
        {tail}
        if __name__ == "__main__":
            main()
        ''')


DEFAULT_APPLIED = (
    "- [A1] lines 6-8 | fold the kernel_alpha accumulation into one sum to cut"
    " stall_wait dependency stalls | evidence: PC-01, IA-01\n"
    "- [A2] lines 18-18 | shrink the startup sleep that keeps compute"
    " underutilized | evidence: RL-01"
)

DEFAULT_WITHHELD = "- unroll the kernel_beta loop | reason: no stall evidence points at it"


def response_for(
    source: str,
    applied: str = DEFAULT_APPLIED,
    withheld: str = DEFAULT_WITHHELD,
) -> str:
    return (
        "### OPTIMIZED CODE\n"
        "```python\n"
        f"{source}"
        "```\n"
        "### APPLIED\n"
        f"{applied}\n"
        "### WITHHELD\n"
        f"{withheld}\n"
    )


def _write_executable(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    path.chmod(path.stat().st_mode | stat.S_IXUSR | stat.S_IXGRP | stat.S_IXOTH)
    return path


def make_stub_compiler(directory: Path, fail_candidates: int = 0, baseline: Path | None = None) -> Path:
    """A "compiler" that copies the source onto the binary path.

    With fail_candidates > 0, the first N compiles of anything other than
    the baseline source fail with a synthetic error (state survives across
    invocations via a counter file), which is how the retry loop is
    exercised deterministically.
    """
    script = directory / "stubcc"
    if fail_candidates <= 0:
        _write_executable(
            script,
            "#!/bin/sh\ncp \"$1\" \"$2\" && chmod +x \"$2\"\n",
        )
        return script
    state = directory / "stubcc.count"
    assert baseline is not None, "fail_candidates needs the baseline source path"
    _write_executable(
        script,
        textwrap.dedent(f'''\
            #!/bin/sh
            src="$1"; bin="$2"
            if ! cmp -s "$src" "{baseline}"; then
                n=$(cat "{state}" 2>/dev/null || echo 0)
                if [ "$n" -lt {fail_candidates} ]; then
                    echo $((n + 1)) > "{state}"
                    echo "candidate.src:1:1: error: synthetic failure $((n + 1))" >&2
                    exit 1
                fi
            fi
            cp "$src" "$bin" && chmod +x "$bin"
            '''),
    )
    return script


def write_profile(profile_dir: Path) -> None:
    """The canned diagnostics for the miniapp.

    kernel_alpha (72%) and kernel_beta (18%) cover 90% >= alpha=0.8; the
    helper kernel must always be filtered out. Salient lines by cycles:
    (alpha, 8) 48387, (beta, 14) 24000, (alpha, 7) 17000. kernel_alpha's
    roofline is the (62%, 91%) fixture.
    """
    profile_dir.mkdir(parents=True, exist_ok=True)
    (profile_dir / "kernels.csv").write_text(
        "kernel_name,time_ns,source_file\n"
        "kernel_alpha,720000,miniapp.src\n"
        "kernel_beta,180000,miniapp.src\n"
        "helper_memcpy,100000,miniapp.src\n",
        encoding="utf-8",
    )
    (profile_dir / "pcsamples.csv").write_text(
        "# unit=cycles\n"
        "kernel_name,source_line,stall_type,cycles\n"
        "kernel_alpha,8,stall_wait,45387\n"
        "kernel_alpha,8,stall_math,3000\n"
        "kernel_alpha,7,stall_membar,9000\n"
        "kernel_alpha,7,stall_wait,8000\n"
        "kernel_beta,14,stall_wait,22000\n"
        "kernel_beta,14,stall_math,2000\n"
        "helper_memcpy,2,stall_drain,99999\n",
        encoding="utf-8",
    )
    (profile_dir / "roofline.json").write_text(
        """[
  {"kernel_name": "kernel_alpha", "achieved_compute": 38.44, "peak_compute": 62.0,
   "achieved_bandwidth": 1820.0, "peak_bandwidth": 2000.0, "arithmetic_intensity": 12.0},
  {"kernel_name": "kernel_beta", "achieved_compute": 10.0, "peak_compute": 62.0,
   "achieved_bandwidth": 400.0, "peak_bandwidth": 2000.0, "arithmetic_intensity": 0.02},
  {"kernel_name": "helper_memcpy", "achieved_compute": 1.0, "peak_compute": 62.0,
   "achieved_bandwidth": 1900.0, "peak_bandwidth": 2000.0, "arithmetic_intensity": 0.01}
]
""",
        encoding="utf-8",
    )
    write_counter_csv(profile_dir / "counters.csv")
    (profile_dir / "counter_names.json").write_text(
        json.dumps(COUNTER_DESCRIPTIONS, indent=2), encoding="utf-8"
    )


def write_counter_csv(path: Path, n_runs: int = 12) -> None:
    """Counters whose first two columns genuinely drive the runtime."""
    rng = np.random.default_rng(424242)
    writes = rng.uniform(1e6, 5e6, n_runs)
    misses = rng.uniform(1e4, 9e4, n_runs)
    noise = rng.uniform(0.0, 1.0, (n_runs, 4))
    runtime_ns = 2e8 + 40.0 * writes + 900.0 * misses + 1e4 * noise[:, 0]
    rows = []
    for i in range(n_runs):
        values = [
            writes[i],
            misses[i],
            0.1 + 0.3 * noise[i, 1],
            1e7 * (1.0 + 0.05 * noise[i, 2]),
            100.0 * noise[i, 3],
            32.0 + noise[i, 0],
        ]
        rows.append(f"r{i:02d},{int(runtime_ns[i])}," + ",".join(repr(float(v)) for v in values))
    path.write_text(
        "run_id,runtime_ns," + ",".join(COUNTER_NAMES) + "\n" + "\n".join(rows) + "\n",
        encoding="utf-8",
    )


def make_post_profile(directory: Path) -> Path:
    """A post-optimization profile where the cited diagnostics improved.

    stall_wait on (kernel_alpha, 8) drops 45387 -> 22642 and kernel_alpha's
    compute utilization rises 62% -> 90%. No counters file: counter rules
    simply stay unmeasured, which keeps the directional verdict pinned to
    the cited stall and roofline evidence.
    """
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "kernels.csv").write_text(
        "kernel_name,time_ns,source_file\n"
        "kernel_alpha,430000,miniapp.src\n"
        "kernel_beta,175000,miniapp.src\n"
        "helper_memcpy,100000,miniapp.src\n",
        encoding="utf-8",
    )
    (directory / "pcsamples.csv").write_text(
        "# unit=cycles\n"
        "kernel_name,source_line,stall_type,cycles\n"
        "kernel_alpha,8,stall_wait,22642\n"
        "kernel_alpha,8,stall_math,2900\n"
        "kernel_alpha,7,stall_membar,8100\n"
        "kernel_beta,14,stall_wait,21000\n",
        encoding="utf-8",
    )
    (directory / "roofline.json").write_text(
        """[
  {"kernel_name": "kernel_alpha", "achieved_compute": 55.8, "peak_compute": 62.0,
   "achieved_bandwidth": 1600.0, "peak_bandwidth": 2000.0, "arithmetic_intensity": 12.0},
  {"kernel_name": "kernel_beta", "achieved_compute": 12.0, "peak_compute": 62.0,
   "achieved_bandwidth": 700.0, "peak_bandwidth": 2000.0, "arithmetic_intensity": 0.02}
]
""",
        encoding="utf-8",
    )
    return directory


@dataclass
class MiniApp:
    root: Path
    config_path: Path
    source_path: Path
    fixture_dir: Path
    profile_dir: Path
    output_root: Path
    corpus_root: Path
    baseline: str
    compiler: Path
    config: PipelineConfig = field(init=False)

    def __post_init__(self):
        self.config = load_config(self.config_path)

    def reload(self) -> PipelineConfig:
        self.config = load_config(self.config_path)
        return self.config

    def stage_response(self, text: str, prompt_text: str | None = None) -> Path:
        """Install a canned reply: hash-keyed when a prompt is given,
        otherwise the default.txt fallback used for every prompt."""
        self.fixture_dir.mkdir(parents=True, exist_ok=True)
        if prompt_text is None:
            path = self.fixture_dir / "default.txt"
        else:
            from optimas.gateway import prompt_sha256

            path = self.fixture_dir / f"{prompt_sha256(prompt_text)}.txt"
        path.write_text(text, encoding="utf-8")
        return path

    def first_prompt(self) -> str:
        """The exact prompt the pipeline will send (single chunk)."""
        analysis = analyze_bundle(ingest_sources(self.config), self.config)
        return build_package(analysis, self.config).prompt_text


def make_miniapp(
    root: Path,
    *,
    enabled: dict | None = None,
    fail_compiles: int = 0,
    runs: int = 2,
    seed: int = 7,
    response: str | None = "",
    thresholds: dict | None = None,
    max_compile_retries: int = 3,
) -> MiniApp:
    """Lay out a complete working tree: app source, profile data, stub
    toolchain, mock fixture dir, and a config.yml tying them together.

    response="" (the default) stages the canned improving response as
    default.txt; pass None to stage nothing, or any text to use that.
    """
    root.mkdir(parents=True, exist_ok=True)
    source_path = root / "miniapp.src"
    baseline = app_source()
    source_path.write_text(baseline, encoding="utf-8")
    profile_dir = root / "profile"
    write_profile(profile_dir)
    fixture_dir = root / "fixtures"
    fixture_dir.mkdir(exist_ok=True)
    compiler = make_stub_compiler(root, fail_compiles, baseline=source_path)

    thr = {
        "alpha": 0.8,
        "tau_sat": 0.70,
        "tau_saliency": 0.30,
        "top_n": 10,
        "kappa": 5,
        "tau_pool": 5,
        "ensembles": 10,
        "seed": seed,
    }
    thr.update(thresholds or {})
    config_body = {
        "app": {
            "name": "miniapp",
            "source": "miniapp.src",
            "hw": "sandbox-cpu",
            "sw": "python3/stub-toolchain",
        },
        "sources": {
            "kernels": "profile/kernels.csv",
            "pcsamples": "profile/pcsamples.csv",
            "counters": "profile/counters.csv",
            "roofline": "profile/roofline.json",
            "counter_dictionary": "profile/counter_names.json",
            "enabled": enabled or {"pc": True, "ia": True, "roofline": True},
        },
        "thresholds": thr,
        "llm": {
            "kind": "scripted-mock",
            "model": "mock-model",
            "fixture_dir": "fixtures",
        },
        "eval": {
            "compile_cmd": f"{compiler} {{src}} {{bin}}",
            "exec_cmd": "{bin}",
            "runs": runs,
            "max_compile_retries": max_compile_retries,
        },
        "ear": {"window": 3},
        "output_root": "runs",
        "corpus_root": "corpus",
    }
    config_path = root / "config.yml"
    config_path.write_text(yaml.safe_dump(config_body, sort_keys=False), encoding="utf-8")

    app = MiniApp(
        root=root,
        config_path=config_path,
        source_path=source_path,
        fixture_dir=fixture_dir,
        profile_dir=profile_dir,
        output_root=root / "runs",
        corpus_root=root / "corpus",
        baseline=baseline,
        compiler=compiler,
    )
    if response == "":
        app.stage_response(response_for(optimized_source()))
    elif response is not None:
        app.stage_response(response)
    return app


@pytest.fixture
def miniapp(tmp_path):
    return make_miniapp(tmp_path / "miniapp")
