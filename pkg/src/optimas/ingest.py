"""Profiler output ingestion.

Normalizes the four raw diagnostic sources (kernel times, PC sampling,
counter matrices, roofline summaries) into typed records, and drives the
profiler itself when a run needs fresh data. All text inputs are UTF-8,
numbers base-10. Line numbers in errors are 1-based and count the header.
"""

from __future__ import annotations

import csv
import fcntl
import io
import json
import logging
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import (
    DuplicateKernel,
    FewerThanTwoRuns,
    MalformedRow,
    MissingOutput,
    MissingRuntimeColumn,
    NonPositivePeak,
    NonZeroExit,
    ParseError,
    RaggedRow,
    UnknownKernel,
)

logger = logging.getLogger(__name__)

KERNEL_HEADER = ["kernel_name", "time_ns", "source_file"]
PCSAMPLE_HEADER = ["kernel_name", "source_line", "stall_type", "cycles"]
PCSAMPLE_UNITS = ("cycles", "samples")


@dataclass(frozen=True, slots=True)
class KernelProfile:
    """One kernel's share of total runtime, as reported by the profiler."""

    kernel_name: str
    time_ns: int
    source_file: str | None = None

    def __post_init__(self):
        if not self.kernel_name:
            raise ValueError("kernel_name must be non-empty")
        if self.time_ns < 0:
            raise ValueError(f"{self.kernel_name}: time_ns must be >= 0")


@dataclass(frozen=True, slots=True)
class StallSample:
    """A PC-sampling record attributing stalled cycles to a source line."""

    kernel_name: str
    source_line: int
    stall_type: str
    cycles: int

    def __post_init__(self):
        if self.source_line < 1:
            raise ValueError("source_line is 1-based")
        if self.cycles < 0:
            raise ValueError("cycles must be >= 0")


@dataclass(frozen=True, slots=True)
class RooflineRaw:
    """Per-kernel roofline measurements straight from the profiler."""

    kernel_name: str
    achieved_compute: float
    peak_compute: float
    achieved_bandwidth: float
    peak_bandwidth: float
    arithmetic_intensity: float
    profiler_notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.peak_compute <= 0:
            raise NonPositivePeak(self.kernel_name, "peak_compute")
        if self.peak_bandwidth <= 0:
            raise NonPositivePeak(self.kernel_name, "peak_bandwidth")


@dataclass
class CounterMatrix:
    """Hardware counters across repeated runs: N runs by C counters.

    Runtimes are stored in seconds; the on-disk column is nanoseconds.
    """

    run_ids: list[str]
    counter_names: list[str]
    values: np.ndarray
    runtimes_s: np.ndarray

    def __post_init__(self):
        n, c = len(self.run_ids), len(self.counter_names)
        if len(set(self.counter_names)) != c:
            raise ValueError("counter names must be unique")
        self.values = np.asarray(self.values, dtype=float).reshape(n, c)
        self.runtimes_s = np.asarray(self.runtimes_s, dtype=float).reshape(n)
        if n < 2:
            raise FewerThanTwoRuns(f"need at least 2 runs, got {n}")
        if np.any(self.runtimes_s <= 0):
            raise ValueError("runtimes must be positive")

    def __eq__(self, other):
        if not isinstance(other, CounterMatrix):
            return NotImplemented
        return (
            self.run_ids == other.run_ids
            and self.counter_names == other.counter_names
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.runtimes_s, other.runtimes_s)
        )


@dataclass
class DiagnosticBundle:
    """Everything the analysis stage needs for one application.

    Stalls are held pre-aggregated (one sample per distinct
    (kernel, line, stall_type), cycles summed) so bundle size is bounded
    by distinct program locations rather than trace length. id_map is
    filled in by the analysis stage: diagnostic ID -> summary line.
    """

    app_name: str
    kernels: list[KernelProfile]
    roofline: list[RooflineRaw] = field(default_factory=list)
    stalls: list[StallSample] = field(default_factory=list)
    counters: CounterMatrix | None = None
    id_map: dict[str, str] = field(default_factory=dict)
    stall_unit: str = "cycles"

    def __post_init__(self):
        known = {k.kernel_name for k in self.kernels}
        for r in self.roofline:
            if r.kernel_name not in known:
                raise UnknownKernel(r.kernel_name, "roofline")
        for s in self.stalls:
            if s.kernel_name not in known:
                raise UnknownKernel(s.kernel_name, "pc samples")


def _open_input(path: str | Path, newline=None):
    # A vanished input must fail as a parse problem, not leak an OSError
    # past the pipeline's stage tagging.
    try:
        return open(path, "r", encoding="utf-8", newline=newline)
    except OSError as exc:
        raise ParseError(str(path), f"cannot read: {exc.strerror or exc}") from None


def _open_csv(path: str | Path):
    return _open_input(path, newline="")


def parse_kernel_times(path: str | Path) -> list[KernelProfile]:
    """Parse a kernel-time CSV (`kernel_name,time_ns[,source_file]`)."""
    profiles: list[KernelProfile] = []
    seen: set[str] = set()
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != KERNEL_HEADER[:2]:
            raise ParseError(str(path), f"expected header {','.join(KERNEL_HEADER[:2])}[,source_file]")
        has_source = len(header) >= 3
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 2 or (has_source and len(row) != 3) or (not has_source and len(row) != 2):
                raise MalformedRow(line_no, f"expected {3 if has_source else 2} fields, got {len(row)}")
            name = row[0].strip()
            if not name:
                raise MalformedRow(line_no, "empty kernel_name")
            if name in seen:
                raise DuplicateKernel(name)
            seen.add(name)
            try:
                time_ns = int(row[1])
            except ValueError:
                raise MalformedRow(line_no, f"time_ns is not an integer: {row[1]!r}") from None
            if time_ns < 0:
                raise MalformedRow(line_no, f"time_ns must be >= 0, got {time_ns}")
            source = row[2].strip() if has_source and row[2].strip() else None
            profiles.append(KernelProfile(name, time_ns, source))
    return profiles


def read_pcsample_unit(path: str | Path) -> str:
    """Return the unit declared in a PC-sample file header (default cycles)."""
    with _open_csv(path) as fh:
        for line in fh:
            stripped = line.strip()
            if stripped.startswith("#"):
                body = stripped.lstrip("#").strip()
                if body.startswith("unit="):
                    unit = body[len("unit="):].strip()
                    if unit not in PCSAMPLE_UNITS:
                        raise ParseError(str(path), f"unknown unit {unit!r}")
                    return unit
                continue
            break
    return "cycles"


def parse_pc_samples(path: str | Path) -> Iterator[StallSample]:
    """Stream PC-sampling rows as StallSamples, one per row.

    Lazy by design: memory stays bounded by the consumer's chunk size, not
    the trace length, so multi-million-row traces are safe to feed straight
    into aggregation. Comment lines (`# unit=...`) are skipped.
    """
    with _open_csv(path) as fh:
        line_no = 0
        header = None
        for raw in fh:
            line_no += 1
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            row = next(csv.reader(io.StringIO(raw)))
            if header is None:
                header = [h.strip() for h in row]
                if header != PCSAMPLE_HEADER:
                    raise ParseError(str(path), f"expected header {','.join(PCSAMPLE_HEADER)}")
                continue
            if len(row) != 4:
                raise MalformedRow(line_no, f"expected 4 fields, got {len(row)}")
            kernel = row[0].strip()
            if not kernel:
                raise MalformedRow(line_no, "empty kernel_name")
            try:
                source_line = int(row[1])
                cycles = int(row[3])
            except ValueError:
                raise MalformedRow(line_no, f"non-integer numeric field in {row!r}") from None
            if source_line < 1:
                raise MalformedRow(line_no, f"source_line is 1-based, got {source_line}")
            if cycles < 0:
                raise MalformedRow(line_no, f"cycles must be >= 0, got {cycles}")
            stall_type = row[2].strip()
            if not stall_type:
                raise MalformedRow(line_no, "empty stall_type")
            yield StallSample(kernel, source_line, stall_type, cycles)
        if header is None:
            raise ParseError(str(path), "missing header")


def parse_counter_matrix(path: str | Path) -> CounterMatrix:
    """Parse a wide counters CSV: run_id, runtime_ns, then one column per counter."""
    with _open_csv(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(str(path), "empty file")
        header = [h.strip() for h in header]
        if header[0] != "run_id":
            raise ParseError(str(path), "first column must be run_id")
        if "runtime_ns" not in header:
            raise MissingRuntimeColumn(f"{path}: no runtime_ns column")
        rt_idx = header.index("runtime_ns")
        counter_names = [h for i, h in enumerate(header) if i not in (0, rt_idx)]
        counter_idx = [i for i in range(len(header)) if i not in (0, rt_idx)]
        run_ids: list[str] = []
        runtimes: list[float] = []
        rows: list[list[float]] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise RaggedRow(line_no, f"expected {len(header)} fields, got {len(row)}")
            run_ids.append(row[0].strip())
            try:
                runtime_ns = float(row[rt_idx])
                values = [float(row[i]) for i in counter_idx]
            except ValueError:
                raise MalformedRow(line_no, f"non-numeric field in {row!r}") from None
            if runtime_ns <= 0:
                raise MalformedRow(line_no, f"runtime_ns must be positive, got {runtime_ns}")
            runtimes.append(runtime_ns / 1e9)
            rows.append(values)
    if len(run_ids) < 2:
        raise FewerThanTwoRuns(f"{path}: need at least 2 runs, got {len(run_ids)}")
    return CounterMatrix(run_ids, counter_names, np.array(rows, dtype=float), np.array(runtimes))


def parse_roofline(path: str | Path) -> list[RooflineRaw]:
    """Parse a roofline JSON array into per-kernel records."""
    with _open_input(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(str(path), f"invalid JSON: {exc}") from None
    if not isinstance(payload, list):
        raise ParseError(str(path), "expected a JSON array")
    records = []
    for i, entry in enumerate(payload):
        try:
            records.append(
                RooflineRaw(
                    kernel_name=entry["kernel_name"],
                    achieved_compute=float(entry["achieved_compute"]),
                    peak_compute=float(entry["peak_compute"]),
                    achieved_bandwidth=float(entry["achieved_bandwidth"]),
                    peak_bandwidth=float(entry["peak_bandwidth"]),
                    arithmetic_intensity=float(entry["arithmetic_intensity"]),
                    profiler_notes=tuple(entry.get("profiler_notes", [])),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(str(path), f"entry {i}: {exc}") from None
    return records


def load_counter_dictionary(path: str | Path) -> dict[str, str]:
    """Load a flat counter-name -> description map.

    Duplicate keys take the last value; each duplicate is logged as a
    warning rather than rejected, since vendor dumps do repeat entries.
    """
    def _pairs(pairs):
        out: dict[str, str] = {}
        for key, value in pairs:
            if key in out:
                logger.warning("counter dictionary: duplicate key %r, keeping last", key)
            out[key] = value
        return out

    with _open_input(path) as fh:
        try:
            payload = json.load(fh, object_pairs_hook=_pairs)
        except json.JSONDecodeError as exc:
            raise ParseError(str(path), f"invalid JSON: {exc}") from None
    if not isinstance(payload, dict) or any(not isinstance(v, str) for v in payload.values()):
        raise ParseError(str(path), "expected a flat string-to-string map")
    return payload


def aggregate_samples(samples: Iterable[StallSample]) -> dict[tuple[str, int, str], int]:
    """Sum cycles per (kernel, line, stall_type). Streams; O(distinct keys) memory."""
    agg: dict[tuple[str, int, str], int] = {}
    for s in samples:
        key = (s.kernel_name, s.source_line, s.stall_type)
        agg[key] = agg.get(key, 0) + s.cycles
    return agg


def assemble_bundle(
    app_name: str,
    kernels: list[KernelProfile],
    roofline: list[RooflineRaw] | None = None,
    stalls: Iterable[StallSample] | None = None,
    counters: CounterMatrix | None = None,
    stall_unit: str = "cycles",
) -> DiagnosticBundle:
    """Build a DiagnosticBundle, aggregating stalls and checking kernel references."""
    aggregated = []
    if stalls is not None:
        agg = aggregate_samples(stalls)
        aggregated = [
            StallSample(k, line, stype, cycles)
            for (k, line, stype), cycles in sorted(agg.items())
        ]
    return DiagnosticBundle(
        app_name=app_name,
        kernels=kernels,
        roofline=list(roofline or []),
        stalls=aggregated,
        counters=counters,
        stall_unit=stall_unit,
    )


def save_bundle(bundle: DiagnosticBundle, directory: str | Path) -> dict[str, Path]:
    """Write a bundle back to the normalized on-disk formats.

    Returns the map of logical name -> path. Re-parsing the written files
    reproduces the bundle exactly (stalls are already aggregated, floats
    are written with full precision).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    kern_path = directory / "kernels.csv"
    has_source = any(k.source_file for k in bundle.kernels)
    with open(kern_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(KERNEL_HEADER if has_source else KERNEL_HEADER[:2])
        for k in bundle.kernels:
            row = [k.kernel_name, str(k.time_ns)]
            if has_source:
                row.append(k.source_file or "")
            writer.writerow(row)
    paths["kernels"] = kern_path

    if bundle.stalls:
        pc_path = directory / "pcsamples.csv"
        with open(pc_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# unit={bundle.stall_unit}\n")
            writer = csv.writer(fh)
            writer.writerow(PCSAMPLE_HEADER)
            for s in bundle.stalls:
                writer.writerow([s.kernel_name, s.source_line, s.stall_type, s.cycles])
        paths["pcsamples"] = pc_path

    if bundle.counters is not None:
        cm = bundle.counters
        ctr_path = directory / "counters.csv"
        with open(ctr_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["run_id", "runtime_ns"] + cm.counter_names)
            for i, run_id in enumerate(cm.run_ids):
                runtime_ns = int(round(cm.runtimes_s[i] * 1e9))
                writer.writerow([run_id, runtime_ns] + [repr(float(v)) for v in cm.values[i]])
        paths["counters"] = ctr_path

    if bundle.roofline:
        rl_path = directory / "roofline.json"
        with open(rl_path, "w", encoding="utf-8") as fh:
            json.dump(
                [
                    {
                        "kernel_name": r.kernel_name,
                        "achieved_compute": r.achieved_compute,
                        "peak_compute": r.peak_compute,
                        "achieved_bandwidth": r.achieved_bandwidth,
                        "peak_bandwidth": r.peak_bandwidth,
                        "arithmetic_intensity": r.arithmetic_intensity,
                        "profiler_notes": list(r.profiler_notes),
                    }
                    for r in bundle.roofline
                ],
                fh,
                indent=2,
            )
        paths["roofline"] = rl_path

    return paths


def load_bundle(app_name: str, directory: str | Path) -> DiagnosticBundle:
    """Re-assemble a bundle from a directory written by save_bundle."""
    directory = Path(directory)
    kernels = parse_kernel_times(directory / "kernels.csv")
    pc_path = directory / "pcsamples.csv"
    stalls = parse_pc_samples(pc_path) if pc_path.exists() else None
    unit = read_pcsample_unit(pc_path) if pc_path.exists() else "cycles"
    ctr_path = directory / "counters.csv"
    counters = parse_counter_matrix(ctr_path) if ctr_path.exists() else None
    rl_path = directory / "roofline.json"
    roofline = parse_roofline(rl_path) if rl_path.exists() else None
    return assemble_bundle(app_name, kernels, roofline, stalls, counters, stall_unit=unit)


def invoke_profiler(
    command_template: str,
    substitutions: dict[str, str],
    declared_outputs: list[str] | None = None,
    cwd: str | Path | None = None,
    timeout_s: float | None = None,
) -> list[Path]:
    """Run a profiler command and return the declared outputs that now exist.

    The template uses {app}, {args}, {out} style placeholders; every
    placeholder must be bound in `substitutions`. Concurrent invocations
    targeting the same output directory are serialized with a lock file so
    two profiles never interleave writes.
    """
    try:
        command = command_template.format_map(substitutions)
    except KeyError as exc:
        raise ParseError(command_template, f"unbound placeholder {{{exc.args[0]}}}") from None
    outputs = [Path(o.format_map(substitutions)) for o in (declared_outputs or [])]
    if not outputs and "out" in substitutions:
        outputs = [Path(substitutions["out"])]

    lock_dir = outputs[0].parent if outputs else Path(cwd or ".")
    lock_dir.mkdir(parents=True, exist_ok=True)
    lock_path = lock_dir / ".profiler.lock"
    with open(lock_path, "w") as lock_fh:
        fcntl.flock(lock_fh, fcntl.LOCK_EX)
        try:
            proc = subprocess.run(
                shlex.split(command),
                cwd=str(cwd) if cwd else None,
                capture_output=True,
                text=True,
                timeout=timeout_s,
            )
        finally:
            fcntl.flock(lock_fh, fcntl.LOCK_UN)
    if proc.returncode != 0:
        tail = "\n".join(proc.stderr.splitlines()[-20:])
        raise NonZeroExit(proc.returncode, tail)
    produced = []
    for out in outputs:
        if not out.exists():
            raise MissingOutput(str(out))
        produced.append(out)
    return produced
