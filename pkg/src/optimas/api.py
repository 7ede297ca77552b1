"""HTTP service over persisted runs and the corpus.

The dashboard is a pure client of this API; every capability here is also
reachable from the CLI. Run submission is asynchronous: POST /runs answers
202 with the run id immediately and the pipeline executes on a worker
thread (runtime measurement still serializes on the host lock).
"""

from __future__ import annotations

import difflib
import json
import socket
import threading
import uuid
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from . import corpus as corpus_store
from .config import PipelineConfig, config_from_dict
from .errors import OptimasError, PortInUse, SchemaViolation
from .evaluate import RunManifest
from .pipeline import list_runs, reprofile_run, run_pipeline
from .prompt import parse_response

RUN_SUBMITTED = "submitted"
RUN_FAILED = "failed"


def _manifest_summary(manifest: RunManifest) -> dict:
    return {
        "run_id": manifest.run_uuid,
        "created_at": manifest.created_at,
        "status": manifest.status,
        "app": manifest.config_snapshot.get("app", {}).get("name", ""),
    }


def _read_json(run_dir: Path, name: str) -> dict:
    path = run_dir / name
    if not path.exists():
        return {}
    return json.loads(path.read_text(encoding="utf-8"))


def _applied_edits(run_dir: Path) -> list[dict]:
    """Recover the applied-edit claims (with line ranges and citations)
    from the persisted model response."""
    response_path = run_dir / "response.txt"
    if not response_path.exists():
        return []
    try:
        artifact = parse_response(response_path.read_text(encoding="utf-8"))
    except OptimasError:
        return []
    return [
        {
            "edit_id": e.edit_id,
            "line_start": e.line_start,
            "line_end": e.line_end,
            "transformation": e.transformation,
            "evidence_ids": list(e.evidence_ids),
            "parsed": e.parsed,
        }
        for e in artifact.applied
    ]


def _diff_body(run_dir: Path) -> dict:
    """Unified diff of baseline vs optimized, each hunk tagged with the
    evidence IDs of the applied edits whose baseline line ranges overlap
    the hunk's baseline range."""
    baseline = (run_dir / "baseline.src").read_text(encoding="utf-8")
    optimized = (run_dir / "optimized.src").read_text(encoding="utf-8")
    analysis = _read_json(run_dir, "analysis.json")
    applied = _applied_edits(run_dir)

    diff_lines = list(
        difflib.unified_diff(
            baseline.splitlines(), optimized.splitlines(),
            fromfile="baseline.src", tofile="optimized.src", lineterm="",
        )
    )
    hunks: list[dict] = []
    current: dict | None = None
    for line in diff_lines:
        if line.startswith("@@"):
            old = line.split()[1].lstrip("-").split(",")
            current = {
                "header": line,
                "old_start": int(old[0]),
                "old_count": int(old[1]) if len(old) > 1 else 1,
                "lines": [],
                "evidence_ids": [],
            }
            hunks.append(current)
        elif current is not None:
            current["lines"].append(line)

    for hunk in hunks:
        lo = hunk["old_start"]
        hi = lo + max(hunk["old_count"], 1) - 1
        cited: list[str] = []
        for edit in applied:
            start, end = edit["line_start"], edit["line_end"]
            if start is None or end is None:
                continue
            if start <= hi and end >= lo:
                for ev in edit["evidence_ids"]:
                    if ev not in cited:
                        cited.append(ev)
        hunk["evidence_ids"] = cited

    return {
        "hunks": hunks,
        "id_map": analysis.get("id_map", {}),
        "applied_edits": applied,
    }


def create_app(
    output_root: str | Path,
    corpus_root: str | Path | None = None,
    config_base: str | Path = ".",
) -> FastAPI:
    """Build the service around one output root (and its corpus)."""
    output_root = Path(output_root)
    corpus_root = Path(corpus_root) if corpus_root else output_root / "corpus"
    app = FastAPI(title="optimas", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    pending: dict[str, dict] = {}
    pending_lock = threading.Lock()

    def _find(run_id: str) -> RunManifest | None:
        for manifest in list_runs(output_root):
            if manifest.run_uuid == run_id or manifest.run_dir.name == run_id:
                return manifest
        return None

    def _manifest_or_404(run_id: str) -> RunManifest:
        manifest = _find(run_id)
        if manifest is None:
            raise HTTPException(status_code=404, detail=f"no run {run_id}")
        return manifest

    @app.get("/runs")
    def get_runs() -> list[dict]:
        rows = [_manifest_summary(m) for m in list_runs(output_root)]
        on_disk = {row["run_id"] for row in rows}
        with pending_lock:
            for run_id, entry in pending.items():
                if run_id not in on_disk:
                    rows.insert(0, {"run_id": run_id, **entry})
        return rows

    @app.get("/runs/{run_id}")
    def get_run(run_id: str) -> dict:
        manifest = _find(run_id)
        if manifest is None:
            with pending_lock:
                entry = pending.get(run_id)
            if entry is not None:
                return {"run_id": run_id, **entry}
            raise HTTPException(status_code=404, detail=f"no run {run_id}")
        body = manifest.to_dict()
        body["run_id"] = manifest.run_uuid
        analysis = _read_json(manifest.run_dir, "analysis.json")
        body["improvement_percent"] = analysis.get("improvement_percent")
        return body

    @app.get("/runs/{run_id}/artifacts/{name:path}")
    def get_artifact(run_id: str, name: str):
        manifest = _manifest_or_404(run_id)
        run_dir = manifest.run_dir.resolve()
        target = (run_dir / name).resolve()
        if not target.is_relative_to(run_dir) or not target.is_file():
            raise HTTPException(status_code=404, detail=f"no artifact {name}")
        text = target.read_text(encoding="utf-8")
        if name.endswith(".json"):
            return JSONResponse(json.loads(text) if text else {})
        return PlainTextResponse(text)

    @app.get("/runs/{run_id}/ear")
    def get_ear(run_id: str) -> dict:
        manifest = _manifest_or_404(run_id)
        report = _read_json(manifest.run_dir, "ear_report.json")
        if not report:
            raise HTTPException(status_code=404, detail="run has no EAR report")
        return report

    @app.get("/runs/{run_id}/diff")
    def get_diff(run_id: str) -> dict:
        manifest = _manifest_or_404(run_id)
        try:
            return _diff_body(manifest.run_dir)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/runs", status_code=202)
    def post_run(body: dict) -> dict:
        try:
            config = config_from_dict(body, config_base)
        except SchemaViolation as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        config.output_root = str(output_root)
        config.corpus_root = str(corpus_root)
        run_id = str(uuid.uuid4())
        with pending_lock:
            pending[run_id] = {"status": RUN_SUBMITTED}

        def _execute(run_config: PipelineConfig, rid: str) -> None:
            try:
                run_pipeline(run_config, run_uuid=rid)
                with pending_lock:
                    pending.pop(rid, None)
            except Exception as exc:
                stage = getattr(exc, "stage", None)
                detail = f"{stage}: {exc}" if stage else str(exc)
                with pending_lock:
                    pending[rid] = {"status": RUN_FAILED, "error": detail}

        worker = threading.Thread(target=_execute, args=(config, run_id), daemon=True)
        worker.start()
        return {"run_id": run_id, "status": RUN_SUBMITTED}

    @app.post("/runs/{run_id}/reprofile")
    def post_reprofile(run_id: str, body: dict) -> dict:
        manifest = _manifest_or_404(run_id)
        post_dir = body.get("post_dir")
        if not post_dir:
            raise HTTPException(status_code=400, detail="post_dir is required")
        post_path = Path(post_dir)
        if not post_path.is_absolute():
            post_path = Path(config_base) / post_path
        try:
            report = reprofile_run(manifest.run_dir, post_path)
        except FileNotFoundError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        except OptimasError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return report.to_dict()

    @app.get("/corpus")
    def get_corpus() -> list[dict]:
        return corpus_store.read_index(corpus_root)

    return app


def serve_api(
    config,
    host: str = "127.0.0.1",
    port: int = 8420,
    static_dir: str | Path | None = None,
):
    """Run the service until interrupted. Probes the port first so a
    conflict surfaces as PortInUse instead of a uvicorn stack trace."""
    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        probe.bind((host, port))
    except OSError as exc:
        raise PortInUse(port) from exc
    finally:
        probe.close()

    app = create_app(config.output_root, config.corpus_root)
    if static_dir and Path(static_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")
