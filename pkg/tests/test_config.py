"""Config loading, validation, and snapshot round-trips."""

from __future__ import annotations

import pytest
import yaml

from optimas.config import config_from_dict, load_config
from optimas.errors import SchemaViolation


def minimal_raw(**overrides):
    raw = {
        "app": {"name": "demo", "source": "app.py", "hw": "cpu", "sw": "py"},
        "sources": {
            "kernels": "prof/kernels.csv",
            "pcsamples": "prof/pcsamples.csv",
            "counters": "prof/counters.csv",
            "roofline": "prof/roofline.json",
        },
        "llm": {"kind": "scripted-mock", "model": "mock", "fixture_dir": "fixtures"},
        "eval": {"compile_cmd": "cc {src} {bin}", "exec_cmd": "{bin}"},
        "output_root": "runs",
    }
    raw.update(overrides)
    return raw


def _violation(raw):
    with pytest.raises(SchemaViolation) as exc:
        config_from_dict(raw, "/base")
    return exc.value


class TestDefaults:
    def test_thresholds_and_knobs(self):
        cfg = config_from_dict(minimal_raw(), "/base")
        thr = cfg.thresholds
        assert (thr.alpha, thr.tau_sat, thr.tau_saliency) == (0.8, 0.70, 0.30)
        assert (thr.top_n, thr.kappa, thr.tau_pool, thr.ensembles) == (10, 5, 5, 10)
        assert thr.seed == 0 and thr.epsilon_stop == 1e-10
        assert cfg.eval.runs == 5 and cfg.eval.max_compile_retries == 3
        assert cfg.eval.reference_capture == "auto"
        assert cfg.ear.window == 3 and cfg.ear.rules == []
        assert cfg.llm.temperature == 0.15 and cfg.llm.in_flight_limit == 2
        assert cfg.prompt_char_limit == 0

    def test_paths_resolve_against_base(self):
        cfg = config_from_dict(minimal_raw(), "/base")
        assert cfg.app.source == "/base/app.py"
        assert cfg.sources.kernels == "/base/prof/kernels.csv"
        assert cfg.llm.fixture_dir == "/base/fixtures"
        assert cfg.output_root == "/base/runs"

    def test_corpus_root_defaults_under_output_root(self):
        cfg = config_from_dict(minimal_raw(), "/base")
        assert cfg.corpus_root == "/base/runs/corpus"
        explicit = config_from_dict(minimal_raw(corpus_root="shared/corpus"), "/base")
        assert explicit.corpus_root == "/base/shared/corpus"

    def test_absolute_paths_pass_through(self):
        raw = minimal_raw()
        raw["app"]["source"] = "/abs/app.py"
        cfg = config_from_dict(raw, "/base")
        assert cfg.app.source == "/abs/app.py"


class TestViolations:
    def test_root_shape(self):
        assert _violation(["not", "a", "map"]).key == "<root>"
        assert _violation(minimal_raw(surprise={})).key == "surprise"

    def test_unknown_nested_keys(self):
        raw = minimal_raw()
        raw["thresholds"] = {"alpha": 0.8, "beta": 1}
        assert _violation(raw).key == "thresholds.beta"
        raw = minimal_raw()
        raw["sources"]["enabled"] = {"pc": True, "gpu": True}
        assert _violation(raw).key == "sources.enabled.gpu"

    def test_missing_required(self):
        raw = minimal_raw()
        del raw["app"]["name"]
        assert _violation(raw).key == "app.name"
        raw = minimal_raw()
        del raw["eval"]["exec_cmd"]
        assert _violation(raw).key == "eval.exec_cmd"
        raw = minimal_raw()
        del raw["output_root"]
        violation = _violation(raw)
        assert violation.key == "<root>.output_root"

    def test_alpha_range(self):
        raw = minimal_raw(thresholds={"alpha": 1.5})
        v = _violation(raw)
        assert v.key == "thresholds.alpha" and "<= 1.0" in v.reason
        raw = minimal_raw(thresholds={"alpha": 0})
        assert "(0, 1]" in _violation(raw).reason
        raw = minimal_raw(thresholds={"alpha": "hot"})
        assert "must be a number" in _violation(raw).reason

    def test_enabled_sources_demand_their_paths(self):
        raw = minimal_raw()
        del raw["sources"]["counters"]
        assert _violation(raw).key == "sources.counters"
        raw = minimal_raw()
        del raw["sources"]["counters"]
        raw["sources"]["enabled"] = {"ia": False}
        cfg = config_from_dict(raw, "/base")
        assert not cfg.sources.ia_enabled and cfg.sources.counters == ""
        raw = minimal_raw()
        raw["sources"]["enabled"] = {"pc": False, "ia": False, "roofline": False}
        assert "at least one" in _violation(raw).reason

    def test_llm_kind_and_composition(self):
        raw = minimal_raw()
        raw["llm"]["kind"] = "telepathy"
        assert _violation(raw).key == "llm.kind"
        raw = minimal_raw()
        raw["llm"] = {"kind": "remote-http", "model": "m"}  # endpoint missing
        v = _violation(raw)
        assert v.key == "llm" and "endpoint" in v.reason

    def test_ear_rules_shape(self):
        raw = minimal_raw(ear={"rules": "decrease-everything"})
        assert _violation(raw).key == "ear.rules"
        raw = minimal_raw(ear={"rules": [{"kind": "stall"}]})
        v = _violation(raw)
        assert v.key == "ear.rules[0]" and "diagnostic_id" in v.reason
        raw = minimal_raw(
            ear={"rules": [{"diagnostic_id": "PC-01", "kind": "stall", "direction": "decrease"}]}
        )
        cfg = config_from_dict(raw, "/base")
        assert cfg.ear.rules[0]["diagnostic_id"] == "PC-01"


class TestRoundTrip:
    def test_yaml_file_load(self, tmp_path):
        raw = minimal_raw(
            thresholds={"alpha": 0.9, "kappa": 3},
            corpus_root="corpus",
        )
        raw["eval"]["compile_cmd_profiled"] = "cc -lineinfo {src} {bin}"
        path = tmp_path / "config.yml"
        path.write_text(yaml.safe_dump(raw))
        cfg = load_config(path)
        assert cfg.app.name == "demo"
        assert cfg.thresholds.alpha == 0.9 and cfg.thresholds.kappa == 3
        assert cfg.eval.compile_cmd_profiled == "cc -lineinfo {src} {bin}"
        assert cfg.sources.kernels == str(tmp_path / "prof/kernels.csv")

    def test_snapshot_feeds_back_through_the_loader(self):
        cfg = config_from_dict(minimal_raw(thresholds={"tau_pool": 1, "ensembles": 1}), "/base")
        snapshot = cfg.to_dict()
        again = config_from_dict(snapshot, "/elsewhere")
        # paths were already resolved; a second pass must not re-base them
        assert again.app.source == cfg.app.source
        assert again.sources == cfg.sources
        assert again.thresholds == cfg.thresholds
        assert again.eval == cfg.eval
        assert again.ear == cfg.ear
        assert again.llm == cfg.llm
        assert again.output_root == cfg.output_root
        assert again.corpus_root == cfg.corpus_root
        assert again.to_dict() == snapshot
