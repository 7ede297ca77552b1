"""Counter normalization and ensemble-pursuit selection.

The classical greedy pursuit oracle is written straight from the textbook
loop (argmax correlation, unregularized least-squares refit) and kept free
of any code shared with the implementation.
"""

from __future__ import annotations

import numpy as np
import pytest

from optimas.counters import (
    CounterImportance,
    EompConfig,
    describe_counters,
    eomp_select,
    zscore_normalize,
)
from optimas.errors import AllColumnsDegenerate, DimensionMismatch
from optimas.ingest import CounterMatrix


def classical_omp(A: np.ndarray, t: np.ndarray, kappa: int) -> list[int]:
    """Plain orthogonal matching pursuit; returns the support in pick order."""
    support: list[int] = []
    r = t.astype(float).copy()
    for _ in range(kappa):
        corr = np.abs(A.T @ r)
        corr[support] = -np.inf
        if corr.max() < 1e-10:
            break
        support.append(int(np.argmax(corr)))
        coef, *_ = np.linalg.lstsq(A[:, support], t, rcond=None)
        r = t - A[:, support] @ coef
    return support


def planted_instance(rng, n=60, c=120, k=4, noise=0.0):
    A = rng.standard_normal((n, c))
    A /= np.linalg.norm(A, axis=0)
    true_support = rng.choice(c, size=k, replace=False)
    coefs = rng.uniform(1.0, 3.0, size=k) * rng.choice([-1, 1], size=k)
    t = A[:, true_support] @ coefs
    if noise:
        t = t + rng.standard_normal(n) * noise
    return A, t, set(int(i) for i in true_support)


def _matrix(values, runtimes=None, names=None):
    values = np.asarray(values, dtype=float)
    n, c = values.shape
    return CounterMatrix(
        run_ids=[f"run{i}" for i in range(n)],
        counter_names=names or [f"ctr_{j}" for j in range(c)],
        values=values,
        runtimes_s=np.asarray(runtimes if runtimes is not None else np.ones(n), dtype=float),
    )


class TestZscore:
    def test_columns_become_standard(self):
        rng = np.random.default_rng(3)
        m = _matrix(rng.uniform(5, 50, size=(20, 4)), runtimes=rng.uniform(1, 2, 20))
        z = zscore_normalize(m)
        np.testing.assert_allclose(z.values.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(z.values.std(axis=0), 1.0, atol=1e-12)
        np.testing.assert_array_equal(z.runtimes_s, m.runtimes_s)
        assert z.counter_names == m.counter_names

    def test_constant_columns_are_dropped_with_warning(self, caplog):
        values = np.column_stack([np.full(5, 7.0), np.arange(5.0)])
        with caplog.at_level("WARNING"):
            z = zscore_normalize(_matrix(values, names=["flat", "ramp"]))
        assert z.counter_names == ["ramp"]
        assert z.values.shape == (5, 1)
        assert any("flat" in r.message for r in caplog.records)

    def test_all_degenerate_raises(self):
        with pytest.raises(AllColumnsDegenerate):
            zscore_normalize(_matrix(np.ones((4, 3))))


class TestEompSelect:
    def test_reduces_to_classical_omp(self):
        cfg = EompConfig(kappa=5, tau_pool=1, ensembles=1, seed=0)
        rng = np.random.default_rng(2024)
        for _ in range(25):
            A, t, _ = planted_instance(rng, n=30, c=40, k=3, noise=0.05)
            got = {item.counter_name for item in eomp_select(A, t, cfg)}
            want = {f"c{i}" for i in classical_omp(A, t, cfg.kappa)}
            assert got == want

    def test_recovers_planted_support_noiseless(self):
        rng = np.random.default_rng(11)
        A, t, truth = planted_instance(rng, k=4)
        out = eomp_select(A, t, EompConfig(kappa=4, seed=1))
        assert {int(item.counter_name[1:]) for item in out} == truth

    def test_deterministic_for_fixed_seed(self):
        rng = np.random.default_rng(7)
        A, t, _ = planted_instance(rng)
        cfg = EompConfig(seed=42)
        first = eomp_select(A, t, cfg)
        second = eomp_select(A, t, cfg)
        assert [(i.counter_name, i.avg_weight, i.selection_frequency) for i in first] == [
            (i.counter_name, i.avg_weight, i.selection_frequency) for i in second
        ]

    def test_accepts_counter_matrix_and_uses_runtimes(self):
        rng = np.random.default_rng(8)
        values = rng.standard_normal((30, 6))
        runtimes = 1.0 + 0.5 * values[:, 2]
        m = zscore_normalize(_matrix(values, runtimes=np.abs(runtimes) + 1.0))
        out = eomp_select(m, cfg=EompConfig(kappa=2, seed=3))
        assert out and out[0].counter_name in m.counter_names
        assert out[0].diagnostic_id == "IA-01"

    def test_ranked_by_weight_then_name(self):
        rng = np.random.default_rng(9)
        A, t, _ = planted_instance(rng, k=3)
        out = eomp_select(A, t, EompConfig(kappa=3, seed=5))
        weights = [i.avg_weight for i in out]
        assert weights == sorted(weights, reverse=True)
        assert [i.diagnostic_id for i in out] == [f"IA-{k:02d}" for k in range(1, len(out) + 1)]
        assert all(0.0 < i.selection_frequency <= 1.0 for i in out)

    def test_coefficient_sign_tracks_planted_direction(self):
        rng = np.random.default_rng(12)
        A = rng.standard_normal((80, 10))
        A /= np.linalg.norm(A, axis=0)
        t = 2.5 * A[:, 3] - 2.5 * A[:, 7]
        out = {i.counter_name: i for i in eomp_select(A, t, EompConfig(kappa=2, seed=0))}
        assert out["c3"].coefficient_sign == 1
        assert out["c7"].coefficient_sign == -1

    def test_zero_target_selects_nothing(self):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((10, 5))
        assert eomp_select(A, np.zeros(10), EompConfig(kappa=3)) == []

    def test_dimension_validation(self):
        rng = np.random.default_rng(0)
        A = rng.standard_normal((10, 5))
        t = rng.standard_normal(10)
        with pytest.raises(DimensionMismatch):
            eomp_select(A, None)
        with pytest.raises(DimensionMismatch):
            eomp_select(A, rng.standard_normal(9))
        for bad in (EompConfig(kappa=0), EompConfig(kappa=6)):
            with pytest.raises(DimensionMismatch):
                eomp_select(A, t, bad)
        with pytest.raises(DimensionMismatch):
            eomp_select(A, t, EompConfig(tau_pool=0))
        with pytest.raises(DimensionMismatch):
            eomp_select(A, t, EompConfig(ensembles=0))

    def test_kappa_truncates_report(self):
        rng = np.random.default_rng(21)
        A, t, _ = planted_instance(rng, k=6)
        out = eomp_select(A, t, EompConfig(kappa=3, seed=2))
        assert len(out) <= 3


class TestDescribeCounters:
    def _item(self, name, weight, rank=1):
        return CounterImportance(name, weight, 0.8, f"IA-{rank:02d}")

    def test_exact_line_format(self):
        items = [self._item("dram__bytes_write", 1.0), self._item("sm__warps_active", 0.04567, rank=2)]
        lines = describe_counters(items, {"dram__bytes_write": "DRAM write volume", "sm__warps_active": "active warps"})
        assert lines == [
            ("IA-01", "IA-01: dram__bytes_write — DRAM write volume (impact 1.00)"),
            ("IA-02", "IA-02: sm__warps_active — active warps (impact 0.0457)"),
        ]
        assert items[0].description == "DRAM write volume"

    def test_missing_dictionary_entry_keeps_raw_name(self, caplog):
        item = self._item("mystery__counter", 0.5)
        with caplog.at_level("WARNING"):
            lines = describe_counters([item], {})
        assert lines[0][1] == "IA-01: mystery__counter — mystery__counter (impact 0.500)"
        assert item.description == "mystery__counter"
        assert any("mystery__counter" in r.message for r in caplog.records)
