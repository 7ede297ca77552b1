"""Hardware-counter selection.

Profilers expose far more counters than a prompt can carry, and most move
together. This module whittles the counter matrix down to a handful that
explain runtime variation: z-score the columns, then run an ensemble of
randomized greedy pursuits over the normalized dictionary and average the
selections. Randomizing the greedy choice over a small candidate pool
decorrelates the runs, so counters that merely shadow a stronger one stop
being picked every time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import AllColumnsDegenerate, DimensionMismatch
from .ingest import CounterMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class EompConfig:
    """Knobs for the ensemble pursuit.

    kappa: support size per run and final report length.
    tau_pool: candidates considered per greedy step (1 = classical greedy).
    ensembles: independent randomized runs to average.
    epsilon_stop: stop a run early when no remaining column correlates.
    """

    kappa: int = 5
    tau_pool: int = 5
    ensembles: int = 10
    seed: int = 0
    epsilon_stop: float = 1e-10
    ridge_scale: float = 1e-8


@dataclass(slots=True)
class CounterImportance:
    counter_name: str
    avg_weight: float
    selection_frequency: float
    diagnostic_id: str
    description: str = ""
    coefficient_sign: int = field(default=0)


def zscore_normalize(matrix: CounterMatrix) -> CounterMatrix:
    """Standardize each counter column to mean 0, population variance 1.

    Zero-variance columns carry no signal and would divide by zero; they
    are dropped with a warning. Runtimes pass through untouched.
    """
    values = matrix.values
    means = values.mean(axis=0)
    stds = values.std(axis=0)  # population sigma, ddof=0
    keep = stds > 0
    dropped = [name for name, k in zip(matrix.counter_names, keep) if not k]
    if dropped:
        logger.warning("dropping %d zero-variance counter(s): %s", len(dropped), ", ".join(dropped))
    if not np.any(keep):
        raise AllColumnsDegenerate("every counter column has zero variance")
    normalized = (values[:, keep] - means[keep]) / stds[keep]
    return CounterMatrix(
        run_ids=list(matrix.run_ids),
        counter_names=[n for n, k in zip(matrix.counter_names, keep) if k],
        values=normalized,
        runtimes_s=matrix.runtimes_s.copy(),
    )


def _ridge_lstsq(A_S: np.ndarray, t: np.ndarray, ridge_scale: float) -> np.ndarray:
    """Least squares on the support with a trace-scaled ridge for stability."""
    gram = A_S.T @ A_S
    k = A_S.shape[1]
    lam = ridge_scale * np.trace(gram) / k
    try:
        return np.linalg.solve(gram + lam * np.eye(k), A_S.T @ t)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(A_S, t, rcond=None)[0]


def _sample_from_pool(pool: np.ndarray, corr: np.ndarray, rng: np.random.Generator) -> int:
    """Pick one pool index with probability proportional to its correlation.

    Renormalizes over the strictly positive correlations; a pool where all
    correlations are equal (including all zero) falls back to uniform.
    """
    weights = corr[pool]
    if np.all(weights == weights[0]):
        return int(rng.choice(pool))
    positive = weights > 0
    probs = np.where(positive, weights, 0.0)
    return int(rng.choice(pool, p=probs / probs.sum()))


def eomp_select(
    D: CounterMatrix | np.ndarray,
    t: np.ndarray | None = None,
    cfg: EompConfig = EompConfig(),
) -> list[CounterImportance]:
    """Ensemble orthogonal pursuit over a normalized counter dictionary.

    Each of cfg.ensembles runs restarts from the full residual (r = t,
    empty support) and greedily grows a support of size cfg.kappa: compute
    correlations |D_i^T r| over unselected columns, take the top
    cfg.tau_pool as a candidate pool, sample one proportionally to its
    correlation, then refit and update r = t - D_S a with a regularized
    least squares on the support. A run's counters are weighted by the
    absolute final coefficients; averaging across runs (zero when a run
    did not select a counter) gives the importance ranking, truncated to
    cfg.kappa entries.

    With tau_pool=1 and ensembles=1 the pool is a single argmax and the
    procedure reduces to the classical greedy pursuit.

    Deterministic for a fixed (input, seed): run e draws from
    default_rng([seed, e]), so runs are independent and order-insensitive.
    """
    if isinstance(D, CounterMatrix):
        A = D.values
        names = list(D.counter_names)
        if t is None:
            t = D.runtimes_s
    else:
        A = np.asarray(D, dtype=float)
        names = [f"c{i}" for i in range(A.shape[1])]
    if t is None:
        raise DimensionMismatch("target vector t is required for a bare matrix")
    t = np.asarray(t, dtype=float).reshape(-1)
    n, c = A.shape
    if t.shape[0] != n:
        raise DimensionMismatch(f"t has {t.shape[0]} entries but D has {n} rows")
    if not 1 <= cfg.kappa <= c:
        raise DimensionMismatch(f"kappa must be in [1, {c}], got {cfg.kappa}")
    if cfg.tau_pool < 1 or cfg.ensembles < 1:
        raise DimensionMismatch("tau_pool and ensembles must be >= 1")

    weight_sum = np.zeros(c)
    coef_sum = np.zeros(c)
    select_count = np.zeros(c)
    for e in range(cfg.ensembles):
        rng = np.random.default_rng([cfg.seed, e])
        support: list[int] = []
        r = t.copy()
        while len(support) < cfg.kappa:
            corr = np.abs(A.T @ r)
            corr[support] = -np.inf
            if corr.max() < cfg.epsilon_stop:
                break
            # Top tau_pool by correlation, ties toward the lower index.
            order = np.lexsort((np.arange(c), -corr))
            pool = order[: min(cfg.tau_pool, c - len(support))]
            pick = _sample_from_pool(pool, corr, rng)
            support.append(pick)
            coef = _ridge_lstsq(A[:, support], t, cfg.ridge_scale)
            r = t - A[:, support] @ coef
        if not support:
            continue
        coef = _ridge_lstsq(A[:, support], t, cfg.ridge_scale)
        for j, idx in enumerate(support):
            weight_sum[idx] += abs(coef[j])
            coef_sum[idx] += coef[j]
            select_count[idx] += 1

    avg = weight_sum / cfg.ensembles
    ranked = sorted(range(c), key=lambda i: (-avg[i], names[i]))
    out: list[CounterImportance] = []
    for rank, i in enumerate(ranked, start=1):
        if avg[i] <= 0 or len(out) >= cfg.kappa:
            break
        out.append(
            CounterImportance(
                counter_name=names[i],
                avg_weight=float(avg[i]),
                selection_frequency=float(select_count[i] / cfg.ensembles),
                diagnostic_id=f"IA-{rank:02d}",
                coefficient_sign=int(np.sign(coef_sum[i])),
            )
        )
    return out


def describe_counters(
    selection: list[CounterImportance], dictionary: dict[str, str]
) -> list[tuple[str, str]]:
    """Render selected counters as cited summary lines.

    Format (exact): IA-<k>: <name> — <description> (impact <weight, 3 sig
    figs>). A counter missing from the dictionary keeps its raw name as
    the description, with a warning. Descriptions are also filled into the
    CounterImportance records in place.
    """
    lines: list[tuple[str, str]] = []
    for item in selection:
        description = dictionary.get(item.counter_name)
        if description is None:
            logger.warning("no dictionary entry for counter %s", item.counter_name)
            description = item.counter_name
        item.description = description
        text = f"{item.diagnostic_id}: {item.counter_name} — {description} (impact {item.avg_weight:#.3g})"
        lines.append((item.diagnostic_id, text))
    return lines
