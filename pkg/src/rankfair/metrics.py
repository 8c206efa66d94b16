"""Divergence functions, attention-weighted rank fairness, expected-exposure
metrics, and query-to-system aggregation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .core import (
    GroupMembershipTable,
    GroupScheme,
    MissingPolicy,
    Qrels,
    Ranking,
    RunSet,
    intersect_tables,
)
from .errors import ConfigError, LengthMismatch, NotADistribution
from .exposure import (
    DEFAULT_ATTENTION,
    AttentionModel,
    ExposureVector,
    cumulative_exposure,
    target_from_qrels,
    target_uniform,
)

LN2 = math.log(2.0)

#: Smoothing applied to both inputs of the KL divergence by default.
KL_EPSILON = 1e-10


def _as_distribution(p, name: str) -> np.ndarray:
    if isinstance(p, ExposureVector):
        p = p.masses
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1:
        raise NotADistribution(f"{name} must be a flat vector")
    if np.any(arr < 0):
        raise NotADistribution(f"{name} has negative entries")
    if abs(math.fsum(arr.tolist()) - 1.0) > 1e-9:
        raise NotADistribution(f"{name} does not sum to one")
    return arr


def kl_divergence(p, q, epsilon: float = KL_EPSILON) -> float:
    """Kullback-Leibler divergence KL(p || q) in nats.

    Both inputs are smoothed by ``epsilon`` and renormalized before the sum,
    which keeps the value finite when ``q`` has zero entries. Identical
    inputs give exactly zero.
    """
    p = _as_distribution(p, "p")
    q = _as_distribution(q, "q")
    if p.shape != q.shape:
        raise LengthMismatch(f"length {p.shape[0]} vs {q.shape[0]}")
    ps = p + epsilon
    qs = q + epsilon
    ps = ps / ps.sum()
    qs = qs / qs.sum()
    if epsilon == 0.0:
        mask = ps > 0
        with np.errstate(divide="ignore"):
            return float(np.sum(ps[mask] * np.log(ps[mask] / qs[mask])))
    return float(np.sum(ps * np.log(ps / qs)))


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence in nats; symmetric, bounded by ln 2.

    Needs no smoothing: where the mixture is zero both inputs are zero and
    the contribution vanishes.
    """
    p = _as_distribution(p, "p")
    q = _as_distribution(q, "q")
    if p.shape != q.shape:
        raise LengthMismatch(f"length {p.shape[0]} vs {q.shape[0]}")
    m = (p + q) / 2.0
    return 0.5 * _kl_terms(p, m) + 0.5 * _kl_terms(q, m)


def _kl_terms(a: np.ndarray, b: np.ndarray) -> float:
    mask = a > 0
    return float(np.sum(a[mask] * np.log(a[mask] / b[mask])))


_DIVERGENCES = {"kl": kl_divergence, "js": js_divergence}


def divergence_fn(name: str):
    try:
        return _DIVERGENCES[name]
    except KeyError:
        raise ConfigError(f"unknown divergence {name!r}; expected one of {sorted(_DIVERGENCES)}") from None


def worst_case_divergence(name: str, k: int, epsilon: float = KL_EPSILON) -> float:
    """Divergence of two maximally different rankings' exposures.

    Used as the score of a query a system failed to return: ln 2 for JS, and
    for KL the smoothed divergence between two disjoint one-hot vectors.
    """
    if name == "js":
        return LN2
    a = np.zeros(k)
    b = np.zeros(k)
    a[0] = 1.0
    b[1] = 1.0
    return kl_divergence(a, b, epsilon)


def awrf(
    ranking: Ranking,
    table: GroupMembershipTable,
    scheme: GroupScheme | str,
    target: ExposureVector,
    model: AttentionModel = DEFAULT_ATTENTION,
    divergence: str = "js",
    epsilon: float = KL_EPSILON,
    fallback: MissingPolicy = MissingPolicy.REJECT,
) -> float:
    """Attention-weighted rank fairness: divergence between a ranking's
    normalized cumulative exposure and the target distribution.

    Lower is fairer; zero means the ranking's exposure matches the target.
    """
    scheme = table.scheme(scheme) if isinstance(scheme, str) else scheme
    if not target.normalized and abs(target.total - 1.0) > 1e-9:
        raise NotADistribution("target exposure must be normalized")
    observed = cumulative_exposure(ranking, table, scheme, model, fallback).normalize()
    if divergence == "kl":
        return kl_divergence(observed.masses, target.masses, epsilon)
    if divergence == "js":
        return js_divergence(observed.masses, target.masses)
    raise ConfigError(f"unknown divergence {divergence!r}")


class EEMetrics(NamedTuple):
    """Expected-exposure triple: loss, disparity, relevance agreement."""

    ee_l: float
    ee_d: float
    ee_r: float


def ee_metrics(gamma: ExposureVector, gamma_star: ExposureVector) -> EEMetrics:
    """Expected-exposure metrics over raw (unnormalized) exposure masses.

    EE-L is the squared L2 distance between delivered and target exposure,
    EE-D the squared norm of the delivered exposure, and EE-R twice their
    inner product, so that EE-L = EE-D + ||target||^2 - EE-R exactly.
    """
    if gamma.scheme.k != gamma_star.scheme.k:
        raise LengthMismatch(
            f"length {gamma.scheme.k} vs {gamma_star.scheme.k}"
        )
    g = gamma.as_array()
    t = gamma_star.as_array()
    diff = g - t
    return EEMetrics(
        ee_l=float(np.dot(diff, diff)),
        ee_d=float(np.dot(g, g)),
        ee_r=float(2.0 * np.dot(g, t)),
    )


# --- run-set evaluation -----------------------------------------------------------


@dataclass(frozen=True)
class MetricConfig:
    """Settings shared by every per-query AWRF computation.

    ``target`` selects the target exposure source: ``qrels-binary`` or
    ``qrels-graded`` average relevant documents' membership, ``uniform``
    spreads mass equally, ``file`` uses explicitly provided targets (keyed
    by scheme then query id, with ``"*"`` as a wildcard query).
    """

    attention: AttentionModel = DEFAULT_ATTENTION
    divergence: str = "js"
    epsilon: float = KL_EPSILON
    target: str = "qrels-binary"
    explicit_targets: Mapping[str, Mapping[str, ExposureVector]] | None = None
    fallback: MissingPolicy = MissingPolicy.UNIFORM
    include_overall: bool = True
    complement: bool = False
    exclude_unknown: bool = False

    def __post_init__(self):
        if self.divergence not in _DIVERGENCES:
            raise ConfigError(f"unknown divergence {self.divergence!r}")
        if self.target not in ("qrels-binary", "qrels-graded", "uniform", "file"):
            raise ConfigError(f"unknown target mode {self.target!r}")
        if self.target == "file" and self.explicit_targets is None:
            raise ConfigError("target mode 'file' needs explicit_targets")
        if self.complement and self.divergence != "js":
            raise ConfigError("complement scores are only defined for the js divergence")


@dataclass(frozen=True)
class MetricReport:
    """Per-query metric values and their per-system means.

    ``missing_queries`` lists evaluation queries the system returned no
    ranking for; those score the worst-case divergence.
    """

    system_tag: str
    per_query: Mapping[str, Mapping[str, float]]
    aggregates: Mapping[str, float]
    missing_queries: tuple[str, ...] = ()

    @property
    def queries(self) -> tuple[str, ...]:
        return tuple(sorted(self.per_query))

    @property
    def metrics(self) -> tuple[str, ...]:
        return tuple(sorted(self.aggregates))


def _aggregate(per_query: Mapping[str, Mapping[str, float]]) -> dict[str, float]:
    queries = sorted(per_query)
    if not queries:
        return {}
    metrics = sorted(per_query[queries[0]])
    return {
        m: math.fsum(per_query[q][m] for q in queries) / len(queries) for m in metrics
    }


def _evaluation_queries(runset: RunSet, qrels: Qrels | None, config: MetricConfig) -> list[str]:
    if config.target in ("qrels-binary", "qrels-graded"):
        if qrels is None:
            raise ConfigError("qrels-based targets need qrels")
        return [q for q in qrels.queries if qrels.relevant(q)]
    return list(runset.all_queries)


def _target_for(
    scheme: GroupScheme,
    query_id: str,
    qrels: Qrels | None,
    table: GroupMembershipTable,
    config: MetricConfig,
) -> ExposureVector:
    if config.target == "uniform":
        return target_uniform(scheme, exclude_unknown=config.exclude_unknown)
    if config.target == "file":
        per_scheme = (config.explicit_targets or {}).get(scheme.name, {})
        target = per_scheme.get(query_id, per_scheme.get("*"))
        if target is None:
            raise ConfigError(
                f"no explicit target for scheme {scheme.name!r}, query {query_id!r}"
            )
        return target
    mode = "binary" if config.target == "qrels-binary" else "graded"
    return target_from_qrels(qrels, query_id, table, scheme, mode, config.fallback)


def evaluate_runset(
    runset: RunSet,
    qrels: Qrels | None,
    table: GroupMembershipTable,
    schemes: Sequence[str],
    config: MetricConfig = MetricConfig(),
) -> dict[str, MetricReport]:
    """Per-query AWRF for every scheme (plus their intersection) and system.

    The evaluation query set is the qrels' queries with at least one
    relevant document for qrels-based targets, and the union of the runs'
    queries otherwise. A system missing an evaluation query scores the
    worst-case divergence there; run queries outside the evaluation set are
    ignored. Metric keys are ``awrf:<scheme>`` and ``awrf:overall``.
    """
    if not schemes:
        raise ConfigError("at least one scheme is required")
    work: list[tuple[str, GroupMembershipTable, GroupScheme]] = []
    for name in schemes:
        work.append((f"awrf:{name}", table, table.scheme(name)))
    if len(schemes) >= 2 and config.include_overall:
        overall = intersect_tables(table, list(schemes), fallback=config.fallback)
        work.append(("awrf:overall", overall, overall.scheme("overall")))
    queries = _evaluation_queries(runset, qrels, config)

    targets: dict[tuple[str, str], ExposureVector] = {}
    for metric, tbl, scheme in work:
        for query_id in queries:
            targets[(metric, query_id)] = _target_for(scheme, query_id, qrels, tbl, config)

    reports: dict[str, MetricReport] = {}
    for system_tag in runset.systems:
        per_query: dict[str, dict[str, float]] = {}
        missing: list[str] = []
        for query_id in queries:
            ranking = runset.get(system_tag, query_id)
            row: dict[str, float] = {}
            absent = ranking is None or len(ranking) == 0
            if absent:
                missing.append(query_id)
            for metric, tbl, scheme in work:
                if absent:
                    value = worst_case_divergence(
                        config.divergence, scheme.k, config.epsilon
                    )
                else:
                    value = awrf(
                        ranking,
                        tbl,
                        scheme,
                        targets[(metric, query_id)],
                        config.attention,
                        config.divergence,
                        config.epsilon,
                        config.fallback,
                    )
                if config.complement:
                    value = 1.0 - value / LN2
                row[metric] = value
            per_query[query_id] = row
        reports[system_tag] = MetricReport(
            system_tag=system_tag,
            per_query=per_query,
            aggregates=_aggregate(per_query),
            missing_queries=tuple(missing),
        )
    return reports


# --- serialization -----------------------------------------------------------------


def reports_to_csv(reports: Mapping[str, MetricReport]) -> str:
    """Per-query rows as ``system,query,metric,value``."""
    lines = ["system,query,metric,value\n"]
    for system_tag in sorted(reports):
        report = reports[system_tag]
        for query_id in report.queries:
            row = report.per_query[query_id]
            for metric in sorted(row):
                lines.append(f"{system_tag},{query_id},{metric},{row[metric]!r}\n")
    return "".join(lines)


def aggregates_to_csv(reports: Mapping[str, MetricReport]) -> str:
    """System-level rows as ``system,metric,value`` (mean over queries)."""
    lines = ["system,metric,value\n"]
    for system_tag in sorted(reports):
        report = reports[system_tag]
        for metric in report.metrics:
            lines.append(f"{system_tag},{metric},{report.aggregates[metric]!r}\n")
    return "".join(lines)


def reports_to_json(reports: Mapping[str, MetricReport]) -> str:
    payload = {
        system_tag: {
            "per_query": {q: dict(report.per_query[q]) for q in report.queries},
            "aggregates": dict(report.aggregates),
            "missing_queries": list(report.missing_queries),
        }
        for system_tag, report in reports.items()
    }
    return json.dumps({"systems": payload}, indent=2, sort_keys=True) + "\n"
