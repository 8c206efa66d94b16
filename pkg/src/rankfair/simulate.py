"""Synthetic annotators with controlled accuracy, synthetic evaluation
testbeds, and accuracy-vs-correlation sweeps.

Annotation accuracy is controlled directly through row-stochastic confusion
matrices instead of training classifiers, which isolates the relationship
between annotation quality and metric agreement. All randomness is either
seeded or derived from per-document hashes, so every result is a pure
function of its inputs and independent of iteration order or scheduling.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .core import (
    GroupMembershipTable,
    GroupScheme,
    MembershipVector,
    Qrels,
    Ranking,
    RunSet,
    one_hot,
)
from .errors import AccuracyOutOfRange, ConstantInput
from .metrics import MetricConfig, evaluate_runset
from .stats import ALPHA, CorrelationResult, pearson, spearman


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row-stochastic relabeling model: entry (i, j) is the probability that
    a document truly in group i is annotated as group j."""

    scheme: GroupScheme
    rows: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(tuple(float(x) for x in r) for r in self.rows))
        k = self.scheme.k
        if len(self.rows) != k or any(len(r) != k for r in self.rows):
            raise ValueError(f"confusion matrix must be {k}x{k}")
        for r in self.rows:
            if any(x < 0 for x in r):
                raise ValueError("confusion entries must be non-negative")
            if abs(math.fsum(r) - 1.0) > 1e-9:
                raise ValueError("confusion rows must sum to one")

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rows, dtype=np.float64)


def confusion_for_accuracy(
    scheme: GroupScheme,
    accuracy: float,
    style: str = "uniform",
    bias_target: int | None = None,
) -> ConfusionMatrix:
    """Confusion matrix whose expected accuracy under balanced groups is
    ``accuracy``.

    ``uniform`` spreads each group's error mass evenly over the other
    groups. ``biased`` concentrates it on a single target group (default:
    the unknown group if the scheme has one, else the last group), mimicking
    annotators that collapse hard cases into one label.
    """
    k = scheme.k
    lo = 1.0 / k
    if accuracy < lo - 1e-12 or accuracy > 1.0 + 1e-12:
        raise AccuracyOutOfRange(f"accuracy {accuracy} outside [{lo}, 1]")
    accuracy = min(max(accuracy, lo), 1.0)
    off = (1.0 - accuracy) / (k - 1)
    if style == "uniform":
        rows = tuple(
            tuple(accuracy if i == j else off for j in range(k)) for i in range(k)
        )
    elif style == "biased":
        target = bias_target
        if target is None:
            target = scheme.unknown_index if scheme.unknown_index is not None else k - 1
        if not 0 <= target < k:
            raise ValueError(f"bias target {target} out of range")
        rows = []
        for i in range(k):
            if i == target:
                rows.append(tuple(accuracy if j == i else off for j in range(k)))
            else:
                rows.append(
                    tuple(
                        accuracy if j == i else (1.0 - accuracy if j == target else 0.0)
                        for j in range(k)
                    )
                )
        rows = tuple(rows)
    else:
        raise ValueError(f"unknown confusion style {style!r}")
    return ConfusionMatrix(scheme, rows)


def _doc_uniform(seed: int, doc_id: str) -> float:
    """Uniform draw in [0, 1) from a per-document hash stream."""
    digest = hashlib.blake2b(f"{seed}:{doc_id}".encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") / 2.0**64


def apply_confusion(
    table: GroupMembershipTable,
    matrix: ConfusionMatrix,
    seed: int = 0,
    mode: str = "hard",
) -> GroupMembershipTable:
    """Corrupt one scheme's annotations through a confusion matrix.

    ``hard`` relabels each document's argmax group i to a one-hot label j
    drawn with probability rows[i][j]; the draw comes from a hash of
    (seed, doc id), so it does not depend on iteration order. ``soft``
    replaces each vector v by v @ rows deterministically. Other schemes in
    the table are passed through unchanged; the result is tagged synthetic.
    """
    if mode not in ("hard", "soft"):
        raise ValueError(f"unknown corruption mode {mode!r}")
    scheme = matrix.scheme
    index, stored = table.matrix(scheme.name)
    ids = sorted(index, key=index.get)
    m = matrix.as_array()
    if mode == "soft":
        new_rows = stored @ m
    else:
        truth = np.argmax(stored, axis=1)  # ties resolve to the lowest index
        draws = np.array([_doc_uniform(seed, doc_id) for doc_id in ids])
        cum = np.cumsum(m, axis=1)
        labels = np.empty(len(ids), dtype=np.intp)
        for g in range(scheme.k):
            mask = truth == g
            if mask.any():
                labels[mask] = np.searchsorted(cum[g], draws[mask], side="right")
        np.clip(labels, 0, scheme.k - 1, out=labels)
        new_rows = np.zeros((len(ids), scheme.k), dtype=np.float64)
        new_rows[np.arange(len(ids)), labels] = 1.0
    corrupted = {
        doc_id: MembershipVector(scheme, tuple(new_rows[row]))
        for row, doc_id in enumerate(ids)
    }
    vectors = {name: dict(table.docs(name)) for name in table.scheme_names}
    vectors[scheme.name] = corrupted
    all_schemes = [table.scheme(name) for name in table.scheme_names]
    return GroupMembershipTable(all_schemes, vectors, provenance="synthetic")


# --- synthetic testbeds ---------------------------------------------------------------


@dataclass(frozen=True)
class TestbedConfig:
    """Shape of a synthetic evaluation testbed.

    ``spread`` controls how far the least fair system is pushed toward a
    maximally skewed ranking; system s mixes the group-balanced and skewed
    orders with weight ``spread * s / (n_systems - 1)``.
    """

    n_queries: int = 50
    docs_per_query: int = 1000
    n_groups: int = 4
    n_systems: int = 30
    spread: float = 1.0
    grade_probs: tuple[float, ...] = (0.7, 0.2, 0.1)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "grade_probs", tuple(float(p) for p in self.grade_probs))
        if min(self.n_queries, self.docs_per_query, self.n_systems) < 1:
            raise ValueError("testbed counts must be at least 1")
        if self.n_groups < 2:
            raise ValueError("testbed needs at least 2 groups")
        if not 0.0 <= self.spread <= 1.0:
            raise ValueError("spread must lie in [0, 1]")
        if not self.grade_probs or any(p < 0 for p in self.grade_probs):
            raise ValueError("grade probabilities must be non-negative")
        if abs(math.fsum(self.grade_probs) - 1.0) > 1e-9:
            raise ValueError("grade probabilities must sum to one")


class Testbed(NamedTuple):
    table: GroupMembershipTable
    qrels: Qrels
    runset: RunSet

    @property
    def scheme_name(self) -> str:
        return self.table.scheme_names[0]


def generate_testbed(config: TestbedConfig) -> Testbed:
    """Deterministically generate ground-truth annotations, judgments, and a
    run set whose systems span a controlled range of fairness quality.

    Each query gets its own documents with uniformly random one-hot group
    memberships and grades drawn from ``grade_probs``. System s ranks by a
    mix of a rotating round-robin (group-balanced) order and a group-sorted
    (maximally skewed) order; ties break by document id.
    """
    k = config.n_groups
    scheme = GroupScheme("group", tuple(f"g{i}" for i in range(k)))
    rng = np.random.default_rng(config.seed)
    if config.n_systems > 1:
        lambdas = [
            config.spread * s / (config.n_systems - 1) for s in range(config.n_systems)
        ]
    else:
        lambdas = [0.0]
    vectors: dict[str, MembershipVector] = {}
    judgments: dict[str, dict[str, int]] = {}
    rankings: list[Ranking] = []
    for qi in range(config.n_queries):
        qid = f"q{qi:03d}"
        n = config.docs_per_query
        doc_ids = [f"{qid}_d{di:04d}" for di in range(n)]
        groups = rng.integers(0, k, size=n)
        grades = rng.choice(len(config.grade_probs), size=n, p=config.grade_probs)
        for doc_id, g in zip(doc_ids, groups):
            vectors[doc_id] = one_hot(scheme, int(g))
        judgments[qid] = {doc_id: int(g) for doc_id, g in zip(doc_ids, grades)}

        perm = rng.permutation(n)
        queues: list[list[int]] = [[] for _ in range(k)]
        for j in perm:
            queues[groups[j]].append(int(j))
        # balanced order: round-robin with the leading group rotating each
        # cycle and across queries, so no group systematically owns rank 1
        pos_balanced = np.empty(n, dtype=np.float64)
        pointers = [0] * k
        position = 0
        cycle = 0
        while position < n:
            for offset in range(k):
                g = (qi + cycle + offset) % k
                if pointers[g] < len(queues[g]):
                    pos_balanced[queues[g][pointers[g]]] = position
                    pointers[g] += 1
                    position += 1
            cycle += 1
        pos_skewed = np.empty(n, dtype=np.float64)
        position = 0
        for g in range(k):
            for j in queues[g]:
                pos_skewed[j] = position
                position += 1
        for s, lam in enumerate(lambdas):
            keys = (1.0 - lam) * pos_balanced + lam * pos_skewed
            order = np.argsort(keys, kind="stable")
            entries = tuple(
                (doc_ids[int(j)], float(n - rank)) for rank, j in enumerate(order)
            )
            rankings.append(Ranking(qid, entries, f"sys{s:02d}"))
    table = GroupMembershipTable([scheme], {scheme.name: vectors}, provenance="synthetic")
    return Testbed(table, Qrels(judgments), RunSet(rankings))


# --- accuracy sweeps ---------------------------------------------------------------------


@dataclass(frozen=True)
class SweepTrial:
    """System-level and per-query agreement for one corrupted evaluation."""

    accuracy: float
    trial: int
    pearson: CorrelationResult
    spearman: CorrelationResult
    query_r_mean: float
    query_r_min: float
    query_r_max: float
    query_frac_significant: float
    query_count: int
    query_skipped: int


@dataclass(frozen=True)
class SweepLevel:
    """Trial means at one accuracy level."""

    accuracy: float
    pearson_r: float
    spearman_rho: float
    query_r_mean: float
    query_frac_significant: float


@dataclass(frozen=True)
class SweepResult:
    levels: tuple[float, ...]
    trials: tuple[SweepTrial, ...]
    summary: tuple[SweepLevel, ...]


def _trial_seed(seed: int, level_index: int, trial: int) -> int:
    digest = hashlib.blake2b(
        f"sweep:{seed}:{level_index}:{trial}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


def accuracy_sweep(
    testbed: Testbed,
    levels: Sequence[float],
    trials: int,
    metric_config: MetricConfig | None = None,
    seed: int = 0,
    workers: int = 1,
    style: str = "uniform",
    alpha: float = ALPHA,
    scheme_name: str | None = None,
) -> SweepResult:
    """Corrupt annotations at each accuracy level and correlate the degraded
    system scores against the ground-truth ones.

    Each (level, trial) cell corrupts the table hard-label style with its own
    derived seed, re-evaluates every system, and records Pearson/Spearman
    over system means plus a summary of per-query Pearson coefficients.
    Results are identical for serial and parallel execution.
    """
    if trials < 1:
        raise ValueError("need at least one trial per level")
    level_list = sorted({float(a) for a in levels})
    if not level_list:
        raise ValueError("need at least one accuracy level")
    table, qrels, runset = testbed.table, testbed.qrels, testbed.runset
    scheme_name = scheme_name or testbed.scheme_name
    scheme = table.scheme(scheme_name)
    for a in level_list:  # validate all levels before any work
        confusion_for_accuracy(scheme, a, style)
    config = metric_config or MetricConfig()
    metric = f"awrf:{scheme_name}"

    truth = evaluate_runset(runset, qrels, table, [scheme_name], config)
    systems = sorted(truth)
    truth_sys = np.array([truth[s].aggregates[metric] for s in systems])
    queries = truth[systems[0]].queries
    truth_query = {
        q: np.array([truth[s].per_query[q][metric] for s in systems]) for q in queries
    }

    def run_cell(cell: tuple[int, int]) -> SweepTrial:
        level_index, trial = cell
        accuracy = level_list[level_index]
        cm = confusion_for_accuracy(scheme, accuracy, style)
        corrupted = apply_confusion(
            table, cm, seed=_trial_seed(seed, level_index, trial), mode="hard"
        )
        degraded = evaluate_runset(runset, qrels, corrupted, [scheme_name], config)
        sys_scores = np.array([degraded[s].aggregates[metric] for s in systems])
        pr = pearson(sys_scores, truth_sys)
        sr = spearman(sys_scores, truth_sys)
        rs: list[float] = []
        significant = 0
        skipped = 0
        for q in queries:
            xs = np.array([degraded[s].per_query[q][metric] for s in systems])
            try:
                c = pearson(xs, truth_query[q])
            except ConstantInput:
                skipped += 1
                continue
            rs.append(c.coefficient)
            significant += c.p_value < alpha
        count = len(rs)
        return SweepTrial(
            accuracy=accuracy,
            trial=trial,
            pearson=pr,
            spearman=sr,
            query_r_mean=math.fsum(rs) / count if count else float("nan"),
            query_r_min=min(rs) if count else float("nan"),
            query_r_max=max(rs) if count else float("nan"),
            query_frac_significant=significant / count if count else float("nan"),
            query_count=count,
            query_skipped=skipped,
        )

    cells = [(li, ti) for li in range(len(level_list)) for ti in range(trials)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(cell) for cell in cells]

    summary = []
    for li, accuracy in enumerate(level_list):
        rows = results[li * trials : (li + 1) * trials]
        summary.append(
            SweepLevel(
                accuracy=accuracy,
                pearson_r=math.fsum(r.pearson.coefficient for r in rows) / trials,
                spearman_rho=math.fsum(r.spearman.coefficient for r in rows) / trials,
                query_r_mean=math.fsum(r.query_r_mean for r in rows) / trials,
                query_frac_significant=math.fsum(r.query_frac_significant for r in rows)
                / trials,
            )
        )
    return SweepResult(tuple(level_list), tuple(results), tuple(summary))


def sweep_trials_to_csv(result: SweepResult) -> str:
    lines = ["accuracy,trial,pearson_r,pearson_p,spearman_rho,spearman_p\n"]
    for t in result.trials:
        lines.append(
            f"{t.accuracy!r},{t.trial},{t.pearson.coefficient!r},{t.pearson.p_value!r},"
            f"{t.spearman.coefficient!r},{t.spearman.p_value!r}\n"
        )
    return "".join(lines)


def sweep_summary_to_csv(result: SweepResult) -> str:
    """Trial means per accuracy level; plot-ready (x=accuracy, y=mean r)."""
    lines = ["accuracy,pearson_r,spearman_rho,query_r_mean,query_frac_significant\n"]
    for s in result.summary:
        lines.append(
            f"{s.accuracy!r},{s.pearson_r!r},{s.spearman_rho!r},"
            f"{s.query_r_mean!r},{s.query_frac_significant!r}\n"
        )
    return "".join(lines)


def sweep_to_json(result: SweepResult) -> str:
    payload = {
        "levels": list(result.levels),
        "trials": [
            {
                "accuracy": t.accuracy,
                "trial": t.trial,
                "pearson_r": t.pearson.coefficient,
                "pearson_p": t.pearson.p_value,
                "spearman_rho": t.spearman.coefficient,
                "spearman_p": t.spearman.p_value,
                "n_systems": t.pearson.n,
                "query_r_mean": t.query_r_mean,
                "query_r_min": t.query_r_min,
                "query_r_max": t.query_r_max,
                "query_frac_significant": t.query_frac_significant,
                "query_count": t.query_count,
                "query_skipped": t.query_skipped,
            }
            for t in result.trials
        ],
        "summary": [
            {
                "accuracy": s.accuracy,
                "pearson_r": s.pearson_r,
                "spearman_rho": s.spearman_rho,
                "query_r_mean": s.query_r_mean,
                "query_frac_significant": s.query_frac_significant,
            }
            for s in result.summary
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


# --- annotation cost --------------------------------------------------------------------


def annotation_cost(
    n_docs: float,
    tokens_per_doc: float,
    rate_per_million_tokens: float,
    fixed_cost: float = 0.0,
) -> float:
    """Price of annotating a corpus with a per-token-priced model."""
    if min(n_docs, tokens_per_doc, rate_per_million_tokens, fixed_cost) < 0:
        raise ValueError("cost inputs must be non-negative")
    return n_docs * tokens_per_doc * rate_per_million_tokens / 1e6 + fixed_cost


def default_cost_rates() -> dict:
    """Bundled pricing defaults (see data/cost_rates.json)."""
    from importlib import resources

    with resources.files("rankfair").joinpath("data/cost_rates.json").open("rb") as fh:
        return json.load(fh)
