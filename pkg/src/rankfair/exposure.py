"""Attention models and group exposure.

Cumulative exposure of a ranking is the attention-weighted sum of the ranked
documents' membership vectors. Targets come from relevance judgments (mean
membership of relevant documents), from a uniform assumption, or, for
ranking sequences, from the equal-exposure-within-grade rule.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    SUM_TOL,
    GroupMembershipTable,
    GroupScheme,
    MissingPolicy,
    Qrels,
    Ranking,
    RankingSequence,
    fallback_vector,
    membership_of,
)
from .errors import (
    InvalidPatience,
    LengthMismatch,
    MissingDocument,
    NoJudgedDocuments,
    NoRelevantDocuments,
    NoUnknownGroup,
    ZeroMass,
)


@dataclass(frozen=True)
class AttentionModel:
    """Per-rank attention weights.

    * ``geometric``: weight ``p * (1-p)**(rank-1)`` with patience ``p``
    * ``log``: weight ``1 / log2(rank + 1)``
    * ``uniform``: weight 1 at every retained rank (requires a cutoff)

    ``cutoff`` truncates attention: ranks beyond it receive no weight.
    """

    kind: str
    patience: float = 0.5
    cutoff: int | None = None

    def __post_init__(self):
        if self.kind not in ("geometric", "log", "uniform"):
            raise ValueError(f"unknown attention model {self.kind!r}")
        if self.kind == "geometric" and not 0.0 < self.patience < 1.0:
            raise InvalidPatience(f"patience must be in (0, 1), got {self.patience}")
        if self.cutoff is not None and self.cutoff < 1:
            raise ValueError("cutoff must be at least 1")
        if self.kind == "uniform" and self.cutoff is None:
            raise ValueError("uniform attention requires a cutoff")

    @classmethod
    def geometric(cls, patience: float = 0.5, cutoff: int | None = None) -> "AttentionModel":
        return cls("geometric", patience=patience, cutoff=cutoff)

    @classmethod
    def log_discount(cls, cutoff: int | None = None) -> "AttentionModel":
        return cls("log", cutoff=cutoff)

    @classmethod
    def uniform(cls, top: int) -> "AttentionModel":
        return cls("uniform", cutoff=top)


#: Attention model used when a caller does not pick one.
DEFAULT_ATTENTION = AttentionModel.geometric(0.5)


def attention_weights(model: AttentionModel, n: int) -> np.ndarray:
    """Positive weights for ranks 1..min(n, cutoff)."""
    if n < 1:
        raise ValueError("ranking length must be at least 1")
    m = n if model.cutoff is None else min(n, model.cutoff)
    if model.kind == "geometric":
        return model.patience * (1.0 - model.patience) ** np.arange(m, dtype=np.float64)
    if model.kind == "log":
        return 1.0 / np.log2(np.arange(1, m + 1, dtype=np.float64) + 1.0)
    return np.ones(m, dtype=np.float64)


@dataclass(frozen=True)
class ExposureVector:
    """Per-group exposure mass, raw or normalized to a distribution."""

    scheme: GroupScheme
    masses: tuple[float, ...]
    normalized: bool = False

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(float(m) for m in self.masses))
        if len(self.masses) != self.scheme.k:
            raise LengthMismatch(
                f"expected {self.scheme.k} masses for scheme {self.scheme.name!r}, "
                f"got {len(self.masses)}"
            )
        if any(m < 0 for m in self.masses):
            raise ValueError("exposure masses must be non-negative")
        if self.normalized and abs(math.fsum(self.masses) - 1.0) > SUM_TOL:
            raise ValueError("normalized exposure must sum to one")

    @property
    def total(self) -> float:
        return math.fsum(self.masses)

    def normalize(self) -> "ExposureVector":
        """Scale masses to sum to one; zero total is an error.

        Masses already summing to one are kept bit-for-bit unchanged.
        """
        total = self.total
        if total == 0.0:
            raise ZeroMass(f"zero exposure mass for scheme {self.scheme.name!r}")
        if abs(total - 1.0) <= SUM_TOL:
            return dataclasses.replace(self, normalized=True)
        return ExposureVector(
            self.scheme, tuple(m / total for m in self.masses), normalized=True
        )

    def as_array(self) -> np.ndarray:
        return np.asarray(self.masses, dtype=np.float64)


def raw_exposure_array(
    ranking: Ranking,
    table: GroupMembershipTable,
    scheme: GroupScheme,
    model: AttentionModel,
    fallback: MissingPolicy = MissingPolicy.REJECT,
) -> np.ndarray:
    """Attention-weighted sum of membership rows for one ranking (raw masses)."""
    if len(ranking) == 0:
        raise ValueError("cannot compute exposure of an empty ranking")
    index, matrix = table.matrix(scheme.name)
    weights = attention_weights(model, len(ranking))
    m = len(weights)
    idx = np.empty(m, dtype=np.intp)
    missing: list[int] = []
    docs = ranking.doc_ids
    for pos in range(m):
        row = index.get(docs[pos], -1)
        idx[pos] = row
        if row < 0:
            missing.append(pos)
    if missing:
        if fallback is MissingPolicy.REJECT:
            raise MissingDocument(
                f"doc {docs[missing[0]]!r} has no membership for scheme {scheme.name!r}"
            )
        fill = fallback_vector(scheme, fallback).as_array()
        rows = np.empty((m, scheme.k), dtype=np.float64)
        present = idx >= 0
        if present.any():
            rows[present] = matrix[idx[present]]
        rows[~present] = fill
    else:
        rows = matrix[idx]
    return weights @ rows


def cumulative_exposure(
    ranking: Ranking,
    table: GroupMembershipTable,
    scheme: GroupScheme | str,
    model: AttentionModel = DEFAULT_ATTENTION,
    fallback: MissingPolicy = MissingPolicy.REJECT,
) -> ExposureVector:
    """Raw cumulative group exposure of a ranking.

    Call ``.normalize()`` on the result for the distribution form used by
    divergence-based metrics.
    """
    scheme = table.scheme(scheme) if isinstance(scheme, str) else scheme
    raw = raw_exposure_array(ranking, table, scheme, model, fallback)
    return ExposureVector(scheme, tuple(float(x) for x in raw), normalized=False)


def target_from_qrels(
    qrels: Qrels,
    query_id: str,
    table: GroupMembershipTable,
    scheme: GroupScheme | str,
    mode: str = "binary",
    fallback: MissingPolicy = MissingPolicy.REJECT,
    corpus_wide: bool = False,
) -> ExposureVector:
    """Target exposure as the mean membership of relevant documents.

    ``binary`` weighs every relevant document equally; ``graded`` weighs by
    relevance grade. With ``corpus_wide`` the mean pools every judged query's
    relevant documents instead of only ``query_id``'s.
    """
    if mode not in ("binary", "graded"):
        raise ValueError(f"unknown target mode {mode!r}")
    scheme = table.scheme(scheme) if isinstance(scheme, str) else scheme
    queries = qrels.queries if corpus_wide else (query_id,)
    pairs: list[tuple[str, int]] = []
    for qid in queries:
        pairs.extend(sorted(qrels.relevant(qid).items()))
    if not pairs:
        raise NoRelevantDocuments(f"no relevant documents for query {query_id!r}")
    coeffs = [1.0 if mode == "binary" else float(g) for _, g in pairs]
    denom = math.fsum(coeffs)
    masses = []
    for g in range(scheme.k):
        terms = [
            c * membership_of(table, doc, scheme, fallback).weights[g]
            for (doc, _), c in zip(pairs, coeffs)
        ]
        masses.append(math.fsum(terms) / denom)
    return ExposureVector(scheme, tuple(masses), normalized=False).normalize()


def target_uniform(scheme: GroupScheme, exclude_unknown: bool = False) -> ExposureVector:
    """Uniform target over the scheme's groups.

    With ``exclude_unknown`` the unknown group gets zero mass and the rest
    share the distribution equally.
    """
    if exclude_unknown:
        if scheme.unknown_index is None:
            raise NoUnknownGroup(f"scheme {scheme.name!r} has no unknown group")
        share = 1.0 / (scheme.k - 1)
        masses = tuple(
            0.0 if i == scheme.unknown_index else share for i in range(scheme.k)
        )
    else:
        masses = tuple(1.0 / scheme.k for _ in range(scheme.k))
    return ExposureVector(scheme, masses, normalized=True)


def expected_group_exposure(
    sequence: RankingSequence,
    table: GroupMembershipTable,
    scheme: GroupScheme | str,
    model: AttentionModel = DEFAULT_ATTENTION,
    fallback: MissingPolicy = MissingPolicy.REJECT,
) -> ExposureVector:
    """Mean raw exposure a ranking sequence delivers to each group.

    Uses exact summation per group, so the result is independent of the
    order rankings appear in the sequence.
    """
    scheme = table.scheme(scheme) if isinstance(scheme, str) else scheme
    arrays = [
        raw_exposure_array(r, table, scheme, model, fallback) for r in sequence.rankings
    ]
    n = len(arrays)
    masses = tuple(math.fsum(a[g] for a in arrays) / n for g in range(scheme.k))
    return ExposureVector(scheme, masses, normalized=False)


def target_group_exposure(
    qrels: Qrels,
    query_id: str,
    table: GroupMembershipTable,
    scheme: GroupScheme | str,
    model: AttentionModel = DEFAULT_ATTENTION,
    fallback: MissingPolicy = MissingPolicy.REJECT,
) -> ExposureVector:
    """Target group exposure under equal exposure within a relevance grade.

    Relevant documents are ranked by grade descending; all documents sharing
    a grade receive the mean attention weight of the positions their band
    occupies (the average over every grade-respecting permutation). Documents
    with grade zero receive no target exposure; a query with judgments but no
    relevant documents yields the all-zero vector.
    """
    scheme = table.scheme(scheme) if isinstance(scheme, str) else scheme
    if query_id not in qrels or not qrels.grades(query_id):
        raise NoJudgedDocuments(f"query {query_id!r} has no judgments")
    relevant = sorted(qrels.relevant(query_id).items(), key=lambda t: (-t[1], t[0]))
    if not relevant:
        return ExposureVector(scheme, (0.0,) * scheme.k, normalized=False)
    n = len(relevant)
    weights = attention_weights(model, n)
    padded = np.zeros(n, dtype=np.float64)
    padded[: len(weights)] = weights
    per_doc = np.empty(n, dtype=np.float64)
    start = 0
    while start < n:
        end = start
        while end + 1 < n and relevant[end + 1][1] == relevant[start][1]:
            end += 1
        band = padded[start : end + 1]
        per_doc[start : end + 1] = math.fsum(band) / len(band)
        start = end + 1
    rows = np.empty((n, scheme.k), dtype=np.float64)
    for pos, (doc, _) in enumerate(relevant):
        rows[pos, :] = membership_of(table, doc, scheme, fallback).weights
    gamma = per_doc @ rows
    return ExposureVector(scheme, tuple(float(x) for x in gamma), normalized=False)
