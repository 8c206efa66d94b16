"""Core domain types: group schemes, membership distributions, rankings, judgments.

All types are immutable once constructed and every operation is pure, so
values can be shared freely across threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    LengthMismatch,
    MissingDocument,
    NoUnknownGroup,
    UnknownLabel,
    UnknownScheme,
    ZeroMass,
)

#: Tolerance on "sums to one" checks for membership and exposure vectors.
SUM_TOL = 1e-9

#: Allowed provenance tags for annotation tables.
PROVENANCE_TAGS = ("human", "model", "synthetic")


@dataclass(frozen=True)
class GroupScheme:
    """A named fairness category with an ordered list of group labels.

    ``unknown_index`` marks the label that stands for "membership unknown or
    not applicable", when the scheme has one. It behaves like any other group
    in all computations; it only matters to fallback policies and to targets
    that choose to exclude it.
    """

    name: str
    groups: tuple[str, ...]
    unknown_index: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if not self.name:
            raise ValueError("scheme name must be non-empty")
        if len(self.groups) < 2:
            raise ValueError("a scheme needs at least two groups")
        if any(not g for g in self.groups):
            raise ValueError("group labels must be non-empty")
        if len(set(self.groups)) != len(self.groups):
            raise ValueError("group labels must be unique")
        if self.unknown_index is not None and not 0 <= self.unknown_index < len(self.groups):
            raise ValueError("unknown_index out of range")

    @property
    def k(self) -> int:
        return len(self.groups)

    def index_of(self, label: str) -> int:
        try:
            return self.groups.index(label)
        except ValueError:
            raise UnknownLabel(f"label {label!r} not in scheme {self.name!r}") from None


@dataclass(frozen=True)
class MembershipVector:
    """Distribution over one scheme's groups for a single document.

    Weights are non-negative and sum to one within ``SUM_TOL``. One-hot
    vectors are the common case; soft distributions are equally valid.
    """

    scheme: GroupScheme
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != self.scheme.k:
            raise LengthMismatch(
                f"expected {self.scheme.k} weights for scheme {self.scheme.name!r}, "
                f"got {len(self.weights)}"
            )
        if any(w < 0 for w in self.weights):
            raise ValueError("membership weights must be non-negative")
        if abs(math.fsum(self.weights) - 1.0) > SUM_TOL:
            raise ValueError("membership weights must sum to one")

    def argmax(self) -> int:
        """Index of the heaviest group; ties go to the lowest index."""
        best = 0
        for i in range(1, len(self.weights)):
            if self.weights[i] > self.weights[best]:
                best = i
        return best

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)


class MissingPolicy(enum.Enum):
    """What to do when a document has no stored membership vector."""

    ALL_UNKNOWN = "all-unknown"  # put all mass on the scheme's unknown group
    UNIFORM = "uniform"          # spread mass equally over all groups
    REJECT = "reject"            # raise MissingDocument


def normalize(weights: Sequence[float], scheme: GroupScheme) -> MembershipVector:
    """Scale a raw non-negative weight list into a MembershipVector.

    A vector already summing to one within ``SUM_TOL`` is kept bit-for-bit
    unchanged, which makes normalization idempotent and serialization
    round-trips exact.
    """
    weights = [float(w) for w in weights]
    if len(weights) != scheme.k:
        raise LengthMismatch(
            f"expected {scheme.k} weights for scheme {scheme.name!r}, got {len(weights)}"
        )
    if any(w < 0 for w in weights):
        raise ValueError("weights must be non-negative")
    total = math.fsum(weights)
    if total == 0.0:
        raise ZeroMass(f"all-zero weights for scheme {scheme.name!r}")
    if abs(total - 1.0) > SUM_TOL:
        weights = [w / total for w in weights]
    return MembershipVector(scheme, tuple(weights))


def one_hot(scheme: GroupScheme, index: int) -> MembershipVector:
    """Membership vector with all mass on a single group."""
    if not 0 <= index < scheme.k:
        raise ValueError(f"group index {index} out of range for scheme {scheme.name!r}")
    return MembershipVector(scheme, tuple(1.0 if i == index else 0.0 for i in range(scheme.k)))


def fallback_vector(scheme: GroupScheme, policy: MissingPolicy) -> MembershipVector:
    """The vector a missing document resolves to under a non-reject policy."""
    if policy is MissingPolicy.UNIFORM:
        return MembershipVector(scheme, tuple(1.0 / scheme.k for _ in range(scheme.k)))
    if policy is MissingPolicy.ALL_UNKNOWN:
        if scheme.unknown_index is None:
            raise NoUnknownGroup(f"scheme {scheme.name!r} has no unknown group")
        return one_hot(scheme, scheme.unknown_index)
    raise ValueError(f"no fallback vector under policy {policy}")


class GroupMembershipTable:
    """Per-scheme mapping from document id to membership vector.

    Treat instances as immutable: build the full contents up front and never
    mutate them afterwards. ``provenance`` records where the annotations came
    from (human, model, or synthetic) and is metadata only; equality compares
    the membership data.
    """

    def __init__(
        self,
        schemes: Iterable[GroupScheme],
        vectors: Mapping[str, Mapping[str, MembershipVector]] | None = None,
        provenance: str = "human",
    ):
        if provenance not in PROVENANCE_TAGS:
            raise ValueError(f"provenance must be one of {PROVENANCE_TAGS}")
        self.provenance = provenance
        self._schemes: dict[str, GroupScheme] = {}
        for scheme in schemes:
            if scheme.name in self._schemes:
                raise ValueError(f"duplicate scheme {scheme.name!r}")
            self._schemes[scheme.name] = scheme
        self._vectors: dict[str, dict[str, MembershipVector]] = {
            name: {} for name in self._schemes
        }
        for scheme_name, docs in (vectors or {}).items():
            scheme = self.scheme(scheme_name)
            for doc_id, vector in docs.items():
                if vector.scheme.name != scheme.name:
                    raise ValueError(
                        f"vector for doc {doc_id!r} belongs to scheme "
                        f"{vector.scheme.name!r}, not {scheme_name!r}"
                    )
                self._vectors[scheme_name][doc_id] = vector
        self._matrices: dict[str, tuple[dict[str, int], np.ndarray]] = {}

    @property
    def scheme_names(self) -> tuple[str, ...]:
        return tuple(sorted(self._schemes))

    def scheme(self, name: str) -> GroupScheme:
        try:
            return self._schemes[name]
        except KeyError:
            raise UnknownScheme(f"scheme {name!r} is not registered") from None

    def docs(self, scheme_name: str) -> Mapping[str, MembershipVector]:
        self.scheme(scheme_name)
        return self._vectors[scheme_name]

    def get(self, scheme_name: str, doc_id: str) -> MembershipVector | None:
        return self.docs(scheme_name).get(doc_id)

    def matrix(self, scheme_name: str) -> tuple[dict[str, int], np.ndarray]:
        """Docs of one scheme packed as (doc id -> row index, row matrix).

        Rows follow sorted document id order. The result is cached; callers
        must not modify it.
        """
        if scheme_name not in self._matrices:
            scheme = self.scheme(scheme_name)
            ids = sorted(self._vectors[scheme_name])
            m = np.empty((len(ids), scheme.k), dtype=np.float64)
            for row, doc_id in enumerate(ids):
                m[row, :] = self._vectors[scheme_name][doc_id].weights
            m.setflags(write=False)
            self._matrices[scheme_name] = ({d: i for i, d in enumerate(ids)}, m)
        return self._matrices[scheme_name]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupMembershipTable):
            return NotImplemented
        return self._schemes == other._schemes and self._vectors == other._vectors

    def __repr__(self) -> str:
        sizes = {name: len(docs) for name, docs in self._vectors.items()}
        return f"GroupMembershipTable(provenance={self.provenance!r}, docs={sizes})"


def membership_of(
    table: GroupMembershipTable,
    doc_id: str,
    scheme: GroupScheme | str,
    fallback: MissingPolicy = MissingPolicy.REJECT,
) -> MembershipVector:
    """Look up a document's membership vector, resolving misses per policy."""
    name = scheme if isinstance(scheme, str) else scheme.name
    resolved = table.scheme(name)
    stored = table.get(name, doc_id)
    if stored is not None:
        return stored
    if fallback is MissingPolicy.REJECT:
        raise MissingDocument(f"doc {doc_id!r} has no membership for scheme {name!r}")
    return fallback_vector(resolved, fallback)


def product_scheme(s1: GroupScheme, s2: GroupScheme, name: str | None = None) -> GroupScheme:
    """Scheme over the cartesian product of two schemes' groups.

    Product labels are ``"<l1>|<l2>"`` laid out row-major by the first
    scheme's index. The product has an unknown group only when both parents
    do (the cell pairing the two unknown labels).
    """
    labels = tuple(f"{a}|{b}" for a in s1.groups for b in s2.groups)
    unknown = None
    if s1.unknown_index is not None and s2.unknown_index is not None:
        unknown = s1.unknown_index * s2.k + s2.unknown_index
    return GroupScheme(name or f"{s1.name}x{s2.name}", labels, unknown)


def intersect_schemes(v1: MembershipVector, v2: MembershipVector) -> MembershipVector:
    """Joint membership over the product scheme, assuming independence.

    Entry (i, j) of the result is ``v1[i] * v2[j]``; marginalizing the
    output over either scheme recovers the other input.
    """
    scheme = product_scheme(v1.scheme, v2.scheme)
    weights = tuple(a * b for a in v1.weights for b in v2.weights)
    return normalize(weights, scheme)


def intersect_tables(
    table: GroupMembershipTable,
    scheme_names: Sequence[str],
    fallback: MissingPolicy = MissingPolicy.REJECT,
    name: str = "overall",
) -> GroupMembershipTable:
    """Table over the product of several schemes, one vector per document.

    Covers the union of the schemes' document sets; a document missing from
    one side is resolved with ``fallback`` before intersecting.
    """
    if len(scheme_names) < 2:
        raise ValueError("intersection needs at least two schemes")
    schemes = [table.scheme(n) for n in scheme_names]
    joint = _fold_product(schemes)
    renamed = GroupScheme(name, joint.groups, joint.unknown_index)
    doc_ids = set()
    for n in scheme_names:
        doc_ids.update(table.docs(n))
    combined: dict[str, MembershipVector] = {}
    for doc_id in sorted(doc_ids):
        vector = membership_of(table, doc_id, schemes[0], fallback)
        for scheme in schemes[1:]:
            vector = intersect_schemes(vector, membership_of(table, doc_id, scheme, fallback))
        combined[doc_id] = MembershipVector(renamed, vector.weights)
    return GroupMembershipTable([renamed], {name: combined}, provenance=table.provenance)


def _fold_product(schemes: Sequence[GroupScheme]) -> GroupScheme:
    joint = schemes[0]
    for scheme in schemes[1:]:
        joint = product_scheme(joint, scheme)
    return joint


@dataclass(frozen=True)
class Ranking:
    """One system's ordered result list for one query.

    Rank is implicit: position 0 holds rank 1. The stored order is
    authoritative; scores are carried along but never re-sorted.
    """

    query_id: str
    entries: tuple[tuple[str, float], ...]
    system_tag: str

    def __post_init__(self):
        object.__setattr__(
            self, "entries", tuple((str(d), float(s)) for d, s in self.entries)
        )
        seen = set()
        for doc_id, _ in self.entries:
            if doc_id in seen:
                raise ValueError(
                    f"doc {doc_id!r} appears twice in ranking "
                    f"({self.system_tag!r}, {self.query_id!r})"
                )
            seen.add(doc_id)

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return tuple(d for d, _ in self.entries)


class RunSet:
    """All rankings of an experiment: system tag -> query id -> Ranking."""

    def __init__(self, rankings: Iterable[Ranking]):
        self._runs: dict[str, dict[str, Ranking]] = {}
        for ranking in rankings:
            per_system = self._runs.setdefault(ranking.system_tag, {})
            if ranking.query_id in per_system:
                raise ValueError(
                    f"duplicate ranking for ({ranking.system_tag!r}, {ranking.query_id!r})"
                )
            per_system[ranking.query_id] = ranking

    @property
    def systems(self) -> tuple[str, ...]:
        return tuple(sorted(self._runs))

    def queries(self, system_tag: str) -> tuple[str, ...]:
        return tuple(sorted(self._runs[system_tag]))

    @property
    def all_queries(self) -> tuple[str, ...]:
        seen = set()
        for per_system in self._runs.values():
            seen.update(per_system)
        return tuple(sorted(seen))

    def get(self, system_tag: str, query_id: str) -> Ranking | None:
        return self._runs.get(system_tag, {}).get(query_id)

    def rankings(self) -> Iterable[Ranking]:
        for system_tag in self.systems:
            for query_id in self.queries(system_tag):
                yield self._runs[system_tag][query_id]

    def __len__(self) -> int:
        return sum(len(per_system) for per_system in self._runs.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, RunSet):
            return NotImplemented
        return self._runs == other._runs

    def __repr__(self) -> str:
        return f"RunSet(systems={len(self._runs)}, rankings={len(self)})"


@dataclass(frozen=True)
class RankingSequence:
    """Ordered rankings delivered for one query, e.g. by a stochastic policy."""

    query_id: str
    rankings: tuple[Ranking, ...]
    policy: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rankings", tuple(self.rankings))
        if not self.rankings:
            raise ValueError("a ranking sequence must not be empty")
        for ranking in self.rankings:
            if ranking.query_id != self.query_id:
                raise ValueError(
                    f"ranking for query {ranking.query_id!r} in sequence for {self.query_id!r}"
                )

    def __len__(self) -> int:
        return len(self.rankings)


class Qrels:
    """Graded relevance judgments: query id -> doc id -> grade (int >= 0)."""

    def __init__(self, judgments: Mapping[str, Mapping[str, int]]):
        self._judgments: dict[str, dict[str, int]] = {}
        for query_id, docs in judgments.items():
            per_query: dict[str, int] = {}
            for doc_id, grade in docs.items():
                grade = int(grade)
                if grade < 0:
                    raise ValueError(f"negative grade for ({query_id!r}, {doc_id!r})")
                per_query[str(doc_id)] = grade
            self._judgments[str(query_id)] = per_query

    @property
    def queries(self) -> tuple[str, ...]:
        return tuple(sorted(self._judgments))

    def grades(self, query_id: str) -> Mapping[str, int]:
        return self._judgments.get(query_id, {})

    def relevant(self, query_id: str) -> dict[str, int]:
        """Docs with positive grade for the query."""
        return {d: g for d, g in self.grades(query_id).items() if g > 0}

    def __contains__(self, query_id: str) -> bool:
        return query_id in self._judgments

    def __len__(self) -> int:
        return len(self._judgments)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Qrels):
            return NotImplemented
        return self._judgments == other._judgments

    def __repr__(self) -> str:
        return f"Qrels(queries={len(self._judgments)})"
