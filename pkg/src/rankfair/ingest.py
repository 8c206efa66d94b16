"""Readers and writers for run files, qrels, and annotation tables, plus
stratified sampling of annotated documents.

All parsers are single-pass and stateless; all writers emit deterministic,
sorted output so that byte-level comparisons are meaningful. Every parser
round-trips with its writer: ``parse(write(x)) == x``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import IO, Iterator, Sequence

import numpy as np

from .core import (
    GroupMembershipTable,
    GroupScheme,
    MembershipVector,
    Qrels,
    Ranking,
    RunSet,
    normalize,
)
from .errors import (
    DuplicateDocument,
    DuplicateJudgment,
    InsufficientDocuments,
    MalformedLine,
    NegativeGrade,
    NonNumericRank,
    NonNumericScore,
    UnknownLabel,
    UnknownScheme,
    ZeroMass,
)


def _lines(source: str | bytes | IO) -> Iterator[tuple[int, str]]:
    """Yield (1-based line number, text) from a string, bytes, or file object."""
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    for number, line in enumerate(text.splitlines(), start=1):
        yield number, line


# --- run files ----------------------------------------------------------------


def parse_run(source: str | bytes | IO) -> RunSet:
    """Parse a TREC-style run: ``<qid> Q0 <docid> <rank> <score> <tag>``.

    Fields are separated by runs of spaces or tabs. The second field is
    carried for compatibility and its content is ignored. Entries are
    ordered by the rank field ascending (ties keep input order), regardless
    of the order lines appear in.
    """
    staged: dict[tuple[str, str], list[tuple[int, int, str, float]]] = {}
    seen: set[tuple[str, str, str]] = set()
    for number, line in _lines(source):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 6:
            raise MalformedLine(f"expected 6 fields, got {len(fields)}", line=number)
        qid, _, doc_id, rank_s, score_s, tag = fields
        try:
            rank = int(rank_s)
        except ValueError:
            raise NonNumericRank(f"rank {rank_s!r}", line=number) from None
        try:
            score = float(score_s)
        except ValueError:
            raise NonNumericScore(f"score {score_s!r}", line=number) from None
        key = (tag, qid, doc_id)
        if key in seen:
            raise DuplicateDocument(
                f"doc {doc_id!r} repeated for ({tag!r}, {qid!r})", line=number
            )
        seen.add(key)
        staged.setdefault((tag, qid), []).append((rank, number, doc_id, score))
    rankings = []
    for (tag, qid), rows in staged.items():
        rows.sort(key=lambda r: (r[0], r[1]))
        rankings.append(Ranking(qid, tuple((d, s) for _, _, d, s in rows), tag))
    return RunSet(rankings)


def write_run(runset: RunSet) -> str:
    """Serialize a RunSet; systems and queries sorted, ranks renumbered 1..n."""
    out = []
    for ranking in runset.rankings():
        for position, (doc_id, score) in enumerate(ranking.entries, start=1):
            out.append(
                f"{ranking.query_id} Q0 {doc_id} {position} {score!r} {ranking.system_tag}\n"
            )
    return "".join(out)


# --- qrels ----------------------------------------------------------------------


def parse_qrels(source: str | bytes | IO) -> Qrels:
    """Parse qrels lines ``<qid> <iter> <docid> <grade>``; iteration is ignored."""
    judgments: dict[str, dict[str, int]] = {}
    for number, line in _lines(source):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) != 4:
            raise MalformedLine(f"expected 4 fields, got {len(fields)}", line=number)
        qid, _, doc_id, grade_s = fields
        try:
            grade = int(grade_s)
        except ValueError:
            raise MalformedLine(f"grade {grade_s!r} is not an integer", line=number) from None
        if grade < 0:
            raise NegativeGrade(f"grade {grade} for ({qid!r}, {doc_id!r})", line=number)
        per_query = judgments.setdefault(qid, {})
        if doc_id in per_query:
            raise DuplicateJudgment(f"({qid!r}, {doc_id!r}) judged twice", line=number)
        per_query[doc_id] = grade
    return Qrels(judgments)


def write_qrels(qrels: Qrels) -> str:
    out = []
    for qid in qrels.queries:
        grades = qrels.grades(qid)
        for doc_id in sorted(grades):
            out.append(f"{qid} 0 {doc_id} {grades[doc_id]}\n")
    return "".join(out)


# --- annotation tables ----------------------------------------------------------


@dataclass(frozen=True)
class AnnotationRecord:
    """One parsed annotation row: a document's weights for one scheme."""

    doc_id: str
    scheme: str
    weights: tuple[tuple[str, float], ...]  # (label, raw weight), labels unique


def _record_to_vector(
    record: AnnotationRecord, schemes: dict[str, GroupScheme], line: int
) -> MembershipVector:
    if record.scheme not in schemes:
        raise UnknownScheme(f"scheme {record.scheme!r} not declared", line=line)
    scheme = schemes[record.scheme]
    raw = [0.0] * scheme.k
    for label, weight in record.weights:
        if label not in scheme.groups:
            raise UnknownLabel(
                f"label {label!r} not in scheme {record.scheme!r}", line=line
            )
        if weight < 0:
            raise MalformedLine(f"negative weight for label {label!r}", line=line)
        raw[scheme.groups.index(label)] = weight
    try:
        return normalize(raw, scheme)
    except ZeroMass:
        raise ZeroMass(f"all-zero weights for doc {record.doc_id!r}", line=line) from None


def _parse_tsv_record(line: str, number: int) -> AnnotationRecord:
    fields = line.split("\t")
    if len(fields) != 3:
        raise MalformedLine(f"expected 3 tab-separated fields, got {len(fields)}", line=number)
    doc_id, scheme, weight_spec = fields
    weights = []
    for part in weight_spec.split(","):
        label, sep, weight_s = part.rpartition(":")
        if not sep or not label:
            raise MalformedLine(f"bad label:weight pair {part!r}", line=number)
        try:
            weight = float(weight_s)
        except ValueError:
            raise MalformedLine(f"weight {weight_s!r} is not a number", line=number) from None
        weights.append((label, weight))
    return AnnotationRecord(doc_id, scheme, tuple(weights))


def _parse_jsonl_record(line: str, number: int) -> AnnotationRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedLine(f"invalid JSON ({exc.msg})", line=number) from None
    if not isinstance(obj, dict) or not {"doc", "scheme", "weights"} <= set(obj):
        raise MalformedLine("object needs keys doc, scheme, weights", line=number)
    weights = obj["weights"]
    if not isinstance(weights, dict):
        raise MalformedLine("weights must be an object", line=number)
    pairs = []
    for label, weight in weights.items():
        if not isinstance(weight, (int, float)) or isinstance(weight, bool):
            raise MalformedLine(f"weight for label {label!r} is not a number", line=number)
        pairs.append((str(label), float(weight)))
    return AnnotationRecord(str(obj["doc"]), str(obj["scheme"]), tuple(pairs))


def parse_annotations(
    source: str | bytes | IO,
    schemes: Sequence[GroupScheme],
    format: str = "tsv",
    provenance: str = "human",
) -> GroupMembershipTable:
    """Parse an annotation table in TSV or JSONL form.

    TSV rows are ``<docid>\\t<scheme>\\t<label>:<weight>[,<label>:<weight>...]``;
    JSONL rows are ``{"doc": ..., "scheme": ..., "weights": {label: weight}}``.
    Weights are normalized per document; labels not listed get weight zero.
    """
    if format not in ("tsv", "jsonl"):
        raise ValueError(f"unknown annotation format {format!r}")
    by_name = {s.name: s for s in schemes}
    parse_record = _parse_tsv_record if format == "tsv" else _parse_jsonl_record
    vectors: dict[str, dict[str, MembershipVector]] = {n: {} for n in by_name}
    for number, line in _lines(source):
        if not line.strip():
            continue
        record = parse_record(line, number)
        vector = _record_to_vector(record, by_name, number)
        per_scheme = vectors[record.scheme]
        if record.doc_id in per_scheme:
            raise DuplicateDocument(
                f"doc {record.doc_id!r} repeated for scheme {record.scheme!r}", line=number
            )
        per_scheme[record.doc_id] = vector
    return GroupMembershipTable(schemes, vectors, provenance=provenance)


def write_annotations(table: GroupMembershipTable, format: str = "tsv") -> str:
    """Serialize a table; rows grouped by scheme name, then document id.

    Only labels with non-zero weight are written, in scheme order.
    """
    if format not in ("tsv", "jsonl"):
        raise ValueError(f"unknown annotation format {format!r}")
    out = []
    for scheme_name in table.scheme_names:
        scheme = table.scheme(scheme_name)
        docs = table.docs(scheme_name)
        for doc_id in sorted(docs):
            pairs = [
                (label, weight)
                for label, weight in zip(scheme.groups, docs[doc_id].weights)
                if weight != 0.0
            ]
            if format == "tsv":
                spec = ",".join(f"{label}:{weight!r}" for label, weight in pairs)
                out.append(f"{doc_id}\t{scheme_name}\t{spec}\n")
            else:
                obj = {"doc": doc_id, "scheme": scheme_name, "weights": dict(pairs)}
                out.append(json.dumps(obj) + "\n")
    return "".join(out)


# --- stratified sampling ----------------------------------------------------------


@dataclass(frozen=True)
class SamplePlan:
    """Per-group train/test counts for one scheme, with a fixed seed."""

    scheme: str
    train_per_group: int
    test_per_group: int
    seed: int = 0

    def __post_init__(self):
        if self.train_per_group < 0 or self.test_per_group < 0:
            raise ValueError("sample counts must be non-negative")


def stratified_sample(
    table: GroupMembershipTable, plan: SamplePlan
) -> tuple[set[str], set[str]]:
    """Draw disjoint train/test document id sets, equally sized per group.

    A document counts toward its argmax group (ties: lowest group index).
    The draw is a pure function of the plan's seed.
    """
    scheme = table.scheme(plan.scheme)
    docs = table.docs(plan.scheme)
    by_group: list[list[str]] = [[] for _ in range(scheme.k)]
    for doc_id in sorted(docs):
        by_group[docs[doc_id].argmax()].append(doc_id)
    need = plan.train_per_group + plan.test_per_group
    rng = np.random.default_rng(plan.seed)
    train: set[str] = set()
    test: set[str] = set()
    for index, group in enumerate(scheme.groups):
        candidates = by_group[index]
        if len(candidates) < need:
            raise InsufficientDocuments(group, len(candidates), need)
        order = rng.permutation(len(candidates))
        picked = [candidates[i] for i in order[:need]]
        train.update(picked[: plan.train_per_group])
        test.update(picked[plan.train_per_group :])
    return train, test
