"""Formula-bank indexing and cosine top-k retrieval.

The bank is small (tens to hundreds of entries), so the index is a flat
vector list searched exactly; approximate structures are out of scope.
Retrieval is deterministic: descending cosine with ties broken by
ascending formula id.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from .errors import EmptyBank, UnknownGoldId
from .gateway import LLMGateway


class FormulaEntry(BaseModel):
    """One calculator formula: expression text carries units, boundary
    conditions, and demographic variants inline."""

    model_config = ConfigDict(frozen=True)

    formula_id: int
    calculator_id: int | None = None
    name: str
    description: str = ""
    expression: str = ""
    source: str = ""

    @model_validator(mode="after")
    def _check_name(self) -> "FormulaEntry":
        if not self.name:
            raise ValueError("formula name must be non-empty")
        return self

    def document(self) -> str:
        """The text that gets embedded for this entry."""
        return f"{self.name}\n{self.description}\n{self.expression}"


class FormulaIndex:
    """Entries plus their embedding matrix; immutable once built."""

    def __init__(
        self, entries: list[FormulaEntry], matrix: np.ndarray, embed_model: str
    ):
        if len(entries) != matrix.shape[0]:
            raise ValueError("one vector per entry required")
        self.entries = list(entries)
        self.matrix = matrix.astype(np.float64)
        self.embed_model = embed_model
        self._norms = np.linalg.norm(self.matrix, axis=1)
        self._by_id = {e.formula_id: e for e in entries}
        if len(self._by_id) != len(entries):
            raise ValueError("formula ids must be unique")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def dims(self) -> int:
        return self.matrix.shape[1]

    def __contains__(self, formula_id: int) -> bool:
        return formula_id in self._by_id


def load_bank(path: str | Path) -> list[FormulaEntry]:
    """Read a formula bank jsonl file."""
    entries = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                entries.append(FormulaEntry.model_validate_json(line))
    return entries


def build_index(
    entries: list[FormulaEntry], gateway: LLMGateway, model: str | None = None
) -> FormulaIndex:
    """Embed every entry's document in one batch, order preserved."""
    if not entries:
        raise EmptyBank("cannot index an empty formula bank")
    model = model or gateway.embed_model
    vectors = gateway.embed([e.document() for e in entries], model)
    dims = {v.dims for v in vectors}
    if len(dims) != 1:
        raise ValueError(f"inconsistent embedding dims: {sorted(dims)}")
    matrix = np.array([v.values for v in vectors], dtype=np.float64)
    return FormulaIndex(entries, matrix, model)


def save_index(index: FormulaIndex, path: str | Path) -> None:
    """Serialize as a versioned jsonl: header line, then entry+vector lines."""
    with Path(path).open("w", encoding="utf-8") as handle:
        header = {
            "version": 1,
            "embed_model": index.embed_model,
            "dims": index.dims,
            "count": len(index),
        }
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        for entry, vector in zip(index.entries, index.matrix):
            line = {
                "entry": json.loads(entry.model_dump_json()),
                "vector": [float(v) for v in vector],
            }
            handle.write(json.dumps(line, sort_keys=True) + "\n")


def load_index(path: str | Path) -> FormulaIndex:
    with Path(path).open("r", encoding="utf-8") as handle:
        header = json.loads(handle.readline())
        if header.get("version") != 1:
            raise ValueError(f"unsupported index version {header.get('version')}")
        entries: list[FormulaEntry] = []
        vectors: list[list[float]] = []
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            entries.append(FormulaEntry.model_validate(record["entry"]))
            vectors.append(record["vector"])
    matrix = np.array(vectors, dtype=np.float64)
    if matrix.shape != (header["count"], header["dims"]):
        raise ValueError("index file is inconsistent with its header")
    return FormulaIndex(entries, matrix, header["embed_model"])


def cosine_scores(matrix: np.ndarray, norms: np.ndarray, query: np.ndarray) -> np.ndarray:
    query_norm = float(np.linalg.norm(query))
    if query_norm == 0.0:
        return np.zeros(matrix.shape[0])
    denom = np.where(norms == 0.0, 1.0, norms) * query_norm
    scores = (matrix @ query) / denom
    return np.clip(scores, -1.0, 1.0)


def retrieve(
    index: FormulaIndex, query: str, k: int, gateway: LLMGateway
) -> list[tuple[FormulaEntry, float]]:
    """Top-k entries by cosine similarity to the query, deterministic."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(index) == 0:
        raise EmptyBank("index has no entries")
    query_vec = np.array(
        gateway.embed([query], index.embed_model)[0].values, dtype=np.float64
    )
    scores = cosine_scores(index.matrix, index._norms, query_vec)
    order = sorted(
        range(len(index)), key=lambda i: (-scores[i], index.entries[i].formula_id)
    )
    return [(index.entries[i], float(scores[i])) for i in order[:k]]


def eval_retrieval(
    index: FormulaIndex,
    queries: list[tuple[str, int]],
    ks: list[int],
    gateway: LLMGateway,
) -> dict[int, float]:
    """accuracy@k over (query text, gold formula id) pairs.

    A query counts as a hit at k when the gold id appears anywhere in the
    top k.
    """
    for _, gold_id in queries:
        if gold_id not in index:
            raise UnknownGoldId(f"gold formula id {gold_id} not in index")
    if not queries:
        return {k: 0.0 for k in ks}
    max_k = max(ks)
    hits = {k: 0 for k in ks}
    for text, gold_id in queries:
        top = retrieve(index, text, max_k, gateway)
        ids = [entry.formula_id for entry, _ in top]
        for k in ks:
            if gold_id in ids[:k]:
                hits[k] += 1
    return {k: hits[k] / len(queries) for k in ks}
