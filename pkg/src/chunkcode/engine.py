"""Run the coding strategies over a corpus and reduce iterations to consensus.

The whole-text strategy issues one prompt per (document, dimension); the
chunking strategy issues one per (chunk, dimension) and ORs the chunk codes.
Running N iterations and taking the per-cell mode yields the consensus code,
with per-cell support feeding the internal-agreement statistics.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .classifier import BinaryCode, KeyPhraseSet, classify, default_key_phrases
from .codebook import Codebook, Dimension
from .errors import CellError, ChunkCodeError, ConfigError
from .ingestion import Chunk, DocumentText, chunk_document
from .llm_client import CACHE_MODES, LLMClient, PromptRequest, render_prompt

STRATEGIES = ("whole", "chunk")


@dataclass(frozen=True)
class RunConfig:
    """Everything that defines one coding run."""

    model: str
    strategy: str = "chunk"
    chunk_size: int = 500
    iterations: int = 15
    phrases: KeyPhraseSet = field(default_factory=default_key_phrases)
    cache_mode: str = "live"
    word_boundary: bool = False
    max_prompt_words: int | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        if not self.model:
            raise ConfigError("model identifier must be nonempty")
        if self.strategy not in STRATEGIES:
            raise ConfigError(
                f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}"
            )
        if self.chunk_size < 1:
            raise ConfigError(f"chunk_size must be >= 1, got {self.chunk_size}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.cache_mode not in CACHE_MODES:
            raise ConfigError(
                f"unknown cache mode {self.cache_mode!r}; expected one of {CACHE_MODES}"
            )
        if not isinstance(self.phrases, KeyPhraseSet):
            raise ConfigError("phrases must be a KeyPhraseSet")


@dataclass(frozen=True)
class PromptRecord:
    """One model exchange, fully attributable to its cell."""

    doc_id: str
    dimension_id: str
    iteration: int
    chunk_index: int | None
    model: str
    strategy: str
    raw_response: str
    code: BinaryCode
    request_key: str


@dataclass(frozen=True)
class IterationResult:
    """The code one iteration assigned to a (document, dimension) cell."""

    doc_id: str
    dimension_id: str
    iteration: int
    value: bool


@dataclass(frozen=True)
class ConsensusResult:
    """The modal code of a cell across iterations.

    ``support`` is the fraction of iterations agreeing with the mode. Even
    splits resolve to True with the tie flag set; odd iteration counts can
    never tie, so support then always exceeds one half.
    """

    doc_id: str
    dimension_id: str
    value: bool
    support: float
    tie: bool = False


@dataclass(frozen=True)
class CellFailure:
    """Why one (document, dimension, iteration) cell produced no code."""

    doc_id: str
    dimension_id: str
    iteration: int
    chunk_index: int | None
    error: str


@dataclass
class RunResult:
    """Everything a run produced, including what it could not produce."""

    records: list[PromptRecord]
    results: list[IterationResult]
    failures: list[CellFailure]

    @property
    def ok(self) -> bool:
        return not self.failures


def cell_tag(doc_id: str, dimension_id: str, iteration: int, chunk_index: int | None = None) -> str:
    """Tag distinguishing repeats of an identical prompt across cells.

    Keyed into the request hash so each (document, dimension, iteration,
    chunk) cell records and replays independently.
    """
    tag = f"{doc_id}/{dimension_id}/i{iteration}"
    if chunk_index is not None:
        tag += f"/c{chunk_index}"
    return tag


def _complete_cell(
    client: LLMClient,
    cfg: RunConfig,
    doc: DocumentText,
    dim: Dimension,
    iteration: int,
    chunk: Chunk | None,
) -> PromptRecord:
    body_words = len(chunk.words) if chunk is not None else len(doc.words)
    chunk_index = chunk.index if chunk is not None else None
    if cfg.max_prompt_words is not None and body_words > cfg.max_prompt_words:
        raise CellError(
            f"prompt body of {body_words} words exceeds the configured limit of"
            f" {cfg.max_prompt_words}; refusing to truncate",
            doc_id=doc.doc_id,
            dimension_id=dim.id,
            iteration=iteration,
            chunk_index=chunk_index,
        )
    body = chunk.text if chunk is not None else doc.text
    request = PromptRequest(
        model=cfg.model,
        prompt_text=render_prompt(dim, body),
        tag=cell_tag(doc.doc_id, dim.id, iteration, chunk_index),
    )
    try:
        response = client.complete(request)
    except ChunkCodeError as exc:
        raise CellError(
            f"prompt for doc={doc.doc_id!r} dim={dim.id!r} iteration={iteration}"
            f" chunk={chunk_index} failed: {exc}",
            doc_id=doc.doc_id,
            dimension_id=dim.id,
            iteration=iteration,
            chunk_index=chunk_index,
        ) from exc
    code = classify(response.text, cfg.phrases, word_boundary=cfg.word_boundary)
    return PromptRecord(
        doc_id=doc.doc_id,
        dimension_id=dim.id,
        iteration=iteration,
        chunk_index=chunk_index,
        model=cfg.model,
        strategy=cfg.strategy,
        raw_response=response.text,
        code=code,
        request_key=request.request_key,
    )


def _code_cell_whole(client, cfg, doc, dim, iteration):
    record = _complete_cell(client, cfg, doc, dim, iteration, chunk=None)
    result = IterationResult(doc.doc_id, dim.id, iteration, record.code.value)
    return result, [record]


def _code_cell_chunked(client, cfg, doc, dim, iteration, chunks):
    records = [
        _complete_cell(client, cfg, doc, dim, iteration, chunk=c) for c in chunks
    ]
    value = any(r.code.value for r in records)
    return IterationResult(doc.doc_id, dim.id, iteration, value), records


def code_whole(
    doc: DocumentText,
    cb: Codebook,
    cfg: RunConfig,
    iteration: int,
    client: LLMClient,
) -> tuple[list[IterationResult], list[PromptRecord]]:
    """Code every dimension over the full document text, one prompt each.

    A failed prompt raises a CellError carrying its cell context; it never
    silently becomes a False code.
    """
    if not doc.words:
        raise ConfigError(f"document {doc.doc_id!r} has no words")
    results, records = [], []
    for dim in cb:
        result, cell_records = _code_cell_whole(client, cfg, doc, dim, iteration)
        results.append(result)
        records.extend(cell_records)
    return results, records


def code_chunked(
    doc: DocumentText,
    cb: Codebook,
    cfg: RunConfig,
    iteration: int,
    client: LLMClient,
) -> tuple[list[IterationResult], list[PromptRecord]]:
    """Code every dimension chunk by chunk.

    Issues one prompt per (chunk, dimension); a dimension is True when any
    of its chunk responses codes True. A failed chunk raises a CellError for
    that (dimension, iteration) cell.
    """
    if not doc.words:
        raise ConfigError(f"document {doc.doc_id!r} has no words")
    chunks = chunk_document(doc, cfg.chunk_size)
    results, records = [], []
    for dim in cb:
        result, cell_records = _code_cell_chunked(client, cfg, doc, dim, iteration, chunks)
        results.append(result)
        records.extend(cell_records)
    return results, records


def run_iterations(
    corpus: Sequence[DocumentText],
    cb: Codebook,
    cfg: RunConfig,
    client: LLMClient,
    *,
    record_sink: Callable[[PromptRecord], None] | None = None,
) -> RunResult:
    """Run the configured strategy for iterations 1..N over every document.

    Per-cell failures are collected rather than raised, so one bad prompt
    costs one cell, not the run; the returned failures double as a manifest
    of what to retry. Interrupted record-mode runs resume cheaply because
    completed prompts hit the request cache. ``record_sink`` receives each
    PromptRecord as it is produced, for incremental persistence.
    """
    if not corpus:
        raise ConfigError("corpus is empty")
    seen: set[str] = set()
    for doc in corpus:
        if doc.doc_id in seen:
            raise ConfigError(f"corpus repeats doc_id {doc.doc_id!r}")
        seen.add(doc.doc_id)
        if not doc.words:
            raise ConfigError(f"document {doc.doc_id!r} has no words")

    chunks_by_doc: dict[str, list[Chunk]] = {}
    if cfg.strategy == "chunk":
        chunks_by_doc = {doc.doc_id: chunk_document(doc, cfg.chunk_size) for doc in corpus}

    records: list[PromptRecord] = []
    results: list[IterationResult] = []
    failures: list[CellFailure] = []
    for iteration in range(1, cfg.iterations + 1):
        for doc in corpus:
            for dim in cb:
                try:
                    if cfg.strategy == "whole":
                        result, cell_records = _code_cell_whole(
                            client, cfg, doc, dim, iteration
                        )
                    else:
                        result, cell_records = _code_cell_chunked(
                            client, cfg, doc, dim, iteration, chunks_by_doc[doc.doc_id]
                        )
                except CellError as exc:
                    failures.append(
                        CellFailure(
                            doc_id=exc.doc_id,
                            dimension_id=exc.dimension_id,
                            iteration=exc.iteration,
                            chunk_index=exc.chunk_index,
                            error=str(exc),
                        )
                    )
                    continue
                results.append(result)
                records.extend(cell_records)
                if record_sink is not None:
                    for record in cell_records:
                        record_sink(record)
    return RunResult(records=records, results=results, failures=failures)


def consensus(results: Sequence[IterationResult]) -> ConsensusResult:
    """Reduce one cell's iteration codes to the modal value.

    Even-count ties resolve to True (the OR semantics are presence-biased)
    with the tie flag set and support 0.5.
    """
    if not results:
        raise ValueError("consensus needs at least one iteration result")
    keys = {(r.doc_id, r.dimension_id) for r in results}
    if len(keys) != 1:
        raise ValueError(f"consensus input spans multiple cells: {sorted(keys)}")
    doc_id, dimension_id = keys.pop()
    trues = sum(r.value for r in results)
    falses = len(results) - trues
    if trues == falses:
        return ConsensusResult(doc_id, dimension_id, True, 0.5, tie=True)
    value = trues > falses
    return ConsensusResult(doc_id, dimension_id, value, max(trues, falses) / len(results))


def consensus_table(
    results: Sequence[IterationResult],
) -> dict[tuple[str, str], ConsensusResult]:
    """Consensus per cell, keyed by (doc_id, dimension_id)."""
    grouped: dict[tuple[str, str], list[IterationResult]] = defaultdict(list)
    for r in results:
        grouped[(r.doc_id, r.dimension_id)].append(r)
    return {key: consensus(cell) for key, cell in grouped.items()}


def internal_agreement(
    results: Sequence[IterationResult], level: str = "cell"
) -> dict | float:
    """Fraction of iterations matching the modal code, at three scopes.

    cell  -> {(doc_id, dimension_id): fraction}
    paper -> {doc_id: mean over that document's dimensions}
    model -> mean of the paper-level values

    Aggregation always runs dimension -> paper -> model, so every document
    weighs equally in the model-level figure.
    """
    table = consensus_table(results)
    if not table:
        raise ValueError("no iteration results to aggregate")
    cells = {key: c.support for key, c in table.items()}
    if level == "cell":
        return cells
    by_doc: dict[str, list[float]] = defaultdict(list)
    for (doc_id, _), support in cells.items():
        by_doc[doc_id].append(support)
    papers = {doc_id: sum(vals) / len(vals) for doc_id, vals in by_doc.items()}
    if level == "paper":
        return papers
    if level == "model":
        return sum(papers.values()) / len(papers)
    raise ValueError(f"unknown aggregation level {level!r}")


def iteration_results_from_records(
    records: Sequence[PromptRecord],
) -> list[IterationResult]:
    """Rebuild per-iteration cell codes from raw prompt records.

    Chunked cells OR their chunk codes; whole-text cells carry one record.
    Output order follows first appearance of each cell in the records.
    """
    grouped: dict[tuple[str, str, int], bool] = {}
    for record in records:
        key = (record.doc_id, record.dimension_id, record.iteration)
        grouped[key] = grouped.get(key, False) or record.code.value
    return [
        IterationResult(doc_id, dimension_id, iteration, value)
        for (doc_id, dimension_id, iteration), value in grouped.items()
    ]


# -- persistence -----------------------------------------------------------


def record_to_json(record: PromptRecord) -> str:
    """Canonical single-line JSON for one record (stable byte-for-byte)."""
    return json.dumps(
        {
            "doc_id": record.doc_id,
            "dimension_id": record.dimension_id,
            "iteration": record.iteration,
            "chunk_index": record.chunk_index,
            "model": record.model,
            "strategy": record.strategy,
            "raw_response": record.raw_response,
            "code": record.code.value,
            "matched_phrase": record.code.matched_phrase,
            "request_key": record.request_key,
        },
        sort_keys=True,
        ensure_ascii=True,
        separators=(",", ":"),
    )


def record_from_json(line: str) -> PromptRecord:
    data = json.loads(line)
    return PromptRecord(
        doc_id=data["doc_id"],
        dimension_id=data["dimension_id"],
        iteration=data["iteration"],
        chunk_index=data["chunk_index"],
        model=data["model"],
        strategy=data["strategy"],
        raw_response=data["raw_response"],
        code=BinaryCode(data["code"], data["matched_phrase"]),
        request_key=data["request_key"],
    )


def write_records_jsonl(records: Sequence[PromptRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in records:
            fh.write(record_to_json(record))
            fh.write("\n")


def read_records_jsonl(path: str | Path) -> list[PromptRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(record_from_json(line))
    return records
