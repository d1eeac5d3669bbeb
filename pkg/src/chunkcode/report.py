"""Assemble evaluation tables from run outputs and a manual rating matrix.

The report layer formats; it computes nothing. Every cell comes straight
from an agreement or engine operation, so parsing an emitted table and
recomputing from the raw records reproduces it. Outputs carry no
timestamps: identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from . import agreement, engine
from .agreement import RatingMatrix, Subject
from .errors import DegenerateKappaError, UndefinedMetricError

RUN_META_NAME = "run_meta.json"
RECORDS_NAME = "records.jsonl"
ITERATION_RESULTS_NAME = "iteration_results.csv"
CONSENSUS_NAME = "consensus.csv"
FAILURES_NAME = "failures.json"


@dataclass
class RunData:
    """One run directory, loaded: metadata plus everything derived from it."""

    run_dir: Path
    meta: dict
    records: list[engine.PromptRecord]
    iteration_results: list[engine.IterationResult]
    consensus: dict[Subject, engine.ConsensusResult]

    @property
    def model(self) -> str:
        return self.meta["model"]

    @property
    def strategy(self) -> str:
        return self.meta["strategy"]

    @property
    def rater_id(self) -> str:
        return f"llm_{self.model}_{self.strategy}"

    @property
    def consensus_codes(self) -> dict[Subject, bool]:
        return {subject: c.value for subject, c in self.consensus.items()}


def load_run(run_dir: str | Path) -> RunData:
    """Load a run directory written by the run command.

    The records file is the source of truth; iteration results and
    consensus are rebuilt from it.
    """
    run_dir = Path(run_dir)
    meta = json.loads((run_dir / RUN_META_NAME).read_text(encoding="utf-8"))
    records = engine.read_records_jsonl(run_dir / RECORDS_NAME)
    iteration_results = engine.iteration_results_from_records(records)
    return RunData(
        run_dir=run_dir,
        meta=meta,
        records=records,
        iteration_results=iteration_results,
        consensus=engine.consensus_table(iteration_results),
    )


# -- run directory output ----------------------------------------------------


def write_run_outputs(
    out_dir: str | Path,
    cfg: engine.RunConfig,
    dimension_ids: Sequence[str],
    doc_ids: Sequence[str],
    result: engine.RunResult,
    *,
    write_records: bool = True,
) -> None:
    """Persist a run: metadata, records, iteration results, and consensus.

    Pass ``write_records=False`` when the records file was already streamed
    incrementally during the run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "model": cfg.model,
        "strategy": cfg.strategy,
        "chunk_size": cfg.chunk_size,
        "iterations": cfg.iterations,
        "cache_mode": cfg.cache_mode,
        "seed": cfg.seed,
        "word_boundary": cfg.word_boundary,
        "phrases": list(cfg.phrases),
        "dimension_ids": list(dimension_ids),
        "doc_ids": list(doc_ids),
    }
    (out / RUN_META_NAME).write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if write_records:
        engine.write_records_jsonl(result.records, out / RECORDS_NAME)

    rows = [
        {
            "doc_id": r.doc_id,
            "dimension_id": r.dimension_id,
            "iteration": r.iteration,
            "value": "T" if r.value else "F",
        }
        for r in result.results
    ]
    write_table_csv(
        out / ITERATION_RESULTS_NAME,
        ["doc_id", "dimension_id", "iteration", "value"],
        rows,
    )

    table = engine.consensus_table(result.results)
    consensus_rows = []
    for doc_id in doc_ids:
        row: dict[str, object] = {"doc_id": doc_id}
        for dim_id in dimension_ids:
            cell = table.get((doc_id, dim_id))
            row[dim_id] = "" if cell is None else ("T" if cell.value else "F")
        consensus_rows.append(row)
    write_table_csv(out / CONSENSUS_NAME, ["doc_id", *dimension_ids], consensus_rows)

    if result.failures:
        manifest = [
            {
                "doc_id": f.doc_id,
                "dimension_id": f.dimension_id,
                "iteration": f.iteration,
                "chunk_index": f.chunk_index,
                "error": f.error,
            }
            for f in result.failures
        ]
        (out / FAILURES_NAME).write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


# -- table construction --------------------------------------------------------


def performance_rows(runs: Sequence[RunData], manual: RatingMatrix) -> list[dict]:
    """One row per run: internal agreement plus accuracy, precision, recall."""
    gold = agreement.manual_consensus(manual)
    rows = []
    for run in runs:
        counts = agreement.confusion(run.consensus_codes, gold)
        rows.append(
            {
                "model": run.model,
                "strategy": run.strategy,
                "internal_agreement": engine.internal_agreement(
                    run.iteration_results, "model"
                ),
                "accuracy": agreement.accuracy(counts),
                "precision": agreement.precision(counts),
                "recall": agreement.recall(counts),
            }
        )
    return rows


def confusion_rows(runs: Sequence[RunData], manual: RatingMatrix) -> list[dict]:
    gold = agreement.manual_consensus(manual)
    rows = []
    for run in runs:
        counts = agreement.confusion(run.consensus_codes, gold)
        rows.append(
            {
                "model": run.model,
                "strategy": run.strategy,
                "tp": counts.tp,
                "fp": counts.fp,
                "fn": counts.fn,
                "tn": counts.tn,
            }
        )
    return rows


def _ordered_dimension_ids(manual: RatingMatrix) -> list[str]:
    ordered: list[str] = []
    for _, dim_id in manual.subjects:
        if dim_id not in ordered:
            ordered.append(dim_id)
    return ordered


def per_dimension_rows(runs: Sequence[RunData], manual: RatingMatrix) -> list[dict]:
    """Per run and dimension: true hits against the manual positives/negatives."""
    gold = agreement.manual_consensus(manual)
    rows = []
    for run in runs:
        pred = run.consensus_codes
        for dim_id in _ordered_dimension_ids(manual):
            subjects = [s for s in manual.subjects if s[1] == dim_id]
            counts = agreement.confusion(
                {s: pred[s] for s in subjects if s in pred},
                {s: gold[s] for s in subjects},
            )
            try:
                positive_rate = agreement.positive_identification_rate(counts)
            except UndefinedMetricError:
                positive_rate = None
            try:
                negative_rate = agreement.negative_identification_rate(counts)
            except UndefinedMetricError:
                negative_rate = None
            rows.append(
                {
                    "model": run.model,
                    "strategy": run.strategy,
                    "dimension_id": dim_id,
                    "tp": counts.tp,
                    "tn": counts.tn,
                    "manual_positives": counts.tp + counts.fn,
                    "manual_negatives": counts.tn + counts.fp,
                    "positive_rate": positive_rate,
                    "negative_rate": negative_rate,
                }
            )
    return rows


def _kappa_row(model: str, strategy: str, m: RatingMatrix) -> dict:
    kappa = agreement.fleiss_kappa(m)
    pct = agreement.percent_agreement(m)
    return {
        "model": model,
        "strategy": strategy,
        "kappa": kappa,
        "band": agreement.kappa_band(kappa),
        "significant": kappa >= agreement.KAPPA_FAIR_MIN,
        "raters": len(m.raters),
        "percent_agreement": pct,
        "percent_agreement_flag": (
            "ok" if pct >= agreement.PERCENT_AGREEMENT_TARGET else "weak: below 0.90"
        ),
    }


def kappa_rows(runs: Sequence[RunData], manual: RatingMatrix) -> list[dict]:
    """Manual-baseline kappa and per-run consensus (n+1) and internal kappas.

    Each row also carries the matrix's percent agreement, flagged weak when
    it falls below the 0.90 reporting target.
    """
    rows = [_kappa_row("manual", "", manual)]
    for run in runs:
        extended = manual.with_rater(run.rater_id, run.consensus_codes)
        rows.append(_kappa_row(run.model, run.strategy, extended))
    for run in runs:
        iteration_matrix = agreement.rating_matrix_from_iterations(run.iteration_results)
        rows.append(
            _kappa_row(run.model, run.strategy + " (iterations as raters)", iteration_matrix)
        )
    return rows


def merged_ratings(runs: Sequence[RunData], manual: RatingMatrix) -> RatingMatrix:
    """The manual matrix with one consensus column appended per run."""
    merged = manual
    for run in runs:
        merged = merged.with_rater(run.rater_id, run.consensus_codes)
    return merged


def kappa_delta_rows(runs: Sequence[RunData], manual: RatingMatrix) -> list[dict]:
    """Per run and document: kappa before/after adding the run as a rater."""
    rows = []
    for run in runs:
        for doc_id in manual.doc_ids:
            row: dict[str, object] = {
                "model": run.model,
                "strategy": run.strategy,
                "doc_id": doc_id,
            }
            try:
                comparison = agreement.kappa_with_llm(
                    manual.filter_doc(doc_id), run.consensus_codes, rater_id=run.rater_id
                )
            except DegenerateKappaError:
                row.update(
                    {"kappa_before": None, "kappa_after": None, "delta": None,
                     "note": "degenerate: single-category ratings"}
                )
            else:
                row.update(
                    {
                        "kappa_before": comparison.kappa_before,
                        "kappa_after": comparison.kappa_after,
                        "delta": comparison.delta,
                        "note": "",
                    }
                )
            rows.append(row)
    return rows


def internal_agreement_rows(runs: Sequence[RunData]) -> list[dict]:
    """Per run and document internal agreement (the per-paper breakdown)."""
    rows = []
    for run in runs:
        by_doc = engine.internal_agreement(run.iteration_results, "paper")
        for doc_id, value in by_doc.items():
            rows.append(
                {
                    "model": run.model,
                    "strategy": run.strategy,
                    "doc_id": doc_id,
                    "internal_agreement": value,
                }
            )
    return rows


# -- serialization -------------------------------------------------------------


def _csv_cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "T" if value else "F"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table_csv(path: str | Path, fieldnames: Sequence[str], rows: Sequence[Mapping]) -> None:
    """Write rows as CSV; floats keep full precision, None becomes empty."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_csv_cell(row.get(name)) for name in fieldnames])


def _md_cell(value: object, percent: bool) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value * 100:.2f}%" if percent else f"{value:.3f}"
    return str(value)


def markdown_table(
    fieldnames: Sequence[str], rows: Sequence[Mapping], percent_cols: Sequence[str] = ()
) -> str:
    """Render rows as a markdown table; percent columns get two decimals."""
    lines = [
        "| " + " | ".join(fieldnames) + " |",
        "| " + " | ".join("---" for _ in fieldnames) + " |",
    ]
    for row in rows:
        lines.append(
            "| "
            + " | ".join(
                _md_cell(row.get(name), name in percent_cols) for name in fieldnames
            )
            + " |"
        )
    return "\n".join(lines) + "\n"


_TABLES = {
    "performance": (
        performance_rows,
        ["model", "strategy", "internal_agreement", "accuracy", "precision", "recall"],
        ["internal_agreement", "accuracy", "precision", "recall"],
    ),
    "confusion": (
        confusion_rows,
        ["model", "strategy", "tp", "fp", "fn", "tn"],
        [],
    ),
    "per_dimension": (
        per_dimension_rows,
        [
            "model",
            "strategy",
            "dimension_id",
            "tp",
            "tn",
            "manual_positives",
            "manual_negatives",
            "positive_rate",
            "negative_rate",
        ],
        ["positive_rate", "negative_rate"],
    ),
    "kappa": (
        kappa_rows,
        [
            "model",
            "strategy",
            "kappa",
            "band",
            "significant",
            "raters",
            "percent_agreement",
            "percent_agreement_flag",
        ],
        ["percent_agreement"],
    ),
    "kappa_delta_per_paper": (
        kappa_delta_rows,
        ["model", "strategy", "doc_id", "kappa_before", "kappa_after", "delta", "note"],
        [],
    ),
}


def write_report_bundle(
    out_dir: str | Path, runs: Sequence[RunData], manual: RatingMatrix
) -> list[Path]:
    """Write every evaluation table as CSV and markdown; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for name, (builder, fieldnames, percent_cols) in _TABLES.items():
        rows = builder(runs, manual)
        csv_path = out / f"{name}.csv"
        write_table_csv(csv_path, fieldnames, rows)
        md_path = out / f"{name}.md"
        md_path.write_text(
            markdown_table(fieldnames, rows, percent_cols), encoding="utf-8"
        )
        written.extend([csv_path, md_path])

    rows = internal_agreement_rows(runs)
    fieldnames = ["model", "strategy", "doc_id", "internal_agreement"]
    csv_path = out / "internal_agreement_by_doc.csv"
    write_table_csv(csv_path, fieldnames, rows)
    md_path = out / "internal_agreement_by_doc.md"
    md_path.write_text(
        markdown_table(fieldnames, rows, ["internal_agreement"]), encoding="utf-8"
    )
    written.extend([csv_path, md_path])

    merged_path = out / "merged_ratings.csv"
    agreement.write_ratings_csv(merged_ratings(runs, manual), merged_path)
    written.append(merged_path)
    return written
