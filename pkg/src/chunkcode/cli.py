"""Command-line front door: run, consensus, evaluate, stats, validate-codebook."""

from __future__ import annotations

import hashlib
import sys
from pathlib import Path

import click

from . import agreement, engine, report, stats
from .classifier import default_key_phrases, load_key_phrases
from .codebook import default_codebook, load_codebook
from .errors import ChunkCodeError, SubjectMismatchError
from .ingestion import load_manifest
from .llm_client import LLMClient, PromptRequest, StochasticMock

DEFAULT_FLIP_PROBABILITY = 0.1


def _fail(message: str, code: int = 1) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main() -> None:
    """Deductive coding of documents with chat-completion models."""


def _mock_truth(request: PromptRequest) -> bool:
    # Stable per-cell ground truth for mock runs: hash the doc/dimension part
    # of the tag so all iterations of a cell share one underlying answer.
    cell = "/".join(request.tag.split("/")[:2])
    return hashlib.sha256(cell.encode("utf-8")).digest()[0] % 2 == 0


def _build_client(cfg: engine.RunConfig, cache_dir: str | None, flip_probability: float) -> LLMClient:
    if cfg.cache_mode == "mock":
        mock = StochasticMock(
            seed=cfg.seed if cfg.seed is not None else 0,
            flip_probability=flip_probability,
            truth=_mock_truth,
        )
        return LLMClient(mode="mock", mock=mock)
    return LLMClient(mode=cfg.cache_mode, cache_dir=cache_dir)


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--codebook", "codebook_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Codebook JSON; the bundled starter codebook when omitted.")
@click.option("--model", required=True, help="Chat-completion model identifier.")
@click.option("--strategy", type=click.Choice(["whole", "chunk"]), default="chunk", show_default=True)
@click.option("--chunk-size", default=500, show_default=True)
@click.option("--iterations", default=15, show_default=True)
@click.option("--cache-dir", type=click.Path(file_okay=False), default=None)
@click.option("--cache-mode", type=click.Choice(["live", "record", "replay", "mock"]),
              default="live", show_default=True)
@click.option("--phrases", "phrases_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="Override phrase list (JSON array of strings).")
@click.option("--seed", type=int, default=0, show_default=True, help="Mock-mode seed.")
@click.option("--flip-probability", type=float, default=DEFAULT_FLIP_PROBABILITY,
              show_default=True, help="Mock-mode flip probability.")
@click.option("--word-boundary", is_flag=True, help="Match key phrases on word boundaries.")
@click.option("--max-prompt-words", type=int, default=None,
              help="Refuse prompts whose body exceeds this many words.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def run(manifest_path, codebook_path, model, strategy, chunk_size, iterations,
        cache_dir, cache_mode, phrases_path, seed, flip_probability,
        word_boundary, max_prompt_words, out_dir):
    """Code a corpus and write records, iteration results, and consensus.

    Exits 0 on full success, 2 when some cells failed (a failure manifest is
    written next to the results), 1 on configuration errors.
    """
    try:
        cfg = engine.RunConfig(
            model=model,
            strategy=strategy,
            chunk_size=chunk_size,
            iterations=iterations,
            phrases=load_key_phrases(phrases_path) if phrases_path else default_key_phrases(),
            cache_mode=cache_mode,
            word_boundary=word_boundary,
            max_prompt_words=max_prompt_words,
            seed=seed,
        )
        cb = load_codebook(codebook_path) if codebook_path else default_codebook()
        corpus = load_manifest(manifest_path)
        client = _build_client(cfg, cache_dir, flip_probability)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        # Stream records as they are produced so an interrupted run leaves a
        # usable partial file; the request cache makes the rerun cheap.
        with open(out / report.RECORDS_NAME, "w", encoding="utf-8", newline="\n") as fh:
            def sink(record):
                fh.write(engine.record_to_json(record))
                fh.write("\n")

            result = engine.run_iterations(corpus, cb, cfg, client, record_sink=sink)
        report.write_run_outputs(
            out_dir, cfg, cb.ids, [doc.doc_id for doc in corpus], result,
            write_records=False,
        )
    except ChunkCodeError as exc:
        _fail(str(exc))
    if result.failures and not result.results:
        # Nothing succeeded: a setup-level problem (e.g. replaying a cold
        # cache), not a partial run.
        _fail(f"every cell failed; first error: {result.failures[0].error}")
    if result.failures:
        click.echo(
            f"completed with {len(result.failures)} failed cell(s);"
            f" see {Path(out_dir) / report.FAILURES_NAME}",
            err=True,
        )
        sys.exit(2)
    click.echo(
        f"wrote {len(result.records)} records over {cfg.iterations} iteration(s)"
        f" to {out_dir}"
    )


@main.command()
@click.option("--records", "records_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def consensus(records_path, out_dir):
    """Recompute consensus and internal agreement from a records file."""
    try:
        records = engine.read_records_jsonl(records_path)
        results = engine.iteration_results_from_records(records)
        table = engine.consensus_table(results)
        if not table:
            _fail("records file holds no results")
        doc_ids, dim_ids = [], []
        for doc_id, dim_id in table:
            if doc_id not in doc_ids:
                doc_ids.append(doc_id)
            if dim_id not in dim_ids:
                dim_ids.append(dim_id)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        rows = []
        for doc_id in doc_ids:
            row = {"doc_id": doc_id}
            for dim_id in dim_ids:
                cell = table.get((doc_id, dim_id))
                row[dim_id] = "" if cell is None else ("T" if cell.value else "F")
            rows.append(row)
        report.write_table_csv(out / report.CONSENSUS_NAME, ["doc_id", *dim_ids], rows)

        by_doc = engine.internal_agreement(results, "paper")
        agreement_rows = [
            {"scope": "paper", "doc_id": doc_id, "internal_agreement": value}
            for doc_id, value in by_doc.items()
        ]
        agreement_rows.append(
            {
                "scope": "model",
                "doc_id": "",
                "internal_agreement": engine.internal_agreement(results, "model"),
            }
        )
        report.write_table_csv(
            out / "internal_agreement.csv",
            ["scope", "doc_id", "internal_agreement"],
            agreement_rows,
        )
    except ChunkCodeError as exc:
        _fail(str(exc))
    click.echo(f"wrote consensus for {len(doc_ids)} document(s) to {out_dir}")


@main.command()
@click.option("--manual", "manual_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Manual rating matrix CSV (doc_id,dimension_id,<rater>...).")
@click.option("--run", "run_dirs", required=True, multiple=True,
              type=click.Path(exists=True, file_okay=False),
              help="Run directory written by the run command; repeatable.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def evaluate(manual_path, run_dirs, out_dir):
    """Compare run consensus against manual ratings and write the tables."""
    try:
        manual = agreement.read_ratings_csv(manual_path)
        runs = [report.load_run(d) for d in run_dirs]
        written = report.write_report_bundle(out_dir, runs, manual)
    except SubjectMismatchError as exc:
        lines = [str(exc)]
        if exc.missing:
            lines.append(f"missing from run output: {list(exc.missing)[:20]}")
        if exc.extra:
            lines.append(f"absent from manual ratings: {list(exc.extra)[:20]}")
        _fail("\n".join(lines))
    except (ChunkCodeError, ValueError, OSError, KeyError) as exc:
        _fail(str(exc))
    click.echo(f"wrote {len(written)} table file(s) to {out_dir}")


_STATS_TESTS = ("mann-whitney", "kruskal-wallis", "wilcoxon", "pairwise-mann-whitney")


@main.command("stats")
@click.option("--samples", "samples_path", required=True, type=click.Path(exists=True, dir_okay=False),
              help="Samples CSV with header group,value.")
@click.option("--test", "test_name", required=True,
              help="One of: " + ", ".join(_STATS_TESTS) + ".")
@click.option("--sides", type=click.Choice(["two", "less", "greater"]), default="two",
              show_default=True)
@click.option("--target", type=float, default=None, help="Wilcoxon target median.")
@click.option("--bonferroni", is_flag=True, help="Correct pairwise p-values.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the result table as CSV.")
def stats_command(samples_path, test_name, sides, target, bonferroni, out_path):
    """Run a significance test over grouped samples and print the result."""
    if test_name not in _STATS_TESTS:
        _fail(f"unknown test {test_name!r}; expected one of {', '.join(_STATS_TESTS)}")
    try:
        groups = stats.read_samples_csv(samples_path)
        rows = []
        if test_name == "mann-whitney":
            if len(groups) != 2:
                _fail(f"mann-whitney needs exactly two groups, got {len(groups)}")
            result = stats.mann_whitney_u(groups[0], groups[1], sides)
            rows.append((f"{groups[0].label} vs {groups[1].label}", result))
        elif test_name == "pairwise-mann-whitney":
            for label_a, label_b, result in stats.pairwise_mann_whitney(
                groups, sides, bonferroni=bonferroni
            ):
                rows.append((f"{label_a} vs {label_b}", result))
        elif test_name == "kruskal-wallis":
            result = stats.kruskal_wallis(groups)
            rows.append((" vs ".join(g.label for g in groups), result))
        else:
            if target is None:
                _fail("wilcoxon requires --target")
            if len(groups) != 1:
                _fail(f"wilcoxon needs exactly one group, got {len(groups)}")
            result = stats.wilcoxon_signed_rank_one_sample(groups[0], target, sides)
            rows.append((f"{groups[0].label} vs median {target}", result))
    except (ChunkCodeError, ValueError, OSError) as exc:
        _fail(str(exc))

    fieldnames = ["comparison", "statistic", "p_value", "method_note"]
    table_rows = [
        {
            "comparison": label,
            "statistic": result.statistic,
            "p_value": result.p_value,
            "method_note": result.method_note,
        }
        for label, result in rows
    ]
    click.echo(report.markdown_table(fieldnames, table_rows), nl=False)
    if out_path:
        report.write_table_csv(out_path, fieldnames, table_rows)


@main.command("validate-codebook")
@click.option("--codebook", "codebook_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
def validate_codebook(codebook_path):
    """Validate a codebook file and report its dimensions."""
    try:
        cb = load_codebook(codebook_path)
    except ChunkCodeError as exc:
        _fail(str(exc))
    click.echo(f"ok: {len(cb)} dimension(s): {', '.join(cb.ids)}")


if __name__ == "__main__":
    main()
