"""
steerbench - steerability evaluation harness
---
Command-line entry point: ingest a seed corpus, build probes, run a model against them,
filter the rewrites with an LLM judge plus human review, compute steerability metrics
and write reports.
"""

import asyncio
import json
import logging
from pathlib import Path
from typing import Optional

import click
import numpy as np

from steerability.analysis import build_report
from steerability.errors import InvalidArgumentError
from steerability.goalspace import default_config, load_config, save_config
from steerability.judge import (
    JudgeClient,
    ReviewSession,
    apply_decisions,
    build_review_queue,
    groundedness_counts,
    judge_responses,
    load_decisions,
    load_verdicts,
    review_items,
    save_verdicts,
)
from steerability.judge.review import ScriptedDecider, interactive_review
from steerability.llmrun import DecodingConfig, ResponseJournal, RewriteClient, load_records, run_probe, save_records
from steerability.llmrun.constants import DEFAULT_PARALLELISM
from steerability.llmrun.mock_server import CopyPasteRewriter, create_mock_app, echo_rewriter
from steerability.probegen import (
    ProbeSpec,
    build_probe,
    ingest_corpus,
    load_probe,
    load_seeds,
    read_jsonl,
    save_probe,
    save_seeds,
)
from steerability.promptgen import PromptStrategy, strategy_choices
from steerability.rlmath import PairSet, RLHyperparams, evaluate_groups, load_rollout_groups
from steerability.rlmath.constants import DEFAULT_BETA, DEFAULT_K, DEFAULT_LAMBDA_TAU, DEFAULT_TAU
from steerability.settings import EndpointSettings
from steerability.steermetrics import compute_metrics, load_metrics, random_baseline, save_metrics
from telemetry.appinsights import configure_application_insights

# Configure logging
logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def make_client(client_cls, settings: EndpointSettings):
    """Client factory; tests swap it for one bound to an in-process endpoint."""
    return client_cls(settings)


def _dimensions(value: Optional[str]) -> Optional[list]:
    return [part.strip() for part in value.split(",") if part.strip()] if value else None


def _config_path(seeds_path: Path) -> Path:
    return seeds_path.with_name(seeds_path.stem + ".config.json")


@click.group()
@click.option("--log-level", default="INFO", show_default=True,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False))
def cli(log_level: str):
    """Steerability evaluation harness."""
    logging.basicConfig(level=log_level.upper(), format=LOG_FORMAT)
    configure_application_insights()


@cli.command()
@click.option("--corpus", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Existing goal-space config; bounds are fitted on the corpus otherwise.")
@click.option("--config-out", type=click.Path(dir_okay=False, path_type=Path),
              help="Where to write the goal-space config (default: <out>.config.json).")
@click.option("--dimensions", help="Comma-separated dimension ids to keep.")
@click.option("--workers", default=1, show_default=True, type=click.IntRange(min=1))
def ingest(corpus: Path, out: Path, config_path: Optional[Path], config_out: Optional[Path],
           dimensions: Optional[str], workers: int):
    """Validate seed texts and map them into goal-space."""
    config = load_config(config_path) if config_path else None
    report = ingest_corpus(read_jsonl(corpus), config=config, dimensions=_dimensions(dimensions), workers=workers)
    save_seeds(report, out)
    save_config(report.config, config_out or _config_path(out))
    click.echo(json.dumps({"accepted": len(report.seeds), "rejected": report.rejected}, sort_keys=True))


@cli.command()
@click.option("--seeds", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Goal-space config (default: <seeds>.config.json, else the published bounds).")
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--n-sources", default=64, show_default=True, type=click.IntRange(min=1))
@click.option("--goals-per-source", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--n-active", default=2, show_default=True, type=click.IntRange(min=1))
@click.option("--strategy", default="direct", show_default=True, type=click.Choice(strategy_choices()))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--no-reweight", is_flag=True, help="Draw sources uniformly instead of density-ratio weighted.")
@click.option("--dimensions", help="Comma-separated goal subspace.")
@click.option("--exclude", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Probe file whose sources must not be reused.")
@click.option("--instructions", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSONL of {seed_id, instructions} for the instruction strategies.")
def probe(seeds: Path, config_path: Optional[Path], out: Path, n_sources: int, goals_per_source: int,
          n_active: int, strategy: str, seed: int, no_reweight: bool, dimensions: Optional[str],
          exclude: Optional[Path], instructions: Optional[Path]):
    """Sample a steerability probe from ingested seeds."""
    if config_path is None and _config_path(seeds).exists():
        config_path = _config_path(seeds)
    config = load_config(config_path) if config_path else default_config()
    excluded = sorted({item.seed_id for item in load_probe(exclude).items}) if exclude else []
    spec = ProbeSpec(
        n_sources=n_sources,
        goals_per_source=goals_per_source,
        n_active=n_active,
        strategy=PromptStrategy.from_id(strategy),
        rng_seed=seed,
        reweight=not no_reweight,
        dimensions=_dimensions(dimensions),
        exclude_seed_ids=excluded,
    )
    instruction_lists = None
    if instructions:
        instruction_lists = {data["seed_id"]: data["instructions"] for data in read_jsonl(instructions) if data}
    built = build_probe(spec, load_seeds(seeds), config, instructions=instruction_lists)
    save_probe(built, out)
    click.echo(f"Wrote {len(built.items)} probe items to {out}")


@cli.command()
@click.option("--probe", "probe_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--endpoint", help="Chat-completions base URL (default: STEERBENCH_BASE_URL).")
@click.option("--model", help="Model name (default: STEERBENCH_MODEL).")
@click.option("--strategy", type=click.Choice(strategy_choices()), help="Re-render prompts under this strategy.")
@click.option("--best-of", default=1, show_default=True, type=click.IntRange(min=1))
@click.option("--parallel", default=DEFAULT_PARALLELISM, show_default=True, type=click.IntRange(min=1))
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="Response journal; an existing journal is resumed.")
@click.option("--retry-failed", is_flag=True, help="Re-send journaled transport failures.")
def run(probe_path: Path, endpoint: Optional[str], model: Optional[str], strategy: Optional[str], best_of: int,
        parallel: int, out: Path, retry_failed: bool):
    """Send every probe item to the model and journal the responses."""
    loaded = load_probe(probe_path)
    settings = EndpointSettings.from_env("STEERBENCH", base_url=endpoint, model=model)
    decoding = DecodingConfig.sampled() if best_of > 1 else DecodingConfig.greedy()

    async def main():
        async with make_client(RewriteClient, settings) as client:
            return await run_probe(
                loaded,
                client,
                decoding=decoding,
                strategy=PromptStrategy.from_id(strategy) if strategy else None,
                parallelism=parallel,
                journal=ResponseJournal(out),
                best_of=best_of,
                retry_failed=retry_failed,
            )

    records = asyncio.run(main())
    failed = sum(record.reject_reason is not None for record in records)
    click.echo(f"{len(records)} responses, {failed} rejected, journal at {out}")


@cli.command()
@click.option("--responses", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--probe", "probe_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--endpoint", help="Judge base URL (default: STEERBENCH_JUDGE_BASE_URL).")
@click.option("--model", help="Judge model (default: STEERBENCH_JUDGE_MODEL).")
@click.option("--parallel", default=DEFAULT_PARALLELISM, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=int, help="Seed for the A/B order of each prompt.")
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
def judge(responses: Path, probe_path: Path, endpoint: Optional[str], model: Optional[str], parallel: int,
          seed: int, out: Path):
    """Ask the judge model whether each rewrite is grounded in its source."""
    records = load_records(responses)
    loaded = load_probe(probe_path)
    settings = EndpointSettings.from_env("STEERBENCH_JUDGE", base_url=endpoint, model=model)

    async def main():
        async with make_client(JudgeClient, settings) as client:
            return await judge_responses(records, loaded, client, seed=seed, parallelism=parallel)

    verdicts = asyncio.run(main())
    save_verdicts(verdicts, out)
    answers = {"Yes": 0, "No": 0, "None": 0}
    for verdict in verdicts:
        answers[verdict.answer or "None"] += 1
    click.echo(json.dumps(answers, sort_keys=True))


@cli.command()
@click.option("--judgments", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--responses", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--probe", "probe_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path),
              help="Decisions file; an existing file is resumed.")
@click.option("--script", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSONL of {record_id, decision} used instead of the terminal dialog.")
@click.option("--seed", default=0, show_default=True, type=int, help="Seed for sampling Yes verdicts.")
def review(judgments: Path, responses: Path, probe_path: Path, out: Path, script: Optional[Path], seed: int):
    """Review flagged and sampled judge verdicts."""
    verdicts = load_verdicts(judgments)
    queue = build_review_queue(verdicts, np.random.default_rng(seed))
    items = review_items(queue, load_records(responses), load_probe(probe_path))
    decider = ScriptedDecider.from_file(script) if script else None
    interactive_review(items, out, decider=decider)
    decisions = ReviewSession(out).finalize(verdicts)
    click.echo(json.dumps(groundedness_counts(decisions), sort_keys=True))


@cli.command()
@click.option("--responses", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--probe", "probe_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--decisions", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", required=True, type=click.Path(dir_okay=False, path_type=Path))
@click.option("--binned", is_flag=True, help="Print the binned variant next to the raw medians.")
@click.option("--skip-judge", is_flag=True, help="Score records that were never judged.")
@click.option("--records-out", type=click.Path(dir_okay=False, path_type=Path),
              help="Write the response records with the review decisions applied.")
def metrics(responses: Path, probe_path: Path, decisions: Optional[Path], out: Path, binned: bool,
            skip_judge: bool, records_out: Optional[Path]):
    """Compute steering error, miscalibration and orthogonality per grounded response."""
    records = load_records(responses)
    if decisions:
        records = apply_decisions(records, load_decisions(decisions))
        if records_out:
            save_records(records, records_out)
    elif not skip_judge:
        raise click.UsageError("Pass --decisions, or --skip-judge to score unjudged responses")
    results = compute_metrics(records, load_probe(probe_path), include_pending=skip_judge)
    save_metrics(results, out)
    summary = {"n": len(results)}
    for name in ("steering_error", "miscalibration", "orthogonality"):
        values = [value for value in (record.value(name) for record in results) if value is not None]
        summary[name] = float(np.median(values)) if values else None
        if binned:
            values = [value for value in (record.value(name, binned=True) for record in results) if value is not None]
            summary[f"{name}_binned"] = float(np.median(values)) if values else None
    click.echo(json.dumps(summary, sort_keys=True))


@cli.command()
@click.option("--metrics", "metrics_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--probe", "probe_path", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--out", required=True, type=click.Path(file_okay=False, path_type=Path))
@click.option("--grid-n", default=10, show_default=True, type=click.IntRange(min=1))
def report(metrics_path: Path, probe_path: Optional[Path], out: Path, grid_n: int):
    """Write report.json and flow-field CSVs for one run."""
    document = build_report(
        load_metrics(metrics_path), out, probe=load_probe(probe_path) if probe_path else None, grid_n=grid_n
    )
    click.echo(f"Report for {document['n_records']} records written to {out}")


@cli.command()
@click.option("--probe", "probe_path", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--trials", default=1000, show_default=True, type=click.IntRange(min=1))
@click.option("--seed", default=0, show_default=True, type=int)
def baseline(probe_path: Path, trials: int, seed: int):
    """Median steering error of uniformly random outputs on the probe."""
    value = random_baseline(load_probe(probe_path), np.random.default_rng(seed), trials)
    click.echo(f"{value:.4f}")


@cli.command("rl-check")
@click.option("--groups", required=True, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--beta", default=DEFAULT_BETA, show_default=True, type=float)
@click.option("--lambda", "lambda_tau", default=DEFAULT_LAMBDA_TAU, show_default=True, type=float)
@click.option("--tau", default=DEFAULT_TAU, show_default=True, type=float)
@click.option("--k", default=DEFAULT_K, show_default=True, type=int)
@click.option("--pairs", default=PairSet.PREFERENCE_ORDERED.value, show_default=True,
              type=click.Choice([pair_set.value for pair_set in PairSet]))
def rl_check(groups: Path, beta: float, lambda_tau: float, tau: float, k: int, pairs: str):
    """Evaluate the regularized leave-one-out objective on recorded rollout groups."""
    try:
        hparams = RLHyperparams(beta=beta, lambda_tau=lambda_tau, tau=tau, k=k)
    except ValueError as e:
        raise click.BadParameter(str(e)) from e
    for result in evaluate_groups(load_rollout_groups(groups), hparams, pair_set=PairSet(pairs)):
        click.echo(result.model_dump_json())


@cli.command("serve-mock")
@click.option("--mode", default="echo", show_default=True, type=click.Choice(["echo", "copy"]))
@click.option("--probe", "probe_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Probe whose source texts the copy mode returns.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve_mock(mode: str, probe_path: Optional[Path], host: str, port: int):
    """Serve the mock chat-completions endpoint."""
    import uvicorn

    if mode == "copy":
        sources = [item.source_text for item in load_probe(probe_path).items] if probe_path else []
        rewriter = CopyPasteRewriter(sources)
    else:
        rewriter = echo_rewriter
    logger.info(f"Serving mock endpoint ({mode}) on http://{host}:{port}/v1")
    uvicorn.run(create_mock_app(rewriter), host=host, port=port)


def main():
    try:
        cli()
    except InvalidArgumentError as e:
        logger.error(f"Invalid argument: {e}")
        raise SystemExit(2) from e


if __name__ == "__main__":
    main()
