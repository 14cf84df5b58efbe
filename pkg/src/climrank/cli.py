"""Command line: ``climrank <stage> --config pipeline.json``.

Stages exchange files only, so any stage can be rerun on its own.  Every
output file gets a ``<name>.meta.json`` sidecar holding the timestamp and
run details; the outputs themselves are byte-identical for identical
config and inputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .agreement import agreement_report, mean_scores
from .corpus import load_corpus, load_sample, sample_random, save_corpus, save_sample, spike_controls, work_record_from_raw
from .errors import ClimrankError, ConfigurationError
from .evaluator import HUMAN, evaluate_batch, load_dataset, save_dataset
from .openalex import OPENALEX_URL, OpenAlexClient, QuerySpec, filter_works, has_abstract, load_topic_whitelist
from .providers import DEFAULT_API_KEY_ENV, HTTPProvider, mock_provider
from .ranking import feature_rows, fit_logistic, load_ranked, load_weights, q1_filter, rank, save_ranked, save_weights
from .reporting import export_report, kappa_sum_rows, keyword_frequency, validation_summary, write_table
from .rubric import DEFAULT_RUBRIC, FEATURE_KEYS, MODES, SCENARIOS, PromptScenario, load_context, load_exemplars
from .survey import ingest_survey

logger = logging.getLogger("climrank")

_SECRET_KEYS = {"api_key", "apikey", "token", "secret", "password"}


@dataclass
class PipelineConfig:
    query: dict = field(default_factory=dict)
    topic_whitelist_path: str | None = None
    controls_path: str | None = None
    exemplars_path: str | None = None
    context_path: str | None = None
    scenario: str = "context"
    mode: str = "binary"
    runs: int = 6
    q1_threshold: float = 0.6
    ridge_lambda: float = 1e-3
    seed: int = 0
    provider: dict = field(default_factory=lambda: {"kind": "mock"})
    openalex_base_url: str = OPENALEX_URL
    fixture_dir: str | None = None
    output_dir: str = "climrank-out"
    page_size: int = 200
    max_works: int | None = None
    requests_per_second: float = 10.0
    max_retries: int = 5
    backoff_base: float = 1.0
    concurrency: int = 4
    top_n: int = 10
    n_random: int = 95
    n_controls: int = 5

    @classmethod
    def load(cls, path: str | Path | None) -> "PipelineConfig":
        if path is None:
            return cls()
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        _reject_secrets(data)
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        base = Path(path).parent
        for key in ("topic_whitelist_path", "controls_path", "exemplars_path", "context_path", "fixture_dir", "output_dir"):
            if data.get(key) and not Path(data[key]).is_absolute():
                data[key] = str(base / data[key])
        return cls(**data)

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(f"scenario must be one of {SCENARIOS}")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if self.runs < 1:
            raise ConfigurationError("runs must be >= 1")
        if not 0 <= self.q1_threshold <= 1:
            raise ConfigurationError("q1_threshold must lie in [0, 1]")

    @property
    def out(self) -> Path:
        path = Path(self.output_dir)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def query_spec(self) -> QuerySpec:
        if not self.query:
            return QuerySpec.uk_defaults()
        return QuerySpec.from_dict(self.query)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _reject_secrets(obj: Any) -> None:
    if isinstance(obj, dict):
        for k, v in obj.items():
            if str(k).lower() in _SECRET_KEYS:
                raise ConfigurationError(f"config key {k!r} looks like a secret; use the {DEFAULT_API_KEY_ENV} environment variable")
            _reject_secrets(v)
    elif isinstance(obj, list):
        for v in obj:
            _reject_secrets(v)


def write_sidecar(output: Path, command: str, config: PipelineConfig, **details) -> Path:
    meta = {
        "command": command,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
        "config": config.as_dict(),
        **details,
    }
    path = output.with_name(output.name + ".meta.json")
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def _say(msg: str) -> None:
    print(msg, flush=True)


# -- stages ------------------------------------------------------------------


def cmd_fetch(config: PipelineConfig, output: Path | None = None) -> Path:
    output = output or config.out / "corpus.jsonl"
    spec = config.query_spec()
    base = config.fixture_dir or config.openalex_base_url
    if not config.topic_whitelist_path:
        raise ConfigurationError("topic_whitelist_path is required for fetch")
    whitelist = load_topic_whitelist(config.topic_whitelist_path)
    with OpenAlexClient(
        base,
        requests_per_second=config.requests_per_second,
        max_retries=config.max_retries,
        backoff_base=config.backoff_base,
    ) as client:
        raws = list(client.iter_works(spec, config.page_size, config.max_works))
        stats = client.stats
    with_abstract = [r for r in raws if has_abstract(r)]
    with_topics = [r for r in with_abstract if r.topics]
    kept = filter_works(raws, whitelist)
    records = [work_record_from_raw(r) for r in kept]
    save_corpus(records, output)
    if not raws:
        logger.warning("no works fetched; corpus is empty")
    _say(f"{len(raws)} fetched, {len(kept)} retained")
    _say(f"  with abstract: {len(with_abstract)}; with topics: {len(with_topics)}; all topics in scope: {len(kept)}")
    write_sidecar(output, "fetch", config, fetched=len(raws), retained=len(kept),
                  requests=stats.requests, retries=stats.retries)
    return output


def cmd_sample(config: PipelineConfig, n_random: int, n_controls: int, corpus_path: Path | None = None,
               output: Path | None = None) -> Path:
    corpus_path = corpus_path or config.out / "corpus.jsonl"
    output = output or config.out / "sample.jsonl"
    corpus = load_corpus(corpus_path)
    controls = []
    if n_controls:
        if not config.controls_path:
            raise ConfigurationError("controls_path is required when n_controls > 0")
        controls = load_corpus(config.controls_path)
        if len(controls) < n_controls:
            raise ConfigurationError(f"controls file holds {len(controls)} records, {n_controls} requested")
        controls = controls[:n_controls]
    drawn = sample_random(corpus, n_random, config.seed)
    sample = spike_controls(drawn, controls, config.seed)
    save_sample(sample, output)
    _say(f"sample of {len(sample.records)} works ({sample.n_random} random, {sample.n_controls} controls), seed {config.seed}")
    write_sidecar(output, "sample", config, corpus=str(corpus_path), n_random=n_random, n_controls=n_controls)
    return output


def build_provider(config: PipelineConfig):
    spec = dict(config.provider)
    kind = spec.pop("kind", "mock")
    if kind == "mock":
        return mock_provider(spec.get("seed", config.seed), spec.get("bias_markers"))
    if kind == "http":
        try:
            return HTTPProvider(spec["base_url"], spec["model"], api_key_env=spec.get("api_key_env", DEFAULT_API_KEY_ENV))
        except KeyError as exc:
            raise ConfigurationError(f"http provider needs {exc.args[0]!r}") from exc
    raise ConfigurationError(f"unknown provider kind {kind!r}")


def build_scenario(config: PipelineConfig) -> PromptScenario:
    rubric = DEFAULT_RUBRIC.with_context(load_context(config.context_path)) if config.context_path else DEFAULT_RUBRIC
    exemplars = load_exemplars(config.exemplars_path) if config.scenario == "few_shot" and config.exemplars_path else ()
    return PromptScenario.make(config.scenario, rubric, exemplars)


def cmd_evaluate(config: PipelineConfig, sample_path: Path | None = None, output: Path | None = None) -> Path:
    config.validate()
    sample_path = sample_path or config.out / "sample.jsonl"
    output = output or config.out / f"eval-{config.scenario}-{config.mode}.jsonl"
    sample = load_sample(sample_path)
    provider = build_provider(config)
    dataset = evaluate_batch(sample, build_scenario(config), config.mode, config.runs, provider,
                             concurrency=config.concurrency)
    save_dataset(dataset, output)
    _say(f"{len(dataset.records)} evaluations ({len(sample.records)} works x {config.runs} runs), "
         f"{len(dataset.failures)} failed")
    write_sidecar(output, "evaluate", config, sample=str(sample_path), calls=getattr(provider, "calls", None),
                  failures=len(dataset.failures))
    return output


def cmd_ingest_survey(config: PipelineConfig, csv_path: Path, sample_path: Path | None = None,
                      output: Path | None = None) -> Path:
    sample_path = sample_path or config.out / "sample.jsonl"
    output = output or config.out / "eval-human-binary.jsonl"
    result = ingest_survey(csv_path, load_sample(sample_path))
    save_dataset(result.dataset, output)
    _say(f"{len(result.dataset.records)} survey responses from {result.dataset.raters_per_source[HUMAN]} respondents; "
         f"{len(result.missing)} missing")
    for respondent, work in result.missing:
        _say(f"missing: respondent {respondent}, work {work}")
    write_sidecar(output, "ingest-survey", config, survey=str(csv_path),
                  missing=[list(m) for m in result.missing])
    return output


def _tables(paths: Sequence[Path]):
    tables = []
    for path in paths:
        ds = load_dataset(path)
        for source in sorted({r.source for r in ds.records}):
            tables.append(mean_scores(ds, source))
    return tables


def cmd_stats(config: PipelineConfig, dataset_paths: Sequence[Path], output_dir: Path | None = None) -> Path:
    out = output_dir or config.out
    out.mkdir(parents=True, exist_ok=True)
    tables = _tables(dataset_paths)
    if len(tables) < 2:
        raise ConfigurationError("stats needs at least two rater sources")
    human = [t for t in tables if t.source == HUMAN]
    reference = human[0] if human else tables[0]
    others = [t for t in tables if t is not reference]
    report = agreement_report(reference, others)
    kappa_path = out / "kappa.csv"
    export_report(report, kappa_path)
    export_report(report, out / "agreement.json", format="json")
    export_report(report.correlation, out / "correlation.csv")
    write_table(out / "kappa_sums.csv", *kappa_sum_rows(report))
    for t in tables:
        export_report(t, out / f"mean_scores-{t.label.replace(':', '-')}.csv")
    for (a, b), s in report.kappa_sum.items():
        _say(f"kappa sum {b} vs {a}: {s:.4f}")
    write_sidecar(kappa_path, "stats", config, datasets=[str(p) for p in dataset_paths],
                  degenerate=sorted(f"{q}:{b}" for q, (_, b) in report.degenerate))
    return kappa_path


def cmd_train(config: PipelineConfig, dataset_path: Path, sample_path: Path | None = None,
              output: Path | None = None) -> Path:
    sample_path = sample_path or config.out / "sample.jsonl"
    output = output or config.out / "weights.json"
    sample = load_sample(sample_path)
    table = mean_scores(load_dataset(dataset_path))
    weights = fit_logistic(feature_rows(table, sample.control_ids), config.ridge_lambda)
    save_weights(weights, output)
    _say("weights: " + ", ".join(f"{k}={weights.weights[k]:.3f}" for k in FEATURE_KEYS))
    write_sidecar(output, "train", config, dataset=str(dataset_path), sample=str(sample_path))
    return output


def cmd_rank(config: PipelineConfig, dataset_path: Path, weights_path: Path, sample_path: Path | None = None,
             output: Path | None = None) -> Path:
    sample_path = sample_path or config.out / "sample.jsonl"
    output = output or config.out / "ranked.csv"
    sample = load_sample(sample_path)
    table = mean_scores(load_dataset(dataset_path))
    weights = load_weights(weights_path)
    passed = q1_filter(table, config.q1_threshold)
    features = {w: table.row(w, FEATURE_KEYS) for w in table.works}
    ranked = rank(passed, features, weights, sample.control_ids, config.q1_threshold)
    save_ranked(ranked, output)
    summary = validation_summary(ranked, sample.n_controls, len(table.works))
    _say(summary)
    write_sidecar(output, "rank", config, dataset=str(dataset_path), weights=str(weights_path), summary=summary)
    return output


def cmd_report(config: PipelineConfig, ranked_path: Path | None = None, sample_path: Path | None = None,
               top_n: int | None = None, include_controls: bool = False) -> Path:
    ranked_path = ranked_path or config.out / "ranked.csv"
    sample_path = sample_path or config.out / "sample.jsonl"
    sample = load_sample(sample_path)
    ranked = load_ranked(ranked_path, config.q1_threshold)
    report = keyword_frequency(ranked, sample.lookup(), top_n or config.top_n, include_controls)
    kw_path = config.out / "keywords.csv"
    export_report(report, kw_path)
    export_report(ranked, config.out / "rank_curve.csv")
    summary = validation_summary(ranked, sample.n_controls, len(sample.records))
    (config.out / "summary.txt").write_text(summary + "\n", encoding="utf-8")
    if report.truncated:
        _say(f"only {report.n_works} works available for the keyword report")
    _say(f"keywords over {report.selection}: " + ", ".join(f"{k} ({n})" for k, n in report.counts[:10]))
    write_sidecar(kw_path, "report", config, ranked=str(ranked_path), truncated=report.truncated)
    return kw_path


# -- argument parsing --------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="pipeline config (JSON)")
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int)
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--threshold", type=float, dest="q1_threshold")
    p.add_argument("--fixture-dir", dest="fixture_dir", help="serve OpenAlex from recorded pages in this directory")
    p.add_argument("--output-dir", dest="output_dir")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="climrank", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fetch", help="harvest and filter works into corpus.jsonl")
    _common(p)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("sample", help="draw a random sample and spike it with controls")
    _common(p)
    p.add_argument("--n-random", type=int)
    p.add_argument("--n-controls", type=int)
    p.add_argument("--corpus", type=Path)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("evaluate", help="score the sample with the configured provider")
    _common(p)
    p.add_argument("--sample", type=Path)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("ingest-survey", help="turn a survey CSV into a human evaluation dataset")
    _common(p)
    p.add_argument("csv", type=Path)
    p.add_argument("--sample", type=Path)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("stats", help="kappa and correlation between evaluation datasets")
    _common(p)
    p.add_argument("datasets", type=Path, nargs="+")

    p = sub.add_parser("train", help="fit question weights on the positive controls")
    _common(p)
    p.add_argument("dataset", type=Path)
    p.add_argument("--sample", type=Path)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("rank", help="filter on Q1 and rank by weighted score")
    _common(p)
    p.add_argument("dataset", type=Path)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--sample", type=Path)
    p.add_argument("--out", type=Path)

    p = sub.add_parser("report", help="keyword frequencies and plot-ready exports")
    _common(p)
    p.add_argument("--ranked", type=Path)
    p.add_argument("--sample", type=Path)
    p.add_argument("--top-n", type=int)
    p.add_argument("--include-controls", action="store_true")
    return parser


def _config_from_args(args) -> PipelineConfig:
    config = PipelineConfig.load(args.config)
    for name in ("seed", "runs", "scenario", "mode", "q1_threshold", "fixture_dir", "output_dir"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(config, name, value)
    config.validate()
    return config


def main(argv: Sequence[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    logging.getLogger("httpx").setLevel(logging.WARNING)
    try:
        config = _config_from_args(args)
        if args.command == "fetch":
            cmd_fetch(config, args.out)
        elif args.command == "sample":
            n_random = args.n_random if args.n_random is not None else config.n_random
            n_controls = args.n_controls if args.n_controls is not None else config.n_controls
            cmd_sample(config, n_random, n_controls, args.corpus, args.out)
        elif args.command == "evaluate":
            cmd_evaluate(config, args.sample, args.out)
        elif args.command == "ingest-survey":
            cmd_ingest_survey(config, args.csv, args.sample, args.out)
        elif args.command == "stats":
            cmd_stats(config, args.datasets)
        elif args.command == "train":
            cmd_train(config, args.dataset, args.sample, args.out)
        elif args.command == "rank":
            cmd_rank(config, args.dataset, args.weights, args.sample, args.out)
        elif args.command == "report":
            cmd_report(config, args.ranked, args.sample, args.top_n, args.include_controls)
    except ClimrankError as exc:
        print(f"climrank {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"climrank {args.command}: {exc}", file=sys.stderr)
        return 20
    return 0


if __name__ == "__main__":
    sys.exit(main())
