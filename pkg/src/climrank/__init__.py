"""Find climate-innovation candidates in scholarly literature.

Harvest works from OpenAlex, score them against a seven-question rubric
with a language model or human survey, measure rater agreement, and rank
the works by a Q1 filter plus logistic-regression question weights.
"""

__version__ = "0.1.0"

from .agreement import (
    AgreementReport,
    MeanScoreTable,
    agreement_report,
    cohens_kappa,
    correlation_matrix,
    majority_binarize,
    mean_scores,
    pearson,
)
from .corpus import CorpusSample, WorkRecord, load_corpus, sample_random, save_corpus, spike_controls
from .evaluator import EvaluationDataset, EvaluationRecord, evaluate_batch, load_dataset, save_dataset
from .openalex import OpenAlexClient, QuerySpec, RawWork, build_query, filter_works, reconstruct_abstract
from .providers import BiasMarker, HTTPProvider, MockProvider, mock_provider
from .ranking import (
    RankedList,
    WeightVector,
    fit_logistic,
    normalize_weights,
    q1_filter,
    rank,
    weighted_score,
)
from .reporting import KeywordReport, export_report, keyword_frequency
from .rubric import DEFAULT_RUBRIC, PromptScenario, Rubric, ScoreVector, build_prompt, parse_response
from .survey import export_survey, ingest_survey
