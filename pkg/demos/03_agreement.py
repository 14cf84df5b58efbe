# %% [markdown]
# # Agreement between rater panels
#
# A simulated human panel and two prompt scenarios are compared with
# Cohen's kappa (after a majority vote per work) and with Pearson
# correlation of the mean scores.

# %%
import random

import numpy as np

from climrank import synthetic
from climrank.agreement import agreement_report, mean_scores
from climrank.corpus import sample_random, spike_controls, work_record_from_raw
from climrank.evaluator import HUMAN, EvaluationDataset, EvaluationRecord, evaluate_batch
from climrank.openalex import RawWork, filter_works
from climrank.providers import MockProvider
from climrank.rubric import BINARY, CONTEXT, NO_SHOT, QUESTION_KEYS, PromptScenario, ScoreVector

raws = [RawWork.from_api(d) for d in synthetic.synthetic_raw_works(120, seed=8)]
corpus = [work_record_from_raw(r) for r in filter_works(raws, synthetic.IN_SCOPE_TOPICS)]
sample = spike_controls(sample_random(corpus, 95, 8), synthetic.synthetic_controls(5, 8), 8)
mock = MockProvider(seed=0, bias_markers=synthetic.DEFAULT_BIAS)

context = evaluate_batch(sample, PromptScenario.make(CONTEXT), BINARY, 6, mock)
no_shot = evaluate_batch(sample, PromptScenario.make(NO_SHOT), BINARY, 6, mock)

# %% [markdown]
# Six "humans" who copy the context answers but flip each one with
# probability 0.15.

# %%
rng = random.Random(0)
human_records = []
for r in context.records:
    flipped = {q: v if rng.random() > 0.15 else 1 - v for q, v in r.scores.values.items()}
    human_records.append(EvaluationRecord(r.work_id, f"R{r.rater_id}", HUMAN, ScoreVector(BINARY, flipped)))
humans = EvaluationDataset(human_records, sample.work_ids, {HUMAN: 6})

# %%
report = agreement_report(mean_scores(humans), [mean_scores(context), mean_scores(no_shot)])
for q in QUESTION_KEYS:
    print(q, "  ".join(f"{report.kappa[(q, pair)]:+.2f}" for pair in report.pairs))
print("sums", {b: round(s, 2) for (_, b), s in report.kappa_sum.items()})

# %% [markdown]
# The correlation matrix covers every (source, question) column.

# %%
corr = report.correlation
print(corr.values.shape)
print(np.round(corr.values[:7, 7:14], 2))
