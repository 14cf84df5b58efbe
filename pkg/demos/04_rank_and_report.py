# %% [markdown]
# # From scores to a ranked shortlist
#
# Mean scores are filtered on Q1, question weights are learned from the
# positive controls and the surviving works are ranked by weighted score.
# Binary and 1-10 scoring are compared for how many ties they leave.

# %%
from climrank import synthetic
from climrank.agreement import mean_scores
from climrank.corpus import sample_random, spike_controls, work_record_from_raw
from climrank.evaluator import evaluate_batch
from climrank.openalex import RawWork, filter_works
from climrank.providers import MockProvider
from climrank.ranking import feature_rows, fit_logistic, q1_filter, rank
from climrank.reporting import keyword_frequency, validation_summary
from climrank.rubric import BINARY, CONTEXT, FEATURE_KEYS, SCALAR10, PromptScenario

raws = [RawWork.from_api(d) for d in synthetic.synthetic_raw_works(130, seed=2)]
corpus = [work_record_from_raw(r) for r in filter_works(raws, synthetic.IN_SCOPE_TOPICS)]
sample = spike_controls(sample_random(corpus, 95, 2), synthetic.synthetic_controls(5, 2), 2)
mock = MockProvider(seed=0, bias_markers=synthetic.DEFAULT_BIAS)

# %%
ranked = {}
for mode in (BINARY, SCALAR10):
    table = mean_scores(evaluate_batch(sample, PromptScenario.make(CONTEXT), mode, 6, mock))
    weights = fit_logistic(feature_rows(table, sample.control_ids))
    print(mode, {k: round(weights.weights[k], 3) for k in FEATURE_KEYS})
    passed = q1_filter(table, 0.6)
    ranked[mode] = rank(passed, {w: table.row(w, FEATURE_KEYS) for w in table.works}, weights,
                        sample.control_ids, 0.6)

# %%
for mode, r in ranked.items():
    print(f"--- {mode}")
    print(validation_summary(r, sample.n_controls, len(sample.records)))

# %% [markdown]
# Keywords of the best non-control works.

# %%
report = keyword_frequency(ranked[SCALAR10], sample.lookup(), top_n=10)
print(report.selection, report.counts)
