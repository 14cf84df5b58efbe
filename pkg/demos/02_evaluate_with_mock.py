# %% [markdown]
# # Scoring a sample with the mock provider
#
# A sample of harvested works gets five positive controls mixed in.  Each
# work is then scored six times against the seven-question rubric.

# %%
from climrank import synthetic
from climrank.corpus import sample_random, spike_controls, work_record_from_raw
from climrank.evaluator import evaluate_batch
from climrank.openalex import RawWork, filter_works
from climrank.providers import MockProvider
from climrank.rubric import BINARY, CONTEXT, SCALAR10, PromptScenario, build_prompt

raws = [RawWork.from_api(d) for d in synthetic.synthetic_raw_works(150, seed=4)]
corpus = [work_record_from_raw(r) for r in filter_works(raws, synthetic.IN_SCOPE_TOPICS)]
sample = spike_controls(sample_random(corpus, 95, seed=4), synthetic.synthetic_controls(5, seed=4), seed=4)
print(len(sample.records), "works,", len(sample.control_ids), "controls")

# %% [markdown]
# This is what a model sees for one work in the context scenario.

# %%
scenario = PromptScenario.make(CONTEXT)
print(build_prompt(sample.records[0], scenario, BINARY).text)

# %% [markdown]
# The mock answers deterministically.  Abstracts that mention a marker
# phrase get high scores on the questions the marker boosts.

# %%
mock = MockProvider(seed=0, bias_markers=synthetic.DEFAULT_BIAS)
binary = evaluate_batch(sample, scenario, BINARY, runs=6, provider=mock)
scalar = evaluate_batch(sample, scenario, SCALAR10, runs=6, provider=mock)
print(len(binary.records), "binary records,", len(scalar.records), "scalar records")

for r in binary.records[:12:6]:
    print(r.work_id, r.scores.as_tuple())
