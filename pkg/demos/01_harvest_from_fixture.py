# %% [markdown]
# # Harvesting works offline
#
# The OpenAlex client can read recorded `/works` pages from a directory
# instead of the network.  Here we synthesise such a directory, run the
# listing query against it and filter the results by topic.

# %%
import tempfile
from pathlib import Path

from climrank import synthetic
from climrank.corpus import work_record_from_raw
from climrank.openalex import OpenAlexClient, QuerySpec, build_query, filter_works, reconstruct_abstract

workdir = Path(tempfile.mkdtemp(prefix="climrank-demo-"))
synthetic.write_fixture(workdir / "pages", n_eligible=60, seed=1, n_no_abstract=8, n_out_of_scope=6, n_old=4)

# %% [markdown]
# The query below is the one sent to the live API.  In fixture mode the
# same filter string is applied to the recorded pages, so old works drop out here.

# %%
spec = QuerySpec.uk_defaults(contact_email="you@example.org")
print(build_query(spec)["filter"].replace(",", ",\n"))

# %%
with OpenAlexClient(str(workdir / "pages")) as client:
    raws = list(client.iter_works(spec, page_size=25))
print(len(raws), "works fetched in", client.stats.requests, "requests")

# %% [markdown]
# Abstracts arrive as word-to-position maps.

# %%
first = raws[0]
print(dict(list(first.abstract_inverted_index.items())[:5]))
print(reconstruct_abstract(first.abstract_inverted_index)[:120], "...")

# %%
kept = filter_works(raws, synthetic.IN_SCOPE_TOPICS)
corpus = [work_record_from_raw(r) for r in kept]
print(f"{len(raws)} fetched, {len(corpus)} retained")
