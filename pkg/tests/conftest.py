import pytest

from climrank import synthetic
from climrank.corpus import sample_random, spike_controls, work_record_from_raw
from climrank.openalex import RawWork, filter_works
from climrank.providers import MockProvider


def make_sample(n_random=95, n_controls=5, seed=11):
    raws = [RawWork.from_api(d) for d in synthetic.synthetic_raw_works(n_random + 20, seed=seed)]
    corpus = [work_record_from_raw(r) for r in filter_works(raws, synthetic.IN_SCOPE_TOPICS)]
    drawn = sample_random(corpus, n_random, seed)
    return spike_controls(drawn, synthetic.synthetic_controls(n_controls, seed=seed), seed)


@pytest.fixture
def sample100():
    return make_sample()


@pytest.fixture
def biased_mock():
    return MockProvider(seed=0, bias_markers=synthetic.DEFAULT_BIAS)


def make_workspace(root, n_eligible=95, n_controls=5, seed=0, fixture_kwargs=None, **config):
    """Fixture pages, topic whitelist, control file and a pipeline config under ``root``."""
    import json

    from climrank.corpus import save_corpus

    root.mkdir(parents=True, exist_ok=True)
    synthetic.write_fixture(root / "fixture", n_eligible, seed=seed, **(fixture_kwargs or {}))
    synthetic.write_whitelist(root / "topics.txt")
    save_corpus(synthetic.synthetic_controls(max(n_controls, 1), seed=seed), root / "controls.jsonl")
    cfg = {
        "topic_whitelist_path": "topics.txt",
        "controls_path": "controls.jsonl",
        "fixture_dir": "fixture",
        "output_dir": "out",
        "seed": seed,
        "n_random": n_eligible,
        "n_controls": n_controls,
        "requests_per_second": None,
        "provider": {"kind": "mock", "bias_markers": [
            {"keyword": m.keyword, "boost": list(m.boost), "suppress": list(m.suppress)}
            for m in synthetic.DEFAULT_BIAS]},
    }
    cfg.update(config)
    path = root / "pipeline.json"
    path.write_text(json.dumps(cfg, indent=2))
    return path


def run_pipeline(config_path, modes=("binary",), scenario="context"):
    """fetch -> sample -> evaluate -> train -> rank -> report through the CLI entry point."""
    from climrank.cli import main

    out = config_path.parent / "out"
    cfg = ["--config", str(config_path)]
    assert main(["fetch", *cfg]) == 0
    assert main(["sample", *cfg]) == 0
    for mode in modes:
        assert main(["evaluate", *cfg, "--scenario", scenario, "--mode", mode]) == 0
    ds = out / f"eval-{scenario}-{modes[0]}.jsonl"
    assert main(["train", *cfg, str(ds)]) == 0
    assert main(["rank", *cfg, str(ds), "--weights", str(out / "weights.json")]) == 0
    assert main(["report", *cfg]) == 0
    return out
