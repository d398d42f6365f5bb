"""Shared corpus fixtures; session-scoped because generation is deterministic."""

import pytest

from agentaccel import corpus, fixtures, pipeline
from agentaccel.clusterplan import build_plan
from agentaccel.kvstore import KVStore
from agentaccel.simulator import geometry_presets
from agentaccel.weaver import Weaver

PLAN_SEED = fixtures.DEFAULT_SEED
PLAN_BUDGET = 15
PLAN_RANK = 8


@pytest.fixture(scope="session")
def fixture_paths(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("corpus")
    return fixtures.write_fixtures(outdir, seed=fixtures.DEFAULT_SEED)


@pytest.fixture(scope="session")
def bundle(fixture_paths):
    return pipeline.load_bundle(
        fixture_paths["registry"],
        fixture_paths["train"],
        fixture_paths["test"],
        fixture_paths["examples"],
        fixture_paths["vocab"],
    )


@pytest.fixture(scope="session")
def coactivation(bundle):
    return corpus.build_coactivation(bundle.train, bundle.registry)


@pytest.fixture(scope="session")
def plan(bundle, coactivation):
    return build_plan(
        coactivation,
        bundle.registry,
        bundle.examples,
        bundle.train,
        budget=PLAN_BUDGET,
        rank=PLAN_RANK,
        seed=PLAN_SEED,
    )


@pytest.fixture(scope="session")
def oracle_rag(bundle):
    return bundle.make_rag("oracle")


@pytest.fixture(scope="session")
def weaver(bundle, plan, oracle_rag):
    return Weaver(bundle.registry, bundle.tokenizer, plan, bundle.examples, oracle_rag)


@pytest.fixture(scope="session")
def desk_geometry():
    return geometry_presets()["desk"]


@pytest.fixture(scope="session")
def populated_store(tmp_path_factory, weaver, desk_geometry):
    store = KVStore(tmp_path_factory.mktemp("kvcache"))
    for tag, prefixes in weaver.cacheable_prefixes().items():
        if prefixes:
            store.precompute(prefixes, desk_geometry, tag=tag)
    return store
