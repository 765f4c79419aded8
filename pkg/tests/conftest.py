from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from adsb.catalog_ingest import load_catalog
from adsb.cie import load_kb
from adsb.ere.cluster import ClusterParams
from adsb.ere.forest import ForestParams
from adsb.ere.model import EreTrainConfig, train_ere
from adsb.gvk import SafetyConfig

import synth


def data_file(name: str) -> str:
    return str(resources.files("adsb.data").joinpath(name))


@pytest.fixture(scope="session")
def shipped_catalog():
    return load_catalog(data_file("catalog_fars_crss.txt"))


@pytest.fixture(scope="session")
def seed_kb():
    return load_kb(data_file("seed_kb.tsv"))


@pytest.fixture(scope="session")
def safety_config():
    return SafetyConfig.default()


@pytest.fixture(scope="session")
def synth_catalog(tmp_path_factory):
    path = synth.write_synth_catalog(tmp_path_factory.mktemp("catalog"))
    return load_catalog(path)


@pytest.fixture(scope="session")
def tiny_model(synth_catalog):
    """Small deterministic model used by monitor and assessment tests."""
    cases = synth.make_cases(200, seed=11, rule="binary")
    config = EreTrainConfig(
        seed=5,
        reduce_k=8,
        cluster=ClusterParams(method="kmeans", k=4),
        forest=ForestParams(n_trees=15, max_depth=10, min_leaf=2, max_features=None),
    )
    return train_ere(cases, synth_catalog, config)
