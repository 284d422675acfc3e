import json
import pathlib

import numpy as np
import pytest

import impc

REPO = pathlib.Path(__file__).resolve().parents[1]
BENCH_CONFIG = REPO / "configs" / "double_integrator.json"


@pytest.fixture(scope="session")
def benchmark_cfg():
    return impc.ExperimentConfig.from_json(BENCH_CONFIG)


@pytest.fixture(scope="session")
def benchmark_dataset(benchmark_cfg):
    return impc.generate_dataset(benchmark_cfg, np.random.default_rng(benchmark_cfg.seed))


@pytest.fixture(scope="session")
def benchmark_pipeline(benchmark_cfg, benchmark_dataset, tmp_path_factory):
    cache = tmp_path_factory.mktemp("tube_cache")
    return impc.build_pipeline(benchmark_cfg, dataset=benchmark_dataset, cache_dir=cache)


@pytest.fixture(scope="session")
def bench_raw():
    with open(BENCH_CONFIG) as fh:
        return json.load(fh)
