import dataclasses

import pytest

import mixedtraffic as mt
from mixedtraffic.metanet import NoiseSpec


@pytest.fixture(scope="session")
def default_sc():
    return mt.default_scenario()


@pytest.fixture(scope="session")
def default_result(default_sc):
    """Full default run, shared read-only across tests."""
    return mt.run_experiment(default_sc)


@pytest.fixture(scope="session")
def silent_sc(default_sc):
    """Default scenario with every noise source off."""
    return dataclasses.replace(default_sc, noise=NoiseSpec.silent(default_sc.seed))


@pytest.fixture(scope="session")
def silent_truth(silent_sc):
    return mt.simulate_truth(silent_sc)
