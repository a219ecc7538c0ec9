import pytest

from mcfreq.scenario import scenario_from_table_defaults, scenario_hash
from mcfreq.simulator import ensemble

ENSEMBLE_SEED = 2024
ENSEMBLE_T_END = 0.2


@pytest.fixture
def table():
    return scenario_from_table_defaults()


@pytest.fixture(scope="session")
def ensembles():
    """Session cache of ensembles keyed by scenario, so sweeps share runs."""
    cache = {}

    def get(s, n, t_end=ENSEMBLE_T_END, seed=ENSEMBLE_SEED):
        key = (scenario_hash(s), n, t_end, seed)
        if key not in cache:
            cache[key] = ensemble(s, seed, n, t_end)
        return cache[key]

    return get
