from __future__ import annotations

import pytest

from irsim.core import CATEGORY_ORDER
from irsim.seeds import default_seeds
from irsim.variation import DistributionConfig, build_benchmark


@pytest.fixture(scope="session")
def seeds():
    return default_seeds()


@pytest.fixture(scope="session")
def seed_by_id(seeds):
    return {s.scenario_id: s for s in seeds}


@pytest.fixture(scope="session")
def small_benchmark(seeds):
    """Forty cases, five TP and five FP per category."""
    cfg = DistributionConfig.from_dict({"categories": {c.value: {"tp": 5, "fp": 5} for c in CATEGORY_ORDER}})
    return build_benchmark(cfg, seeds, rng_seed=2024)


@pytest.fixture(scope="session")
def small_corpus(small_benchmark, tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    small_benchmark.write(root)
    return root


@pytest.fixture(scope="session")
def bundles(small_benchmark):
    return small_benchmark.cases


# --- acceptance reporting ------------------------------------------------------------

_ACCEPTANCE = pytest.StashKey[dict]()


class Criterion:
    def __init__(self, store: dict, number: int, title: str):
        self.store, self.number, self.title = store, number, title
        self.detail = ""

    def __enter__(self) -> "Criterion":
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        status = "PASS" if exc_type is None else "FAIL"
        line = f"criterion {self.number}: {status}  {self.title}" + (f"  [{self.detail}]" if self.detail else "")
        self.store[self.number] = line
        print(line)
        return False


@pytest.fixture
def criterion(request):
    store = request.config.stash.setdefault(_ACCEPTANCE, {})
    return lambda number, title: Criterion(store, number, title)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for n in sorted(store):
            terminalreporter.write_line(store[n])
