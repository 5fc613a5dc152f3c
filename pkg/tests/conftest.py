import os
import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from metrocover.backend import SOLVER_ENV, BackendError, config_from_env, find_cbc, highs_available, preset
from metrocover.ingest import load_network, network_from_text

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
DATASETS = ROOT / "datasets"
JOURNEYS = DATASETS / "journeys"

METRO_LINES = frozenset("1 2 3 3bis 4 5 6 7 7bis 8 9 10 11 12 13 14".split())


def fixture_net(name, corridors="merge"):
    return load_network(FIXTURES / f"{name}.txt", corridors=corridors)


def dataset_net(name, corridors="merge"):
    return load_network(DATASETS / f"{name}.txt", corridors=corridors)


def solver_config(time_limit=60):
    """The solver named in the environment, else CBC, else HiGHS; None if neither exists."""
    try:
        if os.environ.get(SOLVER_ENV, "").strip():
            return config_from_env(time_limit=time_limit)
        if find_cbc():
            return preset("cbc", time_limit=time_limit)
        if highs_available():
            return preset("highs", time_limit=time_limit)
    except BackendError:
        return None
    return None


@pytest.fixture(scope="session")
def milp():
    cfg = solver_config()
    if cfg is None:
        pytest.skip("no MILP solver available (install highspy or pulp)")
    return cfg


@pytest.fixture(scope="session")
def other_milp(milp):
    """A second solver different from ``milp``, for backend-independence checks."""
    for name in ("highs", "cbc"):
        if name == milp.name:
            continue
        try:
            return preset(name, time_limit=60)
        except BackendError:
            continue
    pytest.skip("only one MILP solver is installed")


def random_networks(seed, count, transit=True, **kw):
    """``count`` seeded random networks that have at least one line."""
    from brute import random_spec_text

    rng = random.Random(seed)
    out = []
    while len(out) < count:
        net = network_from_text(random_spec_text(rng, transit, **kw))
        if net.lines:
            out.append(net)
    return out


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
