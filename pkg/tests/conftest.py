import numpy as np
import pytest

from spl.instance import DaInstance, PlpInstance


def random_plp(rng, n_agents, n_resources, max_options=2, zero_prob=0.2):
    """Small random PLP with integer-ish data so vertices are well conditioned."""
    resources = [(f"r{j}", float(rng.integers(1, 4))) for j in range(n_resources)]
    agents = []
    for i in range(n_agents):
        opts = []
        for k in range(int(rng.integers(1, max_options + 1))):
            usage = {}
            for j in range(n_resources):
                if rng.random() > zero_prob:
                    usage[f"r{j}"] = float(rng.integers(1, 4))
            opts.append((f"o{k}", float(rng.integers(0, 10)) + rng.random(), usage))
        agents.append((f"a{i}", opts))
    return PlpInstance.from_records(resources, agents)


def random_da(rng, m, n, max_demand=3, density=0.6, integer=False):
    advertisers = [(f"a{j}", int(rng.integers(1, max_demand + 1))) for j in range(m)]
    impressions = []
    for i in range(n):
        edges = []
        for j in range(m):
            if rng.random() < density:
                w = float(rng.integers(1, 6)) if integer else float(rng.lognormal(0.0, 1.0))
                edges.append((f"a{j}", w))
        if not edges:
            j = int(rng.integers(m))
            edges.append((f"a{j}", 1.0 if integer else float(rng.lognormal())))
        impressions.append((f"i{i}", edges))
    return DaInstance.from_records(advertisers, impressions)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit_pair():
    """Two agents (weights 3 and 5) competing for one unit resource."""
    return PlpInstance.from_records(
        [("r", 1.0)],
        [("low", [("o", 3.0, {"r": 1.0})]), ("high", [("o", 5.0, {"r": 1.0})])],
    )


def random_small_lp(rng):
    """PLP with at most 6 option variables, sized for vertex enumeration."""
    while True:
        inst = random_plp(rng, int(rng.integers(1, 4)), int(rng.integers(1, 4)), max_options=3)
        if 1 <= inst.n_options <= 6:
            return inst


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion, printed after the run

ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail=""):
    """Remember the verdict for criterion ``number`` (a later call overrides)."""
    ACCEPTANCE[number] = (title, bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, passed, detail = ACCEPTANCE[number]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {number:>2}. {title}: {detail}")
