from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from enroll_opt.design import AllocationBounds, CostModel, CountryKinetics
from enroll_opt.model import CountryPlan, SitePlan, StudyPlan, activation_grid
from enroll_opt.pgdist import RatePrior

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

# grid-sample prior shared by several fixtures
SMALL_PRIOR = RatePrior(1.5, 150.0)


def make_country(cid: str, days, prior: RatePrior = SMALL_PRIOR, cap=None) -> CountryPlan:
    return CountryPlan(cid, tuple(SitePlan(f"{cid}-{i}", int(d), prior) for i, d in enumerate(days)), cap)


def grid_plan(n_countries: int, sites: int, window=(0, 60), prior=SMALL_PRIOR, caps=None, target=60, t_plan=200):
    caps = caps or [None] * n_countries
    days = activation_grid(window[0], window[1], sites)
    countries = [make_country(f"c{j}", days, prior, caps[j]) for j in range(n_countries)]
    return StudyPlan(tuple(countries), target, t_plan)


TABLE1 = {
    "low": np.array([0, 0, 2, 0, 0, 1, 1, 1, 2, 0, 2, 2, 0, 0, 0, 2]),
    "high": np.array([7, 4, 5, 4, 6, 7, 5, 7, 5, 7, 7, 7, 4, 5, 5, 7]),
    "rate_per_month": np.array([0.42, 0.43, 0.22, 0.55, 0.3, 0.57, 0.21, 0.25, 0.16, 0.19, 0.18, 0.62, 0.45, 0.23, 0.3, 0.39]),
    "patient_cost": np.array(
        [15600, 14250, 13550, 14200, 13800, 14300, 13400, 14250, 12300, 13800, 14600, 16380, 13400, 11200, 14000, 14100],
        dtype=float,
    ),
}


@pytest.fixture(scope="session")
def table1():
    kin = [CountryKinetics.from_mean_cv(r / 30.0, 1.2, (30, 210), 720) for r in TABLE1["rate_per_month"]]
    costs = CostModel.uniform_site(5000.0, TABLE1["patient_cost"])
    bounds = AllocationBounds(TABLE1["low"], TABLE1["high"])
    return bounds, kin, costs


@pytest.fixture(scope="session")
def table1_config_path():
    return CONFIGS / "table1.json"


@pytest.fixture(scope="session")
def demo_config_path():
    return CONFIGS / "capped_demo.json"


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per criterion; lines are echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def record(number: int, name: str, passed: bool, detail: str = "") -> None:
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}" + (f": {detail}" if detail else "")
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@pytest.fixture
def load_json():
    return lambda p: json.loads(Path(p).read_text())
