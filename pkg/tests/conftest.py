from dataclasses import dataclass

import numpy as np
import pytest

from eiwv.dataset import standin_dataset, synth_generate
from eiwv.env import EnvState


@dataclass
class BanditConfig:
    p_min: float = 0.0
    p_max: float = 11.0
    theta: float = 0.5
    oracle: bool = False
    horizon: int = 5000


class QuadraticBandit:
    """Constant observation, reward -||a - target||^2."""

    def __init__(self, target, horizon=5000):
        self.target = np.asarray(target, dtype=float)
        self.config = BanditConfig(horizon=horizon)
        self.n_workers = len(self.target)
        self.eta = 0.0

    def reset(self, seed=None):
        return EnvState(np.full(self.n_workers, 0.5), 0)

    def step(self, action):
        a = action.payments
        return EnvState(np.full(self.n_workers, 0.5), 0), -float(np.sum((a - self.target) ** 2)), None


@pytest.fixture
def bandit():
    return QuadraticBandit


@pytest.fixture(scope="session")
def bluebirds():
    return standin_dataset("bluebirds", 0)


@pytest.fixture
def small_data():
    return synth_generate(12, 20, 2, (0.6, 0.95), 1.0, np.random.default_rng(7))


def pytest_configure(config):
    config.acceptance_lines = {}


@pytest.fixture
def report_criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion."""

    def report(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        request.config.acceptance_lines[number] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
