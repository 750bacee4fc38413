from __future__ import annotations

import numpy as np
import pytest

from uavmcs.config import ExperimentConfig, SimConfig, with_overrides


@pytest.fixture
def cfg() -> SimConfig:
    return SimConfig()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_experiment() -> ExperimentConfig:
    """A configuration small enough for end-to-end runs in a few seconds."""
    return with_overrides(ExperimentConfig(), [
        "max_episodes=8", "episodes_per_update=4", "eval_every=4", "eval_episodes=2",
        "baseline_episodes=4", "ppo_epochs=1", "n_minibatches=2",
        "net.hidden=8", "net.conv_channels=[2,2]", "net.critic_hidden=[16,16]",
    ])


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
