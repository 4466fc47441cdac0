import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mgsched.config import MgConfig, bundled_config  # noqa: E402
from mgsched.milp.external import default_cbc_command  # noqa: E402
from mgsched.scenarios import build_scenarios  # noqa: E402

ACCEPTANCE_LINES = []

HIGHS_COMMAND = f"{sys.executable} -m mgsched.milp.highs_runner {{mps}} {{sol}}"


def record_criterion(number: int, passed: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def cfg() -> MgConfig:
    return bundled_config()


@pytest.fixture(scope="session")
def scen(cfg):
    return build_scenarios(cfg.profiles, cfg.n_scenarios, cfg.seed)


@pytest.fixture(scope="session")
def small_cfg(cfg):
    """Six-hour, uncoupled configuration for desk-scale solves."""
    return cfg.with_(horizon=6, first_stage=())


@pytest.fixture(scope="session")
def small_scen(cfg):
    return build_scenarios(cfg.profiles, 1, cfg.seed, horizon=6)


@pytest.fixture(scope="session")
def cbc_command():
    cmd = default_cbc_command()
    if cmd is None:
        pytest.skip("no CBC binary available")
    return cmd


@pytest.fixture(scope="session")
def highs_command():
    pytest.importorskip("highspy")
    return HIGHS_COMMAND
