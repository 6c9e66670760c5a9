import numpy as np
import pytest

from nomamab.env import NetworkScenario, ScenarioConfig


def make_scenario(gains, budgets=None, **overrides) -> NetworkScenario:
    """Scenario with hand-picked amplitude gains (K x M) and default physics."""
    gains = np.asarray(gains, dtype=float)
    K, M = gains.shape
    cfg = dict(n_aps=K, n_channels=M, n_plays=1, beta=2, budgets_w=[1.0] * K)
    cfg.update(overrides)
    config = ScenarioConfig(**cfg)
    if budgets is None:
        budgets = np.repeat(np.asarray(config.budgets_w, float)[:, None], M, axis=1)
    return NetworkScenario.from_dict({"config": cfg, "positions": np.zeros((K, 2)).tolist(),
                                      "gains": gains.tolist(), "budgets": np.asarray(budgets).tolist()})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance_report():
    def report(number: int, passed: bool, detail: str):
        line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
