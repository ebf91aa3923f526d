import numpy as np
import pytest

from halfline_ldp.path_space import Constant, LinearSlope, Path


def random_path(rng: np.random.Generator, n_knots: int = 6, t_max: float = 5.0, start: float = 0.0,
                tail: str = "constant", scale: float = 2.0) -> Path:
    t = np.concatenate([[0.0], np.sort(rng.uniform(0.0, t_max, n_knots - 1))])
    t = np.unique(t)
    v = start + np.concatenate([[0.0], np.cumsum(rng.normal(0.0, scale, t.size - 1))])
    ext = Constant() if tail == "constant" else LinearSlope(float(rng.normal()))
    return Path(t, v, ext)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
