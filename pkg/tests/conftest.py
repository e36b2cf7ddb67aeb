import itertools

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def all_sign_sequences(n):
    """Every +/-1 sequence of length n as an int8 array of shape (2^n, n)."""
    return np.array(list(itertools.product((1, -1), repeat=n)), dtype=np.int8).reshape(-1, n)


@pytest.fixture
def enumerate_signs():
    return all_sign_sequences


# Filled by test_acceptance; printed after the run so every criterion shows a line
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])
