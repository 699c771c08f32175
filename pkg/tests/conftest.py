"""Shared fixtures. The expensive pipeline results (bargains, robust
settlements) are session-scoped so every test file prices against the
same solves instead of repeating them."""
import dataclasses

import pytest

from hcng_trade.bargain import bargain, solve_independent, solve_q1_centralized
from hcng_trade.netmodel import load_bundled
from hcng_trade.robust import ccg


@pytest.fixture(scope="session")
def tiny():
    return load_bundled("tiny4x3")


@pytest.fixture(scope="session")
def ieee():
    return load_bundled("ieee33_belgian20")


@pytest.fixture(scope="session")
def tiny_independent(tiny):
    return solve_independent(tiny)


@pytest.fixture(scope="session")
def tiny_bargain(tiny):
    return bargain(tiny)


@pytest.fixture(scope="session")
def tiny_central(tiny):
    return solve_q1_centralized(tiny)


@pytest.fixture(scope="session")
def tiny_robust(tiny):
    return ccg(tiny, case="case4")


@pytest.fixture(scope="session")
def ieee_bargain(ieee):
    return bargain(ieee)


@pytest.fixture(scope="session")
def ieee_model2(ieee):
    return bargain(dataclasses.replace(ieee, variant="model2"))


@pytest.fixture(scope="session")
def ieee_model3(ieee):
    return bargain(dataclasses.replace(ieee, variant="model3"))


@pytest.fixture(scope="session")
def ieee_robust(ieee):
    return ccg(ieee, case="case4")
