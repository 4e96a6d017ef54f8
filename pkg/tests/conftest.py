import numpy as np
import pytest

from ontoembed.ontology import KINDS
from ontoembed.synth import make_tree, toy_ontologies


@pytest.fixture
def toy():
    return toy_ontologies()


@pytest.fixture
def seven():
    """Three 7-node binary trees of depth 2."""
    return {k: make_tree(k, (2, 2)) for k in KINDS}


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
