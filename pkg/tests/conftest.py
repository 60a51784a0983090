import pytest

from notetopics.lda import LdaConfig, train
from notetopics.synthetic import planted_lda_corpus


@pytest.fixture(scope="session")
def planted():
    return planted_lda_corpus(K=5, V=100, D=500, doc_len=100, alpha=0.1, seed=0)


@pytest.fixture(scope="session")
def small_planted():
    return planted_lda_corpus(K=3, V=30, D=60, doc_len=30, alpha=0.2, support=10, seed=7)


@pytest.fixture(scope="session")
def small_model(small_planted):
    return train(small_planted.matrix, LdaConfig(K=3, alpha=0.2, beta=0.05, passes=30, seed=11))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
