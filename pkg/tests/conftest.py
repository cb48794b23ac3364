import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

import acceptance_log  # noqa: E402


@pytest.fixture
def small_synth():
    from vsec_lda.synth import SynthConfig, generate_corpus

    config = SynthConfig(K=4, C_rel=60, T_rel=15, C_irr=20, T_irr=5, D=300, seed=5)
    corpus, truth = generate_corpus(config)
    return config, corpus, truth


def pytest_terminal_summary(terminalreporter):
    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)
