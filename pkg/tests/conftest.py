import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scenes import write_corpus  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def corpus_dir(tmp_path):
    return write_corpus(tmp_path / "corpus", 4, 16, 16)


@pytest.fixture(scope="session")
def tiny_meta_dir(tmp_path_factory):
    """6 distortion configurations (types I and G, 3 draws) over an 8-image corpus."""
    from aquaforge.dataio import index_corpus
    from aquaforge.synthgen import build_dataset

    root = tmp_path_factory.mktemp("meta")
    corpus = write_corpus(root / "corpus", 8, 16, 16)
    build_dataset(index_corpus(corpus), root / "synth", seed=0, draws_per_type=3, types=["I", "G"])
    return root / "synth"


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
