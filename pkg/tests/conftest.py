import numpy as np
import pytest


@pytest.fixture()
def tiny_corpus(tmp_path):
    """A small deterministic text file for CLI and trainer tests."""
    rng = np.random.default_rng(12345)
    words = ["stone", "river", "lamp", "quiet", "harbor", "wheel", "amber", "north"]
    text = " ".join(words[i] for i in rng.integers(0, len(words), size=1200))
    path = tmp_path / "corpus.txt"
    path.write_text(text)
    return path
