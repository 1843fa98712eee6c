from pathlib import Path

import numpy as np
import pytest
from scipy.stats import special_ortho_group

from rrmggd.imageio import RgbImage, load_image

CORPUS = Path(__file__).parent / "data" / "corpus"

# filled by test_acceptance, echoed after the run
ACCEPTANCE_LINES = []


def random_spd(rng, m=3, low=0.3, high=3.0):
    """Random rotation of a diagonal with eigenvalues drawn from [low, high]."""
    q = special_ortho_group.rvs(m, random_state=rng) if m > 1 else np.ones((1, 1))
    s = q @ np.diag(rng.uniform(low, high, m)) @ q.T
    return 0.5 * (s + s.T)


def add_noise(img, sigma, seed):
    rng = np.random.default_rng(seed)
    return RgbImage(np.clip(img.planes + sigma * rng.standard_normal(img.planes.shape), 0.0, 1.0))


@pytest.fixture(scope="session")
def corpus_paths():
    paths = sorted(CORPUS.glob("*.ppm"))
    assert len(paths) == 10
    return paths


@pytest.fixture(scope="session")
def corpus(corpus_paths):
    return {p.stem: load_image(p) for p in corpus_paths}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
