import numpy as np
import pytest

from localprop import Episode, FeatureTensor, synth_generate
from localprop.evaluation import episode_rng, sample_episode


@pytest.fixture(scope="session")
def small_store():
    return synth_generate(8, 12, 4, 4, 16, clutter_fraction=0.5, noise=0.5, seed=3)


def random_episode(store, seed, ways=3, shots=2, queries_per_class=2):
    return sample_episode(store, ways, shots, ways * queries_per_class, episode_rng(seed, 0))


def tensor_from_rows(rows, width=None, height=1):
    rows = np.asarray(rows, dtype=np.float64)
    width = width or len(rows)
    return FeatureTensor(rows.reshape(width, height, -1))


def episode_from_vectors(supports, labels, queries, ways, shots):
    """Episode whose images are single-position tensors holding the given vectors."""
    return Episode(
        ways, shots,
        [tensor_from_rows([v]) for v in supports], labels,
        [tensor_from_rows([v]) for v in queries],
    )


# criterion number -> (passed, detail); filled in by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
