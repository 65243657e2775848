import numpy as np
import pytest

from mmr_falsify.data import CombinedDataset


def small_dataset(n=40, d=3, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    S = np.tile([0, 0, 1, 1], n // 4)
    A = np.tile([0, 1], n // 2)
    Y = X[:, 0] + A + rng.standard_normal(n)
    return CombinedDataset(X, A, Y, S)


@pytest.fixture
def toy():
    return small_dataset()


_CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``record(k, ok, detail)`` stores a one-line verdict and returns ``ok``."""

    def record(k: int, ok: bool, detail: str) -> bool:
        _CRITERIA[k] = f"criterion {k}: {'PASS' if ok else 'FAIL'} | {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[k])
