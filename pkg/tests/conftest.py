import os
from pathlib import Path

import numpy as np
import pytest

from bcscf.dataset import RatingRecord, RatingsDataset, parse_movielens

ML100K_CANDIDATES = [
    os.environ.get("BCSCF_ML100K"),
    "data/ml-100k/u.data",
    "/root/data/ml-100k/u.data",
    str(Path.home() / "data/ml-100k/u.data"),
]
ML1M_CANDIDATES = [os.environ.get("BCSCF_ML1M"), "data/ml-1m/ratings.dat",
                   "/root/data/ml-1m/ratings.dat"]


def _first_existing(paths):
    for p in paths:
        if p and Path(p).is_file():
            return p
    return None


@pytest.fixture(scope="session")
def ml100k_path():
    path = _first_existing(ML100K_CANDIDATES)
    if path is None:
        pytest.skip("MovieLens 100K u.data not found (set BCSCF_ML100K)")
    return path


@pytest.fixture(scope="session")
def ml100k(ml100k_path):
    return parse_movielens(ml100k_path, "tab_100k")


@pytest.fixture(scope="session")
def ml1m_path():
    path = _first_existing(ML1M_CANDIDATES)
    if path is None:
        pytest.skip("MovieLens 1M ratings.dat not found (set BCSCF_ML1M)")
    return path


def synthetic_records(n_users=40, n_items=30, rank=3, density=0.4, seed=0):
    """Low-rank-plus-bias integer ratings on a random support."""
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(n_users, rank)) * 0.6
    V = rng.normal(size=(rank, n_items)) * 0.6
    X = 3.5 + rng.normal(0, 0.4, n_users)[:, None] + rng.normal(0, 0.4, n_items)[None, :] + U @ V
    mask = rng.random((n_users, n_items)) < density
    mask[np.arange(n_users), rng.integers(0, n_items, n_users)] = True
    mask[rng.integers(0, n_users, n_items), np.arange(n_items)] = True
    rows, cols = np.nonzero(mask)
    ratings = np.clip(np.rint(X[rows, cols]), 1, 5)
    return [RatingRecord(int(u) + 1, int(i) + 1, float(r), 880000000 + j)
            for j, (u, i, r) in enumerate(zip(rows, cols, ratings))]


@pytest.fixture
def small_ds():
    return RatingsDataset.from_records(synthetic_records(), name="synthetic")


@pytest.fixture
def small_file(tmp_path):
    path = tmp_path / "u.data"
    with open(path, "w") as fh:
        for r in synthetic_records():
            fh.write(f"{r.user_id}\t{r.item_id}\t{int(r.rating)}\t{r.timestamp}\n")
    return path


# acceptance summary: one line per criterion at the end of the run
_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(key, passed, detail):
        """``passed=None`` marks a criterion that could not run."""
        _ACCEPTANCE[key] = (passed, detail)
        print(f"[{_label(passed)}] {key}: {detail}")
    return record


def _label(passed):
    return "SKIP" if passed is None else ("PASS" if passed else "FAIL")


def _criterion_order(key):
    head = key.split()[0].lstrip("C")
    return (int(head) if head.isdigit() else 99, key)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=_criterion_order):
        passed, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"[{_label(passed)}] {key}: {detail}")
