"""MovieLens rating files, index maps and k-fold splits."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DataValidationError, ParseError
from .linalg import MaskedMatrix

_logger = logging.getLogger(__name__)

FORMATS = {"tab_100k": "\t", "colon_1m": "::"}
_FORMAT_ALIASES = {"100k": "tab_100k", "1m": "colon_1m"}

RATING_MIN = 1.0
RATING_MAX = 5.0


class RatingRecord(NamedTuple):
    user_id: int
    item_id: int
    rating: float
    timestamp: int


@dataclass(frozen=True)
class RatingsDataset:
    """Immutable ratings with dense 0-based index maps.

    ``user_index``/``item_index`` map original ids to dense indices in order of
    first appearance in ``records``.
    """

    records: tuple[RatingRecord, ...]
    user_index: dict[int, int]
    item_index: dict[int, int]
    name: str = ""
    users: np.ndarray = field(init=False, repr=False, compare=False)
    items: np.ndarray = field(init=False, repr=False, compare=False)
    ratings: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        users = np.fromiter((self.user_index[r.user_id] for r in self.records),
                            dtype=np.int64, count=len(self.records))
        items = np.fromiter((self.item_index[r.item_id] for r in self.records),
                            dtype=np.int64, count=len(self.records))
        ratings = np.fromiter((r.rating for r in self.records),
                              dtype=np.float64, count=len(self.records))
        for arr in (users, items, ratings):
            arr.flags.writeable = False
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "ratings", ratings)

    @classmethod
    def from_records(cls, records, name=""):
        """Build a dataset, validating ranges and (user, item) uniqueness."""
        records = tuple(RatingRecord(*r) for r in records)
        user_index: dict[int, int] = {}
        item_index: dict[int, int] = {}
        seen = set()
        for rec in records:
            if not RATING_MIN <= rec.rating <= RATING_MAX:
                raise DataValidationError(
                    f"rating {rec.rating} for user {rec.user_id}, item "
                    f"{rec.item_id} outside [{RATING_MIN}, {RATING_MAX}]")
            key = (rec.user_id, rec.item_id)
            if key in seen:
                raise DataValidationError(
                    f"duplicate rating for user {rec.user_id}, item {rec.item_id}")
            seen.add(key)
            user_index.setdefault(rec.user_id, len(user_index))
            item_index.setdefault(rec.item_id, len(item_index))
        return cls(records, user_index, item_index, name=name)

    @property
    def num_users(self) -> int:
        return len(self.user_index)

    @property
    def num_items(self) -> int:
        return len(self.item_index)

    def __len__(self):
        return len(self.records)

    @property
    def density(self) -> float:
        return len(self) / (self.num_users * self.num_items)

    def user_ids(self) -> np.ndarray:
        """Original user ids ordered by dense index."""
        return np.fromiter(self.user_index, dtype=np.int64, count=self.num_users)

    def item_ids(self) -> np.ndarray:
        return np.fromiter(self.item_index, dtype=np.int64, count=self.num_items)

    def to_masked(self, mask=None) -> MaskedMatrix:
        """Observed ratings (optionally a boolean record subset) over the full M x N grid."""
        sel = slice(None) if mask is None else mask
        return MaskedMatrix((self.num_users, self.num_items),
                            self.users[sel], self.items[sel], self.ratings[sel])


def normalize_format(fmt: str) -> str:
    fmt = _FORMAT_ALIASES.get(fmt, fmt)
    if fmt not in FORMATS:
        raise ValueError(f"unknown ratings format {fmt!r}; expected one of "
                         f"{sorted(FORMATS) + sorted(_FORMAT_ALIASES)}")
    return fmt


def parse_movielens(path, format="tab_100k") -> RatingsDataset:
    """Parse a MovieLens 100K (``u.data``) or 1M (``ratings.dat``) file.

    Parameters
    ----------
    path : str or path-like
        Ratings file.
    format : {"tab_100k", "colon_1m", "100k", "1m"}
        Field separator convention: tab for 100K, ``::`` for 1M.

    Raises
    ------
    ParseError
        On a malformed line (carries the 1-based line number) or an empty file.
    DataValidationError
        On an out-of-range rating or a duplicate (user, item) pair.
    """
    fmt = normalize_format(format)
    sep = FORMATS[fmt]
    records = []
    with open(path, encoding="latin-1") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(sep)
            if len(fields) != 4:
                raise ParseError(f"expected 4 fields separated by {sep!r}, got "
                                 f"{len(fields)}", path, lineno)
            try:
                user, item, rating, ts = (int(f) for f in fields)
            except ValueError:
                raise ParseError(f"non-integer field in {line!r}", path, lineno) from None
            if user < 1 or item < 1:
                raise ParseError(f"ids must be >= 1, got user={user} item={item}",
                                 path, lineno)
            records.append(RatingRecord(user, item, float(rating), ts))
    if not records:
        raise ParseError("no ratings found", path)
    try:
        ds = RatingsDataset.from_records(records, name=os.path.basename(os.fspath(path)))
    except DataValidationError as exc:
        raise DataValidationError(f"{path}: {exc}") from None
    _logger.info("parsed %d ratings: %d users x %d items", len(ds), ds.num_users, ds.num_items)
    return ds


@dataclass(frozen=True)
class FoldPlan:
    n_folds: int
    assignments: np.ndarray
    seed: int

    def fold_sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.n_folds)

    def fingerprint(self) -> str:
        """Short hash of the assignment vector, for asserting identical splits."""
        import hashlib

        return hashlib.sha1(self.assignments.astype("<i8").tobytes()).hexdigest()[:16]


def make_folds(ds: RatingsDataset | int, n_folds: int, seed: int) -> FoldPlan:
    """Seeded random permutation of records chopped into near-equal blocks.

    ``ds`` may also be a plain record count.
    """
    n = ds if isinstance(ds, (int, np.integer)) else len(ds)
    if n_folds < 2:
        raise ValueError(f"n_folds must be >= 2, got {n_folds}")
    if n_folds > n:
        raise ValueError(f"n_folds={n_folds} exceeds record count {n}")
    perm = np.random.default_rng(seed).permutation(n)
    assignments = np.empty(n, dtype=np.int64)
    for fold, block in enumerate(np.array_split(perm, n_folds)):
        assignments[block] = fold
    assignments.flags.writeable = False
    return FoldPlan(n_folds, assignments, seed)


def split(ds: RatingsDataset, plan: FoldPlan, test_fold: int):
    """Return ``(train, test)``: a MaskedMatrix over the full index space and
    the held-out records."""
    if not 0 <= test_fold < plan.n_folds:
        raise ValueError(f"test_fold must be in [0, {plan.n_folds}), got {test_fold}")
    if len(plan.assignments) != len(ds):
        raise ValueError("fold plan does not match dataset size")
    is_test = plan.assignments == test_fold
    train = ds.to_masked(~is_test)
    test = [ds.records[j] for j in np.flatnonzero(is_test)]
    return train, test
