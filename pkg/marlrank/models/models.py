"""Dataset entities: query groups, datasets and cross-validation folds."""
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator

import numpy as np

from marlrank.errors import DataError, FoldLayoutError
from marlrank.schemas.schemas import DocumentRecord


@dataclass(frozen=True)
class QueryGroup:
    """All documents of one query, in file order. One episode runs over one group."""

    query_id: str
    docs: tuple[DocumentRecord, ...]

    def __post_init__(self):
        if not self.docs:
            raise DataError(f"query {self.query_id!r} has no documents")
        if any(doc.query_id != self.query_id for doc in self.docs):
            raise DataError(f"query {self.query_id!r} holds documents of another query")

    def __len__(self) -> int:
        return len(self.docs)

    @cached_property
    def features(self) -> np.ndarray:
        return np.array([doc.features for doc in self.docs], dtype=np.float64)

    @cached_property
    def labels(self) -> np.ndarray:
        return np.array([doc.label for doc in self.docs], dtype=np.int64)

    def __repr__(self) -> str:
        return f"<QueryGroup(query_id={self.query_id!r}, docs={len(self.docs)})>"


@dataclass(frozen=True)
class Dataset:
    groups: tuple[QueryGroup, ...]
    feature_dim: int

    def __post_init__(self):
        seen: set[str] = set()
        for group in self.groups:
            if group.query_id in seen:
                raise DataError(f"duplicate query id {group.query_id!r}")
            seen.add(group.query_id)
            for doc in group.docs:
                if len(doc.features) != self.feature_dim:
                    raise DataError(
                        f"query {group.query_id!r}: expected {self.feature_dim} features, "
                        f"got {len(doc.features)}"
                    )

    def __len__(self) -> int:
        return len(self.groups)

    def __iter__(self) -> Iterator[QueryGroup]:
        return iter(self.groups)

    @property
    def query_ids(self) -> list[str]:
        return [group.query_id for group in self.groups]

    @property
    def num_docs(self) -> int:
        return sum(len(group) for group in self.groups)

    def subset(self, query_ids: list[str]) -> "Dataset":
        wanted = set(query_ids)
        return Dataset(
            groups=tuple(g for g in self.groups if g.query_id in wanted),
            feature_dim=self.feature_dim,
        )

    def __repr__(self) -> str:
        return f"<Dataset(queries={len(self.groups)}, docs={self.num_docs}, F={self.feature_dim})>"


@dataclass(frozen=True)
class FoldSplit:
    train: Dataset
    validation: Dataset
    test: Dataset
    fold_index: int

    def __post_init__(self):
        parts = {
            "train": set(self.train.query_ids),
            "vali": set(self.validation.query_ids),
            "test": set(self.test.query_ids),
        }
        names = list(parts)
        for i, left in enumerate(names):
            for right in names[i + 1:]:
                shared = parts[left] & parts[right]
                if shared:
                    raise FoldLayoutError(
                        f"Fold{self.fold_index}: {left} and {right} share queries {sorted(shared)[:5]}"
                    )
