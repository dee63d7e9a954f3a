"""LETOR / SVMlight text files: `<label> qid:<id> <fid>:<val> ... #<comment>`."""
import logging
import math
from pathlib import Path
from typing import BinaryIO, Iterable, TextIO

import numpy as np
from pydantic import ValidationError

from marlrank.errors import EmptyDatasetError, FoldLayoutError, ParseError
from marlrank.models.models import Dataset, FoldSplit, QueryGroup
from marlrank.schemas.schemas import NUM_LEVELS, DocumentRecord, NormalizationScheme

logger = logging.getLogger(__name__)

FOLDS = (1, 2, 3, 4, 5)
QID_PREFIX = "qid:"


def _parse_label(token: str, clamp_labels: bool, text: str, line_number: int | None) -> int:
    try:
        label = int(token)
    except ValueError:
        raise ParseError(f"malformed label {token!r}", text, line_number) from None
    if label >= NUM_LEVELS and clamp_labels:
        return NUM_LEVELS - 1
    if not 0 <= label < NUM_LEVELS:
        raise ParseError(f"label {label} outside 0..{NUM_LEVELS - 1}", text, line_number)
    return label


def _parse_feature(token: str, text: str, line_number: int | None) -> tuple[int, float]:
    fid, sep, raw = token.partition(":")
    if not sep:
        raise ParseError(f"expected <fid>:<value>, got {token!r}", text, line_number)
    try:
        index = int(fid)
        value = float(raw)
    except ValueError:
        raise ParseError(f"non-numeric feature {token!r}", text, line_number) from None
    if index < 1:
        raise ParseError(f"feature ids start at 1, got {index}", text, line_number)
    if not math.isfinite(value):
        raise ParseError(f"non-finite feature value {token!r}", text, line_number)
    return index, value


def parse_line(text: str, clamp_labels: bool = False, line_number: int | None = None) -> DocumentRecord:
    """Parse one line; missing feature ids up to the largest one seen are 0.0."""
    body, has_comment, comment = text.strip().partition("#")
    tokens = body.split()
    if not tokens:
        raise ParseError("empty line", text, line_number)
    label = _parse_label(tokens[0], clamp_labels, text, line_number)
    if len(tokens) < 2 or not tokens[1].startswith(QID_PREFIX) or len(tokens[1]) == len(QID_PREFIX):
        raise ParseError("missing qid:<id>", text, line_number)
    query_id = tokens[1][len(QID_PREFIX):]

    values: dict[int, float] = {}
    for token in tokens[2:]:
        index, value = _parse_feature(token, text, line_number)
        if index in values:
            raise ParseError(f"feature id {index} repeated", text, line_number)
        values[index] = value
    features = [0.0] * max(values, default=0)
    for index, value in values.items():
        features[index - 1] = value

    try:
        return DocumentRecord(
            label=label,
            query_id=query_id,
            features=tuple(features),
            comment=comment.strip() if has_comment else None,
        )
    except ValidationError as e:
        raise ParseError(str(e.errors()[0]["msg"]), text, line_number) from e


def render_line(record: DocumentRecord) -> str:
    """Canonical dense rendering; `parse_line(render_line(r)) == r`."""
    parts = [str(record.label), f"{QID_PREFIX}{record.query_id}"]
    parts.extend(f"{i}:{float(v)!r}" for i, v in enumerate(record.features, start=1))
    line = " ".join(parts)
    if record.comment is not None:
        line = f"{line} #{record.comment}"
    return line


def _lines(source: bytes | str | BinaryIO | TextIO | Iterable[str]) -> Iterable[str]:
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        return source.splitlines()
    return source


def load_dataset(
    source: bytes | str | BinaryIO | TextIO | Iterable[str],
    clamp_labels: bool = False,
) -> Dataset:
    """Group records by query (first-appearance order) and pad every document to F = max fid."""
    grouped: dict[str, list[DocumentRecord]] = {}
    for number, text in enumerate(_lines(source), start=1):
        if not text.strip():
            continue
        record = parse_line(text, clamp_labels=clamp_labels, line_number=number)
        grouped.setdefault(record.query_id, []).append(record)
    if not grouped:
        raise EmptyDatasetError("no records in dataset source")

    feature_dim = max(len(doc.features) for docs in grouped.values() for doc in docs)
    groups = tuple(
        QueryGroup(query_id=qid, docs=tuple(doc.padded(feature_dim) for doc in docs))
        for qid, docs in grouped.items()
    )
    return Dataset(groups=groups, feature_dim=feature_dim)


def load_dataset_file(path: Path, clamp_labels: bool = False) -> Dataset:
    path = Path(path)
    with path.open("rb") as f:
        ds = load_dataset(f, clamp_labels=clamp_labels)
    logger.info("Loaded %s: %s queries, %s documents, F=%s", path, len(ds), ds.num_docs, ds.feature_dim)
    return ds


def pad_dataset(ds: Dataset, feature_dim: int) -> Dataset:
    if feature_dim == ds.feature_dim:
        return ds
    groups = tuple(
        QueryGroup(query_id=g.query_id, docs=tuple(doc.padded(feature_dim) for doc in g.docs))
        for g in ds.groups
    )
    return Dataset(groups=groups, feature_dim=feature_dim)


def _load_partition(path: Path, fold: int, role: str, clamp_labels: bool) -> Dataset:
    if not path.is_file():
        raise FoldLayoutError(f"Fold{fold}: missing {role} file {path.name} in {path.parent}")
    try:
        return load_dataset_file(path, clamp_labels=clamp_labels)
    except EmptyDatasetError:
        raise FoldLayoutError(f"Fold{fold}: {role} file {path.name} is empty") from None


def load_folds(
    root: Path,
    folds: Iterable[int] = FOLDS,
    train_name: str = "train.txt",
    vali_name: str = "vali.txt",
    test_name: str = "test.txt",
    clamp_labels: bool = False,
) -> list[FoldSplit]:
    """Read `<root>/Fold<K>/{train,vali,test}`; all partitions share one feature dimension."""
    root = Path(root)
    if not root.is_dir():
        raise FoldLayoutError(f"dataset root {root} is not a directory")

    loaded = []
    for fold in folds:
        fold_dir = root / f"Fold{fold}"
        if not fold_dir.is_dir():
            raise FoldLayoutError(f"missing fold directory Fold{fold} under {root}")
        loaded.append(
            (
                fold,
                _load_partition(fold_dir / train_name, fold, "train", clamp_labels),
                _load_partition(fold_dir / vali_name, fold, "vali", clamp_labels),
                _load_partition(fold_dir / test_name, fold, "test", clamp_labels),
            )
        )
    if not loaded:
        raise FoldLayoutError("no folds selected")

    feature_dim = max(ds.feature_dim for _, *parts in loaded for ds in parts)
    return [
        FoldSplit(
            train=pad_dataset(train, feature_dim),
            validation=pad_dataset(vali, feature_dim),
            test=pad_dataset(test, feature_dim),
            fold_index=fold,
        )
        for fold, train, vali, test in loaded
    ]


def normalize_features(ds: Dataset, scheme: NormalizationScheme = NormalizationScheme.QUERY_MINMAX) -> Dataset:
    """Per-query min-max scaling to [0, 1]; constant dimensions become 0.0."""
    if scheme == NormalizationScheme.NONE:
        return ds
    groups = []
    for group in ds.groups:
        x = group.features
        low = x.min(axis=0)
        span = x.max(axis=0) - low
        scaled = np.divide(x - low, span, out=np.zeros_like(x), where=span > 0)
        docs = tuple(
            doc.model_copy(update={"features": tuple(float(v) for v in row)})
            for doc, row in zip(group.docs, scaled)
        )
        groups.append(QueryGroup(query_id=group.query_id, docs=docs))
    return Dataset(groups=tuple(groups), feature_dim=ds.feature_dim)


def normalize_split(split: FoldSplit, scheme: NormalizationScheme) -> FoldSplit:
    return FoldSplit(
        train=normalize_features(split.train, scheme),
        validation=normalize_features(split.validation, scheme),
        test=normalize_features(split.test, scheme),
        fold_index=split.fold_index,
    )


def dataset_stats(ds: Dataset) -> dict:
    sizes = [len(group) for group in ds.groups]
    labels = np.concatenate([group.labels for group in ds.groups] or [np.zeros(0, dtype=np.int64)])
    return {
        "queries": len(ds),
        "documents": ds.num_docs,
        "feature_dim": ds.feature_dim,
        "min_docs_per_query": min(sizes, default=0),
        "max_docs_per_query": max(sizes, default=0),
        **{f"label_{level}": int(np.sum(labels == level)) for level in range(NUM_LEVELS)},
    }
