"""Generated LETOR-style data for tests and desk-scale experiments."""
import logging
from pathlib import Path

import numpy as np

from marlrank.db.letor import FOLDS, render_line
from marlrank.models.models import Dataset, QueryGroup
from marlrank.schemas.schemas import DocumentRecord, LabelRule

logger = logging.getLogger(__name__)

LABEL_THRESHOLDS = {LabelRule.SUM: (0.7, 1.3), LabelRule.CORNER: (0.6, 0.8)}


def generate_dataset(
    n_queries: int = 50,
    docs_per_query: int = 20,
    feature_dim: int = 10,
    noise: float = 0.05,
    seed: int = 0,
    rule: LabelRule = LabelRule.SUM,
) -> Dataset:
    """Uniform [0, 1) features graded from the first two, each jittered by N(0, noise).

    `sum` thresholds x0 + x1 at 0.7 and 1.3. `corner` thresholds min(x0, x1) at
    0.6 and 0.8: about 84% non-relevant, and a linear score misorders the rest.
    """
    if n_queries < 1 or docs_per_query < 1:
        raise ValueError("need at least one query and one document per query")
    if feature_dim < 2:
        raise ValueError(f"labels depend on two features, feature_dim={feature_dim}")
    rule = LabelRule(rule)
    rng = np.random.default_rng(seed)
    groups = []
    for q in range(1, n_queries + 1):
        x = rng.random((docs_per_query, feature_dim))
        if rule == LabelRule.SUM:
            signal = x[:, 0] + x[:, 1] + rng.normal(0.0, noise, size=docs_per_query)
        else:
            signal = np.min(x[:, :2] + rng.normal(0.0, noise, size=(docs_per_query, 2)), axis=1)
        labels = np.digitize(signal, LABEL_THRESHOLDS[rule])
        qid = str(q)
        docs = tuple(
            DocumentRecord(
                label=int(label),
                query_id=qid,
                features=tuple(float(v) for v in row),
                comment=f"syn-{q}-{i}",
            )
            for i, (row, label) in enumerate(zip(x, labels))
        )
        groups.append(QueryGroup(query_id=qid, docs=docs))
    return Dataset(groups=tuple(groups), feature_dim=feature_dim)


def fold_partitions(fold: int, parts: int = 5) -> tuple[list[int], int, int]:
    """LETOR rotation: fold K trains on S_K..S_K+2, validates on S_K+3, tests on S_K+4 (0-based ids)."""
    start = fold - 1
    train = [(start + i) % parts for i in range(3)]
    return train, (start + 3) % parts, (start + 4) % parts


def _write(path: Path, groups: list[QueryGroup]) -> None:
    lines = [render_line(doc) for group in groups for doc in group.docs]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_folds(dataset: Dataset, root: Path) -> Path:
    """Write `<root>/Fold1..Fold5/{train,vali,test}.txt` from five contiguous query partitions."""
    if len(dataset) < len(FOLDS):
        raise ValueError(f"need at least {len(FOLDS)} queries to build folds, got {len(dataset)}")
    root = Path(root)
    partitions = [list(part) for part in np.array_split(np.arange(len(dataset)), len(FOLDS))]
    for fold in FOLDS:
        train, vali, test = fold_partitions(fold, len(FOLDS))
        fold_dir = root / f"Fold{fold}"
        fold_dir.mkdir(parents=True, exist_ok=True)
        _write(fold_dir / "train.txt", [dataset.groups[i] for p in train for i in partitions[p]])
        _write(fold_dir / "vali.txt", [dataset.groups[i] for i in partitions[vali]])
        _write(fold_dir / "test.txt", [dataset.groups[i] for i in partitions[test]])
    logger.info("Wrote %s folds of %s queries under %s", len(FOLDS), len(dataset), root)
    return root
