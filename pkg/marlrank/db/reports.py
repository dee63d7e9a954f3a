"""Metric CSV files: `fold,epoch,split,step,metric,value`."""
import logging
from pathlib import Path
from typing import Iterable

import pandas as pd

from marlrank.schemas.schemas import MetricRow

logger = logging.getLogger(__name__)

COLUMNS = ["fold", "epoch", "split", "step", "metric", "value"]


def metrics_frame(rows: Iterable[MetricRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in rows], columns=COLUMNS)


def write_metrics(rows: Iterable[MetricRow], path: Path) -> pd.DataFrame:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = metrics_frame(rows)
    frame.to_csv(path, index=False)
    logger.info("Wrote %s metric rows to %s", len(frame), path)
    return frame


def read_metrics(path: Path) -> pd.DataFrame:
    return pd.read_csv(path)


def final_step_summary(frame: pd.DataFrame) -> pd.DataFrame:
    """One row per fold with the last step's NDCG columns, plus a `mean` row over folds."""
    ndcg = frame[frame["metric"].str.startswith("ndcg@")]
    last = ndcg[ndcg["step"] == ndcg.groupby("fold")["step"].transform("max")]
    table = last.pivot_table(index="fold", columns="metric", values="value", aggfunc="mean")
    table = table[sorted(table.columns, key=lambda name: int(name.split("@")[1]))]
    table.loc["mean"] = table.mean(axis=0)
    table.index = table.index.astype(str)
    return table.reset_index().rename_axis(columns=None)


def write_summary(frame: pd.DataFrame, path: Path) -> pd.DataFrame:
    summary = final_step_summary(frame)
    summary.to_csv(path, index=False)
    logger.info("Wrote summary of %s folds to %s", len(summary) - 1, path)
    return summary
