"""Six-document motivating example: the naive averaging policy on a fixed neighbour graph.

Every document repeatedly scores itself as the mean of its own previous
score and its two neighbours' previous scores. Relevant documents pull each
other up while the single over-scored non-relevant document is pulled down.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pandas as pd

from marlrank.core.env import EnvState
from marlrank.core.metrics import ndcg_at_k
from marlrank.schemas.schemas import NUM_LEVELS, ToyMode

logger = logging.getLogger(__name__)

TABLE_TOLERANCE = 0.005

# rows of the reference table, steps 0..3
PRINTED_SCORES = (
    (0.0, 1.0, 0.0, 0.1, 0.9, 0.9),
    (0.37, 0.37, 0.33, 0.63, 0.63, 0.63),
    (0.46, 0.46, 0.53, 0.63, 0.63, 0.63),
    (0.52, 0.52, 0.6, 0.63, 0.63, 0.63),
)
PRINTED_NDCG3 = (0.3, 1.0, 1.0, 1.0)
# the reference step-0 value cannot come from standard NDCG@3
DERIVED_STEP0_NDCG3 = 0.5307


@dataclass(frozen=True)
class ToyFixture:
    initial_scores: tuple[float, ...] = (0.0, 1.0, 0.0, 0.1, 0.9, 0.9)
    labels: tuple[int, ...] = (0, 0, 0, 1, 1, 1)
    # 0-based: d1 -> {d2, d4}, d2 -> {d1, d4}, d3 -> {d4, d5}, d4 -> {d5, d6}, d5 -> {d4, d6}, d6 -> {d4, d5}
    neighbors: tuple[tuple[int, int], ...] = ((1, 3), (0, 3), (3, 4), (4, 5), (3, 5), (3, 4))

    def __post_init__(self):
        n = len(self.initial_scores)
        if n != 6 or len(self.labels) != n or len(self.neighbors) != n:
            raise ValueError("toy fixture needs six documents with labels and neighbour lists")
        for i, pair in enumerate(self.neighbors):
            if len(pair) != 2 or len(set(pair)) != 2 or i in pair:
                raise ValueError(f"d{i + 1} needs two distinct neighbours other than itself, got {pair}")

    @property
    def neighbor_array(self) -> np.ndarray:
        return np.array(self.neighbors, dtype=np.int64)


@dataclass(frozen=True)
class ToyRow:
    step: int
    scores: np.ndarray = field(compare=False)
    ndcg3: float


def naive_average_step(scores: np.ndarray, fixture: ToyFixture = ToyFixture()) -> np.ndarray:
    """Synchronous update: every document reads the same previous vector."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(fixture.labels),):
        raise ValueError(f"expected {len(fixture.labels)} scores, got shape {scores.shape}")
    return (scores + scores[fixture.neighbor_array].sum(axis=1)) / 3.0


def run_toy(steps: int, fixture: ToyFixture = ToyFixture(), mode: ToyMode = ToyMode.ROUNDED) -> list[ToyRow]:
    """Rows for steps 0..`steps`; rounded mode carries 2-decimal scores from step to step."""
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    labels = np.array(fixture.labels)
    scores = np.array(fixture.initial_scores, dtype=np.float64)
    rows = [ToyRow(0, scores, ndcg_at_k(scores, labels, 3))]
    for step in range(1, steps + 1):
        scores = naive_average_step(scores, fixture)
        if mode == ToyMode.ROUNDED:
            scores = np.round(scores, 2)
        rows.append(ToyRow(step, scores, ndcg_at_k(scores, labels, 3)))
    return rows


def compare_with_table(rows: list[ToyRow], tolerance: float = TABLE_TOLERANCE) -> list[str]:
    """Cells that miss the reference table; NDCG@3 is only compared from step 1 on."""
    mismatches = []
    for row in rows:
        if row.step >= len(PRINTED_SCORES):
            break
        for i, (got, printed) in enumerate(zip(row.scores, PRINTED_SCORES[row.step])):
            if abs(got - printed) > tolerance:
                mismatches.append(f"step {row.step} d{i + 1}: {got:.4f} vs printed {printed}")
        if row.step >= 1 and abs(row.ndcg3 - PRINTED_NDCG3[row.step]) > tolerance:
            mismatches.append(
                f"step {row.step} NDCG@3: {row.ndcg3:.4f} vs printed {PRINTED_NDCG3[row.step]}"
            )
    return mismatches


def render_table(rows: list[ToyRow]) -> str:
    width = len(rows[0].scores) if rows else 6
    header = ["step"] + [f"d{i + 1}" for i in range(width)] + ["NDCG@3"]
    lines = ["".join(f"{h:>8}" for h in header)]
    for row in rows:
        cells = [str(row.step)] + [f"{s:.2f}" for s in row.scores] + [f"{row.ndcg3:.4f}"]
        lines.append("".join(f"{c:>8}" for c in cells))
    return "\n".join(lines)


def toy_frame(rows: list[ToyRow]) -> pd.DataFrame:
    records = []
    for row in rows:
        record = {"step": row.step}
        record.update({f"d{i + 1}": float(s) for i, s in enumerate(row.scores)})
        record["ndcg@3"] = row.ndcg3
        records.append(record)
    return pd.DataFrame(records)


def scores_to_probs(scores: np.ndarray) -> np.ndarray:
    """Put mass s/2 on the top level and the rest on level 0, so the expected level is s."""
    scores = np.asarray(scores, dtype=np.float64)
    probs = np.zeros((len(scores), NUM_LEVELS))
    probs[:, -1] = scores / (NUM_LEVELS - 1)
    probs[:, 0] = 1.0 - probs[:, -1]
    return probs


def naive_policy(
    fixture: ToyFixture = ToyFixture(), mode: ToyMode = ToyMode.EXACT
) -> Callable[[np.ndarray, EnvState], np.ndarray]:
    """The averaging rule as an injectable rollout policy (scalar action encoding only).

    Step 0 emits the fixture's initial scores; later steps read every agent's
    previous expected level back from the environment state.
    """

    def policy(observations: np.ndarray, state: EnvState) -> np.ndarray:
        if state.t == 0:
            scores = np.array(fixture.initial_scores, dtype=np.float64)
        else:
            previous = state.last_actions[:, 0] * (NUM_LEVELS - 1)
            scores = naive_average_step(previous, fixture)
            if mode == ToyMode.ROUNDED:
                scores = np.round(scores, 2)
        return scores_to_probs(scores)

    return policy
