"""Multi-agent ranking environment.

Every document of a query is an agent. At each step all agents act at once;
an agent observes its own features, its top-k neighbours' previous actions,
the neighbour similarities and a similarity-weighted neighbour feature mean.
"""
from dataclasses import dataclass, replace

import numpy as np

from marlrank.core.metrics import ndcg_at_k
from marlrank.core.neural import backward, forward
from marlrank.errors import EpisodeFinishedError, ShapeError
from marlrank.models.models import QueryGroup
from marlrank.models.params import GradientBuffer, ModelParams
from marlrank.schemas.schemas import NUM_LEVELS, ActionEncoding, RewardSchedule


@dataclass(frozen=True)
class NeighborGraph:
    """Top-k neighbours per document: indices and symmetrized similarities, both (N, m).

    m = min(k, N - 1); rows are sorted by similarity descending, ties by index.
    """

    indices: np.ndarray
    similarities: np.ndarray
    k: int

    def neighbors(self, i: int) -> list[tuple[int, float]]:
        return [(int(n), float(s)) for n, s in zip(self.indices[i], self.similarities[i])]


@dataclass(frozen=True)
class ObservationLayout:
    feature_dim: int
    k: int
    encoding: ActionEncoding = ActionEncoding.SCALAR

    @property
    def action_width(self) -> int:
        return NUM_LEVELS if self.encoding == ActionEncoding.ONEHOT else 1

    @property
    def actions(self) -> slice:
        return slice(self.feature_dim, self.feature_dim + self.k * self.action_width)

    @property
    def similarities(self) -> slice:
        start = self.actions.stop
        return slice(start, start + self.k)

    @property
    def weighted(self) -> slice:
        start = self.similarities.stop
        return slice(start, start + self.feature_dim)

    @property
    def size(self) -> int:
        return self.weighted.stop

    @classmethod
    def of(cls, params: ModelParams) -> "ObservationLayout":
        return cls(params.feature_dim, params.k, params.action_encoding)


@dataclass(frozen=True)
class EnvState:
    query_id: str
    features: np.ndarray
    labels: np.ndarray
    graph: NeighborGraph
    layout: ObservationLayout
    last_actions: np.ndarray
    t: int
    horizon: int

    @property
    def num_agents(self) -> int:
        return self.features.shape[0]

    @property
    def done(self) -> bool:
        return self.t >= self.horizon


def pair_encoding(d_i: np.ndarray, d_j: np.ndarray) -> np.ndarray:
    """[d_i | d_j | |d_i - d_j| | d_i * d_j] along the last axis."""
    return np.concatenate([d_i, d_j, np.abs(d_i - d_j), d_i * d_j], axis=-1)


def similarity_score(params: ModelParams, d_i: np.ndarray, d_j: np.ndarray) -> float:
    """One-directional similarity sigmoid(w . enc(d_i, d_j) + b)."""
    d_i = np.asarray(d_i, dtype=np.float64)
    d_j = np.asarray(d_j, dtype=np.float64)
    if d_i.shape != (params.feature_dim,) or d_j.shape != (params.feature_dim,):
        raise ShapeError(
            f"similarity expects two {params.feature_dim}-vectors, got {d_i.shape} and {d_j.shape}"
        )
    out, _ = forward(params.similarity, pair_encoding(d_i, d_j))
    return float(out[0])


def similarity_matrix(params: ModelParams, features: np.ndarray) -> np.ndarray:
    """Symmetrized similarities (s(i, j) + s(j, i)) / 2 for every pair."""
    n, dim = features.shape
    if dim != params.feature_dim:
        raise ShapeError(f"model expects {params.feature_dim} features, group has {dim}")
    left = np.repeat(features, n, axis=0)
    right = np.tile(features, (n, 1))
    raw, _ = forward(params.similarity, pair_encoding(left, right))
    raw = raw.reshape(n, n)
    return 0.5 * (raw + raw.T)


def build_neighbor_graph(params: ModelParams, group: QueryGroup | np.ndarray, k: int) -> NeighborGraph:
    features = group.features if isinstance(group, QueryGroup) else np.asarray(group, dtype=np.float64)
    n = features.shape[0]
    m = min(k, n - 1)
    sims = similarity_matrix(params, features)
    indices = np.zeros((n, m), dtype=np.int64)
    values = np.zeros((n, m))
    for i in range(n):
        others = np.array([j for j in range(n) if j != i], dtype=np.int64)
        # lexsort: last key is primary
        order = np.lexsort((others, -sims[i, others]))[:m]
        indices[i] = others[order]
        values[i] = sims[i, others[order]]
    return NeighborGraph(indices=indices, similarities=values, k=k)


def neighbor_similarities(params: ModelParams, features: np.ndarray, indices: np.ndarray) -> np.ndarray:
    """Recompute the symmetrized similarity of every (i, neighbour) edge under `params`."""
    n, m = indices.shape
    if m == 0:
        return np.zeros((n, 0))
    rows = np.repeat(np.arange(n), m)
    cols = indices.reshape(-1)
    forward_pairs = pair_encoding(features[rows], features[cols])
    reverse_pairs = pair_encoding(features[cols], features[rows])
    out, _ = forward(params.similarity, np.vstack([forward_pairs, reverse_pairs]))
    out = out[:, 0]
    return (0.5 * (out[: n * m] + out[n * m:])).reshape(n, m)


def similarity_backward(
    params: ModelParams,
    features: np.ndarray,
    indices: np.ndarray,
    grad_similarities: np.ndarray,
) -> GradientBuffer:
    """Push d(objective)/d(s_in) into the similarity layer through both pair orderings."""
    n, m = indices.shape
    if m == 0:
        return GradientBuffer.zeros_like(params.similarity)
    rows = np.repeat(np.arange(n), m)
    cols = indices.reshape(-1)
    pairs = np.vstack(
        [pair_encoding(features[rows], features[cols]), pair_encoding(features[cols], features[rows])]
    )
    _, cache = forward(params.similarity, pairs)
    upstream = 0.5 * np.concatenate([grad_similarities.reshape(-1)] * 2)[:, None]
    return backward(params.similarity, cache, upstream)


def encode_actions(levels: np.ndarray, encoding: ActionEncoding) -> np.ndarray:
    """Discrete levels -> observation inputs: level / 2, or a one-hot row."""
    levels = np.asarray(levels, dtype=np.int64)
    if encoding == ActionEncoding.ONEHOT:
        return np.eye(NUM_LEVELS)[levels]
    return (levels / 2.0)[:, None]


def encode_scores(probs: np.ndarray, encoding: ActionEncoding) -> np.ndarray:
    """Continuous evaluation-time feed: expected level / 2 clamped to [0, 1], or the probabilities."""
    probs = np.atleast_2d(probs)
    if encoding == ActionEncoding.ONEHOT:
        return probs.copy()
    expected = probs @ np.arange(NUM_LEVELS, dtype=np.float64)
    return np.clip(expected / 2.0, 0.0, 1.0)[:, None]


def reset(
    params: ModelParams,
    group: QueryGroup,
    horizon: int,
    k: int | None = None,
) -> EnvState:
    """Initial state: neighbour graph built once, all previous actions 0."""
    k = params.k if k is None else k
    params.check_compatible(group.features.shape[1], k)
    layout = ObservationLayout.of(params)
    graph = build_neighbor_graph(params, group, k)
    return EnvState(
        query_id=group.query_id,
        features=group.features,
        labels=group.labels,
        graph=graph,
        layout=layout,
        last_actions=np.zeros((len(group), layout.action_width)),
        t=0,
        horizon=horizon,
    )


def assemble_observations(
    features: np.ndarray,
    indices: np.ndarray,
    similarities: np.ndarray,
    last_actions: np.ndarray,
    layout: ObservationLayout,
) -> np.ndarray:
    """Stack every agent's observation into an (N, 2F + k*w + k) matrix.

    Missing neighbour slots (N - 1 < k) stay 0 and the weighted mean still divides by k.
    """
    n, m = indices.shape
    k, width = layout.k, layout.action_width
    actions = np.zeros((n, k, width))
    actions[:, :m, :] = last_actions[indices]
    sims = np.zeros((n, k))
    sims[:, :m] = similarities
    weighted = np.einsum("nm,nmf->nf", similarities, features[indices]) / k
    return np.hstack([features, actions.reshape(n, k * width), sims, weighted])


def build_observations(state: EnvState) -> np.ndarray:
    return assemble_observations(
        state.features, state.graph.indices, state.graph.similarities, state.last_actions, state.layout
    )


def build_observation(state: EnvState, i: int) -> np.ndarray:
    if not 0 <= i < state.num_agents:
        raise IndexError(f"agent {i} out of range for {state.num_agents} documents")
    return build_observations(state)[i]


def advance(state: EnvState, encoded_actions: np.ndarray) -> EnvState:
    """Synchronous transition with already-encoded actions."""
    if state.done:
        raise EpisodeFinishedError(f"episode of query {state.query_id!r} already reached t={state.horizon}")
    encoded = np.asarray(encoded_actions, dtype=np.float64)
    if encoded.shape != state.last_actions.shape:
        raise ShapeError(
            f"expected actions of shape {state.last_actions.shape}, got {encoded.shape}"
        )
    return replace(state, last_actions=encoded.copy(), t=state.t + 1)


def env_step(state: EnvState, joint_actions: np.ndarray) -> EnvState:
    actions = np.asarray(joint_actions, dtype=np.int64)
    if actions.shape != (state.num_agents,):
        raise ShapeError(f"expected {state.num_agents} actions, got {actions.size}")
    if actions.min(initial=0) < 0 or actions.max(initial=0) >= NUM_LEVELS:
        raise ShapeError(f"actions must lie in 0..{NUM_LEVELS - 1}")
    return advance(state, encode_actions(actions, state.layout.encoding))


def terminal_reward(final_scores: np.ndarray, labels: np.ndarray, cutoff: int | None = 10) -> float:
    """NDCG_T - NDCG_best; NDCG_best is 1 when any document is relevant, else 0."""
    best = 1.0 if np.any(np.asarray(labels) > 0) else 0.0
    return ndcg_at_k(final_scores, labels, cutoff) - best


def individual_reward(action: int, label: int, schedule: RewardSchedule) -> float:
    if int(action) == int(label):
        return schedule.match_reward[int(label)]
    return schedule.mismatch_penalty


def individual_rewards(actions: np.ndarray, labels: np.ndarray, schedule: RewardSchedule) -> np.ndarray:
    actions = np.asarray(actions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    matched = np.asarray(schedule.match_reward)[labels]
    return np.where(actions == labels, matched, schedule.mismatch_penalty)

