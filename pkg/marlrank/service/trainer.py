"""Shared policy, supervised pre-training, REINFORCE updates and evaluation rollouts."""
import logging
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from marlrank.core.env import (
    EnvState,
    ObservationLayout,
    advance,
    assemble_observations,
    build_observations,
    encode_actions,
    encode_scores,
    individual_rewards,
    neighbor_similarities,
    reset,
    similarity_backward,
    terminal_reward,
)
from marlrank.core.metrics import mean_ndcg, ndcg_profile
from marlrank.core.neural import (
    backward,
    forward,
    log_softmax,
    log_softmax_grad,
    max_relative_error,
    numeric_gradient,
    sgd_step,
)
from marlrank.db.checkpoint import save_checkpoint
from marlrank.db.reports import write_metrics
from marlrank.errors import DivergenceError, EmptyDatasetError, ShapeError
from marlrank.models.models import Dataset, FoldSplit, QueryGroup
from marlrank.models.params import GradientBuffer, ModelParams
from marlrank.schemas.schemas import (
    NUM_LEVELS,
    DocumentRecord,
    MetricRow,
    NormalizationScope,
    RolloutMode,
    TrainConfig,
    UpdateCadence,
)

logger = logging.getLogger(__name__)

LEVELS = np.arange(NUM_LEVELS, dtype=np.float64)


@dataclass(frozen=True)
class PolicyOutput:
    probs: np.ndarray

    @property
    def expected_score(self) -> float:
        return float(self.probs @ LEVELS)


def policy_probs(params: ModelParams, observations: np.ndarray) -> np.ndarray:
    observations = np.atleast_2d(observations)
    if observations.shape[1] != params.observation_dim:
        raise ShapeError(
            f"policy expects observations of length {params.observation_dim}, got {observations.shape[1]}"
        )
    probs, _ = forward(params.policy, observations)
    return probs


def policy_forward(params: ModelParams, obs: np.ndarray) -> PolicyOutput:
    return PolicyOutput(policy_probs(params, obs)[0])


def sample_actions(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row by inverse CDF."""
    cdf = np.cumsum(probs, axis=1)
    draws = rng.random(probs.shape[0])[:, None]
    return np.minimum((draws >= cdf).sum(axis=1), NUM_LEVELS - 1)


def sample_action(output: PolicyOutput, rng: np.random.Generator) -> int:
    return int(sample_actions(output.probs[None, :], rng)[0])


def greedy_score(output: PolicyOutput) -> float:
    return output.expected_score


@dataclass(frozen=True)
class Episode:
    """One rollout over a query: per-step inputs, observations, probabilities and actions."""

    query_id: str
    features: np.ndarray
    labels: np.ndarray
    neighbor_indices: np.ndarray
    layout: ObservationLayout
    inputs: np.ndarray  # (T, N, w) previous-action inputs seen at each step
    observations: np.ndarray  # (T, N, D)
    probs: np.ndarray  # (T, N, 3)
    actions: np.ndarray  # (T, N)
    scores: np.ndarray  # (T, N) expected levels
    mode: RolloutMode

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    @property
    def final_scores(self) -> np.ndarray:
        return self.scores[-1]


@dataclass(frozen=True)
class TrajectorySample:
    observation: np.ndarray = field(repr=False)
    action: int
    ret: float
    individual_reward: float
    query_id: str
    agent: int
    step: int
    episode: Episode = field(repr=False, compare=False)

    @property
    def advantage(self) -> float:
        return self.ret + self.individual_reward


def rollout(
    params: ModelParams,
    group: QueryGroup,
    horizon: int,
    mode: RolloutMode = RolloutMode.GREEDY,
    rng: np.random.Generator | None = None,
    policy: Callable[[np.ndarray, EnvState], np.ndarray] | None = None,
) -> Episode:
    """Play `horizon` synchronous steps on one query.

    Sample mode feeds the sampled discrete levels forward; greedy mode feeds
    the expected level. `policy` replaces the network (obs, state) -> probs.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if mode == RolloutMode.SAMPLE and rng is None:
        raise ValueError("sample mode needs a random generator")

    state = reset(params, group, horizon)
    inputs, observations, probs_trace, actions, scores = [], [], [], [], []
    while not state.done:
        obs = build_observations(state)
        probs = policy(obs, state) if policy is not None else policy_probs(params, obs)
        if mode == RolloutMode.SAMPLE:
            chosen = sample_actions(probs, rng)
            encoded = encode_actions(chosen, state.layout.encoding)
        else:
            chosen = np.argmax(probs, axis=1)
            encoded = encode_scores(probs, state.layout.encoding)
        inputs.append(state.last_actions)
        observations.append(obs)
        probs_trace.append(probs)
        actions.append(chosen)
        scores.append(probs @ LEVELS)
        state = advance(state, encoded)

    return Episode(
        query_id=group.query_id,
        features=state.features,
        labels=state.labels,
        neighbor_indices=state.graph.indices,
        layout=state.layout,
        inputs=np.stack(inputs),
        observations=np.stack(observations),
        probs=np.stack(probs_trace),
        actions=np.stack(actions),
        scores=np.stack(scores),
        mode=mode,
    )


def discounted_returns(rewards: Iterable[float], gamma: float) -> np.ndarray:
    """R_t = sum_{j >= t} gamma^(j - t) r_j."""
    rewards = np.asarray(list(rewards), dtype=np.float64)
    returns = np.zeros_like(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns


def normalize_returns(samples: list[TrajectorySample]) -> list[TrajectorySample]:
    """Standardize the returns of a batch; individual rewards are left untouched."""
    if len(samples) < 2:
        return list(samples)
    rets = np.array([s.ret for s in samples])
    std = rets.std()
    if not std > 0:
        return list(samples)
    normalized = (rets - rets.mean()) / std
    return [replace(s, ret=float(r)) for s, r in zip(samples, normalized)]


def collect_samples(episode: Episode, config: TrainConfig) -> tuple[list[TrajectorySample], float]:
    """Turn a sampled episode into training samples; returns them with the terminal reward.

    The terminal reward is attached to the last joint action.
    """
    reward = terminal_reward(episode.final_scores, episode.labels, config.reward_cutoff)
    rewards = np.zeros(episode.horizon)
    rewards[-1] = reward
    returns = discounted_returns(rewards, config.gamma)
    samples = []
    for t in range(episode.horizon):
        individual = individual_rewards(episode.actions[t], episode.labels, config.reward_schedule)
        for i in range(len(episode.labels)):
            samples.append(
                TrajectorySample(
                    observation=episode.observations[t, i],
                    action=int(episode.actions[t, i]),
                    ret=float(returns[t]),
                    individual_reward=float(individual[i]),
                    query_id=episode.query_id,
                    agent=i,
                    step=t,
                    episode=episode,
                )
            )
    return samples, reward


def _group_by_episode(samples: list[TrajectorySample]) -> dict[int, list[TrajectorySample]]:
    grouped: dict[int, list[TrajectorySample]] = defaultdict(list)
    for sample in samples:
        grouped[id(sample.episode)].append(sample)
    return grouped


def _episode_observations(episode: Episode, sims: np.ndarray) -> np.ndarray:
    return np.stack(
        [
            assemble_observations(episode.features, episode.neighbor_indices, sims, inputs, episode.layout)
            for inputs in episode.inputs
        ]
    )


def _similarity_grads(
    params: ModelParams,
    features: np.ndarray,
    indices: np.ndarray,
    layout: ObservationLayout,
    grad_obs: np.ndarray,
) -> GradientBuffer:
    """Route per-agent observation gradients into the similarity layer.

    s_in reaches the observation twice: its own slot and the weighted neighbour mean.
    """
    m = indices.shape[1]
    grad_sims = grad_obs[:, layout.similarities][:, :m]
    grad_sims = grad_sims + np.einsum("nf,nmf->nm", grad_obs[:, layout.weighted], features[indices]) / layout.k
    return similarity_backward(params, features, indices, grad_sims)


def reinforce_objective(params: ModelParams, samples: list[TrajectorySample]) -> float:
    """Mean of advantage * log pi(a | o) with observations rebuilt under `params`."""
    if not samples:
        raise ValueError("no samples")
    total = 0.0
    for batch in _group_by_episode(samples).values():
        episode = batch[0].episode
        sims = neighbor_similarities(params, episode.features, episode.neighbor_indices)
        obs = _episode_observations(episode, sims)
        steps = np.array([s.step for s in batch])
        agents = np.array([s.agent for s in batch])
        _, cache = forward(params.policy, obs[steps, agents])
        logp = log_softmax(cache.logits)[np.arange(len(batch)), [s.action for s in batch]]
        total += float(np.sum(np.array([s.advantage for s in batch]) * logp))
    return total / len(samples)


def reinforce_gradient(params: ModelParams, samples: list[TrajectorySample]) -> GradientBuffer:
    """Gradient of `reinforce_objective`, through the policy and the similarity layer."""
    if not samples:
        raise ValueError("no samples")
    grads = GradientBuffer.zeros_like(params)
    for batch in _group_by_episode(samples).values():
        episode = batch[0].episode
        features, indices, layout = episode.features, episode.neighbor_indices, episode.layout
        sims = neighbor_similarities(params, features, indices)
        obs = _episode_observations(episode, sims)
        steps = np.array([s.step for s in batch])
        agents = np.array([s.agent for s in batch])
        actions = np.array([s.action for s in batch])
        advantages = np.array([s.advantage for s in batch])

        probs, cache = forward(params.policy, obs[steps, agents])
        grad_logits = advantages[:, None] * log_softmax_grad(probs, actions) / len(samples)
        policy_grads = backward(params.policy, cache, grad_logits, through_head=False)
        grads.add(policy_grads)

        if indices.shape[1] == 0:
            continue
        # observation gradient, summed over steps for each agent
        grad_obs = np.zeros((len(features), obs.shape[-1]))
        np.add.at(grad_obs, agents, policy_grads.input_grad)
        grads.add(_similarity_grads(params, features, indices, layout, grad_obs))
    return grads


def reinforce_update(
    params: ModelParams, samples: list[TrajectorySample], learning_rate: float
) -> ModelParams:
    return sgd_step(params, reinforce_gradient(params, samples), learning_rate)


def pretrain_step(params: ModelParams, group: QueryGroup) -> tuple[float, GradientBuffer]:
    """Cross entropy of the t=0 policy against the labels, and the gradient of its negation."""
    state = reset(params, group, horizon=1)
    features, indices, layout = state.features, state.graph.indices, state.layout
    sims = neighbor_similarities(params, features, indices)
    obs = assemble_observations(features, indices, sims, state.last_actions, layout)
    probs, cache = forward(params.policy, obs)
    labels = group.labels
    n = len(labels)
    loss = -float(np.mean(log_softmax(cache.logits)[np.arange(n), labels]))

    policy_grads = backward(params.policy, cache, log_softmax_grad(probs, labels) / n, through_head=False)
    grads = GradientBuffer.zeros_like(params).add(policy_grads)
    if indices.shape[1]:
        grads.add(_similarity_grads(params, features, indices, layout, policy_grads.input_grad))
    return loss, grads


def pretrain(
    params: ModelParams,
    train: Dataset,
    config: TrainConfig,
    on_epoch: Callable[[int, float], None] | None = None,
) -> ModelParams:
    """Supervised warm start: SGD on cross entropy over shuffled per-query batches."""
    if len(train) == 0:
        raise EmptyDatasetError("cannot pre-train on an empty dataset")
    rng = np.random.default_rng(config.seed)
    for epoch in range(1, config.pretrain_epochs + 1):
        losses = []
        for idx in rng.permutation(len(train)):
            loss, grads = pretrain_step(params, train.groups[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"pre-training loss became {loss} at epoch {epoch}")
            losses.append(loss)
            params = sgd_step(params, grads, config.pretrain_lr)
        mean_loss = float(np.mean(losses))
        logger.info("pretrain epoch %s: cross_entropy=%.4f", epoch, mean_loss)
        if on_epoch is not None:
            on_epoch(epoch, mean_loss)
    return params


def action_accuracy(params: ModelParams, dataset: Dataset) -> float:
    """Share of documents whose t=0 argmax level equals the label."""
    hits, total = 0, 0
    for group in dataset:
        state = reset(params, group, horizon=1)
        probs = policy_probs(params, build_observations(state))
        hits += int(np.sum(np.argmax(probs, axis=1) == group.labels))
        total += len(group)
    return hits / total


@dataclass
class EvaluationResult:
    """Per-step mean NDCG over queries; `trace[t]` belongs to step t + 1."""

    trace: list[dict[int, float]]
    num_queries: int

    @property
    def final(self) -> dict[int, float]:
        return self.trace[-1]


def evaluate(
    params: ModelParams,
    ds: Dataset,
    config: TrainConfig,
    policy: Callable[[np.ndarray, EnvState], np.ndarray] | None = None,
) -> EvaluationResult:
    """Greedy rollouts of `t_eval` steps; NDCG@k of the expected scores after every step."""
    if len(ds) == 0:
        raise EmptyDatasetError("cannot evaluate an empty dataset")
    params.check_compatible(ds.feature_dim, config.k)
    episodes = [rollout(params, group, config.t_eval, RolloutMode.GREEDY, policy=policy) for group in ds]
    trace = [
        mean_ndcg(((ep.scores[t], ep.labels) for ep in episodes), config.eval_cutoffs)
        for t in range(config.t_eval)
    ]
    return EvaluationResult(trace=trace, num_queries=len(episodes))


def reinforce_grad_check(
    seed: int,
    epsilon: float = 1e-5,
    hidden_units: int = 8,
    horizon: int = 2,
    corruption: float = 0.0,
) -> float:
    """Finite-difference check of the full REINFORCE gradient on 2 documents, F=3, k=1."""
    rng = np.random.default_rng(seed)
    docs = rng.normal(size=(2, 3))
    group = QueryGroup(
        query_id="gradcheck",
        docs=tuple(
            DocumentRecord(label=int(rng.integers(NUM_LEVELS)), query_id="gradcheck", features=tuple(row))
            for row in docs
        ),
    )
    params = ModelParams.initialize(feature_dim=3, k=1, hidden_units=hidden_units, seed=seed)
    episode = rollout(params, group, horizon, RolloutMode.SAMPLE, rng=rng)
    samples, _ = collect_samples(episode, TrainConfig(t_train=horizon, k=1))
    samples = [replace(s, ret=float(rng.normal()), individual_reward=0.0) for s in samples]

    analytic = reinforce_gradient(params, samples)
    if corruption:
        analytic.layers["policy_output"].bias[0] += corruption
    work = params.copy()
    numeric = numeric_gradient(lambda p: reinforce_objective(p, samples), work, epsilon)
    return max_relative_error(analytic, numeric)


def evaluation_rows(
    result: EvaluationResult, fold: int | str, epoch: int, split: str, final_only: bool = False
) -> list[MetricRow]:
    steps = range(len(result.trace))
    if final_only:
        steps = [len(result.trace) - 1]
    return [
        MetricRow(fold=fold, epoch=epoch, split=split, step=t + 1, metric=f"ndcg@{k}", value=value)
        for t in steps
        for k, value in result.trace[t].items()
    ]


@dataclass
class FitResult:
    best_params: ModelParams
    last_params: ModelParams
    best_epoch: int
    best_validation_ndcg: float
    pretrained: EvaluationResult
    test: EvaluationResult
    rows: list[MetricRow]


class PolicyTrainer:
    """Runs pre-training, REINFORCE epochs and evaluation for one configuration."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.selection_cutoff = max(config.eval_cutoffs)

    def initial_params(self, feature_dim: int) -> ModelParams:
        return ModelParams.initialize(
            feature_dim=feature_dim,
            k=self.config.k,
            hidden_units=self.config.hidden_units,
            activation=self.config.activation,
            action_encoding=self.config.action_encoding,
            seed=self.config.seed,
        )

    def evaluate(self, params: ModelParams, ds: Dataset) -> EvaluationResult:
        return evaluate(params, ds, self.config)

    def _update(self, params: ModelParams, samples: list[TrajectorySample]) -> ModelParams:
        if self.config.normalization_scope == NormalizationScope.QUERY:
            by_query: dict[str, list[TrajectorySample]] = defaultdict(list)
            for sample in samples:
                by_query[sample.query_id].append(sample)
            samples = [s for batch in by_query.values() for s in normalize_returns(batch)]
        else:
            samples = normalize_returns(samples)
        return reinforce_update(params, samples, self.config.learning_rate)

    def reinforce_epoch(
        self, params: ModelParams, train: Dataset, rng: np.random.Generator
    ) -> tuple[ModelParams, float]:
        """One pass of sampled rollouts and policy updates; returns params and the mean terminal reward."""
        batch: list[TrajectorySample] = []
        rewards = []
        for idx in rng.permutation(len(train)):
            episode = rollout(params, train.groups[idx], self.config.t_train, RolloutMode.SAMPLE, rng=rng)
            samples, reward = collect_samples(episode, self.config)
            rewards.append(reward)
            if self.config.update_cadence == UpdateCadence.PER_QUERY:
                params = self._update(params, samples)
            else:
                batch.extend(samples)
        if batch:
            params = self._update(params, batch)
        return params, float(np.mean(rewards))

    def fit_fold(
        self, split: FoldSplit, out_dir: Path | None = None, params: ModelParams | None = None
    ) -> FitResult:
        """Pre-train, run REINFORCE epochs with validation selection, then test the best weights."""
        cfg = self.config
        fold = split.fold_index
        rows: list[MetricRow] = []
        params = params if params is not None else self.initial_params(split.train.feature_dim)
        params.check_compatible(split.train.feature_dim, cfg.k)

        def record_pretrain(epoch: int, loss: float) -> None:
            rows.append(
                MetricRow(fold=fold, epoch=epoch, split="train", step=0, metric="pretrain_ce", value=loss)
            )

        params = pretrain(params, split.train, cfg, on_epoch=record_pretrain)
        pretrained = self.evaluate(params, split.validation)
        best_score = pretrained.final[self.selection_cutoff]
        best_params, best_epoch = params, 0
        logger.info("Fold%s pretrained: vali ndcg@%s=%.4f", fold, self.selection_cutoff, best_score)

        rng = np.random.default_rng(cfg.seed + fold)
        stale = 0
        for epoch in range(1, cfg.epochs + 1):
            params, reward = self.reinforce_epoch(params, split.train, rng)
            rows.append(
                MetricRow(fold=fold, epoch=epoch, split="train", step=cfg.t_train, metric="reward", value=reward)
            )
            train_eval = self.evaluate(params, split.train)
            vali_eval = self.evaluate(params, split.validation)
            # reported only, never used for selection
            test_eval = self.evaluate(params, split.test)
            rows.extend(evaluation_rows(train_eval, fold, epoch, "train", final_only=True))
            rows.extend(evaluation_rows(vali_eval, fold, epoch, "vali", final_only=True))
            rows.extend(evaluation_rows(test_eval, fold, epoch, "test", final_only=True))
            score = vali_eval.final[self.selection_cutoff]
            logger.info(
                "Fold%s epoch %s: reward=%.4f train ndcg@%s=%.4f vali ndcg@%s=%.4f",
                fold, epoch, reward, self.selection_cutoff, train_eval.final[self.selection_cutoff],
                self.selection_cutoff, score,
            )
            if score > best_score:
                best_score, best_params, best_epoch, stale = score, params, epoch, 0
            else:
                stale += 1
                if cfg.patience and stale >= cfg.patience:
                    logger.info("Fold%s: no validation gain for %s epochs, stopping", fold, stale)
                    break

        test = self.evaluate(best_params, split.test)
        # the selected epoch carries the full per-step test trace
        rows[:] = [row for row in rows if not (row.split == "test" and row.epoch == best_epoch)]
        rows.extend(evaluation_rows(test, fold, best_epoch, "test"))
        if out_dir is not None:
            save_checkpoint(best_params, out_dir / "best.npz")
            save_checkpoint(params, out_dir / "last.npz")
            write_metrics(rows, out_dir / "metrics.csv")
        return FitResult(
            best_params=best_params,
            last_params=params,
            best_epoch=best_epoch,
            best_validation_ndcg=best_score,
            pretrained=pretrained,
            test=test,
            rows=rows,
        )

    def fit_folds(self, splits: list[FoldSplit], out_dir: Path | None = None) -> list[FitResult]:
        results = []
        for split in splits:
            fold_dir = out_dir / f"Fold{split.fold_index}" if out_dir is not None else None
            results.append(self.fit_fold(split, fold_dir))
        return results

    def evaluate_folds(
        self, params: ModelParams | Callable[[int], ModelParams], splits: list[FoldSplit]
    ) -> dict[int, EvaluationResult]:
        """Test-partition traces per fold; `params` may be a per-fold loader."""
        results = {}
        for split in splits:
            fold_params = params(split.fold_index) if callable(params) else params
            results[split.fold_index] = self.evaluate(fold_params, split.test)
            logger.info(
                "Fold%s test ndcg@%s=%.4f",
                split.fold_index, self.selection_cutoff, results[split.fold_index].final[self.selection_cutoff],
            )
        return results
