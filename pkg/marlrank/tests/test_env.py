"""
Tests for the multi-agent ranking environment
"""

import numpy as np
import pytest

from marlrank.core.env import (
    build_neighbor_graph,
    build_observation,
    build_observations,
    env_step,
    individual_reward,
    individual_rewards,
    reset,
    similarity_matrix,
    similarity_score,
    terminal_reward,
)
from marlrank.errors import EpisodeFinishedError, ShapeError
from marlrank.models.params import ModelParams
from marlrank.schemas.schemas import REWARD_SCHEDULES, ActionEncoding
from marlrank.service.toy import ToyFixture
from marlrank.tests.conftest import label_features, make_group


class TestSimilarity:
    """Тесты модуля сходства и графа соседей"""

    @pytest.mark.unit
    def test_zero_weights_give_half(self, small_group):
        """Тест сходства 0.5 при нулевых весах"""
        params = ModelParams.zeros(feature_dim=3, k=2)

        assert similarity_score(params, small_group.features[0], small_group.features[1]) == pytest.approx(0.5)
        assert np.allclose(similarity_matrix(params, small_group.features), 0.5)

    @pytest.mark.unit
    def test_symmetrized(self, small_group):
        """Тест симметричности сходства"""
        params = ModelParams.initialize(feature_dim=3, k=2, hidden_units=4, seed=3)
        sims = similarity_matrix(params, small_group.features)

        assert np.allclose(sims, sims.T)
        assert np.all((sims > 0) & (sims < 1))

    @pytest.mark.unit
    def test_feature_dim_mismatch(self):
        """Тест ошибки размерности документа"""
        params = ModelParams.zeros(feature_dim=3, k=2)

        with pytest.raises(ShapeError):
            similarity_score(params, np.ones(3), np.ones(4))

    @pytest.mark.unit
    def test_ties_resolved_by_index(self, small_group):
        """Тест выбора соседей с меньшим индексом при равенстве"""
        graph = build_neighbor_graph(ModelParams.zeros(feature_dim=3, k=2), small_group, 2)

        assert graph.indices.tolist() == [[1, 2], [0, 2], [0, 1], [0, 1]]
        assert graph.neighbors(3) == [(0, 0.5), (1, 0.5)]

    @pytest.mark.unit
    def test_toy_graph_from_similarity(self, toy_graph_model):
        """Тест графа игрушечного примера: соседи d4 это d5 и d6"""
        params, group = toy_graph_model
        graph = build_neighbor_graph(params, group, 2)

        assert {n for n, _ in graph.neighbors(3)} == {4, 5}
        assert [set(row) for row in graph.indices.tolist()] == [set(pair) for pair in ToyFixture().neighbors]

    @pytest.mark.unit
    def test_neighbors_never_include_self(self, small_group):
        """Тест отсутствия самого документа среди соседей"""
        params = ModelParams.initialize(feature_dim=3, k=3, hidden_units=4, seed=7)
        graph = build_neighbor_graph(params, small_group, 3)

        for i, row in enumerate(graph.indices):
            assert i not in row
            assert len(set(row.tolist())) == 3
            assert np.all(np.diff(graph.similarities[i]) <= 0)

    @pytest.mark.unit
    def test_saturation_when_group_is_small(self):
        """Тест запроса из трёх документов при k=5"""
        group = make_group("q", [0, 1, 2], label_features([0, 1, 2]))
        graph = build_neighbor_graph(ModelParams.zeros(feature_dim=3, k=5), group, 5)

        assert graph.indices.shape == (3, 2)


class TestObservation:
    """Тесты построения наблюдений"""

    @pytest.mark.unit
    def test_length_for_letor_features(self):
        """Тест длины наблюдения F=46, k=2"""
        labels = [0, 1, 2, 0]
        group = make_group("q", labels, np.random.default_rng(0).random((4, 46)))
        state = reset(ModelParams.initialize(feature_dim=46, k=2, hidden_units=4), group, horizon=10)

        assert build_observations(state).shape == (4, 96)

    @pytest.mark.unit
    def test_initial_actions_are_zero(self, small_group):
        """Тест нулевых предыдущих действий при t=0"""
        state = reset(ModelParams.zeros(feature_dim=3, k=2), small_group, horizon=3)
        obs = build_observation(state, 0)

        assert state.t == 0
        assert np.all(obs[state.layout.actions] == 0.0)
        assert obs[:3] == pytest.approx(small_group.features[0])

    @pytest.mark.unit
    def test_layout_with_zero_similarity(self, small_group):
        """Тест сходств и взвешенного среднего соседей"""
        state = reset(ModelParams.zeros(feature_dim=3, k=2), small_group, horizon=3)
        state = env_step(state, np.array([2, 1, 0, 2]))
        obs = build_observation(state, 0)
        features = small_group.features

        assert obs[state.layout.actions] == pytest.approx([0.5, 0.0])
        assert obs[state.layout.similarities] == pytest.approx([0.5, 0.5])
        assert obs[state.layout.weighted] == pytest.approx(0.5 * (features[1] + features[2]) / 2)

    @pytest.mark.unit
    def test_single_document_padding(self):
        """Тест запроса из одного документа: пустые слоты соседей"""
        group = make_group("q", [2], [[0.3, 0.6, 0.9]])
        state = reset(ModelParams.initialize(feature_dim=3, k=2, hidden_units=4), group, horizon=2)
        obs = build_observation(state, 0)

        assert obs.shape == (10,)
        assert obs[:3] == pytest.approx([0.3, 0.6, 0.9])
        assert np.all(obs[3:] == 0.0)

    @pytest.mark.unit
    def test_padding_keeps_length(self):
        """Тест длины наблюдения при N - 1 < k"""
        group = make_group("q", [0, 1, 2], label_features([0, 1, 2]))
        state = reset(ModelParams.initialize(feature_dim=3, k=5, hidden_units=4), group, horizon=2)
        obs = build_observations(state)

        assert obs.shape == (3, 2 * 3 + 2 * 5)
        assert np.all(obs[:, state.layout.similarities][:, 2:] == 0.0)

    @pytest.mark.unit
    def test_onehot_encoding(self, small_group):
        """Тест one-hot кодирования действий соседей"""
        params = ModelParams.zeros(feature_dim=3, k=2, action_encoding=ActionEncoding.ONEHOT)
        state = env_step(reset(params, small_group, horizon=2), np.array([0, 2, 1, 0]))
        obs = build_observation(state, 0)

        assert obs.shape == (2 * 3 + 4 * 2,)
        assert obs[state.layout.actions] == pytest.approx([0, 0, 1, 0, 1, 0])

    @pytest.mark.unit
    def test_agent_out_of_range(self, small_group):
        """Тест несуществующего агента"""
        state = reset(ModelParams.zeros(feature_dim=3, k=2), small_group, horizon=1)

        with pytest.raises(IndexError):
            build_observation(state, 4)

    @pytest.mark.unit
    def test_incompatible_model(self, small_group):
        """Тест модели с другой размерностью признаков"""
        with pytest.raises(ShapeError):
            reset(ModelParams.zeros(feature_dim=4, k=2), small_group, horizon=1)


class TestEnvStep:
    """Тесты перехода среды"""

    @pytest.mark.unit
    def test_scalar_encoding(self, small_group):
        """Тест кодирования действий 0, 1, 2 -> 0, 0.5, 1"""
        state = reset(ModelParams.zeros(feature_dim=3, k=2), small_group, horizon=2)
        after = env_step(state, np.array([0, 1, 2, 0]))

        assert after.t == 1
        assert after.last_actions[:, 0].tolist() == [0.0, 0.5, 1.0, 0.0]
        assert np.all(state.last_actions == 0.0)

    @pytest.mark.unit
    def test_finished_episode(self, small_group):
        """Тест шага после достижения горизонта"""
        state = reset(ModelParams.zeros(feature_dim=3, k=2), small_group, horizon=1)
        state = env_step(state, np.zeros(4, dtype=int))

        assert state.done
        with pytest.raises(EpisodeFinishedError):
            env_step(state, np.zeros(4, dtype=int))

    @pytest.mark.unit
    def test_invalid_actions(self, small_group):
        """Тест неверного числа и значения действий"""
        state = reset(ModelParams.zeros(feature_dim=3, k=2), small_group, horizon=2)

        with pytest.raises(ShapeError):
            env_step(state, np.array([0, 1]))
        with pytest.raises(ShapeError):
            env_step(state, np.array([0, 1, 3, 0]))


class TestRewards:
    """Тесты наград"""

    @pytest.mark.unit
    def test_perfect_ranking(self):
        """Тест нулевой терминальной награды при идеальном порядке"""
        assert terminal_reward(np.array([1.0, 0.5, 0.0]), np.array([2, 1, 0])) == pytest.approx(0.0)

    @pytest.mark.unit
    def test_inverted_ranking(self):
        """Тест отрицательной терминальной награды"""
        reward = terminal_reward(np.array([1.0, 0.0]), np.array([0, 1]))

        assert reward == pytest.approx(1 / np.log2(3) - 1.0)

    @pytest.mark.unit
    def test_no_relevant_documents(self):
        """Тест запроса без релевантных документов"""
        assert terminal_reward(np.array([0.2, 0.1]), np.array([0, 0])) == 0.0

    @pytest.mark.unit
    @pytest.mark.parametrize(
        "action,label,expected",
        [(2, 2, 0.008), (1, 1, 0.003), (0, 0, 0.001), (1, 2, -0.001), (2, 0, -0.001)],
    )
    def test_individual_reward(self, action, label, expected):
        """Тест индивидуальной награды по расписанию MQ2007"""
        assert individual_reward(action, label, REWARD_SCHEDULES["mq2007"]) == pytest.approx(expected)

    @pytest.mark.unit
    def test_vectorized_rewards(self):
        """Тест векторной индивидуальной награды по расписанию OHSUMED"""
        rewards = individual_rewards(np.array([2, 0, 1]), np.array([2, 1, 1]), REWARD_SCHEDULES["ohsumed"])

        assert rewards == pytest.approx([0.004, -0.001, 0.003])
