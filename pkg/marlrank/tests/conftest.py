"""
Configuration and fixtures for tests
"""

import numpy as np
import pytest

from marlrank.db.synthetic import generate_dataset, write_folds
from marlrank.models.models import Dataset, QueryGroup
from marlrank.models.params import LayerParams, ModelParams
from marlrank.schemas.schemas import (
    DocumentRecord,
    LabelRule,
    RewardSchedule,
    TrainConfig,
    UpdateCadence,
)
from marlrank.service.trainer import PolicyTrainer, pretrain


def make_group(query_id: str, labels, features) -> QueryGroup:
    """Собрать QueryGroup из списков меток и признаков"""
    return QueryGroup(
        query_id=query_id,
        docs=tuple(
            DocumentRecord(label=int(label), query_id=query_id, features=tuple(float(v) for v in row))
            for label, row in zip(labels, features)
        ),
    )


def label_features(labels, feature_dim: int = 3, seed: int = 0) -> np.ndarray:
    """Признаки, у которых нулевой признак равен label / 2, остальные случайны"""
    rng = np.random.default_rng(seed)
    x = rng.random((len(labels), feature_dim))
    x[:, 0] = np.asarray(labels) / 2.0
    return x


def oracle_params(feature_dim: int, k: int, hidden_units: int = 6) -> ModelParams:
    """Сеть, чьи логиты равны -100 * |x0 - level / 2|: argmax всегда совпадает с меткой"""
    obs_dim = 2 * feature_dim + 2 * k
    centers = (0.0, 0.5, 1.0)
    w1 = np.zeros((hidden_units, obs_dim))
    b1 = np.zeros(hidden_units)
    w3 = np.zeros((3, hidden_units))
    for level, center in enumerate(centers):
        w1[2 * level, 0], b1[2 * level] = 1.0, -center
        w1[2 * level + 1, 0], b1[2 * level + 1] = -1.0, center
        w3[level, 2 * level] = w3[level, 2 * level + 1] = -100.0
    return ModelParams.build(
        LayerParams.zeros(1, 4 * feature_dim),
        [
            LayerParams(w1, b1),
            LayerParams(np.eye(hidden_units), np.zeros(hidden_units)),
            LayerParams(w3, np.zeros(3)),
        ],
        feature_dim=feature_dim,
        k=k,
    )


@pytest.fixture
def small_group():
    """Фикстура с запросом из четырёх документов, F=3"""
    return make_group(
        "q1",
        [0, 1, 2, 0],
        [[0.1, 0.2, 0.3], [0.5, 0.4, 0.1], [0.9, 0.8, 0.7], [0.0, 0.1, 0.0]],
    )


@pytest.fixture
def small_dataset(small_group):
    """Фикстура с датасетом из трёх запросов"""
    second = make_group("q2", [2, 0, 1], label_features([2, 0, 1], seed=1))
    third = make_group("q3", [1, 1], label_features([1, 1], seed=2))
    return Dataset(groups=(small_group, second, third), feature_dim=3)


@pytest.fixture
def toy_graph_model():
    """Фикстура с шестью документами, F=2, и сходством sigmoid(-|dx| - |dy|)

    При k=2 ближайшие соседи совпадают с графом игрушечного примера.
    """
    group = make_group(
        "toy",
        [0, 0, 0, 1, 1, 1],
        [[-2.0, 0.0], [-2.0, -0.5], [0.4, -1.2], [0.0, 0.0], [1.0, 0.0], [0.5, 0.8]],
    )
    params = ModelParams.zeros(feature_dim=2, k=2)
    # [d_i | d_j | |d_i - d_j| | d_i * d_j]
    params.similarity.layers[0] = LayerParams(np.array([[0.0, 0.0, 0.0, 0.0, -1.0, -1.0, 0.0, 0.0]]), np.zeros(1))
    return params, group


@pytest.fixture
def oracle_dataset():
    """Фикстура с датасетом, где метка читается из нулевого признака"""
    groups = []
    for q, labels in enumerate([[0, 1, 2, 1, 0], [2, 2, 0, 1], [1, 0, 0, 2, 1, 0]], start=1):
        groups.append(make_group(str(q), labels, label_features(labels, seed=q)))
    return Dataset(groups=tuple(groups), feature_dim=3)


@pytest.fixture
def tiny_config():
    """Фикстура с быстрой конфигурацией обучения"""
    return TrainConfig(
        t_train=3,
        t_eval=4,
        k=2,
        pretrain_epochs=2,
        epochs=2,
        hidden_units=8,
        learning_rate=0.01,
        seed=0,
    )


@pytest.fixture(scope="session")
def synthetic_dataset():
    """Фикстура с синтетическим датасетом 50 запросов x 20 документов, F=10"""
    return generate_dataset(n_queries=50, docs_per_query=20, feature_dim=10, noise=0.05, seed=0)


@pytest.fixture(scope="session")
def corner_dataset():
    """Фикстура с датасетом 50 запросов x 20 документов, F=10, метка по min(x0, x1)"""
    return generate_dataset(
        n_queries=50, docs_per_query=20, feature_dim=10, noise=0.05, seed=0, rule=LabelRule.CORNER
    )


@pytest.fixture(scope="session")
def learning_run(corner_dataset):
    """Фикстура с моделью после предобучения и после 200 эпох REINFORCE

    Запросы 1..40 обучающие, 41..50 отложенные.
    """
    config = TrainConfig(
        k=2,
        hidden_units=64,
        pretrain_epochs=100,
        pretrain_lr=0.1,
        learning_rate=0.1,
        update_cadence=UpdateCadence.PER_QUERY,
        reward_schedule=RewardSchedule(match_reward=(0.5, 1.0, 1.0), mismatch_penalty=-0.5),
        seed=0,
    )
    train = corner_dataset.subset([str(q) for q in range(1, 41)])
    held_out = corner_dataset.subset([str(q) for q in range(41, 51)])
    trainer = PolicyTrainer(config)
    pretrained = pretrain(trainer.initial_params(corner_dataset.feature_dim), train, config)

    params = pretrained
    rng = np.random.default_rng(config.seed)
    for _ in range(200):
        params, _ = trainer.reinforce_epoch(params, train, rng)
    return {
        "config": config,
        "train": train,
        "held_out": held_out,
        "pretrained": pretrained,
        "trained": params,
    }


@pytest.fixture
def letor_root(tmp_path):
    """Фикстура с каталогом Fold1..Fold5 из небольшого синтетического датасета"""
    dataset = generate_dataset(n_queries=10, docs_per_query=5, feature_dim=4, seed=3)
    return write_folds(dataset, tmp_path / "letor")


@pytest.fixture
def oracle_root(tmp_path):
    """Фикстура с каталогом фолдов, где метка равна 2 * x0"""
    groups = []
    for q in range(1, 11):
        labels = [q % 3, (q + 1) % 3, 2, 0, 1]
        groups.append(make_group(str(q), labels, label_features(labels, seed=q)))
    return write_folds(Dataset(groups=tuple(groups), feature_dim=3), tmp_path / "oracle")


# Маркеры для категоризации тестов
def pytest_configure(config):
    """Конфигурация маркеров pytest"""
    config.addinivalue_line("markers", "unit: mark test as unit test")
    config.addinivalue_line("markers", "integration: mark test as integration test")
    config.addinivalue_line("markers", "api: mark test as command-line test")
    config.addinivalue_line("markers", "slow: mark test as slow running test")
