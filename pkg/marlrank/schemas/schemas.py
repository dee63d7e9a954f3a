import math
from enum import Enum, IntEnum

from pydantic import BaseModel, ConfigDict, Field, field_validator

"""
Schemas for dataset records and training configuration
"""

NUM_LEVELS = 3


class ActionLevel(IntEnum):
    NON_RELEVANT = 0
    PARTIALLY_RELEVANT = 1
    RELEVANT = 2


class NormalizationScheme(str, Enum):
    NONE = "none"
    QUERY_MINMAX = "query_minmax"


class Activation(str, Enum):
    RELU = "relu"
    TANH = "tanh"


class ActionEncoding(str, Enum):
    SCALAR = "scalar"
    ONEHOT = "onehot"


class RolloutMode(str, Enum):
    SAMPLE = "sample"
    GREEDY = "greedy"


class UpdateCadence(str, Enum):
    PER_EPOCH = "per_epoch"
    PER_QUERY = "per_query"


class NormalizationScope(str, Enum):
    EPISODE_BATCH = "episode_batch"
    QUERY = "query"


class LabelRule(str, Enum):
    SUM = "sum"
    CORNER = "corner"


class ToyMode(str, Enum):
    ROUNDED = "rounded"
    EXACT = "exact"


class DocumentRecord(BaseModel):
    """One LETOR line: a query-document feature vector with its grade."""

    model_config = ConfigDict(frozen=True)

    label: int = Field(ge=0, lt=NUM_LEVELS)
    query_id: str = Field(min_length=1)
    features: tuple[float, ...]
    comment: str | None = None

    @field_validator("features")
    @classmethod
    def features_are_finite(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not all(math.isfinite(v) for v in value):
            raise ValueError("feature values must be finite")
        return value

    def padded(self, feature_dim: int) -> "DocumentRecord":
        if len(self.features) == feature_dim:
            return self
        extra = (0.0,) * (feature_dim - len(self.features))
        return self.model_copy(update={"features": self.features + extra})


class RewardSchedule(BaseModel):
    """Individual reward: match_reward[label] on a hit, mismatch_penalty otherwise."""

    model_config = ConfigDict(frozen=True)

    match_reward: tuple[float, float, float]
    mismatch_penalty: float

    @classmethod
    def preset(cls, name: str) -> "RewardSchedule":
        try:
            return REWARD_SCHEDULES[name.lower()]
        except KeyError:
            raise ValueError(
                f"unknown reward schedule {name!r}, expected one of {sorted(REWARD_SCHEDULES)}"
            ) from None


REWARD_SCHEDULES = {
    "mq2007": RewardSchedule(match_reward=(0.001, 0.003, 0.008), mismatch_penalty=-0.001),
    "ohsumed": RewardSchedule(match_reward=(0.001, 0.003, 0.004), mismatch_penalty=-0.001),
}


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    gamma: float = Field(default=0.95, gt=0.0, le=1.0)
    learning_rate: float = Field(default=4e-7, gt=0.0)
    t_train: int = Field(default=10, ge=1)
    t_eval: int = Field(default=10, ge=1)
    k: int = Field(default=2, ge=1)
    # None ranks the full list
    reward_cutoff: int | None = Field(default=10, ge=1)
    pretrain_epochs: int = Field(default=50, ge=0)
    pretrain_lr: float = Field(default=0.05, gt=0.0)
    epochs: int = Field(default=50, ge=0)
    patience: int = Field(default=0, ge=0)
    reward_schedule: RewardSchedule = REWARD_SCHEDULES["mq2007"]
    seed: int = 0
    normalization_scope: NormalizationScope = NormalizationScope.EPISODE_BATCH
    update_cadence: UpdateCadence = UpdateCadence.PER_EPOCH
    hidden_units: int = Field(default=100, ge=1)
    activation: Activation = Activation.RELU
    action_encoding: ActionEncoding = ActionEncoding.SCALAR
    eval_cutoffs: tuple[int, ...] = (1, 3, 5, 10)


class MetricRow(BaseModel):
    """One line of a metrics CSV: fold,epoch,split,step,metric,value."""

    fold: int | str
    epoch: int
    split: str
    step: int
    metric: str
    value: float
