import json
from enum import Enum
from pathlib import Path
from typing import Any

from dotenv import dotenv_values
from pydantic import Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from marlrank.errors import ConfigError
from marlrank.schemas.schemas import (
    REWARD_SCHEDULES,
    ActionEncoding,
    Activation,
    NormalizationScheme,
    NormalizationScope,
    RewardSchedule,
    TrainConfig,
    UpdateCadence,
)

CONFIG_ECHO = "config.env"
ALL_FOLDS = (1, 2, 3, 4, 5)


class RunConfig(BaseSettings):
    """Everything one command needs: data location, folds, outputs and training knobs.

    Resolution order: CLI flags, then the process environment, then the
    config file, then these defaults.
    """

    model_config = SettingsConfigDict(
        env_file=None,
        env_file_encoding="utf-8",
        env_parse_none_str="none",
        extra="forbid",
        populate_by_name=True,
    )

    dataset_root: Path | None = Field(default=None, alias="MARLRANK_DATASET_ROOT")
    folds: str = Field(default="all", alias="MARLRANK_FOLDS")
    train_name: str = Field(default="train.txt", alias="MARLRANK_TRAIN_NAME")
    vali_name: str = Field(default="vali.txt", alias="MARLRANK_VALI_NAME")
    test_name: str = Field(default="test.txt", alias="MARLRANK_TEST_NAME")
    clamp_labels: bool = Field(default=False, alias="MARLRANK_CLAMP_LABELS")
    normalization: NormalizationScheme = Field(
        default=NormalizationScheme.QUERY_MINMAX, alias="MARLRANK_NORMALIZATION"
    )
    out_dir: Path = Field(default=Path("runs"), alias="MARLRANK_OUT")
    log_level: str = Field(default="INFO", alias="MARLRANK_LOG_LEVEL")

    gamma: float = Field(default=0.95, gt=0.0, le=1.0, alias="MARLRANK_GAMMA")
    learning_rate: float = Field(default=4e-7, gt=0.0, alias="MARLRANK_LR")
    t_train: int = Field(default=10, ge=1, alias="MARLRANK_T")
    t_eval: int = Field(default=10, ge=1, alias="MARLRANK_T_EVAL")
    k: int = Field(default=2, ge=1, alias="MARLRANK_K")
    reward_cutoff: int | None = Field(default=10, ge=1, alias="MARLRANK_REWARD_CUTOFF")
    pretrain_epochs: int = Field(default=50, ge=0, alias="MARLRANK_PRETRAIN_EPOCHS")
    pretrain_lr: float = Field(default=0.05, gt=0.0, alias="MARLRANK_PRETRAIN_LR")
    epochs: int = Field(default=50, ge=0, alias="MARLRANK_EPOCHS")
    patience: int = Field(default=0, ge=0, alias="MARLRANK_PATIENCE")
    reward_schedule: str = Field(default="mq2007", alias="MARLRANK_REWARD_SCHEDULE")
    match_reward: tuple[float, float, float] | None = Field(default=None, alias="MARLRANK_MATCH_REWARD")
    mismatch_penalty: float | None = Field(default=None, alias="MARLRANK_MISMATCH_PENALTY")
    seed: int = Field(default=0, alias="MARLRANK_SEED")
    normalization_scope: NormalizationScope = Field(
        default=NormalizationScope.EPISODE_BATCH, alias="MARLRANK_NORMALIZATION_SCOPE"
    )
    update_cadence: UpdateCadence = Field(default=UpdateCadence.PER_EPOCH, alias="MARLRANK_UPDATE_CADENCE")
    hidden_units: int = Field(default=100, ge=1, alias="MARLRANK_HIDDEN_UNITS")
    activation: Activation = Field(default=Activation.RELU, alias="MARLRANK_ACTIVATION")
    action_encoding: ActionEncoding = Field(default=ActionEncoding.SCALAR, alias="MARLRANK_ACTION_ENCODING")
    eval_cutoffs: tuple[int, ...] = Field(default=(1, 3, 5, 10), alias="MARLRANK_EVAL_CUTOFFS")

    @field_validator("folds")
    @classmethod
    def folds_are_known(cls, value: str) -> str:
        value = value.strip().lower()
        if value == "all":
            return value
        try:
            chosen = [int(part) for part in value.split(",") if part.strip()]
        except ValueError:
            raise ValueError(f"folds must be 'all' or a comma list of 1..5, got {value!r}") from None
        if not chosen or any(fold not in ALL_FOLDS for fold in chosen):
            raise ValueError(f"folds must lie in 1..5, got {value!r}")
        return ",".join(str(fold) for fold in chosen)

    @field_validator("reward_schedule")
    @classmethod
    def schedule_is_known(cls, value: str) -> str:
        if value.lower() not in REWARD_SCHEDULES:
            raise ValueError(f"unknown reward schedule {value!r}, expected one of {sorted(REWARD_SCHEDULES)}")
        return value.lower()

    @field_validator("log_level")
    @classmethod
    def level_is_known(cls, value: str) -> str:
        value = value.upper()
        if value not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level {value!r}")
        return value

    @property
    def fold_indices(self) -> tuple[int, ...]:
        if self.folds == "all":
            return ALL_FOLDS
        return tuple(int(part) for part in self.folds.split(","))

    def reward(self) -> RewardSchedule:
        preset = RewardSchedule.preset(self.reward_schedule)
        return RewardSchedule(
            match_reward=self.match_reward if self.match_reward is not None else preset.match_reward,
            mismatch_penalty=(
                self.mismatch_penalty if self.mismatch_penalty is not None else preset.mismatch_penalty
            ),
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            gamma=self.gamma,
            learning_rate=self.learning_rate,
            t_train=self.t_train,
            t_eval=self.t_eval,
            k=self.k,
            reward_cutoff=self.reward_cutoff,
            pretrain_epochs=self.pretrain_epochs,
            pretrain_lr=self.pretrain_lr,
            epochs=self.epochs,
            patience=self.patience,
            reward_schedule=self.reward(),
            seed=self.seed,
            normalization_scope=self.normalization_scope,
            update_cadence=self.update_cadence,
            hidden_units=self.hidden_units,
            activation=self.activation,
            action_encoding=self.action_encoding,
            eval_cutoffs=self.eval_cutoffs,
        )

    def dump(self) -> str:
        """The resolved configuration as `KEY=value` lines that `load_config` reads back."""
        lines = []
        for name, info in type(self).model_fields.items():
            lines.append(f"{info.alias}={_render(getattr(self, name))}")
        return "\n".join(lines) + "\n"

    def write_echo(self, out_dir: Path | None = None) -> Path:
        out_dir = Path(out_dir) if out_dir is not None else self.out_dir
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / CONFIG_ECHO
        path.write_text(self.dump(), encoding="utf-8")
        return path


def _render(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, tuple):
        return json.dumps(list(value))
    return str(value)


def known_keys() -> set[str]:
    return {info.alias for info in RunConfig.model_fields.values()}


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(loc) for loc in item["loc"]) or "config"
        parts.append(f"{where}: {item['msg']}")
    return "; ".join(parts)


def load_config(config_file: Path | None = None, **overrides: Any) -> RunConfig:
    """Build a RunConfig from an optional dotenv file plus CLI overrides (None means unset)."""
    if config_file is not None:
        config_file = Path(config_file)
        if not config_file.is_file():
            raise ConfigError(f"config file not found: {config_file}")
        unknown = sorted(key for key in dotenv_values(config_file) if key.upper() not in known_keys())
        if unknown:
            raise ConfigError(f"unknown config keys in {config_file}: {', '.join(unknown)}")

    given = {name: value for name, value in overrides.items() if value is not None}
    try:
        return RunConfig(_env_file=config_file, **given)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {_describe(e)}") from e
