from marlrank.schemas.schemas import TrainConfig
from marlrank.service.trainer import PolicyTrainer


def get_trainer_service(config: TrainConfig) -> PolicyTrainer:
    return PolicyTrainer(config)
