from .trainer import (
    VARIANTS,
    EpochRecord,
    HashTrainer,
    TrainConfig,
    TrainerState,
    TrainHistory,
    load_checkpoint,
    resume,
    save_checkpoint,
    train,
)
