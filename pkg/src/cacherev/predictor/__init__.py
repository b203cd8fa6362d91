"""Demand prediction: attention model, federated training, genie oracle, accuracy."""
from .accuracy import AccuracyProfile, build_accuracy_profile, validation_slots
from .model import (ModelParams, PredictorConfig, dumps_params, forward, init_params,
                    load_params, loads_params, loss, loss_and_grad, save_params)
from .predictors import GeniePredictor, NeuralPredictor, genie_predict, predict_horizon
from .training import (WindowDataset, average_params, client_seeds, fedavg_round, local_train,
                       make_training_windows, train_centralized, train_federated)

__all__ = [
    "AccuracyProfile", "GeniePredictor", "ModelParams", "NeuralPredictor", "PredictorConfig",
    "WindowDataset", "average_params", "build_accuracy_profile", "client_seeds",
    "dumps_params", "fedavg_round", "forward", "genie_predict", "init_params", "load_params",
    "loads_params", "local_train", "loss", "loss_and_grad",
    "make_training_windows", "predict_horizon", "save_params", "train_centralized",
    "train_federated", "validation_slots",
]
