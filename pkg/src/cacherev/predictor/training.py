"""Sliding-window datasets, local mini-batch SGD and federated averaging."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import RequestTrace
from ..errors import DivergenceError, EmptyInputError, InsufficientDataError
from .model import ModelParams, PredictorConfig, init_params, loss, loss_and_grad


@dataclass
class WindowDataset:
    """``features[i]`` is N one-hot rows, ``labels[i]`` the next ``horizon`` file ids."""

    features: np.ndarray   # (W, N, F) float
    labels: np.ndarray     # (W, H) int

    def __len__(self):
        return len(self.labels)

    def label_rows(self, i=None) -> np.ndarray:
        """One-hot label rows, (W, H, F) or (H, F) for a single window."""
        F = self.features.shape[-1]
        eye = np.eye(F)
        return eye[self.labels] if i is None else eye[self.labels[i]]

    @classmethod
    def concat(cls, parts) -> "WindowDataset":
        parts = list(parts)
        return cls(np.concatenate([p.features for p in parts]),
                   np.concatenate([p.labels for p in parts]))


def make_training_windows(trace: RequestTrace, user: int, N: int, horizon: int, step: int,
                          start: int = 0, stop: int | None = None) -> WindowDataset:
    """Windows at offsets start, start+step, ... fully inside ``[start, stop)``."""
    stop = trace.num_minislots if stop is None else stop
    length = stop - start
    if length < N + horizon:
        raise InsufficientDataError(
            f"user {user}: {length} mini-slots, need at least N+horizon={N + horizon}")
    seq = trace.window(start, stop)[user]
    count = (length - N - horizon) // step + 1
    offs = np.arange(count) * step
    idx_x = offs[:, None] + np.arange(N)
    idx_y = offs[:, None] + N + np.arange(horizon)
    feats = np.eye(trace.num_files)[seq[idx_x]]
    return WindowDataset(feats, seq[idx_y].astype(np.int64))


def _check_finite(value, grads: ModelParams):
    if not np.isfinite(value):
        raise DivergenceError(f"non-finite loss {value}", tensor="loss")
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in tensor {name!r}", tensor=name)


def local_train(params: ModelParams, dataset: WindowDataset, eta: float, kappa: int,
                batch_size: int, rng: np.random.Generator, grad_fn=None) -> ModelParams:
    """``kappa`` SGD steps on mini-batches drawn without replacement per step.

    ``grad_fn(params, x, y) -> (loss, grads)`` defaults to the attention model.
    The input params are left untouched.
    """
    if len(dataset) == 0:
        raise EmptyInputError("empty training dataset")
    grad_fn = loss_and_grad if grad_fn is None else grad_fn
    theta = params.copy()
    size = min(batch_size, len(dataset))
    for _ in range(kappa):
        batch = np.sort(rng.choice(len(dataset), size=size, replace=False))
        value, grads = grad_fn(theta, dataset.features[batch], dataset.labels[batch])
        _check_finite(value, grads)
        for name, g in grads.items():
            theta[name] = theta[name] - eta * g
    return theta


def average_params(models) -> ModelParams:
    """Elementwise mean with equal weights, summed in list order."""
    models = list(models)
    if not models:
        raise EmptyInputError("no client models to average")
    out = models[0].copy()
    for m in models[1:]:
        for name in out:
            out[name] = out[name] + m[name]
    for name in out:
        out[name] = out[name] / len(models)
    return out


def client_seeds(rng: np.random.Generator, count: int) -> list[int]:
    return [int(s) for s in rng.integers(0, 2**63 - 1, size=count)]


def fedavg_round(global_params: ModelParams, client_datasets, eta: float, kappa: int,
                 batch_size: int, rng: np.random.Generator, grad_fn=None) -> ModelParams:
    """One global round; client seeds are drawn from ``rng`` in user-id order."""
    client_datasets = list(client_datasets)
    if not client_datasets:
        raise EmptyInputError("fedavg needs at least one client")
    seeds = client_seeds(rng, len(client_datasets))
    results = [local_train(global_params, ds, eta, kappa, batch_size,
                           np.random.Generator(np.random.Philox(s)), grad_fn)
               for ds, s in zip(client_datasets, seeds)]
    return average_params(results)


def train_federated(cfg: PredictorConfig, client_datasets, num_files: int,
                    rounds: int | None = None, params: ModelParams | None = None,
                    history: list | None = None) -> ModelParams:
    """``rounds`` FedAvg rounds from a seeded initialization.

    When ``history`` is a list, the mean client training loss after each
    round is appended to it.
    """
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    theta = init_params(cfg, num_files, rng) if params is None else params.copy()
    rounds = cfg.rounds if rounds is None else rounds
    for _ in range(rounds):
        theta = fedavg_round(theta, client_datasets, cfg.eta, cfg.kappa, cfg.batch_size, rng)
        if history is not None:
            history.append(float(np.mean([loss(theta, d.features, d.labels)
                                          for d in client_datasets])))
    return theta


def train_centralized(cfg: PredictorConfig, client_datasets, num_files: int,
                      rounds: int | None = None) -> ModelParams:
    """C-SGD: one logical client holding every user's windows."""
    return train_federated(cfg, [WindowDataset.concat(client_datasets)], num_files, rounds)
