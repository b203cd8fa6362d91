"""Horizon predictors: the trained attention model and the genie-plus-error oracle.

Both expose ``predict(trace, user, start, horizon) -> (horizon, F)`` rows,
where ``start`` is the first predicted mini-slot and only ``[0, start)`` is
treated as history.
"""
from __future__ import annotations

import numpy as np

from ..core import RequestTrace
from ..errors import InsufficientDataError, ShapeError, TraceIncompleteError
from ..workload import Catalog, philox
from .model import ModelParams, forward

_GENIE = 3


def predict_horizon(params: ModelParams, history) -> np.ndarray:
    """Probability rows (horizon, F) from the last N one-hot rows."""
    history = np.asarray(history, dtype=float)
    if history.shape != (params.window, params.num_files):
        raise ShapeError(f"history must be ({params.window}, {params.num_files}), "
                         f"got {history.shape}")
    probs, _ = forward(params, history[None])
    return probs[0]


class NeuralPredictor:
    def __init__(self, params: ModelParams):
        self.params = params

    @property
    def window(self) -> int:
        return self.params.window

    def predict(self, trace: RequestTrace, user: int, start: int, horizon: int) -> np.ndarray:
        N = self.params.window
        if start < N:
            raise InsufficientDataError(f"need {N} mini-slots of history before {start}")
        if horizon > self.params.horizon:
            raise ShapeError(f"model covers {self.params.horizon} offsets, asked {horizon}")
        rows = predict_horizon(self.params, trace.one_hot(user, start - N, start))
        return rows[:horizon]

    def predict_batch(self, trace: RequestTrace, starts, horizon: int) -> np.ndarray:
        """Predictions (U, len(starts), horizon, F) in one forward pass."""
        N = self.params.window
        starts = np.asarray(starts)
        seqs = np.stack([trace.window(s - N, s) for s in starts], axis=1)  # (U, S, N)
        x = np.eye(trace.num_files)[seqs.reshape(-1, N)]
        probs, _ = forward(self.params, x)
        return probs.reshape(seqs.shape[0], len(starts), -1, trace.num_files)[:, :, :horizon]


def _wrong_file(catalog: Catalog, true_file: int, rng) -> int:
    members = catalog.members(int(catalog.genre_of[true_file]))
    others = members[members != true_file]
    if len(others) == 0:
        others = np.delete(np.arange(catalog.num_files), true_file)
        return int(rng.choice(others))
    w = catalog.popularity[others]
    return int(rng.choice(others, p=w / w.sum()))


def genie_predict(trace: RequestTrace, user: int, start: int, horizon: int, p_correct: float,
                  catalog: Catalog, rng: np.random.Generator) -> np.ndarray:
    """One-hot rows: the true file with probability ``p_correct``, else a wrong one.

    Wrong files follow the true file's genre popularity with the true file removed.
    """
    if start + horizon > trace.num_minislots:
        raise TraceIncompleteError("genie horizon runs past the end of the trace")
    truth = trace.window(start, start + horizon)[user]
    rows = np.zeros((horizon, trace.num_files))
    for h, f in enumerate(truth):
        pick = int(f) if rng.random() < p_correct else _wrong_file(catalog, int(f), rng)
        rows[h, pick] = 1.0
    return rows


class GeniePredictor:
    """Genie with one independent stream per (seed, user, mini-slot).

    A given future mini-slot therefore gets the same forecast no matter which
    placement slot asks for it.
    """

    window = 0

    def __init__(self, catalog: Catalog, p_correct: float, seed: int = 0):
        if not 0.0 <= p_correct <= 1.0:
            raise ValueError("p_correct must lie in [0, 1]")
        self.catalog = catalog
        self.p_correct = float(p_correct)
        self.seed = int(seed)

    def predict(self, trace: RequestTrace, user: int, start: int, horizon: int) -> np.ndarray:
        if start + horizon > trace.num_minislots:
            raise TraceIncompleteError("genie horizon runs past the end of the trace")
        truth = trace.window(start, start + horizon)[user]
        rows = np.zeros((horizon, trace.num_files))
        for h, f in enumerate(truth):
            rng = philox(self.seed, _GENIE, user, start + h)
            if rng.random() < self.p_correct:
                pick = int(f)
            else:
                pick = _wrong_file(self.catalog, int(f), rng)
            rows[h, pick] = 1.0
        return rows
