"""Expected demand from predictions, accuracy and local popularity.

The mixture view: the actual request follows the prediction with
probability ``a`` and the user's local popularity otherwise, so
``E[i] = i_hat * a + g * (1 - a)`` entrywise.
"""
from __future__ import annotations

import numpy as np

from .core import DemandEstimate, RequestTrace
from .errors import NoHistoryError, ShapeError
from .predictor.accuracy import AccuracyProfile


class LocalPopularity:
    """Running per-user request counts over mini-slots ``[0, up_to)``."""

    def __init__(self, num_users: int, num_files: int):
        self.counts = np.zeros((num_users, num_files), dtype=np.int64)
        self.up_to = 0

    @classmethod
    def from_trace(cls, trace: RequestTrace, up_to: int) -> "LocalPopularity":
        pop = cls(trace.num_users, trace.num_files)
        pop.advance(trace, up_to)
        return pop

    def advance(self, trace: RequestTrace, up_to: int) -> None:
        """Fold in mini-slots ``[self.up_to, up_to)``."""
        if up_to < self.up_to:
            raise ValueError("local popularity cannot move backwards")
        block = trace.window(self.up_to, up_to)
        for u in range(trace.num_users):
            self.counts[u] += np.bincount(block[u], minlength=trace.num_files)
        self.up_to = up_to

    def vector(self, user: int) -> np.ndarray:
        total = self.counts[user].sum()
        if total == 0:
            raise NoHistoryError(f"user {user} has no request history")
        return self.counts[user] / total


def local_popularity(trace: RequestTrace, user: int, up_to_mini_slot: int) -> np.ndarray:
    """Normalized request counts of ``user`` over mini-slots before ``up_to_mini_slot``."""
    if up_to_mini_slot <= 0:
        raise NoHistoryError(f"user {user} has no request history before mini-slot 0")
    ids = trace.window(0, up_to_mini_slot)[user]
    return np.bincount(ids, minlength=trace.num_files) / len(ids)


def _accuracy_rows(accuracy, user, shape):
    if isinstance(accuracy, AccuracyProfile):
        a = accuracy.table(user)[:shape[0]]
    else:
        a = np.broadcast_to(np.asarray(accuracy, dtype=float), shape)
    if a.shape != shape:
        raise ShapeError(f"accuracy rows {a.shape} do not match predictions {shape}")
    return a


def estimate_demand(predictions, accuracy, popularity, user: int = 0) -> np.ndarray:
    """Rows (H, F) of expected requests for one user.

    ``accuracy`` is an AccuracyProfile or an array broadcastable to (H, F);
    ``popularity`` is a LocalPopularity or the user's length-F vector.
    """
    pred = np.asarray(predictions, dtype=float)
    if pred.ndim != 2:
        raise ShapeError("predictions must be (offsets, files)")
    g = popularity.vector(user) if isinstance(popularity, LocalPopularity) else \
        np.asarray(popularity, dtype=float)
    if g.shape != (pred.shape[1],):
        raise ShapeError(f"popularity has shape {g.shape}, expected ({pred.shape[1]},)")
    a = _accuracy_rows(accuracy, user, pred.shape)
    return pred * a + g[None, :] * (1.0 - a)


def simp_estimate(predictions, accuracy, user: int = 0) -> np.ndarray:
    """Accuracy-scaled one-hot at each row's argmax (lowest id wins ties)."""
    pred = np.asarray(predictions, dtype=float)
    if pred.ndim != 2:
        raise ShapeError("predictions must be (offsets, files)")
    a = _accuracy_rows(accuracy, user, pred.shape)
    best = pred.argmax(axis=1)
    rows = np.arange(pred.shape[0])
    out = np.zeros_like(pred)
    out[rows, best] = a[rows, best]
    return out


def sample_mixture(predictions, popularity, accuracy, size: int, rng: np.random.Generator):
    """Monte-Carlo draws of the request indicator vector for one row.

    Each file takes its indicator from a draw out of ``predictions`` with
    probability ``accuracy[f]`` and from a draw out of ``popularity``
    otherwise. Returns a (size, F) 0/1 array.
    """
    p = np.asarray(predictions, dtype=float)
    g = np.asarray(popularity, dtype=float)
    a = np.broadcast_to(np.asarray(accuracy, dtype=float), p.shape)
    F = len(p)
    from_pred = rng.choice(F, size=size, p=p / p.sum())
    from_pop = rng.choice(F, size=size, p=g / g.sum())
    branch = rng.random((size, F)) < a
    eye = np.eye(F, dtype=np.int8)
    return np.where(branch, eye[from_pred], eye[from_pop])


def aggregate_estimates(rows_by_user) -> DemandEstimate:
    """Stack per-user (H, F) rows into a DemandEstimate in user-id order."""
    return DemandEstimate(np.stack(list(rows_by_user)))
