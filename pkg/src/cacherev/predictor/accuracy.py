"""Per-(user, file, offset) top-1 accuracy measured on held-out slots."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import RequestTrace
from ..errors import InsufficientDataError, InvalidParamsError


@dataclass
class AccuracyProfile:
    """Counts of true requests and of correct argmax predictions.

    ``correct[u, f, h] / total[u, f, h]`` is the accuracy of file f at offset
    h. Cells with no true request fall back to the user's file-agnostic
    accuracy at that offset, then to 0.
    """

    correct: np.ndarray   # (U, F, H)
    total: np.ndarray     # (U, F, H)

    @property
    def horizon(self) -> int:
        return self.total.shape[2]

    def present(self) -> np.ndarray:
        return self.total > 0

    def fallback(self) -> np.ndarray:
        """(U, H) micro-averaged accuracy over files, 0 where undefined."""
        num = self.correct.sum(axis=1)
        den = self.total.sum(axis=1)
        return np.divide(num, den, out=np.zeros(num.shape, dtype=float), where=den > 0)

    def table(self, user: int) -> np.ndarray:
        """Accuracy rows (H, F) for one user with fallbacks filled in."""
        num = self.correct[user].T.astype(float)
        den = self.total[user].T
        fb = self.fallback()[user][:, None]
        return np.where(den > 0, num / np.maximum(den, 1), fb)

    def lookup(self, user: int, file: int, offset: int) -> float:
        return float(self.table(user)[offset, file])

    def mean_by_offset(self) -> np.ndarray:
        """Top-1 accuracy per offset pooled over users and files."""
        den = self.total.sum(axis=(0, 1))
        return self.correct.sum(axis=(0, 1)) / np.maximum(den, 1)

    @classmethod
    def constant(cls, num_users: int, num_files: int, horizon: int, value: float = 1.0,
                 weight: int = 1_000_000) -> "AccuracyProfile":
        """Profile that reads ``value`` everywhere (used for a perfectly known predictor)."""
        total = np.full((num_users, num_files, horizon), weight, dtype=np.int64)
        correct = np.round(total * value).astype(np.int64)
        return cls(correct, total)


def build_accuracy_profile(predictor, trace: RequestTrace, N: int, n: int, K: int,
                           num_validation_slots: int, start: int | None = None,
                           horizon: int | None = None) -> AccuracyProfile:
    """Score ``predictor`` on ``num_validation_slots`` placement slots.

    Slot j asks for ``horizon`` (default n*K) offsets from mini-slot
    ``start + j*n``; ``start`` defaults to N so the model has a full window.
    """
    if num_validation_slots < 1:
        raise InvalidParamsError("need at least one validation slot")
    H = n * K if horizon is None else horizon
    start = N if start is None else start
    last = start + (num_validation_slots - 1) * n + H
    if start < N or last > trace.num_minislots:
        raise InsufficientDataError(
            f"validation needs mini-slots [{start - N}, {last}), trace has {trace.num_minislots}")
    U, F = trace.num_users, trace.num_files
    correct = np.zeros((U, F, H), dtype=np.int64)
    total = np.zeros((U, F, H), dtype=np.int64)
    starts = start + n * np.arange(num_validation_slots)
    hs = np.arange(H)
    batch = None
    if hasattr(predictor, "predict_batch"):
        batch = predictor.predict_batch(trace, starts, H)
    for u in range(U):
        if batch is not None:
            preds = batch[u]
        else:
            preds = np.stack([predictor.predict(trace, u, int(s), H) for s in starts])
        guess = preds.argmax(axis=-1)                       # (S, H), lowest id on ties
        truth = trace.requests[u, starts[:, None] + hs]      # (S, H)
        np.add.at(total[u], (truth, np.broadcast_to(hs, truth.shape)), 1)
        hit = guess == truth
        np.add.at(correct[u], (truth[hit], np.broadcast_to(hs, truth.shape)[hit]), 1)
    return AccuracyProfile(correct, total)


def validation_slots(length: int, N: int, n: int, horizon: int) -> int:
    """Number of placement slots that fit in a validation span of ``length`` mini-slots."""
    return max(0, (length - N - horizon) // n + 1)
