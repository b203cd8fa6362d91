"""Domain types and revenue / hit-ratio arithmetic.

Currency values are plain floats. Decision vectors are numpy arrays of 0/1
(``uint8``); indexing is always ``[slot, file]`` or ``[user, minislot]``.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    EmptyInputError,
    InvalidParamsError,
    InvalidPlanError,
    ShapeError,
    TraceIncompleteError,
    UndefinedMetricError,
)

MISSING = -1


@dataclass(frozen=True)
class RevenueParams:
    beta: float = 3.0
    c_plc: float = 1.5
    c_bs_ue: float = 0.5
    c_cl_bs: float = 2.0
    gamma: float = 0.8
    K: int = 5
    K_tilde: int = 0
    n: int = 2
    S: float = 20.0
    B: float = 1.0

    def __post_init__(self):
        if not self.c_cl_bs > self.c_plc:
            raise InvalidParamsError(
                f"c_cl_bs ({self.c_cl_bs}) must exceed c_plc ({self.c_plc})")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidParamsError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.n < 1 or self.K < 1 or self.K_tilde < 0:
            raise InvalidParamsError("need n >= 1, K >= 1, K_tilde >= 0")
        if self.S < 0 or not self.B > 0:
            raise InvalidParamsError("need S >= 0 and B > 0")

    @property
    def capacity(self) -> int:
        """Number of files that fit in the cache."""
        return int(np.floor(self.S / self.B + 1e-9))

    @property
    def span(self) -> int:
        """Placement slots covered by the revenue objective (K + K_tilde)."""
        return self.K + self.K_tilde

    def replace(self, **changes) -> "RevenueParams":
        from dataclasses import replace

        return replace(self, **changes)


class RequestTrace:
    """One request per (user, mini-slot); ``requests[u, t]`` is a file id.

    Entries equal to ``MISSING`` mark mini-slots absent from a partial trace.
    """

    def __init__(self, requests, num_files: int):
        req = np.asarray(requests, dtype=np.int64)
        if req.ndim != 2:
            raise ShapeError("requests must be a (users, minislots) array")
        if req.size and (req.max() >= num_files or req.min() < MISSING):
            raise ValueError("file id out of range")
        req.setflags(write=False)
        self.requests = req
        self.num_files = int(num_files)

    @property
    def num_users(self) -> int:
        return self.requests.shape[0]

    @property
    def num_minislots(self) -> int:
        return self.requests.shape[1]

    def window(self, start: int, stop: int) -> np.ndarray:
        """Requests for mini-slots ``[start, stop)``; raises if any are missing."""
        if start < 0 or stop > self.num_minislots:
            raise TraceIncompleteError(
                f"mini-slots [{start}, {stop}) outside trace of length {self.num_minislots}")
        block = self.requests[:, start:stop]
        if (block == MISSING).any():
            raise TraceIncompleteError(f"trace has missing mini-slots in [{start}, {stop})")
        return block

    def counts(self, start: int, stop: int) -> np.ndarray:
        """Per-file request counts over all users in ``[start, stop)``."""
        return np.bincount(self.window(start, stop).ravel(), minlength=self.num_files)

    def one_hot(self, user: int, start: int, stop: int) -> np.ndarray:
        ids = self.window(start, stop)[user]
        rows = np.zeros((len(ids), self.num_files))
        rows[np.arange(len(ids)), ids] = 1.0
        return rows

    def slice_users(self, users: Sequence[int]) -> "RequestTrace":
        return RequestTrace(self.requests[list(users)], self.num_files)

    def slice_minislots(self, start: int, stop: int) -> "RequestTrace":
        return RequestTrace(self.requests[:, start:stop], self.num_files)

    def __eq__(self, other):
        return (isinstance(other, RequestTrace) and self.num_files == other.num_files
                and np.array_equal(self.requests, other.requests))

    # file format: header then `t,u,f` lines sorted by t then u
    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write(f"users={self.num_users} files={self.num_files} "
                  f"minislots={self.num_minislots}\n")
        for t in range(self.num_minislots):
            col = self.requests[:, t]
            for u in np.flatnonzero(col != MISSING):
                buf.write(f"{t},{u},{col[u]}\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "RequestTrace":
        lines = text.splitlines()
        if not lines:
            raise ValueError("empty trace file")
        header = dict(item.split("=", 1) for item in lines[0].split())
        users, files, slots = (int(header[k]) for k in ("users", "files", "minislots"))
        req = np.full((users, slots), MISSING, dtype=np.int64)
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            try:
                t, u, f = (int(x) for x in line.split(","))
            except ValueError:
                raise ValueError(f"line {lineno}: malformed request {line!r}") from None
            req[u, t] = f
        return cls(req, files)

    def save(self, path) -> None:
        atomic_write_text(path, self.dumps())

    @classmethod
    def load(cls, path) -> "RequestTrace":
        with open(path, encoding="ascii") as fh:
            return cls.loads(fh.read())


@dataclass
class CachePlan:
    """K x F binary decisions plus the column deployed before the horizon."""

    decisions: np.ndarray
    previous: np.ndarray

    def __post_init__(self):
        self.decisions = np.asarray(self.decisions, dtype=np.uint8)
        self.previous = np.asarray(self.previous, dtype=np.uint8)
        if self.decisions.ndim != 2 or self.previous.shape != (self.decisions.shape[1],):
            raise ShapeError("decisions must be (K, F) and previous (F,)")

    @property
    def horizon(self) -> int:
        return self.decisions.shape[0]

    @property
    def aux(self) -> np.ndarray:
        """z[k, f] = d[k, f] * d[k-1, f], with d[-1] = previous."""
        prior = np.vstack([self.previous[None, :], self.decisions[:-1]])
        return self.decisions & prior

    @property
    def first(self) -> np.ndarray:
        return self.decisions[0]

    def check_capacity(self, params: RevenueParams) -> None:
        used = self.decisions.sum(axis=1) * params.B
        if (used > params.S + 1e-9).any():
            raise InvalidPlanError(f"plan exceeds cache capacity S={params.S}: {used.tolist()}")


@dataclass
class DemandEstimate:
    """Expected requests ``values[u, h, f]`` over ``horizon_mini_slots`` offsets."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 2:
            self.values = self.values[None]
        if self.values.ndim != 3:
            raise ShapeError("values must be (users, offsets, files)")

    @property
    def horizon_mini_slots(self) -> int:
        return self.values.shape[1]

    def aggregate(self) -> np.ndarray:
        """Expected counts per (offset, file), summed over users in id order."""
        total = np.zeros(self.values.shape[1:])
        for row in self.values:
            total += row
        return total

    def slot_counts(self, n: int) -> np.ndarray:
        agg = self.aggregate()
        if agg.shape[0] % n:
            raise ShapeError(f"{agg.shape[0]} offsets is not a multiple of n={n}")
        return agg.reshape(agg.shape[0] // n, n, -1).sum(axis=1)

    def dump_csv(self) -> str:
        agg = self.aggregate()
        lines = ["offset,file,expected_count"]
        for h in range(agg.shape[0]):
            for f in range(agg.shape[1]):
                lines.append(f"{h},{f},{agg[h, f]:.9g}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SlotOutcome:
    realized_revenue: float
    hits: int
    misses: int
    placements: int

    @property
    def requests(self) -> int:
        return self.hits + self.misses


def realized_slot_revenue(trace: RequestTrace, slot_index: int, deployed, previous,
                          params: RevenueParams, start: int = 0) -> SlotOutcome:
    """Revenue actually earned in one placement slot given the deployed cache.

    ``start`` is the mini-slot where placement slot 0 begins.
    """
    deployed = np.asarray(deployed, dtype=np.uint8)
    previous = np.asarray(previous, dtype=np.uint8)
    if deployed.sum() * params.B > params.S + 1e-9:
        raise InvalidPlanError("deployed cache exceeds capacity")
    t0 = start + slot_index * params.n
    counts = trace.counts(t0, t0 + params.n)
    total = int(counts.sum())
    hits = int(counts[deployed == 1].sum())
    placements = int((deployed & (1 - previous)).sum())
    revenue = (total * (params.beta - params.c_bs_ue)
               - (total - hits) * params.c_cl_bs
               - params.c_plc * placements)
    return SlotOutcome(float(revenue), hits, total - hits, placements)


def average_revenue(outcomes: Sequence[SlotOutcome]) -> float:
    if not outcomes:
        raise EmptyInputError("no slot outcomes to average")
    return float(np.mean([o.realized_revenue for o in outcomes]))


def cache_hit_ratio(outcomes: Sequence[SlotOutcome]) -> float:
    hits = sum(o.hits for o in outcomes)
    total = sum(o.requests for o in outcomes)
    if total == 0:
        raise UndefinedMetricError("cache hit ratio undefined with zero requests")
    return hits / total


def expected_total_revenue(estimates: DemandEstimate, plan: CachePlan,
                           params: RevenueParams) -> float:
    """Discounted expected revenue of ``plan`` over K + K_tilde slots.

    Decisions for slots k >= K are frozen at the last optimized column, so the
    tail earns hit savings but pays no further placement.
    """
    K, span = params.K, params.span
    if plan.horizon != K:
        raise ShapeError(f"plan horizon {plan.horizon} != K={K}")
    if estimates.horizon_mini_slots != params.n * span:
        raise ShapeError(
            f"estimates cover {estimates.horizon_mini_slots} offsets, need {params.n * span}")
    counts = estimates.slot_counts(params.n)
    if counts.shape[1] != plan.decisions.shape[1]:
        raise ShapeError("file dimension mismatch between estimates and plan")
    d = plan.decisions.astype(float)
    z = plan.aux.astype(float)
    total = 0.0
    for k in range(span):
        kk = min(k, K - 1)
        w = params.gamma ** k
        total += w * float(np.sum(counts[k] * (params.beta - params.c_bs_ue
                                               - (1.0 - d[kk]) * params.c_cl_bs)))
        if k < K:
            total -= w * params.c_plc * float(np.sum(d[k] - z[k]))
    return total


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="ascii", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def atomic_write_bytes(path, data: bytes) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
