"""Sequential placement loop, ground-truth planners and non-learning baselines.

Placement slot ``tau`` covers mini-slots ``[start + tau*n, start + (tau+1)*n)``.
A policy sees the trace only through the history before that window, except
the ground-truth planners and the genie, which read the future by design.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import (CachePlan, DemandEstimate, RequestTrace, RevenueParams, SlotOutcome,
                   average_revenue, cache_hit_ratio, realized_slot_revenue)
from .errors import CacheRevError, TraceIncompleteError
from .estimator import LocalPopularity, estimate_demand, simp_estimate
from .optimizer import (DEFAULT_NODE_BUDGET, linearize, solve_bnb, solve_one_slot_greedy,
                        top_by_score)
from .predictor.accuracy import AccuracyProfile
from .workload import Catalog, philox

log = logging.getLogger(__name__)

_RANDOM = 4

METHODS = ("GroundTruth-Multi", "GroundTruth-OneSlot", "Proposed", "C-SGD", "OneSlot",
           "SimpEst", "Statistics", "LRU", "Random")
LEARNED = ("Proposed", "C-SGD", "OneSlot", "SimpEst")


@dataclass
class EpisodeResult:
    method: str
    outcomes: list
    decisions: list
    certified_slots: list
    seed: int = 0
    params: RevenueParams | None = None
    failed: str | None = None

    @property
    def certified(self) -> bool:
        return all(self.certified_slots)

    @property
    def average_revenue(self) -> float:
        return average_revenue(self.outcomes)

    @property
    def chr(self) -> float:
        return cache_hit_ratio(self.outcomes)

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.method}|{self.seed}|{self.params!r}|{self.failed}".encode())
        for col, out, cert in zip(self.decisions, self.outcomes, self.certified_slots):
            h.update(np.asarray(col, dtype=np.uint8).tobytes())
            h.update(f"{out.realized_revenue!r},{out.hits},{out.misses},{out.placements},"
                     f"{int(cert)}".encode())
        return h.hexdigest()


@dataclass
class SlotContext:
    trace: RequestTrace
    params: RevenueParams
    tau: int
    t0: int                 # first mini-slot of the slot
    previous: np.ndarray


# ---------------------------------------------------------------- planners

def _bnb_column(counts, previous, params, node_budget):
    sol = solve_bnb(linearize(counts, previous, params), node_budget)
    return sol.plan.first.copy(), sol.certified


def true_counts(trace: RequestTrace, t0: int, offsets: int) -> np.ndarray:
    """(offsets, F) ground-truth request counts summed over users."""
    block = trace.window(t0, t0 + offsets)
    out = np.zeros((offsets, trace.num_files))
    for h in range(offsets):
        out[h] = np.bincount(block[:, h], minlength=trace.num_files)
    return out


def plan_ground_truth(trace: RequestTrace, params: RevenueParams, tau: int, previous=None,
                      start: int = 0, node_budget: int = DEFAULT_NODE_BUDGET) -> CachePlan:
    """K-slot plan solved against the true future requests."""
    previous = np.zeros(trace.num_files, np.uint8) if previous is None else previous
    t0 = start + tau * params.n
    counts = true_counts(trace, t0, params.n * params.span)
    return solve_bnb(linearize(counts, previous, params), node_budget).plan


def baseline_statistics(global_popularity, params: RevenueParams) -> np.ndarray:
    """Top-capacity files by global popularity, lowest id on ties."""
    return top_by_score(global_popularity, params.capacity)


class LRUState:
    """Least-recently-used cache with mini-slot recency ticks."""

    def __init__(self, num_files: int):
        self.cached = np.zeros(num_files, dtype=np.uint8)
        self.tick = np.full(num_files, -1, dtype=np.int64)

    def copy(self) -> "LRUState":
        s = LRUState(len(self.cached))
        s.cached[:] = self.cached
        s.tick[:] = self.tick
        return s

    def touch(self, f: int, t: int, capacity: int) -> None:
        if not self.cached[f]:
            if capacity <= 0:
                return
            if self.cached.sum() >= capacity:
                on = np.flatnonzero(self.cached)
                victim = on[np.lexsort((on, self.tick[on]))[0]]
                self.cached[victim] = 0
            self.cached[f] = 1
        self.tick[f] = t


def baseline_lru(state: LRUState, requests, capacity: int, first_tick: int = 0) -> np.ndarray:
    """Apply one slot of requests (mini-slots x users) and return the new cache.

    Requests in the same mini-slot share a tick; within it, users are
    processed in id order and LRU ties go to the lowest file id.
    """
    requests = np.atleast_2d(np.asarray(requests, dtype=np.int64))
    for i, row in enumerate(requests):
        for f in row:
            if f >= 0:
                state.touch(int(f), first_tick + i, capacity)
    return state.cached.copy()


def baseline_random(rng: np.random.Generator, capacity: int, num_files: int) -> np.ndarray:
    out = np.zeros(num_files, dtype=np.uint8)
    k = min(capacity, num_files)
    if k > 0:
        out[rng.choice(num_files, size=k, replace=False)] = 1
    return out


# ---------------------------------------------------------------- policies

class GroundTruthMulti:
    def __init__(self, node_budget=DEFAULT_NODE_BUDGET):
        self.node_budget = node_budget

    def decide(self, ctx: SlotContext):
        counts = true_counts(ctx.trace, ctx.t0, ctx.params.n * ctx.params.span)
        return _bnb_column(counts, ctx.previous, ctx.params, self.node_budget)


class OneSlotPolicy:
    """Greedy one-slot placement with the next slot fixed by global popularity.

    ``demand(ctx)`` returns per-offset counts for the n mini-slots of the slot.
    """

    def __init__(self, demand, global_popularity):
        self.demand = demand
        self.global_popularity = np.asarray(global_popularity, dtype=float)

    def decide(self, ctx: SlotContext):
        counts = np.asarray(self.demand(ctx)).sum(axis=0)
        nxt = top_by_score(self.global_popularity, ctx.params.capacity)
        return solve_one_slot_greedy(counts, nxt, ctx.previous, ctx.params), True


class Forecast:
    """Per-user demand rows from a predictor plus an estimation rule.

    ``mode`` is ``"mixture"`` (prediction blended with local popularity by
    accuracy), ``"simp"`` (accuracy-scaled argmax) or ``"raw"``.
    """

    def __init__(self, predictor, accuracy: AccuracyProfile | None, mode: str = "mixture"):
        if mode not in ("mixture", "simp", "raw"):
            raise ValueError(f"unknown estimation mode {mode!r}")
        self.predictor = predictor
        self.accuracy = accuracy
        self.mode = mode
        self._pop: LocalPopularity | None = None

    def __call__(self, ctx: SlotContext, offsets: int | None = None) -> DemandEstimate:
        H = ctx.params.n * ctx.params.span if offsets is None else offsets
        trace = ctx.trace
        if self.mode == "mixture":
            if self._pop is None or self._pop.up_to > ctx.t0:
                self._pop = LocalPopularity(trace.num_users, trace.num_files)
            self._pop.advance(trace, ctx.t0)
        rows = []
        for u in range(trace.num_users):
            pred = self.predictor.predict(trace, u, ctx.t0, H)
            acc = 1.0 if self.accuracy is None else self.accuracy.table(u)[:H]
            if self.mode == "mixture":
                rows.append(estimate_demand(pred, acc, self._pop, u))
            elif self.mode == "simp":
                rows.append(simp_estimate(pred, acc, u))
            else:
                rows.append(pred)
        return DemandEstimate(np.stack(rows))


class PredictivePolicy:
    """Predict, estimate, solve the K-slot ILP and deploy its first column."""

    def __init__(self, forecast: Forecast, node_budget=DEFAULT_NODE_BUDGET):
        self.forecast = forecast
        self.node_budget = node_budget

    def decide(self, ctx: SlotContext):
        est = self.forecast(ctx)
        return _bnb_column(est, ctx.previous, ctx.params, self.node_budget)


class StaticPolicy:
    def __init__(self, plan):
        self.plan = np.asarray(plan, dtype=np.uint8)

    def decide(self, ctx: SlotContext):
        return self.plan.copy(), True


class LRUPolicy:
    """Cache refreshed at each slot boundary from the previous slot's requests."""

    def __init__(self, num_files: int):
        self.state = LRUState(num_files)

    def decide(self, ctx: SlotContext):
        n = ctx.params.n
        lo = max(0, ctx.t0 - n)
        reqs = ctx.trace.window(lo, ctx.t0).T if ctx.t0 > 0 else np.zeros((0, 0), np.int64)
        return baseline_lru(self.state, reqs, ctx.params.capacity, first_tick=lo), True


class RandomPolicy:
    def __init__(self, seed: int):
        self.rng = philox(seed, _RANDOM)

    def decide(self, ctx: SlotContext):
        return baseline_random(self.rng, ctx.params.capacity, ctx.trace.num_files), True


# ---------------------------------------------------------------- episodes

def run_policy_episode(trace: RequestTrace, policy, params: RevenueParams, T: int,
                       start: int | None = None, method: str = "policy",
                       seed: int = 0) -> EpisodeResult:
    """Run ``T`` placement slots; a failing slot ends the episode early.

    ``start`` defaults to a warm-up of N + n*K mini-slots, with N taken from
    the policy's predictor window when it has one.
    """
    if start is None:
        window = getattr(getattr(getattr(policy, "forecast", None), "predictor", None),
                         "window", 0)
        start = int(window) + params.n * params.K
    if start + T * params.n > trace.num_minislots:
        raise TraceIncompleteError(
            f"trace has {trace.num_minislots} mini-slots, episode needs {start + T * params.n}")
    previous = np.zeros(trace.num_files, dtype=np.uint8)
    outcomes, decisions, certs = [], [], []
    failed = None
    for tau in range(T):
        ctx = SlotContext(trace, params, tau, start + tau * params.n, previous)
        try:
            column, cert = policy.decide(ctx)
            out = realized_slot_revenue(trace, tau, column, previous, params, start=start)
        except CacheRevError as exc:
            failed = f"slot {tau}: {exc}"
            log.warning("%s aborted at %s", method, failed)
            break
        outcomes.append(out)
        decisions.append(np.asarray(column, dtype=np.uint8))
        certs.append(bool(cert))
        previous = decisions[-1]
    return EpisodeResult(method, outcomes, decisions, certs, seed, params, failed)


@dataclass
class Scenario:
    """Everything one seed of a comparison needs."""

    trace: RequestTrace
    catalog: Catalog
    global_popularity: np.ndarray
    start: int
    seed: int = 0
    predictor: object = None
    accuracy: AccuracyProfile | None = None
    central_predictor: object = None
    central_accuracy: AccuracyProfile | None = None
    extra: dict = field(default_factory=dict)


def make_policy(method: str, sc: Scenario, params: RevenueParams,
                node_budget: int = DEFAULT_NODE_BUDGET):
    n = params.n
    if method == "GroundTruth-Multi":
        return GroundTruthMulti(node_budget)
    if method == "GroundTruth-OneSlot":
        return OneSlotPolicy(lambda ctx: true_counts(ctx.trace, ctx.t0, n), sc.global_popularity)
    if method in LEARNED:
        pred, acc = sc.predictor, sc.accuracy
        if method == "C-SGD":
            pred, acc = sc.central_predictor, sc.central_accuracy
        if pred is None:
            raise ValueError(f"method {method} needs a predictor")
        if method == "OneSlot":
            fc = Forecast(pred, acc, "mixture")
            return OneSlotPolicy(lambda ctx: fc(ctx, offsets=n).aggregate(), sc.global_popularity)
        mode = "simp" if method == "SimpEst" else "mixture"
        return PredictivePolicy(Forecast(pred, acc, mode), node_budget)
    if method == "Statistics":
        return StaticPolicy(baseline_statistics(sc.global_popularity, params))
    if method == "LRU":
        return LRUPolicy(sc.trace.num_files)
    if method == "Random":
        return RandomPolicy(sc.seed)
    raise ValueError(f"unknown method {method!r}")


def compare_methods(scenarios, methods, params_grid, T: int,
                    node_budget: int = DEFAULT_NODE_BUDGET, labels=None):
    """Run every (method, scenario, params) episode; results in that nesting order.

    ``labels`` optionally maps a method to the name recorded in its results.
    """
    labels = labels or {}
    results = []
    for method in methods:
        for params in params_grid:
            for sc in scenarios:
                policy = make_policy(method, sc, params, node_budget)
                results.append(run_policy_episode(sc.trace, policy, params, T, sc.start,
                                                  labels.get(method, method), sc.seed))
    return results


def summarize(results):
    """Rows (method, cache_size, mean_revenue, std_revenue, mean_chr) per group.

    The standard deviation is the sample one across seeds (0 for one seed).
    """
    groups: dict = {}
    for r in results:
        key = (r.method, r.params.capacity if r.params else 0)
        groups.setdefault(key, []).append(r)
    rows = []
    for (method, cap), rs in groups.items():
        rev = np.array([r.average_revenue for r in rs])
        chr_ = np.array([r.chr for r in rs])
        std = float(rev.std(ddof=1)) if len(rev) > 1 else 0.0
        rows.append((method, cap, float(rev.mean()), std, float(chr_.mean())))
    return rows
