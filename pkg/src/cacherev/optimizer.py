"""Exact K-slot cache planning via the z-linearized ILP, plus the one-slot greedy.

The linearized objective of a plan ``d`` (K x F, binary) is::

    offset + sum(d_coef * d) + sum_{k>=1} z_coef[k] * d[k] * d[k-1]

where the k=0 coupling to the fixed previous column is folded into
``d_coef[0]``. Both solvers break ties between plans whose objectives agree
within ``tie_tol`` by the lexicographically smallest flattened (slot-major)
decision matrix.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .core import CachePlan, DemandEstimate, RevenueParams
from .errors import ShapeError, SizeGuardError

BRUTE_FORCE_LIMIT = 24
DEFAULT_NODE_BUDGET = 10**7
NEG = -np.inf


@dataclass
class IlpInstance:
    d_coef: np.ndarray      # (K, F)
    z_coef: np.ndarray      # (K, F); row 0 is zero, folded into d_coef[0]
    capacity: int
    previous: np.ndarray    # (F,)
    offset: float

    @property
    def K(self) -> int:
        return self.d_coef.shape[0]

    @property
    def F(self) -> int:
        return self.d_coef.shape[1]

    def evaluate(self, decisions) -> float:
        d = np.asarray(decisions, dtype=float)
        value = self.offset + float(np.sum(self.d_coef * d))
        if self.K > 1:
            value += float(np.sum(self.z_coef[1:] * d[1:] * d[:-1]))
        return value

    def tie_tol(self, value: float) -> float:
        return 1e-9 * max(1.0, abs(value))

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write(f"K={self.K} F={self.F} capacity={self.capacity} offset={self.offset!r}\n")
        buf.write("previous=" + "".join(str(int(x)) for x in self.previous) + "\n")
        for k in range(self.K):
            for f in range(self.F):
                buf.write(f"{k},{f},{float(self.d_coef[k, f])!r},{float(self.z_coef[k, f])!r}\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "IlpInstance":
        lines = text.splitlines()
        head = dict(item.split("=", 1) for item in lines[0].split())
        K, F = int(head["K"]), int(head["F"])
        prev = np.array([int(c) for c in lines[1].split("=", 1)[1]], dtype=np.uint8)
        d = np.zeros((K, F))
        z = np.zeros((K, F))
        for line in lines[2:]:
            k, f, dc, zc = line.split(",")
            d[int(k), int(f)] = float(dc)
            z[int(k), int(f)] = float(zc)
        return cls(d, z, int(head["capacity"]), prev, float(head["offset"]))


class Solution(NamedTuple):
    plan: CachePlan
    value: float
    certified: bool = True
    nodes: int = 0


def _per_slot_counts(estimates, n: int) -> np.ndarray:
    if isinstance(estimates, DemandEstimate):
        return estimates.slot_counts(n)
    agg = np.asarray(estimates, dtype=float)
    if agg.ndim == 3:
        agg = agg.sum(axis=0)
    if agg.ndim != 2 or agg.shape[0] % n:
        raise ShapeError("aggregated estimates must be (n * slots, F)")
    return agg.reshape(agg.shape[0] // n, n, -1).sum(axis=1)


def linearize(estimates, previous, params: RevenueParams) -> IlpInstance:
    """Coefficient view of the expected revenue with z standing in for d*d_prev.

    ``estimates`` is a DemandEstimate or per-offset expected counts
    (summed over users) covering n * (K + K_tilde) mini-slots.
    """
    counts = _per_slot_counts(estimates, params.n)
    K, span = params.K, params.span
    if counts.shape[0] != span:
        raise ShapeError(f"estimates cover {counts.shape[0]} slots, need K+K_tilde={span}")
    F = counts.shape[1]
    previous = np.asarray(previous, dtype=np.uint8)
    if previous.shape != (F,):
        raise ShapeError("previous must have one entry per file")
    disc = params.gamma ** np.arange(span)
    d_coef = disc[:K, None] * (params.c_cl_bs * counts[:K] - params.c_plc)
    d_coef[0] += params.c_plc * previous
    for j in range(K, span):
        d_coef[K - 1] += disc[j] * params.c_cl_bs * counts[j]
    z_coef = np.zeros((K, F))
    z_coef[1:] = disc[1:K, None] * params.c_plc
    offset = float(np.sum(disc[:, None] * counts
                          * (params.beta - params.c_bs_ue - params.c_cl_bs)))
    return IlpInstance(d_coef, z_coef, params.capacity, previous, offset)


def _make_solution(inst: IlpInstance, decisions, certified=True, nodes=0) -> Solution:
    plan = CachePlan(np.asarray(decisions, dtype=np.uint8), inst.previous.copy())
    return Solution(plan, inst.evaluate(plan.decisions), certified, nodes)


def solve_bruteforce(inst: IlpInstance) -> Solution:
    """Exhaustive scan over every capacity-feasible plan."""
    K, F = inst.K, inst.F
    if K * F > BRUTE_FORCE_LIMIT:
        raise SizeGuardError(f"K*F={K * F} exceeds brute-force limit {BRUTE_FORCE_LIMIT}")
    # rows in lexicographic order: integer order with file 0 as the top bit
    ints = np.arange(2 ** F, dtype=np.int64)
    rows = ((ints[:, None] >> np.arange(F - 1, -1, -1)) & 1).astype(float)
    rows = rows[rows.sum(axis=1) <= min(inst.capacity, F)]
    r = len(rows)
    values = rows @ inst.d_coef[0]
    for k in range(1, K):
        pair = (rows * inst.z_coef[k]) @ rows.T
        values = (values.reshape(-1, r, 1) + pair[None] + (rows @ inst.d_coef[k])[None, None])
        values = values.reshape(-1)
    values = values + inst.offset
    best = values.max()
    idx = int(np.flatnonzero(values >= best - inst.tie_tol(best))[0])
    picks = np.unravel_index(idx, (r,) * K) if K > 1 else (idx,)
    return _make_solution(inst, rows[list(picks)], nodes=int(values.size))


# ---------------------------------------------------------------- bounds

def _lagrangian(d_coef, z_coef, fixed, lam):
    """Per-file chain DP with capacity priced out by ``lam``.

    Returns (sum over files of the best chain value, argmax chain). Ties
    prefer 0 so the argmax leans lexicographically small.
    """
    K, F = d_coef.shape
    ptr0 = np.zeros((K, F), dtype=bool)
    ptr1 = np.zeros((K, F), dtype=bool)
    v0 = np.zeros(F)
    v1 = d_coef[0] - lam[0]
    v1 = np.where(fixed[0] == 0, NEG, v1)
    v0 = np.where(fixed[0] == 1, NEG, v0)
    for k in range(1, K):
        stay = v1 + z_coef[k]
        ptr1[k] = stay > v0
        n1 = np.maximum(v0, stay) + d_coef[k] - lam[k]
        ptr0[k] = v1 > v0
        n0 = np.maximum(v0, v1)
        v1 = np.where(fixed[k] == 0, NEG, n1)
        v0 = np.where(fixed[k] == 1, NEG, n0)
    state = v1 > v0
    total = float(np.maximum(v0, v1).sum())
    chain = np.zeros((K, F), dtype=np.int8)
    for k in range(K - 1, -1, -1):
        chain[k] = state
        if k:
            state = np.where(state, ptr1[k], ptr0[k])
    return total, chain


def _row_bound(d_coef, z_coef, fixed, cap):
    """Slot-wise bound: best top-capacity selection assuming persistence."""
    total = 0.0
    K = d_coef.shape[0]
    for k in range(K):
        c = d_coef[k]
        if k:
            prev = fixed[k - 1]
            z = z_coef[k]
            c = c + np.where(prev == 1, z, np.where(prev == -1, np.maximum(z, 0.0), 0.0))
        row = fixed[k]
        ones = row == 1
        total += float(c[ones].sum())
        room = cap - int(ones.sum())
        if room <= 0:
            continue
        cand = c[(row == -1) & (c > 0)]
        if len(cand) > room:
            cand = np.partition(cand, len(cand) - room)[len(cand) - room:]
        total += float(cand.sum())
    return total


def _best_nonzero_chain(d_coef, z_coef):
    """Per file, the best objective of any chain that caches it at least once."""
    K, F = d_coef.shape
    n1 = d_coef[0].copy()
    n0 = np.full(F, NEG)
    for k in range(1, K):
        n1, n0 = d_coef[k] + np.maximum(np.maximum(0.0, n0), n1 + z_coef[k]), np.maximum(n0, n1)
    return np.maximum(n0, n1)


def _probe(d_coef, z_coef, fixed, lam):
    """Forward/backward chain DP under multipliers ``lam``.

    Returns the Lagrangian total (without offset and capacity terms) and, per
    cell, the change in that total when the cell is forced to 0 or to 1
    (``-inf`` where the forced value contradicts a fixing).
    """
    K, F = d_coef.shape
    gain = d_coef - lam[:, None]
    ok0 = fixed != 1
    ok1 = fixed != 0
    a0 = np.empty((K, F))
    a1 = np.empty((K, F))
    a0[0] = np.where(ok0[0], 0.0, NEG)
    a1[0] = np.where(ok1[0], gain[0], NEG)
    for k in range(1, K):
        a0[k] = np.where(ok0[k], np.maximum(a0[k - 1], a1[k - 1]), NEG)
        a1[k] = np.where(ok1[k], np.maximum(a0[k - 1], a1[k - 1] + z_coef[k]) + gain[k], NEG)
    b0 = np.zeros((K, F))
    b1 = np.zeros((K, F))
    for k in range(K - 2, -1, -1):
        nxt0 = np.where(ok0[k + 1], b0[k + 1], NEG)
        nxt1 = np.where(ok1[k + 1], gain[k + 1] + b1[k + 1], NEG)
        b0[k] = np.maximum(nxt0, nxt1)
        b1[k] = np.maximum(nxt0, nxt1 + z_coef[k + 1])
    best = np.maximum(a0[-1], a1[-1])
    with np.errstate(invalid="ignore"):
        with0 = a0 + b0 - best
        with1 = a1 + b1 - best
    return float(best.sum()), with0, with1


class _Search:
    """Depth-first branch-and-bound over the free d variables."""

    def __init__(self, d_coef, z_coef, cap, offset, budget):
        self.d, self.z, self.cap, self.offset = d_coef, z_coef, cap, offset
        self.K, self.F = d_coef.shape
        self.budget = budget
        self.nodes = 0
        self.fixed = np.full((self.K, self.F), -1, dtype=np.int8)
        self.ones = np.zeros(self.K, dtype=np.int64)
        self.lam = np.zeros(self.K)

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        v = self.offset + float(np.sum(self.d * x))
        if self.K > 1:
            v += float(np.sum(self.z[1:] * x[1:] * x[:-1]))
        return v

    def feasible(self, x) -> bool:
        return bool((x.sum(axis=1) <= self.cap).all())

    def bound(self):
        lag, chain = _lagrangian(self.d, self.z, self.fixed, self.lam)
        lag += self.offset + float(self.lam.sum()) * self.cap
        row = self.offset + _row_bound(self.d, self.z, self.fixed, self.cap)
        return min(lag, row), lag, chain

    def greedy(self):
        x = np.zeros((self.K, self.F), dtype=np.int8)
        for k in range(self.K):
            c = self.d[k] + (self.z[k] * x[k - 1] if k else 0.0)
            order = np.lexsort((np.arange(self.F), -c))
            pick = [f for f in order[:self.cap] if c[f] > 0]
            x[k, pick] = 1
        return x

    def repair(self, chain):
        x = chain.copy()
        for k in range(self.K):
            on = np.flatnonzero(x[k])
            if len(on) > self.cap:
                c = self.d[k] + (self.z[k] * x[k - 1] if k else 0.0)
                keep = on[np.lexsort((on, -c[on]))[:self.cap]]
                x[k] = 0
                x[k, keep] = 1
        return x

    def _lp_matrix(self):
        K, F = self.K, self.F
        nd, nz = K * F, (K - 1) * F
        rows, cols, vals = [], [], []
        rhs = []
        for k in range(K):
            rows += [k] * F
            cols += range(k * F, (k + 1) * F)
            vals += [1.0] * F
            rhs.append(self.cap)
        r = K
        zi = nd + np.arange(nz)
        cur = np.arange(F, nd)
        prv = np.arange(0, nd - F)
        for other in (cur, prv):
            rr = r + np.arange(nz)
            rows += rr.tolist() + rr.tolist()
            cols += zi.tolist() + other.tolist()
            vals += [1.0] * nz + [-1.0] * nz
            rhs += [0.0] * nz
            r += nz
        if (self.z[1:] < 0).any():
            rr = r + np.arange(nz)
            rows += rr.tolist() * 3
            cols += zi.tolist() + cur.tolist() + prv.tolist()
            vals += [-1.0] * nz + [1.0] * (2 * nz)
            rhs += [1.0] * nz
            r += nz
        A = self._coo((vals, (rows, cols)), shape=(r, nd + nz)).tocsr()
        cost = -np.concatenate([self.d.ravel(), self.z[1:].ravel()])
        return cost, A, np.asarray(rhs)

    def lp_multipliers(self):
        """Capacity duals of the LP relaxation under the current fixings.

        Returns (multipliers, primal d values, LP value) or None when the LP
        cannot be solved.
        """
        try:
            from scipy.optimize import linprog
            from scipy.sparse import coo_matrix
        except ImportError:  # pragma: no cover
            return None
        if not hasattr(self, "_lp"):
            self._coo = coo_matrix
            self._lp = self._lp_matrix()
        cost, A, rhs = self._lp
        nd = self.K * self.F
        lo = np.zeros(len(cost))
        hi = np.ones(len(cost))
        fx = self.fixed.ravel()
        lo[:nd][fx == 1] = 1.0
        hi[:nd][fx == 0] = 0.0
        res = linprog(cost, A_ub=A, b_ub=rhs, bounds=np.column_stack([lo, hi]),
                      method="highs")
        if res.status != 0:
            return None
        lam = np.maximum(0.0, -np.asarray(res.ineqlin.marginals[:self.K]))
        return lam, res.x[:nd].reshape(self.K, self.F), self.offset - float(res.fun)

    def tune_multipliers(self, incumbent_value, iters=60):
        """Subgradient descent on the Lagrangian dual at the root."""
        lam = np.zeros(self.K)
        for k in range(self.K):
            c = np.sort(self.d[k] + np.maximum(self.z[k], 0.0))[::-1]
            if len(c) > self.cap:
                lam[k] = max(c[self.cap], 0.0)
        best_val, best_lam = np.inf, lam.copy()
        theta, stall = 1.0, 0
        candidates = []
        for _ in range(iters):
            val, chain = _lagrangian(self.d, self.z, self.fixed, lam)
            val += self.offset + float(lam.sum()) * self.cap
            if val < best_val - 1e-12:
                best_val, best_lam, stall = val, lam.copy(), 0
            else:
                stall += 1
                if stall >= 5:
                    theta, stall = theta / 2, 0
            candidates.append(self.repair(chain))
            g = self.cap - chain.sum(axis=1)
            if (g >= 0).all() and float(lam @ g) <= 1e-12:
                break
            gap = val - incumbent_value
            if gap <= 1e-12 or theta < 1e-4:
                break
            step = theta * gap / max(float(g @ g), 1.0)
            lam = np.maximum(0.0, lam - step * g)
        self.lam = best_lam
        return candidates

    # phase 1: find the optimal value
    def optimize(self, incumbent):
        self.best_x = incumbent.copy()
        self.best_v = self.value(incumbent)
        order = []
        for k in range(self.K):
            files = np.lexsort((np.arange(self.F), -self.d[k]))
            order.extend((k, int(f)) for f in files)
        self.order = order
        b, lag, chain = self.bound()
        self.aborted = False
        self._dfs1(0, b, chain)
        return not self.aborted

    def _prune_eps(self):
        return 1e-12 * max(1.0, abs(self.best_v))

    def _dfs1(self, pos, b, chain):
        if self.aborted:
            return
        self.nodes += 1
        if self.nodes > self.budget:
            self.aborted = True
            return
        if b <= self.best_v + self._prune_eps():
            return
        if pos == len(self.order):
            v = self.value(self.fixed)
            if v > self.best_v:
                self.best_v, self.best_x = v, self.fixed.copy()
            return
        k, f = self.order[pos]
        preferred = int(chain[k, f])
        if self.ones[k] >= self.cap:
            choices = (0,)
        else:
            choices = (preferred, 1 - preferred)
        for val in choices:
            self._set(k, f, val)
            if val == chain[k, f]:
                self._dfs1(pos + 1, b, chain)
            else:
                nb, lag, nchain = self.bound()
                if self.feasible(nchain) and np.all((self.fixed == -1) | (self.fixed == nchain)):
                    v = self.value(nchain)
                    if v > self.best_v:
                        self.best_v, self.best_x = v, nchain.copy()
                    if lag - v <= self._prune_eps():
                        self._unset(k, f, val)
                        continue
                self._dfs1(pos + 1, nb, nchain)
            self._unset(k, f, val)
            if self.aborted:
                return

    # phase 2: lexicographically smallest plan reaching the optimum
    def lex_smallest(self, target, tol, witness=None):
        """Lexicographically smallest plan with value >= target - tol.

        With a witness plan, variables are decided in lex order: a 0 in the
        witness is kept as is, a 1 is tested for 0 by LP at that node. Any
        fractional LP hands the rest of the work to the plain DFS.
        Returns None if the node budget runs out.
        """
        self.target = target - tol
        self.fixed[:] = -1
        self.ones[:] = 0
        self.found = None
        self.aborted = False
        if witness is None or not hasattr(self, "_lp"):
            self._dfs2()
            return self.found
        w = witness.copy()
        trail = self._propagate()
        if trail is None:
            return None
        for i in range(self.K * self.F):
            k, f = divmod(i, self.F)
            if self.fixed[k, f] != -1:
                continue
            if w[k, f] == 1:
                self.nodes += 1
                if self.nodes > self.budget:
                    self.aborted = True
                    return None
                self._set(k, f, 0)
                step = self._propagate()
                res = self.lp_multipliers() if step is not None else None
                if step is not None and res is not None and res[2] >= self.target:
                    x = (res[1] > 0.5).astype(np.int8)
                    if (np.abs(res[1] - x) < 1e-7).all() and self.value(x) >= self.target:
                        self.lam, w = res[0], x
                        trail.append((k, f))
                        trail.extend(step)
                        continue
                if step is not None and (res is None or res[2] >= self.target):
                    # undecided by LP: exhaustive search from here
                    self._undo(step)
                    self._unset(k, f, 0)
                    self._dfs2()
                    return self.found
                if step is not None:
                    self._undo(step)
                self._unset(k, f, 0)
                val = 1
            else:
                val = 0
            self._set(k, f, val)
            trail.append((k, f))
            step = self._propagate()
            if step is None:  # pragma: no cover - witness keeps this feasible
                self._dfs2()
                return self.found
            trail.extend(step)
        self.found = self.fixed.copy()
        return self.found

    def _propagate(self):
        """Fix every variable whose opposite value cannot reach the target.

        Returns the list of newly fixed cells, or None if the node is infeasible.
        """
        changed = []
        while True:
            if (self.ones > self.cap).any():
                return self._undo(changed)
            full = np.flatnonzero(self.ones == self.cap)
            for k in full:
                free = np.flatnonzero(self.fixed[k] == -1)
                self.fixed[k, free] = 0
                changed.extend((int(k), int(f)) for f in free)
            if self.offset + _row_bound(self.d, self.z, self.fixed, self.cap) < self.target:
                return self._undo(changed)
            base, with0, with1 = _probe(self.d, self.z, self.fixed, self.lam)
            base += self.offset + float(self.lam.sum()) * self.cap
            if base < self.target:
                return self._undo(changed)
            free = self.fixed == -1
            lift = base - self.target
            no0 = free & (with0 < -lift)
            no1 = free & (with1 < -lift)
            if (no0 & no1).any():
                return self._undo(changed)
            if not (no0.any() or no1.any()):
                return changed
            for k, f in zip(*np.nonzero(no0)):
                self._set(k, f, 1)
                changed.append((int(k), int(f)))
            for k, f in zip(*np.nonzero(no1)):
                self._set(k, f, 0)
                changed.append((int(k), int(f)))

    def _undo(self, changed):
        for k, f in reversed(changed):
            self._unset(k, f, int(self.fixed[k, f]))
        return None

    def _dfs2(self):
        self.nodes += 1
        if self.nodes > self.budget:
            self.aborted = True
            return
        changed = self._propagate()
        if changed is None:
            return
        free = np.flatnonzero(self.fixed.ravel() == -1)
        if len(free) == 0:
            if self.value(self.fixed) >= self.target:
                self.found = self.fixed.copy()
        else:
            k, f = divmod(int(free[0]), self.F)
            for val in (0, 1):
                self._set(k, f, val)
                self._dfs2()
                self._unset(k, f, val)
                if self.found is not None or self.aborted:
                    break
        self._undo(changed)

    def _set(self, k, f, val):
        self.fixed[k, f] = val
        self.ones[k] += val

    def _unset(self, k, f, val):
        self.fixed[k, f] = -1
        self.ones[k] -= val


def solve_bnb(inst: IlpInstance, node_budget: int = DEFAULT_NODE_BUDGET,
              use_lp: bool = True) -> Solution:
    """Exact optimum by depth-first branch-and-bound.

    Files that can never pay for themselves (even ignoring capacity) are fixed
    to zero up front. When the node budget runs out, the best incumbent is
    returned with ``certified=False``.
    """
    K, F = inst.K, inst.F
    cap = min(inst.capacity, F)
    decisions = np.zeros((K, F), dtype=np.uint8)
    free = np.flatnonzero(_best_nonzero_chain(inst.d_coef, inst.z_coef) > 0) if cap else []
    if len(free) == 0:
        return _make_solution(inst, decisions, nodes=1)

    search = _Search(inst.d_coef[:, free], inst.z_coef[:, free], min(cap, len(free)),
                     inst.offset, node_budget)
    incumbent = search.greedy()
    lp = search.lp_multipliers() if use_lp else None
    if lp is None:
        candidates = search.tune_multipliers(search.value(incumbent))
    else:
        search.lam, x, _ = lp
        candidates = [search.repair((x > 0.5).astype(np.int8))]
    for cand in candidates:
        if search.value(cand) > search.value(incumbent):
            incumbent = cand
    certified = search.optimize(incumbent)
    best_x, best_v = search.best_x, search.best_v
    if certified:
        lex = search.lex_smallest(best_v, inst.tie_tol(best_v), best_x if use_lp else None)
        if lex is not None:
            best_x = lex
        certified = not search.aborted
    decisions[:, free] = best_x
    return _make_solution(inst, decisions, certified, search.nodes)


def solve_one_slot_greedy(slot_counts, next_plan, previous, params: RevenueParams) -> np.ndarray:
    """One-slot objective with d[tau+1] fixed; unit weights make greedy exact.

    ``slot_counts`` holds the expected requests per file in slot tau, summed
    over users and mini-slots.
    """
    counts = np.asarray(slot_counts, dtype=float)
    prev = np.asarray(previous, dtype=float)
    nxt = np.asarray(next_plan, dtype=float)
    value = (params.c_cl_bs * counts - params.c_plc * (1.0 - prev)
             + params.gamma * params.c_plc * nxt)
    order = np.lexsort((np.arange(len(value)), -value))
    pick = [f for f in order[:params.capacity] if value[f] > 0]
    out = np.zeros(len(value), dtype=np.uint8)
    out[pick] = 1
    return out


def top_by_score(score, capacity: int) -> np.ndarray:
    """Binary vector of the ``capacity`` highest scores, ties by lowest id."""
    score = np.asarray(score, dtype=float)
    out = np.zeros(len(score), dtype=np.uint8)
    out[np.lexsort((np.arange(len(score)), -score))[:capacity]] = 1
    return out
