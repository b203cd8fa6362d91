import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cacherev.core import (MISSING, CachePlan, DemandEstimate, RequestTrace, RevenueParams,
                           SlotOutcome, average_revenue, cache_hit_ratio,
                           expected_total_revenue, realized_slot_revenue)
from cacherev.errors import (EmptyInputError, InvalidParamsError, InvalidPlanError, ShapeError,
                             TraceIncompleteError, UndefinedMetricError)

P = RevenueParams()


def slot_revenue_oracle(requests, deployed, previous, p):
    """Loop-by-loop revenue of one slot given a flat list of requested ids."""
    total = 0.0
    for f in requests:
        total += p.beta - p.c_bs_ue - (0 if deployed[f] else p.c_cl_bs)
    for f in range(len(deployed)):
        if deployed[f] and not previous[f]:
            total -= p.c_plc
    return total


def test_params_defaults_and_invariants():
    assert (P.beta, P.c_plc, P.c_bs_ue, P.c_cl_bs, P.gamma, P.n, P.K) == (3, 1.5, 0.5, 2, 0.8, 2, 5)
    assert P.capacity == 20 and P.span == 5
    with pytest.raises(InvalidParamsError):
        RevenueParams(c_plc=2.0, c_cl_bs=2.0)
    with pytest.raises(InvalidParamsError):
        RevenueParams(gamma=0.0)
    with pytest.raises(InvalidParamsError):
        RevenueParams(gamma=1.5)
    with pytest.raises(InvalidParamsError):
        RevenueParams(B=0.0)
    assert RevenueParams(gamma=1.0).gamma == 1.0


def test_capacity_floors_bytes_over_file_size():
    assert RevenueParams(S=7.0, B=2.0).capacity == 3
    assert RevenueParams(S=0.0).capacity == 0


def test_empty_slot_with_unchanged_cache_earns_nothing():
    trace = RequestTrace(np.zeros((0, 2), dtype=int), 3)
    out = realized_slot_revenue(trace, 0, [1, 0, 0], [1, 0, 0], P.replace(n=1))
    assert out == SlotOutcome(0.0, 0, 0, 0)


def test_single_hit_with_placement():
    trace = RequestTrace([[0]], 2)
    out = realized_slot_revenue(trace, 0, [1, 0], [0, 0], P.replace(n=1))
    assert out.realized_revenue == pytest.approx(1.0, abs=1e-9)
    assert (out.hits, out.misses, out.placements) == (1, 0, 1)


def test_single_miss_without_cache():
    trace = RequestTrace([[0]], 2)
    out = realized_slot_revenue(trace, 0, [0, 0], [0, 0], P.replace(n=1))
    assert out.realized_revenue == pytest.approx(0.5, abs=1e-9)
    assert (out.hits, out.misses, out.placements) == (0, 1, 0)


def test_missing_minislot_and_capacity_errors():
    trace = RequestTrace([[0, MISSING]], 2)
    with pytest.raises(TraceIncompleteError):
        realized_slot_revenue(trace, 0, [0, 0], [0, 0], P.replace(n=2))
    with pytest.raises(TraceIncompleteError):
        realized_slot_revenue(trace, 3, [0, 0], [0, 0], P.replace(n=1))
    with pytest.raises(InvalidPlanError):
        realized_slot_revenue(RequestTrace([[0]], 2), 0, [1, 1], [0, 0], P.replace(n=1, S=1))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_realized_revenue_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    U, F, n = rng.integers(1, 4), rng.integers(1, 6), rng.integers(1, 4)
    req = rng.integers(0, F, (U, 3 * n))
    p = P.replace(n=int(n), S=float(F))
    trace = RequestTrace(req, F)
    deployed = rng.integers(0, 2, F)
    previous = rng.integers(0, 2, F)
    slot = int(rng.integers(0, 3))
    out = realized_slot_revenue(trace, slot, deployed, previous, p)
    flat = req[:, slot * n:(slot + 1) * n].ravel()
    assert out.realized_revenue == pytest.approx(
        slot_revenue_oracle(flat, deployed, previous, p), abs=1e-9)
    assert out.hits + out.misses == U * n
    # keeping the previous cache never pays placement
    assert realized_slot_revenue(trace, slot, previous, previous, p).placements == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_flipping_a_hit_to_a_miss_costs_exactly_backhaul(seed):
    rng = np.random.default_rng(seed)
    F = 4
    p = P.replace(n=1, S=float(F))
    f = int(rng.integers(0, F))
    trace = RequestTrace([[f]], F)
    prev = np.ones(F, dtype=int)
    on = np.ones(F, dtype=int)
    off = on.copy()
    off[f] = 0
    a = realized_slot_revenue(trace, 0, on, prev, p).realized_revenue
    b = realized_slot_revenue(trace, 0, off, prev, p).realized_revenue
    assert a - b == pytest.approx(p.c_cl_bs, abs=1e-12)


def test_average_revenue():
    assert average_revenue([SlotOutcome(0.0, 0, 0, 0)]) == 0
    assert average_revenue([SlotOutcome(1.0, 1, 0, 0), SlotOutcome(0.5, 0, 1, 0)]) == 0.75
    assert average_revenue([SlotOutcome(2.5, 1, 0, 0)] * 7) == pytest.approx(2.5)
    with pytest.raises(EmptyInputError):
        average_revenue([])


def test_cache_hit_ratio():
    assert cache_hit_ratio([SlotOutcome(1.0, 4, 0, 0)]) == 1.0
    assert cache_hit_ratio([SlotOutcome(0.0, 2, 1, 0), SlotOutcome(0.0, 1, 0, 0)]) == 0.75
    with pytest.raises(UndefinedMetricError):
        cache_hit_ratio([SlotOutcome(0.0, 0, 0, 0)])


def test_cache_hit_ratio_ignores_currency_scale():
    rng = np.random.default_rng(3)
    req = rng.integers(0, 5, (3, 8))
    trace = RequestTrace(req, 5)
    deployed = np.array([1, 0, 1, 0, 0])
    ratios = []
    for scale in (1.0, 7.5):
        p = RevenueParams(beta=3 * scale, c_plc=1.5 * scale, c_bs_ue=0.5 * scale,
                          c_cl_bs=2 * scale, n=2, S=5)
        outs = [realized_slot_revenue(trace, k, deployed, deployed, p) for k in range(4)]
        ratios.append(cache_hit_ratio(outs))
    assert ratios[0] == ratios[1]


def test_full_library_cache_gives_unit_hit_ratio():
    rng = np.random.default_rng(0)
    trace = RequestTrace(rng.integers(0, 4, (2, 6)), 4)
    p = P.replace(S=4.0)
    outs = [realized_slot_revenue(trace, k, np.ones(4), np.ones(4), p) for k in range(3)]
    assert cache_hit_ratio(outs) == 1.0


def test_expected_revenue_examples():
    p1 = P.replace(K=1, n=1)
    zeros = DemandEstimate(np.zeros((1, 1, 3)))
    assert expected_total_revenue(zeros, CachePlan([[0, 0, 0]], [0, 0, 0]), p1) == 0.0
    one = DemandEstimate(np.array([[[1.0, 0.0]]]))
    assert expected_total_revenue(one, CachePlan([[1, 0]], [0, 0]), p1) == pytest.approx(1.0)
    p2 = P.replace(K=2, n=1, gamma=0.8)
    both = DemandEstimate(np.array([[[1.0, 0.0], [1.0, 0.0]]]))
    plan = CachePlan([[1, 0], [1, 0]], [0, 0])
    assert expected_total_revenue(both, plan, p2) == pytest.approx(3.0, abs=1e-9)


def test_expected_revenue_shape_checks():
    p = P.replace(K=2, n=1)
    with pytest.raises(ShapeError):
        expected_total_revenue(DemandEstimate(np.zeros((1, 3, 2))),
                               CachePlan([[0, 0]] * 2, [0, 0]), p)
    with pytest.raises(ShapeError):
        expected_total_revenue(DemandEstimate(np.zeros((1, 2, 2))), CachePlan([[0, 0]], [0, 0]), p)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_one_hot_expectation_equals_sequential_realized_revenue(seed):
    rng = np.random.default_rng(seed)
    U, F, n, K = rng.integers(1, 4), rng.integers(1, 5), rng.integers(1, 3), rng.integers(1, 4)
    p = P.replace(gamma=1.0, K=int(K), n=int(n), S=float(F))
    req = rng.integers(0, F, (U, n * K))
    trace = RequestTrace(req, F)
    est = DemandEstimate(np.eye(F)[req])
    d = rng.integers(0, 2, (K, F))
    prev = rng.integers(0, 2, F)
    plan = CachePlan(d, prev)
    total, before = 0.0, prev
    for k in range(K):
        total += realized_slot_revenue(trace, k, d[k], before, p).realized_revenue
        before = d[k]
    assert expected_total_revenue(est, plan, p) == pytest.approx(total, abs=1e-9)


def test_frozen_tail_earns_hits_without_placement():
    p = P.replace(K=1, K_tilde=2, n=1, gamma=0.5)
    est = DemandEstimate(np.ones((1, 3, 1)))
    plan = CachePlan([[1]], [0])
    base = 3 - 0.5
    expected = base - 1.5 + 0.5 * base + 0.25 * base
    assert expected_total_revenue(est, plan, p) == pytest.approx(expected)


def test_plan_aux_and_capacity():
    plan = CachePlan([[1, 1, 0], [1, 0, 1]], [1, 0, 0])
    assert plan.aux.tolist() == [[1, 0, 0], [1, 0, 0]]
    assert plan.first.tolist() == [1, 1, 0]
    plan.check_capacity(P.replace(S=2))
    with pytest.raises(InvalidPlanError):
        plan.check_capacity(P.replace(S=1))


def test_trace_roundtrip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(7)
    trace = RequestTrace(rng.integers(0, 9, (3, 11)), 9)
    text = trace.dumps()
    assert text.splitlines()[0] == "users=3 files=9 minislots=11"
    assert text.splitlines()[1] == f"0,0,{trace.requests[0, 0]}"
    back = RequestTrace.loads(text)
    assert back == trace and back.dumps() == text
    path = tmp_path / "t.txt"
    trace.save(path)
    assert RequestTrace.load(path) == trace


def test_trace_rejects_bad_ids_and_is_read_only():
    with pytest.raises(ValueError):
        RequestTrace([[3]], 3)
    trace = RequestTrace([[0, 1]], 2)
    with pytest.raises(ValueError):
        trace.requests[0, 0] = 1


def test_demand_estimate_aggregation_and_dump():
    est = DemandEstimate(np.arange(12, dtype=float).reshape(2, 3, 2) / 100)
    agg = est.aggregate()
    assert np.allclose(agg, est.values.sum(axis=0))
    assert est.dump_csv().splitlines()[0] == "offset,file,expected_count"
    assert est.dump_csv().splitlines()[1] == "0,0,0.06"
    with pytest.raises(ShapeError):
        est.slot_counts(2)
