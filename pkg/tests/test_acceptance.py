"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or directly as
``python3 tests/test_acceptance.py [criterion numbers...]``.
"""
import contextlib
import io
import os
import sys
import tempfile
import time

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cacherev.cli import main as cli_main  # noqa: E402
from cacherev.core import (CachePlan, DemandEstimate, RequestTrace,  # noqa: E402
                           RevenueParams, expected_total_revenue)
from cacherev.estimator import estimate_demand, sample_mixture  # noqa: E402
from cacherev.optimizer import linearize, solve_bnb, solve_bruteforce  # noqa: E402
from cacherev.predictor import (AccuracyProfile, GeniePredictor, NeuralPredictor,  # noqa: E402
                                PredictorConfig, build_accuracy_profile, fedavg_round,
                                init_params, loss_and_grad, make_training_windows,
                                train_federated, validation_slots)
from cacherev.simulator import Scenario, compare_methods, summarize  # noqa: E402
from cacherev.workload import (WorkloadConfig, build_catalog, generate_trace,  # noqa: E402
                               global_popularity, user_profiles)

from oracles import finite_difference_errors, generic_point, replay_centralized_sgd  # noqa: E402

# desk-scale setup shared by criteria 6 and 7
DESK_F, DESK_U, DESK_G, DESK_DAYS = 40, 10, 3, 4
DESK_START = 2 * 107                 # first two days are history
DESK_T = 50
DESK_SEEDS = range(10)
P_GRID = (1.0, 0.9, 0.8)


def random_instance(rng, ties=False):
    F, K = int(rng.integers(1, 6)), int(rng.integers(1, 4))
    U, n = int(rng.integers(1, 3)), int(rng.integers(1, 3))
    c_cl_bs = rng.uniform(0.5, 3.0)
    params = RevenueParams(beta=rng.uniform(2.0, 5.0), c_plc=rng.uniform(0.0, 0.99 * c_cl_bs),
                           c_bs_ue=rng.uniform(0.0, 1.0), c_cl_bs=c_cl_bs,
                           gamma=rng.uniform(0.3, 1.0), K=K, n=n,
                           S=float(rng.integers(0, F + 1)))
    if ties:
        est = np.eye(F)[rng.integers(0, F, (U, n * K))]
    else:
        est = rng.dirichlet(np.ones(F), size=(U, n * K))
    prev = rng.integers(0, 2, F) if rng.random() < 0.5 else np.zeros(F, dtype=int)
    if prev.sum() > params.capacity:
        prev[:] = 0
    return DemandEstimate(est), prev, params


# ------------------------------------------------------------ criteria

def criterion_1():
    rng = np.random.default_rng(2024)
    count, bad, t0 = 300, 0, time.perf_counter()
    for i in range(count):
        est, prev, params = random_instance(rng, ties=i % 2 == 1)
        inst = linearize(est, prev, params)
        a, b = solve_bruteforce(inst), solve_bnb(inst)
        same = (b.certified and abs(a.value - b.value) <= 1e-9
                and np.array_equal(a.plan.decisions, b.plan.decisions))
        bad += not same
    elapsed = time.perf_counter() - t0
    return bad == 0 and elapsed < 60, f"{count} instances, {bad} mismatches, {elapsed:.1f} s"


def criterion_2():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        est, prev, params = random_instance(rng)
        params = params.replace(S=float(est.values.shape[2]), K_tilde=int(rng.integers(0, 2)))
        est = DemandEstimate(rng.dirichlet(np.ones(est.values.shape[2]),
                                           size=(est.values.shape[0], params.n * params.span)))
        plan = CachePlan(rng.integers(0, 2, (params.K, est.values.shape[2])), prev)
        diff = abs(linearize(est, prev, params).evaluate(plan.decisions)
                   - expected_total_revenue(est, plan, params))
        worst = max(worst, diff)
    return worst <= 1e-9, f"100 pairs, max |diff| = {worst:.2e}"


def criterion_3():
    rng = np.random.default_rng(0)
    F, size, worst, fails = 10, 100_000, 0.0, 0
    for _ in range(20):
        p, g = rng.dirichlet(np.ones(F)), rng.dirichlet(np.ones(F))
        a = rng.uniform(0, 1, F)
        freq = sample_mixture(p, g, a, size, rng).mean(axis=0)
        expect = estimate_demand(p[None], a[None], g)[0]
        z = np.abs(freq - expect) / np.sqrt(expect * (1 - expect) / size)
        worst = max(worst, float(z.max()))
        fails += int((z > 3).sum())
    return fails == 0, f"20 triples x {F} files, worst z = {worst:.2f}, {fails} beyond 3 SE"


def criterion_4():
    cfg = PredictorConfig(N=4, horizon=2, embed_dim=8, num_layers=2, num_heads=2, ff_dim=16)
    F = 6
    params = generic_point(cfg, F, seed=11)
    rng = np.random.default_rng(12)
    x = np.eye(F)[rng.integers(0, F, (3, cfg.N))]
    y = rng.integers(0, F, (3, cfg.horizon))
    _, grads = loss_and_grad(params, x, y)
    worst = finite_difference_errors(params, x, y, grads)
    name = max(worst, key=worst.get)
    return max(worst.values()) < 1e-4, \
        f"{len(worst)} tensors, max rel err {worst[name]:.2e} ({name})"


def criterion_5():
    cfg = PredictorConfig(N=4, horizon=2, embed_dim=8, num_layers=2, num_heads=2, ff_dim=16,
                          eta=0.1, kappa=5, batch_size=4, seed=5)
    F = 6
    trace = RequestTrace(np.random.default_rng(3).integers(0, F, (1, 60)), F)
    ds = make_training_windows(trace, 0, cfg.N, cfg.horizon, 2)
    rng = np.random.Generator(np.random.Philox(cfg.seed))
    theta = init_params(cfg, F, rng)
    worst = 0.0
    for r in range(1, 11):
        theta = fedavg_round(theta, [ds], cfg.eta, cfg.kappa, cfg.batch_size, rng)
        ref = replay_centralized_sgd(cfg, ds, F, cfg.kappa, r, loss_and_grad)
        worst = max(worst, theta.max_abs_diff(ref))
    final = train_federated(cfg, [ds], F, rounds=10)
    worst = max(worst, final.max_abs_diff(ref))
    return worst <= 1e-12, f"10 rounds, max |diff| over trajectory = {worst:.1e}"


def desk_scenarios(p, seeds=DESK_SEEDS, horizon=14):
    out = []
    for s in seeds:
        cat = build_catalog(DESK_F, DESK_G, seed=s)
        wl = WorkloadConfig(E=DESK_DAYS)
        prof = user_profiles(DESK_U, DESK_G, wl.dirichlet_alpha, s)
        trace = generate_trace(DESK_U, cat, wl, s, prof)
        genie = GeniePredictor(cat, p, seed=s)
        acc = build_accuracy_profile(genie, trace, 0, 2, 1,
                                     validation_slots(DESK_START, 0, 2, horizon),
                                     start=0, horizon=horizon)
        out.append(Scenario(trace, cat, global_popularity(cat, prof), DESK_START, s,
                            genie, acc))
    return out


def criterion_6():
    Ks = (1, 2, 3, 5, 7)
    ok, parts = True, []
    for p in P_GRID:
        scs = desk_scenarios(p)
        means = [summarize(compare_methods(scs, ["Proposed"], [RevenueParams(S=10, K=K)],
                                           DESK_T))[0][2] for K in Ks]
        mono = all(b >= a for a, b in zip(means, means[1:]))
        sat = (means[4] - means[3]) < (means[2] - means[0])
        ok &= mono and sat
        parts.append(f"p={p}: " + " ".join(f"{m:.3f}" for m in means)
                     + f" monotone={mono} saturating={sat}")
    return ok, "; ".join(parts)


def criterion_7():
    caps = (8, 12, 16)
    grid = [RevenueParams(S=c) for c in caps]
    fixed = ["GroundTruth-Multi", "GroundTruth-OneSlot", "Statistics", "LRU", "Random"]
    learned = ["Proposed", "OneSlot", "SimpEst"]
    base = {(m, c): (rev, chr_) for m, c, rev, _, chr_ in
            summarize(compare_methods(desk_scenarios(1.0), fixed, grid, DESK_T))}
    ok, failures = True, []
    for p in P_GRID:
        stats = dict(base)
        stats.update({(m, c): (rev, chr_) for m, c, rev, _, chr_ in
                      summarize(compare_methods(desk_scenarios(p), learned, grid, DESK_T))})
        for c in caps:
            r = {m: stats[(m, c)][0] for m in fixed + learned}
            h = {m: stats[(m, c)][1] for m in fixed + learned}
            checks = {
                "GT-Multi>=GT-OneSlot": r["GroundTruth-Multi"] >= r["GroundTruth-OneSlot"],
                "Proposed>=OneSlot": r["Proposed"] >= r["OneSlot"],
                "Proposed>=SimpEst": r["Proposed"] >= r["SimpEst"],
                "SimpEst>=Random": r["SimpEst"] >= r["Random"],
                "Proposed>Statistics": r["Proposed"] > r["Statistics"],
                "Proposed>LRU": r["Proposed"] > r["LRU"],
                "Proposed>Random": r["Proposed"] > r["Random"],
                "CHR Proposed>=Statistics": h["Proposed"] >= h["Statistics"],
                "CHR Statistics>=Random": h["Statistics"] >= h["Random"],
            }
            for name, held in checks.items():
                if not held:
                    ok = False
                    failures.append(f"p={p},S={c}: {name}")
    detail = f"{len(P_GRID) * len(caps) * 9} orderings checked"
    if failures:
        detail += "; failed " + ", ".join(failures)
    return ok, detail


def criterion_8():
    users = (5, 10, 20)
    means, chrs = [], []
    for U in users:
        scs = []
        for s in range(3):
            cat = build_catalog(DESK_F, DESK_G, seed=s)
            wl = WorkloadConfig(E=3)
            prof = user_profiles(U, DESK_G, wl.dirichlet_alpha, s)
            trace = generate_trace(U, cat, wl, s, prof)
            acc = AccuracyProfile.constant(U, DESK_F, 10, 1.0)
            scs.append(Scenario(trace, cat, global_popularity(cat, prof), DESK_START, s,
                                GeniePredictor(cat, 1.0, seed=s), acc))
        res = compare_methods(scs, ["Proposed"], [RevenueParams(S=float(DESK_F))], DESK_T)
        means.append(float(np.mean([r.average_revenue for r in res])))
        chrs.append(min(r.chr for r in res))
    ok = all(c == 1.0 for c in chrs) and means[0] < means[1] < means[2]
    return ok, ("U=" + "/".join(map(str, users)) + " revenue "
                + " < ".join(f"{m:.3f}" for m in means) + f", min CHR {min(chrs)}")


def criterion_10():
    rng = np.random.default_rng(10)
    bad = 0
    for _ in range(50):
        est, prev, params = random_instance(rng)
        F = est.values.shape[2]
        prev = np.zeros(F, dtype=int)
        vals = [solve_bnb(linearize(est, prev, params.replace(S=float(s)))).value
                for s in range(F + 1)]
        bad += any(b < a - 1e-9 for a, b in zip(vals, vals[1:]))
    cfg_text = ("U = 3\nF = 24\nG = 2\nE = 3\nrounds = 2\nN = 8\nembed_dim = 8\nff_dim = 16\n"
                "cache_size = 0, 6\nK = 2\nT = 4\nseeds = 0, 1\n")
    with tempfile.TemporaryDirectory() as tmp:
        cfg = os.path.join(tmp, "exp.cfg")
        with open(cfg, "w") as fh:
            fh.write(cfg_text)
        blobs = []
        for run in ("a", "b"):
            out = os.path.join(tmp, run)
            with contextlib.redirect_stdout(io.StringIO()):
                code = cli_main(["compare", "--config", cfg, "--out", out])
            if code != 0:
                return False, "compare run failed"
            blobs.append([open(os.path.join(out, f), "rb").read()
                          for f in ("results.csv", "summary.csv")])
    same = blobs[0] == blobs[1]
    return bad == 0 and same, \
        f"50 instances, {bad} monotonicity violations; CSVs byte-identical={same}"


def criterion_9():
    N, F, U, H = 16, 24, 8, 10
    off0, off_last = [], []
    for seed in range(3):
        cat = build_catalog(F, 2, seed=seed)
        wl = WorkloadConfig(E=20)
        trace = generate_trace(U, cat, wl, seed)
        train_stop = 18 * wl.Q
        pc = PredictorConfig(N=N, horizon=H, embed_dim=32, rounds=100, eta=0.15, seed=seed)
        sets = [make_training_windows(trace, u, N, H, 2, 0, train_stop) for u in range(U)]
        model = train_federated(pc, sets, F)
        slots = validation_slots(trace.num_minislots - train_stop, 0, 2, H)
        prof = build_accuracy_profile(NeuralPredictor(model), trace, N, 2, 5, slots,
                                      start=train_stop)
        acc = prof.mean_by_offset()
        off0.append(acc[0])
        off_last.append(acc[-1])
    a0, a9 = float(np.mean(off0)), float(np.mean(off_last))
    return a0 > a9, f"mean top-1 accuracy offset 0 = {a0:.3f}, offset {H - 1} = {a9:.3f}"


CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10}


def evaluate(number):
    t0 = time.perf_counter()
    ok, detail = CRITERIA[number]()
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}  " \
           f"[{time.perf_counter() - t0:.1f} s]"
    return ok, line


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    ok, line = evaluate(number)
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    picks = [int(a) for a in sys.argv[1:]] or sorted(CRITERIA)
    results = [evaluate(n) for n in picks]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
