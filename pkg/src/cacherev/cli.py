"""Command-line experiment runner.

Config files are flat ``key = value`` lines; ``#`` starts a comment and
list-valued keys take comma-separated values. Subcommands::

    gen-trace   write the synthetic trace and catalog for one seed
    train       train the federated (and, if needed, centralized) predictor
    accuracy    score a predictor on the validation span
    run         sweep the two-stage method only
    compare     sweep every configured method

Run ``python -m cacherev.cli <subcommand> --help`` for flags. Verbosity is
read from the ``CACHEREV_LOG`` environment variable (e.g. ``INFO``).
"""
from __future__ import annotations

import argparse
import concurrent.futures
import dataclasses
import hashlib
import io
import itertools
import logging
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .core import RequestTrace, RevenueParams, atomic_write_text
from .errors import CacheRevError, ConfigError, InvalidParamsError
from .predictor import (AccuracyProfile, GeniePredictor, NeuralPredictor, PredictorConfig,
                        build_accuracy_profile, load_params, make_training_windows,
                        save_params, train_centralized, train_federated, validation_slots)
from .simulator import LEARNED, METHODS, Scenario, make_policy, run_policy_episode, summarize
from .workload import (Catalog, WorkloadConfig, build_catalog, generate_trace,
                       global_popularity, user_profiles)

log = logging.getLogger("cacherev")

RESULT_COLUMNS = ("method", "seed", "cache_size", "K", "gamma", "c_plc", "tau", "revenue",
                  "hits", "misses", "placements", "certified")
SUMMARY_COLUMNS = ("method", "cache_size", "mean_revenue", "std_revenue", "mean_chr")
SWEEPS = ("cache_size", "K", "gamma", "c_plc", "p_correct")


@dataclass
class ExperimentConfig:
    # workload
    U: int = 50
    F: int = 240
    G: int = 3
    zipf_exponent: float = 1.2
    dirichlet_alpha: float = 0.3
    L: int = 7
    M: int = 5
    b: float = 0.5
    lam: float = 0.5
    Q: int = 107
    E: int = 80
    featdim: int = 8
    # revenue (swept keys hold lists)
    beta: float = 3.0
    c_bs_ue: float = 0.5
    c_cl_bs: float = 2.0
    c_plc: list = field(default_factory=lambda: [1.5])
    gamma: list = field(default_factory=lambda: [0.8])
    K: list = field(default_factory=lambda: [5])
    K_tilde: int = 0
    n: int = 2
    B: float = 1.0
    cache_size: list = field(default_factory=lambda: [0, 40, 80, 120, 160, 200, 240])
    # predictor
    predictor: str = "neural"
    p_correct: list = field(default_factory=lambda: [1.0])
    N: int = 16
    embed_dim: int = 32
    num_layers: int = 2
    num_heads: int = 2
    ff_dim: int = 64
    eta: float = 0.15
    kappa: int = 5
    rounds: int = 500
    batch_size: int = 16
    validation_fraction: float = 0.1
    # run
    methods: list = field(default_factory=lambda: list(METHODS))
    seeds: list = field(default_factory=lambda: [0])
    T: int = 50
    node_budget: int = 10**7

    # ---- derived views
    @property
    def workload(self) -> WorkloadConfig:
        return WorkloadConfig(self.L, self.M, self.b, self.lam, self.Q, self.E,
                              self.zipf_exponent, self.dirichlet_alpha)

    @property
    def max_span(self) -> int:
        return max(self.K) + self.K_tilde

    def predictor_config(self, seed: int) -> PredictorConfig:
        return PredictorConfig(self.N, self.n * self.max_span, self.embed_dim, self.num_layers,
                               self.num_heads, self.ff_dim, self.eta, self.kappa, self.rounds,
                               self.batch_size, seed)

    def revenue_params(self, cache_size, K, gamma, c_plc) -> RevenueParams:
        return RevenueParams(self.beta, c_plc, self.c_bs_ue, self.c_cl_bs, gamma, K,
                             self.K_tilde, self.n, cache_size * self.B, self.B)

    @property
    def train_days(self) -> int:
        return self.E - self.validation_days

    @property
    def validation_days(self) -> int:
        return max(1, int(round(self.validation_fraction * self.E)))

    @property
    def eval_days(self) -> int:
        """Extra days after the E training days that hold the evaluation episode."""
        return math.ceil((self.T * self.n + self.n * self.max_span) / self.Q)

    @property
    def episode_start(self) -> int:
        return self.E * self.Q

    def normalized(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name}={_format_value(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.normalized().encode()).hexdigest()[:16]


# ---------------------------------------------------------------- parsing

_ALIASES = {"lambda": "lam"}
_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_LIST_KEYS = {"c_plc", "gamma", "K", "cache_size", "p_correct", "methods", "seeds"}
_ELEMENT_TYPE = {"c_plc": float, "gamma": float, "K": int, "cache_size": int,
                 "p_correct": float, "methods": str, "seeds": int}


def _format_value(v) -> str:
    if isinstance(v, list):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return format(v, ".9g")
    return str(v)


def _convert(text: str, typ):
    if typ is int:
        value = float(text)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {text!r}")
        return int(value)
    if typ is float:
        return float(text)
    return text


def _check_value(key, value):
    """Single-key range checks; raises ValueError with a short reason."""
    rules = {
        "gamma": lambda v: all(0 < g <= 1 for g in v) or "gamma must lie in (0, 1]",
        "K": lambda v: all(k >= 1 for k in v) or "K must be >= 1",
        "cache_size": lambda v: all(c >= 0 for c in v) or "cache_size must be >= 0",
        "p_correct": lambda v: all(0 <= p <= 1 for p in v) or "p_correct must lie in [0, 1]",
        "c_plc": lambda v: all(c >= 0 for c in v) or "c_plc must be >= 0",
        "methods": lambda v: (bool(v) and all(m in METHODS for m in v))
        or f"methods must be a non-empty subset of {', '.join(METHODS)}",
        "seeds": lambda v: (bool(v) and all(s >= 0 for s in v)) or "seeds must be >= 0",
        "predictor": lambda v: v in ("neural", "genie") or "predictor must be neural or genie",
        "lam": lambda v: 0 < v < 1 or "lambda must lie in (0, 1)",
        "b": lambda v: v > 0 or "b must be positive",
        "B": lambda v: v > 0 or "B must be positive",
        "n": lambda v: v >= 1 or "n must be >= 1",
        "K_tilde": lambda v: v >= 0 or "K_tilde must be >= 0",
        "T": lambda v: v >= 1 or "T must be >= 1",
        "validation_fraction": lambda v: 0 < v < 1 or "validation_fraction must lie in (0, 1)",
    }
    positive = {"U", "F", "G", "L", "M", "Q", "E", "featdim", "N", "embed_dim", "num_heads",
                "ff_dim", "kappa", "batch_size", "node_budget"}
    if key in rules:
        verdict = rules[key](value)
        if verdict is not True:
            raise ValueError(verdict)
    elif key in positive and not value >= 1:
        raise ValueError(f"{key} must be >= 1")
    elif key in ("eta", "zipf_exponent", "dirichlet_alpha") and not value > 0:
        raise ValueError(f"{key} must be positive")


def parse_config_text(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    lines_of = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        key = _ALIASES.get(key, key)
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        try:
            if key in _LIST_KEYS:
                parts = [p.strip() for p in value.split(",") if p.strip()]
                parsed = [_convert(p, _ELEMENT_TYPE[key]) for p in parts]
            else:
                default = _FIELDS[key].default
                parsed = _convert(value, type(default))
            _check_value(key, parsed)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}", lineno) from None
        setattr(cfg, key, parsed)
        lines_of[key] = lineno
    _check_cross(cfg, lines_of)
    return cfg


def _check_cross(cfg: ExperimentConfig, lines_of: dict):
    def fail(msg, *keys):
        known = [lines_of[k] for k in keys if k in lines_of]
        raise ConfigError(msg, max(known) if known else None)

    try:
        cfg.workload
    except InvalidParamsError as exc:
        fail(str(exc), "L", "M", "Q", "E", "b", "lam", "zipf_exponent", "dirichlet_alpha")
    for c in cfg.c_plc:
        if not cfg.c_cl_bs > c:
            fail(f"c_cl_bs ({cfg.c_cl_bs}) must exceed every c_plc (got {c})", "c_cl_bs", "c_plc")
    if cfg.embed_dim % cfg.num_heads:
        fail("embed_dim must be divisible by num_heads", "embed_dim", "num_heads")
    if cfg.G > cfg.F:
        fail("need at least one file per genre", "G", "F")
    if cfg.E < 2:
        fail("need at least 2 days (training plus validation)", "E")


def parse_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


# ---------------------------------------------------------------- stages

@dataclass
class SeedData:
    seed: int
    trace: RequestTrace
    catalog: Catalog
    global_popularity: np.ndarray


def make_seed_data(cfg: ExperimentConfig, seed: int) -> SeedData:
    catalog = build_catalog(cfg.F, cfg.G, cfg.zipf_exponent, cfg.featdim, seed)
    wl = dataclasses.replace(cfg.workload, E=cfg.E + cfg.eval_days)
    profiles = user_profiles(cfg.U, cfg.G, cfg.dirichlet_alpha, seed)
    trace = generate_trace(cfg.U, catalog, wl, seed, profiles)
    gpop = global_popularity(catalog, profiles)
    catalog.global_popularity = gpop
    return SeedData(seed, trace, catalog, gpop)


def load_seed_data(cfg: ExperimentConfig, seed: int, trace_path) -> SeedData:
    """Trace from disk; catalog and global popularity from the same directory if present."""
    trace = RequestTrace.load(trace_path)
    folder = os.path.dirname(os.path.abspath(trace_path))
    cat_path = os.path.join(folder, "catalog.txt")
    catalog = Catalog.load(cat_path) if os.path.exists(cat_path) else None
    gp_path = os.path.join(folder, "global_popularity.csv")
    if os.path.exists(gp_path):
        gpop = np.loadtxt(gp_path, delimiter=",", skiprows=1, usecols=1, ndmin=1)
    else:
        hist = trace.window(0, min(cfg.episode_start, trace.num_minislots)).ravel()
        gpop = np.bincount(hist, minlength=trace.num_files) / max(len(hist), 1)
    if catalog is None:
        catalog = build_catalog(trace.num_files, 1, cfg.zipf_exponent, cfg.featdim, seed)
    catalog.global_popularity = gpop
    return SeedData(seed, trace, catalog, gpop)


def training_sets(cfg: ExperimentConfig, data: SeedData):
    stop = cfg.train_days * cfg.Q
    H = cfg.n * cfg.max_span
    return [make_training_windows(data.trace, u, cfg.N, H, cfg.n, 0, stop)
            for u in range(data.trace.num_users)]


def train_models(cfg: ExperimentConfig, data: SeedData, central: bool):
    sets = training_sets(cfg, data)
    pc = cfg.predictor_config(data.seed)
    log.info("seed %d: federated training, %d rounds", data.seed, pc.rounds)
    fl = train_federated(pc, sets, data.trace.num_files)
    cs = None
    if central:
        log.info("seed %d: centralized training", data.seed)
        cs = train_centralized(pc, sets, data.trace.num_files)
    return fl, cs


def validation_profile(cfg: ExperimentConfig, predictor, data: SeedData) -> AccuracyProfile:
    start = cfg.train_days * cfg.Q
    H = cfg.n * cfg.max_span
    slots = validation_slots(cfg.episode_start - start, 0, cfg.n, H)
    return build_accuracy_profile(predictor, data.trace, cfg.N, cfg.n, cfg.max_span,
                                  max(slots, 1), start=start, horizon=H)


def _cache_path(out_dir, cfg: ExperimentConfig, name: str) -> str:
    keys = ("U", "F", "G", "zipf_exponent", "dirichlet_alpha", "L", "M", "b", "lam", "Q", "E",
            "featdim", "N", "embed_dim", "num_layers", "num_heads", "ff_dim", "eta", "kappa",
            "rounds", "batch_size", "validation_fraction", "n", "K", "K_tilde", "T")
    text = "\n".join(f"{k}={_format_value(getattr(cfg, k))}" for k in keys)
    tag = hashlib.sha256(text.encode()).hexdigest()[:12]
    folder = os.path.join(out_dir, "cache")
    os.makedirs(folder, exist_ok=True)
    return os.path.join(folder, f"{tag}_{name}")


def build_scenarios(cfg: ExperimentConfig, methods, out_dir, trace_path=None,
                    checkpoint=None):
    """One scenario per (seed, p_correct); p_correct only matters for the genie."""
    needs_model = any(m in LEARNED for m in methods)
    scenarios = []
    for seed in cfg.seeds:
        data = (load_seed_data(cfg, seed, trace_path) if trace_path
                else make_seed_data(cfg, seed))
        fl = cs = None
        if needs_model and cfg.predictor == "neural":
            fl_path = checkpoint or _cache_path(out_dir, cfg, f"seed{seed}_fl.crvm")
            cs_path = fl_path + ".central"
            want_central = "C-SGD" in methods
            if os.path.exists(fl_path) and (not want_central or os.path.exists(cs_path)):
                fl = load_params(fl_path)
                cs = load_params(cs_path) if want_central else None
            else:
                fl, cs = train_models(cfg, data, want_central)
                save_params(fl, fl_path)
                if cs is not None:
                    save_params(cs, cs_path)
        ps = cfg.p_correct if (needs_model and cfg.predictor == "genie") else [None]
        for p in ps:
            sc = Scenario(data.trace, data.catalog, data.global_popularity, cfg.episode_start,
                          seed, extra={"p_correct": p})
            if needs_model:
                if cfg.predictor == "genie":
                    sc.predictor = sc.central_predictor = GeniePredictor(data.catalog, p, seed)
                else:
                    sc.predictor = NeuralPredictor(fl)
                    sc.central_predictor = NeuralPredictor(cs) if cs is not None else None
                sc.accuracy = validation_profile(cfg, sc.predictor, data)
                if sc.central_predictor is not None:
                    sc.central_accuracy = (sc.accuracy if cfg.predictor == "genie"
                                           else validation_profile(cfg, sc.central_predictor,
                                                                   data))
            scenarios.append(sc)
    return scenarios


def method_label(cfg: ExperimentConfig, method: str, K, gamma, c_plc, p) -> str:
    tags = []
    if p is not None and method in LEARNED:
        tags.append(f"p={_format_value(float(p))}")
    for name, value, grid in (("K", K, cfg.K), ("gamma", gamma, cfg.gamma),
                              ("c_plc", c_plc, cfg.c_plc)):
        if len(grid) > 1:
            tags.append(f"{name}={_format_value(value)}")
    return method + (f"[{','.join(tags)}]" if tags else "")


def _episode_job(args):
    method, sc, params, T, node_budget, label = args
    policy = make_policy(method, sc, params, node_budget)
    return run_policy_episode(sc.trace, policy, params, T, sc.start, label, sc.seed)


def run_experiment(cfg: ExperimentConfig, out_dir, methods=None, jobs: int = 1,
                   trace_path=None, checkpoint=None):
    """Execute the sweep and write all result files; returns the written paths."""
    methods = list(cfg.methods if methods is None else methods)
    os.makedirs(out_dir, exist_ok=True)
    scenarios = build_scenarios(cfg, methods, out_dir, trace_path, checkpoint)
    tasks = []
    for method in methods:
        for K, gamma, c_plc, cache in itertools.product(cfg.K, cfg.gamma, cfg.c_plc,
                                                        cfg.cache_size):
            params = cfg.revenue_params(cache, K, gamma, c_plc)
            seen = set()
            for sc in scenarios:
                p = sc.extra["p_correct"]
                if method not in LEARNED and (sc.seed in seen):
                    continue  # baselines do not depend on p_correct
                seen.add(sc.seed)
                label = method_label(cfg, method, K, gamma, c_plc, p)
                tasks.append((method, sc, params, cfg.T, cfg.node_budget, label))
    if jobs > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_episode_job, tasks))
    else:
        results = [_episode_job(t) for t in tasks]
    for r in results:
        if r.failed:
            raise CacheRevError(f"{r.method} seed {r.seed}: {r.failed}")
    return emit_results(results, out_dir, cfg)


# ---------------------------------------------------------------- output

def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".9g")
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    return str(x)


def _csv(header, rows, fingerprint) -> str:
    buf = io.StringIO()
    buf.write(f"# config_fingerprint={fingerprint}\n")
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue()


def result_rows(results):
    rows = []
    for r in results:
        p = r.params
        for tau, (out, cert) in enumerate(zip(r.outcomes, r.certified_slots)):
            rows.append((r.method, r.seed, p.capacity, p.K, float(p.gamma), float(p.c_plc), tau,
                         float(out.realized_revenue), out.hits, out.misses, out.placements,
                         bool(cert)))
    return rows


def _plot_tables(results, cfg: ExperimentConfig):
    """x-axis -> (series names, rows of x followed by per-series mean revenue and CHR)."""
    tables = {}
    axes = [("cache_size", lambda p: p.capacity)]
    axes += [(name, getter) for name, getter in (("K", lambda p: p.K),
                                                 ("gamma", lambda p: float(p.gamma)),
                                                 ("c_plc", lambda p: float(p.c_plc)))
             if len(getattr(cfg, name)) > 1]
    for axis, getter in axes:
        cells: dict = {}
        for r in results:
            series = _strip_tag(r.method, axis)
            if axis != "cache_size" and len(cfg.cache_size) > 1:
                series += f"@cache_size={r.params.capacity}"
            cells.setdefault((getter(r.params), series), []).append(r)
        xs = sorted({x for x, _ in cells})
        names = list(dict.fromkeys(s for _, s in cells))
        rows = []
        for x in xs:
            row = [x]
            for s in names:
                rs = cells.get((x, s), [])
                row.append(float(np.mean([q.average_revenue for q in rs])) if rs else math.nan)
                row.append(float(np.mean([q.chr for q in rs])) if rs else math.nan)
            rows.append(row)
        tables[axis] = (names, rows)
    return tables


def _strip_tag(label: str, axis: str) -> str:
    if "[" not in label:
        return label
    base, tags = label[:-1].split("[", 1)
    kept = [t for t in tags.split(",") if not t.startswith(axis + "=")]
    return base + (f"[{','.join(kept)}]" if kept else "")


def emit_results(results, out_dir, cfg: ExperimentConfig | None = None):
    """Write results.csv, summary.csv, summary.txt and plot_<axis>.dat files."""
    if not results:
        raise ValueError("no results to emit")
    os.makedirs(out_dir, exist_ok=True)
    cfg = ExperimentConfig() if cfg is None else cfg
    fp = cfg.fingerprint()
    paths = []

    def write(name, text):
        path = os.path.join(out_dir, name)
        atomic_write_text(path, text)
        paths.append(path)

    write("results.csv", _csv(RESULT_COLUMNS, result_rows(results), fp))
    summary = summarize(results)
    write("summary.csv", _csv(SUMMARY_COLUMNS, summary, fp))
    width = max(len(r[0]) for r in summary)
    lines = [f"# config_fingerprint={fp}",
             f"{'method':<{width}}  cache  mean_revenue  std_revenue  mean_chr"]
    for method, cap, mean, std, chr_ in summary:
        lines.append(f"{method:<{width}}  {cap:>5}  {mean:>12.4f}  {std:>11.4f}  {chr_:>8.4f}")
    write("summary.txt", "\n".join(lines) + "\n")
    for axis, (names, rows) in _plot_tables(results, cfg).items():
        header = [axis] + [f"{s}:{m}" for s in names for m in ("revenue", "chr")]
        body = io.StringIO()
        body.write(f"# config_fingerprint={fp}\n")
        body.write("\t".join(header) + "\n")
        for row in rows:
            body.write("\t".join(_fmt(v) for v in row) + "\n")
        write(f"plot_{axis}.dat", body.getvalue())
    return paths


# ---------------------------------------------------------------- main

def _setup_logging():
    level = os.environ.get("CACHEREV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load_cfg(args) -> ExperimentConfig:
    cfg = parse_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seeds = [args.seed]
    return cfg


def cmd_gen_trace(cfg, args):
    data = make_seed_data(cfg, cfg.seeds[0])
    os.makedirs(args.out, exist_ok=True)
    path = args.trace or os.path.join(args.out, "trace.txt")
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    data.trace.save(path)
    data.catalog.save(os.path.join(folder, "catalog.txt"))
    gp = "file,global_popularity\n" + "".join(
        f"{f},{_fmt(float(v))}\n" for f, v in enumerate(data.global_popularity))
    atomic_write_text(os.path.join(folder, "global_popularity.csv"), gp)
    print(path)


def cmd_train(cfg, args):
    seed = cfg.seeds[0]
    data = load_seed_data(cfg, seed, args.trace) if args.trace else make_seed_data(cfg, seed)
    fl, cs = train_models(cfg, data, central="C-SGD" in cfg.methods)
    os.makedirs(args.out, exist_ok=True)
    path = args.checkpoint or os.path.join(args.out, "model.crvm")
    save_params(fl, path)
    print(path)
    if cs is not None:
        save_params(cs, path + ".central")
        print(path + ".central")


def cmd_accuracy(cfg, args):
    seed = cfg.seeds[0]
    data = load_seed_data(cfg, seed, args.trace) if args.trace else make_seed_data(cfg, seed)
    if cfg.predictor == "genie":
        predictor = GeniePredictor(data.catalog, cfg.p_correct[0], seed)
    else:
        if not args.checkpoint:
            raise CacheRevError("accuracy with the neural predictor needs --checkpoint")
        predictor = NeuralPredictor(load_params(args.checkpoint))
    prof = validation_profile(cfg, predictor, data)
    rows = ["user,file,offset,correct,total"]
    U, F, H = prof.total.shape
    for u in range(U):
        for f in range(F):
            for h in range(H):
                if prof.total[u, f, h]:
                    rows.append(f"{u},{f},{h},{prof.correct[u, f, h]},{prof.total[u, f, h]}")
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "accuracy.csv")
    atomic_write_text(path, "\n".join(rows) + "\n")
    print(path)
    print("mean top-1 accuracy by offset:",
          " ".join(format(float(a), ".4f") for a in prof.mean_by_offset()))


def cmd_run(cfg, args, methods=None):
    paths = run_experiment(cfg, args.out, methods=methods, jobs=args.jobs,
                           trace_path=args.trace, checkpoint=args.checkpoint)
    for p in paths:
        print(p)
    with open(os.path.join(args.out, "summary.txt"), encoding="ascii") as fh:
        sys.stdout.write(fh.read())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cacherev", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"gen-trace": "generate a synthetic trace", "train": "train the predictor",
             "accuracy": "measure validation accuracy", "run": "sweep the two-stage method",
             "compare": "sweep all configured methods"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--seed", type=int, help="run only this seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel episode workers")
        p.add_argument("--trace", help="trace file to load (gen-trace: path to write)")
        p.add_argument("--checkpoint", help="model checkpoint to load or write")
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_cfg(args)
        if args.command == "gen-trace":
            cmd_gen_trace(cfg, args)
        elif args.command == "train":
            cmd_train(cfg, args)
        elif args.command == "accuracy":
            cmd_accuracy(cfg, args)
        elif args.command == "run":
            cmd_run(cfg, args, methods=["Proposed"])
        else:
            cmd_run(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (CacheRevError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
