"""Instance generation, experiment sweeps, and report emission.

Instances follow the random recipe used throughout the experiments:
utility intercepts uniform on [-7, 7], price sensitivities uniform on
[0.001, 0.01] (one shared draw when pairwise rules are present), price
boxes anchored to the single-product optimum bound, five normalized
capacity rows, and pairwise margins r = gamma * U_i with gamma in
[0.2, 0.5].  All draws come from counter-based Philox streams keyed by
(seed, m, T, mode, attempt), so adding cells or instances never perturbs
existing draws and every artifact of a sweep is reproducible from its
config.
"""

from __future__ import annotations

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict
from pathlib import Path
from threading import Lock

import numpy as np
import scipy.special

from . import baselines, bnb, mnl
from .model import (
    CapacityRow,
    PairwiseRule,
    PricingInstance,
    revenue,
    save_instance,
)

MODES = ("U", "C", "CP")
METHODS = ("bisection", "bnb", "gradient", "project_unconstrained", "aggregate")
N_CAPACITY_ROWS = 5
_RESAMPLE_LIMIT = 50

CSV_HEADER = [
    "m", "T", "mode", "instance_index", "instance_seed", "method",
    "revenue", "gap", "wall_time", "nodes", "status", "eps",
]


class GenerationError(RuntimeError):
    """Instance resampling exceeded its retry budget."""


@dataclass
class ExperimentConfig:
    m: list
    T: list
    constraint_mode: str
    instances_per_cell: int
    eps: float
    time_limit: float
    methods: list
    seed: int
    out_dir: str
    workers: int = 1
    gradient_n_starts: int = 8

    def __post_init__(self):
        if not self.m or not self.T:
            raise ValueError("m and T lists must be nonempty")
        if self.constraint_mode not in MODES:
            raise ValueError(f"constraint_mode must be one of {MODES}")
        if self.instances_per_cell <= 0:
            raise ValueError("instances_per_cell must be positive")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.time_limit <= 0:
            raise ValueError("time_limit must be positive")
        unknown = set(self.methods) - set(METHODS)
        if unknown or not self.methods:
            raise ValueError(f"methods must be a nonempty subset of {METHODS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        doc = json.loads(text)
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**doc)


@dataclass
class ResultRecord:
    m: int
    T: int
    mode: str
    instance_index: int
    instance_seed: int
    method: str
    revenue: float
    gap: float
    wall_time: float
    nodes: int | None
    status: str
    eps: float

    def to_row(self) -> list:
        return [
            self.m, self.T, self.mode, self.instance_index, self.instance_seed,
            self.method, repr(self.revenue), repr(self.gap),
            repr(self.wall_time), "" if self.nodes is None else self.nodes,
            self.status, repr(self.eps),
        ]


def theoretical_price_upper_bound(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Single-product optimal-price bound (1 + W(e^{a_max - 1})) / b.

    The unconstrained one-product optimum upper-bounds any multi-product
    optimal price here, since adding substitutes only pushes prices down;
    it anchors the random price boxes.
    """
    a_max = np.max(np.atleast_2d(a), axis=0)
    w = scipy.special.lambertw(np.exp(a_max - 1.0)).real
    return (1.0 + w) / b


def _mode_code(mode: str) -> int:
    return MODES.index(mode)


def generate_instance(m: int, T: int, constraint_mode: str, seed: int) -> PricingInstance:
    """Deterministic random instance; resamples if the polytope is empty."""
    if constraint_mode not in MODES:
        raise ValueError(f"constraint_mode must be one of {MODES}")
    for attempt in range(_RESAMPLE_LIMIT):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence([seed, m, T, _mode_code(constraint_mode), attempt])))
        a = rng.uniform(-7.0, 7.0, (T, m))
        if constraint_mode == "CP":
            b = np.full(m, rng.uniform(0.001, 0.01))
        else:
            b = rng.uniform(0.001, 0.01, m)
        ub = theoretical_price_upper_bound(a, b)
        U = rng.uniform(0.8 * ub, ub)
        L = rng.uniform(np.zeros(m), 0.3 * U)
        if T == 1:
            d = np.array([1.0])
        else:
            d = rng.uniform(0.2, 1.0, T)
            d = d / d.sum()
        capacity = []
        if constraint_mode in ("C", "CP"):
            for _ in range(N_CAPACITY_ROWS):
                alpha = rng.uniform(0.0, 1.0, m)
                alpha = alpha / alpha.sum()
                beta = rng.uniform(float(alpha @ L), 0.5 * float(alpha @ U))
                capacity.append(CapacityRow(alpha=alpha, beta=beta))
        pairwise = []
        if constraint_mode == "CP":
            for i in range(0, m - 1, 2):
                gamma = rng.uniform(0.2, 0.5)
                pairwise.append(PairwiseRule(i, i + 1, float(gamma * U[i])))
        instance = PricingInstance(m=m, T=T, a=a, b=b, d=d, L=L, U=U,
                                   capacity=capacity, pairwise=pairwise, seed=seed)
        if not pairwise and not capacity:
            return instance
        try:
            baselines.feasible_interior_point(instance)
            return instance
        except Exception:
            continue
    raise GenerationError(
        f"could not generate a feasible instance in {_RESAMPLE_LIMIT} attempts "
        f"(m={m}, T={T}, mode={constraint_mode}, seed={seed})")


def _strip_couplings(instance: PricingInstance) -> PricingInstance:
    return PricingInstance(m=instance.m, T=instance.T, a=instance.a, b=instance.b,
                           d=instance.d, L=instance.L, U=instance.U,
                           capacity=(), pairwise=(), seed=instance.seed)


def _derived_seed(config_seed: int, *parts) -> int:
    ss = np.random.SeedSequence([config_seed, *[int(x) for x in parts]])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def run_method(method: str, instance: PricingInstance, eps: float,
               time_limit: float, seed: int = 0, n_starts: int = 8):
    """Run one method; returns (prices, gap, nodes, status)."""
    if method == "bisection":
        sol = mnl.bisection_solve(instance, eps)
        return sol.prices, sol.gap, None, sol.status
    if method == "bnb":
        sol, stats = bnb.solve_bnb(instance, eps, time_limit=time_limit)
        return sol.prices, sol.gap, stats.nodes_explored, sol.status
    if method == "gradient":
        cfg = baselines.LocalSearchConfig(n_starts=n_starts, seed=seed)
        sol = baselines.multistart(instance, cfg)
        return sol.prices, sol.gap, None, sol.status
    if method == "project_unconstrained":
        boxed = _strip_couplings(instance)
        sol, stats = bnb.solve_bnb(boxed, eps, time_limit=time_limit)
        p = baselines.project_prices(instance, sol.prices)
        return p, math.inf, stats.nodes_explored, "feasible_heuristic"
    if method == "aggregate":
        agg = baselines.aggregate_segments(instance)
        sol = mnl.bisection_solve(agg, eps)
        return sol.prices, math.inf, None, "feasible_heuristic"
    raise ValueError(f"unknown method {method!r}")


def _sweep_cells(config: ExperimentConfig):
    for m in config.m:
        for T in config.T:
            for idx in range(config.instances_per_cell):
                yield m, T, idx


def run_sweep(config: ExperimentConfig, save_instances: bool = False):
    """Run every (cell, instance, method) task; persists rows incrementally."""
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "records.csv"
    lock = Lock()
    records = []

    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)

        def emit(record):
            with lock:
                records.append(record)
                writer.writerow(record.to_row())
                fh.flush()

        def run_cell(cell):
            m, T, idx = cell
            inst_seed = _derived_seed(config.seed, m, T, idx)
            instance = generate_instance(m, T, config.constraint_mode, inst_seed)
            if save_instances:
                save_instance(instance,
                              out_dir / f"instance_m{m}_T{T}_{idx}.json")
            for method in config.methods:
                start = time.perf_counter()
                try:
                    prices, gap, nodes, status = run_method(
                        method, instance, config.eps, config.time_limit,
                        seed=_derived_seed(config.seed, m, T, idx, 1),
                        n_starts=config.gradient_n_starts)
                    rev = float(revenue(instance, prices))
                except Exception:
                    emit(ResultRecord(m, T, config.constraint_mode, idx,
                                      inst_seed, method, math.nan, math.nan,
                                      time.perf_counter() - start, None,
                                      "failed", config.eps))
                    continue
                emit(ResultRecord(m, T, config.constraint_mode, idx, inst_seed,
                                  method, rev, gap,
                                  time.perf_counter() - start, nodes, status,
                                  config.eps))

        cells = list(_sweep_cells(config))
        if config.workers > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                list(pool.map(run_cell, cells))
        else:
            for cell in cells:
                run_cell(cell)
    return records


def compare_projection(config: ExperimentConfig):
    """Constrained optimum vs projected unconstrained optimum per instance."""
    if config.constraint_mode != "CP":
        raise ValueError("projection comparison requires constraint_mode='CP'")
    cfg = ExperimentConfig(
        m=config.m, T=config.T, constraint_mode="CP",
        instances_per_cell=config.instances_per_cell, eps=config.eps,
        time_limit=config.time_limit, methods=["bnb", "project_unconstrained"],
        seed=config.seed, out_dir=config.out_dir, workers=config.workers,
        gradient_n_starts=config.gradient_n_starts)
    return run_sweep(cfg)


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow(rec.to_row())


def read_records_csv(path):
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected CSV header in {path}")
        for row in reader:
            records.append(ResultRecord(
                m=int(row["m"]), T=int(row["T"]), mode=row["mode"],
                instance_index=int(row["instance_index"]),
                instance_seed=int(row["instance_seed"]), method=row["method"],
                revenue=float(row["revenue"]), gap=float(row["gap"]),
                wall_time=float(row["wall_time"]),
                nodes=int(row["nodes"]) if row["nodes"] else None,
                status=row["status"], eps=float(row["eps"])))
    return records


def _sorted_records(records):
    return sorted(records, key=lambda r: (r.mode, r.m, r.T, r.method,
                                          r.instance_index))


def emit_report(records, out_dir):
    """Write the records table, per-cell summary, and the three plots."""
    if not records:
        raise ValueError("no records to report")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "logitprice"

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = _sorted_records(records)
    paths = []

    table = out_dir / "records.csv"
    write_records_csv(records, table)
    paths.append(table)

    cells = {}
    for rec in records:
        cells.setdefault((rec.mode, rec.m, rec.T, rec.method), []).append(rec)
    summary = out_dir / "summary.csv"
    with open(summary, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mode", "m", "T", "method", "n", "mean_revenue",
                         "median_revenue", "mean_gap", "mean_time",
                         "median_nodes"])
        for key in sorted(cells):
            rows = cells[key]
            revs = [r.revenue for r in rows if not math.isnan(r.revenue)]
            gaps = [r.gap for r in rows if math.isfinite(r.gap)]
            times = [r.wall_time for r in rows]
            nodes = [r.nodes for r in rows if r.nodes is not None]
            writer.writerow([
                *key, len(rows),
                repr(float(np.mean(revs))) if revs else "",
                repr(float(np.median(revs))) if revs else "",
                repr(float(np.mean(gaps))) if gaps else "",
                repr(float(np.mean(times))),
                repr(float(np.median(nodes))) if nodes else "",
            ])
    paths.append(summary)

    methods = sorted({r.method for r in records})
    t_values = sorted({r.T for r in records})

    def save_fig(fig, name):
        path = out_dir / name
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)

    fig, axes = plt.subplots(1, len(t_values), figsize=(4 * len(t_values), 3.2),
                             squeeze=False, sharey=True)
    for ax, T in zip(axes[0], t_values):
        for method in methods:
            pts = sorted((r.m, r.wall_time) for r in records
                         if r.T == T and r.method == method)
            if pts:
                ms = sorted({p[0] for p in pts})
                mean_t = [float(np.mean([t for mm, t in pts if mm == m_]))
                          for m_ in ms]
                ax.plot(ms, mean_t, marker="o", label=method)
        ax.set_title(f"T={T}")
        ax.set_xlabel("m")
        ax.set_yscale("log")
    axes[0][0].set_ylabel("wall time (s)")
    axes[0][-1].legend(fontsize=7)
    fig.tight_layout()
    save_fig(fig, "time_vs_m.svg")

    fig, ax = plt.subplots(figsize=(5, 3.5))
    for method in methods:
        pts = [(r.m, r.gap) for r in records
               if r.method == method and math.isfinite(r.gap)]
        if pts:
            ms = sorted({p[0] for p in pts})
            mean_g = [float(np.mean([g for mm, g in pts if mm == m_]))
                      for m_ in ms]
            ax.plot(ms, mean_g, marker="o", label=method)
    ax.set_xlabel("m")
    ax.set_ylabel("relative gap")
    ax.legend(fontsize=7)
    fig.tight_layout()
    save_fig(fig, "gap_vs_m.svg")

    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    pts = [(r.nodes, r.wall_time) for r in records
           if r.nodes is not None and r.nodes > 0 and r.wall_time > 0]
    if pts:
        ax.scatter([p[0] for p in pts], [p[1] for p in pts], s=12)
        ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_xlabel("nodes explored")
    ax.set_ylabel("wall time (s)")
    fig.tight_layout()
    save_fig(fig, "nodes_vs_time.svg")

    return paths
