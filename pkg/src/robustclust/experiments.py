"""Monte-Carlo comparison of the robust Bayesian clusterer against the baselines.

Every point set is generated from its own seed derived from the master seed
and its coordinates ``(experiment, d, n1, n2, state, rep)``; each method gets a
further child keyed by its position in :data:`METHOD_IDS`. Results therefore
do not depend on the worker count, on task scheduling or on which other
methods are run.
"""
from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import METHODS as BASELINES, BaselineConfig, run_baseline
from .bayes import MAX_EXACT_N, bayes_partition, pseed_fast
from .gaussian import LabelPrior, NiwModel
from .granulometry.posterior import GranularConfig, GranularModel, simulate_image_features
from .partitions import Partition, cost_matrix, enumerate_partitions, natural_cost

__all__ = ["METHOD_IDS", "CSV_COLUMNS", "ExperimentConfig", "Record", "RunResult",
           "run_experiment", "run_gaussian_experiment", "run_granular_experiment",
           "random_expected_error", "write_results_csv", "read_results_csv", "summarize"]

METHOD_IDS = ("ibr",) + BASELINES
CSV_COLUMNS = ("experiment", "d", "n1", "n2", "state_index", "theta", "rep", "method",
               "error", "runtime_ms")
_KIND_CODE = {"gaussian": 1, "granular": 2}
GRANULAR_DIM = 4


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one experiment.

    For ``kind="gaussian"`` every rep draws a fresh state (cluster means and
    covariances), so ``state_index`` equals the rep index and ``states`` is
    ignored. For ``kind="granular"`` the states are the first ``states``
    points of the theta grid and ``reps`` image sets are drawn per state.
    """

    kind: str = "gaussian"
    dims: tuple[int, ...] = (1,)
    sizes: tuple[int, int] = (5, 5)
    states: int = 10
    reps: int = 200
    methods: tuple[str, ...] = METHOD_IDS
    seed: int = 0
    pseed_restarts: int = 10
    baseline_restarts: int = 10
    image_mode: str = "analytic"
    n_grains: int = 1000
    rho_points: int = 500
    theta_points: int = 10
    radius_unit: float = 10.0
    min_radius: float = 8.0
    threads: int = 1
    record_runtime: bool = False

    def __post_init__(self):
        for name in ("dims", "sizes", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.kind not in _KIND_CODE:
            raise ValueError(f"experiment kind must be one of {sorted(_KIND_CODE)}")
        if not self.methods:
            raise ValueError("method list is empty")
        unknown = set(self.methods) - set(METHOD_IDS)
        if unknown:
            raise ValueError(f"unknown methods {sorted(unknown)}; choose from {METHOD_IDS}")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate methods")
        if len(self.sizes) != 2 or min(self.sizes) < 1:
            raise ValueError("sizes must be two positive cluster sizes")
        if self.reps < 1 or self.states < 1 or self.threads < 1:
            raise ValueError("reps, states and threads must be positive")
        if self.kind == "gaussian" and (not self.dims or min(self.dims) < 1):
            raise ValueError("dims must be positive")
        if self.kind == "granular" and not 1 <= self.states <= self.theta_points:
            raise ValueError("granular states must not exceed the theta grid size")
        if self.image_mode not in ("analytic", "rendered"):
            raise ValueError("image_mode must be 'analytic' or 'rendered'")
        if min(self.seed, self.n_grains, self.rho_points, self.theta_points) < 0:
            raise ValueError("seed and grid sizes must be nonnegative")

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def granular_config(self) -> GranularConfig:
        return GranularConfig(n_grains=self.n_grains,
                              theta_grid=tuple(np.linspace(1.75, 2.0, self.theta_points)),
                              rho_grid=tuple(np.linspace(0.45, 0.55, self.rho_points)))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        extra = set(data) - names
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Record:
    experiment: str
    d: int
    n1: int
    n2: int
    state_index: int
    theta: float | None
    rep: int
    method: str
    error: float | None
    runtime_ms: float | None = None
    note: str = ""


@dataclass
class RunResult:
    config: ExperimentConfig
    records: list[Record] = field(default_factory=list)

    @property
    def skipped(self) -> list[Record]:
        return [r for r in self.records if r.error is None]

    def errors(self, method: str, d: int | None = None, state: int | None = None) -> np.ndarray:
        return np.array([r.error for r in self.records
                         if r.method == method and r.error is not None
                         and (d is None or r.d == d) and (state is None or r.state_index == state)])

    def mean_error(self, method: str, d: int | None = None, state: int | None = None) -> float:
        e = self.errors(method, d, state)
        return float(e.mean()) if e.size else float("nan")

    def std_error(self, method: str, d: int | None = None, state: int | None = None) -> float:
        e = self.errors(method, d, state)
        return float(e.std(ddof=1) / np.sqrt(e.size)) if e.size > 1 else float("nan")

    def curve(self, method: str, d: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """``(state_indices, mean errors)`` sorted by state."""
        states = sorted({r.state_index for r in self.records if r.method == method})
        return np.array(states), np.array([self.mean_error(method, d, s) for s in states])


# ---------------------------------------------------------------------------
# tasks

def _task_seed(cfg: ExperimentConfig, d: int, state: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([cfg.seed, _KIND_CODE[cfg.kind], d, cfg.sizes[0],
                                   cfg.sizes[1], state, rep])


def _method_seed(task: np.random.SeedSequence, method: str) -> np.random.SeedSequence:
    return np.random.SeedSequence(task.entropy, spawn_key=(METHOD_IDS.index(method),))


@lru_cache(maxsize=4)
def _granular_model(cfg_key: tuple) -> GranularModel:
    n_grains, theta_points, rho_points = cfg_key
    cfg = ExperimentConfig(kind="granular", n_grains=n_grains, theta_points=theta_points,
                           rho_points=rho_points, states=1)
    return GranularModel(cfg.granular_config())


def _run_methods(cfg: ExperimentConfig, points: np.ndarray, truth: Partition, task_seed,
                 ibr) -> list[tuple[str, float | None, float, str]]:
    out = []
    for method in cfg.methods:
        mseed = _method_seed(task_seed, method)
        t0 = time.perf_counter()
        try:
            if method == "ibr":
                part = ibr(mseed)
            else:
                bcfg = BaselineConfig(method, k=2, restarts=cfg.baseline_restarts, seed=mseed,
                                      sizes=cfg.sizes)
                part = run_baseline(points, bcfg).partition
            err, note = natural_cost(part, truth, 2), ""
        except (ValueError, RuntimeError, np.linalg.LinAlgError) as exc:
            err, note = None, f"{type(exc).__name__}: {exc}"
        out.append((method, err, (time.perf_counter() - t0) * 1e3, note))
    return out


def _gaussian_task(args) -> list[Record]:
    cfg, d, rep = args
    seed = _task_seed(cfg, d, rep, 0)
    model = NiwModel.symmetric(2, d)
    rng = np.random.default_rng(seed)
    points, labels, _ = model.sample(cfg.sizes, rng)
    truth = Partition.from_labels(labels)
    prior = LabelPrior.fixed_sizes(cfg.sizes)

    def ibr(mseed):
        if cfg.n <= MAX_EXACT_N:
            return bayes_partition(points, prior, model).partition
        return pseed_fast(points, prior, model, restarts=cfg.pseed_restarts,
                          seed=mseed).partition

    return _records(cfg, d, rep, None, rep, _run_methods(cfg, points, truth, seed, ibr))


def _granular_task(args) -> list[Record]:
    cfg, state, rep = args
    seed = _task_seed(cfg, GRANULAR_DIM, state, rep)
    model = _granular_model((cfg.n_grains, cfg.theta_points, cfg.rho_points))
    gcfg = model.config
    rng = np.random.default_rng(seed)
    theta = gcfg.theta_grid[state]
    rho = gcfg.rho_grid[int(rng.choice(len(gcfg.rho_grid), p=np.asarray(gcfg.rho_weights)))]
    # class 1 gets sizes[0] images, class 2 sizes[1], in shuffled order
    labels = rng.permutation(np.repeat([1, 2], cfg.sizes))
    render = {"radius_unit": cfg.radius_unit, "min_radius": cfg.min_radius}
    points = np.array([simulate_image_features(gcfg, int(y), rho, theta, rng, cfg.image_mode,
                                               **render).x for y in labels])
    truth = Partition.from_labels(labels)
    prior = LabelPrior.fixed_sizes(cfg.sizes)

    def ibr(mseed):
        return bayes_partition(points, prior, model).partition

    return _records(cfg, GRANULAR_DIM, state, theta, rep,
                    _run_methods(cfg, points, truth, seed, ibr))


def _records(cfg, d, state, theta, rep, results) -> list[Record]:
    return [Record(cfg.kind, d, cfg.sizes[0], cfg.sizes[1], state, theta, rep, method, err,
                   ms if cfg.record_runtime else None, note)
            for method, err, ms, note in results]


def _execute(worker, tasks, threads: int) -> list[Record]:
    if threads == 1:
        chunks = [worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            # map preserves task order whatever the completion order
            chunks = list(pool.map(worker, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    return [rec for chunk in chunks for rec in chunk]


def run_gaussian_experiment(cfg: ExperimentConfig) -> RunResult:
    """Two equal-prior NIW clusters (kappa = d + 2, psi = I, nu = 1, m = 0) per dimension."""
    if cfg.kind != "gaussian":
        raise ValueError("config is not a gaussian experiment")
    tasks = [(cfg, d, rep) for d in cfg.dims for rep in range(cfg.reps)]
    return RunResult(cfg, _execute(_gaussian_task, tasks, cfg.threads))


def run_granular_experiment(cfg: ExperimentConfig) -> RunResult:
    """Image sets at each theta state; IBR marginalizes rho and theta over their grids."""
    if cfg.kind != "granular":
        raise ValueError("config is not a granular experiment")
    tasks = [(cfg, s, rep) for s in range(cfg.states) for rep in range(cfg.reps)]
    return RunResult(cfg, _execute(_granular_task, tasks, cfg.threads))


def run_experiment(cfg: ExperimentConfig) -> RunResult:
    return (run_gaussian_experiment if cfg.kind == "gaussian" else run_granular_experiment)(cfg)


def random_expected_error(sizes: Sequence[int], l: int = 2) -> float:
    """Exact mean natural cost of a uniformly random partition with the given sizes."""
    sizes = tuple(sizes)
    parts = enumerate_partitions(sum(sizes), l, sizes)
    # by symmetry any fixed truth with these sizes gives the same expectation
    return float(cost_matrix(parts, [parts[0]], l).mean())


# ---------------------------------------------------------------------------
# CSV

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_results_csv(result: RunResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in result.records:
            w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])


def read_results_csv(path) -> list[Record]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: header does not match {CSV_COLUMNS}")
        out = []
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append(Record(row["experiment"], int(row["d"]), int(row["n1"]),
                                  int(row["n2"]), int(row["state_index"]),
                                  float(row["theta"]) if row["theta"] else None,
                                  int(row["rep"]), row["method"],
                                  float(row["error"]) if row["error"] else None,
                                  float(row["runtime_ms"]) if row["runtime_ms"] else None))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return out


def summarize(result: RunResult, out_dir) -> dict[str, Path]:
    """Write per-method overall means and per-state curves as CSV.

    Returns the paths written: ``overall`` (method, d, reps, mean_error,
    std_error, skipped) and ``curves`` (method, d, state_index, theta, reps,
    mean_error, std_error).
    """
    if not result.records:
        raise ValueError("no results to summarize")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dims = sorted({r.d for r in result.records})
    methods = [m for m in result.config.methods]
    paths = {"overall": out_dir / "overall.csv", "curves": out_dir / "curves.csv"}
    with open(paths["overall"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "d", "reps", "mean_error", "std_error", "skipped"])
        for d in dims:
            for m in methods:
                e = result.errors(m, d)
                skipped = sum(1 for r in result.records
                              if r.method == m and r.d == d and r.error is None)
                w.writerow([m, d, e.size, _fmt(result.mean_error(m, d)),
                            _fmt(result.std_error(m, d)), skipped])
    thetas = {r.state_index: r.theta for r in result.records}
    with open(paths["curves"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "d", "state_index", "theta", "reps", "mean_error", "std_error"])
        if result.config.kind == "granular":
            for d in dims:
                for m in methods:
                    for s in sorted(thetas):
                        e = result.errors(m, d, s)
                        w.writerow([m, d, s, _fmt(thetas[s]), e.size,
                                    _fmt(result.mean_error(m, d, s)),
                                    _fmt(result.std_error(m, d, s))])
    return paths


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(cfg).items()}
