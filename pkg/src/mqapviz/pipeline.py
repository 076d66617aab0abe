"""End-to-end orchestration: graph -> initial layout -> sub-instances -> fronts -> merged layouts.

Every stage takes its randomness from ``derive_seed(config.seed, <stage>)``, so
running the stages one by one (with intermediate files) reproduces a single
monolithic run.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from ._seeding import derive_seed
from .exceptions import FormatVersionError, ParameterError
from .initial_layout import LayoutParams, build_degree_sampler, fit_initial_layout, load_or_fit
from .instances import build_instance, missing_vertices, sample_seed_vertices
from .io import Layout
from .knn_graph import build_knng, default_leaf_capacity
from .merge import KINDS, InstanceSolution, merge_fronts
from .solver import SolverParams, default_workers, solve_all

log = logging.getLogger(__name__)

MANIFEST_FORMAT = "mqapviz-manifest/1"


@dataclass
class PipelineConfig:
    # inputs / outputs
    input: str | None = None
    input_format: str = "tsv"
    labels: str | None = None
    out_dir: str | None = None
    graph_in: str | None = None
    layout_in: str | None = None
    # knn graph
    k: int = 30
    n_trees: int = 8
    n_iter: int = 5
    leaf_capacity: int | None = None
    # initial layout
    layout_T: int | None = None
    rho0: float = 1.0
    neg_samples: int = 5
    gamma: float = 7.0
    # instances
    p_s: float = 0.3
    k_star: int = 5
    grid_rows: int = 50
    grid_cols: int = 50
    # solver
    pop: int = 32
    gens: int = 200
    crossover_rate: float = 0.9
    mutation_rate: float = 2.0
    ls_budget: int | None = None
    archive_capacity: int = 64
    # evaluation
    eval: bool = False
    eval_k: int = 500
    eval_fractions: tuple = (0.02, 0.05, 0.1, 0.2, 0.5)
    eval_repeats: int = 30
    # execution
    workers: int | None = None
    seed: int = 0

    def validate(self):
        if self.k < 1:
            raise ParameterError("k must be >= 1")
        if self.n_trees < 1:
            raise ParameterError("n_trees must be >= 1")
        if self.n_iter < 0:
            raise ParameterError("n_iter must be >= 0")
        if not 0 < self.p_s <= 1:
            raise ParameterError("p_s must be in (0, 1]")
        if self.k_star < 1:
            raise ParameterError("k_star must be >= 1")
        if self.grid_rows < 1 or self.grid_cols < 1:
            raise ParameterError("grid must have at least one row and column")
        self.layout_params(0).validate()
        self.solver_params().validate()
        if self.input_format not in ("tsv", "raw-f32"):
            raise ParameterError(f"unknown input format {self.input_format!r}")
        return self

    def resolved_workers(self) -> int:
        return default_workers() if self.workers is None else max(1, int(self.workers))

    def layout_params(self, random_state) -> LayoutParams:
        return LayoutParams(self.layout_T, self.rho0, self.neg_samples, self.gamma, random_state)

    def solver_params(self) -> SolverParams:
        return SolverParams(self.pop, self.gens, self.crossover_rate, self.mutation_rate,
                            self.ls_budget, self.archive_capacity,
                            derive_seed(self.seed, "solver"))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["eval_fractions"] = list(self.eval_fractions)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "eval_fractions" in d:
            d["eval_fractions"] = tuple(d["eval_fractions"])
        return cls(**d)


def load_manifest_config(path) -> PipelineConfig:
    with open(path) as fh:
        data = json.load(fh)
    if data.get("format") != MANIFEST_FORMAT:
        raise FormatVersionError(f"{path}: manifest format {data.get('format')!r}, "
                                 f"expected {MANIFEST_FORMAT!r}")
    return PipelineConfig.from_dict(data["config"])


# ---------------------------------------------------------------------------
# stages


def stage_knng(X, cfg: PipelineConfig):
    leaf = cfg.leaf_capacity or default_leaf_capacity(cfg.k)
    return build_knng(X, cfg.n_trees, cfg.k, cfg.n_iter, derive_seed(cfg.seed, "knng"), leaf)


def stage_layout(graph, cfg: PipelineConfig, layout_path=None) -> Layout:
    params = cfg.layout_params(derive_seed(cfg.seed, "layout"))
    if layout_path is None:
        return fit_initial_layout(graph, params)
    return load_or_fit(graph, layout_path, params)


@dataclass
class MqapStageResult:
    solutions: dict
    layouts: dict
    conflicts: dict
    seeds: np.ndarray
    completion_seeds: np.ndarray
    failed: dict = field(default_factory=dict)

    @property
    def n_instances(self) -> int:
        return len(self.solutions)


def _build_and_solve(graph, coords, seeds, cfg, workers):
    instances = [build_instance(graph, coords, int(s), cfg.k_star, cfg.grid_rows, cfg.grid_cols)
                 for s in seeds]
    archives, errors = solve_all(instances, cfg.solver_params(), workers)
    by_seed = {inst.seed: inst for inst in instances}
    solutions = {s: InstanceSolution(by_seed[s], a) for s, a in archives.items()}
    return solutions, errors


def stage_mqap(graph, layout0: Layout, cfg: PipelineConfig) -> MqapStageResult:
    coords = layout0.to_array(graph.n)
    workers = cfg.resolved_workers()
    sampler = build_degree_sampler(graph, derive_seed(cfg.seed, "seeds"))
    seeds = sample_seed_vertices(graph, cfg.p_s, sampler, derive_seed(cfg.seed, "seeds"))
    log.info("solving %d seed instances on %d worker(s)", len(seeds), workers)
    solutions, failed = _build_and_solve(graph, coords, seeds, cfg, workers)

    missing = missing_vertices([s.instance for s in solutions.values()], graph.n)
    log.info("completion pass: %d uncovered vertices", len(missing))
    if len(missing):
        extra, failed2 = _build_and_solve(graph, coords, missing, cfg, workers)
        solutions.update(extra)
        failed.update(failed2)
    still = missing_vertices([s.instance for s in solutions.values()], graph.n)
    if len(still):
        raise RuntimeError(f"{len(still)} vertices remain unallocated after the completion pass")

    layouts, conflicts = {}, {}
    for kind in KINDS:
        layouts[kind], builder = merge_fronts(solutions, kind, graph.n, return_builder=True)
        conflicts[kind] = builder.conflict_count
    return MqapStageResult(solutions, layouts, conflicts, seeds, missing, failed)


# ---------------------------------------------------------------------------
# monolithic run


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage from the config's input files and write all outputs.

    Returns the manifest dictionary (also written to ``<out_dir>/manifest.json``).
    """
    from .evaluation import accuracy_curve
    from .io import load_labels, load_vectors
    from .knn_graph import KnnGraph
    from .merge import emit_all

    cfg.validate()
    if cfg.out_dir is None:
        raise ParameterError("out_dir is required")
    timings = {}

    def timed(name, fn, *args, **kw):
        t0 = time.perf_counter()
        try:
            out = fn(*args, **kw)
        except Exception as exc:
            raise StageError(name, exc) from exc
        timings[name] = round(time.perf_counter() - t0, 3)
        return out

    data = timed("load", load_vectors, cfg.input, cfg.input_format) if cfg.input else None
    labels = timed("labels", load_labels, cfg.labels) if cfg.labels else None
    if cfg.graph_in:
        graph = timed("knng", KnnGraph.read_tsv, cfg.graph_in)
        if data is not None and graph.n != data.n:
            raise StageError("knng", ValueError(
                f"graph has {graph.n} vertices but the dataset has {data.n} rows"))
    else:
        if data is None:
            raise ParameterError("either input or graph_in is required")
        graph = timed("knng", stage_knng, data.vectors, cfg)
    layout0 = timed("layout", stage_layout, graph, cfg, cfg.layout_in)
    result = timed("mqap", stage_mqap, graph, layout0, cfg)

    os.makedirs(cfg.out_dir, exist_ok=True)
    timed("emit", emit_all, result.layouts, cfg.out_dir, labels)

    manifest = {
        "format": MANIFEST_FORMAT,
        "config": cfg.to_dict(),
        "counts": {
            "vertices": graph.n,
            "edges": graph.n_edges,
            "seeds": int(len(result.seeds)),
            "completion_seeds": int(len(result.completion_seeds)),
            "instances": result.n_instances,
            "failed_instances": sorted(int(s) for s in result.failed),
        },
        "conflicts": result.conflicts,
        "timings": timings,
    }
    if cfg.eval:
        if labels is None:
            raise ParameterError("eval requires labels")
        report = timed("eval", accuracy_curve, result.layouts["median"], labels,
                       cfg.eval_fractions, cfg.eval_k, cfg.eval_repeats,
                       derive_seed(cfg.seed, "eval"))
        report.write_tsv(os.path.join(cfg.out_dir, "eval_median.tsv"))
        manifest["eval"] = [dataclasses.asdict(r) | {"accuracies": None} for r in report.rows]
    manifest["timings"] = timings
    with open(os.path.join(cfg.out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    log.info("conflicts per layout: %s", result.conflicts)
    return manifest


class StageError(RuntimeError):
    def __init__(self, stage, exc):
        super().__init__(f"stage '{stage}' failed: {exc}")
        self.stage = stage
