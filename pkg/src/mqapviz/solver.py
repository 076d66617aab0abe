"""Memetic multi-objective solver for mQAP instances.

A single NSGA-II style population: binary tournaments on (rank, crowding),
uniform per-object crossover with nearest-free-cell repair, swap/relocate
mutation and a Pareto local-search walk on every offspring. Every evaluated
state is offered to a bounded Pareto archive, which is the result.
"""
from __future__ import annotations

import logging
import multiprocessing as mp
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from . import _kernels as K
from ._seeding import derive_seed
from .exceptions import ParameterError
from .mqap import DEFAULT_ARCHIVE_CAPACITY, MqapInstance, ParetoArchive, evaluate_costs

log = logging.getLogger(__name__)


@dataclass
class SolverParams:
    population_size: int = 32
    generations: int = 200
    crossover_rate: float = 0.9
    mutation_rate: float = 2.0
    # delta evaluations per offspring per generation; None means 4 * n_objects
    local_search_budget: int | None = None
    archive_capacity: int = DEFAULT_ARCHIVE_CAPACITY
    random_state: int = 0

    def validate(self):
        if self.population_size < 4:
            raise ParameterError("population_size must be >= 4")
        if self.generations < 0:
            raise ParameterError("generations must be >= 0")
        if not 0 <= self.crossover_rate <= 1:
            raise ParameterError("crossover_rate must be in [0, 1]")
        if self.mutation_rate < 0:
            raise ParameterError("mutation_rate must be >= 0")
        if self.local_search_budget is not None and self.local_search_budget < 0:
            raise ParameterError("local_search_budget must be >= 0")
        if self.archive_capacity < 1:
            raise ParameterError("archive_capacity must be >= 1")
        return self

    def budget_for(self, n_objects: int) -> int:
        if self.local_search_budget is None:
            return 4 * n_objects
        return self.local_search_budget

    def to_dict(self):
        return asdict(self)


def snapped_assignment(instance: MqapInstance) -> np.ndarray:
    """Each object on the free cell nearest its initial position, easiest objects first."""
    return K.snap_assignment(instance.p0, instance.grid.as_array())


def init_population(instance: MqapInstance, params: SolverParams | None = None):
    """Snapped individual plus uniformly random injective assignments.

    Returns ``(assignments, costs)`` with one row per individual.
    """
    params = (params or SolverParams()).validate()
    pop = _init_population_seeded(instance, params.population_size, params.random_state)
    costs = np.array([evaluate_costs(instance, ind) for ind in pop])
    return pop, costs


def _init_population_seeded(instance, size, seed):
    return _seeded_init(instance.p0, instance.grid.as_array(), size, np.int64(seed))


@njit(cache=True)
def _seeded_init(p0, grid, size, seed):
    np.random.seed(seed)
    return K.init_population(p0, grid, size)


def _singleton_archive(instance, capacity):
    pos = snapped_assignment(instance)
    arch = ParetoArchive(1, capacity)
    arch.insert(pos, (0.0, 0.0))
    return arch


def solve_instance(instance: MqapInstance, params: SolverParams | None = None,
                   random_state: int | None = None) -> ParetoArchive:
    """Approximate Pareto front of one instance; deterministic for a given seed."""
    params = (params or SolverParams()).validate()
    seed = params.random_state if random_state is None else random_state
    if instance.is_singleton:
        return _singleton_archive(instance, params.archive_capacity)
    p0, f1, dx, grid = instance.kernel_args()
    costs, assignments = K.solve(
        p0, f1, dx, grid, params.population_size, params.generations, params.crossover_rate,
        params.mutation_rate, params.budget_for(instance.n_objects), params.archive_capacity,
        np.int64(seed % (2**32)),
    )
    # archived costs carry delta-update rounding; store exact re-evaluations
    exact = np.array([K.full_cost(a, p0, f1, dx, grid) for a in assignments])
    return ParetoArchive.from_arrays(exact, assignments, params.archive_capacity)


def instance_seed(global_seed: int, vertex: int) -> int:
    return derive_seed(global_seed, "solver", int(vertex))


def _solve_one(instance, params):
    try:
        return instance.seed, solve_instance(instance, params, instance_seed(params.random_state,
                                                                             instance.seed)), None
    except Exception:  # reported per instance; the vertices go to the completion pass
        return instance.seed, None, traceback.format_exc()


def _solve_chunk(instances, params):
    return [_solve_one(inst, params) for inst in instances]


def _warm_up():
    """Compile (or load from cache) the solver kernels once in the parent, so
    spawned workers read the on-disk cache instead of compiling concurrently."""
    from .mqap import GridSpec
    inst = MqapInstance(0, np.arange(2), GridSpec(0.0, 0.0, 1.0, 1.0, 2, 2),
                        np.array([[0.0, 0.25], [0.25, 0.0]]), np.array([[0.0, 0.0], [1.0, 1.0]]))
    solve_instance(inst, SolverParams(population_size=4, generations=1))


def default_workers() -> int:
    env = os.environ.get("MQAPVIZ_WORKERS")
    if env:
        return max(1, int(env))
    return 1


def solve_all(instances, params: SolverParams | None = None, workers: int | None = None):
    """Solve every instance; returns ``({seed: archive}, {seed: error})``.

    Each instance's RNG seed is derived from the global seed and its seed vertex,
    so results do not depend on the worker count or completion order.
    """
    params = (params or SolverParams()).validate()
    workers = default_workers() if workers is None else max(1, int(workers))
    instances = list(instances)
    results = []
    if workers == 1 or len(instances) <= 1:
        results = _solve_chunk(instances, params)
    else:
        _warm_up()
        n_chunks = min(len(instances), workers * 8)
        chunks = [instances[i::n_chunks] for i in range(n_chunks)]
        ctx = mp.get_context("spawn")
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            for part in pool.map(_solve_chunk, chunks, [params] * len(chunks)):
                results.extend(part)
    archives, errors = {}, {}
    for seed, archive, err in results:
        if err is not None:
            log.error("instance for seed %d failed:\n%s", seed, err)
            errors[seed] = err
        else:
            archives[seed] = archive
    return dict(sorted(archives.items())), errors
