import os
import time

import numpy as np
import pytest

from mqapviz import _kernels as K
from mqapviz import solver as S
from mqapviz.exceptions import ParameterError
from mqapviz.instances import compute_flows
from mqapviz.mqap import GridSpec, MqapInstance, evaluate_costs, non_dominated_mask
from oracles import all_costs, costs_ordered_halved, pareto_set, random_instance, same_front


@pytest.mark.parametrize("kw", [
    {"population_size": 3}, {"generations": -1}, {"crossover_rate": 1.5},
    {"mutation_rate": -0.1}, {"local_search_budget": -1}, {"archive_capacity": 0},
])
def test_params_validation(kw):
    with pytest.raises(ParameterError):
        S.SolverParams(**kw).validate()


def test_default_budget_is_four_per_object():
    assert S.SolverParams().budget_for(12) == 48
    assert S.SolverParams(local_search_budget=7).budget_for(12) == 7


def test_snapped_individual_on_exact_cells():
    g = GridSpec(0.0, 0.0, 1.0, 1.0, 10, 10)
    cells = np.array([3, 17, 42, 55, 90, 99])
    p0 = g.cell_coords(cells)
    f1, core = compute_flows(p0, 2)
    inst = MqapInstance(0, np.arange(6), g, f1, p0, core, 2)
    assert S.snapped_assignment(inst).tolist() == cells.tolist()
    pop, _ = S.init_population(inst, S.SolverParams(population_size=8))
    assert pop[0].tolist() == cells.tolist()


def test_init_population_injective_and_costed():
    inst = random_instance(25, 3)
    pop, costs = S.init_population(inst, S.SolverParams(population_size=16))
    assert pop.shape == (16, 25)
    for ind, c in zip(pop, costs):
        assert len(np.unique(ind)) == len(ind)
        assert np.allclose(c, evaluate_costs(inst, ind), rtol=1e-12)


def _snapped_vs_random(count=20):
    out = []
    for s in range(count):
        inst = random_instance(20, 100 + s)
        pop, costs = S.init_population(inst, S.SolverParams(population_size=32, random_state=s))
        disp = np.array([np.linalg.norm(inst.grid.cell_coords(ind) - inst.p0, axis=1).sum()
                         for ind in pop])
        out.append((costs[0, 1], np.median(costs[1:, 1]), disp[0], np.median(disp[1:])))
    return np.array(out)


@pytest.mark.xfail(strict=True, reason="c2 divides by the mean of displacements and pair "
                   "distance, so large displacement lowers it; see decisions ledger")
def test_snapped_c2_below_random_median():
    r = _snapped_vs_random()
    assert (r[:, 0] <= r[:, 1]).sum() >= 18


def test_snapped_minimizes_displacement_but_not_c2():
    r = _snapped_vs_random()
    assert np.all(r[:, 2] < r[:, 3])
    assert np.all(r[:, 0] > r[:, 1])


def _two_object_front(inst):
    xy = inst.grid.all_coords()
    m = len(xy)
    a, b = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    mask = a != b
    a, b = a[mask], b[mask]
    d = np.linalg.norm(xy[a] - xy[b], axis=1)
    d1 = np.linalg.norm(xy[a] - inst.p0[0], axis=1)
    d2 = np.linalg.norm(xy[b] - inst.p0[1], axis=1)
    c1 = d * inst.f1[0, 1]
    c2 = d / (1 + (d1 + d2 + inst.dx[0, 1] + d) / 4)
    return pareto_set(np.stack([c1, c2], 1))


def test_two_objects_dominating_optimum_found():
    inst = random_instance(2, 5)
    exact = _two_object_front(inst)
    assert len(exact) == 1  # one assignment dominates all others
    arch = S.solve_instance(inst, S.SolverParams(random_state=0))
    assert same_front(arch.costs, exact)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_micro_exact_front(seed):
    r = np.random.default_rng(seed)
    p0 = r.uniform(0, 3, size=(5, 2))
    g = GridSpec(0.0, 0.0, 1.0, 1.0, 3, 3)
    f1, core = compute_flows(p0, 4)
    inst = MqapInstance(0, np.arange(5), g, f1, p0, core, 4)
    C, _ = all_costs(inst, 9)
    arch = S.solve_instance(inst, S.SolverParams(generations=100, random_state=seed))
    assert same_front(arch.costs, C)


def test_archive_invariants():
    inst = random_instance(30, 11)
    arch = S.solve_instance(inst, S.SolverParams(generations=30, random_state=4))
    assert len(arch) >= 1
    for pos, cost in arch:
        assert len(np.unique(pos)) == len(pos)
        assert np.allclose(cost, costs_ordered_halved(inst, pos), rtol=1e-9, atol=0)
    assert non_dominated_mask(arch.costs).all()


def test_more_generations_never_worse():
    inst = random_instance(15, 8)
    short = S.solve_instance(inst, S.SolverParams(generations=20, random_state=1)).costs
    long = S.solve_instance(inst, S.SolverParams(generations=40, random_state=1)).costs
    tol = 1e-12 * np.abs(short).max()
    for c in long:
        dominated = np.all(short <= c + tol, axis=1) & np.any(short < c - tol, axis=1)
        assert not dominated.any()


def test_local_search_rejects_dominated_moves():
    inst = random_instance(12, 21)
    p0, f1, dx, grid = inst.kernel_args()
    np.random.seed(0)
    pos = K.random_assignment(12, inst.grid.n_cells)
    owner = np.full(inst.grid.n_cells, -1, dtype=np.int64)
    K.set_owner(pos, owner, True)
    xy, disp = np.empty((12, 2)), np.empty(12)
    K.fill_state(pos, p0, grid, xy, disp)
    cost = np.array(K.full_cost(pos, p0, f1, dx, grid))
    acost, apos = np.empty((9, 2)), np.empty((9, 12), dtype=np.int64)
    asize = 0
    accepted = 0
    for _ in range(2000):
        before = np.array(K.full_cost(pos, p0, f1, dx, grid))
        prev_pos = pos.copy()
        asize = K.local_search(pos, owner, xy, disp, cost, 1, p0, f1, dx, grid, acost, apos,
                               asize, 8)
        after = np.array(K.full_cost(pos, p0, f1, dx, grid))
        if not np.array_equal(prev_pos, pos):
            accepted += 1
            d = after - before
            tol = 1e-9 * np.abs(before).max()
            assert not (np.all(d >= -tol) and np.any(d > tol))
        assert np.allclose(cost, after, rtol=1e-9)
    assert accepted > 0


def test_solve_deterministic():
    inst = random_instance(20, 2)
    p = S.SolverParams(generations=20, random_state=9)
    a, b = S.solve_instance(inst, p), S.solve_instance(inst, p)
    assert np.array_equal(a.costs, b.costs) and np.array_equal(a.assignments, b.assignments)


def test_singleton_instances():
    insts = [MqapInstance(v, np.array([v]), GridSpec(0, 0, 1, 1), np.zeros((1, 1)),
                          np.array([[v * 0.1, 3.0]])) for v in range(100)]
    archives, errors = S.solve_all(insts, S.SolverParams(), 1)
    assert not errors and len(archives) == 100
    assert all(len(a) >= 1 for a in archives.values())


def test_failing_instance_reported(monkeypatch, caplog):
    insts = [random_instance(5, s) for s in range(3)]
    insts = [MqapInstance(10 + i, x.objects, x.grid, x.f1, x.p0) for i, x in enumerate(insts)]
    real = S.solve_instance

    def flaky(instance, params=None, random_state=None):
        if instance.seed == 11:
            raise RuntimeError("boom")
        return real(instance, params, random_state)

    monkeypatch.setattr(S, "solve_instance", flaky)
    archives, errors = S.solve_all(insts, S.SolverParams(generations=2), 1)
    assert sorted(archives) == [10, 12]
    assert list(errors) == [11] and "boom" in errors[11]
    assert "seed 11" in caplog.text


def _seeded_instances(count, n):
    out = []
    for s in range(count):
        x = random_instance(n, s)
        out.append(MqapInstance(1000 + s, x.objects, x.grid, x.f1, x.p0))
    return out


def test_worker_count_independent():
    insts = _seeded_instances(6, 12)
    p = S.SolverParams(generations=5, random_state=3)
    one, _ = S.solve_all(insts, p, 1)
    two, _ = S.solve_all(insts, p, 2)
    assert list(one) == list(two)
    for s in one:
        assert np.array_equal(one[s].costs, two[s].costs)
        assert np.array_equal(one[s].assignments, two[s].assignments)


def test_instance_seed_depends_on_vertex():
    assert S.instance_seed(0, 1) != S.instance_seed(0, 2)
    assert S.instance_seed(0, 1) == S.instance_seed(0, 1)


@pytest.mark.skipif((os.cpu_count() or 1) < 8, reason="scaling check needs 8 cores")
def test_eight_worker_scaling():
    insts = _seeded_instances(200, 50)
    p = S.SolverParams(generations=20)
    S.solve_all(insts[:2], p, 8)  # pool and cache warm-up
    t = time.perf_counter()
    S.solve_all(insts, p, 1)
    t1 = time.perf_counter() - t
    t = time.perf_counter()
    S.solve_all(insts, p, 8)
    t8 = time.perf_counter() - t
    assert t8 <= 0.35 * t1
