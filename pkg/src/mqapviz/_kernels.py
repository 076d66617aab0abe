"""Numba kernels shared by the mQAP evaluation code and the memetic solver.

Conventions: ``grid`` is a float64 array ``[x0, y0, sx, sy, rows, cols]``;
``pos[o]`` is the cell of object ``o``; ``owner[c]`` is the object in cell
``c`` or -1. ``xy[o]`` and ``disp[o]`` cache the coordinate of ``pos[o]`` and
its distance to the object's initial position ``p0[o]``.
"""
import numpy as np
from numba import njit

INF = np.inf


@njit(cache=True)
def cell_x(cell, grid):
    return grid[0] + (cell % np.int64(grid[5])) * grid[2]


@njit(cache=True)
def cell_y(cell, grid):
    return grid[1] + (cell // np.int64(grid[5])) * grid[3]


@njit(cache=True)
def n_cells(grid):
    return np.int64(grid[4]) * np.int64(grid[5])


@njit(cache=True)
def fill_state(pos, p0, grid, xy, disp):
    for o in range(pos.shape[0]):
        x = cell_x(pos[o], grid)
        y = cell_y(pos[o], grid)
        xy[o, 0] = x
        xy[o, 1] = y
        disp[o] = np.sqrt((x - p0[o, 0]) ** 2 + (y - p0[o, 1]) ** 2)


@njit(cache=True)
def flow2(d1, d2, dx, dy):
    return 1.0 / (1.0 + 0.25 * (d1 + d2 + dx + dy))


@njit(cache=True)
def pair_cost(xa, ya, da, xb, yb, db, f1ab, dxab):
    d = np.sqrt((xa - xb) ** 2 + (ya - yb) ** 2)
    return d * f1ab, d * flow2(da, db, dxab, d)


@njit(cache=True)
def full_cost(pos, p0, f1, dx, grid):
    n = pos.shape[0]
    xy = np.empty((n, 2))
    disp = np.empty(n)
    fill_state(pos, p0, grid, xy, disp)
    c1 = 0.0
    c2 = 0.0
    for a in range(n):
        for b in range(a + 1, n):
            t1, t2 = pair_cost(xy[a, 0], xy[a, 1], disp[a], xy[b, 0], xy[b, 1], disp[b],
                               f1[a, b], dx[a, b])
            c1 += t1
            c2 += t2
    return c1, c2


@njit(cache=True)
def delta_move(a, cell, pos, owner, xy, disp, p0, f1, dx, grid):
    """Cost change of moving object ``a`` to ``cell``; swaps if the cell is taken."""
    ca = pos[a]
    if cell == ca:
        return 0.0, 0.0
    n = pos.shape[0]
    b = owner[cell]
    nxa = cell_x(cell, grid)
    nya = cell_y(cell, grid)
    nda = np.sqrt((nxa - p0[a, 0]) ** 2 + (nya - p0[a, 1]) ** 2)
    d1 = 0.0
    d2 = 0.0
    if b < 0:
        for q in range(n):
            if q == a:
                continue
            o1, o2 = pair_cost(xy[a, 0], xy[a, 1], disp[a], xy[q, 0], xy[q, 1], disp[q],
                               f1[a, q], dx[a, q])
            n1, n2 = pair_cost(nxa, nya, nda, xy[q, 0], xy[q, 1], disp[q], f1[a, q], dx[a, q])
            d1 += n1 - o1
            d2 += n2 - o2
        return d1, d2
    # swap: b takes a's old cell
    nxb = xy[a, 0]
    nyb = xy[a, 1]
    ndb = np.sqrt((nxb - p0[b, 0]) ** 2 + (nyb - p0[b, 1]) ** 2)
    for q in range(n):
        if q == a or q == b:
            continue
        o1, o2 = pair_cost(xy[a, 0], xy[a, 1], disp[a], xy[q, 0], xy[q, 1], disp[q],
                           f1[a, q], dx[a, q])
        n1, n2 = pair_cost(nxa, nya, nda, xy[q, 0], xy[q, 1], disp[q], f1[a, q], dx[a, q])
        d1 += n1 - o1
        d2 += n2 - o2
        o1, o2 = pair_cost(xy[b, 0], xy[b, 1], disp[b], xy[q, 0], xy[q, 1], disp[q],
                           f1[b, q], dx[b, q])
        n1, n2 = pair_cost(nxb, nyb, ndb, xy[q, 0], xy[q, 1], disp[q], f1[b, q], dx[b, q])
        d1 += n1 - o1
        d2 += n2 - o2
    o1, o2 = pair_cost(xy[a, 0], xy[a, 1], disp[a], xy[b, 0], xy[b, 1], disp[b],
                       f1[a, b], dx[a, b])
    n1, n2 = pair_cost(nxa, nya, nda, nxb, nyb, ndb, f1[a, b], dx[a, b])
    d1 += n1 - o1
    d2 += n2 - o2
    return d1, d2


@njit(cache=True)
def apply_move(a, cell, pos, owner, xy, disp, p0, grid):
    ca = pos[a]
    if cell == ca:
        return
    b = owner[cell]
    if b >= 0:
        pos[b] = ca
        owner[ca] = b
        xy[b, 0] = xy[a, 0]
        xy[b, 1] = xy[a, 1]
        disp[b] = np.sqrt((xy[b, 0] - p0[b, 0]) ** 2 + (xy[b, 1] - p0[b, 1]) ** 2)
    else:
        owner[ca] = -1
    pos[a] = cell
    owner[cell] = a
    xy[a, 0] = cell_x(cell, grid)
    xy[a, 1] = cell_y(cell, grid)
    disp[a] = np.sqrt((xy[a, 0] - p0[a, 0]) ** 2 + (xy[a, 1] - p0[a, 1]) ** 2)


@njit(cache=True)
def set_owner(pos, owner, value):
    for o in range(pos.shape[0]):
        owner[pos[o]] = o if value else -1


# ---------------------------------------------------------------------------
# dominance, archive


@njit(cache=True)
def dominates(u1, u2, v1, v2):
    return u1 <= v1 and u2 <= v2 and (u1 < v1 or u2 < v2)


@njit(cache=True)
def crowding(costs, size):
    """Crowding distance of the first ``size`` rows; boundaries get inf."""
    cd = np.zeros(size)
    if size <= 2:
        cd[:] = INF
        return cd
    for m in range(2):
        other = 1 - m
        # sort by objective m, ties by the other objective, then by index
        key = np.empty(size)
        for i in range(size):
            key[i] = costs[i, other]
        o1 = np.argsort(key, kind="mergesort")
        key2 = np.empty(size)
        for i in range(size):
            key2[i] = costs[o1[i], m]
        o2 = np.argsort(key2, kind="mergesort")
        order = o1[o2]
        lo = costs[order[0], m]
        hi = costs[order[size - 1], m]
        cd[order[0]] = INF
        cd[order[size - 1]] = INF
        span = hi - lo
        if span <= 0:
            continue
        for r in range(1, size - 1):
            cd[order[r]] += (costs[order[r + 1], m] - costs[order[r - 1], m]) / span
    return cd


@njit(cache=True)
def archive_insert(acost, apos, size, cap, c1, c2, pos):
    """Insert into a bounded non-dominated archive held in preallocated arrays.

    ``acost``/``apos`` need ``cap + 1`` rows. Returns ``(kept, new_size)``.
    """
    n = pos.shape[0]
    for i in range(size):
        if dominates(acost[i, 0], acost[i, 1], c1, c2):
            return False, size
        if acost[i, 0] == c1 and acost[i, 1] == c2:
            same = True
            for o in range(n):
                if apos[i, o] != pos[o]:
                    same = False
                    break
            if same:
                return False, size
    w = 0
    for i in range(size):
        if not dominates(c1, c2, acost[i, 0], acost[i, 1]):
            if w != i:
                acost[w, 0] = acost[i, 0]
                acost[w, 1] = acost[i, 1]
                apos[w, :] = apos[i, :]
            w += 1
    acost[w, 0] = c1
    acost[w, 1] = c2
    apos[w, :] = pos
    size = w + 1
    if size <= cap:
        return True, size
    cd = crowding(acost, size)
    drop = 0
    for i in range(1, size):
        if cd[i] < cd[drop]:
            drop = i
    for i in range(drop, size - 1):
        acost[i, 0] = acost[i + 1, 0]
        acost[i, 1] = acost[i + 1, 1]
        apos[i, :] = apos[i + 1, :]
    return drop != size - 1, size - 1


@njit(cache=True)
def nondominated_ranks(costs):
    n = costs.shape[0]
    rank = np.full(n, -1, dtype=np.int64)
    assigned = 0
    r = 0
    front = np.zeros(n, dtype=np.bool_)
    while assigned < n:
        for i in range(n):
            front[i] = False
            if rank[i] >= 0:
                continue
            front[i] = True
            for j in range(n):
                if rank[j] == -1 and dominates(costs[j, 0], costs[j, 1], costs[i, 0], costs[i, 1]):
                    front[i] = False
                    break
        for i in range(n):
            if front[i]:
                rank[i] = r
                assigned += 1
        r += 1
    return rank


@njit(cache=True)
def rank_and_crowd(costs):
    n = costs.shape[0]
    rank = nondominated_ranks(costs)
    cd = np.zeros(n)
    for r in range(rank.max() + 1):
        idx = np.where(rank == r)[0]
        sub = np.empty((idx.shape[0], 2))
        for t in range(idx.shape[0]):
            sub[t, 0] = costs[idx[t], 0]
            sub[t, 1] = costs[idx[t], 1]
        c = crowding(sub, idx.shape[0])
        for t in range(idx.shape[0]):
            cd[idx[t]] = c[t]
    return rank, cd


# ---------------------------------------------------------------------------
# construction and variation


@njit(cache=True)
def nearest_free_cell(x, y, owner, grid):
    """Free cell closest to (x, y); ties resolved by smaller cell index."""
    best = -1
    best_d = INF
    for c in range(owner.shape[0]):
        if owner[c] >= 0:
            continue
        d = (cell_x(c, grid) - x) ** 2 + (cell_y(c, grid) - y) ** 2
        if d < best_d:
            best_d = d
            best = c
    return best


@njit(cache=True)
def snap_assignment(p0, grid):
    """Greedy placement on the cell nearest to each initial position.

    Objects closest to a cell are placed first; each takes the nearest free cell.
    """
    n = p0.shape[0]
    rows = np.int64(grid[4])
    cols = np.int64(grid[5])
    m = rows * cols
    gap = np.empty(n)
    for o in range(n):
        ci = min(max(np.int64(np.rint((p0[o, 0] - grid[0]) / grid[2])), 0), cols - 1)
        ri = min(max(np.int64(np.rint((p0[o, 1] - grid[1]) / grid[3])), 0), rows - 1)
        c = ri * cols + ci
        gap[o] = np.sqrt((cell_x(c, grid) - p0[o, 0]) ** 2 + (cell_y(c, grid) - p0[o, 1]) ** 2)
    order = np.argsort(gap, kind="mergesort")
    owner = np.full(m, -1, dtype=np.int64)
    pos = np.empty(n, dtype=np.int64)
    for t in range(n):
        o = order[t]
        c = nearest_free_cell(p0[o, 0], p0[o, 1], owner, grid)
        pos[o] = c
        owner[c] = o
    return pos


@njit(cache=True)
def random_assignment(n, m):
    return np.random.permutation(m)[:n].astype(np.int64)


@njit(cache=True)
def crossover(pa, pb, owner, grid):
    """Uniform per-object inheritance; displaced objects go to the nearest free
    cell of their inherited cell, in ascending object order. ``owner`` must be
    all -1 on entry and is restored before returning."""
    n = pa.shape[0]
    child = np.empty(n, dtype=np.int64)
    displaced = np.zeros(n, dtype=np.bool_)
    for o in range(n):
        child[o] = pa[o] if np.random.random() < 0.5 else pb[o]
    for o in range(n):
        c = child[o]
        if owner[c] >= 0:
            displaced[o] = True
        else:
            owner[c] = o
    for o in range(n):
        if displaced[o]:
            c = nearest_free_cell(cell_x(child[o], grid), cell_y(child[o], grid), owner, grid)
            child[o] = c
            owner[c] = o
    set_owner(child, owner, False)
    return child


LOCAL_RADIUS = 2


@njit(cache=True)
def random_move(n, pos, grid):
    """Random object and a different target cell: half the time uniform over the
    grid, otherwise within ``LOCAL_RADIUS`` rows/columns of the current cell
    (so pairs can leapfrog across the grid at constant distance)."""
    rows = np.int64(grid[4])
    cols = np.int64(grid[5])
    m = rows * cols
    a = np.random.randint(n)
    if np.random.random() < 0.5:
        r0 = pos[a] // cols
        c0 = pos[a] % cols
        r = min(max(r0 + np.random.randint(-LOCAL_RADIUS, LOCAL_RADIUS + 1), 0), rows - 1)
        c = min(max(c0 + np.random.randint(-LOCAL_RADIUS, LOCAL_RADIUS + 1), 0), cols - 1)
        cell = r * cols + c
        if cell != pos[a]:
            return a, cell
    cell = np.random.randint(m - 1)
    if cell >= pos[a]:
        cell += 1
    return a, cell


@njit(cache=True)
def local_search(pos, owner, xy, disp, cost, budget, p0, f1, dx, grid, acost, apos, asize, cap):
    """Pareto walk: random swap/relocate moves, rejecting any move that leaves
    the individual dominated by its current state. Accepted states are archived."""
    n = pos.shape[0]
    m = owner.shape[0]
    for _ in range(budget):
        a, cell = random_move(n, pos, grid)
        d1, d2 = delta_move(a, cell, pos, owner, xy, disp, p0, f1, dx, grid)
        if d1 >= 0.0 and d2 >= 0.0 and (d1 > 0.0 or d2 > 0.0):
            continue
        apply_move(a, cell, pos, owner, xy, disp, p0, grid)
        cost[0] += d1
        cost[1] += d2
        kept, asize = archive_insert(acost, apos, asize, cap, cost[0], cost[1], pos)
    return asize


@njit(cache=True)
def init_population(p0, grid, pop_size):
    n = p0.shape[0]
    m = n_cells(grid)
    pop = np.empty((pop_size, n), dtype=np.int64)
    pop[0] = snap_assignment(p0, grid)
    for i in range(1, pop_size):
        pop[i] = random_assignment(n, m)
    return pop


@njit(cache=True)
def _tournament(rank, cd):
    i = np.random.randint(rank.shape[0])
    j = np.random.randint(rank.shape[0])
    if rank[i] < rank[j]:
        return i
    if rank[j] < rank[i]:
        return j
    return i if cd[i] >= cd[j] else j


@njit(cache=True)
def _evaluate_into(ind, owner, xy, disp, cost, p0, f1, dx, grid):
    c1, c2 = full_cost(ind, p0, f1, dx, grid)
    cost[0] = c1
    cost[1] = c2
    fill_state(ind, p0, grid, xy, disp)


@njit(cache=True)
def solve(p0, f1, dx, grid, pop_size, generations, crossover_rate, mutation_rate, ls_budget,
          archive_cap, seed):
    np.random.seed(seed)
    n = p0.shape[0]
    m = n_cells(grid)
    owner = np.full(m, -1, dtype=np.int64)
    xy = np.empty((n, 2))
    disp = np.empty(n)
    acost = np.empty((archive_cap + 1, 2))
    apos = np.empty((archive_cap + 1, n), dtype=np.int64)
    asize = 0

    pop = init_population(p0, grid, pop_size)
    pcost = np.empty((pop_size, 2))
    cost = np.empty(2)
    for i in range(pop_size):
        c1, c2 = full_cost(pop[i], p0, f1, dx, grid)
        pcost[i, 0] = c1
        pcost[i, 1] = c2
        kept, asize = archive_insert(acost, apos, asize, archive_cap, c1, c2, pop[i])
    rank, cd = rank_and_crowd(pcost)

    both = np.empty((2 * pop_size, n), dtype=np.int64)
    bcost = np.empty((2 * pop_size, 2))
    for _ in range(generations):
        both[:pop_size] = pop
        bcost[:pop_size] = pcost
        for k in range(pop_size):
            a = _tournament(rank, cd)
            if np.random.random() < crossover_rate:
                b = _tournament(rank, cd)
                child = crossover(pop[a], pop[b], owner, grid)
            else:
                child = pop[a].copy()
            set_owner(child, owner, True)
            fill_state(child, p0, grid, xy, disp)
            for _m in range(np.random.poisson(mutation_rate)):
                mv_a, mv_cell = random_move(n, child, grid)
                apply_move(mv_a, mv_cell, child, owner, xy, disp, p0, grid)
            c1, c2 = full_cost(child, p0, f1, dx, grid)
            cost[0] = c1
            cost[1] = c2
            kept, asize = archive_insert(acost, apos, asize, archive_cap, c1, c2, child)
            if ls_budget > 0:
                asize = local_search(child, owner, xy, disp, cost, ls_budget, p0, f1, dx, grid,
                                     acost, apos, asize, archive_cap)
                # drop accumulated rounding from the delta updates
                c1, c2 = full_cost(child, p0, f1, dx, grid)
                cost[0] = c1
                cost[1] = c2
            set_owner(child, owner, False)
            both[pop_size + k] = child
            bcost[pop_size + k, 0] = cost[0]
            bcost[pop_size + k, 1] = cost[1]
        brank, bcd = rank_and_crowd(bcost)
        key = np.empty(2 * pop_size)
        for i in range(2 * pop_size):
            c = bcd[i]
            frac = 0.5 if c == INF else 0.5 * c / (1.0 + c)
            key[i] = brank[i] - frac
        order = np.argsort(key, kind="mergesort")[:pop_size]
        for i in range(pop_size):
            pop[i] = both[order[i]]
            pcost[i] = bcost[order[i]]
            rank[i] = brank[order[i]]
            cd[i] = bcd[order[i]]
    return acost[:asize].copy(), apos[:asize].copy()
