"""LP-based branch-and-bound for models with bounded integer variables."""
from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .model import MilpModel, SolveOptions, Solution, Status
from .simplex import Basis, BoundedSimplex, lp_result_to_solution


@dataclass(order=True)
class _Node:
    key: tuple
    id: int = field(compare=False)
    depth: int = field(compare=False)
    bound: float = field(compare=False)
    lb: np.ndarray = field(compare=False, repr=False)
    ub: np.ndarray = field(compare=False, repr=False)
    basis: Optional[Basis] = field(compare=False, default=None, repr=False)


def _relative_gap(bound: float, incumbent: float) -> float:
    if not math.isfinite(incumbent):
        return math.inf
    return max(bound - incumbent, 0.0) / max(1.0, abs(incumbent))


def branch_and_bound(model: MilpModel, opts: Optional[SolveOptions] = None) -> Solution:
    """Solve ``model`` exactly (up to ``opts.rel_gap``).

    Node selection is best-bound with ties going to the deepest node and then
    to the lowest node id, so runs are reproducible.  Branching picks the most
    fractional integer variable, lowest index first on ties.
    """
    opts = opts or SolveOptions()
    t0 = time.monotonic()
    deadline = None if opts.time_limit is None else t0 + opts.time_limit
    lp = BoundedSimplex.from_model(model)
    ints = model.integer_indices
    lb0 = model.lower_bounds()
    ub0 = model.upper_bounds()
    if ints.size:
        if np.any(~np.isfinite(lb0[ints])) or np.any(~np.isfinite(ub0[ints])):
            raise ValueError("branch_and_bound requires bounded integer variables")
        lb0[ints] = np.ceil(lb0[ints] - opts.int_tol)
        ub0[ints] = np.floor(ub0[ints] + opts.int_tol)
        if np.any(lb0[ints] > ub0[ints]):
            return Solution(Status.INFEASIBLE, wall_time=time.monotonic() - t0,
                            message="empty integer domain")
    # internal scores are "larger is better" regardless of model sense
    flip = 1.0 if model.sense == "max" else -1.0

    def score_of(x):
        return flip * model.evaluate(x)

    def key(bound, depth, nid):
        if opts.node_selection == "depth_first":
            return (-depth, nid)
        return (-bound, -depth, nid)

    counter = 0
    heap: List[_Node] = [_Node(key(math.inf, 0, 0), 0, 0, math.inf, lb0, ub0, None)]
    incumbent_x: Optional[np.ndarray] = None
    incumbent = -math.inf
    nodes = 0
    iterations = 0
    limit_status: Optional[Status] = None
    root_unbounded = False

    while heap:
        open_bound = max(n.bound for n in heap) if opts.node_selection != "best_bound" \
            else heap[0].bound
        if incumbent_x is not None and _relative_gap(open_bound, incumbent) <= opts.rel_gap:
            break
        if opts.node_limit is not None and nodes >= opts.node_limit:
            limit_status = Status.NODE_LIMIT
            break
        if deadline is not None and time.monotonic() > deadline:
            limit_status = Status.TIME_LIMIT
            break
        node = heapq.heappop(heap)
        if incumbent_x is not None and _relative_gap(node.bound, incumbent) <= opts.rel_gap:
            continue
        nodes += 1
        res = lp.solve(node.lb, node.ub, basis=node.basis, deadline=deadline)
        iterations += res.iterations
        if res.status == Status.INFEASIBLE:
            continue
        if res.status == Status.UNBOUNDED:
            if node.id == 0:
                root_unbounded = True
                break
            continue
        if res.status == Status.TIME_LIMIT:
            heapq.heappush(heap, node)
            limit_status = Status.TIME_LIMIT
            break
        if res.status != Status.OPTIMAL:
            return Solution(Status.NUMERICAL, wall_time=time.monotonic() - t0, nodes=nodes,
                            message=f"LP failure at node {node.id}: {res.message}")
        x = res.z[: lp.n]
        score = score_of(x)
        if incumbent_x is not None and _relative_gap(score, incumbent) <= opts.rel_gap:
            continue
        j = _pick_branch_var(x, ints, opts)
        if j < 0:
            polished = _polish(lp, model, x, ints, node, res.basis, deadline)
            cand = polished if polished is not None else x.copy()
            cs = score_of(cand)
            if cs > incumbent:
                incumbent, incumbent_x = cs, cand
            continue
        v = x[j]
        down_ub = node.ub.copy()
        down_ub[j] = math.floor(v)
        up_lb = node.lb.copy()
        up_lb[j] = math.ceil(v)
        children = [(node.lb, down_ub), (up_lb, node.ub)]
        if v - math.floor(v) > 0.5:
            children.reverse()
        for clb, cub in children:
            counter += 1
            heapq.heappush(heap, _Node(key(score, node.depth + 1, counter), counter,
                                       node.depth + 1, score, clb, cub, res.basis))

    wall = time.monotonic() - t0
    if root_unbounded:
        return Solution(Status.UNBOUNDED, wall_time=wall, nodes=nodes, iterations=iterations,
                        message="LP relaxation unbounded")
    open_bound = max((n.bound for n in heap), default=-math.inf)
    if incumbent_x is None:
        status = limit_status or Status.INFEASIBLE
        bound = flip * open_bound if heap else math.nan
        return Solution(status, wall_time=wall, nodes=nodes, bound=bound,
                        iterations=iterations)
    # open node keys are parent LP values, hence valid dual bounds
    best_bound = max(open_bound, incumbent)
    gap = _relative_gap(best_bound, incumbent)
    if limit_status is None:
        status = Status.OPTIMAL
    else:
        status = Status.OPTIMAL if gap <= opts.rel_gap else limit_status
    return Solution(status, flip * incumbent, incumbent_x, bound=flip * best_bound, gap=gap,
                    nodes=nodes, wall_time=wall, iterations=iterations)


def _pick_branch_var(x: np.ndarray, ints: np.ndarray, opts: SolveOptions) -> int:
    if ints.size == 0:
        return -1
    vals = x[ints]
    frac = np.abs(vals - np.round(vals))
    mask = frac > opts.int_tol
    if not mask.any():
        return -1
    if opts.branching == "first_fractional":
        return int(ints[np.flatnonzero(mask)[0]])
    dist = np.where(mask, np.minimum(vals - np.floor(vals), np.ceil(vals) - vals), -1.0)
    return int(ints[int(np.argmax(dist))])


def _polish(lp: BoundedSimplex, model: MilpModel, x: np.ndarray, ints: np.ndarray,
            node: _Node, basis: Basis, deadline) -> Optional[np.ndarray]:
    """Re-solve with integers fixed at their rounded values to remove drift."""
    if ints.size == 0:
        return x.copy()
    r = np.round(x[ints])
    if np.all(x[ints] == r):
        return x.copy()
    lb = node.lb.copy()
    ub = node.ub.copy()
    lb[ints] = r
    ub[ints] = r
    res = lp.solve(lb, ub, basis=basis, deadline=deadline)
    if res.status != Status.OPTIMAL:
        return None
    out = res.z[: lp.n].copy()
    out[ints] = r
    return out


def solve(model: MilpModel, opts: Optional[SolveOptions] = None) -> Solution:
    """Dispatch: plain LP when there are no integer variables, else B&B."""
    if model.integer_indices.size == 0:
        t0 = time.monotonic()
        lp = BoundedSimplex.from_model(model)
        deadline = None if opts is None or opts.time_limit is None else t0 + opts.time_limit
        res = lp.solve(deadline=deadline)
        return lp_result_to_solution(model, lp, res, time.monotonic() - t0)
    return branch_and_bound(model, opts)
