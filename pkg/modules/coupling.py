"""Joint constructions of a G(n, p) exploration and a binomial branching process.

- coupled_explore: every explored vertex tests n candidates, the unvisited
  ones for real and the rest fictitious, so the exploration tree sits inside
  X(n, p) generation by generation.
- coupled_explore_lower: while fewer than k vertices are reached, each step
  shares n - k of its candidates with an X(n - k, p) step; the component
  C_v is then finished in the same graph.
- truncated_explore / conditional_second_explore: the exploration that stops
  at L reached vertices or at ceil(eps L) boundary vertices, and a second
  exploration run in the graph with the first one's vertices removed.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from modules.bp_engine import BpOutcome, BpParams, BpStatus, default_caps, solve_survival
from modules.errors import ParameterDomainError
from modules.gnp_graph import (ExplorationTree, GnpParams, LazyGnpOracle, NeighbourOracle, UnvisitedPool,
                               explore_component)
from modules.rng_stats import sample_binomial


class Relation(str, Enum):
    TREE_SUBSET_BP = "TreeSubsetBp"
    GRAPH_AT_LEAST_BP = "GraphAtLeastBp"
    BOTH_AT_LEAST_K = "BothAtLeastK"


class StopReason(str, Enum):
    SIZE_CAP = "SizeCap"
    BOUNDARY_CAP = "BoundaryCap"
    EXHAUSTED = "Exhausted"


@dataclass
class JointSample:
    graph_tree: ExplorationTree
    bp_outcome: BpOutcome
    relation: Relation
    k: int
    bp_generation_sizes: Tuple[int, ...]
    graph_size: Optional[int] = None

    @property
    def component_size(self) -> int:
        """|C_v| for the lower coupling, the tree size for the upper one."""
        return self.graph_tree.size if self.graph_size is None else self.graph_size

    def holds(self) -> bool:
        """Check the relation this sample claims."""
        tree_size = self.graph_tree.size
        bp_size = self.bp_outcome.total_size
        if self.relation is Relation.TREE_SUBSET_BP:
            tree_gens = self.graph_tree.generation_sizes
            if len(tree_gens) > len(self.bp_generation_sizes):
                return False
            return tree_size <= bp_size and all(t <= b for t, b in zip(tree_gens, self.bp_generation_sizes))
        if self.relation is Relation.GRAPH_AT_LEAST_BP:
            return self.component_size >= bp_size
        return tree_size >= self.k and bp_size >= self.k and self.component_size >= tree_size

    def as_dict(self) -> dict:
        return {
            "relation": self.relation.value,
            "k": self.k,
            "tree_size": self.graph_tree.size,
            "graph_size": self.component_size,
            "tree_generations": list(self.graph_tree.generation_sizes),
            "bp": self.bp_outcome.as_dict(),
            "bp_generations": list(self.bp_generation_sizes),
            "holds": self.holds(),
        }


def _bp_outcome(generations: List[int], status: BpStatus) -> BpOutcome:
    return BpOutcome(status, sum(generations), max(generations), len(generations) - 1)


def coupled_explore(params: GnpParams, v: int, rng: np.random.Generator,
                    size_cap: Optional[int] = None, width_cap: Optional[int] = None) -> JointSample:
    """Explore C_v and grow X(n, p) from one stream of edge tests.

    Fictitious vertices exist only as a count per generation; each of them
    has Bi(n, p) fictitious children. Caps apply to the branching-process
    side and halt both sides together.
    """
    if size_cap is None or width_cap is None:
        default_size, default_width = default_caps(solve_survival(BpParams(params.n, params.p)))
        size_cap = default_size if size_cap is None else size_cap
        width_cap = default_width if width_cap is None else width_cap

    n, p = params.n, params.p
    pool = UnvisitedPool(n)
    oracle = LazyGnpOracle(params, rng)
    pool.add(v)
    order = [v]
    parent: Dict[int, int] = {}
    tree_generations = [1]
    bp_generations = [1]
    current: List[int] = [v]
    fictitious = 0
    status = BpStatus.EXTINCT
    while True:
        upcoming: List[int] = []
        upcoming_fictitious = 0
        for u in current:
            real_candidates = pool.unvisited_count
            for w in oracle.reveal(u, pool):
                parent[w] = u
                order.append(w)
                upcoming.append(w)
            upcoming_fictitious += sample_binomial(n - real_candidates, p, rng)
        if fictitious:
            upcoming_fictitious += sample_binomial(n * fictitious, p, rng)
        generation = len(upcoming) + upcoming_fictitious
        if generation == 0:
            break
        bp_generations.append(generation)
        if upcoming:
            tree_generations.append(len(upcoming))
        if sum(bp_generations) >= size_cap:
            status = BpStatus.CENSORED_SIZE
            break
        if generation >= width_cap:
            status = BpStatus.CENSORED_WIDTH
            break
        current, fictitious = upcoming, upcoming_fictitious

    tree = ExplorationTree(v, order, parent, tree_generations, complete=status is BpStatus.EXTINCT)
    return JointSample(tree, _bp_outcome(bp_generations, status), Relation.TREE_SUBSET_BP, 0,
                       tuple(bp_generations))


def coupled_explore_lower(params: GnpParams, v: int, k: int, rng: np.random.Generator,
                          graph_cap: Optional[int] = None) -> JointSample:
    """Lock-step T'_v and X(n - k, p) until k vertices are reached, then finish C_v.

    While T'_v has fewer than k vertices the unvisited set has more than
    n - k members. Each step splits them into n - k candidates shared with
    the X(n - k, p) step and the spare rest; the spare pairs are still
    tested, and the neighbours they give belong to C_v but not to T'_v.
    Afterwards every unexplored vertex of C_v is revealed in full, so the
    graph side is |C_v| itself (or at least `graph_cap` when capped).
    """
    n, p = params.n, params.p
    if not 1 <= k < n:
        raise ParameterDomainError(f"k must satisfy 1 <= k < n = {n}, got {k}")
    pool = UnvisitedPool(n)
    pool.add(v)
    order = [v]
    parent: Dict[int, int] = {}
    depth = {v: 0}
    generations = [1]
    queue = deque([v])
    outside: set = set()
    while queue and len(order) < k:
        u = queue.popleft()
        spare = pool.unvisited_count - (n - k)
        for w in pool.draw(sample_binomial(n - k, p, rng), rng):
            parent[w] = u
            order.append(w)
            queue.append(w)
            depth[w] = depth[u] + 1
            if depth[w] == len(generations):
                generations.append(0)
            generations[depth[w]] += 1
        outside.update(pool.sample(sample_binomial(spare, p, rng), rng))

    tree = ExplorationTree(v, order, parent, list(generations), complete=not queue)
    graph_size = _finish_component(params, order, queue, outside.difference(order), rng, graph_cap)
    if len(order) >= k:
        status = BpStatus.CENSORED_SIZE if queue else BpStatus.EXTINCT
        return JointSample(tree, _bp_outcome(generations, status), Relation.BOTH_AT_LEAST_K, k,
                           tuple(generations), graph_size)
    return JointSample(tree, _bp_outcome(generations, BpStatus.EXTINCT), Relation.GRAPH_AT_LEAST_BP, k,
                       tuple(generations), graph_size)


def _finish_component(params: GnpParams, tree_vertices: List[int], unexplored: deque, outside: set,
                      rng: np.random.Generator, graph_cap: Optional[int]) -> int:
    # explored tree vertices have tested every pair to the vertices still outside C_v
    pool = UnvisitedPool(params.n, excluded=tree_vertices)
    for x in outside:
        pool.add(x)
    frontier = deque(list(unexplored) + sorted(outside))
    oracle = LazyGnpOracle(params, rng)
    while frontier and (graph_cap is None or pool.count < graph_cap):
        frontier.extend(oracle.reveal(frontier.popleft(), pool))
    return pool.count


@dataclass
class TruncatedExploration:
    reached: frozenset
    tree: ExplorationTree
    boundary: Tuple[int, ...]
    stopped_by: StopReason
    size_cap: int
    boundary_cap: int
    # neighbours of the partial boundary vertex revealed after the halt
    pending: Tuple[int, ...] = ()

    @property
    def event_a(self) -> bool:
        return self.stopped_by is not StopReason.EXHAUSTED

    def as_dict(self) -> dict:
        return {
            "reached": len(self.reached),
            "boundary": len(self.boundary),
            "stopped_by": self.stopped_by.value,
            "size_cap": self.size_cap,
            "boundary_cap": self.boundary_cap,
            "pending": len(self.pending),
            "generations": list(self.tree.generation_sizes),
        }


def boundary_cap_for(eps: float, L: int) -> int:
    if eps <= 0.0:
        raise ParameterDomainError(f"truncated exploration needs eps > 0, got {eps}")
    if eps * L < 1.0:
        raise ParameterDomainError(f"truncated exploration needs L >= 1/eps = {1.0 / eps:.3f}, got L={L}")
    return math.ceil(eps * L)


def truncated_explore(params: GnpParams, v: int, L: int, rng: np.random.Generator,
                      oracle: Optional[NeighbourOracle] = None) -> TruncatedExploration:
    """Breadth-first exploration halted at L reached or ceil(eps L) boundary vertices.

    Both caps are checked after every revealed neighbour, so a halt can fall
    partway through one vertex's neighbourhood; that vertex then counts as a
    boundary vertex too, which is where the "+1" in |boundary| <= cap + 1
    comes from. The rest of that neighbourhood is already revealed; it is
    kept as `pending` and counts as reached, not as boundary.
    """
    cap = boundary_cap_for(params.eps, L)
    pool = UnvisitedPool(params.n)
    oracle = oracle if oracle is not None else LazyGnpOracle(params, rng)
    pool.add(v)
    order = [v]
    parent: Dict[int, int] = {}
    depth = {v: 0}
    generation_sizes = [1]
    queue = deque([v])
    stopped_by = StopReason.EXHAUSTED
    partial: Optional[int] = None
    pending: Tuple[int, ...] = ()
    if L <= 1:
        stopped_by = StopReason.SIZE_CAP
    while queue and stopped_by is StopReason.EXHAUSTED:
        u = queue.popleft()
        found = oracle.reveal(u, pool)
        for index, w in enumerate(found):
            pool.add(w)
            parent[w] = u
            order.append(w)
            queue.append(w)
            depth[w] = depth[u] + 1
            if depth[w] == len(generation_sizes):
                generation_sizes.append(0)
            generation_sizes[depth[w]] += 1
            if len(order) >= L:
                stopped_by = StopReason.SIZE_CAP
            elif len(queue) >= cap:
                stopped_by = StopReason.BOUNDARY_CAP
            if stopped_by is not StopReason.EXHAUSTED:
                if index < len(found) - 1:
                    partial = u
                    pending = tuple(found[index + 1:])
                break

    if stopped_by is StopReason.EXHAUSTED:
        boundary: Tuple[int, ...] = ()
    else:
        boundary = ((partial,) if partial is not None else ()) + tuple(queue)
    tree = ExplorationTree(v, order, parent, generation_sizes, complete=stopped_by is StopReason.EXHAUSTED)
    logging.debug(f"truncated_explore v={v} L={L}: {stopped_by.value} with {len(order)} reached, "
                  f"{len(boundary)} boundary")
    reached = frozenset(order).union(pending)
    return TruncatedExploration(reached, tree, boundary, stopped_by, L, cap, pending)


@dataclass(frozen=True)
class SecondExploration:
    size: int
    hits_boundary: bool
    complete: bool


def conditional_second_explore(state: TruncatedExploration, w: int, params: GnpParams,
                               rng: np.random.Generator, size_cap: Optional[int] = None) -> SecondExploration:
    """Explore C'_w inside G minus V(C'_v), then test C'_w against the boundary.

    Pairs between C'_w and the boundary or the pending vertices were never
    tested by either exploration, so whether any of them is an edge is one
    Bi(|C'_w| (|B| + |pending|), p) draw being positive. The partial boundary
    vertex is treated the same way, although a lazy reveal has in fact
    decided all of its pairs.
    """
    if w in state.reached:
        raise ParameterDomainError(f"second exploration root {w} lies inside the first exploration")
    pool = UnvisitedPool(params.n, excluded=state.reached)
    tree = explore_component(w, LazyGnpOracle(params, rng), pool, size_cap=size_cap)
    pairs = tree.size * (len(state.boundary) + len(state.pending))
    hits = pairs > 0 and sample_binomial(pairs, params.p, rng) > 0
    return SecondExploration(size=tree.size, hits_boundary=hits, complete=tree.complete)
