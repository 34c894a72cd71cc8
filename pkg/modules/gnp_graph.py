"""G(n, p) without adjacency storage: a skipped edge stream, a union-find
census over it, and lazy breadth-first exploration of single components.

Vertices are 0-based ids 0..n-1 throughout; the edge-list export shifts to
1-based ids.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Protocol, Sequence

import numpy as np

from config import Config
from modules import report_writer
from modules.errors import InputError, ParameterDomainError
from modules.rng_stats import geometric_skips, sample_binomial

MAX_EDGE_BATCH = 1 << 18


@dataclass(frozen=True)
class GnpParams:
    n: int
    p: float
    eps: float = field(init=False)
    criticality: float = field(init=False)

    def __post_init__(self):
        if self.n < 1:
            raise ParameterDomainError(f"vertex count must be positive, got {self.n}")
        if not 0.0 <= self.p <= 1.0:
            raise ParameterDomainError(f"p must lie in [0, 1], got {self.p}")
        eps = self.n * self.p - 1.0
        object.__setattr__(self, "eps", eps)
        object.__setattr__(self, "criticality", eps ** 3 * self.n)

    @classmethod
    def from_eps(cls, n: int, eps: float) -> "GnpParams":
        return cls(n, (1.0 + eps) / n)

    def regime(self, floor: Optional[float] = None) -> str:
        """subcritical / window / supercritical by the sign of eps and |eps|^3 n against floor."""
        floor = Config.CRITICALITY_FLOOR if floor is None else floor
        if abs(self.criticality) < floor:
            return "window"
        return "supercritical" if self.eps > 0 else "subcritical"

    def as_dict(self) -> dict:
        return {"n": self.n, "p": self.p, "eps": self.eps, "criticality": self.criticality}


def pair_count(n: int) -> int:
    return n * (n - 1) // 2


def _pairs_before(i: np.ndarray, n: int) -> np.ndarray:
    # number of pairs (a, b), a < b, whose first index is below i
    return i * (2 * n - i - 1) // 2


def pairs_from_index(index: np.ndarray, n: int) -> np.ndarray:
    """Invert the lexicographic numbering of pairs i < j; returns an (m, 2) array."""
    t = np.asarray(index, dtype=np.int64)
    disc = (2 * n - 1) ** 2 - 8 * t
    i = np.floor(((2 * n - 1) - np.sqrt(disc.astype(np.float64))) / 2.0).astype(np.int64)
    i = np.clip(i, 0, max(n - 2, 0))
    for _ in range(2):
        i = np.where(_pairs_before(i + 1, n) <= t, i + 1, i)
        i = np.where(_pairs_before(i, n) > t, i - 1, i)
    j = t - _pairs_before(i, n) + i + 1
    return np.stack([i, j], axis=1)


def sample_gnp_edges(params: GnpParams, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Yield the edges of one G(n, p) sample as (m, 2) batches in lexicographic order.

    Successive present pairs are found by geometric skips over the pair
    numbering, so the cost is O(number of edges) rather than O(n^2).
    """
    total = pair_count(params.n)
    if params.p == 0.0 or total == 0:
        return
    position = -1
    while True:
        remaining = total - position - 1
        if remaining <= 0:
            return
        expected = remaining * params.p
        size = int(min(MAX_EDGE_BATCH, expected + 6.0 * math.sqrt(expected) + 16))
        positions = position + np.cumsum(geometric_skips(params.p, size, rng, cap=total + 1))
        inside = positions[positions < total]
        if inside.size:
            yield pairs_from_index(inside, params.n)
        if inside.size < positions.size:
            return
        position = int(positions[-1])


def write_edge_list(path: str, n: int, edges: Iterable[np.ndarray]) -> int:
    """Write "i j" lines, 1-based, i < j, sorted; returns the edge count."""
    batches = [np.asarray(batch, dtype=np.int64).reshape(-1, 2) for batch in edges]
    merged = np.concatenate(batches) if batches else np.empty((0, 2), dtype=np.int64)
    if merged.size and (merged.min() < 0 or merged.max() >= n):
        raise InputError(f"edge endpoint outside [0, {n})")
    merged = np.sort(merged, axis=1)
    merged = merged[np.lexsort((merged[:, 1], merged[:, 0]))] + 1
    lines = [f"{a} {b}" for a, b in merged.tolist()]
    report_writer.atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))
    logging.info(f"Exported {len(lines)} edges to {path}")
    return len(lines)


class UnionFind:
    """Disjoint sets with path compression and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.components = n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra = self.find(a)
        rb = self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        self.components -= 1
        return True

    def union_pairs(self, pairs: Sequence[Sequence[int]]):
        for a, b in pairs:
            self.union(a, b)

    def component_sizes(self) -> List[int]:
        return [self.size[v] for v, up in enumerate(self.parent) if up == v]


@dataclass(frozen=True)
class Census:
    sizes: tuple
    l1: int
    l2: int

    @classmethod
    def from_sizes(cls, sizes: Iterable[int]) -> "Census":
        ordered = tuple(sorted((int(s) for s in sizes), reverse=True))
        if not ordered or ordered[-1] < 1:
            raise InputError("a census needs at least one component and positive sizes")
        return cls(sizes=ordered, l1=ordered[0], l2=ordered[1] if len(ordered) > 1 else 0)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def count_large(self, L: int) -> int:
        return count_large(self, L)

    def as_dict(self) -> dict:
        return {"n": self.n, "components": len(self.sizes), "l1": self.l1, "l2": self.l2}


def _edge_rows(edges: Iterable) -> Iterator[np.ndarray]:
    for batch in edges:
        yield np.asarray(batch, dtype=np.int64).reshape(-1, 2)


def component_census(n: int, edges: Iterable, forest: Optional[UnionFind] = None) -> Census:
    """Component sizes of the graph on n vertices given by an edge stream.

    `edges` yields (m, 2) arrays or single (i, j) pairs. Passing `forest`
    lets the caller keep the union-find for later membership queries.
    """
    forest = forest if forest is not None else UnionFind(n)
    for rows in _edge_rows(edges):
        if rows.size == 0:
            continue
        if rows.min() < 0 or rows.max() >= n:
            raise InputError(f"edge endpoint outside [0, {n}): min {rows.min()}, max {rows.max()}")
        forest.union_pairs(rows.tolist())
    return Census.from_sizes(forest.component_sizes())


def count_large(census: Census, L: int) -> int:
    """N_[L,n]: vertices in components of size at least L."""
    if L < 1:
        raise ParameterDomainError(f"L must be at least 1, got {L}")
    return sum(s for s in census.sizes if s >= L)


class VisitedSet:
    """Flat bit vector over n vertices."""

    def __init__(self, n: int):
        self.n = n
        self._bits = bytearray((n + 7) // 8)
        self.count = 0

    def __contains__(self, v: int) -> bool:
        return bool(self._bits[v >> 3] & (1 << (v & 7)))

    def add(self, v: int):
        mask = 1 << (v & 7)
        if not self._bits[v >> 3] & mask:
            self._bits[v >> 3] |= mask
            self.count += 1

    @property
    def unvisited_count(self) -> int:
        return self.n - self.count


class UnvisitedPool(VisitedSet):
    """VisitedSet that can also hand out uniformly random unvisited vertices.

    The unvisited vertices occupy positions [0, live) of an implicit array
    that starts as the identity; only displaced positions are stored, so a
    pool that has touched k vertices costs O(k) memory.
    """

    def __init__(self, n: int, excluded: Iterable[int] = ()):
        super().__init__(n)
        self._live = n
        self._slot: Dict[int, int] = {}
        self._where: Dict[int, int] = {}
        for v in excluded:
            self.add(v)

    def _take(self, position: int) -> int:
        last = self._live - 1
        vertex = self._slot.get(position, position)
        moved = self._slot.get(last, last)
        self._slot[position] = moved
        self._where[moved] = position
        self._slot[last] = vertex
        self._where[vertex] = last
        self._live -= 1
        return vertex

    def add(self, v: int):
        if v in self:
            return
        self._take(self._where.get(v, v))
        super().add(v)

    def draw(self, k: int, rng: np.random.Generator) -> List[int]:
        """Remove and return k distinct unvisited vertices chosen uniformly."""
        if k > self._live:
            raise ParameterDomainError(f"cannot draw {k} vertices from {self._live} unvisited")
        if k == 0:
            return []
        picks = rng.integers(0, self._live - np.arange(k, dtype=np.int64))
        chosen = []
        for position in picks.tolist():
            vertex = self._take(position)
            VisitedSet.add(self, vertex)
            chosen.append(vertex)
        return chosen

    def sample(self, k: int, rng: np.random.Generator) -> List[int]:
        """k distinct unvisited vertices chosen uniformly, left unvisited."""
        if k > self._live:
            raise ParameterDomainError(f"cannot sample {k} vertices from {self._live} unvisited")
        if k == 0:
            return []
        positions = rng.choice(self._live, size=k, replace=False)
        return [self._slot.get(position, position) for position in positions.tolist()]


class NeighbourOracle(Protocol):
    def reveal(self, u: int, visited: VisitedSet) -> List[int]:
        """Neighbours of u outside `visited`, in test order."""
        ...


class LazyGnpOracle:
    """Answers neighbourhood queries of a G(n, p) sample as they are asked.

    The number of new neighbours of u is Bi(#unvisited, p); which ones they
    are is a uniform draw from the unvisited pool.
    """

    def __init__(self, params: GnpParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng
        self.tests = 0

    def reveal(self, u: int, visited: VisitedSet) -> List[int]:
        if not isinstance(visited, UnvisitedPool):
            raise TypeError("LazyGnpOracle needs an UnvisitedPool as its visited set")
        candidates = visited.unvisited_count
        self.tests += candidates
        found = sample_binomial(candidates, self.params.p, self.rng)
        return visited.draw(found, self.rng)


class FixedGraphOracle:
    """Neighbourhood queries against an explicit small graph, ascending id order."""

    def __init__(self, adjacency: Dict[int, Iterable[int]]):
        self.adjacency = {u: sorted(set(ws)) for u, ws in adjacency.items()}

    @classmethod
    def from_edges(cls, edges: Iterable[Sequence[int]]) -> "FixedGraphOracle":
        adjacency: Dict[int, set] = {}
        for a, b in edges:
            adjacency.setdefault(a, set()).add(b)
            adjacency.setdefault(b, set()).add(a)
        return cls(adjacency)

    def reveal(self, u: int, visited: VisitedSet) -> List[int]:
        return [w for w in self.adjacency.get(u, ()) if w not in visited]


@dataclass
class ExplorationTree:
    root: int
    order: List[int]
    parent: Dict[int, int]
    generation_sizes: List[int]
    complete: bool = True

    @property
    def size(self) -> int:
        return len(self.order)

    @property
    def width(self) -> int:
        return max(self.generation_sizes)

    def vertex_set(self) -> frozenset:
        return frozenset(self.order)


def explore_component(v: int, oracle: NeighbourOracle, visited: VisitedSet,
                      size_cap: Optional[int] = None) -> ExplorationTree:
    """Breadth-first spanning tree of the component of v.

    With `size_cap`, exploration stops after the reveal that brings the tree
    to at least size_cap vertices and the tree is marked incomplete.
    """
    if v in visited:
        raise InputError(f"exploration root {v} is already visited")
    visited.add(v)
    order = [v]
    parent: Dict[int, int] = {}
    generation_sizes = [1]
    current = [v]
    while current:
        upcoming = []
        for u in current:
            for w in oracle.reveal(u, visited):
                visited.add(w)
                parent[w] = u
                order.append(w)
                upcoming.append(w)
            if size_cap is not None and len(order) >= size_cap:
                if upcoming:
                    generation_sizes.append(len(upcoming))
                return ExplorationTree(v, order, parent, generation_sizes, complete=False)
        if upcoming:
            generation_sizes.append(len(upcoming))
        current = upcoming
    return ExplorationTree(v, order, parent, generation_sizes)


def lazy_component_census(params: GnpParams, rng: np.random.Generator) -> Census:
    """Census of one G(n, p) sample by exploring every component lazily."""
    pool = UnvisitedPool(params.n)
    oracle = LazyGnpOracle(params, rng)
    sizes = []
    for v in range(params.n):
        if v not in pool:
            sizes.append(explore_component(v, oracle, pool).size)
    logging.debug(f"lazy census n={params.n}: {len(sizes)} components after {oracle.tests} pair tests")
    return Census.from_sizes(sizes)
