"""k-growing graphs, shortest-path histograms and Jordan centres."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from ._validation import ParameterError, check_count

POOLED = "pooled"
# above this size pooled histograms sample sources instead of using all of them
FULL_POOL_LIMIT = 10_000
DEFAULT_SAMPLED_SOURCES = 1000
_BFS_BATCH = 256


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph with immutable adjacency.

    ``adjacency[v]`` is the sorted tuple of neighbours of ``v``.
    """

    n: int
    k: int
    adjacency: tuple
    seed: int | None = None
    _edges: tuple = field(default=(), repr=False, compare=False)

    @classmethod
    def from_edges(cls, n, edges, k=0, seed=None):
        n = check_count(n, "n", 1)
        nbrs = [set() for _ in range(n)]
        seen = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise ParameterError(f"edge ({u}, {v}) outside 0..{n - 1}")
            if u == v:
                raise ParameterError(f"self-loop at {u}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ParameterError(f"duplicate edge {key}")
            seen.add(key)
            nbrs[u].add(v)
            nbrs[v].add(u)
        adjacency = tuple(tuple(sorted(s)) for s in nbrs)
        return cls(n=n, k=k, adjacency=adjacency, seed=seed, _edges=tuple(sorted(seen)))

    def edges(self):
        if self._edges:
            return list(self._edges)
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u < v]

    @property
    def n_edges(self):
        return sum(len(a) for a in self.adjacency) // 2

    def neighbors(self, v):
        return self.adjacency[v]

    def degree(self, v):
        return len(self.adjacency[v])

    @cached_property
    def csr(self):
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in self.adjacency])
        indices = np.fromiter(
            (v for a in self.adjacency for v in a), dtype=np.int32, count=int(indptr[-1])
        )
        data = np.ones(len(indices), dtype=np.int8)
        return csr_matrix((data, indices, indptr), shape=(self.n, self.n))

    def is_connected(self):
        ncomp, _ = connected_components(self.csr, directed=False)
        return ncomp == 1

    def distances_from(self, sources):
        """Hop distances from each source (rows) to every node; -1 if unreachable."""
        sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        if sources.size and (sources.min() < 0 or sources.max() >= self.n):
            raise ParameterError("source outside node range")
        out = np.empty((sources.size, self.n), dtype=np.int32)
        for start in range(0, sources.size, _BFS_BATCH):
            chunk = sources[start:start + _BFS_BATCH]
            d = shortest_path(self.csr, directed=False, unweighted=True, indices=chunk)
            d[np.isinf(d)] = -1
            out[start:start + len(chunk)] = d
        return out

    def distance(self, u, v):
        return int(self.distances_from([u])[0, v])

    def to_text(self):
        lines = [f"{self.n} {self.k} {self.seed if self.seed is not None else -1}"]
        lines.extend(f"{u} {v}" for u, v in self.edges())
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text):
        rows = text.strip().splitlines()
        n, k, seed = (int(x) for x in rows[0].split())
        edges = [tuple(int(x) for x in row.split()) for row in rows[1:] if row.strip()]
        return cls.from_edges(n, edges, k=k, seed=None if seed < 0 else seed)

    @classmethod
    def read(cls, path):
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class DistanceHistogram:
    """``counts[i]`` pairs at hop distance ``i`` seen from ``source``."""

    source: object
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or np.any(counts < 0):
            raise ParameterError("counts must be a non-negative vector")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self):
        return int(self.counts.sum())

    def to_csv(self):
        rows = ["distance,count"] + [f"{i},{c}" for i, c in enumerate(self.counts)]
        return "\n".join(rows) + "\n"

    @classmethod
    def from_csv(cls, text, source=POOLED):
        rows = [r.split(",") for r in text.strip().splitlines()[1:]]
        counts = np.zeros(max(int(d) for d, _ in rows) + 1, dtype=np.int64)
        for d, c in rows:
            counts[int(d)] = int(c)
        return cls(source=source, counts=counts)


def generate_k_growing(n, k, seed=None):
    """Grow a graph node by node; node ``j`` links to ``min(k, j)`` distinct earlier nodes.

    Targets are drawn uniformly without replacement, so the result is simple
    and connected and holds ``sum(min(k, j) for j < n)`` edges.
    """
    n = check_count(n, "n", 2)
    k = check_count(k, "k", 1)
    rng = np.random.default_rng(seed)
    nbrs = [[] for _ in range(n)]
    edges = []
    for j in range(1, n):
        m = min(k, j)
        targets = rng.choice(j, size=m, replace=False) if m < j else np.arange(j)
        for t in sorted(int(x) for x in targets):
            nbrs[j].append(t)
            nbrs[t].append(j)
            edges.append((t, j))
    adjacency = tuple(tuple(sorted(a)) for a in nbrs)
    g = Graph(n=n, k=k, adjacency=adjacency, seed=seed, _edges=tuple(sorted(edges)))
    assert g.is_connected()
    return g


def shortest_path_histogram(g, source):
    if isinstance(source, bool) or not 0 <= int(source) < g.n:
        raise ParameterError(f"source {source!r} outside 0..{g.n - 1}")
    d = g.distances_from([int(source)])[0]
    return DistanceHistogram(source=int(source), counts=np.bincount(d[d >= 0]))


def pooled_histogram(g, sample_sources="all", seed=0):
    """Sum single-source histograms over all nodes or a uniform sample of them."""
    if sample_sources == "auto":
        sample_sources = "all" if g.n <= FULL_POOL_LIMIT else DEFAULT_SAMPLED_SOURCES
    if sample_sources == "all":
        sources = np.arange(g.n)
    else:
        m = check_count(sample_sources, "sample_sources", 1)
        if m >= g.n:
            sources = np.arange(g.n)
        else:
            sources = np.sort(np.random.default_rng(seed).choice(g.n, size=m, replace=False))
    counts = np.zeros(1, dtype=np.int64)
    for start in range(0, len(sources), _BFS_BATCH):
        d = g.distances_from(sources[start:start + _BFS_BATCH]).ravel()
        part = np.bincount(d[d >= 0])
        if len(part) > len(counts):
            counts = np.pad(counts, (0, len(part) - len(counts)))
        counts[: len(part)] += part
    return DistanceHistogram(source=POOLED, counts=counts)


def eccentricities(g, members, pool=None):
    """Max distance from each pool node to the member set (pool defaults to members)."""
    members = np.asarray(sorted(set(int(m) for m in members)), dtype=np.int64)
    pool = members if pool is None else np.asarray(sorted(set(int(p) for p in pool)), dtype=np.int64)
    d = g.distances_from(members)
    if np.any(d[:, pool] < 0):
        raise ParameterError("member set is not connected to the candidate pool")
    return pool, d[:, pool].max(axis=0)


def jordan_center(g, infected, widen=False):
    """All nodes minimising the maximum distance to the infected set, ascending by id.

    Candidates are drawn from ``infected`` unless ``widen`` is set, in which
    case every node of ``g`` competes.
    """
    infected = sorted(set(int(v) for v in infected))
    if not infected:
        raise ParameterError("infected set is empty")
    if infected[0] < 0 or infected[-1] >= g.n:
        raise ParameterError("infected node outside node range")
    pool, ecc = eccentricities(g, infected, None if not widen else range(g.n))
    return [int(v) for v in pool[ecc == ecc.min()]]
