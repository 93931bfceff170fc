"""Time-varying directed graphs and the structural quantities the analysis uses.

Each round of an experiment communicates over a :class:`Digraph` on the nodes
``0..n-1``. A :class:`DigraphSequence` holds one graph per round together with the
connectivity window C (C = 1 means every round is strongly connected; C > 1 means
every union of C consecutive rounds is).

The metrics computed here feed the contraction constants in ``diagnostics``:

  - diameter D(G): longest shortest directed path over ordered node pairs
  - maximal edge-utility K(G): largest number of ordered pairs whose shortest-path
    set can be routed through a single edge

Usage:
  from pushpull import graph_core
  seq = graph_core.generate_sequence(20, "random_sc", horizon=500, seed=7)
  metrics = graph_core.graph_metrics(seq[0])

Graph sequence files (``read_sequence`` / ``write_sequence``):
  nodes 3        # optional, otherwise inferred from the largest index
  round 0
  0 1
  1 2
  2 0
  round 1
  ...
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]

GENERATOR_KINDS = ("random_sc", "static", "c_partitioned")
STATIC_TOPOLOGIES = ("complete", "ring", "random")
DEFAULT_EDGE_PROB = 0.2


class ConnectivityError(ValueError):
    """A quantity that only exists for strongly connected graphs was requested."""


@dataclass(frozen=True)
class Digraph:
    """Directed graph on nodes 0..n-1 without self-loops; edges kept sorted."""

    n: int
    edges: Tuple[Edge, ...]

    def __post_init__(self) -> None:
        if int(self.n) < 1:
            raise ValueError(f"node count must be positive, got {self.n}")
        edges = tuple(sorted((int(j), int(l)) for j, l in self.edges))
        for j, l in edges:
            if not (0 <= j < self.n and 0 <= l < self.n):
                raise ValueError(f"edge ({j}, {l}) has an endpoint outside [0, {self.n})")
            if j == l:
                raise ValueError(f"self-loop ({j}, {j}) is not allowed; diagonals belong to the mixing layer")
        if len(set(edges)) != len(edges):
            raise ValueError("edge list contains duplicates")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "edges", edges)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Edge]) -> "Digraph":
        """Build a graph, dropping duplicate edges."""
        return cls(n, tuple(sorted(set((int(j), int(l)) for j, l in edges))))

    @classmethod
    def complete(cls, n: int) -> "Digraph":
        return cls(n, tuple((j, l) for j in range(n) for l in range(n) if j != l))

    @classmethod
    def ring(cls, n: int, order: Optional[Sequence[int]] = None) -> "Digraph":
        """Directed cycle visiting ``order`` (identity order by default)."""
        order = list(range(n)) if order is None else [int(i) for i in order]
        if n < 2:
            return cls(n, ())
        return cls(n, tuple((order[i], order[(i + 1) % n]) for i in range(n)))

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Boolean matrix with ``adj[j, l]`` set for every edge j -> l."""
        adj = np.zeros((self.n, self.n), dtype=bool)
        if self.edges:
            src, dst = zip(*self.edges)
            adj[list(src), list(dst)] = True
        adj.setflags(write=False)
        return adj

    @cached_property
    def in_neighbors(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(int(j) for j in np.flatnonzero(self.adjacency[:, i])) for i in range(self.n))

    @cached_property
    def out_neighbors(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(int(l) for l in np.flatnonzero(self.adjacency[i, :])) for i in range(self.n))

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(self.edges)
        return graph


@dataclass(frozen=True)
class GraphMetrics:
    diameter: int
    max_edge_utility: int
    distance_matrix: np.ndarray


@dataclass(frozen=True)
class DigraphSequence:
    """One graph per round; rounds past the end wrap around (see ``at``)."""

    graphs: Tuple[Digraph, ...]
    window: int = 1

    def __post_init__(self) -> None:
        graphs = tuple(self.graphs)
        if not graphs:
            raise ValueError("a graph sequence needs at least one round")
        sizes = {g.n for g in graphs}
        if len(sizes) != 1:
            raise ValueError(f"all graphs must share the node count, got {sorted(sizes)}")
        if int(self.window) < 1:
            raise ValueError(f"window must be at least 1, got {self.window}")
        object.__setattr__(self, "graphs", graphs)
        object.__setattr__(self, "window", int(self.window))

    @property
    def n(self) -> int:
        return self.graphs[0].n

    def __len__(self) -> int:
        return len(self.graphs)

    def __getitem__(self, k: int) -> Digraph:
        return self.graphs[k]

    def __iter__(self) -> Iterator[Digraph]:
        return iter(self.graphs)

    def at(self, k: int) -> Digraph:
        """Graph used at round k; the sequence is cycled when k runs past its end."""
        return self.graphs[k % len(self.graphs)]

    def validate(self, cyclic: bool = False) -> None:
        """Check the window connectivity property.

        With ``cyclic`` the windows that wrap around the end are checked too, which is
        what a run longer than the sequence actually sees.
        """
        count = len(self.graphs)
        if self.window == 1:
            for k, g in enumerate(self.graphs):
                if not is_strongly_connected(g):
                    raise ConnectivityError(f"round {k} is not strongly connected")
            return
        starts = range(count) if cyclic else range(max(count - self.window + 1, 0))
        for start in starts:
            members = [self.graphs[(start + offset) % count] for offset in range(self.window)]
            if not is_strongly_connected(union(members)):
                raise ConnectivityError(
                    f"union of rounds {start}..{start + self.window - 1} is not strongly connected"
                )


def union(graphs: Sequence[Digraph]) -> Digraph:
    """Graph whose edge set is the union of the given edge sets."""
    if not graphs:
        raise ValueError("union of an empty list of graphs")
    n = graphs[0].n
    if any(g.n != n for g in graphs):
        raise ValueError("union needs graphs on the same node count")
    return Digraph.from_edges(n, (e for g in graphs for e in g.edges))


def is_strongly_connected(g: Digraph) -> bool:
    if g.n == 1:
        return True
    return nx.is_strongly_connected(g.to_networkx())


def all_pairs_distances(g: Digraph) -> np.ndarray:
    """Hop distances with ``np.inf`` marking unreachable pairs."""
    return nx.floyd_warshall_numpy(g.to_networkx(), nodelist=list(range(g.n)))


def _connected_distances(g: Digraph) -> np.ndarray:
    dist = all_pairs_distances(g)
    if not np.all(np.isfinite(dist)):
        raise ConnectivityError("graph is not strongly connected")
    return dist


def _edge_utilities(g: Digraph, dist: np.ndarray) -> np.ndarray:
    """Per-edge count of ordered pairs (j, l) with the edge on some shortest j -> l path."""
    if not g.edges:
        return np.zeros(0, dtype=int)
    src = np.array([e[0] for e in g.edges])
    dst = np.array([e[1] for e in g.edges])
    # through[e, j, l]: d(j, u) + 1 + d(v, l) == d(j, l) for edge e = (u, v)
    through = dist[:, src].T[:, :, None] + 1.0 + dist[dst, :][:, None, :] == dist[None, :, :]
    return through.sum(axis=(1, 2))


def diameter(g: Digraph) -> int:
    return int(_connected_distances(g).max())


def max_edge_utility(g: Digraph) -> int:
    counts = _edge_utilities(g, _connected_distances(g))
    return int(counts.max()) if counts.size else 0


def graph_metrics(g: Digraph) -> GraphMetrics:
    dist = _connected_distances(g)
    counts = _edge_utilities(g, dist)
    dist.setflags(write=False)
    return GraphMetrics(
        diameter=int(dist.max()),
        max_edge_utility=int(counts.max()) if counts.size else 0,
        distance_matrix=dist,
    )


def edge_utility_witness(g: Digraph) -> Tuple[Edge, Edge, List[int]]:
    """Return (maximizing edge, ordered pair, shortest path of that pair through the edge)."""
    dist = _connected_distances(g)
    counts = _edge_utilities(g, dist)
    if not counts.size:
        raise ConnectivityError("graph has no edges")
    u, v = g.edges[int(np.argmax(counts))]
    hits = np.argwhere(dist[:, [u]] + 1.0 + dist[[v], :] == dist)
    j, l = (int(i) for i in hits[0])
    graph = g.to_networkx()
    path = nx.shortest_path(graph, j, u) + nx.shortest_path(graph, v, l)
    return (u, v), (j, l), path


def round_metrics(graphs: Iterable[Digraph]) -> List[Optional[GraphMetrics]]:
    """Metrics per round, ``None`` where the round is not strongly connected."""
    cache: Dict[Digraph, Optional[GraphMetrics]] = {}
    out: List[Optional[GraphMetrics]] = []
    for g in graphs:
        if g not in cache:
            cache[g] = graph_metrics(g) if is_strongly_connected(g) else None
        out.append(cache[g])
    return out


def _random_strongly_connected(n: int, edge_prob: float, rng: np.random.Generator) -> Digraph:
    order = rng.permutation(n)
    adj = rng.random((n, n)) < edge_prob
    np.fill_diagonal(adj, False)
    adj[order, np.roll(order, -1)] = True
    src, dst = np.nonzero(adj)
    return Digraph(n, tuple(zip(src.tolist(), dst.tolist())))


def _partitioned_rounds(n: int, window: int, edge_prob: float, rng: np.random.Generator) -> List[Digraph]:
    """Split a ring-plus-extras graph over ``window`` rounds.

    Extra edges are capped at window*(n-1) - n so every round holds fewer than n edges
    and therefore cannot be strongly connected on its own.
    """
    if window < 2:
        raise ValueError("c_partitioned needs a window of at least 2")
    order = rng.permutation(n).tolist()
    ring = [(order[i], order[(i + 1) % n]) for i in range(n)]
    taken = set(ring)
    candidates = [(j, l) for j in range(n) for l in range(n) if j != l and (j, l) not in taken]
    draws = rng.random(len(candidates))
    extras = [e for e, u in zip(candidates, draws) if u < edge_prob]
    cap = max(window * (n - 1) - n, 0)
    if len(extras) > cap:
        kept = np.sort(rng.choice(len(extras), size=cap, replace=False))
        extras = [extras[i] for i in kept.tolist()]
    edges = ring + extras
    if len(edges) < window:
        raise ValueError(f"c_partitioned with n={n} has {len(edges)} edges, fewer than the window {window}")
    shuffled = [edges[i] for i in rng.permutation(len(edges))]
    return [Digraph(n, tuple(shuffled[part::window])) for part in range(window)]


def generate_sequence(
    n: int,
    kind: str,
    horizon: int,
    window: int = 1,
    seed: int = 0,
    edge_prob: float = DEFAULT_EDGE_PROB,
    topology: str = "complete",
) -> DigraphSequence:
    """Generate a deterministic graph sequence.

    Kinds:
      random_sc      directed ring on a fresh random permutation plus independent
                     extra edges with probability ``edge_prob``, every round
      static         one graph repeated (``topology``: complete, ring or random)
      c_partitioned  a strongly connected graph whose edges are split across
                     ``window`` consecutive rounds, repeated periodically
    """
    if n < 2:
        raise ValueError(f"graph generation needs n >= 2, got {n}")
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")
    if window < 1:
        raise ValueError(f"window must be at least 1, got {window}")
    if not 0.0 <= edge_prob <= 1.0:
        raise ValueError(f"edge_prob must lie in [0, 1], got {edge_prob}")
    rng = np.random.Generator(np.random.PCG64(seed))

    if kind == "random_sc":
        graphs = [_random_strongly_connected(n, edge_prob, rng) for _ in range(horizon)]
    elif kind == "static":
        if topology == "complete":
            base = Digraph.complete(n)
        elif topology == "ring":
            base = Digraph.ring(n)
        elif topology == "random":
            base = _random_strongly_connected(n, edge_prob, rng)
        else:
            raise ValueError(f"unknown static topology '{topology}' (expected one of {STATIC_TOPOLOGIES})")
        graphs = [base] * horizon
    elif kind == "c_partitioned":
        if window > horizon:
            raise ValueError(f"window {window} exceeds the horizon {horizon}")
        parts = _partitioned_rounds(n, window, edge_prob, rng)
        graphs = [parts[k % window] for k in range(horizon)]
    else:
        raise ValueError(f"unknown generator kind '{kind}' (expected one of {GENERATOR_KINDS})")

    seq = DigraphSequence(tuple(graphs), window)
    seq.validate()
    logger.debug("generated %s sequence: n=%d horizon=%d window=%d seed=%d", kind, n, horizon, window, seed)
    return seq


def read_sequence(path: str | Path, window: int = 1) -> DigraphSequence:
    """Parse a graph sequence file; connectivity is not checked here."""
    declared_n: Optional[int] = None
    rounds: List[List[Edge]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                if parts[0] == "nodes" and len(parts) == 2:
                    declared_n = int(parts[1])
                elif parts[0] == "round" and len(parts) == 2:
                    k = int(parts[1])
                    if k != len(rounds):
                        raise ValueError(f"expected 'round {len(rounds)}'")
                    rounds.append([])
                elif len(parts) == 2:
                    if not rounds:
                        raise ValueError("edge listed before the first 'round' header")
                    rounds[-1].append((int(parts[0]), int(parts[1])))
                else:
                    raise ValueError("expected 'round <k>', 'nodes <n>' or '<j> <l>'")
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from e
    if not rounds:
        raise ValueError(f"{path}: no rounds found")
    largest = max((max(j, l) for edges in rounds for j, l in edges), default=0)
    n = declared_n if declared_n is not None else largest + 1
    return DigraphSequence(tuple(Digraph.from_edges(n, edges) for edges in rounds), window)


def write_sequence(seq: DigraphSequence, path: str | Path) -> None:
    lines = [f"nodes {seq.n}"]
    for k, g in enumerate(seq.graphs):
        lines.append(f"round {k}")
        lines.extend(f"{j} {l}" for j, l in g.edges)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
