from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from functools import cached_property

import networkx as nx
import numpy as np
from tenacity import retry, retry_if_exception_type, stop_after_attempt

from ssi_core.errors import InvalidInputError
from ssi_core.models import GraphKind


logger = logging.getLogger("ssikit")

Edge = tuple[int, int, float]


@dataclass(frozen=True, eq=False)
class Graph:
    """Weighted graph on vertices 0..n-1.

    Undirected edges are stored once as (min, max, w) in input order; directed edges keep u -> v.
    """

    n: int
    edges: tuple[Edge, ...] = ()
    directed: bool = False
    allow_self_loops: bool = False

    def __post_init__(self) -> None:
        if self.n < 0:
            raise InvalidInputError("invalid-graph", "n must be >= 0")
        canon: list[Edge] = []
        seen: set[tuple[int, int]] = set()
        for e in self.edges:
            if len(e) not in (2, 3):
                raise InvalidInputError("invalid-graph", f"bad edge {e!r}")
            u, v = int(e[0]), int(e[1])
            w = float(e[2]) if len(e) == 3 else 1.0
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise InvalidInputError("invalid-graph", f"edge ({u},{v}) outside [0,{self.n})")
            if not math.isfinite(w):
                raise InvalidInputError("invalid-graph", f"edge ({u},{v}) has non-finite weight")
            if u == v and not self.allow_self_loops:
                raise InvalidInputError("invalid-graph", f"self-loop at {u}")
            if not self.directed and u > v:
                u, v = v, u
            if (u, v) in seen:
                raise InvalidInputError("invalid-graph", f"duplicate edge ({u},{v})")
            seen.add((u, v))
            canon.append((u, v, w))
        object.__setattr__(self, "edges", tuple(canon))

    @cached_property
    def nx_graph(self) -> nx.Graph:
        G = nx.DiGraph() if self.directed else nx.Graph()
        G.add_nodes_from(range(self.n))
        G.add_weighted_edges_from(self.edges)
        return G

    @cached_property
    def hops(self) -> np.ndarray:
        """All-pairs BFS hop counts (inf when unreachable)."""
        D = np.full((self.n, self.n), math.inf)
        for u, lengths in nx.all_pairs_shortest_path_length(self.nx_graph):
            for v, d in lengths.items():
                D[u, v] = d
        D.setflags(write=False)
        return D

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        if self.directed:
            return nx.is_weakly_connected(self.nx_graph)
        return nx.is_connected(self.nx_graph)


@dataclass(frozen=True)
class VertexSet:
    members: tuple[int, ...]
    ambient_n: int

    def __post_init__(self) -> None:
        members = tuple(int(m) for m in self.members)
        for a, b in zip(members, members[1:]):
            if b <= a:
                raise InvalidInputError("invalid-vertex-set", "members must be strictly increasing")
        if members and not (0 <= members[0] and members[-1] < self.ambient_n):
            raise InvalidInputError("invalid-vertex-set", f"members outside [0,{self.ambient_n})")
        object.__setattr__(self, "members", members)

    @classmethod
    def of(cls, ids: Iterable[int], n: int) -> "VertexSet":
        return cls(tuple(sorted({int(i) for i in ids})), n)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __contains__(self, v: object) -> bool:
        return v in self.as_set

    @cached_property
    def as_set(self) -> frozenset[int]:
        return frozenset(self.members)

    def indicator(self) -> np.ndarray:
        x = np.zeros(self.ambient_n)
        x[list(self.members)] = 1.0
        return x


# --- standard matrices ------------------------------------------------------


def adjacency(g: Graph) -> np.ndarray:
    """A[v, u] = w for edge u -> v, so (A f)(v) sums over in-neighbours of v."""
    A = np.zeros((g.n, g.n))
    for u, v, w in g.edges:
        A[v, u] += w
        if not g.directed and u != v:
            A[u, v] += w
    return A


def _require_undirected(g: Graph) -> None:
    if g.directed:
        raise InvalidInputError("laplacian-requires-undirected")


def laplacian(g: Graph) -> np.ndarray:
    _require_undirected(g)
    A = adjacency(g)
    return np.diag(A.sum(axis=1)) - A


def normalized_laplacian(g: Graph) -> np.ndarray:
    """I - D^{-1/2} A D^{-1/2}; isolated vertices keep a unit diagonal."""
    _require_undirected(g)
    A = adjacency(g)
    deg = A.sum(axis=1)
    inv = np.zeros_like(deg)
    nz = deg > 0
    inv[nz] = 1.0 / np.sqrt(deg[nz])
    return np.eye(g.n) - inv[:, None] * A * inv[None, :]


def normalized_adjacency_selfloops(g: Graph) -> np.ndarray:
    """D~^{-1/2} (A + I) D~^{-1/2} with D~ the degree matrix of A + I."""
    _require_undirected(g)
    At = adjacency(g) + np.eye(g.n)
    inv = 1.0 / np.sqrt(At.sum(axis=1))
    return inv[:, None] * At * inv[None, :]


# --- hops -------------------------------------------------------------------


def hop_distance(g: Graph, u: int, v: int) -> int | float:
    """Edge count of a shortest path (weights ignored); math.inf when v is unreachable."""
    if not (0 <= u < g.n and 0 <= v < g.n):
        raise InvalidInputError("invalid-vertex", f"({u},{v}) outside [0,{g.n})")
    try:
        return nx.shortest_path_length(g.nx_graph, u, v)
    except nx.NetworkXNoPath:
        return math.inf


def d_hop_neighborhood(g: Graph, V0: VertexSet, d: int) -> VertexSet:
    if d < 0:
        raise InvalidInputError("invalid-hops", "d must be >= 0")
    out: set[int] = set(V0.members)
    for s in V0.members:
        out.update(nx.single_source_shortest_path_length(g.nx_graph, s, cutoff=d))
    return VertexSet.of(out, g.n)


def induced_subgraph(g: Graph, V0: VertexSet) -> tuple[Graph, tuple[int, ...]]:
    """Subgraph on V0 relabelled 0..|V0|-1; the index map gives original ids."""
    if len(V0) == 0:
        raise InvalidInputError("empty-vertex-set", "induced subgraph needs a nonempty V0")
    index_map = V0.members
    pos = {v: i for i, v in enumerate(index_map)}
    edges = [(pos[u], pos[v], w) for u, v, w in g.edges if u in pos and v in pos]
    return Graph(len(index_map), tuple(edges), g.directed, g.allow_self_loops), index_map


def extended_laplacian(g: Graph, V0: VertexSet, d: int) -> np.ndarray:
    """Laplacian of the subgraph induced on B_d(V0), zero outside it."""
    _require_undirected(g)
    B = d_hop_neighborhood(g, V0, d)
    L = np.zeros((g.n, g.n))
    if len(B) == 0:
        return L
    H, idx = induced_subgraph(g, B)
    ix = np.asarray(idx)
    L[np.ix_(ix, ix)] = laplacian(H)
    return L


# --- generators -------------------------------------------------------------


class _Disconnected(Exception):
    pass


def _from_nx(G: nx.Graph, directed: bool = False) -> Graph:
    G = nx.convert_node_labels_to_integers(G, ordering="sorted")
    edges = tuple((int(u), int(v), float(d.get("weight", 1.0))) for u, v, d in G.edges(data=True))
    return Graph(G.number_of_nodes(), edges, directed)


def _int_param(params: Mapping[str, float], name: str, minimum: int) -> int:
    if name not in params:
        raise InvalidInputError("invalid-graph-params", f"missing parameter {name!r}")
    v = params[name]
    if float(v) != int(v) or int(v) < minimum:
        raise InvalidInputError("invalid-graph-params", f"{name} must be an integer >= {minimum}")
    return int(v)


def _prob_param(params: Mapping[str, float], name: str, default: float) -> float:
    p = float(params.get(name, default))
    if not 0.0 <= p <= 1.0:
        raise InvalidInputError("invalid-graph-params", f"{name} must be in [0, 1]")
    return p


def _random_connected(n: int, p: float, seed: int | None, max_tries: int) -> Graph:
    rng = np.random.default_rng(seed)

    @retry(
        retry=retry_if_exception_type(_Disconnected),
        stop=stop_after_attempt(max_tries),
        reraise=True,
    )
    def _draw() -> nx.Graph:
        sub = int(rng.integers(2**32))
        G = nx.gnp_random_graph(n, p, seed=sub)
        if not nx.is_connected(G):
            logger.debug("random_connected: draw seed=%s disconnected, retrying", sub)
            raise _Disconnected(sub)
        return G

    try:
        return _from_nx(_draw())
    except _Disconnected:
        raise InvalidInputError(
            "random-graph-not-connected", f"no connected G({n}, {p}) draw in {max_tries} attempts"
        ) from None


def make_graph(kind: GraphKind | str, params: Mapping[str, float] | None = None, seed: int | None = None) -> Graph:
    kind = GraphKind(kind)
    params = dict(params or {})

    if kind == GraphKind.PATH:
        return _from_nx(nx.path_graph(_int_param(params, "n", 1)))
    if kind == GraphKind.CYCLE:
        return _from_nx(nx.cycle_graph(_int_param(params, "n", 3)))
    if kind == GraphKind.DIRECTED_CYCLE:
        n = _int_param(params, "n", 2)
        return Graph(n, tuple((i, (i + 1) % n, 1.0) for i in range(n)), directed=True)
    if kind == GraphKind.LATTICE:
        rows = _int_param(params, "rows", 1)
        cols = _int_param(params, "cols", 1)
        # (r, c) -> r * cols + c
        return _from_nx(nx.grid_2d_graph(rows, cols))
    if kind == GraphKind.ERDOS_RENYI:
        n = _int_param(params, "n", 1)
        return _from_nx(nx.gnp_random_graph(n, _prob_param(params, "p", 0.5), seed=seed))
    if kind == GraphKind.RANDOM_CONNECTED:
        n = _int_param(params, "n", 1)
        default_p = min(1.0, 2.0 * math.log(n) / n) if n > 1 else 1.0
        p = _prob_param(params, "p", default_p)
        max_tries = _int_param({"max_tries": params.get("max_tries", 100)}, "max_tries", 1)
        return _random_connected(n, p, seed, max_tries)
    raise InvalidInputError("invalid-graph-kind", str(kind))
