from __future__ import annotations

import hashlib
import itertools
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
import scipy.linalg as la

from ssi_core.errors import InvalidInputError, NumericalError
from ssi_core.filters import BankSpec, numerical_rank, rank_columns
from ssi_core.spectral import ShiftOperator


logger = logging.getLogger("ssikit")


@dataclass(frozen=True)
class LatticeNode:
    spec: BankSpec | None  # None is the adjoined trivial bank
    dim: int
    fingerprint: str

    @property
    def is_bottom(self) -> bool:
        return self.spec is None

    def label(self) -> str:
        head = "trivial" if self.spec is None else self.spec.label()
        return f"{head}\\ndim={self.dim}"


@dataclass(frozen=True, eq=False)
class BankLattice:
    nodes: tuple[LatticeNode, ...]
    edges: tuple[tuple[int, int], ...]  # child -> parent, child a maximal proper subspace
    shift: ShiftOperator
    dag: nx.DiGraph = field(repr=False)

    def index_of(self, spec: BankSpec | None) -> int:
        for i, node in enumerate(self.nodes):
            if node.spec == spec:
                return i
        raise InvalidInputError("unknown-node", "spec is not a lattice node")

    def leq(self, a: int, b: int) -> bool:
        """J_a contained in J_b."""
        return a == b or nx.has_path(self.dag, a, b)

    @property
    def bottom(self) -> int | None:
        for i, node in enumerate(self.nodes):
            if node.is_bottom:
                return i
        return None


@dataclass(frozen=True, eq=False)
class EnumerationLimits:
    max_k: int = 2
    max_set_size: int | None = None


class _Spans:
    """Orthonormal span bases and ranks, computed once per spec."""

    def __init__(self, s: ShiftOperator, tol: float):
        self.s = s
        self.tol = tol
        self._cols: dict[BankSpec, np.ndarray] = {}

    def cols(self, spec: BankSpec) -> np.ndarray:
        M = self._cols.get(spec)
        if M is None:
            M = rank_columns(spec, self.s)
            r = numerical_rank(M, self.tol)
            Q, _, _ = la.svd(M, full_matrices=False)
            M = Q[:, :r]
            self._cols[spec] = M
        return M

    def dim(self, spec: BankSpec) -> int:
        return self.cols(spec).shape[1]

    def contains(self, big: BankSpec, small: BankSpec) -> bool:
        B = self.cols(big)
        A = self.cols(small)
        if A.shape[1] == 0:
            return True
        if A.shape[1] > B.shape[1]:
            return False
        return numerical_rank(np.hstack([B, A]), self.tol) == B.shape[1]


def span_fingerprint(basis: np.ndarray) -> str:
    """sha256 of the rounded orthogonal projector onto span(basis)."""
    P = basis @ basis.T
    P = np.round(P, 8) + 0.0
    return hashlib.sha256(np.ascontiguousarray(P).tobytes()).hexdigest()


def _trivial_fingerprint(n: int) -> str:
    return span_fingerprint(np.zeros((n * n, 0)))


def dedup_banks(specs: Sequence[BankSpec], s: ShiftOperator, tol: float = 1e-8) -> list[BankSpec]:
    """One representative per distinct span, the smallest by BankSpec.sort_key."""
    spans = _Spans(s, tol)
    kept: list[BankSpec] = []
    for spec in sorted(set(specs), key=BankSpec.sort_key):
        d = spans.dim(spec)
        dup = any(spans.dim(k) == d and spans.contains(k, spec) for k in kept)
        if not dup:
            kept.append(spec)
    logger.debug("dedup_banks: %s specs -> %s spans", len(specs), len(kept))
    return kept


def build_lattice(
    specs: Sequence[BankSpec],
    s: ShiftOperator,
    tol: float = 1e-8,
    adjoin_bottom: bool = False,
) -> BankLattice:
    spans = _Spans(s, tol)
    for spec in specs:
        if spec.n != s.n:
            raise InvalidInputError("dimension-mismatch", f"bank on n={spec.n}, shift on n={s.n}")
    ordered = sorted(set(specs), key=lambda sp: (spans.dim(sp), sp.sort_key()))

    nodes: list[LatticeNode] = []
    if adjoin_bottom:
        nodes.append(LatticeNode(None, 0, _trivial_fingerprint(s.n)))
    for spec in ordered:
        nodes.append(LatticeNode(spec, spans.dim(spec), span_fingerprint(spans.cols(spec))))

    m = len(nodes)
    leq = np.eye(m, dtype=bool)
    for a in range(m):
        for b in range(m):
            if a == b:
                continue
            if nodes[a].is_bottom:
                leq[a, b] = True
            elif nodes[b].is_bottom:
                leq[a, b] = False
            else:
                leq[a, b] = spans.contains(nodes[b].spec, nodes[a].spec)

    for a in range(m):
        for b in range(a + 1, m):
            if leq[a, b] and leq[b, a]:
                raise InvalidInputError(
                    "duplicate-span", f"{nodes[a].label()} and {nodes[b].label()} span the same space"
                )

    order = nx.DiGraph()
    order.add_nodes_from(range(m))
    order.add_edges_from((a, b) for a in range(m) for b in range(m) if a != b and leq[a, b])
    if not nx.is_directed_acyclic_graph(order):
        raise NumericalError("lattice-inconsistent", "containment relation has a cycle")
    hasse = nx.transitive_reduction(order)

    closure = nx.transitive_closure_dag(hasse)
    if set(closure.edges()) != set(order.edges()):
        raise NumericalError("lattice-inconsistent", "containment is not transitive at this tolerance")

    edges = tuple(sorted(hasse.edges()))
    dag = nx.DiGraph()
    dag.add_nodes_from(range(m))
    dag.add_edges_from(edges)
    logger.debug("build_lattice: %s nodes, %s edges", m, len(edges))
    return BankLattice(tuple(nodes), edges, s, dag)


def _unique_extreme(lat: BankLattice, candidates: list[int], least: bool) -> int | None:
    for c in candidates:
        if all(lat.leq(c, o) if least else lat.leq(o, c) for o in candidates):
            return c
    return None


def join(lat: BankLattice, a: int, b: int) -> int | None:
    """Least upper bound of nodes a and b among the lattice nodes, or None."""
    upper = [c for c in range(len(lat.nodes)) if lat.leq(a, c) and lat.leq(b, c)]
    return _unique_extreme(lat, upper, least=True)


def meet(lat: BankLattice, a: int, b: int) -> int | None:
    lower = [c for c in range(len(lat.nodes)) if lat.leq(c, a) and lat.leq(c, b)]
    return _unique_extreme(lat, lower, least=False)


def enumerate_banks(
    n: int,
    max_d: int,
    limits: EnumerationLimits | None = None,
    guard_n: int = 4,
) -> list[BankSpec]:
    """Every bank built from up to max_k distinct (subset, degree) items, in canonical order."""
    if n < 1:
        raise InvalidInputError("invalid-n", "n must be >= 1")
    if limits is None:
        if n > guard_n:
            raise InvalidInputError(
                "enumeration-guard", f"n={n} exceeds the guard {guard_n}; pass explicit limits"
            )
        limits = EnumerationLimits()
    max_size = limits.max_set_size or n
    top_d = min(max_d, n - 1)

    subsets = [c for size in range(1, min(max_size, n) + 1) for c in itertools.combinations(range(n), size)]
    items = [(sub, d) for sub in subsets for d in range(top_d + 1)]

    out: list[BankSpec] = []
    for k in range(1, limits.max_k + 1):
        for combo in itertools.combinations(items, k):
            out.append(BankSpec.of([c[0] for c in combo], [c[1] for c in combo], n))
    return out


def to_dot(lat: BankLattice) -> str:
    lines = ["digraph bank_lattice {", "  rankdir=BT;"]
    for i, node in enumerate(lat.nodes):
        lines.append(f'  n{i} [label="{node.label()}"];')
    for a, b in lat.edges:
        lines.append(f"  n{a} -> n{b};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json(lat: BankLattice) -> dict:
    return {
        "nodes": [
            {
                "spec": None if node.spec is None else node.spec.as_dict(),
                "dim": node.dim,
                "fingerprint": node.fingerprint,
            }
            for node in lat.nodes
        ],
        "edges": [[a, b] for a, b in lat.edges],
    }
