from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as la

from ssi_core.errors import InvalidInputError
from ssi_core.graph import Graph, VertexSet, extended_laplacian, laplacian
from ssi_core.models import PolyBasis
from ssi_core.spectral import ShiftOperator


logger = logging.getLogger("ssikit")


# --- types ------------------------------------------------------------------


@dataclass(frozen=True)
class SupportTuple:
    """Ordered tuple (V_1, ..., V_k) of nonempty vertex sets; sets may overlap."""

    sets: tuple[VertexSet, ...]
    ambient_n: int

    def __post_init__(self) -> None:
        sets = tuple(self.sets)
        if not sets:
            raise InvalidInputError("empty-support-tuple", "a support tuple needs k >= 1 sets")
        for V in sets:
            if V.ambient_n != self.ambient_n:
                raise InvalidInputError("dimension-mismatch", "vertex set from another graph")
            if len(V) == 0:
                raise InvalidInputError("empty-vertex-set", "support sets must be nonempty")
        object.__setattr__(self, "sets", sets)

    @classmethod
    def of(cls, sets: Iterable[Iterable[int]], n: int) -> "SupportTuple":
        return cls(tuple(VertexSet.of(s, n) for s in sets), n)

    def __len__(self) -> int:
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    def __getitem__(self, i: int) -> VertexSet:
        return self.sets[i]

    @cached_property
    def union(self) -> frozenset[int]:
        out: set[int] = set()
        for V in self.sets:
            out |= V.as_set
        return frozenset(out)

    def as_lists(self) -> list[list[int]]:
        return [list(V.members) for V in self.sets]


@dataclass(frozen=True)
class DegreeTuple:
    degrees: tuple[int, ...]

    def __post_init__(self) -> None:
        degrees = tuple(int(d) for d in self.degrees)
        if any(d < 0 for d in degrees):
            raise InvalidInputError("negative-degree", "degrees must be >= 0")
        object.__setattr__(self, "degrees", degrees)

    def __len__(self) -> int:
        return len(self.degrees)

    def __iter__(self):
        return iter(self.degrees)

    def __getitem__(self, i: int) -> int:
        return self.degrees[i]


@dataclass(frozen=True)
class BankSpec:
    """(C, D): the filter bank J_{C,D} = span{ P_{V_i} S^j : j <= d_i }."""

    C: SupportTuple
    D: DegreeTuple

    def __post_init__(self) -> None:
        if len(self.C) != len(self.D):
            raise InvalidInputError("length-mismatch", f"|C|={len(self.C)} but |D|={len(self.D)}")
        if max(self.D.degrees) > self.n - 1:
            raise InvalidInputError(
                "degree-exceeds-n-minus-1", f"max degree {max(self.D.degrees)} > n-1 = {self.n - 1}"
            )

    @classmethod
    def of(cls, C: Iterable[Iterable[int]], D: Iterable[int], n: int) -> "BankSpec":
        return cls(SupportTuple.of(C, n), DegreeTuple(tuple(D)))

    @property
    def n(self) -> int:
        return self.C.ambient_n

    @property
    def k(self) -> int:
        return len(self.C)

    def pairs(self) -> list[tuple[VertexSet, int]]:
        return list(zip(self.C.sets, self.D.degrees))

    def sort_key(self) -> tuple:
        return tuple((V.members, d) for V, d in self.pairs())

    def candidate_count(self) -> int:
        return sum(d + 1 for d in self.D)

    def label(self) -> str:
        cs = ",".join("{" + ",".join(map(str, V.members)) + "}" for V in self.C)
        ds = ",".join(map(str, self.D))
        return f"C=({cs}) D=({ds})"

    def as_dict(self) -> dict:
        return {"C": self.C.as_lists(), "D": list(self.D.degrees)}


def node_variant_bank(n: int, degree: int) -> BankSpec:
    """All singletons with a common degree."""
    return BankSpec.of([[v] for v in range(n)], [degree] * n, n)


@dataclass(frozen=True, eq=False)
class SsiFilter:
    """sum_i P_{V_i} sum_j a_ij S^j; coeffs[i] has d_i + 1 entries."""

    spec: BankSpec
    coeffs: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        rows = tuple(tuple(float(a) for a in row) for row in self.coeffs)
        if len(rows) != self.spec.k:
            raise InvalidInputError("coeff-shape", f"{len(rows)} coefficient rows for k={self.spec.k}")
        for i, (row, d) in enumerate(zip(rows, self.spec.D)):
            if len(row) != d + 1:
                raise InvalidInputError("coeff-shape", f"row {i} has {len(row)} coefficients, degree {d}")
        object.__setattr__(self, "coeffs", rows)

    @classmethod
    def zeros(cls, spec: BankSpec) -> "SsiFilter":
        return cls(spec, tuple((0.0,) * (d + 1) for d in spec.D))

    @classmethod
    def from_flat(cls, spec: BankSpec, a: Sequence[float]) -> "SsiFilter":
        a = list(a)
        if len(a) != spec.candidate_count():
            raise InvalidInputError("coeff-shape", f"{len(a)} coefficients for {spec.candidate_count()} terms")
        rows, pos = [], 0
        for d in spec.D:
            rows.append(tuple(a[pos : pos + d + 1]))
            pos += d + 1
        return cls(spec, tuple(rows))

    def flat(self) -> np.ndarray:
        return np.array([a for row in self.coeffs for a in row], dtype=float)

    def _combine(self, other: "SsiFilter", alpha: float, beta: float) -> "SsiFilter":
        if other.spec != self.spec:
            raise InvalidInputError("spec-mismatch", "filters live in different banks")
        return SsiFilter(
            self.spec,
            tuple(
                tuple(alpha * x + beta * y for x, y in zip(r1, r2)) for r1, r2 in zip(self.coeffs, other.coeffs)
            ),
        )

    def __add__(self, other: "SsiFilter") -> "SsiFilter":
        return self._combine(other, 1.0, 1.0)

    def __mul__(self, alpha: float) -> "SsiFilter":
        return SsiFilter(self.spec, tuple(tuple(alpha * x for x in row) for row in self.coeffs))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SpanningSet:
    candidates: tuple[np.ndarray, ...]
    provenance: tuple[tuple[int, int], ...]

    def columns(self, normalize: bool = False) -> np.ndarray:
        """Candidates vectorized column-major into n^2-vectors, one column each."""
        if not self.candidates:
            return np.zeros((0, 0))
        M = np.column_stack([c.reshape(-1, order="F") for c in self.candidates])
        if normalize:
            norms = np.linalg.norm(M, axis=0)
            norms[norms == 0] = 1.0
            M = M / norms
        return M


# --- projections ------------------------------------------------------------


def projection_embed(V0: VertexSet) -> np.ndarray:
    return np.diag(V0.indicator())


def projection_select(V0: VertexSet) -> np.ndarray:
    if len(V0) == 0:
        raise InvalidInputError("empty-vertex-set", "P_{V0} needs a nonempty V0")
    P = np.zeros((len(V0), V0.ambient_n))
    P[np.arange(len(V0)), list(V0.members)] = 1.0
    return P


# --- polynomials ------------------------------------------------------------


def matrix_powers(S: np.ndarray, d: int) -> list[np.ndarray]:
    """[I, S, ..., S^d] by repeated multiplication."""
    n = S.shape[0]
    out = [np.eye(n)]
    for _ in range(d):
        out.append(out[-1] @ S)
    return out


def _chebyshev_powers(s: ShiftOperator, d: int) -> list[np.ndarray]:
    # same span as [I, S, ..., S^d], better conditioned for rank decisions
    n = s.n
    S = np.asarray(s.S)
    if s.symmetric:
        lam = s.eigenvalues.real
        lo, hi = (float(lam.min()), float(lam.max())) if n else (0.0, 0.0)
        h = (hi - lo) / 2.0
        X = (S - ((hi + lo) / 2.0) * np.eye(n)) / (h if h > 0 else 1.0)
        out = [np.eye(n)]
        if d >= 1:
            out.append(X)
        for _ in range(2, d + 1):
            out.append(2.0 * X @ out[-1] - out[-2])
        return out
    rho = s.spectral_radius
    return matrix_powers(S / (rho if rho > 0 else 1.0), d)


def poly_basis(s: ShiftOperator, d: int, basis: PolyBasis = PolyBasis.MONOMIAL) -> list[np.ndarray]:
    if PolyBasis(basis) == PolyBasis.CHEBYSHEV:
        return _chebyshev_powers(s, d)
    return matrix_powers(np.asarray(s.S), d)


def _check_n(spec: BankSpec, s: ShiftOperator) -> None:
    if spec.n != s.n:
        raise InvalidInputError("dimension-mismatch", f"bank on n={spec.n}, shift on n={s.n}")


def spanning_set(spec: BankSpec, s: ShiftOperator, basis: PolyBasis = PolyBasis.MONOMIAL) -> SpanningSet:
    _check_n(spec, s)
    powers = poly_basis(s, max(spec.D.degrees), basis)
    cands: list[np.ndarray] = []
    prov: list[tuple[int, int]] = []
    for i, (V, d) in enumerate(spec.pairs()):
        ind = V.indicator()[:, None]
        for j in range(d + 1):
            cands.append(ind * powers[j])
            prov.append((i, j))
    return SpanningSet(tuple(cands), tuple(prov))


def materialize(filt: SsiFilter, s: ShiftOperator) -> np.ndarray:
    spec = filt.spec
    _check_n(spec, s)
    powers = matrix_powers(np.asarray(s.S), max(spec.D.degrees))
    out = np.zeros((s.n, s.n))
    for (V, d), row in zip(spec.pairs(), filt.coeffs):
        Q = np.zeros((s.n, s.n))
        for j in range(d + 1):
            Q = Q + row[j] * powers[j]
        out = out + V.indicator()[:, None] * Q
    return out


# --- rank -------------------------------------------------------------------


def numerical_rank(M: np.ndarray, tol: float = 1e-8) -> int:
    """Number of singular values above tol * sigma_max."""
    if M.size == 0:
        return 0
    sv = la.svdvals(M)
    if sv[0] == 0:
        return 0
    return int(np.count_nonzero(sv > tol * sv[0]))


def rank_columns(spec: BankSpec, s: ShiftOperator, basis: PolyBasis = PolyBasis.CHEBYSHEV) -> np.ndarray:
    return spanning_set(spec, s, basis).columns(normalize=True)


def bank_dimension(
    spec: BankSpec, s: ShiftOperator, tol: float = 1e-8, basis: PolyBasis = PolyBasis.CHEBYSHEV
) -> int:
    dim = numerical_rank(rank_columns(spec, s, basis), tol)
    logger.debug("bank_dimension: %s -> %s", spec.label(), dim)
    return dim


def is_subspace(spec_a: BankSpec, spec_b: BankSpec, s: ShiftOperator, tol: float = 1e-8) -> bool:
    """J_A contained in J_B, by rank(B) == rank([A | B])."""
    A = rank_columns(spec_a, s)
    B = rank_columns(spec_b, s)
    return numerical_rank(B, tol) == numerical_rank(np.hstack([A, B]), tol)


# --- structure --------------------------------------------------------------


def is_essential(C: SupportTuple) -> bool:
    for i, V in enumerate(C.sets):
        rest: set[int] = set()
        for j, W in enumerate(C.sets):
            if j != i:
                rest |= W.as_set
        if V.as_set <= rest:
            return False
    return True


@dataclass(frozen=True)
class RefinementReport:
    """Clauses of "C' refines C". Truthy iff the three defining clauses hold.

    `parents_tiled` additionally asks every V_i to be exactly the union of the C'-sets inside it;
    with overlapping parents the three clauses alone do not give J_C inside J_C'.
    """

    union_equal: bool
    contained: bool
    disjoint_within_parent: bool
    parents_tiled: bool

    def __bool__(self) -> bool:
        return self.union_equal and self.contained and self.disjoint_within_parent

    @property
    def strict(self) -> bool:
        return bool(self) and self.parents_tiled

    def failed(self) -> list[str]:
        names = ["union_equal", "contained", "disjoint_within_parent"]
        return [nm for nm in names if not getattr(self, nm)]

    def strict_failed(self) -> list[str]:
        return self.failed() + ([] if self.parents_tiled else ["parents_tiled"])


def is_refinement(Cp: SupportTuple, C: SupportTuple) -> RefinementReport:
    if Cp.ambient_n != C.ambient_n:
        raise InvalidInputError("dimension-mismatch", "support tuples on different graphs")
    union_equal = Cp.union == C.union
    contained = all(any(W.as_set <= V.as_set for V in C) for W in Cp)

    disjoint = True
    tiled = True
    for V in C:
        inside = [W.as_set for W in Cp if W.as_set <= V.as_set]
        for a in range(len(inside)):
            for b in range(a + 1, len(inside)):
                if inside[a] & inside[b]:
                    disjoint = False
        covered: set[int] = set()
        for W in inside:
            covered |= W
        if covered != V.as_set:
            tiled = False
    return RefinementReport(union_equal, contained, disjoint, tiled)


def degrees_compatible(spec: BankSpec, spec_p: BankSpec) -> bool:
    """d_i <= d'_j whenever V'_j lies inside V_i."""
    for V, d in spec.pairs():
        for W, dp in spec_p.pairs():
            if W.as_set <= V.as_set and d > dp:
                return False
    return True


def locality_equivalent(
    spec: BankSpec,
    g: Graph,
    *,
    coeffs: Sequence[float] | None = None,
    seed: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """(P_{V0} Q_d(L_G), P_{V0} Q_d(L_{V0,d})) for a single-set spec (V0, d)."""
    if spec.k != 1:
        raise InvalidInputError("single-set-required", "locality check takes one (V0, d) pair")
    V0, d = spec.pairs()[0]
    if coeffs is None:
        coeffs = np.random.default_rng(seed).uniform(0.0, 1.0, size=d + 1)
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (d + 1,):
        raise InvalidInputError("coeff-shape", f"need {d + 1} coefficients")

    ind = V0.indicator()[:, None]

    def _q(L: np.ndarray) -> np.ndarray:
        out = np.zeros_like(L)
        for c, M in zip(coeffs, matrix_powers(L, d)):
            out = out + c * M
        return ind * out

    return _q(laplacian(g)), _q(extended_laplacian(g, V0, d))
