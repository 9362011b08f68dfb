from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.linalg as la
from pydantic import BaseModel, ConfigDict, Field

from ssi_core.errors import InvalidInputError, NumericalError
from ssi_core.filters import (
    BankSpec,
    SsiFilter,
    materialize,
    matrix_powers,
    numerical_rank,
    projection_select,
)
from ssi_core.graph import Graph, VertexSet, induced_subgraph, laplacian
from ssi_core.models import Solver
from ssi_core.spectral import ShiftOperator


logger = logging.getLogger("ssikit")


class LearnConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    r: int = Field(default=1, ge=0)
    beta: float = Field(default=0.6, ge=0, allow_inf_nan=False)
    loss: Literal["frobenius"] = "frobenius"
    ridge: float = Field(default=1e-8, ge=0, lt=1e-3)
    tol: float = Field(default=1e-8, gt=0)
    solver: Solver = Solver.CLOSED_FORM
    max_iter: int = Field(default=500, ge=1)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Rows of X / Xp are x_t = P_{V0} y_t and x'_t = P_{V0} z_t."""

    V0: VertexSet
    X: np.ndarray
    Xp: np.ndarray

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=float, ndmin=2)
        Xp = np.array(self.Xp, dtype=float, ndmin=2)
        if X.shape != Xp.shape:
            raise InvalidInputError("observation-shape", f"X {X.shape} vs Xp {Xp.shape}")
        if X.shape[0] < 1:
            raise InvalidInputError("observation-shape", "need T >= 1 samples")
        if X.shape[1] != len(self.V0) or len(self.V0) == 0:
            raise InvalidInputError("observation-shape", f"{X.shape[1]} columns for |V0|={len(self.V0)}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Xp))):
            raise InvalidInputError("observation-not-finite")
        X.setflags(write=False)
        Xp.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Xp", Xp)

    @classmethod
    def from_signals(cls, V0: VertexSet, Y: np.ndarray, Z: np.ndarray) -> "ObservationSet":
        idx = list(V0.members)
        return cls(V0, np.asarray(Y)[:, idx], np.asarray(Z)[:, idx])

    @property
    def T(self) -> int:
        return self.X.shape[0]

    def head(self, T: int) -> "ObservationSet":
        return ObservationSet(self.V0, self.X[:T], self.Xp[:T])


@dataclass(frozen=True, eq=False)
class LearnResult:
    F0: np.ndarray
    F: SsiFilter | None
    objective: float
    data_term: float
    coupling_term: float
    residual_history: tuple[float, ...]
    method: str
    coeffs: np.ndarray | None = None


# --- support construction ---------------------------------------------------


def build_support(g: Graph, V0: VertexSet, r: int) -> BankSpec:
    """(C_{V0}, D_{V0}): V_i gathers V0-vertices whose nearest V0 peer is i hops away, with those peers.

    Vertices with no reachable V0 peer form one extra set of degree r. Degrees are capped at n-1,
    past which the powers of S add nothing to the span.
    """
    if len(V0) == 0:
        raise InvalidInputError("empty-vertex-set", "build_support needs a nonempty V0")
    if r < 0:
        raise InvalidInputError("invalid-slack", "r must be >= 0")
    mem = np.asarray(V0.members)
    sub = np.array(g.hops[np.ix_(mem, mem)])
    np.fill_diagonal(sub, np.inf)
    nearest = sub.min(axis=1)

    sets: list[set[int]] = []
    degrees: list[int] = []
    for i in sorted({int(x) for x in nearest if np.isfinite(x)}):
        rows = np.flatnonzero(nearest == i)
        V = {int(mem[a]) for a in rows}
        for a in rows:
            V.update(int(mem[b]) for b in np.flatnonzero(sub[a] == i))
        sets.append(V)
        degrees.append(min(i + r, g.n - 1))
    lonely = {int(mem[a]) for a in np.flatnonzero(~np.isfinite(nearest))}
    if lonely:
        sets.append(lonely)
        degrees.append(min(r, g.n - 1))
    spec = BankSpec.of(sets, degrees, g.n)
    logger.debug("build_support: |V0|=%s -> %s", len(V0), spec.label())
    return spec


# --- the joint problem ------------------------------------------------------


def _factor(M: np.ndarray, *, singular_is_error: bool) -> Callable[[np.ndarray], np.ndarray]:
    """Solver for the SPD system M x = b with Jacobi scaling."""
    d = np.sqrt(np.clip(np.diag(M), 0.0, None))
    d[d == 0] = 1.0
    Ms = M / d[:, None] / d[None, :]
    if singular_is_error and Ms.size and numerical_rank(Ms, 1e-12) < Ms.shape[0]:
        raise NumericalError(
            "singular-normal-matrix", "normal matrix is singular with ridge = 0; use a ridge > 0"
        )
    try:
        c = la.cho_factor(Ms)
        return lambda b: la.cho_solve(c, b / d) / d
    except la.LinAlgError:
        if singular_is_error:
            raise NumericalError(
                "singular-normal-matrix", "normal matrix is singular with ridge = 0; use a ridge > 0"
            ) from None
        logger.warning("normal matrix not numerically positive definite, using pseudo-inverse")
        P = la.pinvh(Ms)
        return lambda b: (P @ (b / d)) / d


class LearnProblem:
    """min_{a, F0 = F0^T} sum_t ||x'_t - F0 x_t||^2 + beta ||P F(a) - F0 P||_F^2 + ridge (||a||^2 + ||F0||_F^2).

    Unknowns are stacked as z = [a; u], u the upper triangle of F0 (row-major).
    """

    def __init__(self, obs: ObservationSet, spec: BankSpec, s: ShiftOperator, beta: float, ridge: float):
        if spec.n != s.n or obs.V0.ambient_n != s.n:
            raise InvalidInputError("dimension-mismatch", "observations, bank and shift disagree on n")
        self.obs, self.spec, self.s = obs, spec, s
        self.beta, self.ridge = float(beta), float(ridge)

        m, n, T = len(obs.V0), s.n, obs.T
        self.m = m
        self._iu = np.triu_indices(m)
        q = self._iu[0].size
        k = np.arange(q)
        Eb = np.zeros((q, m, m))
        Eb[k, self._iu[0], self._iu[1]] = 1.0
        Eb[k, self._iu[1], self._iu[0]] = 1.0
        self.w = np.where(self._iu[0] == self._iu[1], 1.0, 2.0)

        self.D = np.einsum("ta,kab->tbk", obs.X, Eb).reshape(T * m, q)
        self.y = obs.Xp.reshape(-1)

        idx = np.asarray(obs.V0.members)
        EP = np.zeros((q, m, n))
        EP[:, :, idx] = Eb
        self.E = EP.reshape(q, m * n).T

        powers = matrix_powers(np.asarray(s.S), max(spec.D.degrees))
        cols = []
        for V, d in spec.pairs():
            ind = V.indicator()[:, None]
            for j in range(d + 1):
                cols.append((ind * powers[j])[idx, :].reshape(-1))
        self.B = np.column_stack(cols)
        self.p, self.q = self.B.shape[1], q

    # blocks of the normal matrix N z = b
    def _blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        b, B, E, D = self.beta, self.B, self.E, self.D
        Naa = b * (B.T @ B) + self.ridge * np.eye(self.p)
        Nau = -b * (B.T @ E)
        Nuu = D.T @ D + b * (E.T @ E) + self.ridge * np.diag(self.w)
        return Naa, Nau, Nau.T, Nuu

    def normal_system(self) -> tuple[np.ndarray, np.ndarray]:
        Naa, Nau, Nua, Nuu = self._blocks()
        N = np.block([[Naa, Nau], [Nua, Nuu]])
        rhs = np.concatenate([np.zeros(self.p), self.D.T @ self.y])
        return N, rhs

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return z[: self.p], z[self.p :]

    def f0(self, u: np.ndarray) -> np.ndarray:
        F0 = np.zeros((self.m, self.m))
        F0[self._iu] = u
        return F0 + np.triu(F0, 1).T

    def terms(self, z: np.ndarray) -> tuple[float, float, float]:
        a, u = self.split(z)
        r1 = self.D @ u - self.y
        r2 = self.B @ a - self.E @ u
        reg = self.ridge * (float(a @ a) + float(u @ (self.w * u)))
        return float(r1 @ r1), float(r2 @ r2), reg

    def objective(self, z: np.ndarray) -> float:
        data, coupling, reg = self.terms(z)
        return data + self.beta * coupling + reg

    def gradient(self, z: np.ndarray) -> np.ndarray:
        N, rhs = self.normal_system()
        return 2.0 * (N @ z - rhs)

    def solve(self) -> np.ndarray:
        singular_is_error = self.ridge == 0.0
        if self.beta == 0.0:
            _, _, _, Nuu = self._blocks()
            u = _factor(Nuu, singular_is_error=singular_is_error)(self.D.T @ self.y)
            return np.concatenate([np.zeros(self.p), u])
        N, rhs = self.normal_system()
        return _factor(N, singular_is_error=singular_is_error)(rhs)

    def solve_alternating(self, max_iter: int = 500, tol: float = 1e-8) -> tuple[np.ndarray, list[float]]:
        """Block coordinate descent: a-step then F0-step, factorizations cached."""
        Naa, Nau, Nua, Nuu = self._blocks()
        solve_a = _factor(Naa, singular_is_error=False)
        solve_u = _factor(Nuu, singular_is_error=self.ridge == 0.0)
        Dty = self.D.T @ self.y

        a = np.zeros(self.p)
        u = solve_u(Dty)
        history = [self.objective(np.concatenate([a, u]))]
        for it in range(max_iter):
            a = solve_a(-(Nau @ u))
            u = solve_u(Dty - Nua @ a)
            history.append(self.objective(np.concatenate([a, u])))
            if abs(history[-2] - history[-1]) <= tol * max(1.0, abs(history[-1])):
                break
        logger.debug("solve_alternating: %s iterations, objective=%.6g", len(history) - 1, history[-1])
        return np.concatenate([a, u]), history


def direct_terms(
    obs: ObservationSet, F: SsiFilter, F0: np.ndarray, s: ShiftOperator
) -> tuple[float, float, float]:
    """(data, coupling, ||a||^2 + ||F0||_F^2) evaluated from the materialized filter."""
    P = projection_select(obs.V0)
    R = obs.Xp - obs.X @ F0.T
    C = P @ materialize(F, s) - F0 @ P
    return float(np.sum(R * R)), float(np.sum(C * C)), float(F.flat() @ F.flat() + np.sum(F0 * F0))


def learn(obs: ObservationSet, spec: BankSpec, s: ShiftOperator, cfg: LearnConfig | None = None) -> LearnResult:
    cfg = cfg or LearnConfig()
    prob = LearnProblem(obs, spec, s, cfg.beta, cfg.ridge)
    if cfg.solver == Solver.ALTERNATING:
        z, history = prob.solve_alternating(cfg.max_iter, cfg.tol)
    else:
        z = prob.solve()
        history = [prob.objective(z)]
    a, u = prob.split(z)
    F = SsiFilter.from_flat(spec, a)
    F0 = prob.f0(u)
    data, coupling, norms = direct_terms(obs, F, F0, s)
    objective = data + cfg.beta * coupling + cfg.ridge * norms
    return LearnResult(
        F0=F0,
        F=F,
        objective=objective,
        data_term=data,
        coupling_term=coupling,
        residual_history=tuple(history),
        method="ssi",
    )


def recovery_error(F0: np.ndarray, obs_eval: ObservationSet) -> float:
    """(1/T) sum_t ||x'_t - F0 x_t||_2."""
    F0 = np.asarray(F0, dtype=float)
    m = len(obs_eval.V0)
    if F0.shape != (m, m):
        raise InvalidInputError("dimension-mismatch", f"F0 {F0.shape} for |V0|={m}")
    R = obs_eval.Xp - obs_eval.X @ F0.T
    return float(np.mean(np.linalg.norm(R, axis=1)))


# --- baselines --------------------------------------------------------------


def _ridge_lstsq(Phi: np.ndarray, y: np.ndarray, ridge: float) -> np.ndarray:
    if ridge > 0:
        k = Phi.shape[1]
        Phi = np.vstack([Phi, np.sqrt(ridge) * np.eye(k)])
        y = np.concatenate([y, np.zeros(k)])
    c, *_ = la.lstsq(Phi, y)
    return c


def _poly_fit(inputs: np.ndarray, targets: np.ndarray, powers: list[np.ndarray], ridge: float):
    Phi = np.column_stack([(inputs @ P.T).reshape(-1) for P in powers])
    y = targets.reshape(-1)
    c = _ridge_lstsq(Phi, y, ridge)
    r = Phi @ c - y
    Q = np.zeros_like(powers[0])
    for cj, P in zip(c, powers):
        Q = Q + cj * P
    return c, Q, float(r @ r) + ridge * float(c @ c)


def baseline_subgraph_si(obs: ObservationSet, g: Graph, degree: int = 2, ridge: float = 1e-8) -> LearnResult:
    """F0 = sum_j c_j L_{H0}^j fitted by least squares on the induced subgraph H0."""
    if degree < 0 or degree > len(obs.V0) - 1:
        raise InvalidInputError("invalid-degree", f"degree {degree} not in [0, |V0|-1]")
    H0, _ = induced_subgraph(g, obs.V0)
    powers = matrix_powers(laplacian(H0), degree)
    c, F0, objective = _poly_fit(obs.X, obs.Xp, powers, ridge)
    R = obs.Xp - obs.X @ F0.T
    return LearnResult(
        F0=F0,
        F=None,
        objective=objective,
        data_term=float(np.sum(R * R)),
        coupling_term=0.0,
        residual_history=(objective,),
        method="subgraph_si",
        coeffs=c,
    )


def bandlimited_lift(s: ShiftOperator, V0: VertexSet, bandwidth: int, rcond: float = 1e-10) -> np.ndarray:
    """n x |V0| map x -> argmin over span(U_B) of ||P y - x|| (minimum norm), U_B the lowest modes.

    Singular values of U_B restricted to V0 below rcond * sigma_max are treated as zero.
    """
    if bandwidth < 1 or bandwidth > s.n:
        raise InvalidInputError("invalid-bandwidth", f"bandwidth {bandwidth} not in [1, {s.n}]")
    UB = s.real_basis()[:, :bandwidth]
    return UB @ la.pinv(UB[list(V0.members), :], atol=0.0, rtol=rcond)


def baseline_gi(
    obs: ObservationSet,
    g: Graph,
    s: ShiftOperator,
    bandwidth: int | None = None,
    degree: int = 2,
    ridge: float = 1e-8,
) -> LearnResult:
    """Interpolate to the whole graph, fit a polynomial in L_G there, restrict back to V0."""
    bw = len(obs.V0) if bandwidth is None else int(bandwidth)
    if degree < 0 or degree > g.n - 1:
        raise InvalidInputError("invalid-degree", f"degree {degree} not in [0, n-1]")
    lift = bandlimited_lift(s, obs.V0, bw)
    Yh = obs.X @ lift.T
    Zh = obs.Xp @ lift.T
    powers = matrix_powers(laplacian(g), degree)
    c, Q, objective = _poly_fit(Yh, Zh, powers, ridge)
    F0 = Q[list(obs.V0.members), :] @ lift
    R = obs.Xp - obs.X @ F0.T
    return LearnResult(
        F0=F0,
        F=None,
        objective=objective,
        data_term=float(np.sum(R * R)),
        coupling_term=0.0,
        residual_history=(objective,),
        method="gi",
        coeffs=c,
    )
