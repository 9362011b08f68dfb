from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from ssi_core.errors import InvalidInputError, NumericalError
from ssi_core.graph import (
    Graph,
    adjacency,
    laplacian,
    normalized_adjacency_selfloops,
    normalized_laplacian,
)
from ssi_core.models import ShiftKind


logger = logging.getLogger("ssikit")


@dataclass(frozen=True, eq=False)
class ShiftOperator:
    """Normal graph shift operator with its eigendecomposition S = U diag(eigenvalues) U*.

    Symmetric shifts get real ascending eigenvalues and a real orthonormal U whose
    columns have their first significant entry positive.
    """

    S: np.ndarray
    kind: ShiftKind
    eigenvalues: np.ndarray
    U: np.ndarray
    symmetric: bool

    @property
    def n(self) -> int:
        return self.S.shape[0]

    @property
    def spectral_radius(self) -> float:
        return float(np.max(np.abs(self.eigenvalues))) if self.n else 0.0

    def real_basis(self) -> np.ndarray:
        if not self.symmetric:
            raise InvalidInputError("gft-requires-real-basis", "shift is not symmetric")
        return self.U.real


@dataclass(frozen=True)
class GenericityReport:
    distinct_eigenvalues: bool
    min_gap: float
    nonzero_eigenvector_entries: bool
    min_entry: float
    tol: float

    @property
    def generic(self) -> bool:
        return self.distinct_eigenvalues and self.nonzero_eigenvector_entries

    def as_dict(self) -> dict:
        return {
            "distinct_eigenvalues": self.distinct_eigenvalues,
            "min_gap": self.min_gap,
            "nonzero_eigenvector_entries": self.nonzero_eigenvector_entries,
            "min_entry": self.min_entry,
            "tol": self.tol,
        }


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _normalize_signs(V: np.ndarray, tol: float) -> np.ndarray:
    V = V.copy()
    for i in range(V.shape[1]):
        col = V[:, i]
        idx = np.flatnonzero(np.abs(col) > tol)
        if idx.size and col[idx[0]] < 0:
            V[:, i] = -col
    return V


def build_shift(matrix, kind: ShiftKind | str = ShiftKind.CUSTOM, tol: float = 1e-8) -> ShiftOperator:
    S = np.asarray(matrix, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise InvalidInputError("shift-not-square", f"shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidInputError("shift-not-finite")
    kind = ShiftKind(kind)

    norm_f = float(np.linalg.norm(S))
    defect = float(np.linalg.norm(S @ S.T - S.T @ S))
    if defect > tol * norm_f**2:
        raise NumericalError(
            "gso-not-normal", f"||SS^T - S^TS||_F = {defect:.3e} exceeds {tol:g}*||S||_F^2", defect=defect
        )

    symmetric = float(np.linalg.norm(S - S.T)) <= tol * max(norm_f, 1.0)
    if symmetric:
        w, V = la.eigh((S + S.T) / 2.0)
        V = _normalize_signs(V, 1e-8)
        eigenvalues = w.astype(complex)
        U = V.astype(complex)
    else:
        T, Z = la.schur(S.astype(complex), output="complex")
        eigenvalues = np.diag(T).copy()
        order = np.lexsort((np.round(eigenvalues.imag, 12), np.round(eigenvalues.real, 12)))
        eigenvalues = eigenvalues[order]
        U = Z[:, order]

    n = S.shape[0]
    recon = (U * eigenvalues[None, :]) @ U.conj().T
    err = float(np.linalg.norm(recon - S))
    orth = float(np.linalg.norm(U.conj().T @ U - np.eye(n)))
    if err > 1e-8 * norm_f or orth > 1e-8:
        raise NumericalError("reconstruction-failed", f"reconstruction {err:.3e}, orthogonality {orth:.3e}")

    logger.debug("build_shift: kind=%s n=%s symmetric=%s defect=%.2e", kind.value, n, symmetric, defect)
    return ShiftOperator(
        S=_frozen(S),
        kind=kind,
        eigenvalues=_frozen(eigenvalues),
        U=_frozen(U),
        symmetric=symmetric,
    )


def shift_for(g: Graph, kind: ShiftKind | str = ShiftKind.LAPLACIAN, tol: float = 1e-8) -> ShiftOperator:
    kind = ShiftKind(kind)
    if kind == ShiftKind.ADJACENCY:
        M = adjacency(g)
    elif kind == ShiftKind.LAPLACIAN:
        M = laplacian(g)
    elif kind == ShiftKind.NORMALIZED_ADJACENCY:
        M = normalized_adjacency_selfloops(g)
    elif kind == ShiftKind.NORMALIZED_LAPLACIAN:
        M = normalized_laplacian(g)
    else:
        raise InvalidInputError("invalid-shift-kind", "custom shifts are built from a matrix")
    return build_shift(M, kind, tol)


def perturbed_laplacian(g: Graph, rng: np.random.Generator, scale: float = 1e-3) -> np.ndarray:
    """L + diag(u), u_i ~ U[0, scale]: generic with high probability."""
    return laplacian(g) + np.diag(rng.uniform(0.0, scale, size=g.n))


def genericity_check(s: ShiftOperator, tol: float | None = None) -> GenericityReport:
    lam = s.eigenvalues
    if tol is None:
        tol = 1e-8 * s.spectral_radius
    if lam.size > 1:
        gaps = np.abs(lam[:, None] - lam[None, :])
        min_gap = float(gaps[np.triu_indices(lam.size, k=1)].min())
    else:
        min_gap = float("inf")
    min_entry = float(np.abs(s.U).min()) if s.n else float("inf")
    return GenericityReport(
        distinct_eigenvalues=min_gap > tol,
        min_gap=min_gap,
        nonzero_eigenvector_entries=min_entry > tol,
        min_entry=min_entry,
        tol=float(tol),
    )


def _check_signal(s: ShiftOperator, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f)
    if f.ndim not in (1, 2) or f.shape[0] != s.n:
        raise InvalidInputError("dimension-mismatch", f"signal shape {f.shape} for n={s.n}")
    return f


def gft(s: ShiftOperator, f) -> np.ndarray:
    """f_hat = U* f (real for symmetric shifts). Columns of a 2-D input are separate signals."""
    f = _check_signal(s, f)
    if s.symmetric:
        return s.U.real.T @ f
    return s.U.conj().T @ f


def igft(s: ShiftOperator, f_hat) -> np.ndarray:
    f_hat = _check_signal(s, f_hat)
    if s.symmetric and not np.iscomplexobj(f_hat):
        return s.U.real @ f_hat
    return s.U @ f_hat


def random_signal_gft(s: ShiftOperator, rng) -> np.ndarray:
    """U c with c_i ~ U[0, 1] i.i.d."""
    U = s.real_basis()
    c = np.asarray(rng.uniform(0.0, 1.0, size=s.n), dtype=float)
    return U @ c


def random_signals_gft(s: ShiftOperator, rng, count: int) -> np.ndarray:
    """`count` signals as rows (count x n), one uniform GFT coefficient draw per row."""
    U = s.real_basis()
    C = np.asarray(rng.uniform(0.0, 1.0, size=(count, s.n)), dtype=float)
    return C @ U.T
