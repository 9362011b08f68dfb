from __future__ import annotations

import numpy as np

from ssi_core.graph import Graph, make_graph
from ssi_core.models import ShiftKind
from ssi_core.spectral import ShiftOperator, build_shift, genericity_check, perturbed_laplacian


def path(n: int) -> Graph:
    return make_graph("path", {"n": n})


def triangle() -> Graph:
    return Graph(3, ((0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)))


def star(leaves: int) -> Graph:
    return Graph(leaves + 1, tuple((0, i, 1.0) for i in range(1, leaves + 1)))


def generic_shift(
    g: Graph,
    rng: np.random.Generator,
    scale: float = 1e-3,
    tol: float = 1e-2,
    max_draws: int = 20,
) -> ShiftOperator | None:
    """Perturbed Laplacian of g whose eigenvalue gaps and eigenvector entries all exceed `tol`, or None."""
    for _ in range(max_draws):
        s = build_shift(perturbed_laplacian(g, rng, scale), ShiftKind.LAPLACIAN)
        if genericity_check(s, tol=tol).generic:
            return s
    return None


def random_generic_instance(
    rng: np.random.Generator, n_min: int, n_max: int, tol: float = 1e-2, scale: float = 0.5
):
    """(graph, generic shift) on a random connected graph; redraws the graph until one qualifies."""
    for _ in range(500):
        n = int(rng.integers(n_min, n_max + 1))
        g = make_graph("random_connected", {"n": n}, seed=int(rng.integers(2**32)))
        s = generic_shift(g, rng, scale=scale, tol=tol, max_draws=3)
        if s is not None:
            return g, s
    raise RuntimeError("no generic instance found")
