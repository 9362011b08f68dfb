from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg as la
from pydantic import ValidationError

from helpers import generic_shift, path
from ssi_core.errors import InvalidInputError, NumericalError
from ssi_core.filters import BankSpec
from ssi_core.graph import Graph, VertexSet, laplacian, make_graph
from ssi_core.learning import (
    LearnConfig,
    LearnProblem,
    ObservationSet,
    bandlimited_lift,
    baseline_gi,
    baseline_subgraph_si,
    build_support,
    learn,
    recovery_error,
)
from ssi_core.models import Solver
from ssi_core.spectral import build_shift, shift_for


def _instance(rng, n=6, members=(0, 2, 3, 5), T=30, r=1):
    g = path(n)
    s = generic_shift(g, rng, scale=0.5, tol=1e-3, max_draws=50)
    assert s is not None
    V0 = VertexSet.of(members, n)
    L = laplacian(g)
    H = 0.3 * np.eye(n) + 0.5 * L + 0.1 * (L @ L)
    Y = rng.normal(size=(T, n))
    obs = ObservationSet.from_signals(V0, Y, Y @ H.T)
    return g, s, obs, build_support(g, V0, r)


# --- support ----------------------------------------------------------------


def test_build_support_on_path5():
    spec = build_support(path(5), VertexSet.of([0, 1, 4], 5), 0)
    assert spec.C.as_lists() == [[0, 1], [1, 4]]
    assert list(spec.D) == [1, 3]
    assert list(build_support(path(5), VertexSet.of([0, 1, 4], 5), 1).D) == [2, 4]
    # degrees stop at n - 1
    assert list(build_support(path(5), VertexSet.of([0, 1, 4], 5), 2).D) == [3, 4]


def test_build_support_single_vertex():
    spec = build_support(path(4), VertexSet.of([2], 4), 2)
    assert spec.C.as_lists() == [[2]]
    assert list(spec.D) == [2]


def test_build_support_unreachable_peers_form_their_own_set():
    g = Graph(5, ((0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0)))
    spec = build_support(g, VertexSet.of([0, 2, 4], 5), 1)
    assert spec.C.as_lists() == [[0, 2], [4]]
    assert list(spec.D) == [3, 1]


def test_build_support_rejects_bad_input():
    with pytest.raises(InvalidInputError):
        build_support(path(3), VertexSet.of([], 3), 1)
    with pytest.raises(InvalidInputError):
        build_support(path(3), VertexSet.of([0], 3), -1)


def test_build_support_caps_degrees_for_far_apart_samples():
    spec = build_support(path(8), VertexSet.of([0, 7], 8), 1)
    assert spec.C.as_lists() == [[0, 7]]
    assert list(spec.D) == [7]


def test_build_support_covers_v0(rng):
    for _ in range(100):
        n = int(rng.integers(2, 13))
        g = make_graph("random_connected", {"n": n}, seed=int(rng.integers(2**32)))
        k = int(rng.integers(1, n + 1))
        V0 = VertexSet.of(rng.choice(n, size=k, replace=False).tolist(), n)
        spec = build_support(g, V0, int(rng.integers(0, 3)))
        assert spec.C.union == frozenset(V0.members)
        assert max(spec.D.degrees) <= n - 1


def test_build_support_on_lattice_with_two_sampling_densities():
    g = make_graph("lattice", {"rows": 5, "cols": 9})
    dense = [r * 9 + c for r in range(5) for c in (1, 2)] + [3, 21, 39]
    sparse = [5, 23, 41, 15, 33, 7, 25, 43, 17]
    spec = build_support(g, VertexSet.of(dense + sparse, 45), 1)
    assert [len(V) for V in spec.C.as_lists()] == [13, 12]
    assert spec.C.as_lists() == [sorted(dense), sorted([3, 21, 39] + sparse)]
    assert list(spec.D) == [2, 3]


# --- observations -----------------------------------------------------------


def test_observation_set_validation():
    V0 = VertexSet.of([0, 1], 3)
    with pytest.raises(InvalidInputError):
        ObservationSet(V0, np.ones((2, 2)), np.ones((3, 2)))
    with pytest.raises(InvalidInputError):
        ObservationSet(V0, np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(InvalidInputError):
        ObservationSet(V0, np.full((1, 2), np.inf), np.ones((1, 2)))
    obs = ObservationSet(V0, np.ones((4, 2)), np.zeros((4, 2)))
    assert obs.T == 4 and obs.head(2).T == 2


def test_learn_config_bounds():
    with pytest.raises(ValidationError):
        LearnConfig(ridge=1e-2)
    with pytest.raises(ValidationError):
        LearnConfig(beta=-1.0)
    with pytest.raises(ValidationError):
        LearnConfig(beta=float("inf"))


# --- closed forms -----------------------------------------------------------


def test_single_sample_ridge_solution():
    g = path(3)
    V0 = VertexSet.of([0, 1], 3)
    obs = ObservationSet(V0, [[1.0, 0.0]], [[0.0, 1.0]])
    res = learn(obs, build_support(g, V0, 1), shift_for(g), LearnConfig(beta=0.0, ridge=1e-4))
    expected = np.array([[0.0, 1.0], [1.0, 0.0]]) / (1.0 + 2e-4)
    assert np.allclose(res.F0, expected, atol=1e-12)
    assert np.allclose(res.F.flat(), 0.0)


def test_beta_zero_matches_sylvester(rng):
    _, s, obs, spec = _instance(rng, T=12)
    res = learn(obs, spec, s, LearnConfig(beta=0.0, ridge=0.0))
    G = obs.X.T @ obs.X
    F0 = la.solve_sylvester(G, G, obs.Xp.T @ obs.X + obs.X.T @ obs.Xp)
    assert np.allclose(res.F0, F0, rtol=1e-8, atol=1e-10)
    assert np.allclose(res.F0, res.F0.T)


def test_ridge_zero_singular_system_is_a_numerical_error():
    g = path(3)
    V0 = VertexSet.of([0, 1], 3)
    obs = ObservationSet(V0, [[1.0, 0.0]], [[0.0, 1.0]])
    with pytest.raises(NumericalError) as ei:
        learn(obs, build_support(g, V0, 1), shift_for(g), LearnConfig(beta=0.0, ridge=0.0))
    assert ei.value.code == "singular-normal-matrix"


# --- optimality -------------------------------------------------------------


def test_gradient_vanishes_at_optimum(rng):
    _, s, obs, spec = _instance(rng)
    prob = LearnProblem(obs, spec, s, beta=0.6, ridge=1e-6)
    z = prob.solve()
    scale = 1.0 + np.linalg.norm(obs.X) + np.linalg.norm(obs.Xp)
    assert np.linalg.norm(prob.gradient(z)) <= 1e-6 * scale


def test_gradient_matches_finite_differences(rng):
    _, s, obs, spec = _instance(rng)
    prob = LearnProblem(obs, spec, s, beta=0.6, ridge=1e-6)
    z = rng.normal(size=prob.p + prob.q)
    h = 1e-6
    fd = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        fd[i] = (prob.objective(z + e) - prob.objective(z - e)) / (2 * h)
    g = prob.gradient(z)
    assert np.linalg.norm(fd - g) <= 1e-5 * np.linalg.norm(g)


def test_reported_objective_matches_materialized_filter(rng):
    _, s, obs, spec = _instance(rng)
    cfg = LearnConfig(beta=0.6, ridge=1e-6)
    res = learn(obs, spec, s, cfg)
    prob = LearnProblem(obs, spec, s, cfg.beta, cfg.ridge)
    z = prob.solve()
    assert res.objective == pytest.approx(prob.objective(z), rel=1e-6, abs=1e-9)
    assert res.method == "ssi"
    assert res.F.spec == spec
    assert np.allclose(res.F0, res.F0.T)


def test_alternating_agrees_with_closed_form(rng):
    _, s, obs, spec = _instance(rng, n=5, members=(0, 2, 4), T=15)
    closed = learn(obs, spec, s, LearnConfig(beta=0.6, ridge=5e-4))
    alt = learn(
        obs,
        spec,
        s,
        LearnConfig(beta=0.6, ridge=5e-4, solver=Solver.ALTERNATING, tol=1e-14, max_iter=20000),
    )
    assert alt.objective == pytest.approx(closed.objective, rel=1e-6)
    hist = alt.residual_history
    assert all(b <= a * (1 + 1e-12) + 1e-15 for a, b in zip(hist, hist[1:]))


def test_coupling_pulls_f0_towards_the_bank(rng):
    _, s, obs, spec = _instance(rng, T=8)
    loose = learn(obs, spec, s, LearnConfig(beta=0.01, ridge=1e-6))
    tight = learn(obs, spec, s, LearnConfig(beta=10.0, ridge=1e-6))
    assert tight.coupling_term <= loose.coupling_term + 1e-12


def test_objective_is_minimized_and_convex(rng):
    _, s, obs, spec = _instance(rng)
    prob = LearnProblem(obs, spec, s, beta=0.6, ridge=1e-6)
    z = prob.solve()
    best = prob.objective(z)
    for scale in (1e-2, 1.0):
        for _ in range(50):
            p = z + scale * rng.normal(size=z.size)
            assert best <= prob.objective(p) + 1e-9 * (1.0 + abs(best))
    for _ in range(20):
        p, q = rng.normal(size=(2, z.size))
        t = rng.random()
        chord = t * prob.objective(p) + (1 - t) * prob.objective(q)
        assert prob.objective(t * p + (1 - t) * q) <= chord * (1 + 1e-12) + 1e-12


def test_data_term_grows_with_beta(rng):
    _, s, obs, spec = _instance(rng, T=10)
    fits, couplings = [], []
    for beta in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
        prob = LearnProblem(obs, spec, s, beta=beta, ridge=1e-8)
        data, coupling, reg = prob.terms(prob.solve())
        fits.append(data + reg)
        couplings.append(coupling)
    assert all(b >= a - 1e-7 * (1.0 + a) for a, b in zip(fits, fits[1:]))
    assert all(b <= a + 1e-7 * (1.0 + a) for a, b in zip(couplings[1:], couplings[2:]))


def test_beta_zero_on_unchanged_signals_gives_identity(rng):
    g = path(6)
    V0 = VertexSet.of([0, 2, 3, 5], 6)
    X = rng.normal(size=(20, 4))
    res = learn(ObservationSet(V0, X, X), build_support(g, V0, 1), shift_for(g), LearnConfig(beta=0.0, ridge=1e-10))
    assert np.allclose(res.F0, np.eye(4), atol=1e-6)


def test_filter_inside_the_bank_is_recovered(rng):
    g = path(5)
    s = shift_for(g)
    V0 = VertexSet.of(range(5), 5)
    spec = BankSpec.of([range(5)], [2], 5)
    L = laplacian(g)
    c = np.array([0.7, -0.4, 0.15])
    H = c[0] * np.eye(5) + c[1] * L + c[2] * (L @ L)
    Y = rng.normal(size=(20, 5))
    res = learn(ObservationSet.from_signals(V0, Y, Y @ H.T), spec, s, LearnConfig(beta=0.6, ridge=1e-10))
    assert res.objective <= 1e-6
    assert np.allclose(res.F0, H, atol=1e-6)
    assert np.allclose(res.F.coeffs[0], c, atol=1e-5)
    Ye = rng.normal(size=(5, 5))
    assert recovery_error(res.F0, ObservationSet.from_signals(V0, Ye, Ye @ H.T)) <= 1e-6


# --- evaluation and baselines -----------------------------------------------


def test_recovery_error():
    V0 = VertexSet.of([0, 1], 3)
    obs = ObservationSet(V0, [[1.0, 0.0], [0.0, 2.0]], [[1.0, 0.0], [0.0, 2.0]])
    assert recovery_error(np.eye(2), obs) == 0.0
    assert recovery_error(np.zeros((2, 2)), obs) == pytest.approx(1.5)
    with pytest.raises(InvalidInputError):
        recovery_error(np.eye(3), obs)


def test_subgraph_si_baseline_recovers_polynomial_of_induced_laplacian(rng):
    g = path(5)
    V0 = VertexSet.of([0, 1, 2], 5)
    LH = laplacian(path(3))
    Q = np.eye(3) + 0.5 * LH + 0.1 * (LH @ LH)
    X = rng.normal(size=(10, 3))
    obs = ObservationSet(V0, X, X @ Q.T)
    res = baseline_subgraph_si(obs, g, degree=2, ridge=0.0)
    assert np.allclose(res.coeffs, [1.0, 0.5, 0.1], atol=1e-9)
    assert np.allclose(res.F0, Q, atol=1e-9)
    assert res.method == "subgraph_si" and res.F is None
    with pytest.raises(InvalidInputError):
        baseline_subgraph_si(obs, g, degree=3)


def test_bandlimited_lift_reconstructs_low_modes(rng):
    s = shift_for(path(6))
    V0 = VertexSet.of([0, 2, 4], 6)
    lift = bandlimited_lift(s, V0, 3)
    y = s.real_basis()[:, :3] @ rng.normal(size=3)
    assert np.allclose(lift @ y[[0, 2, 4]], y, atol=1e-10)
    with pytest.raises(InvalidInputError):
        bandlimited_lift(s, V0, 0)


def test_bandlimited_lift_drops_near_singular_directions():
    # two low modes that nearly coincide on the samples {0, 1}
    c = 1e-12
    u1 = np.array([1.0, 1.0, 0.0]) / np.sqrt(2)
    u2 = np.array([c, -c, np.sqrt(2 - 2 * c * c)]) / np.sqrt(2)
    u3 = np.cross(u1, u2)
    Q = np.column_stack([u1, u2, u3])
    s = build_shift(Q @ np.diag([0.0, 1.0, 2.0]) @ Q.T)
    lift = bandlimited_lift(s, VertexSet.of([0, 1], 3), 2)
    assert np.abs(lift).max() < 10.0
    assert np.allclose(lift @ [1.0, 1.0], [1.0, 1.0, 0.0], atol=1e-8)


def test_gi_baseline_exact_on_bandlimited_data(rng):
    g = path(6)
    s = shift_for(g)
    V0 = VertexSet.of([0, 2, 4], 6)
    L = laplacian(g)
    H = np.eye(6) + 0.5 * L + 0.1 * (L @ L)
    UB = s.real_basis()[:, :3]
    Y = rng.normal(size=(12, 3)) @ UB.T
    train = ObservationSet.from_signals(V0, Y, Y @ H.T)
    res = baseline_gi(train, g, s, bandwidth=3, degree=2, ridge=0.0)
    Ye = rng.normal(size=(5, 3)) @ UB.T
    held_out = ObservationSet.from_signals(V0, Ye, Ye @ H.T)
    assert res.method == "gi"
    assert recovery_error(res.F0, held_out) <= 1e-8


def test_problem_rejects_mismatched_sizes(rng):
    _, s, obs, _ = _instance(rng)
    with pytest.raises(InvalidInputError):
        LearnProblem(obs, BankSpec.of([[0]], [1], 4), s, 0.5, 1e-6)
