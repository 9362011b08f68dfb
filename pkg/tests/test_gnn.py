from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest

from helpers import star, triangle
from ssi_core.errors import InvalidInputError
from ssi_core.filters import DegreeTuple, SupportTuple
from ssi_core.gnn import (
    LabelVector,
    LayerSpec,
    SemiGcnLayer,
    TypedGraph,
    gcn_layer,
    heterogeneous_support,
    homophily_detail,
    homophily_score,
    homophily_table,
    init_layers,
    kmeans,
    lloyd,
    loss_and_grads,
    make_two_community,
    semigcn_layer,
    train_node_classifier,
)
from ssi_core.graph import make_graph, normalized_adjacency_selfloops
from ssi_core.models import Activation


def _everything(n: int) -> SupportTuple:
    return SupportTuple.of([range(n)], n)


# --- homophily --------------------------------------------------------------


def test_homophily_triangle():
    labels = LabelVector.from_names(["a", "a", "b"])
    assert homophily_detail(triangle(), labels, "a") == (Fraction(1, 2), 2)
    assert homophily_detail(triangle(), labels, "b") == (Fraction(0), 1)
    assert homophily_score(triangle(), labels, labels.class_id("a")) == Fraction(1, 2)


def test_homophily_star():
    labels = LabelVector.from_names(["a", "b", "b", "b", "b"])
    g = star(4)
    assert homophily_score(g, labels, "a", 1) == 0
    assert homophily_score(g, labels, "b", 1) == 0
    assert homophily_score(g, labels, "b", 2) == 1
    score, count = homophily_detail(g, labels, "a", 2)
    assert math.isnan(score) and count == 0


def test_homophily_errors():
    labels = LabelVector.from_names(["a", "a", "b"])
    with pytest.raises(InvalidInputError) as ei:
        homophily_score(triangle(), labels, "c")
    assert ei.value.code == "class-absent"
    with pytest.raises(InvalidInputError):
        homophily_score(triangle(), labels, "a", 0)
    with pytest.raises(InvalidInputError):
        homophily_score(star(3), labels, "a")


def test_homophily_table_rows():
    labels = LabelVector.from_names(["a", "a", "b"])
    rows = homophily_table(triangle(), labels, hops=[1])
    assert rows == [
        {"class": "a", "hops": 1, "score": 0.5, "count": 2},
        {"class": "b", "hops": 1, "score": 0.0, "count": 1},
    ]


def test_label_vector_validation():
    with pytest.raises(InvalidInputError):
        LabelVector((0, 2), ("a", "b"))
    with pytest.raises(InvalidInputError):
        LabelVector((0, 1), ("a", "b"), mask=(True,))
    lv = LabelVector.from_names(["y", "x", "y"], mask=[True, False, True])
    assert lv.classes == ("x", "y")
    assert lv.labels == (1, 0, 1)
    assert lv.observed().tolist() == [True, False, True]


# --- k-means ----------------------------------------------------------------


@pytest.mark.parametrize("seed", range(8))
def test_kmeans_two_blobs_any_seed(seed):
    X = np.array([[0.0], [0.1], [5.0], [5.1]])
    C = kmeans(X, 2, seed=seed)
    assert C.as_lists() == [[0, 1], [2, 3]]


def test_lloyd_objective_never_increases():
    rng = np.random.default_rng(5)
    X = np.vstack([rng.normal(c, 0.3, size=(15, 2)) for c in ((0, 0), (3, 0), (0, 3))])
    res = lloyd(X, 3, seed=1)
    hist = res.objective_history
    assert all(b <= a + 1e-12 for a, b in zip(hist, hist[1:]))
    assert sum(len(V) for V in res.support) == 45
    assert res.iterations >= 1


def test_kmeans_singletons_when_k_equals_n():
    X = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])
    res = lloyd(X, 3, seed=0)
    assert res.support.as_lists() == [[0], [1], [2]]
    assert res.objective_history[-1] == 0.0


def test_kmeans_recovers_from_duplicate_seeds():
    X = np.array([[0.0], [0.0], [1.0]])
    for seed in range(6):
        assert kmeans(X, 2, seed=seed).as_lists() == [[0, 1], [2]]


def test_kmeans_bad_k():
    with pytest.raises(InvalidInputError):
        kmeans(np.zeros((3, 1)), 0)
    with pytest.raises(InvalidInputError):
        kmeans(np.zeros((3, 1)), 4)


# --- layers -----------------------------------------------------------------


def test_semigcn_reduces_to_gcn():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(3, 12))
        g = make_graph("random_connected", {"n": n}, seed=int(rng.integers(2**32)))
        f_in, f_out = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        H = rng.normal(size=(n, f_in))
        W = rng.normal(size=(f_in, f_out))
        layer = SemiGcnLayer(_everything(n), DegreeTuple((1,)), (np.zeros((f_in, f_out)), W))
        A = normalized_adjacency_selfloops(g)
        assert np.max(np.abs(semigcn_layer(H, g, layer) - gcn_layer(H, A, W))) <= 1e-12


def test_layer_weight_counts():
    C = SupportTuple.of([[0, 1], [2]], 3)
    D = DegreeTuple((2, 1))
    W = np.ones((2, 2))
    assert len(SemiGcnLayer(C, D, (W,) * 3).terms()) == 3
    assert len(SemiGcnLayer(C, D, (W,) * 5, shared=False).terms()) == 5
    with pytest.raises(InvalidInputError):
        SemiGcnLayer(C, D, (W,) * 4)
    with pytest.raises(InvalidInputError):
        SemiGcnLayer(C, D, (W, W, np.ones((3, 2))))


def test_shared_layer_masks_high_powers():
    C = SupportTuple.of([[0], [1, 2]], 3)
    layer = SemiGcnLayer(C, DegreeTuple((0, 1)), (np.eye(1), np.eye(1)), Activation.IDENTITY)
    g = triangle()
    H = np.array([[1.0], [2.0], [3.0]])
    A = normalized_adjacency_selfloops(g)
    out = semigcn_layer(H, g, layer)
    expected = H + np.array([[0.0], [1.0], [1.0]]) * (A @ H)
    assert np.allclose(out, expected)


def test_heterogeneous_support():
    tg = TypedGraph(triangle(), ("p", "p", "q"), ("x", "y", "x"))
    assert heterogeneous_support(tg).as_lists() == [[0, 1, 2], [1, 2]]
    assert tg.edge_alphabet == ("x", "y")
    assert tg.node_alphabet == ("p", "q")
    with pytest.raises(InvalidInputError):
        TypedGraph(triangle(), ("p",), ("x", "y", "x"))


# --- training ---------------------------------------------------------------


def _numeric_grad(fn, W, h=1e-6):
    G = np.zeros_like(W)
    for idx in np.ndindex(W.shape):
        old = W[idx]
        W[idx] = old + h
        up = fn()
        W[idx] = old - h
        down = fn()
        W[idx] = old
        G[idx] = (up - down) / (2 * h)
    return G


@pytest.mark.parametrize("shared", [True, False])
def test_gradients_match_finite_differences(shared):
    g, X, labels = make_two_community(n_per=5, seed=3)
    n = g.n
    specs = [
        LayerSpec(SupportTuple.of([range(5), range(3, n)], n), DegreeTuple((1, 2)), 3, Activation.RELU, shared),
        LayerSpec(_everything(n), DegreeTuple((1,)), 2, Activation.SOFTMAX),
    ]
    layers = init_layers(specs, X.shape[1], seed=4)
    A = normalized_adjacency_selfloops(g)
    _, grads, _ = loss_and_grads(A, X, labels, layers)
    for li, lay in enumerate(layers):
        for wi, W in enumerate(lay.weights):
            num = _numeric_grad(lambda: loss_and_grads(A, X, labels, layers)[0], W)
            assert np.linalg.norm(num - grads[li][wi]) <= 1e-5 * max(1.0, np.linalg.norm(num))


def test_loss_requires_softmax_output():
    g, X, labels = make_two_community(n_per=3, seed=0)
    layers = init_layers([LayerSpec(_everything(g.n), DegreeTuple((1,)), 2, Activation.RELU)], 2)
    with pytest.raises(InvalidInputError):
        loss_and_grads(normalized_adjacency_selfloops(g), X, labels, layers)


def test_training_separates_two_communities():
    g, X, labels = make_two_community(n_per=10, seed=0)
    spec = LayerSpec(_everything(g.n), DegreeTuple((1,)), 2, Activation.SOFTMAX)
    res = train_node_classifier(g, X, labels, [spec], epochs=200, lr=0.5, seed=0)
    assert res.final_accuracy == 1.0
    assert res.losses[-1] < res.losses[0]


def test_small_learning_rate_decreases_loss():
    g, X, labels = make_two_community(n_per=10, seed=1)
    spec = LayerSpec(_everything(g.n), DegreeTuple((1,)), 2, Activation.SOFTMAX)
    res = train_node_classifier(g, X, labels, [spec], epochs=10, lr=1e-2, seed=2)
    assert all(b < a for a, b in zip(res.losses, res.losses[1:]))


def test_zero_learning_rate_keeps_weights():
    g, X, labels = make_two_community(n_per=4, seed=1)
    layers = init_layers([LayerSpec(_everything(g.n), DegreeTuple((1,)), 2, Activation.SOFTMAX)], 2, seed=9)
    res = train_node_classifier(g, X, labels, layers, epochs=5, lr=0.0)
    for W0, W1 in zip(layers[0].weights, res.layers[0].weights):
        assert np.array_equal(W0, W1)
    assert len(set(res.losses)) == 1


def test_training_argument_checks():
    g, X, labels = make_two_community(n_per=3, seed=0)
    spec = LayerSpec(_everything(g.n), DegreeTuple((1,)), 2, Activation.SOFTMAX)
    with pytest.raises(InvalidInputError):
        train_node_classifier(g, X, labels, [spec], lr=-1.0)
    with pytest.raises(InvalidInputError):
        train_node_classifier(g, X, labels, [spec] * 3)


def test_masked_labels_only_count_observed_vertices():
    g, X, labels = make_two_community(n_per=4, seed=2)
    mask = tuple(i % 2 == 0 for i in range(g.n))
    masked = LabelVector(labels.labels, labels.classes, mask)
    layers = init_layers([LayerSpec(_everything(g.n), DegreeTuple((1,)), 2, Activation.SOFTMAX)], 2, seed=0)
    A = normalized_adjacency_selfloops(g)
    loss, _, probs = loss_and_grads(A, X, masked, layers)
    rows = np.flatnonzero(mask)
    y = np.asarray(labels.labels)
    assert loss == pytest.approx(float(-np.mean(np.log(probs[rows, y[rows]]))))
