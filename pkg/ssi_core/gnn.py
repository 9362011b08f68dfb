from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import networkx as nx
import numpy as np

from ssi_core.errors import InvalidInputError, NumericalError
from ssi_core.filters import DegreeTuple, SupportTuple
from ssi_core.graph import Graph, normalized_adjacency_selfloops
from ssi_core.models import Activation


logger = logging.getLogger("ssikit")


# --- types ------------------------------------------------------------------


@dataclass(frozen=True)
class LabelVector:
    """Class ids per vertex; `classes[c]` is the name of class c."""

    labels: tuple[int, ...]
    classes: tuple[str, ...]
    mask: tuple[bool, ...] | None = None

    def __post_init__(self) -> None:
        labels = tuple(int(x) for x in self.labels)
        if any(not 0 <= x < len(self.classes) for x in labels):
            raise InvalidInputError("invalid-labels", "class id outside the declared classes")
        if self.mask is not None and len(self.mask) != len(labels):
            raise InvalidInputError("invalid-labels", "mask length differs from label count")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_names(cls, names: Sequence[str], mask: Sequence[bool] | None = None) -> "LabelVector":
        classes = tuple(sorted(set(names)))
        pos = {c: i for i, c in enumerate(classes)}
        return cls(tuple(pos[x] for x in names), classes, None if mask is None else tuple(bool(b) for b in mask))

    @property
    def n(self) -> int:
        return len(self.labels)

    def observed(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.n, dtype=bool)
        return np.asarray(self.mask, dtype=bool)

    def class_id(self, eta: str | int) -> int:
        if isinstance(eta, str):
            if eta not in self.classes:
                raise InvalidInputError("class-absent", f"class {eta!r} not present")
            return self.classes.index(eta)
        if eta not in self.labels:
            raise InvalidInputError("class-absent", f"class {eta!r} not present")
        return int(eta)


@dataclass(frozen=True, eq=False)
class TypedGraph:
    graph: Graph
    node_types: tuple[str, ...]
    edge_types: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.node_types) != self.graph.n:
            raise InvalidInputError("invalid-typed-graph", "one node type per vertex required")
        if len(self.edge_types) != len(self.graph.edges):
            raise InvalidInputError("invalid-typed-graph", "one edge type per edge required")

    @property
    def node_alphabet(self) -> tuple[str, ...]:
        return tuple(sorted(set(self.node_types)))

    @property
    def edge_alphabet(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(self.edge_types))


@dataclass(frozen=True, eq=False)
class SemiGcnLayer:
    """sigma( sum_j sum_{i <= d_j} P_{V_j} A~^i H W_i ).

    With `shared` the weights are W_0..W_max(D), one per power; otherwise one per (j, i) in order.
    """

    support: SupportTuple
    degrees: DegreeTuple
    weights: tuple[np.ndarray, ...]
    activation: Activation = Activation.RELU
    shared: bool = True

    def __post_init__(self) -> None:
        if len(self.support) != len(self.degrees):
            raise InvalidInputError("length-mismatch", "support and degrees differ in length")
        weights = tuple(np.array(W, dtype=float, ndmin=2) for W in self.weights)
        expected = max(self.degrees) + 1 if self.shared else sum(d + 1 for d in self.degrees)
        if len(weights) != expected:
            raise InvalidInputError("weight-count", f"{len(weights)} weights, expected {expected}")
        if len({W.shape for W in weights}) != 1:
            raise InvalidInputError("shape-mismatch", "all weight matrices must share one shape")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "activation", Activation(self.activation))

    @property
    def f_in(self) -> int:
        return self.weights[0].shape[0]

    @property
    def f_out(self) -> int:
        return self.weights[0].shape[1]

    def terms(self) -> list[tuple[int, np.ndarray, int]]:
        """(power i, row multiplier, weight index) for every summand, in evaluation order."""
        n = self.support.ambient_n
        if self.shared:
            out = []
            for i in range(max(self.degrees) + 1):
                mult = np.zeros(n)
                for V, d in zip(self.support, self.degrees):
                    if d >= i:
                        mult += V.indicator()
                out.append((i, mult, i))
            return out
        out, w = [], 0
        for V, d in zip(self.support, self.degrees):
            ind = V.indicator()
            for i in range(d + 1):
                out.append((i, ind, w))
                w += 1
        return out

    def with_weights(self, weights: Sequence[np.ndarray]) -> "SemiGcnLayer":
        return SemiGcnLayer(self.support, self.degrees, tuple(weights), self.activation, self.shared)


@dataclass(frozen=True)
class LayerSpec:
    support: SupportTuple
    degrees: DegreeTuple
    f_out: int
    activation: Activation = Activation.RELU
    shared: bool = True


@dataclass(frozen=True, eq=False)
class KMeansResult:
    support: SupportTuple
    labels: np.ndarray
    centroids: np.ndarray
    objective_history: tuple[float, ...]
    iterations: int


@dataclass(frozen=True, eq=False)
class TrainResult:
    layers: tuple[SemiGcnLayer, ...]
    losses: tuple[float, ...]
    accuracy: tuple[float, ...]
    final_loss: float
    final_accuracy: float
    predictions: np.ndarray = field(repr=False)


# --- homophily --------------------------------------------------------------


def homophily_detail(g: Graph, labels: LabelVector, eta: str | int, hops: int = 1) -> tuple[Fraction | float, int]:
    """(score, number of class-eta vertices that have at least one exact-h-hop neighbour)."""
    if labels.n != g.n:
        raise InvalidInputError("invalid-labels", f"{labels.n} labels for n={g.n}")
    if hops < 1:
        raise InvalidInputError("invalid-hops", "hops must be >= 1")
    c = labels.class_id(eta)
    lab = np.asarray(labels.labels)
    D = g.hops
    total = Fraction(0)
    count = 0
    for v in np.flatnonzero(lab == c):
        ring = np.flatnonzero(D[v] == hops)
        if ring.size == 0:
            continue
        total += Fraction(int(np.count_nonzero(lab[ring] == c)), int(ring.size))
        count += 1
    if count == 0:
        return float("nan"), 0
    return total / count, count


def homophily_score(g: Graph, labels: LabelVector, eta: str | int, hops: int = 1) -> Fraction | float:
    """Mean same-label fraction among exact-h-hop neighbours; exact Fraction, NaN if nothing to average."""
    return homophily_detail(g, labels, eta, hops)[0]


def homophily_table(g: Graph, labels: LabelVector, hops: Sequence[int] = (1,)) -> list[dict]:
    rows = []
    for name in labels.classes:
        if labels.class_id(name) not in labels.labels:
            continue
        for h in hops:
            score, count = homophily_detail(g, labels, name, h)
            rows.append({"class": name, "hops": int(h), "score": float(score), "count": count})
    return rows


# --- k-means ----------------------------------------------------------------


def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)


def lloyd(X: np.ndarray, k: int, seed: int | None = 0, max_iter: int = 100) -> KMeansResult:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError("invalid-k", f"k={k} not in [1, n={n}]")
    rng = np.random.default_rng(seed)
    centroids = X[rng.choice(n, size=k, replace=False)].copy()
    labels = np.full(n, -1)
    history: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(X, centroids)
        new = d2.argmin(axis=1)
        for c in range(k):
            if np.any(new == c):
                continue
            # пустой кластер: забираем самую далекую точку из кластера размером >= 2
            cost = d2[np.arange(n), new]
            sizes = np.bincount(new, minlength=k)
            cost[sizes[new] < 2] = -1.0
            far = int(cost.argmax())
            logger.warning("k-means: cluster %s empty, re-seeded from point %s", c, far)
            new[far] = c
            centroids[c] = X[far]
        centroids = np.vstack([X[new == c].mean(axis=0) for c in range(k)])
        obj = float(((X - centroids[new]) ** 2).sum())
        if history and obj > history[-1] + 1e-12 * max(1.0, history[-1]):
            raise NumericalError("kmeans-objective-increased", f"{history[-1]!r} -> {obj!r}")
        history.append(obj)
        if np.array_equal(new, labels):
            break
        labels = new

    groups = sorted((np.flatnonzero(labels == c) for c in range(k)), key=lambda ix: int(ix[0]))
    support = SupportTuple.of([g.tolist() for g in groups], n)
    logger.debug("k-means: k=%s iterations=%s objective=%.6g", k, it, history[-1])
    return KMeansResult(support, labels, centroids, tuple(history), it)


def kmeans(X: np.ndarray, k: int, seed: int | None = 0, max_iter: int = 100) -> SupportTuple:
    return lloyd(X, k, seed, max_iter).support


# --- layers -----------------------------------------------------------------


def _activate(Z: np.ndarray, act: Activation) -> np.ndarray:
    if act == Activation.RELU:
        return np.maximum(Z, 0.0)
    if act == Activation.SOFTMAX:
        E = np.exp(Z - Z.max(axis=1, keepdims=True))
        return E / E.sum(axis=1, keepdims=True)
    return Z


def gcn_layer(H: np.ndarray, A_tilde: np.ndarray, W: np.ndarray, activation: Activation = Activation.RELU) -> np.ndarray:
    """sigma(A~ H W)."""
    return _activate((A_tilde @ H) @ W, Activation(activation))


def _forward_layer(H: np.ndarray, A_tilde: np.ndarray, layer: SemiGcnLayer) -> tuple[np.ndarray, list[np.ndarray]]:
    n = layer.support.ambient_n
    if H.ndim != 2 or H.shape != (n, layer.f_in) or A_tilde.shape != (n, n):
        raise InvalidInputError("shape-mismatch", f"H {H.shape}, A {A_tilde.shape}, layer {n}x{layer.f_in}")
    powers = [H]
    for _ in range(max(layer.degrees)):
        powers.append(A_tilde @ powers[-1])
    Z = np.zeros((n, layer.f_out))
    for i, mult, w in layer.terms():
        Z = Z + mult[:, None] * (powers[i] @ layer.weights[w])
    return Z, powers


def semigcn_layer(H: np.ndarray, g: Graph, layer: SemiGcnLayer, A_tilde: np.ndarray | None = None) -> np.ndarray:
    A = normalized_adjacency_selfloops(g) if A_tilde is None else A_tilde
    Z, _ = _forward_layer(np.asarray(H, dtype=float), A, layer)
    return _activate(Z, layer.activation)


def heterogeneous_support(tg: TypedGraph) -> SupportTuple:
    """One set per edge type (first-appearance order) holding every endpoint of that type."""
    if not tg.edge_types:
        raise InvalidInputError("no-edge-types", "typed graph has no edges")
    groups: dict[str, set[int]] = {}
    for (u, v, _), t in zip(tg.graph.edges, tg.edge_types):
        groups.setdefault(t, set()).update((u, v))
    return SupportTuple.of(list(groups.values()), tg.graph.n)


def init_layers(specs: Sequence[LayerSpec], f_in: int, seed: int | None = 0) -> list[SemiGcnLayer]:
    """Glorot-uniform weights, seeded."""
    rng = np.random.default_rng(seed)
    layers, width = [], f_in
    for sp in specs:
        count = max(sp.degrees) + 1 if sp.shared else sum(d + 1 for d in sp.degrees)
        limit = np.sqrt(6.0 / (width + sp.f_out))
        ws = tuple(rng.uniform(-limit, limit, size=(width, sp.f_out)) for _ in range(count))
        layers.append(SemiGcnLayer(sp.support, sp.degrees, ws, sp.activation, sp.shared))
        width = sp.f_out
    return layers


# --- training ---------------------------------------------------------------


def loss_and_grads(
    A_tilde: np.ndarray,
    X: np.ndarray,
    labels: LabelVector,
    layers: Sequence[SemiGcnLayer],
) -> tuple[float, list[list[np.ndarray]], np.ndarray]:
    """Masked mean cross-entropy of the softmax output, its weight gradients, and the class probabilities."""
    if not layers or layers[-1].activation != Activation.SOFTMAX:
        raise InvalidInputError("invalid-layers", "last layer must use the softmax activation")
    if any(lay.activation == Activation.SOFTMAX for lay in layers[:-1]):
        raise InvalidInputError("invalid-layers", "softmax only allowed on the last layer")
    mask = labels.observed()
    m = int(mask.sum())
    if m == 0:
        raise InvalidInputError("invalid-labels", "no observed labels")

    H = np.asarray(X, dtype=float)
    caches = []
    for lay in layers:
        Z, powers = _forward_layer(H, A_tilde, lay)
        caches.append((Z, powers))
        H = _activate(Z, lay.activation)
    probs = H

    y = np.asarray(labels.labels)
    rows = np.flatnonzero(mask)
    loss = float(-np.mean(np.log(np.clip(probs[rows, y[rows]], 1e-300, None))))

    dZ = probs.copy()
    dZ[rows, y[rows]] -= 1.0
    dZ[~mask] = 0.0
    dZ /= m

    grads: list[list[np.ndarray]] = [[] for _ in layers]
    for li in range(len(layers) - 1, -1, -1):
        lay = layers[li]
        Z, powers = caches[li]
        if li < len(layers) - 1 and lay.activation == Activation.RELU:
            dZ = dZ * (Z > 0)
        gW = [np.zeros_like(W) for W in lay.weights]
        dP = [np.zeros_like(P) for P in powers]
        for i, mult, w in lay.terms():
            G = mult[:, None] * dZ
            gW[w] += powers[i].T @ G
            dP[i] += G @ lay.weights[w].T
        grads[li] = gW
        if li == 0:
            break
        # dH = sum_i (A~^T)^i dP_i
        dH = dP[-1]
        for i in range(len(dP) - 2, -1, -1):
            dH = A_tilde.T @ dH + dP[i]
        dZ = dH
    return loss, grads, probs


def _accuracy(probs: np.ndarray, labels: LabelVector) -> float:
    mask = labels.observed()
    pred = probs.argmax(axis=1)
    return float(np.mean(pred[mask] == np.asarray(labels.labels)[mask]))


def train_node_classifier(
    g: Graph,
    X: np.ndarray,
    labels: LabelVector,
    layers: Sequence[SemiGcnLayer | LayerSpec],
    epochs: int = 200,
    lr: float = 0.1,
    seed: int | None = 0,
) -> TrainResult:
    """Full-batch gradient descent on the masked cross-entropy."""
    if lr < 0:
        raise InvalidInputError("invalid-lr", "learning rate must be >= 0")
    if not 1 <= len(layers) <= 2:
        raise InvalidInputError("invalid-layers", "one or two layers supported")
    X = np.asarray(X, dtype=float)
    if any(isinstance(lay, LayerSpec) for lay in layers):
        specs = [lay for lay in layers if isinstance(lay, LayerSpec)]
        if len(specs) != len(layers):
            raise InvalidInputError("invalid-layers", "pass either all LayerSpecs or all SemiGcnLayers")
        layers = init_layers(specs, X.shape[1], seed)
    layers = list(layers)
    A = normalized_adjacency_selfloops(g)

    losses, accs = [], []
    for epoch in range(epochs):
        loss, grads, probs = loss_and_grads(A, X, labels, layers)
        losses.append(loss)
        accs.append(_accuracy(probs, labels))
        if lr > 0:
            layers = [
                lay.with_weights([W - lr * dW for W, dW in zip(lay.weights, gW)]) for lay, gW in zip(layers, grads)
            ]
        if epoch % 50 == 0:
            logger.debug("train: epoch=%s loss=%.6f acc=%.3f", epoch, loss, accs[-1])
    loss, _, probs = loss_and_grads(A, X, labels, layers)
    return TrainResult(
        layers=tuple(layers),
        losses=tuple(losses),
        accuracy=tuple(accs),
        final_loss=loss,
        final_accuracy=_accuracy(probs, labels),
        predictions=probs.argmax(axis=1),
    )


def make_two_community(
    n_per: int = 10,
    p_in: float = 0.8,
    p_out: float = 0.05,
    noise: float = 0.1,
    seed: int | None = 0,
) -> tuple[Graph, np.ndarray, LabelVector]:
    """Two dense communities; features are the community indicator plus Gaussian noise."""
    rng = np.random.default_rng(seed)
    G = nx.stochastic_block_model([n_per, n_per], [[p_in, p_out], [p_out, p_in]], seed=int(rng.integers(2**32)))
    edges = tuple((int(u), int(v), 1.0) for u, v in G.edges())
    g = Graph(2 * n_per, edges)
    y = np.repeat([0, 1], n_per)
    X = np.eye(2)[y] + noise * rng.standard_normal((2 * n_per, 2))
    labels = LabelVector(tuple(int(c) for c in y), ("c0", "c1"))
    return g, X, labels
