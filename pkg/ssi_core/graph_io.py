from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any

import numpy as np

from ssi_core.errors import InvalidInputError
from ssi_core.filters import BankSpec, SsiFilter
from ssi_core.gnn import TypedGraph
from ssi_core.graph import Graph, VertexSet
from ssi_core.learning import ObservationSet
from ssi_core.models import (
    BankSpecModel,
    FeatureModel,
    GraphModel,
    LabelsModel,
    ObservationModel,
    SsiFilterModel,
    TypedGraphModel,
)


_HEADER_RE = re.compile(r"^\s*n\s+(\d+)\s+directed\s+([01])\s*$")
_EDGE_RE = re.compile(r"^\s*(\d+)\s+(\d+)(?:\s+(\S+))?\s*$")


def _weight_text(w: float) -> str:
    return str(int(w)) if float(w).is_integer() else repr(float(w))


def _weight_json(w: float) -> int | float:
    return int(w) if float(w).is_integer() else float(w)


# --- edge list text ---------------------------------------------------------


def parse_edge_list(text: str) -> Graph:
    """Header `n <count> directed <0|1>`, then one `u v [w]` per line; `#` starts a comment."""
    header: tuple[int, bool] | None = None
    edges: list[tuple[int, int, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if header is None:
            m = _HEADER_RE.match(line)
            if not m:
                raise InvalidInputError("edge-list-parse", f"line {lineno}: expected 'n <count> directed <0|1>'")
            header = (int(m.group(1)), m.group(2) == "1")
            continue
        m = _EDGE_RE.match(line)
        if not m:
            raise InvalidInputError("edge-list-parse", f"line {lineno}: expected 'u v [w]'")
        try:
            w = float(m.group(3)) if m.group(3) is not None else 1.0
        except ValueError:
            raise InvalidInputError("edge-list-parse", f"line {lineno}: bad weight {m.group(3)!r}") from None
        edges.append((int(m.group(1)), int(m.group(2)), w))
    if header is None:
        raise InvalidInputError("edge-list-parse", "missing header line")
    return Graph(header[0], tuple(edges), directed=header[1])


def format_edge_list(g: Graph) -> str:
    lines = [f"n {g.n} directed {int(g.directed)}"]
    lines += [f"{u} {v} {_weight_text(w)}" for u, v, w in g.edges]
    return "\n".join(lines) + "\n"


# --- JSON -------------------------------------------------------------------


def graph_from_model(m: GraphModel) -> Graph:
    return Graph(m.n, tuple(tuple(e) for e in m.edges), directed=m.directed)


def graph_to_json(g: Graph) -> dict[str, Any]:
    return {
        "n": g.n,
        "directed": g.directed,
        "edges": [[u, v, _weight_json(w)] for u, v, w in g.edges],
    }


def read_json(path: str | Path) -> Any:
    p = Path(path)
    if not p.is_file():
        raise InvalidInputError("file-not-found", str(p))
    return json.loads(p.read_text(encoding="utf-8"))


def write_json(obj: Any, path: str | Path) -> Path:
    p = Path(path)
    p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return p


def read_graph(path: str | Path) -> Graph:
    """JSON for `.json` files, edge-list text otherwise."""
    p = Path(path)
    if p.suffix.lower() == ".json":
        data = read_json(p)
        model = TypedGraphModel if "node_types" in data else GraphModel
        return graph_from_model(model.model_validate(data))
    if not p.is_file():
        raise InvalidInputError("file-not-found", str(p))
    return parse_edge_list(p.read_text(encoding="utf-8"))


def write_graph(g: Graph, path: str | Path) -> Path:
    p = Path(path)
    if p.suffix.lower() == ".json":
        return write_json(graph_to_json(g), p)
    p.write_text(format_edge_list(g), encoding="utf-8")
    return p


def read_typed_graph(path: str | Path) -> TypedGraph:
    m = TypedGraphModel.model_validate(read_json(path))
    return TypedGraph(graph_from_model(m), tuple(m.node_types), tuple(m.edge_types))


# --- banks and filters ------------------------------------------------------


def bank_spec_from_json(data: Any, n: int) -> BankSpec:
    m = BankSpecModel.model_validate(data)
    return BankSpec.of(m.C, m.D, n)


def read_bank_specs(path: str | Path, n: int) -> list[BankSpec]:
    """A single BankSpec object or a JSON list of them."""
    data = read_json(path)
    items = data if isinstance(data, list) else [data]
    return [bank_spec_from_json(d, n) for d in items]


def filter_from_json(data: Any, n: int) -> SsiFilter:
    m = SsiFilterModel.model_validate(data)
    return SsiFilter(BankSpec.of(m.C, m.D, n), tuple(tuple(r) for r in m.coeffs))


def filter_to_json(f: SsiFilter) -> dict[str, Any]:
    out = f.spec.as_dict()
    out["coeffs"] = [list(row) for row in f.coeffs]
    return out


# --- observations, features, labels -----------------------------------------


def observations_from_json(data: Any) -> ObservationSet:
    m = ObservationModel.model_validate(data)
    if len(set(m.V0)) != len(m.V0):
        raise InvalidInputError("invalid-vertex-set", "V0 has duplicates")
    order = np.argsort(m.V0, kind="stable")
    X = np.asarray(m.X, dtype=float).reshape(len(m.X), -1)
    Xp = np.asarray(m.Xp, dtype=float).reshape(len(m.Xp), -1)
    if X.shape[1] != len(m.V0) or Xp.shape[1] != len(m.V0):
        raise InvalidInputError("observation-shape", "X / Xp columns must match V0")
    # columns follow the sorted V0
    return ObservationSet(VertexSet.of(m.V0, m.n), X[:, order], Xp[:, order])


def read_features(path: str | Path) -> np.ndarray:
    m = FeatureModel.model_validate(read_json(path))
    X = np.asarray(m.X, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1 or not np.all(np.isfinite(X)):
        raise InvalidInputError("invalid-features", "X must be a finite n x f matrix with f >= 1")
    return X


def read_labels(path: str | Path) -> LabelsModel:
    return LabelsModel.model_validate(read_json(path))
