from __future__ import annotations

import hashlib
import json
from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class GraphKind(str, Enum):
    PATH = "path"
    CYCLE = "cycle"
    DIRECTED_CYCLE = "directed_cycle"
    LATTICE = "lattice"
    ERDOS_RENYI = "erdos_renyi"
    RANDOM_CONNECTED = "random_connected"


class ShiftKind(str, Enum):
    ADJACENCY = "adjacency"
    LAPLACIAN = "laplacian"
    NORMALIZED_ADJACENCY = "normalized_adjacency"
    NORMALIZED_LAPLACIAN = "normalized_laplacian"
    CUSTOM = "custom"


class PolyBasis(str, Enum):
    # same span for every degree; CHEBYSHEV is only used where numerical rank matters
    MONOMIAL = "monomial"
    CHEBYSHEV = "chebyshev"


class Solver(str, Enum):
    CLOSED_FORM = "closed_form"
    ALTERNATING = "alternating"


class Activation(str, Enum):
    RELU = "relu"
    IDENTITY = "identity"
    SOFTMAX = "softmax"


class Method(str, Enum):
    SSI = "ssi"
    SUBGRAPH_SI = "subgraph_si"
    GI = "gi"


# --- file formats -----------------------------------------------------------


class GraphModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=0)
    directed: bool = False
    edges: list[tuple[int, int, float] | tuple[int, int]] = Field(default_factory=list)


class TypedGraphModel(GraphModel):
    node_types: list[str]
    edge_types: list[str]


class BankSpecModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    C: list[list[int]]
    D: list[int]


class SsiFilterModel(BankSpecModel):
    coeffs: list[list[float]]


class ObservationModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: int = Field(ge=1)
    V0: list[int]
    X: list[list[float]]
    Xp: list[list[float]]


class FeatureModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    X: list[list[float]]


class LabelsModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    labels: list[str]
    mask: list[bool] | None = None


# --- run configs ------------------------------------------------------------


class GraphSource(BaseModel):
    """Either a generator (`kind` + `params`) or a file (`path`)."""

    model_config = ConfigDict(extra="forbid")

    kind: GraphKind | None = None
    params: dict[str, float] = Field(default_factory=dict)
    path: str | None = None

    @model_validator(mode="after")
    def _one_source(self) -> "GraphSource":
        if (self.kind is None) == (self.path is None):
            raise ValueError("graph source needs exactly one of kind or path")
        return self

    def label(self) -> str:
        if self.path:
            return self.path
        ps = ",".join(f"{k}={_num(v)}" for k, v in sorted(self.params.items()))
        return f"{self.kind.value}({ps})" if ps else self.kind.value


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


class CommonConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int | None = None
    tol: float | None = Field(default=None, gt=0)
    out_dir: str | None = None
    threads: int | None = Field(default=None, ge=1)


class BankDimConfig(CommonConfig):
    graph: GraphSource
    spec: str
    shift: ShiftKind = ShiftKind.LAPLACIAN
    perturb: float = Field(default=0.0, ge=0)
    spectrum: bool = False


class BankLatticeConfig(CommonConfig):
    graph: GraphSource
    specs: str | None = None
    max_d: int = Field(default=1, ge=0)
    max_k: int | None = Field(default=None, ge=1)
    max_set_size: int | None = Field(default=None, ge=1)
    shift: ShiftKind = ShiftKind.LAPLACIAN
    perturb: float = Field(default=0.0, ge=0)
    bottom: bool = False


class LearnRunConfig(CommonConfig):
    graph: GraphSource
    observations: str
    spec: str | None = None
    r: int = Field(default=1, ge=0)
    beta: float = Field(default=0.6, ge=0, allow_inf_nan=False)
    ridge: float = Field(default=1e-8, ge=0, lt=1e-3)
    solver: Solver = Solver.CLOSED_FORM


class HomophilyConfig(CommonConfig):
    graph: str
    labels: str | None = None
    hops: list[int] = Field(default_factory=lambda: [1])

    @field_validator("hops")
    @classmethod
    def _positive_hops(cls, v: list[int]) -> list[int]:
        if not v or any(h < 1 for h in v):
            raise ValueError("hops must be positive integers")
        return v


class ClusterConfig(CommonConfig):
    features: str
    k: int = Field(ge=1)
    max_iter: int = Field(default=100, ge=1)


class SemiGcnDemoConfig(CommonConfig):
    n_per: int = Field(default=10, ge=2)
    p_in: float = Field(default=0.8, ge=0, le=1)
    p_out: float = Field(default=0.05, ge=0, le=1)
    noise: float = Field(default=0.1, ge=0)
    clusters: int = Field(default=2, ge=1)
    degree: int = Field(default=1, ge=0)
    hidden: int = Field(default=0, ge=0)
    epochs: int = Field(default=200, ge=0)
    lr: float = 0.5
    shared: bool = True


class ExperimentConfig(BaseModel):
    """Grid for the subgraph filter recovery experiment."""

    model_config = ConfigDict(extra="forbid")

    label: str | None = None
    graph: GraphSource = Field(
        default_factory=lambda: GraphSource(kind=GraphKind.LATTICE, params={"rows": 5, "cols": 9})
    )
    v0_fraction: float = Field(default=0.4, gt=0, le=1)
    v0: list[int] | None = None
    T: list[int] = Field(default_factory=lambda: [10, 20, 30, 40, 50, 60, 70, 80, 90, 100])
    beta: list[float] = Field(default_factory=lambda: [0.0, 0.2, 0.4, 0.6, 0.8, 1.0])
    r: int = Field(default=1, ge=0)
    trials: int = Field(default=100, ge=1)
    seed: int = Field(default=0, ge=0)
    ridge: float = Field(default=1e-8, ge=0, lt=1e-3)
    si_degree: int = Field(default=2, ge=0)
    gi_degree: int = Field(default=2, ge=0)
    gi_bandwidth: int | None = Field(default=None, ge=1)
    methods: list[Method] = Field(default_factory=lambda: [Method.SSI, Method.SUBGRAPH_SI, Method.GI])
    noise_std: float = Field(default=0.0, ge=0)
    record_runtime: bool = False

    @field_validator("T")
    @classmethod
    def _sorted_positive_t(cls, v: list[int]) -> list[int]:
        if not v or any(t < 1 for t in v):
            raise ValueError("T values must be positive")
        return sorted(set(v))

    @field_validator("beta")
    @classmethod
    def _finite_beta(cls, v: list[float]) -> list[float]:
        out = []
        for b in v:
            fb = float(b)
            if not (fb >= 0 and fb != float("inf")):
                raise ValueError("beta values must be finite and >= 0")
            out.append(fb)
        return out

    def graph_label(self) -> str:
        return self.label or self.graph.label()

    def fingerprint(self) -> str:
        data = json.dumps(self.model_dump(mode="json"), sort_keys=True).encode("utf-8")
        return hashlib.sha256(data).hexdigest()


# --- result rows ------------------------------------------------------------

TRIAL_COLUMNS = [
    "seed",
    "trial",
    "method",
    "T",
    "beta",
    "train_error",
    "eval_error",
    "objective",
    "runtime_ms",
    "graph",
    "v0",
]


class TrialRecord(BaseModel):
    seed: int
    trial: int
    method: Method
    T: int
    beta: float | None = None
    train_error: float
    eval_error: float
    objective: float
    runtime_ms: float = 0.0
    graph: str
    v0: str

    def row(self) -> dict[str, Any]:
        d = self.model_dump()
        d["method"] = self.method.value
        return d


class LearnResultModel(BaseModel):
    method: str
    objective: float
    data_term: float
    coupling_term: float
    F0: list[list[float]]
    spec: BankSpecModel | None = None
    coeffs: list[list[float]] | list[float] | None = None
    residual_history: list[float] = Field(default_factory=list)


class Manifest(BaseModel):
    tool: str = "ssikit"
    version: str
    command: str
    seed: int
    config: dict[str, Any]
    fingerprint: str | None = None
