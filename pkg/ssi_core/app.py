from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from ssi_core import __version__
from ssi_core.config import Settings
from ssi_core.errors import InvalidInputError
from ssi_core.experiment import aggregate_records, records_frame
from ssi_core.filters import DegreeTuple, bank_dimension, is_essential
from ssi_core.gnn import (
    LabelVector,
    LayerSpec,
    homophily_table,
    kmeans,
    lloyd,
    make_two_community,
    train_node_classifier,
)
from ssi_core.graph import Graph, laplacian, make_graph
from ssi_core.graph_io import (
    filter_to_json,
    observations_from_json,
    read_bank_specs,
    read_features,
    read_graph,
    read_json,
    read_labels,
    read_typed_graph,
    write_json,
)
from ssi_core.lattice import EnumerationLimits, build_lattice, dedup_banks, enumerate_banks, to_dot, to_json
from ssi_core.learning import LearnConfig, build_support, learn
from ssi_core.models import (
    Activation,
    BankDimConfig,
    BankLatticeConfig,
    ClusterConfig,
    ExperimentConfig,
    GraphSource,
    HomophilyConfig,
    LearnResultModel,
    LearnRunConfig,
    Manifest,
    SemiGcnDemoConfig,
    ShiftKind,
)
from ssi_core.runner import TrialRunner
from ssi_core.spectral import ShiftOperator, build_shift, genericity_check, shift_for


logger = logging.getLogger("ssikit")


def configure_logging(settings: Settings) -> None:
    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


# --- shared plumbing --------------------------------------------------------


def out_dir_for(cfg_out_dir: str | None, settings: Settings) -> Path:
    p = Path(cfg_out_dir or settings.out_dir)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InvalidInputError("output-not-writable", f"{p}: {e}") from None
    return p


def _write_text(path: Path, text: str) -> Path:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise InvalidInputError("output-not-writable", f"{path}: {e}") from None
    return path


def _write_json(path: Path, obj: Any) -> Path:
    try:
        return write_json(obj, path)
    except OSError as e:
        raise InvalidInputError("output-not-writable", f"{path}: {e}") from None


def _write_csv(path: Path, df: pd.DataFrame, float_format: str | None = "%.17g") -> Path:
    try:
        df.to_csv(path, index=False, float_format=float_format, na_rep="", lineterminator="\n")
    except OSError as e:
        raise InvalidInputError("output-not-writable", f"{path}: {e}") from None
    return path


def write_manifest(out_dir: Path, command: str, seed: int, config: dict[str, Any], fingerprint: str | None = None) -> Path:
    m = Manifest(version=__version__, command=command, seed=seed, config=config, fingerprint=fingerprint)
    return _write_json(out_dir / "manifest.json", m.model_dump(mode="json"))


def load_graph(src: GraphSource, seed: int | None) -> Graph:
    if src.path:
        return read_graph(src.path)
    return make_graph(src.kind, src.params, seed=seed)


def build_run_shift(g: Graph, kind: ShiftKind, perturb: float, seed: int, tol: float) -> ShiftOperator:
    """Shift of the requested kind, optionally plus a seeded diagonal perturbation U[0, perturb]."""
    if perturb <= 0:
        return shift_for(g, kind, tol)
    base = shift_for(g, kind, tol).S
    rng = np.random.default_rng(seed)
    M = np.real(base) + np.diag(rng.uniform(0.0, perturb, size=g.n))
    return build_shift(M, kind, tol)


# --- bank-dim ---------------------------------------------------------------


def run_bank_dim(cfg: BankDimConfig, settings: Settings) -> dict[str, Any]:
    seed = settings.seed if cfg.seed is None else cfg.seed
    tol = cfg.tol or settings.tol
    g = load_graph(cfg.graph, seed)
    specs = read_bank_specs(cfg.spec, g.n)
    if len(specs) != 1:
        raise InvalidInputError("expected-single-spec", f"{cfg.spec} holds {len(specs)} specs")
    spec = specs[0]
    s = build_run_shift(g, cfg.shift, cfg.perturb, seed, tol)

    dim = bank_dimension(spec, s, tol)
    essential = is_essential(spec.C)
    report = genericity_check(s)
    predicted = sum(spec.D) + spec.k if essential and report.generic else None
    if predicted is not None and predicted != dim:
        logger.warning("bank-dim: rank %s differs from predicted %s at tol=%s", dim, predicted, tol)
    out: dict[str, Any] = {
        "spec": spec.as_dict(),
        "dimension": dim,
        "essential": essential,
        "genericity": {**report.as_dict(), "generic": report.generic},
        "predicted_dimension": predicted,
    }
    if cfg.spectrum:
        out["eigenvalues"] = [[float(z.real), float(z.imag)] for z in s.eigenvalues]
    return out


# --- bank-lattice -----------------------------------------------------------


def run_bank_lattice(cfg: BankLatticeConfig, settings: Settings) -> dict[str, Any]:
    seed = settings.seed if cfg.seed is None else cfg.seed
    tol = cfg.tol or settings.tol
    g = load_graph(cfg.graph, seed)
    s = build_run_shift(g, cfg.shift, cfg.perturb, seed, tol)
    if cfg.specs:
        raw = read_bank_specs(cfg.specs, g.n)
    else:
        limits = None
        if cfg.max_k is not None or cfg.max_set_size is not None:
            limits = EnumerationLimits(max_k=cfg.max_k or 2, max_set_size=cfg.max_set_size)
        raw = enumerate_banks(g.n, cfg.max_d, limits, guard_n=settings.enum_guard_n)
    kept = dedup_banks(raw, s, tol)
    lat = build_lattice(kept, s, tol, adjoin_bottom=cfg.bottom)

    out = out_dir_for(cfg.out_dir, settings)
    dot_path = _write_text(out / "lattice.dot", to_dot(lat))
    json_path = _write_json(out / "lattice.json", to_json(lat))
    write_manifest(out, "bank-lattice", seed, cfg.model_dump(mode="json"))
    logger.info("Lattice: %s raw specs, %s nodes, %s edges -> %s", len(raw), len(lat.nodes), len(lat.edges), out)
    return {
        "raw_specs": len(raw),
        "nodes": len(lat.nodes),
        "edges": len(lat.edges),
        "dot": str(dot_path),
        "json": str(json_path),
    }


# --- learn ------------------------------------------------------------------


def run_learn(cfg: LearnRunConfig, settings: Settings) -> dict[str, Any]:
    seed = settings.seed if cfg.seed is None else cfg.seed
    tol = cfg.tol or settings.tol
    g = load_graph(cfg.graph, seed)
    obs = observations_from_json(read_json(cfg.observations))
    if obs.V0.ambient_n != g.n:
        raise InvalidInputError("dimension-mismatch", f"observations on n={obs.V0.ambient_n}, graph has n={g.n}")
    if cfg.spec:
        specs = read_bank_specs(cfg.spec, g.n)
        if len(specs) != 1:
            raise InvalidInputError("expected-single-spec", f"{cfg.spec} holds {len(specs)} specs")
        spec = specs[0]
    else:
        spec = build_support(g, obs.V0, cfg.r)
    s = build_shift(laplacian(g), ShiftKind.LAPLACIAN, tol)
    res = learn(obs, spec, s, LearnConfig(r=cfg.r, beta=cfg.beta, ridge=cfg.ridge, tol=tol, solver=cfg.solver))

    model = LearnResultModel(
        method=res.method,
        objective=res.objective,
        data_term=res.data_term,
        coupling_term=res.coupling_term,
        F0=res.F0.tolist(),
        spec=spec.as_dict(),
        coeffs=filter_to_json(res.F)["coeffs"] if res.F is not None else None,
        residual_history=list(res.residual_history),
    )
    out = out_dir_for(cfg.out_dir, settings)
    path = _write_json(out / "learn_result.json", model.model_dump(mode="json"))
    write_manifest(out, "learn", seed, cfg.model_dump(mode="json"))
    return {"objective": res.objective, "data_term": res.data_term, "coupling_term": res.coupling_term, "path": str(path)}


# --- experiment -------------------------------------------------------------


def run_experiment(
    cfg: ExperimentConfig,
    settings: Settings,
    out_dir: str | None = None,
    threads: int | None = None,
) -> dict[str, Path]:
    out = out_dir_for(out_dir, settings)
    workers = threads or settings.threads
    logger.info(
        "Experiment: graph=%s trials=%s T=%s beta=%s threads=%s seed=%s",
        cfg.graph_label(),
        cfg.trials,
        cfg.T,
        cfg.beta,
        workers,
        cfg.seed,
    )
    records = TrialRunner(cfg, threads=workers).run()
    df = records_frame(records)
    agg = aggregate_records(df)

    trials_path = _write_csv(out / "trials.csv", df)
    agg_path = _write_csv(out / "aggregate.csv", agg)
    manifest_path = write_manifest(out, "experiment", cfg.seed, cfg.model_dump(mode="json"), cfg.fingerprint())
    logger.info("Experiment: %s rows written to %s", len(df), out)
    return {"trials": trials_path, "aggregate": agg_path, "manifest": manifest_path}


def config_from_file(path: str) -> dict[str, Any]:
    """Config fields from a config JSON or from the `config` section of a previously written manifest."""
    data = read_json(path)
    if not isinstance(data, dict):
        raise InvalidInputError("invalid-config", f"{path}: expected a JSON object")
    if data.get("tool") == "ssikit" and isinstance(data.get("config"), dict):
        return dict(data["config"])
    return data


# --- homophily / cluster / semigcn-demo ------------------------------------


def run_homophily(cfg: HomophilyConfig, settings: Settings) -> dict[str, Any]:
    seed = settings.seed if cfg.seed is None else cfg.seed
    if cfg.labels:
        g = read_graph(cfg.graph)
        lm = read_labels(cfg.labels)
        if len(lm.labels) != g.n:
            raise InvalidInputError("invalid-labels", f"{len(lm.labels)} labels for n={g.n}")
        labels = LabelVector.from_names(lm.labels, lm.mask)
    else:
        # без файла меток классами служат типы вершин
        tg = read_typed_graph(cfg.graph)
        g = tg.graph
        labels = LabelVector.from_names(tg.node_types)

    rows = homophily_table(g, labels, cfg.hops)
    df = pd.DataFrame(rows, columns=["class", "hops", "score", "count"])
    out = out_dir_for(cfg.out_dir, settings)
    path = _write_csv(out / "homophily.csv", df, float_format=None)
    write_manifest(out, "homophily", seed, cfg.model_dump(mode="json"))
    return {"rows": len(df), "path": str(path)}


def run_cluster(cfg: ClusterConfig, settings: Settings) -> dict[str, Any]:
    seed = settings.seed if cfg.seed is None else cfg.seed
    X = read_features(cfg.features)
    res = lloyd(X, cfg.k, seed=seed, max_iter=cfg.max_iter)
    out = out_dir_for(cfg.out_dir, settings)
    path = _write_json(
        out / "clusters.json",
        {
            "clusters": res.support.as_lists(),
            "objective": list(res.objective_history),
            "iterations": res.iterations,
        },
    )
    write_manifest(out, "cluster", seed, cfg.model_dump(mode="json"))
    return {"k": cfg.k, "sizes": [len(V) for V in res.support], "path": str(path)}


def run_semigcn_demo(cfg: SemiGcnDemoConfig, settings: Settings) -> dict[str, Any]:
    seed = settings.seed if cfg.seed is None else cfg.seed
    g, X, labels = make_two_community(cfg.n_per, cfg.p_in, cfg.p_out, cfg.noise, seed=seed)
    support = kmeans(X, cfg.clusters, seed=seed)
    degrees = tuple([cfg.degree] * len(support))
    D = DegreeTuple(degrees)
    n_classes = len(labels.classes)
    if cfg.hidden > 0:
        specs = [
            LayerSpec(support, D, cfg.hidden, Activation.RELU, cfg.shared),
            LayerSpec(support, D, n_classes, Activation.SOFTMAX, cfg.shared),
        ]
    else:
        specs = [LayerSpec(support, D, n_classes, Activation.SOFTMAX, cfg.shared)]
    res = train_node_classifier(g, X, labels, specs, epochs=cfg.epochs, lr=cfg.lr, seed=seed)

    out = out_dir_for(cfg.out_dir, settings)
    path = _write_json(
        out / "semigcn.json",
        {
            "support": support.as_lists(),
            "degrees": list(degrees),
            "losses": list(res.losses),
            "accuracy": list(res.accuracy),
            "final_loss": res.final_loss,
            "final_accuracy": res.final_accuracy,
        },
    )
    write_manifest(out, "semigcn-demo", seed, cfg.model_dump(mode="json"))
    return {"final_loss": res.final_loss, "final_accuracy": res.final_accuracy, "path": str(path)}
