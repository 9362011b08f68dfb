from __future__ import annotations

import logging
import math
import time

import numpy as np
import pandas as pd

from ssi_core.graph import Graph, VertexSet, laplacian, make_graph
from ssi_core.graph_io import read_graph
from ssi_core.learning import (
    LearnConfig,
    LearnResult,
    ObservationSet,
    baseline_gi,
    baseline_subgraph_si,
    build_support,
    learn,
    recovery_error,
)
from ssi_core.models import TRIAL_COLUMNS, ExperimentConfig, GraphKind, Method, ShiftKind, TrialRecord
from ssi_core.spectral import build_shift, random_signals_gft


logger = logging.getLogger("ssikit")

_RANDOM_KINDS = {GraphKind.ERDOS_RENYI, GraphKind.RANDOM_CONNECTED}


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream per (master seed, trial index), whatever order trials run in."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)))


def _trial_graph(cfg: ExperimentConfig, rng: np.random.Generator) -> Graph:
    src = cfg.graph
    if src.path:
        return read_graph(src.path)
    if src.kind in _RANDOM_KINDS:
        return make_graph(src.kind, src.params, seed=int(rng.integers(2**32)))
    return make_graph(src.kind, src.params)


def _sample_v0(cfg: ExperimentConfig, n: int, rng: np.random.Generator) -> VertexSet:
    if cfg.v0 is not None:
        return VertexSet.of(cfg.v0, n)
    size = min(n, max(1, int(round(cfg.v0_fraction * n))))
    return VertexSet.of(rng.choice(n, size=size, replace=False), n)


def run_trial(cfg: ExperimentConfig, trial: int, seed: int | None = None) -> list[TrialRecord]:
    """One draw of graph, V0, ground-truth filter and signals; every (T, method, beta) fit on it."""
    seed = cfg.seed if seed is None else seed
    rng = trial_rng(seed, trial)
    g = _trial_graph(cfg, rng)
    L = laplacian(g)
    s = build_shift(L, ShiftKind.LAPLACIAN)
    V0 = _sample_v0(cfg, g.n, rng)

    a = rng.uniform(0.0, 1.0, size=3)
    F_true = a[0] * np.eye(g.n) + a[1] * L + a[2] * (L @ L)

    t_max = max(cfg.T)
    Y_train = random_signals_gft(s, rng, t_max)
    Y_eval = random_signals_gft(s, rng, t_max)
    Z_train = Y_train @ F_true.T
    Z_eval = Y_eval @ F_true.T
    if cfg.noise_std > 0:
        Z_train = Z_train + rng.normal(0.0, cfg.noise_std, size=Z_train.shape)
        Z_eval = Z_eval + rng.normal(0.0, cfg.noise_std, size=Z_eval.shape)
    train_all = ObservationSet.from_signals(V0, Y_train, Z_train)
    eval_all = ObservationSet.from_signals(V0, Y_eval, Z_eval)

    spec = build_support(g, V0, cfg.r) if Method.SSI in cfg.methods else None
    v0_text = " ".join(map(str, V0.members))
    graph_label = cfg.graph_label()
    records: list[TrialRecord] = []

    def _record(method: Method, T: int, beta: float | None, fit, tr: ObservationSet, ev: ObservationSet, ms: float):
        records.append(
            TrialRecord(
                seed=seed,
                trial=trial,
                method=method,
                T=T,
                beta=beta,
                train_error=recovery_error(fit.F0, tr),
                eval_error=recovery_error(fit.F0, ev),
                objective=fit.objective,
                runtime_ms=ms if cfg.record_runtime else 0.0,
                graph=graph_label,
                v0=v0_text,
            )
        )

    for T in cfg.T:
        tr, ev = train_all.head(T), eval_all.head(T)
        for method in cfg.methods:
            if method == Method.SSI:
                for beta in cfg.beta:
                    t0 = time.perf_counter()
                    fit = learn(tr, spec, s, LearnConfig(r=cfg.r, beta=beta, ridge=cfg.ridge))
                    _record(method, T, beta, fit, tr, ev, (time.perf_counter() - t0) * 1e3)
                continue
            t0 = time.perf_counter()
            fit = _fit_baseline(method, cfg, tr, g, s)
            _record(method, T, None, fit, tr, ev, (time.perf_counter() - t0) * 1e3)
    return records


def _fit_baseline(method: Method, cfg: ExperimentConfig, obs: ObservationSet, g: Graph, s) -> LearnResult:
    if method == Method.SUBGRAPH_SI:
        return baseline_subgraph_si(obs, g, min(cfg.si_degree, len(obs.V0) - 1), cfg.ridge)
    return baseline_gi(obs, g, s, cfg.gi_bandwidth, min(cfg.gi_degree, g.n - 1), cfg.ridge)


def records_frame(records: list[TrialRecord]) -> pd.DataFrame:
    df = pd.DataFrame([r.row() for r in records], columns=TRIAL_COLUMNS)
    df["beta"] = pd.to_numeric(df["beta"])
    return df


def _se(x: pd.Series) -> float:
    if len(x) < 2:
        return 0.0
    return float(x.std(ddof=1) / math.sqrt(len(x)))


def aggregate_records(records: list[TrialRecord] | pd.DataFrame) -> pd.DataFrame:
    """Mean and standard error per (graph, method, T, beta)."""
    df = records if isinstance(records, pd.DataFrame) else records_frame(records)
    grouped = df.groupby(["graph", "method", "T", "beta"], dropna=False, sort=True)
    out = grouped.agg(
        trials=("trial", "count"),
        train_error_mean=("train_error", "mean"),
        train_error_se=("train_error", _se),
        eval_error_mean=("eval_error", "mean"),
        eval_error_se=("eval_error", _se),
    )
    return out.reset_index()


def paired_gap(
    df: pd.DataFrame,
    a: tuple[str, float | None],
    b: tuple[str, float | None],
    column: str = "eval_error",
) -> pd.DataFrame:
    """Per T: mean of (a - b) over trials and its standard error, methods paired by (graph, trial)."""

    def _pick(method: str, beta: float | None) -> pd.DataFrame:
        sel = df["method"] == method
        sel &= df["beta"].isna() if beta is None else np.isclose(df["beta"], beta)
        return df.loc[sel, ["graph", "trial", "T", column]]

    merged = _pick(*a).merge(_pick(*b), on=["graph", "trial", "T"], suffixes=("_a", "_b"))
    merged["diff"] = merged[f"{column}_a"] - merged[f"{column}_b"]
    out = merged.groupby("T")["diff"].agg(mean_diff="mean", se=_se, trials="count")
    return out.reset_index()
