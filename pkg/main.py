from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from collections.abc import Callable
from typing import Any

import numpy as np
from pydantic import BaseModel, ValidationError

from ssi_core.config import Settings, load_settings
from ssi_core.errors import InvalidInputError, SsiError


logger = logging.getLogger("ssikit")

_KV_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*=\s*([-+0-9.eE]+)\s*$")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3


# --- config layering --------------------------------------------------------


def _parse_params(items: list[str] | None) -> dict[str, float]:
    out: dict[str, float] = {}
    for raw in items or []:
        m = _KV_RE.match(raw)
        if not m:
            raise InvalidInputError("invalid-graph-params", f"expected key=number, got {raw!r}")
        out[m.group(1)] = float(m.group(2))
    return out


def _config_file(args: argparse.Namespace) -> dict[str, Any]:
    """Contents of --config; a manifest contributes its `config` section."""
    path = getattr(args, "config", None)
    if not path:
        return {}
    from ssi_core.app import config_from_file

    return config_from_file(path)


def _overlay(base: dict[str, Any], args: argparse.Namespace, keys: dict[str, str]) -> dict[str, Any]:
    """Explicitly given flags win over the config file. `keys` maps arg dest -> config field."""
    out = dict(base)
    for dest, field in keys.items():
        v = getattr(args, dest, None)
        if v is not None:
            out[field] = v
    return out


def _overlay_graph(base: dict[str, Any], args: argparse.Namespace) -> dict[str, Any]:
    out = dict(base)
    graph = dict(out.get("graph") or {})
    params = _parse_params(getattr(args, "param", None))
    if getattr(args, "graph", None):
        graph = {"path": args.graph}
    elif getattr(args, "kind", None):
        graph = {"kind": args.kind, "params": params}
    elif params:
        graph["params"] = {**(graph.get("params") or {}), **params}
    if graph:
        out["graph"] = graph
    return out


_COMMON = {"seed": "seed", "tol": "tol", "out_dir": "out_dir", "threads": "threads"}


def _build_config(model: type[BaseModel], args: argparse.Namespace, keys: dict[str, str], graph: bool = True):
    data = _config_file(args)
    if graph:
        data = _overlay_graph(data, args)
    data = _overlay(data, args, {**_COMMON, **keys})
    return model.model_validate(data)


def _print_json(obj: Any) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


# --- commands ---------------------------------------------------------------


def cmd_bank_dim(args: argparse.Namespace, settings: Settings) -> int:
    """Dimension, essentiality and genericity of one bank, as JSON on stdout."""
    from ssi_core.app import run_bank_dim
    from ssi_core.models import BankDimConfig

    cfg = _build_config(
        BankDimConfig, args, {"spec": "spec", "shift": "shift", "perturb": "perturb", "spectrum": "spectrum"}
    )
    _print_json(run_bank_dim(cfg, settings))
    return EXIT_OK


def cmd_bank_lattice(args: argparse.Namespace, settings: Settings) -> int:
    from ssi_core.app import run_bank_lattice
    from ssi_core.models import BankLatticeConfig

    cfg = _build_config(
        BankLatticeConfig,
        args,
        {
            "specs": "specs",
            "max_d": "max_d",
            "max_k": "max_k",
            "max_set_size": "max_set_size",
            "shift": "shift",
            "perturb": "perturb",
            "bottom": "bottom",
        },
    )
    info = run_bank_lattice(cfg, settings)
    print(f"OK: lattice nodes={info['nodes']} edges={info['edges']} dot={info['dot']} json={info['json']}")
    return EXIT_OK


def cmd_learn(args: argparse.Namespace, settings: Settings) -> int:
    from ssi_core.app import run_learn
    from ssi_core.models import LearnRunConfig

    cfg = _build_config(
        LearnRunConfig,
        args,
        {
            "observations": "observations",
            "spec": "spec",
            "r": "r",
            "beta": "beta",
            "ridge": "ridge",
            "solver": "solver",
        },
    )
    info = run_learn(cfg, settings)
    print(
        f"OK: objective={info['objective']:.6g} data={info['data_term']:.6g} "
        f"coupling={info['coupling_term']:.6g} result={info['path']}"
    )
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace, settings: Settings) -> int:
    """
    Runs the recovery experiment grid. Base layer: Settings (SSI_DEFAULT_T / SSI_DEFAULT_BETAS),
    then --preset, then --config (config JSON or manifest), then explicit flags.
    """
    from ssi_core.app import run_experiment
    from ssi_core.models import ExperimentConfig
    from ssi_core.presets import load_presets

    data: dict[str, Any] = {}
    if settings.default_t:
        data["T"] = list(settings.default_t)
    if settings.default_betas:
        data["beta"] = list(settings.default_betas)
    data.setdefault("seed", settings.seed)
    if args.preset:
        presets = load_presets(settings.presets_path)
        if args.preset not in presets:
            raise InvalidInputError("unknown-preset", f"{args.preset!r}; known: {', '.join(sorted(presets))}")
        data.update(presets[args.preset].config)
    data.update(_config_file(args))
    data = _overlay_graph(data, args)
    data = _overlay(
        data,
        args,
        {
            "seed": "seed",
            "trials": "trials",
            "T": "T",
            "beta": "beta",
            "r": "r",
            "v0_fraction": "v0_fraction",
            "ridge": "ridge",
            "noise_std": "noise_std",
            "record_runtime": "record_runtime",
            "label": "label",
        },
    )
    cfg = ExperimentConfig.model_validate(data)
    paths = run_experiment(cfg, settings, out_dir=args.out_dir, threads=args.threads)
    print(f"OK: trials={paths['trials']} aggregate={paths['aggregate']} manifest={paths['manifest']}")
    return EXIT_OK


def cmd_homophily(args: argparse.Namespace, settings: Settings) -> int:
    from ssi_core.app import run_homophily
    from ssi_core.models import HomophilyConfig

    cfg = _build_config(
        HomophilyConfig, args, {"graph": "graph", "labels": "labels", "hops": "hops"}, graph=False
    )
    info = run_homophily(cfg, settings)
    print(f"OK: rows={info['rows']} csv={info['path']}")
    return EXIT_OK


def cmd_cluster(args: argparse.Namespace, settings: Settings) -> int:
    from ssi_core.app import run_cluster
    from ssi_core.models import ClusterConfig

    cfg = _build_config(
        ClusterConfig, args, {"features": "features", "k": "k", "max_iter": "max_iter"}, graph=False
    )
    info = run_cluster(cfg, settings)
    print(f"OK: k={info['k']} sizes={info['sizes']} clusters={info['path']}")
    return EXIT_OK


def cmd_semigcn_demo(args: argparse.Namespace, settings: Settings) -> int:
    from ssi_core.app import run_semigcn_demo
    from ssi_core.models import SemiGcnDemoConfig

    cfg = _build_config(
        SemiGcnDemoConfig,
        args,
        {
            "n_per": "n_per",
            "p_in": "p_in",
            "p_out": "p_out",
            "noise": "noise",
            "clusters": "clusters",
            "degree": "degree",
            "hidden": "hidden",
            "epochs": "epochs",
            "lr": "lr",
            "shared": "shared",
        },
        graph=False,
    )
    info = run_semigcn_demo(cfg, settings)
    print(f"OK: final_loss={info['final_loss']:.6g} final_accuracy={info['final_accuracy']:.3f} result={info['path']}")
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def _csv_ints(text: str) -> list[int]:
    try:
        return [int(p) for p in re.split(r"[,\s]+", text.strip()) if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from None


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(p) for p in re.split(r"[,\s]+", text.strip()) if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="Master seed (default: SSI_SEED)")
    common.add_argument("--tol", type=float, default=None, help="Rank / normality tolerance (default: SSI_TOL)")
    common.add_argument("--out-dir", dest="out_dir", default=None, help="Output directory (default: SSI_OUT_DIR)")
    common.add_argument("--config", default=None, help="JSON config for the subcommand; a manifest is accepted too")
    common.add_argument("--threads", type=int, default=None, help="Worker pool size (default: SSI_THREADS)")

    graph = argparse.ArgumentParser(add_help=False)
    graph.add_argument("--graph", default=None, help="Graph file: .json or edge-list text")
    graph.add_argument(
        "--kind",
        choices=["path", "cycle", "directed_cycle", "lattice", "erdos_renyi", "random_connected"],
        default=None,
        help="Generate a graph instead of reading one",
    )
    graph.add_argument("--param", action="append", default=None, help="Generator parameter key=value (repeatable)")

    shift = argparse.ArgumentParser(add_help=False)
    shift.add_argument(
        "--shift",
        choices=["adjacency", "laplacian", "normalized_adjacency", "normalized_laplacian"],
        default=None,
        help="Shift operator (default: laplacian)",
    )
    shift.add_argument("--perturb", type=float, default=None, help="Seeded diagonal perturbation scale (default: 0)")

    p = argparse.ArgumentParser(prog="ssikit", description="Semi shift invariant filter banks toolkit")
    sub = p.add_subparsers(dest="cmd", required=True)

    bd = sub.add_parser("bank-dim", parents=[common, graph, shift], help="Dimension of one filter bank")
    bd.add_argument("--spec", default=None, help="BankSpec JSON {C, D}")
    bd.add_argument("--spectrum", action="store_true", default=None, help="Include the shift eigenvalues")

    bl = sub.add_parser("bank-lattice", parents=[common, graph, shift], help="Hasse diagram of filter banks")
    bl.add_argument("--specs", default=None, help="JSON list of BankSpecs (default: enumerate)")
    bl.add_argument("--max-d", dest="max_d", type=int, default=None, help="Largest degree when enumerating")
    bl.add_argument("--max-k", dest="max_k", type=int, default=None, help="Largest tuple length when enumerating")
    bl.add_argument("--max-set-size", dest="max_set_size", type=int, default=None)
    bl.add_argument("--bottom", action="store_true", default=None, help="Adjoin the trivial bank")

    ln = sub.add_parser("learn", parents=[common, graph], help="Subgraph filter estimation on stored observations")
    ln.add_argument("--observations", default=None, help="ObservationSet JSON {n, V0, X, Xp}")
    ln.add_argument("--spec", default=None, help="BankSpec JSON (default: built from V0)")
    ln.add_argument("--r", type=int, default=None, help="Degree slack (default: 1)")
    ln.add_argument("--beta", type=float, default=None, help="Coupling weight (default: 0.6)")
    ln.add_argument("--ridge", type=float, default=None, help="Diagonal stabilizer (default: 1e-8)")
    ln.add_argument("--solver", choices=["closed_form", "alternating"], default=None)

    ex = sub.add_parser("experiment", parents=[common, graph], help="Recovery error experiment grid -> CSV")
    ex.add_argument("--preset", default=None, help="Named grid from presets.yaml (lattice, plant-standin, smoke)")
    ex.add_argument("--trials", type=int, default=None)
    ex.add_argument("--T", dest="T", type=_csv_ints, default=None, help="Sample counts, e.g. 10,20,30")
    ex.add_argument("--beta", type=_csv_floats, default=None, help="Coupling weights, e.g. 0,0.6")
    ex.add_argument("--r", type=int, default=None)
    ex.add_argument("--v0-fraction", dest="v0_fraction", type=float, default=None)
    ex.add_argument("--ridge", type=float, default=None)
    ex.add_argument("--noise-std", dest="noise_std", type=float, default=None)
    ex.add_argument("--record-runtime", dest="record_runtime", action="store_true", default=None)
    ex.add_argument("--label", default=None, help="Graph label written to the CSV")

    ho = sub.add_parser("homophily", parents=[common], help="Class homophily scores -> CSV")
    ho.add_argument("--graph", default=None, help="Graph file; typed JSON node types serve as labels")
    ho.add_argument("--labels", default=None, help="Labels JSON {labels, mask?}")
    ho.add_argument("--hops", type=_csv_ints, default=None, help="Hop distances, e.g. 1,2 (default: 1)")

    cl = sub.add_parser("cluster", parents=[common], help="k-means support construction")
    cl.add_argument("--features", default=None, help="Feature JSON {X}")
    cl.add_argument("--k", type=int, default=None)
    cl.add_argument("--max-iter", dest="max_iter", type=int, default=None)

    sg = sub.add_parser("semigcn-demo", parents=[common], help="Train a SemiGCN on a synthetic two-community graph")
    sg.add_argument("--n-per", dest="n_per", type=int, default=None)
    sg.add_argument("--p-in", dest="p_in", type=float, default=None)
    sg.add_argument("--p-out", dest="p_out", type=float, default=None)
    sg.add_argument("--noise", type=float, default=None)
    sg.add_argument("--clusters", type=int, default=None, help="k-means clusters forming the support")
    sg.add_argument("--degree", type=int, default=None, help="Propagation degree per subset")
    sg.add_argument("--hidden", type=int, default=None, help="Hidden width; 0 trains a single layer")
    sg.add_argument("--epochs", type=int, default=None)
    sg.add_argument("--lr", type=float, default=None)
    sg.add_argument("--unshared", dest="shared", action="store_false", default=None, help="Per-subset weights")

    return p


_COMMANDS: dict[str, Callable[[argparse.Namespace, Settings], int]] = {
    "bank-dim": cmd_bank_dim,
    "bank-lattice": cmd_bank_lattice,
    "learn": cmd_learn,
    "experiment": cmd_experiment,
    "homophily": cmd_homophily,
    "cluster": cmd_cluster,
    "semigcn-demo": cmd_semigcn_demo,
}


def run_command(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    try:
        settings = load_settings()
    except ValidationError as e:
        print(f"ERROR: invalid environment settings: {e}", file=sys.stderr)
        return EXIT_INVALID

    from ssi_core.app import configure_logging

    configure_logging(settings)

    try:
        return _COMMANDS[args.cmd](args, settings)
    except SsiError as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(f"ERROR: invalid config: {e}", file=sys.stderr)
        return EXIT_INVALID
    except json.JSONDecodeError as e:
        print(f"ERROR: malformed JSON: {e}", file=sys.stderr)
        return EXIT_INVALID
    except np.linalg.LinAlgError as e:
        logger.exception("Linear algebra failure in %s", args.cmd)
        print(f"ERROR: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, ValueError) as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_INVALID


def main(argv: list[str] | None = None) -> None:
    raise SystemExit(run_command(argv))


if __name__ == "__main__":
    main()
