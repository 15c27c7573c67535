"""Command-line entry point.

Subcommands:

``run``       run an experiment and write the SINR, histogram and summary files
``validate``  parse and check a config without running anything
``paths``     dump the propagation paths of every cluster (JSON)
``kernels``   dump the covariance matrices of every cluster (JSON)

Exit status is 2 for configuration errors and 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .channel import ChannelError, prior_pair_cov, spatial_cov, temporal_cov
from .config import ConfigError, ExperimentConfig, bundled_config, load_config
from .harness import TrialContext, export, run_experiment, run_trial, write_predictions
from .topology import NodeLocation, l1_distance, split_los_nlos

log = logging.getLogger("mmwave_relay")


def _resolve(name: str) -> ExperimentConfig:
    """Load ``name`` from disk, falling back to a shipped config of that stem."""
    path = Path(name)
    if path.exists():
        return load_config(path)
    try:
        data = bundled_config(Path(name).stem)
    except (FileNotFoundError, OSError):
        raise ConfigError(f"config {name} not found") from None
    return load_config(data)


def _window(text: str):
    if text.lower() in ("none", "inf"):
        return "none"
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError("window must be an integer or 'none'") from None
    return value


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    kw = {
        "trials": args.trials,
        "seed": args.seed,
        "n_s": args.scenarios,
        "policies": args.policies.split(",") if args.policies else None,
        "selection_period": args.selection_period,
        "delta": args.delta,
        "averaging": args.averaging,
        "workers": args.workers,
    }
    if args.window == "none":
        data = cfg.to_dict()
        data["experiment"]["window"] = None
        cfg = ExperimentConfig.from_dict(data)
    elif args.window is not None:
        kw["window"] = args.window
    return cfg.with_overrides(**kw)


def _cmd_validate(cfg: ExperimentConfig, args) -> int:
    topo = cfg.topology
    print(f"ok: {topo.graph.n_nodes} intersections, {topo.graph.n_edges} segments, "
          f"{topo.n_clusters} clusters, config hash {cfg.digest()}")
    return 0


def _path_record(path, graph, start: NodeLocation, end_entry: int, tau_r: int) -> dict:
    los, nlos = split_los_nlos(path, exclude=tau_r)
    seg = graph.segments[tau_r]
    entry_loc = NodeLocation(tau_r, 0.0 if seg.a == end_entry else seg.length)
    return {
        "segments": list(path.segments),
        "los": los,
        "nlos": list(nlos),
        "intersections": path.n_intersections,
        "length_to_entry": path.length,
        "l1_distance": l1_distance(graph, start, entry_loc),
    }


def _cmd_paths(cfg: ExperimentConfig, args) -> int:
    topo = cfg.topology
    g = topo.graph
    clusters = []
    for cp in topo.clusters:
        pl = cp.placement
        clusters.append({
            "id": pl.id,
            "segment": pl.segment,
            "delta": pl.delta,
            "f_entry": pl.f_entry,
            "g_entry": pl.g_entry,
            "L": len(cp.f_paths),
            "K": len(cp.g_paths),
            "f_paths": [_path_record(p, g, topo.source, pl.f_entry, pl.segment) for p in cp.f_paths],
            "g_paths": [_path_record(p, g, topo.destination, pl.g_entry, pl.segment) for p in cp.g_paths],
            "unique_f": cp.unique_segments("f"),
            "unique_g": cp.unique_segments("g"),
        })
    free = topo.cluster_free_segments()
    out = {
        "clusters": clusters,
        "cluster_free_segments": free,
        "n_cluster_free_segments": len(free),
    }
    print(json.dumps(out, indent=2))
    return 0


def _min_eig(mat) -> float:
    return float(np.linalg.eigvalsh(mat).min())


def _cmd_kernels(cfg: ExperimentConfig, args) -> int:
    p = cfg.channel
    sigma_t = temporal_cov(p.n_t, p.eta2, p.gamma, p.sigma_xi2)
    clusters = []
    for cp in cfg.topology.clusters:
        pl = cp.placement
        K = spatial_cov(pl, p)
        K_bar = prior_pair_cov(pl, p)
        clusters.append({
            "id": pl.id,
            "delta": pl.delta,
            "K": K.tolist(),
            "K_bar": K_bar.tolist(),
            "min_eig_K": _min_eig(K),
            "min_eig_K_bar": _min_eig(K_bar),
        })
    out = {
        "sigma_xi2": p.sigma_xi2,
        "temporal_cov": sigma_t.tolist(),
        "min_eig_temporal_cov": _min_eig(sigma_t),
        "clusters": clusters,
    }
    print(json.dumps(out, indent=2))
    return 0


def _cmd_run(cfg: ExperimentConfig, args) -> int:
    stats = run_experiment(cfg, progress=not args.quiet)
    files = export(stats, cfg, args.out)
    if args.dump_predictions:
        res = run_trial(TrialContext(cfg), 0, record_predictions=True)
        files["predictions"] = write_predictions(res.predictions or [], args.dump_predictions)
    for p in stats.policies:
        log.info("%-20s grand mean %.2f dB", p, stats.grand_mean_db[p])
    for kind, path in files.items():
        print(f"{kind}: {path}")
    return 0


COMMANDS = {"run": _cmd_run, "validate": _cmd_validate, "paths": _cmd_paths, "kernels": _cmd_kernels}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmrelay", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True,
                        help="JSON config path, or the name of a shipped config (e.g. paper4)")
        sp.add_argument("--trials", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--scenarios", type=int, help="SAA scenarios per selection")
        sp.add_argument("--policies", help="comma-separated policy list")
        sp.add_argument("--window", type=_window, help="GP history window in slots, or 'none'")
        sp.add_argument("--delta", type=int, help="override the positions per cluster")
        sp.add_argument("--selection-period", type=int)
        sp.add_argument("--averaging", choices=["linear", "db"])
        sp.add_argument("--workers", type=int, help="parallel trial processes")
        if name == "run":
            sp.add_argument("--out", default="results", help="output directory")
            sp.add_argument("--dump-predictions", metavar="CSV",
                            help="also write the predictor outputs of trial 0")
            sp.add_argument("-q", "--quiet", action="store_true", help="no progress on stderr")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s", stream=sys.stderr)
    try:
        cfg = _apply_overrides(_resolve(args.config), args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ChannelError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
