"""Monte Carlo driver for the joint beamforming / relay selection scheme.

Every trial samples one channel realization and runs all configured
policies on it (common random numbers). In each slot the beamformer uses
the current representatives, then each cluster picks the representative of
the next slot. Per-trial seeds are derived from the master seed and the
trial index, so results do not depend on how trials are distributed over
worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beamforming import per_cluster_value
from .channel import ChannelModel
from .config import ExperimentConfig
from .prediction import IncrementalGP, kalman_init, kalman_update
from .selection import (
    candidate_set,
    csi_overhead,
    ideal_select,
    keyed_scenarios,
    random_select,
    saa_select,
)

__all__ = ["TrialContext", "TrialResult", "AggregateStats", "run_trial", "run_experiment", "export"]

log = logging.getLogger(__name__)

_CHANNEL_KEY = 0
_SCENARIO_KEY = 1
_RANDOM_KEY = 2
_SHARED_SCENARIO_KEY = 2 ** 31 - 1


def _stream(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *keys]))


@dataclass
class TrialContext:
    """Per-experiment precomputation shared by all trials."""

    config: ExperimentConfig
    model: ChannelModel = field(init=False)

    def __post_init__(self):
        cfg = self.config
        self.model = ChannelModel(cfg.topology, cfg.channel)
        self.shared_scenarios = None
        if cfg.experiment.share_scenarios:
            self.shared_scenarios = keyed_scenarios(cfg.experiment.n_s, self.model.segments,
                                                    (cfg.experiment.seed, _SHARED_SCENARIO_KEY))


@dataclass
class TrialResult:
    sinr: dict[str, np.ndarray]        # policy -> (N_T,) linear SINR
    selections: dict[str, np.ndarray]  # policy -> (N_T, N_c) 0-based positions
    overhead: dict[str, int]
    realization_digest: str
    predictions: list[tuple] | None = None


def _kalman_track(z_seg: np.ndarray, params):
    """Predictive means (N_T, n_seg) and stds (N_T,) for slot t+1 after observing slot t."""
    n_seg, n_t = z_seg.shape
    state = kalman_init(params, n_seg)
    means = np.empty((n_t, n_seg))
    stds = np.empty(n_t)
    for t in range(n_t):
        state = kalman_update(state, z_seg[:, t], params)
        means[t] = state.mean
        stds[t] = state.std
    return means, stds


def run_trial(ctx: TrialContext | ExperimentConfig, trial: int, record_predictions: bool = False) -> TrialResult:
    if isinstance(ctx, ExperimentConfig):
        ctx = TrialContext(ctx)
    cfg, model = ctx.config, ctx.model
    exp, params = cfg.experiment, cfg.channel
    n_t = params.n_t
    topo = cfg.topology
    n_c = topo.n_clusters
    period = exp.selection_period

    real = model.sample((exp.seed, trial, _CHANNEL_KEY))
    f_agg, g_agg = model.aggregates(real)
    # realized per-cluster SINR term at every slot and position
    terms = [per_cluster_value(np.abs(f) ** 2, np.abs(g) ** 2, params) for f, g in zip(f_agg, g_agg)]

    needs_saa = any(p.startswith("saa") for p in exp.policies)
    if needs_saa:
        seg_means, seg_stds = _kalman_track(real.z_seg, params)
        if ctx.shared_scenarios is not None:
            scenarios = ctx.shared_scenarios
        else:
            scenarios = keyed_scenarios(exp.n_s, model.segments, (exp.seed, trial, _SCENARIO_KEY))

    predictions = [] if record_predictions else None
    sinr, selections = {}, {}
    for policy in exp.policies:
        # one stream per cluster, keyed by its street so nested topologies agree,
        # and shared by both random variants so their picks are coupled
        rngs = [_stream(exp.seed, trial, _RANDOM_KEY, c.placement.segment) for c in topo.clusters]
        mode = "constrained" if policy.endswith("_constrained") else "unconstrained"
        cands = [candidate_set(cc.delta, mode) for cc in model.clusters]
        reps = np.zeros(n_c, dtype=int)
        gps = None
        if policy.startswith("saa"):
            gps = [IncrementalGP(cc.K, params, cc.delta, exp.window) for cc in model.clusters]
        values = np.empty(n_t)
        chosen = np.empty((n_t, n_c), dtype=int)
        for t in range(1, n_t + 1):
            k = t - 1
            if policy == "ideal" and t >= 2 and (t - 1) % period == 0:
                for r in range(n_c):
                    reps[r] = ideal_select(r, t, cands[r], terms[r][k]).position
            values[k] = sum(terms[r][k, reps[r]] for r in range(n_c))
            chosen[k] = reps
            if gps is not None:
                for r in range(n_c):
                    cf = real.clusters[r]
                    gps[r].add(t, reps[r], cf.z_f[k, reps[r]], cf.z_g[k, reps[r]])
            if t == n_t or t % period != 0 or policy == "ideal":
                continue
            for r, cc in enumerate(model.clusters):
                if policy.startswith("random"):
                    reps[r] = random_select(r, t + 1, cands[r], rngs[r]).position
                else:
                    mean, cov = gps[r].posterior(cands[r], t + 1)
                    dec = saa_select(r, t + 1, cc, cands[r], seg_means[k], seg_stds[k],
                                     mean, cov, scenarios, params)
                    reps[r] = dec.position
                    if predictions is not None:
                        j = int(np.flatnonzero(cands[r] == dec.position)[0])
                        predictions.append((t + 1, policy, f"cluster{topo.clusters[r].placement.id}",
                                            mean[j, 0], cov[j, 0, 0], mean[j, 1], cov[j, 1, 1]))
        sinr[policy] = values
        selections[policy] = chosen

    if predictions is not None and needs_saa:
        for k in range(n_t - 1):
            for s, seg in enumerate(model.segments):
                predictions.append((k + 2, "kalman", f"segment{seg}", seg_means[k, s], seg_stds[k] ** 2,
                                    float("nan"), float("nan")))
    overhead = {p: csi_overhead(p, topo) for p in exp.policies}
    return TrialResult(sinr, selections, overhead, real.digest(), predictions)


@dataclass
class AggregateStats:
    policies: tuple[str, ...]
    trials: int
    averaging: str
    mean_sinr_db: dict[str, np.ndarray]   # per-slot
    grand_mean_db: dict[str, float]
    histograms: dict[str, list[np.ndarray]]  # policy -> per cluster (N_T - 1, delta), slots 2..N_T
    overhead: dict[str, int]
    cluster_ids: tuple[int, ...]

    def endpoint_mass(self, policy: str) -> float:
        """Average histogram mass on the two extreme positions over clusters and slots >= 2."""
        per = [h[:, [0, -1]].sum(axis=1).mean() for h in self.histograms[policy]]
        return float(np.mean(per))


class _Accumulator:
    def __init__(self, cfg: ExperimentConfig):
        exp = cfg.experiment
        n_t = cfg.channel.n_t
        self.cfg = cfg
        self.trials = 0
        self.lin = {p: np.zeros(n_t) for p in exp.policies}
        self.db = {p: np.zeros(n_t) for p in exp.policies}
        deltas = [c.placement.delta for c in cfg.topology.clusters]
        self.counts = {p: [np.zeros((n_t - 1, d), dtype=np.int64) for d in deltas] for p in exp.policies}
        self.overhead = None

    def add(self, res: TrialResult):
        self.trials += 1
        self.overhead = res.overhead
        n_t = self.cfg.channel.n_t
        slot_idx = np.arange(n_t - 1)
        for p in self.lin:
            v = res.sinr[p]
            self.lin[p] += v
            with np.errstate(divide="ignore"):
                self.db[p] += 10.0 * np.log10(v)
            for r, cnt in enumerate(self.counts[p]):
                cnt[slot_idx, res.selections[p][1:, r]] += 1

    def finish(self) -> AggregateStats:
        avg = self.cfg.experiment.averaging
        mean_db, grand = {}, {}
        for p in self.lin:
            if avg == "linear":
                per_slot = self.lin[p] / self.trials
                mean_db[p] = 10.0 * np.log10(per_slot)
                grand[p] = float(10.0 * np.log10(per_slot.mean()))
            else:
                mean_db[p] = self.db[p] / self.trials
                grand[p] = float(mean_db[p].mean())
        hist = {p: [c / self.trials for c in cs] for p, cs in self.counts.items()}
        ids = tuple(c.placement.id for c in self.cfg.topology.clusters)
        return AggregateStats(tuple(self.lin), self.trials, avg, mean_db, grand, hist, dict(self.overhead), ids)


_WORKER_CTX: TrialContext | None = None


def _init_worker(cfg_dict: dict):
    global _WORKER_CTX
    _WORKER_CTX = TrialContext(ExperimentConfig.from_dict(cfg_dict))


def _worker_trial(trial: int) -> TrialResult:
    return run_trial(_WORKER_CTX, trial)


def run_experiment(cfg: ExperimentConfig, progress: bool = False) -> AggregateStats:
    """Run all trials and average them.

    Trials are folded in index order, so the result is bit-identical for any
    number of workers.
    """
    exp = cfg.experiment
    acc = _Accumulator(cfg)
    step = max(1, exp.trials // 10)

    def report(i):
        if progress and ((i + 1) % step == 0 or i + 1 == exp.trials):
            log.info("trial %d/%d", i + 1, exp.trials)

    if exp.workers == 1:
        ctx = TrialContext(cfg)
        for i in range(exp.trials):
            acc.add(run_trial(ctx, i))
            report(i)
    else:
        chunk = max(1, exp.trials // (4 * exp.workers))
        with ProcessPoolExecutor(max_workers=exp.workers, initializer=_init_worker,
                                 initargs=(cfg.to_dict(),)) as pool:
            for i, res in enumerate(pool.map(_worker_trial, range(exp.trials), chunksize=chunk)):
                acc.add(res)
                report(i)
    return acc.finish()


def export(stats: AggregateStats, cfg: ExperimentConfig, out_dir) -> dict[str, Path]:
    """Write the per-slot SINR CSV, the histogram CSV and the JSON summary."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = f"seed{cfg.experiment.seed}_{cfg.digest()}"
    paths = {
        "sinr": out / f"sinr_{stamp}.csv",
        "histogram": out / f"histogram_{stamp}.csv",
        "summary": out / f"summary_{stamp}.json",
    }
    with open(paths["sinr"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "policy", "mean_sinr_db"])
        for p in stats.policies:
            for k, v in enumerate(stats.mean_sinr_db[p]):
                w.writerow([k + 1, p, repr(float(v))])
    with open(paths["histogram"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "cluster", "slot", "position", "fraction"])
        for p in stats.policies:
            for cid, h in zip(stats.cluster_ids, stats.histograms[p]):
                for k in range(h.shape[0]):
                    for i in range(h.shape[1]):
                        w.writerow([p, cid, k + 2, i + 1, repr(float(h[k, i]))])
    summary = {
        "seed": cfg.experiment.seed,
        "config_hash": cfg.digest(),
        "trials": stats.trials,
        "averaging": stats.averaging,
        "grand_mean_sinr_db": stats.grand_mean_db,
        "endpoint_mass": {p: stats.endpoint_mass(p) for p in stats.policies},
        "overhead": stats.overhead,
        "config": cfg.to_dict(),
    }
    paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return paths


def write_predictions(rows, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot", "policy", "unit", "mean_f", "var_f", "mean_g", "var_g"])
        for row in rows:
            w.writerow([row[0], row[1], row[2]] + [repr(float(x)) for x in row[3:]])
    return path
