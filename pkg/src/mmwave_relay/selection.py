"""Relay selection policies and CSI-overhead accounting.

The predictive policy scores each candidate position by a sample average
of the per-cluster SINR term over scenarios drawn from a fixed standardized
density (unit normals and uniform phases). The scenarios are mapped onto
the one-step-ahead posterior of each candidate, so one scenario set serves
every candidate, cluster and slot.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .beamforming import per_cluster_value
from .channel import ChannelParams, ClusterChannel, aggregate_F, aggregate_G
from .topology import Topology

__all__ = [
    "POLICIES",
    "candidate_set",
    "Scenarios",
    "generate_scenarios",
    "keyed_scenarios",
    "sym_sqrt",
    "surrogate_values",
    "SelectionDecision",
    "saa_select",
    "ideal_select",
    "random_select",
    "csi_overhead",
]

POLICIES = ("ideal", "random", "random_constrained", "saa", "saa_constrained")

# candidates kept at each end of the cluster in constrained mode
EDGE_COUNT = 4


def candidate_set(delta: int, mode: str = "unconstrained") -> np.ndarray:
    """Sorted 0-based candidate position indices."""
    if delta < 1:
        raise ValueError("delta must be at least 1")
    if mode == "unconstrained":
        return np.arange(delta)
    if mode == "constrained":
        idx = set(range(min(EDGE_COUNT, delta))) | set(range(max(delta - EDGE_COUNT, 0), delta))
        return np.array(sorted(idx))
    raise ValueError(f"unknown candidate mode {mode!r}")


@dataclass(frozen=True)
class Scenarios:
    """Standardized scenarios, shared networkwide.

    Segment columns follow the global cluster-free segment order; the pair
    columns are (incoming, outgoing) of the cluster segment.
    """

    v_seg: np.ndarray     # (n_s, n_seg)
    phi_seg: np.ndarray   # (n_s, n_seg)
    v_pair: np.ndarray    # (n_s, 2)
    phi_pair: np.ndarray  # (n_s, 2)

    def __len__(self) -> int:
        return self.v_pair.shape[0]


def generate_scenarios(n_s: int, n_segments: int, rng: np.random.Generator) -> Scenarios:
    if n_s < 1:
        raise ValueError("need at least one scenario")
    return Scenarios(
        v_seg=rng.standard_normal((n_s, n_segments)),
        phi_seg=rng.random((n_s, n_segments)),
        v_pair=rng.standard_normal((n_s, 2)),
        phi_pair=rng.random((n_s, 2)),
    )


def keyed_scenarios(n_s: int, segments, base) -> Scenarios:
    """Scenarios whose segment columns are keyed by segment id.

    Topologies sharing a street then share that street's scenario column
    under the same ``base`` key.
    """
    if n_s < 1:
        raise ValueError("need at least one scenario")
    base = tuple(int(k) for k in base)
    pair = np.random.default_rng(np.random.SeedSequence([*base, 0]))
    v_seg = np.empty((n_s, len(segments)))
    phi_seg = np.empty((n_s, len(segments)))
    for k, seg in enumerate(segments):
        rng = np.random.default_rng(np.random.SeedSequence([*base, 1, int(seg)]))
        v_seg[:, k] = rng.standard_normal(n_s)
        phi_seg[:, k] = rng.random(n_s)
    return Scenarios(v_seg, phi_seg, pair.standard_normal((n_s, 2)), pair.random((n_s, 2)))


def sym_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root of a stack of symmetric matrices."""
    w, U = np.linalg.eigh(cov)
    if np.any(w < -1e-8 * np.maximum(1.0, np.abs(w).max())):
        raise ValueError("posterior covariance is not positive semidefinite")
    w = np.clip(w, 0.0, None)
    return (U * np.sqrt(w)[..., None, :]) @ np.swapaxes(U, -1, -2)


def surrogate_values(cc: ClusterChannel, candidates, seg_mean, seg_std, pair_mean, pair_cov,
                     scenarios: Scenarios, params: ChannelParams) -> np.ndarray:
    """Per-cluster SINR term for every (candidate, scenario): shape (C, n_s).

    ``seg_mean``/``seg_std`` are the predictive statistics of all global
    cluster-free segments; ``pair_mean`` (C, 2) and ``pair_cov`` (C, 2, 2)
    those of the cluster pair at each candidate.
    """
    candidates = np.asarray(candidates, dtype=int)
    z_seg = np.asarray(seg_mean) + np.asarray(seg_std) * scenarios.v_seg          # (n_s, n_seg)
    roots = sym_sqrt(np.asarray(pair_cov, dtype=float))
    z_pair = np.asarray(pair_mean)[:, None, :] + np.einsum("cxy,sy->csx", roots, scenarios.v_pair)
    n_c = len(candidates)
    phi_f = np.broadcast_to(scenarios.phi_pair[:, :1], (len(scenarios), n_c))
    phi_g = np.broadcast_to(scenarios.phi_pair[:, 1:], (len(scenarios), n_c))
    F_p, Phi_f = cc.path_terms("f", z_pair[..., 0].T, z_seg, phi_f, scenarios.phi_seg, candidates)
    G_p, Phi_g = cc.path_terms("g", z_pair[..., 1].T, z_seg, phi_g, scenarios.phi_seg, candidates)
    F = aggregate_F(F_p, Phi_f)
    G = aggregate_G(G_p, Phi_g)
    return per_cluster_value(F, G, params).T


@dataclass(frozen=True)
class SelectionDecision:
    cluster: int
    slot: int
    position: int
    candidates: np.ndarray
    values: np.ndarray | None = None


def _argmax(candidates, values) -> int:
    # np.argmax returns the first maximum: lowest index on ties
    return int(np.asarray(candidates)[int(np.argmax(values))])


def saa_select(cluster: int, slot: int, cc: ClusterChannel, candidates, seg_mean, seg_std,
               pair_mean, pair_cov, scenarios: Scenarios, params: ChannelParams) -> SelectionDecision:
    values = surrogate_values(cc, candidates, seg_mean, seg_std, pair_mean, pair_cov,
                              scenarios, params).mean(axis=1)
    return SelectionDecision(cluster, slot, _argmax(candidates, values), np.asarray(candidates), values)


def ideal_select(cluster: int, slot: int, candidates, realized_values) -> SelectionDecision:
    """Pick the candidate with the largest realized per-cluster SINR term.

    ``realized_values`` is indexed by position (length delta).
    """
    candidates = np.asarray(candidates)
    values = np.asarray(realized_values)[candidates]
    return SelectionDecision(cluster, slot, _argmax(candidates, values), candidates, values)


def random_select(cluster: int, slot: int, candidates, rng: np.random.Generator) -> SelectionDecision:
    """Uniform pick by inverse transform of one uniform draw.

    Two policies fed the same stream therefore make comonotone picks: a
    smaller draw never yields a later position under either candidate set.
    """
    candidates = np.asarray(candidates)
    u = rng.random()
    pick = int(candidates[min(int(u * len(candidates)), len(candidates) - 1)])
    return SelectionDecision(cluster, slot, pick, candidates)


def csi_overhead(policy: str, topology: Topology) -> int:
    """Number of channels estimated per slot under ``policy``.

    The ideal policy measures both channels of every relay. The predictive
    policies measure both channels of each representative plus one RSS per
    cluster-free segment in use. Random policies only need the
    representatives' channels for beamforming.
    """
    n_c = topology.n_clusters
    if policy == "ideal":
        return 2 * sum(c.placement.delta for c in topology.clusters)
    if policy in ("saa", "saa_constrained"):
        return 2 * n_c + len(topology.cluster_free_segments())
    if policy in ("random", "random_constrained"):
        return 2 * n_c
    raise ValueError(f"unknown policy {policy!r}")
