"""Statistical urban mmWave channel model.

All channel magnitudes are handled in the log domain (dB of power gain):
a deterministic path-loss term plus zero-mean Gaussian shadowing and
multipath terms. Segments without relays carry a temporally correlated
shadowing series (a stationary AR(1) process); the segment holding a relay
cluster carries a space-time field over the cluster's candidate positions,
with separate but cross-correlated incoming (f) and outgoing (g) components.
Phases are uniform on [0, 1) and independent of everything else.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, fields

import numpy as np

from .topology import ClusterPaths, PropagationPath, Topology

__all__ = [
    "CHI",
    "ChannelParams",
    "ChannelError",
    "dbm_to_watt",
    "segment_stream",
    "path_loss_db",
    "temporal_corr",
    "temporal_cov",
    "sample_ar1",
    "kernel_ff",
    "kernel_fg",
    "spatial_cov",
    "prior_pair_cov",
    "cluster_cov",
    "reconstruct_gain",
    "aggregate_F",
    "aggregate_G",
    "ClusterChannel",
    "ClusterField",
    "ChannelRealization",
    "ChannelModel",
]

CHI = math.log(10.0) / 10.0


class ChannelError(RuntimeError):
    """Raised when a covariance cannot be factorized."""


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


_SEGMENT_TAG = 0
_CLUSTER_TAG = 1


def segment_stream(base, tag: int, segment: int) -> np.random.Generator:
    """Random stream of one street segment under the trial key ``base``."""
    return np.random.default_rng(np.random.SeedSequence([*base, tag, segment]))


@dataclass(frozen=True)
class ChannelParams:
    alpha_l: float = 2.1
    alpha_n: float = 2.1
    delta_db: float = 10.0
    eta2: float = 40.0
    gamma: float = 15.0
    beta_m: float = 10.0
    sigma_xi2: float = 20.0
    sigma2: float = 1.0
    sigma_d2: float = 1.0
    ps_dbm: float = 80.0
    pc_dbm: float = 100.0
    n_t: int = 50

    def __post_init__(self):
        for name in ("eta2", "gamma", "beta_m", "sigma2", "sigma_d2"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.sigma_xi2 < 0:
            raise ValueError("sigma_xi2 must be non-negative")
        if int(self.n_t) != self.n_t or self.n_t < 1:
            raise ValueError("n_t must be a positive integer")

    @classmethod
    def from_dict(cls, data: dict) -> "ChannelParams":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown channel keys: {sorted(unknown)}")
        kwargs = {k: (int(v) if k == "n_t" else float(v)) for k, v in data.items()}
        return cls(**kwargs)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def kappa(self) -> float:
        return math.exp(-1.0 / self.gamma)

    @property
    def ps(self) -> float:
        return dbm_to_watt(self.ps_dbm)

    @property
    def pc(self) -> float:
        return dbm_to_watt(self.pc_dbm)


def path_loss_db(path: PropagationPath, params: ChannelParams, terminal_distance: float | None = None) -> float:
    """Deterministic log gain ``a`` of a path in dB.

    The first segment is LoS, every later one NLoS, and each traversed
    intersection costs ``delta_db``. ``terminal_distance`` is the distance
    covered inside the last segment (for a relay, its distance to the entry
    intersection of the cluster segment) and defaults to the path's own.
    """
    term = path.terminal_distance if terminal_distance is None else terminal_distance
    loss = params.alpha_l * 10.0 * math.log10(path.los_distance)
    if len(path.segments) > 1:
        if term is None or not term > 0:
            raise ValueError("terminal distance must be positive (relay on an intersection?)")
        for d in path.traversed[1:-1]:
            loss += params.alpha_n * 10.0 * math.log10(d)
        loss += params.alpha_n * 10.0 * math.log10(term)
    loss += params.delta_db * path.n_intersections
    return -loss


def sample_ar1(rng: np.random.Generator, n: int, n_t: int, params: ChannelParams) -> np.ndarray:
    """``n`` stationary AR(1) shadowing series over slots 0..n_t, shape ``(n, n_t + 1)``."""
    kappa = params.kappa
    beta = np.empty((n, n_t + 1))
    beta[:, 0] = rng.normal(0.0, math.sqrt(params.eta2), n)
    w = rng.normal(0.0, math.sqrt((1.0 - kappa**2) * params.eta2), (n, n_t))
    for t in range(1, n_t + 1):
        beta[:, t] = kappa * beta[:, t - 1] + w[:, t - 1]
    return beta


def temporal_corr(n_t: int, gamma: float) -> np.ndarray:
    k = np.arange(n_t)
    return np.exp(-np.abs(k[:, None] - k[None, :]) / gamma)


def temporal_cov(n_t: int, eta2: float, gamma: float, sigma_xi2: float) -> np.ndarray:
    """Covariance of the combined log terms of a cluster-free segment over ``n_t`` slots."""
    return eta2 * temporal_corr(n_t, gamma) + sigma_xi2 * np.eye(n_t)


def kernel_ff(p_n, p_m, eta2: float, beta: float):
    """Spatial kernel between two positions of the same kind (f-f or g-g)."""
    dist = np.abs(np.asarray(p_n, dtype=float) - np.asarray(p_m, dtype=float))
    return eta2 * np.exp(-dist / beta)


def kernel_fg(p_f, p_g, eta2: float, beta: float, d_full: float, d_max: float, d_f, d_g):
    """Cross kernel between the incoming term at ``p_f`` and the outgoing term at ``p_g``.

    ``d_f`` is the incoming distance of ``p_f`` from the source-side entry
    intersection, ``d_g`` the outgoing distance of ``p_g`` to the
    destination-side intersection. When the two traversed stretches overlap
    (``d_f + d_g >= d_full``) the correlation grows with the separation,
    otherwise it decays with it.
    """
    dist = np.abs(np.asarray(p_f, dtype=float) - np.asarray(p_g, dtype=float))
    eps = np.where(np.asarray(d_f) + np.asarray(d_g) >= d_full - 1e-9, 1.0, -1.0)
    return eta2 * np.exp((eps * dist - d_max) / beta)


def spatial_cov(placement, params: ChannelParams) -> np.ndarray:
    """Per-slot covariance ``K`` of the stacked shadowing (f positions, then g positions)."""
    off = placement.offsets
    d_max = placement.d_max
    kff = kernel_ff(off[:, None], off[None, :], params.eta2, params.beta_m)
    kfg = kernel_fg(off[:, None], off[None, :], params.eta2, params.beta_m,
                    placement.d_full, d_max, placement.d_f[:, None], placement.d_g[None, :])
    return np.block([[kff, kfg], [kfg.T, kff]])


def prior_pair_cov(placement, params: ChannelParams) -> np.ndarray:
    """Prior 2x2 covariance of the (incoming, outgoing) combined pair at one position."""
    cross = params.eta2 * math.exp(-placement.d_max / params.beta_m)
    diag = params.eta2 + params.sigma_xi2
    return np.array([[diag, cross], [cross, diag]])


def cluster_cov(placement, params: ChannelParams, n_t: int | None = None) -> np.ndarray:
    """Full space-time covariance of a cluster segment's combined terms.

    Index order is slot-major: ``(slot, channel, position)`` with channel f
    before g, i.e. entry ``k * 2 * delta + j`` for slot ``k`` and row ``j`` of K.
    """
    n_t = params.n_t if n_t is None else n_t
    K = spatial_cov(placement, params)
    T = temporal_corr(n_t, params.gamma)
    return np.kron(T, K) + params.sigma_xi2 * np.eye(n_t * K.shape[0])


def _cholesky(mat: np.ndarray, scale: float, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        pass
    try:
        return np.linalg.cholesky(mat + 1e-9 * scale * np.eye(mat.shape[0]))
    except np.linalg.LinAlgError:
        eig = np.linalg.eigvalsh(mat).min()
        raise ChannelError(f"{what} is not positive semidefinite (min eigenvalue {eig:.3e})") from None


def reconstruct_gain(F_db, phase):
    """Complex gain whose power in dB is ``F_db`` and whose phase is ``2*pi*phase``."""
    F_db = np.asarray(F_db, dtype=float)
    return np.exp(math.log(10.0) * F_db / 20.0) * np.exp(2j * np.pi * np.asarray(phase, dtype=float))


def aggregate_F(F_paths, Phi_paths):
    """Power of the coherent sum of all paths, via the pairwise expansion.

    ``F_paths`` and ``Phi_paths`` hold per-path log gains (dB) and phases (in
    cycles) along axis 0; any trailing axes are broadcast.
    """
    F_paths = np.asarray(F_paths, dtype=float)
    Phi_paths = np.asarray(Phi_paths, dtype=float)
    amp = np.exp(0.5 * CHI * F_paths)
    total = np.sum(amp * amp, axis=0)
    for i in range(1, F_paths.shape[0]):
        for k in range(i):
            total = total + 2.0 * amp[i] * amp[k] * np.cos(2.0 * np.pi * (Phi_paths[i] - Phi_paths[k]))
    return total


aggregate_G = aggregate_F


@dataclass
class ClusterChannel:
    """Path bookkeeping for one cluster in terms of the global segment index.

    ``a_f[l, i]`` is the path loss (dB) of incoming path ``l`` at position
    ``i``; ``inc_f[l, s]`` is 1 when incoming path ``l`` traverses global
    cluster-free segment ``s``. Same for the outgoing side.
    """

    paths: ClusterPaths
    a_f: np.ndarray
    a_g: np.ndarray
    inc_f: np.ndarray
    inc_g: np.ndarray
    K: np.ndarray
    K_chol: np.ndarray
    K_bar: np.ndarray

    @property
    def delta(self) -> int:
        return self.paths.placement.delta

    @property
    def segments(self) -> np.ndarray:
        """Global indices of the segments this cluster depends on."""
        return np.flatnonzero((self.inc_f.sum(0) + self.inc_g.sum(0)) > 0)

    def path_terms(self, side: str, z_pair, z_seg, phi_pair, phi_seg, positions=None):
        """Per-path log gains and phases.

        ``z_pair``/``phi_pair`` are the cluster-segment terms for this side with
        shape ``(..., P)`` where ``P`` indexes positions; ``z_seg``/``phi_seg``
        are global segment terms with shape ``(..., n_seg)``. Returns arrays of
        shape ``(L, ..., P)``.
        """
        a = self.a_f if side == "f" else self.a_g
        inc = self.inc_f if side == "f" else self.inc_g
        if positions is not None:
            a = a[:, positions]
        z_path = np.tensordot(inc, np.asarray(z_seg), axes=([1], [-1]))   # (L, ...)
        ph_path = np.tensordot(inc, np.asarray(phi_seg), axes=([1], [-1]))
        F = a.reshape((a.shape[0],) + (1,) * (np.ndim(z_pair) - 1) + (a.shape[1],)) \
            + np.asarray(z_pair)[None] + z_path[..., None]
        Phi = np.asarray(phi_pair)[None] + ph_path[..., None]
        return F, Phi


@dataclass(frozen=True)
class ClusterField:
    beta_f: np.ndarray  # (N_T, delta)
    beta_g: np.ndarray
    xi_f: np.ndarray
    xi_g: np.ndarray
    phi_f: np.ndarray
    phi_g: np.ndarray

    @property
    def z_f(self) -> np.ndarray:
        return self.beta_f + self.xi_f

    @property
    def z_g(self) -> np.ndarray:
        return self.beta_g + self.xi_g


@dataclass(frozen=True)
class ChannelRealization:
    """One sampled trial of every channel term.

    Segment arrays are indexed ``[segment, slot]`` with slots 1..N_T at
    columns 0..N_T-1; ``beta_seg`` has an extra leading column for slot 0.
    """

    segments: tuple[int, ...]
    beta_seg: np.ndarray
    xi_seg: np.ndarray
    phi_seg: np.ndarray
    clusters: tuple[ClusterField, ...]

    @property
    def z_seg(self) -> np.ndarray:
        return self.beta_seg[:, 1:] + self.xi_seg

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.beta_seg, self.xi_seg, self.phi_seg):
            h.update(np.ascontiguousarray(arr).tobytes())
        for c in self.clusters:
            for arr in (c.beta_f, c.beta_g, c.xi_f, c.xi_g, c.phi_f, c.phi_g):
                h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


@dataclass
class ChannelModel:
    """Channel statistics of a topology, with factorizations prepared once."""

    topology: Topology
    params: ChannelParams
    segments: tuple[int, ...] = field(init=False)
    clusters: list[ClusterChannel] = field(init=False)

    def __post_init__(self):
        topo, params = self.topology, self.params
        self.segments = tuple(topo.cluster_free_segments())
        index = {s: k for k, s in enumerate(self.segments)}
        self.clusters = [self._cluster_channel(c, index) for c in topo.clusters]
        self.T_chol = _cholesky(temporal_corr(params.n_t, params.gamma), 1.0, "temporal correlation")

    def _cluster_channel(self, cp: ClusterPaths, index: dict) -> ClusterChannel:
        params = self.params
        pl = cp.placement

        def side(paths, dists):
            a = np.empty((len(paths), pl.delta))
            inc = np.zeros((len(paths), len(self.segments)))
            for l, path in enumerate(paths):
                for i, d in enumerate(dists):
                    a[l, i] = path_loss_db(path, params, terminal_distance=float(d))
                for s in path.segments[:-1]:
                    inc[l, index[s]] = 1.0
            return a, inc

        a_f, inc_f = side(cp.f_paths, pl.d_f)
        a_g, inc_g = side(cp.g_paths, pl.d_g)
        K = spatial_cov(pl, params)
        K_chol = _cholesky(K, params.eta2, f"spatial covariance of cluster {pl.id}")
        return ClusterChannel(cp, a_f, a_g, inc_f, inc_g, K, K_chol, prior_pair_cov(pl, params))

    def sample(self, key) -> ChannelRealization:
        """Draw one realization.

        ``key`` is an integer, a sequence of non-negative integers (for
        instance ``(seed, trial)``) or a Generator. Every street segment and
        every cluster field draws from its own stream keyed by the segment
        id, so two topologies that share streets see the same channel on
        them for the same key.
        """
        if isinstance(key, np.random.Generator):
            key = (int(key.integers(2**63)),)
        base = (int(key),) if np.ndim(key) == 0 else tuple(int(k) for k in key)
        p = self.params
        n_t, n_seg = p.n_t, len(self.segments)
        beta = np.empty((n_seg, n_t + 1))
        xi = np.empty((n_seg, n_t))
        phi = np.empty((n_seg, n_t))
        for k, seg in enumerate(self.segments):
            rng = segment_stream(base, _SEGMENT_TAG, seg)
            beta[k] = sample_ar1(rng, 1, n_t, p)[0]
            xi[k] = rng.normal(0.0, math.sqrt(p.sigma_xi2), n_t)
            phi[k] = rng.random(n_t)
        fields_ = []
        for cc in self.clusters:
            d = cc.delta
            rng = segment_stream(base, _CLUSTER_TAG, cc.paths.placement.segment)
            white = rng.standard_normal((n_t, 2 * d))
            X = self.T_chol @ white @ cc.K_chol.T
            mp = rng.normal(0.0, math.sqrt(p.sigma_xi2), (n_t, 2 * d))
            ph = rng.random((n_t, 2 * d))
            fields_.append(ClusterField(
                beta_f=X[:, :d], beta_g=X[:, d:], xi_f=mp[:, :d], xi_g=mp[:, d:],
                phi_f=ph[:, :d], phi_g=ph[:, d:],
            ))
        return ChannelRealization(self.segments, beta, xi, phi, tuple(fields_))

    def aggregates(self, real: ChannelRealization):
        """Complex incoming and outgoing aggregates at every position and slot.

        Returns two lists (one entry per cluster) of arrays shaped ``(N_T, delta)``.
        """
        z_seg = real.z_seg.T      # (N_T, n_seg)
        phi_seg = real.phi_seg.T
        f_out, g_out = [], []
        for cc, cf in zip(self.clusters, real.clusters):
            for side, zp, pp, out in (("f", cf.z_f, cf.phi_f, f_out), ("g", cf.z_g, cf.phi_g, g_out)):
                F, Phi = cc.path_terms(side, zp, z_seg, pp, phi_seg)
                out.append(reconstruct_gain(F, Phi).sum(axis=0))
        return f_out, g_out
