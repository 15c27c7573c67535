"""One-step-ahead prediction of the combined log-channel terms.

Cluster-free segments follow an AR(1) shadowing process observed through
white multipath, so a scalar Kalman filter gives the exact predictive mean
and variance of the next observation. The cluster segment is a space-time
Gaussian field observed only at the positions of past representatives, so
its (incoming, outgoing) pair at each candidate position is predicted by
Gaussian process regression on the recent history.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelParams

__all__ = [
    "KalmanState",
    "kalman_init",
    "kalman_update",
    "ClusterHistory",
    "gp_condition",
    "IncrementalGP",
]


@dataclass(frozen=True)
class KalmanState:
    """Predictive statistics of ``z(t+1)`` given observations up to slot ``t``.

    ``mean`` may be an array (one filter per segment); the variance never
    depends on the data, so it is shared.
    """

    mean: np.ndarray | float
    var: float
    t: int = 0
    last_gain: float | None = None

    @property
    def std(self) -> float:
        return math.sqrt(self.var)

    @property
    def gain(self) -> float:
        """Kalman gain of the most recent update."""
        if self.last_gain is None:
            raise ValueError("no measurement has been folded in yet")
        return self.last_gain


def kalman_init(params: ChannelParams, n: int | None = None) -> KalmanState:
    mean = 0.0 if n is None else np.zeros(n)
    return KalmanState(mean=mean, var=params.eta2 + params.sigma_xi2, t=0)


def kalman_update(state: KalmanState, z, params: ChannelParams) -> KalmanState:
    """Fold in the measurement of slot ``state.t + 1`` and predict the next one."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite measurement")
    kappa = params.kappa
    gain = (state.var - params.sigma_xi2) / state.var
    mean = kappa * (1.0 - gain) * np.asarray(state.mean) + kappa * gain * z
    var = (1.0 + kappa**2 * gain) * params.sigma_xi2 + (1.0 - kappa**2) * params.eta2
    if mean.ndim == 0:
        mean = float(mean)
    return KalmanState(mean=mean, var=var, t=state.t + 1, last_gain=gain)


@dataclass
class ClusterHistory:
    """Measured (incoming, outgoing) pairs of a cluster's past representatives."""

    delta: int
    window: int | None = None
    slots: list[int] = field(default_factory=list)
    positions: list[int] = field(default_factory=list)
    values: list[tuple[float, float]] = field(default_factory=list)

    def add(self, slot: int, position: int, z_f: float, z_g: float) -> None:
        if self.slots and slot <= self.slots[-1]:
            raise ValueError("slots must increase")
        self.slots.append(int(slot))
        self.positions.append(int(position))
        self.values.append((float(z_f), float(z_g)))
        if self.window is not None and len(self.slots) > self.window:
            del self.slots[0], self.positions[0], self.values[0]

    def __len__(self) -> int:
        return len(self.slots)

    def measurement_vector(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float).reshape(-1)


def _rows(positions, delta: int) -> np.ndarray:
    # rows of K for the (f, g) entries of each observation, interleaved
    pos = np.asarray(positions, dtype=int)
    return np.stack([pos, pos + delta], axis=1).reshape(-1)


def _hist_cov(K, params, slots_a, pos_a, slots_b, pos_b, delta) -> np.ndarray:
    sa = np.repeat(np.asarray(slots_a, dtype=float), 2)
    sb = np.repeat(np.asarray(slots_b, dtype=float), 2)
    temporal = np.exp(-np.abs(sa[:, None] - sb[None, :]) / params.gamma)
    return temporal * K[np.ix_(_rows(pos_a, delta), _rows(pos_b, delta))]


def _cross_cov(K, params, slots, positions, candidates, t_next, delta) -> np.ndarray:
    """Covariance between history entries and candidate pairs at ``t_next``: (2n, C, 2)."""
    decay = np.exp(-(t_next - np.repeat(np.asarray(slots, dtype=float), 2)) / params.gamma)
    cand = np.asarray(candidates, dtype=int)
    cols = np.stack([cand, cand + delta], axis=1)          # (C, 2)
    rows = _rows(positions, delta)
    return decay[:, None, None] * K[rows[:, None, None], cols[None, :, :]]


def _prior(K, params, candidates, delta) -> np.ndarray:
    cand = np.asarray(candidates, dtype=int)
    cols = np.stack([cand, cand + delta], axis=1)
    return K[cols[:, :, None], cols[:, None, :]] + params.sigma_xi2 * np.eye(2)


def _posterior(K, params, inv, m, slots, positions, candidates, t_next, delta):
    prior = _prior(K, params, candidates, delta)
    if len(slots) == 0:
        return np.zeros((len(prior), 2)), prior
    s = _cross_cov(K, params, slots, positions, candidates, t_next, delta)
    mean = np.einsum("icy,i->cy", s, inv @ m)
    cov = prior - np.einsum("icx,ij,jcy->cxy", s, inv, s)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    return mean, cov


def _jitter(params: ChannelParams) -> float:
    return 1e-9 * (params.eta2 + params.sigma_xi2)


def _spd_inverse(mat: np.ndarray, params: ChannelParams) -> np.ndarray:
    eye = np.eye(mat.shape[0])
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        chol = np.linalg.cholesky(mat + _jitter(params) * eye)
    inv_chol = np.linalg.solve(chol, eye)
    return inv_chol.T @ inv_chol


def gp_condition(history: ClusterHistory, candidates, K: np.ndarray, params: ChannelParams, t_next: int):
    """Predictive mean (C, 2) and covariance (C, 2, 2) of the pair at each candidate.

    ``K`` is the cluster's per-slot spatial covariance. The history is
    inverted directly, which costs cubic time in its length.
    """
    delta = history.delta
    cov = _hist_cov(K, params, history.slots, history.positions, history.slots, history.positions, delta)
    cov += params.sigma_xi2 * np.eye(cov.shape[0])
    inv = _spd_inverse(cov, params) if len(history) else np.zeros((0, 0))
    return _posterior(K, params, inv, history.measurement_vector(), history.slots,
                      history.positions, candidates, t_next, delta)


class IncrementalGP:
    """GP predictor that updates the inverse history covariance block by block.

    Appending a measurement uses the partitioned-inverse (Schur complement)
    formula and dropping the oldest one the matching downdate, so each slot
    costs time quadratic in the history length.
    """

    def __init__(self, K: np.ndarray, params: ChannelParams, delta: int, window: int | None = None):
        self.K = K
        self.params = params
        self.history = ClusterHistory(delta, window=None)
        self.window = window
        self.inv = np.zeros((0, 0))

    def __len__(self) -> int:
        return len(self.history)

    def _drop_oldest(self) -> None:
        inv = self.inv
        P, Q, R = inv[:2, :2], inv[:2, 2:], inv[2:, 2:]
        self.inv = R - Q.T @ np.linalg.solve(P, Q)
        h = self.history
        del h.slots[0], h.positions[0], h.values[0]

    def add(self, slot: int, position: int, z_f: float, z_g: float) -> None:
        if self.window is not None and len(self.history) >= self.window:
            self._drop_oldest()
        h, p, delta = self.history, self.params, self.history.delta
        C = _hist_cov(self.K, p, [slot], [position], [slot], [position], delta) + p.sigma_xi2 * np.eye(2)
        if len(h) == 0:
            self.inv = _spd_inverse(C, p)
        else:
            B = _hist_cov(self.K, p, h.slots, h.positions, [slot], [position], delta)  # (2n, 2)
            AiB = self.inv @ B
            S = C - B.T @ AiB
            try:
                np.linalg.cholesky(S)
            except np.linalg.LinAlgError:
                S = S + _jitter(p) * np.eye(2)
            Si = np.linalg.inv(S)
            top_left = self.inv + AiB @ Si @ AiB.T
            top_right = -AiB @ Si
            self.inv = np.block([[top_left, top_right], [top_right.T, Si]])
        h.add(slot, position, z_f, z_g)

    def posterior(self, candidates, t_next: int):
        h = self.history
        return _posterior(self.K, self.params, self.inv, h.measurement_vector(), h.slots,
                          h.positions, candidates, t_next, h.delta)
