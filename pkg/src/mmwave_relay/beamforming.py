"""Closed-form amplify-and-forward beamforming under a total relay power budget.

Each cluster contributes one representative. With ``f_r`` and ``g_r`` the
complex incoming and outgoing aggregate channels of representative ``r``
(sums over all propagation paths), the destination SINR of the weight
vector is a generalized Rayleigh quotient whose maximum splits into a sum
of per-cluster terms.

Weights returned here are the physical per-relay multipliers: relay ``r``
forwards ``w_r`` times its received signal. The quadratic forms are written
in terms of their conjugates.
"""

from __future__ import annotations

import numpy as np

from .channel import ChannelParams

__all__ = ["BeamformingError", "optimal_value", "optimal_weights", "sinr", "sinr_db"]


class BeamformingError(ValueError):
    pass


def _denominators(F, G, params: ChannelParams):
    return params.ps * params.sigma_d2 * F + params.pc * params.sigma2 * G + params.sigma2 * params.sigma_d2


def optimal_value(F, G, params: ChannelParams):
    """Optimal SINR and its per-cluster terms from aggregate powers ``F``, ``G`` (linear).

    Returns ``(V, terms)``. Extra leading axes are allowed; clusters run along
    the last axis.
    """
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    terms = params.pc * params.ps * F * G / _denominators(F, G, params)
    return terms.sum(axis=-1), terms


def per_cluster_value(F, G, params: ChannelParams):
    """Single-cluster term of the optimal SINR, elementwise."""
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    return params.pc * params.ps * F * G / _denominators(F, G, params)


def optimal_weights(f_agg, g_agg, params: ChannelParams) -> np.ndarray:
    """Relay weights attaining :func:`optimal_value` with the budget met exactly.

    All-blocked inputs return the zero vector.
    """
    f_agg = np.asarray(f_agg, dtype=complex)
    g_agg = np.asarray(g_agg, dtype=complex)
    F, G = np.abs(f_agg) ** 2, np.abs(g_agg) ** 2
    D = params.ps * F + params.sigma2
    # alignment vector expressed in D^{1/2}-whitened coordinates
    v = np.sqrt(D) * params.ps * np.conj(g_agg * f_agg) / _denominators(F, G, params)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return np.zeros_like(f_agg)
    return np.sqrt(params.pc) * v / (np.sqrt(D) * norm)


def sinr(w, f_agg, g_agg, params: ChannelParams, check_power: bool = True) -> float:
    """Destination SINR achieved by relay weights ``w``."""
    w = np.asarray(w, dtype=complex)
    f_agg = np.asarray(f_agg, dtype=complex)
    g_agg = np.asarray(g_agg, dtype=complex)
    F, G = np.abs(f_agg) ** 2, np.abs(g_agg) ** 2
    power = float(np.sum((params.ps * F + params.sigma2) * np.abs(w) ** 2))
    if check_power and power > params.pc * (1.0 + 1e-6):
        raise BeamformingError(f"relay power {power:.6g} exceeds budget {params.pc:.6g}")
    signal = params.ps * abs(np.sum(w * g_agg * f_agg)) ** 2
    noise = params.sigma2 * float(np.sum(G * np.abs(w) ** 2)) + params.sigma_d2
    return signal / noise


def sinr_db(value):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(value)
