import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmwave_relay.beamforming import (
    BeamformingError,
    optimal_value,
    optimal_weights,
    per_cluster_value,
    sinr,
    sinr_db,
)
from mmwave_relay.channel import ChannelParams


def unit_params():
    return ChannelParams(ps_dbm=30.0, pc_dbm=30.0, sigma2=1.0, sigma_d2=1.0)


def random_instance(rng, n_c, params):
    # channel powers spread so that both denominator regimes occur
    scale_f = 10 ** rng.uniform(-4, 1, n_c) / params.ps
    scale_g = 10 ** rng.uniform(-4, 1, n_c) / params.pc
    f = np.sqrt(scale_f) * np.exp(2j * np.pi * rng.random(n_c))
    g = np.sqrt(scale_g) * np.exp(2j * np.pi * rng.random(n_c))
    return f, g


class TestOptimalValue:
    def test_unit(self):
        V, terms = optimal_value([1.0], [1.0], unit_params())
        assert V == pytest.approx(1 / 3)

    def test_dead_channel(self, params):
        V, terms = optimal_value([0.0, 1e-10], [1e-9, 1e-9], params)
        assert terms[0] == 0.0
        assert V == pytest.approx(terms[1])

    def test_additive(self, params, rng):
        F, G = rng.random(3) * 1e-9, rng.random(3) * 1e-9
        V, _ = optimal_value(F, G, params)
        assert V == pytest.approx(sum(optimal_value([F[i]], [G[i]], params)[0] for i in range(3)))

    def test_monotone(self, params, rng):
        F, G = rng.random(4) * 1e-6, rng.random(4) * 1e-8
        V, _ = optimal_value(F, G, params)
        for i in range(4):
            for arr in (F, G):
                bumped = arr.copy()
                bumped[i] *= 1.01
                args = (bumped, G) if arr is F else (F, bumped)
                assert optimal_value(*args, params)[0] >= V

    def test_relaxation_bounds(self, params, rng):
        F, G = 10 ** rng.uniform(-12, -2, 50), 10 ** rng.uniform(-12, -2, 50)
        VI = per_cluster_value(F, G, params)
        assert np.all(VI <= params.ps * F / params.sigma_d2)
        assert np.all(VI <= params.pc * G / params.sigma2)


class TestWeights:
    def test_single_relay_phase(self, params, rng):
        f, g = random_instance(rng, 1, params)
        w = optimal_weights(f, g, params)
        want = -(np.angle(f[0]) + np.angle(g[0]))
        assert np.exp(1j * np.angle(w[0])) == pytest.approx(np.exp(1j * want))

    @pytest.mark.parametrize("n_c", [1, 2, 4, 6])
    def test_attains_optimum(self, params, rng, n_c):
        for _ in range(50):
            f, g = random_instance(rng, n_c, params)
            w = optimal_weights(f, g, params)
            V, _ = optimal_value(abs(f) ** 2, abs(g) ** 2, params)
            assert sinr(w, f, g, params) == pytest.approx(V, rel=1e-8)
            power = np.sum((params.ps * abs(f) ** 2 + params.sigma2) * abs(w) ** 2)
            assert power == pytest.approx(params.pc, rel=1e-9)

    def test_common_rotation(self, params, rng):
        f, g = random_instance(rng, 3, params)
        rot = np.exp(1j * 0.7)
        a = sinr(optimal_weights(f, g, params), f, g, params)
        b = sinr(optimal_weights(f * rot, g, params), f * rot, g, params)
        assert a == pytest.approx(b, rel=1e-10)

    def test_all_blocked(self, params):
        w = optimal_weights([0j, 0j], [1j, 1.0], params)
        np.testing.assert_array_equal(w, [0, 0])


class TestSinr:
    def test_zero_weights(self, params):
        assert sinr([0j, 0j], [1e-5, 1e-5], [1e-6, 1e-6], params) == 0.0

    def test_infeasible(self, params):
        with pytest.raises(BeamformingError):
            sinr([1e6], [1e-5], [1e-5], params)

    def test_db(self):
        assert sinr_db(100.0) == pytest.approx(20.0)
        assert sinr_db(0.0) == -np.inf

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    def test_random_feasible_never_beat_optimum(self, seed, n_c):
        rng = np.random.default_rng(seed)
        params = ChannelParams()
        f, g = random_instance(rng, n_c, params)
        V, _ = optimal_value(abs(f) ** 2, abs(g) ** 2, params)
        D = params.ps * abs(f) ** 2 + params.sigma2
        for _ in range(40):
            w = rng.standard_normal(n_c) + 1j * rng.standard_normal(n_c)
            w *= np.sqrt(params.pc * rng.random() / np.sum(D * abs(w) ** 2))
            assert sinr(w, f, g, params) <= V * (1 + 1e-9)
