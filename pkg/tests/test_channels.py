"""Random channel generation: determinism, moments, correlation structure."""

import numpy as np
import pytest

from decoupsim.errors import InvalidInputError
from decoupsim.channels import (
    CeErrorParams,
    KroneckerParams,
    LargeScaleParams,
    RngSeed,
    apply_large_scale,
    correlation_matrix,
    gen_awgn,
    gen_iid_channel,
    kronecker_correlate,
    matrix_sqrt_psd,
    perturb_channel,
)


class TestRngSeed:
    def test_same_seed_same_stream_reproduces(self):
        a = gen_iid_channel(RngSeed(42, 7), 6, 3)
        b = gen_iid_channel(RngSeed(42, 7), 6, 3)
        assert np.array_equal(a, b)

    def test_different_streams_differ(self):
        a = gen_iid_channel(RngSeed(42, 0), 6, 3)
        b = gen_iid_channel(RngSeed(42, 1), 6, 3)
        assert not np.allclose(a, b)


class TestIidChannel:
    def test_unit_variance_and_balanced_parts(self):
        h = gen_iid_channel(RngSeed(1), 400, 250)  # 1e5 entries
        power = np.mean(np.abs(h) ** 2)
        assert abs(power - 1.0) <= 0.02
        assert abs(np.mean(h.real ** 2) - 0.5) <= 0.02
        assert abs(np.mean(h.imag ** 2) - 0.5) <= 0.02

    def test_entries_uncorrelated(self):
        h = gen_iid_channel(RngSeed(2), 100_000, 2)
        c = np.mean(h[:, 0] * np.conj(h[:, 1]))
        assert abs(c) <= 0.02

    def test_bad_dims_rejected(self):
        with pytest.raises(InvalidInputError):
            gen_iid_channel(RngSeed(0), 0, 3)


class TestCorrelationMatrix:
    def test_rho_zero_is_identity(self):
        assert np.array_equal(correlation_matrix(0.0, 5), np.eye(5))

    def test_squared_exponent_pattern(self):
        s = correlation_matrix(0.25, 3)
        expected_first_row = [1.0, 0.25, 0.25 ** 4]
        assert np.allclose(s[0], expected_first_row)
        assert np.allclose(s[1], [0.25, 1.0, 0.25])

    def test_symmetric_unit_diagonal_psd(self):
        for rho in (0.05, 0.25, 0.7, 0.95):
            for n in (2, 5, 16):
                s = correlation_matrix(rho, n)
                assert np.array_equal(s, s.T)
                assert np.allclose(np.diag(s), 1.0)
                assert np.linalg.eigvalsh(s).min() >= -1e-10

    def test_rho_out_of_range_rejected(self):
        for rho in (-0.1, 1.0, 1.5):
            with pytest.raises(InvalidInputError):
                correlation_matrix(rho, 4)


class TestMatrixSqrt:
    def test_square_root_squares_back(self):
        for rho in (0.05, 0.25, 0.6):
            s = correlation_matrix(rho, 8)
            root = matrix_sqrt_psd(s)
            assert np.linalg.norm(root @ root - s) <= 1e-10
            # oracle: Hermitian eigendecomposition reconstruction
            vals, vecs = np.linalg.eigh(s)
            oracle = (vecs * np.sqrt(vals)) @ vecs.conj().T
            assert np.linalg.norm(root - oracle) <= 1e-10

    def test_indefinite_rejected(self):
        with pytest.raises(InvalidInputError):
            matrix_sqrt_psd(np.diag([1.0, -1.0]))


class TestKronecker:
    def test_identity_correlation_is_passthrough(self):
        h = gen_iid_channel(RngSeed(3), 8, 4)
        out = kronecker_correlate(h, np.eye(4), np.eye(8))
        assert np.allclose(out, h)

    def test_empirical_receive_covariance_matches(self):
        params = KroneckerParams(rho_tx=0.25, rho_rx=0.05)
        n_r, m = 8, 2
        s_rx = correlation_matrix(params.rho_rx, n_r)
        s_tx = correlation_matrix(params.rho_tx, m)
        rng_draws = 50_000
        acc = np.zeros((n_r, n_r), dtype=complex)
        for i in range(rng_draws // 100):
            h = gen_iid_channel(RngSeed(4, i), n_r, 100 * m)
            h = h.reshape(n_r, 100, m)
            for j in range(100):
                hc = kronecker_correlate(h[:, j, :], s_tx, s_rx)
                acc += hc @ hc.conj().T
        cov = acc / (rng_draws * m)
        # E[H H^H] = trace(S_tx) / m * S_rx = S_rx for unit-diagonal S_tx
        assert np.linalg.norm(cov - s_rx) / np.linalg.norm(s_rx) <= 0.03

    def test_zero_rhos_reduce_to_iid_bit_for_bit(self):
        h = gen_iid_channel(RngSeed(5), 6, 3)
        out = kronecker_correlate(h, correlation_matrix(0.0, 3), correlation_matrix(0.0, 6))
        assert np.array_equal(out, h)


class TestLargeScale:
    def test_neutral_parameters_are_identity(self):
        params = LargeScaleParams(mu_db=0.0, l_path=1.0, d_rel=1.0, tau=3.0)
        h = gen_iid_channel(RngSeed(6), 4, 2)
        assert np.allclose(apply_large_scale(h, params, RngSeed(7)), h)

    def test_same_stream_same_gain(self):
        params = LargeScaleParams()
        h = np.ones((3, 2), dtype=complex)
        a = apply_large_scale(h, params, RngSeed(8, 3))
        b = apply_large_scale(h, params, RngSeed(8, 3))
        assert np.array_equal(a, b)

    def test_lognormal_gain_moments(self):
        # gain g = 10^(mu nu / 10) * sqrt(L / d^tau); with mu=3 dB the median
        # multiplicative factor is sqrt(L/d^tau) = 1/0.65 for the defaults
        params = LargeScaleParams(mu_db=3.0, l_path=0.65, d_rel=0.65, tau=3.0)
        h = np.ones((1, 1), dtype=complex)
        gains = np.array([
            abs(apply_large_scale(h, params, RngSeed(9, i))[0, 0]) for i in range(20_000)
        ])
        base = np.sqrt(params.l_path / params.d_rel ** params.tau)
        assert base == pytest.approx(1 / 0.65, rel=1e-12)
        assert np.median(gains) == pytest.approx(base, rel=0.02)
        # log10 of the shadowing factor is N(0, (mu/10)^2)
        log_factor = np.log10(gains / base)
        assert np.std(log_factor) == pytest.approx(0.3, rel=0.05)

    def test_bad_params_rejected(self):
        with pytest.raises(InvalidInputError):
            LargeScaleParams(l_path=0.0)


class TestCeError:
    def test_zero_variance_is_exact_passthrough(self):
        h = gen_iid_channel(RngSeed(10), 5, 3)
        out = perturb_channel(h, CeErrorParams(0.0), RngSeed(11))
        assert np.array_equal(out, h)

    def test_perturbation_variance(self):
        h = np.zeros((400, 250), dtype=complex)
        out = perturb_channel(h, CeErrorParams(0.01), RngSeed(12))
        var = np.mean(np.abs(out - h) ** 2)
        assert abs(var - 0.01) <= 0.0005

    def test_perturbation_independent_of_channel(self):
        h = gen_iid_channel(RngSeed(13), 100_000, 1)
        delta = perturb_channel(h, CeErrorParams(1.0), RngSeed(14)) - h
        corr = np.mean(h * np.conj(delta)) / np.sqrt(np.mean(np.abs(h) ** 2) * np.mean(np.abs(delta) ** 2))
        assert abs(corr) <= 0.02

    def test_negative_variance_rejected(self):
        with pytest.raises(InvalidInputError):
            CeErrorParams(-0.1)


class TestAwgn:
    def test_zero_variance_gives_zeros(self):
        assert np.array_equal(gen_awgn(RngSeed(15), 0.0, 8), np.zeros(8))

    def test_fixed_seed_determinism(self):
        assert np.array_equal(gen_awgn(RngSeed(16), 1.0, 8), gen_awgn(RngSeed(16), 1.0, 8))

    def test_empirical_variance(self):
        n = gen_awgn(RngSeed(17), 0.25, 100_000)
        assert abs(np.mean(np.abs(n) ** 2) - 0.25) <= 0.005
