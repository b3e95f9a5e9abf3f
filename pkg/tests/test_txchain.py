import numpy as np
import pytest

from fdsic.errors import ConfigError
from fdsic.txchain import (
    TxConfig,
    gen_qpsk_ofdm,
    iq_mixer,
    ofdm_modulate,
    pa_hammerstein,
    si_composite,
    synth_dataset,
)
from helpers import expand_chain_model


class TestOfdm:
    def test_four_point_hand_idft(self):
        # oracle: evaluate the unitary IDFT sum directly
        x = gen_qpsk_ofdm(1, 4, 0.0, seed=42)
        assert x.size == 4
        rng = np.random.default_rng(np.random.PCG64(np.random.SeedSequence(42)))
        from fdsic.txchain import QPSK_POINTS

        sym = QPSK_POINTS[rng.integers(0, 4, size=(1, 4))][0]
        n = np.arange(4)
        hand = np.array(
            [np.sum(sym * np.exp(2j * np.pi * k * n / 4)) / 2.0 for k in range(4)]
        )
        np.testing.assert_allclose(x, hand, atol=1e-15)
        assert abs(np.mean(np.abs(x) ** 2) - 1.0) < 1e-12

    def test_constant_load_gives_impulse(self):
        # IDFT of an all-ones load concentrates everything at sample 0
        x = ofdm_modulate(np.ones((1, 8)), cp_len=0)
        assert abs(x[0] - np.sqrt(8)) < 1e-12
        np.testing.assert_allclose(x[1:], 0, atol=1e-12)

    def test_parseval_per_symbol(self):
        x = gen_qpsk_ofdm(3, 64, 0.0, seed=9)
        for s in range(3):
            energy = np.sum(np.abs(x[64 * s:64 * (s + 1)]) ** 2)
            assert abs(energy - 64.0) < 1e-12

    def test_cyclic_prefix_layout(self):
        x = gen_qpsk_ofdm(2, 16, 0.25, seed=3)
        assert x.size == 2 * 20
        np.testing.assert_array_equal(x[:4], x[16:20])  # prefix copies tail

    def test_deterministic(self):
        a = gen_qpsk_ofdm(2, 32, 0.25, seed=5)
        b = gen_qpsk_ofdm(2, 32, 0.25, seed=5)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("bad", [0, 1, 3, 12])
    def test_non_power_of_two_rejected(self, bad):
        with pytest.raises(ConfigError):
            gen_qpsk_ofdm(1, bad, 0.0, seed=0)

    def test_bad_cp_fraction_rejected(self):
        with pytest.raises(ConfigError):
            gen_qpsk_ofdm(1, 8, 1.0, seed=0)


class TestIqMixer:
    def test_identity_when_balanced(self, rng):
        x = rng.standard_normal(100) + 1j * rng.standard_normal(100)
        assert np.array_equal(iq_mixer(x, 1.0, 0.0), x)

    def test_real_signal_fixed_point_for_any_gain(self, rng):
        x = rng.standard_normal(50).astype(np.complex128)
        np.testing.assert_allclose(iq_mixer(x, 1.7, 0.0), x, rtol=1e-15)

    def test_full_inversion_conjugates(self):
        out = iq_mixer(np.array([1j]), 1.0, np.pi)
        np.testing.assert_allclose(out, [-1j], atol=1e-15)

    def test_matches_formula(self, rng):
        x = rng.standard_normal(20) + 1j * rng.standard_normal(20)
        psi, theta = 1.08, -0.12
        g = psi * np.exp(1j * theta)
        expected = 0.5 * (1 + g) * x + 0.5 * (1 - g) * np.conj(x)
        np.testing.assert_allclose(iq_mixer(x, psi, theta), expected, rtol=1e-15)


class TestPaHammerstein:
    def test_linear_memoryless_identity(self, rng):
        cfg = TxConfig(pa_order=1, pa_memory=0, pa_coeffs=[[1.0]], si_channel=[1.0])
        x = rng.standard_normal(32) + 1j * rng.standard_normal(32)
        assert np.array_equal(pa_hammerstein(x, cfg), x)

    def test_cubic_term(self, rng):
        eps = 1e-3
        cfg = TxConfig(
            pa_order=3, pa_memory=0, pa_coeffs=[[1.0, eps]], si_channel=[1.0]
        )
        x = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        expected = x + eps * x * np.abs(x) ** 2
        np.testing.assert_allclose(pa_hammerstein(x, cfg), expected, rtol=1e-12)

    def test_matches_bruteforce_sum(self, rng):
        # oracle: direct per-sample evaluation of the double sum
        coeffs = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
        cfg = TxConfig(pa_order=3, pa_memory=1, pa_coeffs=coeffs, si_channel=[1.0])
        x = rng.standard_normal(3) + 1j * rng.standard_normal(3)
        out = pa_hammerstein(x, cfg)
        for n in range(3):
            acc = 0j
            for m in range(2):
                if n - m < 0:
                    continue
                v = x[n - m]
                for ip, p in enumerate((1, 3)):
                    acc += coeffs[m, ip] * v ** ((p + 1) // 2) * np.conj(v) ** ((p - 1) // 2)
            np.testing.assert_allclose(out[n], acc, rtol=1e-12)

    def test_too_short_sequence(self):
        cfg = TxConfig(pa_order=1, pa_memory=3, pa_coeffs=np.ones((4, 1)))
        with pytest.raises(ConfigError):
            pa_hammerstein(np.ones(3, dtype=complex), cfg)

    def test_wrong_coeff_shape(self):
        with pytest.raises(ConfigError, match="pa_coeffs"):
            TxConfig(pa_order=5, pa_memory=2, pa_coeffs=np.ones((2, 3)))


class TestSiComposite:
    def _model(self, order, memory, entries):
        from fdsic.txchain import SIChannelModel

        h = np.zeros((memory, (order + 1) // 2, order + 1), dtype=complex)
        for (m, p, q), v in entries.items():
            h[m, (p - 1) // 2, q] = v
        return SIChannelModel(order=order, memory=memory, h=h)

    def test_linear_passthrough(self, rng):
        model = self._model(1, 1, {(0, 1, 1): 1.0})
        x = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        np.testing.assert_allclose(si_composite(x, model), x, rtol=1e-15)

    def test_pure_conjugate(self, rng):
        model = self._model(1, 1, {(0, 1, 0): 1.0})
        x = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        np.testing.assert_allclose(si_composite(x, model), np.conj(x), rtol=1e-15)

    def test_matches_bruteforce_triple_sum(self, rng):
        # oracle: direct per-sample triple sum over (p, q, m)
        order, memory = 3, 2
        h = (rng.standard_normal((memory, 2, order + 1))
             + 1j * rng.standard_normal((memory, 2, order + 1)))
        h[:, 0, 2:] = 0  # q <= p for p = 1
        from fdsic.txchain import SIChannelModel

        model = SIChannelModel(order=order, memory=memory, h=h)
        x = rng.standard_normal(5) + 1j * rng.standard_normal(5)
        out = si_composite(x, model)
        for n in range(5):
            acc = 0j
            for ip, p in enumerate((1, 3)):
                for q in range(p + 1):
                    for m in range(memory):
                        if n - m >= 0:
                            v = x[n - m]
                            acc += h[m, ip, q] * v**q * np.conj(v) ** (p - q)
            np.testing.assert_allclose(out[n], acc, rtol=1e-12)

    def test_q_above_p_rejected(self):
        with pytest.raises(ConfigError, match="q > p"):
            self._model(3, 1, {(0, 1, 3): 1.0})


class TestChainVsComposite:
    def test_expanded_model_reproduces_chain(self, rng):
        # the composite form spans the IQ+PA+FIR chain exactly
        for trial in range(4):
            cfg = TxConfig(
                psi=1.0 + 0.1 * rng.standard_normal(),
                theta=0.1 * rng.standard_normal(),
                pa_order=3,
                pa_memory=1,
                pa_coeffs=rng.standard_normal((2, 2)) * [[1.0, 0.05]]
                + 1j * rng.standard_normal((2, 2)) * [[1.0, 0.05]],
                si_channel=rng.standard_normal(3) + 1j * rng.standard_normal(3),
            )
            x = rng.standard_normal(200) + 1j * rng.standard_normal(200)
            chain = np.convolve(
                pa_hammerstein(iq_mixer(x, cfg.psi, cfg.theta), cfg), cfg.si_channel
            )[:200]
            composite = si_composite(x, expand_chain_model(cfg))
            scale = np.max(np.abs(chain))
            assert np.max(np.abs(chain - composite)) < 1e-9 * scale


class TestSynthDataset:
    def test_transparent_chain_copies_input(self):
        cfg = TxConfig(
            psi=1.0, theta=0.0, pa_order=1, pa_memory=0,
            pa_coeffs=[[1.0]], si_channel=[1.0],
        )
        d = synth_dataset(cfg, 512, memory=4)
        assert np.array_equal(d.x, d.y)

    def test_deterministic_bytes(self):
        from fdsic.txchain import dataset_to_bytes

        a = synth_dataset(TxConfig(seed=5), 2048)
        b = synth_dataset(TxConfig(seed=5), 2048)
        assert dataset_to_bytes(a) == dataset_to_bytes(b)

    def test_seed_changes_data(self):
        a = synth_dataset(TxConfig(seed=5), 2048)
        b = synth_dataset(TxConfig(seed=6), 2048)
        assert not np.array_equal(a.x, b.x)
        assert a.digest != b.digest

    def test_noise_power(self):
        quiet = synth_dataset(TxConfig(seed=3, noise_power=0.0), 8192)
        noisy = synth_dataset(TxConfig(seed=3, noise_power=0.5), 8192)
        assert np.array_equal(quiet.x, noisy.x)
        noise = noisy.y - quiet.y
        assert abs(np.mean(np.abs(noise) ** 2) - 0.5) < 0.05

    def test_sample_count_and_memory(self):
        d = synth_dataset(TxConfig(), 20480)
        assert d.n_samples == 20480
        assert d.memory == 13

    def test_matched_ls_fit_cancels_above_60db(self):
        # the composite basis spans the synthesis model, so a matched
        # LS fit leaves only numerical residual
        from fdsic.bench import SplitSpec, cancellation_db, split_dataset
        from fdsic.cancelers import CancelerSpec, predict_total, train_stack

        d = synth_dataset(TxConfig(seed=21), 6144)  # P=5 PA, 4-tap channel
        train, test = split_dataset(d, SplitSpec())
        stack, _ = train_stack(train, CancelerSpec(kind="poly", P=5, M=13))
        cut = stack.M - 1
        psi_db = cancellation_db(test.y[cut:], predict_total(stack, test.x)[cut:])
        assert psi_db > 60.0
