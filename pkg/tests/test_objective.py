import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats
from conftest import micro_cfg, micro_model

from textvae import autodiff as ad
from textvae.autodiff import AdamState, Tape, backward
from textvae.model import init_params
from textvae.objective import (BetaSchedule, TrainConfig, beta_at, compute_loss,
                               gaussian_kl, hinged_kl, reparameterize, train)
from textvae.rng import RngState
from textvae.tokenizer import BOS, CLS, EOS, EncodedSentence


class TestGaussianKl:
    def test_standard_normal_is_zero(self):
        np.testing.assert_array_equal(gaussian_kl([0.0, 0.0], [0.0, 0.0]), 0.0)

    def test_numerical_integration_oracle(self):
        # KL = E_q[log q(z) - log p(z)] integrated directly
        for mu, lv in [(0.3, -0.5), (-1.2, 0.8), (2.0, 0.0)]:
            sd = np.exp(lv / 2)
            q = stats.norm(mu, sd)
            p = stats.norm(0, 1)

            def f(z):
                return q.pdf(z) * (q.logpdf(z) - p.logpdf(z))

            want, _ = integrate.quad(f, mu - 12 * sd, mu + 12 * sd)
            np.testing.assert_allclose(gaussian_kl(mu, lv), want, atol=1e-8)

    def test_nonnegative(self):
        rng = RngState(seed=1)
        kl = gaussian_kl(rng.normal((50,)), rng.normal((50,)))
        assert np.all(kl >= 0)

    def test_rejects_nonfinite(self):
        with pytest.raises(ad.NumericError):
            gaussian_kl([np.nan], [0.0])


class TestHinge:
    def test_below_lambda_clamps(self):
        assert hinged_kl([0.1, 0.2], lam=0.5) == 1.0

    def test_above_lambda_passes(self):
        assert hinged_kl([0.7, 0.9], lam=0.5) == pytest.approx(1.6)

    def test_mixed(self):
        assert hinged_kl([0.1, 0.9], lam=0.5) == pytest.approx(1.4)

    def test_zero_lambda_is_plain_sum(self):
        v = [0.3, 0.0, 1.1]
        assert hinged_kl(v, lam=0.0) == pytest.approx(sum(v))

    def test_negative_lambda_rejected(self):
        with pytest.raises(ValueError):
            hinged_kl([0.1], lam=-0.1)


class TestReparameterize:
    def test_moments(self):
        mu = np.array([1.0, -2.0])
        lv = np.array([0.0, np.log(4.0)])
        rng = RngState(seed=3)
        zs = np.array([reparameterize(mu, lv, rng)[0] for _ in range(20000)])
        np.testing.assert_allclose(zs.mean(0), mu, atol=0.05)
        np.testing.assert_allclose(zs.var(0), [1.0, 4.0], rtol=0.05)

    def test_replay(self):
        mu, lv = np.zeros(4), np.zeros(4)
        z1, e1 = reparameterize(mu, lv, RngState(seed=5, stream_id=2))
        z2, e2 = reparameterize(mu, lv, RngState(seed=5, stream_id=2))
        np.testing.assert_array_equal(z1, z2)
        np.testing.assert_array_equal(e1, e2)


class TestBetaSchedule:
    def test_reference_points(self):
        s = BetaSchedule(total_steps=1000, n_cycles=10, beta_max=1.0)
        assert s.cycle_len == 100
        assert beta_at(0, s) == 0.0
        assert beta_at(49, s) == 0.0
        assert beta_at(50, s) == 0.0            # ramp start, offset 0 of 25
        assert beta_at(62, s) == pytest.approx(12 / 25)
        assert beta_at(75, s) == 1.0
        assert beta_at(99, s) == 1.0
        assert beta_at(100, s) == 0.0           # next cycle restarts

    def test_remainder_steps_hold_max(self):
        s = BetaSchedule(total_steps=1005, n_cycles=10)
        for step in range(1000, 1005):
            assert beta_at(step, s) == 1.0

    def test_out_of_range(self):
        s = BetaSchedule(total_steps=100, n_cycles=10)
        with pytest.raises(ValueError):
            beta_at(-1, s)
        with pytest.raises(ValueError):
            beta_at(100, s)

    def test_beta_max_scales_ramp_and_hold(self):
        s = BetaSchedule(total_steps=100, n_cycles=1, beta_max=0.5)
        assert beta_at(60, s) == pytest.approx(0.2)
        assert beta_at(80, s) == 0.5

    @given(st.integers(min_value=1, max_value=8),
           st.integers(min_value=40, max_value=4000))
    @settings(max_examples=60, deadline=None)
    def test_properties(self, n_cycles, total_steps):
        if total_steps < n_cycles * 8:
            total_steps = n_cycles * 8
        s = BetaSchedule(total_steps=total_steps, n_cycles=n_cycles)
        C = s.cycle_len
        betas = np.array([beta_at(t, s) for t in range(total_steps)])
        assert np.all((betas >= 0) & (betas <= s.beta_max))
        # each full cycle starts at zero and ends held at beta_max
        for c in range(n_cycles):
            assert betas[c * C] == 0.0
            assert betas[c * C + C - 1] == s.beta_max
        # within a cycle beta never decreases
        for c in range(n_cycles):
            seg = betas[c * C:(c + 1) * C]
            assert np.all(np.diff(seg) >= -1e-15)


def _toy_batch():
    return [
        EncodedSentence([CLS, 5, 6, 7], [BOS, 5, 6, 7, EOS], "a"),
        EncodedSentence([CLS, 8, 9], [BOS, 8, 9, EOS], "b"),
        EncodedSentence([CLS, 6], [BOS, 6, EOS], "c"),
    ]


class TestComputeLoss:
    def test_zero_beta_total_is_recon_bitwise(self):
        cfg, params = micro_model()
        total, bd = compute_loss(_toy_batch(), params, cfg, beta=0.0, lam=0.5,
                                 rng=RngState(seed=7, stream_id=2))
        assert bd.total == bd.recon == total.item()

    def test_recombination_identity(self):
        cfg, params = micro_model()
        total, bd = compute_loss(_toy_batch(), params, cfg, beta=0.8, lam=0.5,
                                 rng=RngState(seed=7, stream_id=2))
        assert bd.total == pytest.approx(bd.recon + 0.8 * bd.kl_hinged, rel=1e-12)
        assert bd.kl_raw == pytest.approx(float(bd.kl_per_dim.sum()), rel=1e-12)
        assert bd.kl_hinged >= bd.kl_raw - 1e-12

    def test_recon_per_token_scaling(self):
        cfg, params = micro_model()
        batch = _toy_batch()
        _, bd = compute_loss(batch, params, cfg, beta=0.0, lam=0.5,
                             rng=RngState(seed=7, stream_id=2))
        n_tokens = sum(len(s.decoder_view) - 1 for s in batch)
        assert bd.recon == pytest.approx(bd.recon_per_token * n_tokens / len(batch))

    def test_deterministic_given_rng(self):
        cfg, params = micro_model()
        t1, b1 = compute_loss(_toy_batch(), params, cfg, 0.5, 0.5,
                              RngState(seed=11, stream_id=2))
        t2, b2 = compute_loss(_toy_batch(), params, cfg, 0.5, 0.5,
                              RngState(seed=11, stream_id=2))
        assert t1.values == t2.values
        np.testing.assert_array_equal(b1.kl_per_dim, b2.kl_per_dim)

    def test_empty_batch_rejected(self):
        cfg, params = micro_model()
        with pytest.raises(ValueError):
            compute_loss([], params, cfg, 0.0, 0.5, RngState(seed=0))

    def test_hinge_kills_kl_gradient_below_lambda(self):
        """Posterior near the prior: every dim clamps, so the KL term
        contributes no gradient anywhere (recon still does)."""
        cfg, params = micro_model()
        batch = _toy_batch()
        rng_seed = 21

        def grads(beta):
            from textvae.autodiff import zero_grads
            zero_grads(params)
            with Tape() as tape:
                total, bd = compute_loss(batch, params, cfg, beta, lam=50.0,
                                         rng=RngState(seed=rng_seed, stream_id=2))
            backward(tape, total)
            assert np.all(bd.kl_per_dim.sum() < 50.0 * cfg.P)
            return {k: v.grad.copy() for k, v in params.items()}, bd

        g0, _ = grads(0.0)
        g1, bd1 = grads(1.0)
        # w_e feeds only the posterior; with the hinge saturated the only
        # path to the loss is through z inside the reconstruction term
        assert bd1.kl_hinged == pytest.approx(50.0 * cfg.P)
        for k in g0:
            np.testing.assert_array_equal(g0[k], g1[k])


class TestTrain:
    def test_determinism_bitwise(self):
        cfg = micro_cfg()
        tc = TrainConfig(total_steps=20, n_cycles=1, batch_size=4, lr=1e-3, seed=3)
        corpus = _toy_batch()
        runs = []
        for _ in range(2):
            params = init_params(cfg, RngState(seed=9))
            log = train(tc, corpus, params, cfg)
            runs.append((log, {k: v.values.copy() for k, v in params.items()}))
        assert runs[0][0] == runs[1][0]
        for k in runs[0][1]:
            np.testing.assert_array_equal(runs[0][1][k], runs[1][1][k])

    def test_loss_decreases(self):
        cfg = micro_cfg()
        params = init_params(cfg, RngState(seed=2))
        tc = TrainConfig(objective="ae", total_steps=150, batch_size=3, lr=3e-3,
                         seed=1, n_cycles=1)
        log = train(tc, _toy_batch(), params, cfg)
        assert log[-1]["recon"] < log[0]["recon"] * 0.5

    def test_ae_beta_always_zero(self):
        tc = TrainConfig(objective="ae", total_steps=100, n_cycles=2)
        assert all(tc.beta(s) == 0.0 for s in range(100))

    def test_constant_beta_override(self):
        tc = TrainConfig(constant_beta=1.0, total_steps=100, n_cycles=2)
        assert all(tc.beta(s) == 1.0 for s in range(100))

    def test_empty_corpus(self):
        cfg, params = micro_model()
        with pytest.raises(ValueError):
            train(TrainConfig(total_steps=1), [], params, cfg)

    def test_log_sink_matches_return(self, tmp_path):
        import json
        cfg = micro_cfg()
        params = init_params(cfg, RngState(seed=4))
        path = tmp_path / "log.ndjson"
        tc = TrainConfig(total_steps=10, n_cycles=1, batch_size=2, seed=5)
        log = train(tc, _toy_batch(), params, cfg, log_path=str(path))
        lines = [json.loads(l) for l in path.read_text().splitlines()]
        assert lines == log
