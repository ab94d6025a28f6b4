import numpy as np
import pytest
from scipy import integrate, stats
from scipy.special import logsumexp
from conftest import micro_cfg, micro_model, zero_model

from textvae import metrics as mx
from textvae.model import encode
from textvae.rng import RngState
from textvae.tokenizer import BOS, CLS, EOS, EncodedSentence


def _sent(body):
    return EncodedSentence([CLS] + body, [BOS] + body + [EOS], " ".join(map(str, body)))


class TestLogDensities:
    def test_log_normal_matches_scipy(self):
        rng = RngState(seed=1)
        z = rng.normal((5, 3))
        mu = rng.normal((5, 3))
        lv = rng.normal((5, 3)) * 0.5
        got = mx._log_normal(z, mu, lv)
        want = np.array([stats.norm(mu[i], np.exp(lv[i] / 2)).logpdf(z[i]).sum()
                         for i in range(5)])
        np.testing.assert_allclose(got, want, atol=1e-10)

    def test_log_prior_is_standard_normal(self):
        z = np.array([[0.3, -1.2, 0.0]])
        want = stats.norm(0, 1).logpdf(z[0]).sum()
        np.testing.assert_allclose(mx._log_prior(z), [want], atol=1e-12)

    def test_log_px_given_z_uniform_model(self):
        cfg = micro_cfg()
        params = zero_model(cfg)
        s = _sent([5, 6, 7])
        zs = np.zeros((3, cfg.P))
        got = mx.log_px_given_z(params, cfg, s, zs)
        # four predicted tokens (5, 6, 7, EOS), each uniform over V
        np.testing.assert_allclose(got, -4 * np.log(cfg.V_dec), atol=1e-12)


class TestImportanceWeighting:
    def test_k_must_be_positive(self):
        cfg, params = micro_model()
        with pytest.raises(ValueError):
            mx.iw_log_weights(params, cfg, _sent([5]), 0, RngState(seed=0))

    def test_uniform_model_exact_likelihood(self):
        # zero params: posterior equals the prior, so every importance
        # weight is exactly log p(x|z) and there is no estimator variance
        cfg = micro_cfg()
        params = zero_model(cfg)
        s = _sent([5, 6])
        ll = mx.iw_log_likelihood(params, cfg, s, 16, RngState(seed=2))
        np.testing.assert_allclose(ll, -3 * np.log(cfg.V_dec), atol=1e-12)

    def test_ppl_of_uniform_model_is_vocab_size(self):
        cfg = micro_cfg()
        params = zero_model(cfg)
        corpus = [_sent([5, 6]), _sent([7]), _sent([8, 9, 5])]
        ppl = mx.perplexity(params, cfg, corpus, k=4, rng=RngState(seed=3))
        np.testing.assert_allclose(ppl, cfg.V_dec, rtol=1e-12)

    def test_word_count_excludes_bos_includes_eos(self):
        assert mx.word_count(_sent([5, 6, 7])) == 4

    def test_replay(self):
        cfg, params = micro_model()
        s = _sent([5, 6])
        a = mx.iw_log_likelihood(params, cfg, s, 8, RngState(seed=4, stream_id=1))
        b = mx.iw_log_likelihood(params, cfg, s, 8, RngState(seed=4, stream_id=1))
        assert a == b


class TestSubsetAverage:
    def test_k1_is_mean(self):
        log_w = np.array([0.1, -0.4, 2.0, 0.7])
        assert mx.iw_subset_average(log_w, 1) == pytest.approx(log_w.mean())

    def test_full_k_is_logsumexp(self):
        log_w = np.array([0.1, -0.4, 2.0, 0.7])
        want = logsumexp(log_w) - np.log(4)
        assert mx.iw_subset_average(log_w, 4) == pytest.approx(want)

    def test_monotone_nondecreasing_in_k(self):
        rng = RngState(seed=5)
        for trial in range(5):
            log_w = rng.normal((10,)) * 2.0
            vals = [mx.iw_subset_average(log_w, k) for k in range(1, 11)]
            assert np.all(np.diff(vals) >= -1e-12)

    def test_k_exceeding_weights(self):
        with pytest.raises(ValueError):
            mx.iw_subset_average(np.zeros(3), 4)


class TestMutualInformation:
    def test_two_component_oracle(self):
        """Aggregate posterior = balanced mixture of two 1-D Gaussians.
        Oracle MI via numerical integration of E_x KL(q(z|x) || q(z))."""
        a, sd = 2.0, 0.3
        mus = np.array([[-a], [a]])
        lvs = np.full((2, 1), 2 * np.log(sd))
        reps = 400
        mu = np.repeat(mus, reps, axis=0)
        lv = np.repeat(lvs, reps, axis=0)
        mi, parts = mx.mi_from_posteriors(mu, lv, RngState(seed=6))

        comps = [stats.norm(-a, sd), stats.norm(a, sd)]

        def qz(z):
            return 0.5 * comps[0].pdf(z) + 0.5 * comps[1].pdf(z)

        want = 0.0
        for c in comps:
            f = lambda z: c.pdf(z) * (c.logpdf(z) - np.log(qz(z)))
            val, _ = integrate.quad(f, -a - 10 * sd, a + 10 * sd, limit=200)
            want += 0.5 * val
        assert want == pytest.approx(np.log(2), abs=1e-3)  # sanity on the oracle
        assert mi == pytest.approx(want, abs=0.05)

    def test_identical_posteriors_zero_mi(self):
        mu = np.zeros((50, 3))
        lv = np.zeros((50, 3))
        mi, parts = mx.mi_from_posteriors(mu, lv, RngState(seed=7))
        assert mi == pytest.approx(0.0, abs=1e-12)
        assert parts["aggregate_kl"] == pytest.approx(parts["marginal_kl"], abs=1e-12)

    def test_decomposition_residual_is_zero(self):
        rng = RngState(seed=8)
        mu = rng.normal((40, 4))
        lv = rng.normal((40, 4)) * 0.3
        mi, parts = mx.mi_from_posteriors(mu, lv, RngState(seed=9))
        assert parts["residual"] == pytest.approx(0.0, abs=1e-12)
        assert mi <= parts["aggregate_kl"] + 1e-12

    def test_needs_two_sentences(self):
        cfg, params = micro_model()
        with pytest.raises(ValueError):
            mx.mutual_information(params, cfg, [_sent([5])], RngState(seed=0))


class TestActiveUnits:
    def test_constructed_counts(self):
        n = 200
        rng = RngState(seed=10)
        means = np.zeros((n, 4))
        means[:, 0] = rng.normal((n,)) * 1.0      # clearly active
        means[:, 1] = rng.normal((n,)) * 0.05     # var 0.0025 < 0.01
        means[:, 2] = 3.7                          # constant, var 0
        means[:, 3] = rng.normal((n,)) * 0.5
        au, var = mx.active_units_from_means(means)
        assert au == 2
        assert var[2] == pytest.approx(0.0, abs=1e-28)

    def test_threshold_boundary(self):
        means = np.array([[0.0], [0.25]])  # sample var (ddof=1) is exactly 0.03125
        au, var = mx.active_units_from_means(means, threshold=0.01)
        assert var[0] == 0.03125
        assert au == 1
        au2, _ = mx.active_units_from_means(means, threshold=0.03125)
        assert au2 == 0  # strict inequality at the threshold

    def test_single_sentence_rejected(self):
        with pytest.raises(ValueError):
            mx.active_units_from_means(np.zeros((1, 3)))


class TestElboAndReport:
    def test_elbo_identity(self):
        cfg, params = micro_model()
        corpus = [_sent([5, 6]), _sent([7, 8])]
        neg_elbo, kl, rec = mx.elbo_report(params, cfg, corpus, RngState(seed=11))
        assert neg_elbo == rec + kl

    def test_uniform_model_elbo(self):
        cfg = micro_cfg()
        params = zero_model(cfg)
        corpus = [_sent([5, 6]), _sent([7])]
        neg_elbo, kl, rec = mx.elbo_report(params, cfg, corpus, RngState(seed=12))
        assert kl == pytest.approx(0.0, abs=1e-12)
        want_rec = (3 + 2) / 2 * np.log(cfg.V_dec)
        assert rec == pytest.approx(want_rec, rel=1e-12)

    def test_evaluate_report_roundtrip(self):
        import json
        cfg, params = micro_model()
        corpus = [_sent([5, 6]), _sent([7, 8]), _sent([9, 5])]
        rep = mx.evaluate(params, cfg, corpus, k=3, rng=RngState(seed=13))
        d = json.loads(rep.to_json())
        assert d["k_used"] == 3 and d["n_sentences"] == 3
        assert isinstance(d["au"], int)
        assert "PPL" in rep.table()

    def test_kl_decomposition_check_keys(self):
        cfg, params = micro_model()
        corpus = [_sent([5, 6]), _sent([7, 8]), _sent([9])]
        out = mx.kl_decomposition_check(params, cfg, corpus, RngState(seed=14))
        assert out["residual"] == pytest.approx(0.0, abs=1e-12)
        assert out["mi_minus_recon"] == pytest.approx(out["mi"] - out["recon_term"])
