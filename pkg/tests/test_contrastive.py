import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from geoclr.contrastive import (
    DegenerateEmbeddingWarning,
    LossConfig,
    ProjectionHead,
    combine_losses,
    cosine_sim,
    gclr_grad,
    gclr_grad_with_head,
    gclr_loss,
    project,
    read_embedding_file,
    write_embedding_file,
)
from geoclr.errors import InputError, NonPositiveTau, ShapeMismatch

from oracles import central_difference, max_rel_err


def vectors_with_sims(sim_pos, sims_neg):
    """2-d embeddings realizing prescribed anchor cosines."""
    anchor = np.array([[1.0, 0.0]])
    pos = np.array([[sim_pos, math.sqrt(max(0.0, 1.0 - sim_pos**2))]])
    neg = np.array([[s, math.sqrt(max(0.0, 1.0 - s**2))] for s in sims_neg])
    return anchor, pos, neg


class TestProjectionHead:
    def test_identity_head_passes_nonnegative_input(self):
        dim = 4
        head = ProjectionHead(np.eye(dim), np.zeros(dim), np.eye(dim), np.zeros(dim))
        f = np.array([[0.5, 0.0, 2.0, 1.0], [1.0, 3.0, 0.0, 0.25]])
        np.testing.assert_array_equal(project(head, f), f)

    def test_zero_weights_zero_output(self):
        head = ProjectionHead(np.zeros((3, 3)), np.zeros(3), np.zeros((3, 2)), np.zeros(2))
        out = project(head, np.ones((4, 3)))
        np.testing.assert_array_equal(out, np.zeros((4, 2)))

    def test_equal_rows_equal_outputs(self):
        head = ProjectionHead.init(5, seed=3)
        f = np.tile(np.random.default_rng(0).normal(size=(1, 5)), (2, 1))
        out = project(head, f)
        np.testing.assert_array_equal(out[0], out[1])

    def test_default_dims(self):
        head = ProjectionHead.init(16, seed=0)
        assert head.w1.shape == (16, 16)
        assert head.w2.shape == (16, 8)

    def test_init_deterministic(self):
        h1 = ProjectionHead.init(6, seed=9)
        h2 = ProjectionHead.init(6, seed=9)
        np.testing.assert_array_equal(h1.w1, h2.w1)
        np.testing.assert_array_equal(h1.b2, h2.b2)

    def test_shape_mismatch(self):
        head = ProjectionHead.init(4, seed=0)
        with pytest.raises(ShapeMismatch):
            project(head, np.ones((2, 5)))


class TestCosineSim:
    def test_self_similarity(self):
        v = np.array([1.0, 2.0, -0.5])
        assert cosine_sim(v, v) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_sim([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_scale_invariance(self):
        u = np.array([0.3, -0.7, 2.0])
        assert cosine_sim(u, 2.0 * u) == pytest.approx(1.0)

    def test_zero_vector_warns_and_returns_zero(self):
        with pytest.warns(DegenerateEmbeddingWarning):
            assert cosine_sim([0.0, 0.0], [1.0, 0.0]) == 0.0


class TestGclrLoss:
    @pytest.mark.parametrize("k", [1, 5, 63])
    @pytest.mark.parametrize("tau", [0.07, 0.5, 3.0])
    def test_symmetric_fixture_ln_k_plus_1(self, k, tau):
        a, p, n = vectors_with_sims(0.3, [0.3] * k)
        _, per = gclr_loss(a, p, n, tau)
        assert per[0] == pytest.approx(math.log(k + 1), abs=1e-12)

    def test_saturated_sims_small_tau(self):
        k = 4
        a = np.array([[1.0, 0.0]])
        p = np.array([[1.0, 0.0]])
        n = np.tile([[-1.0, 0.0]], (k, 1))
        loss, per = gclr_loss(a, p, n, 0.1)
        expected = math.log(1.0 + k * math.exp(-20.0))
        assert per[0] == pytest.approx(expected, rel=1e-12)

    def test_hand_evaluated_scalar_case(self):
        # sims (0.5, 0.0) at tau 0.5: loss = log(1 + e^-1).
        a, p, n = vectors_with_sims(0.5, [0.0])
        _, per = gclr_loss(a, p, n, 0.5)
        assert per[0] == pytest.approx(math.log(1.0 + math.exp(-1.0)), abs=1e-12)

    def test_matches_high_precision_oracle_at_extreme_scale(self):
        mpmath = pytest.importorskip("mpmath")
        mp = mpmath.mp
        mp.prec = 256
        tau = 1.0 / 700.0  # sims up to 1.0 -> logits up to 700
        sims_neg = [-1.0, -0.5, 0.0, 0.9]
        a, p, n = vectors_with_sims(1.0, sims_neg)
        _, per = gclr_loss(a, p, n, tau)
        assert np.isfinite(per[0])
        sp = mpmath.mpf(1.0) / mpmath.mpf(tau)
        denom = mpmath.exp(sp)
        for s in sims_neg:
            denom += mpmath.exp(mpmath.mpf(s) / mpmath.mpf(tau))
        expected = float(-mpmath.log(mpmath.exp(sp) / denom))
        assert per[0] == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_batch_sums_per_anchor(self):
        rng = np.random.default_rng(1)
        a, p, n = rng.normal(size=(3, 6)), rng.normal(size=(3, 6)), rng.normal(size=(4, 6))
        total, per = gclr_loss(a, p, n, 0.2)
        assert total == pytest.approx(per.sum())
        assert per.shape == (3,)

    def test_per_anchor_negatives_match_shared_when_tiled(self):
        rng = np.random.default_rng(2)
        a, p, n = rng.normal(size=(3, 5)), rng.normal(size=(3, 5)), rng.normal(size=(4, 5))
        shared_total, shared_per = gclr_loss(a, p, n, 0.3)
        tiled = np.tile(n[None, :, :], (3, 1, 1))
        per_total, per_per = gclr_loss(a, p, tiled, 0.3)
        np.testing.assert_allclose(shared_per, per_per, atol=1e-15)
        assert shared_total == pytest.approx(per_total)

    def test_loss_positive(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a, p, n = rng.normal(size=(2, 4)), rng.normal(size=(2, 4)), rng.normal(size=(5, 4))
            _, per = gclr_loss(a, p, n, 0.4)
            assert np.all(per > 0.0)

    @given(
        st.floats(-0.99, 0.99),
        st.floats(-0.99, 0.99),
        st.floats(0.01, 0.3),
    )
    @settings(max_examples=100, deadline=None)
    def test_monotone_in_similarities(self, sp, sn, delta):
        tau = 0.5
        a, p, n = vectors_with_sims(sp, [sn])
        _, base = gclr_loss(a, p, n, tau)
        if sp + delta <= 1.0:
            a2, p2, n2 = vectors_with_sims(sp + delta, [sn])
            _, better = gclr_loss(a2, p2, n2, tau)
            assert better[0] < base[0]
        if sn + delta <= 1.0:
            a3, p3, n3 = vectors_with_sims(sp, [sn + delta])
            _, worse = gclr_loss(a3, p3, n3, tau)
            assert worse[0] > base[0]

    def test_temperature_limit(self):
        rng = np.random.default_rng(4)
        k = 7
        a, p, n = rng.normal(size=(2, 8)), rng.normal(size=(2, 8)), rng.normal(size=(k, 8))
        _, per = gclr_loss(a, p, n, 1e6)
        np.testing.assert_allclose(per, math.log(k + 1), atol=1e-6)

    def test_errors(self):
        a = np.ones((2, 3))
        with pytest.raises(NonPositiveTau):
            gclr_loss(a, a, a, 0.0)
        with pytest.raises(ShapeMismatch):
            gclr_loss(a, np.ones((3, 3)), a, 0.1)
        with pytest.raises(ShapeMismatch):
            gclr_loss(a, a, np.ones((2, 4)), 0.1)
        with pytest.raises(InputError):
            gclr_loss(a * np.nan, a, a, 0.1)


class TestGclrGrad:
    def test_sim_domain_rows_sum_to_zero(self):
        from geoclr.contrastive import _softmax_sim_grads

        rng = np.random.default_rng(5)
        s_pos = rng.uniform(-1, 1, size=6)
        s_neg = rng.uniform(-1, 1, size=(6, 9))
        g_pos, g_neg = _softmax_sim_grads(s_pos, s_neg, 0.15)
        np.testing.assert_allclose(g_pos + g_neg.sum(axis=1), 0.0, atol=1e-12)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        a = rng.normal(size=(4, 8))
        p = rng.normal(size=(4, 8))
        n = rng.normal(size=(6, 8))
        grads = gclr_grad(a, p, n, 0.2)
        fd = central_difference(lambda: gclr_loss(a, p, n, 0.2)[0], [a, p, n])
        assert max_rel_err(grads.d_anchor, fd[0]) < 1e-5
        assert max_rel_err(grads.d_pos, fd[1]) < 1e-5
        assert max_rel_err(grads.d_neg, fd[2]) < 1e-5

    def test_matches_finite_differences_per_anchor_negs(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(3, 5))
        p = rng.normal(size=(3, 5))
        n = rng.normal(size=(3, 4, 5))
        grads = gclr_grad(a, p, n, 0.3)
        fd = central_difference(lambda: gclr_loss(a, p, n, 0.3)[0], [a, p, n])
        assert max_rel_err(grads.d_neg, fd[2]) < 1e-5

    def test_deep_tail_negative_has_negligible_gradient(self):
        a = np.array([[1.0, 0.0]])
        p = np.array([[1.0, 0.0]])
        # One close negative, one deep in the softmax tail.
        n = np.array([[0.9, math.sqrt(1 - 0.81)], [-1.0, 0.0]])
        tau = 0.05
        base, _ = gclr_loss(a, p, n, tau)
        bumped = n.copy()
        bumped[1] = bumped[1] * 1.001
        after, _ = gclr_loss(a, p, bumped, tau)
        assert abs(after - base) < 1e-12
        grads = gclr_grad(a, p, n, tau)
        assert np.abs(grads.d_neg[1]).max() < 1e-12

    def test_head_composition_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        head = ProjectionHead.init(6, 5, 4, seed=1)
        fa = rng.normal(size=(3, 6))
        fp = rng.normal(size=(3, 6))
        fn = rng.normal(size=(5, 6))
        grads = gclr_grad_with_head(head, fa, fp, fn, 0.25)

        def loss_now():
            za, zp, zn = project(head, fa), project(head, fp), project(head, fn)
            return gclr_loss(za, zp, zn, 0.25)[0]

        fd_inputs = central_difference(loss_now, [fa, fp, fn])
        assert max_rel_err(grads.d_anchor_f, fd_inputs[0]) < 1e-5
        assert max_rel_err(grads.d_pos_f, fd_inputs[1]) < 1e-5
        assert max_rel_err(grads.d_neg_f, fd_inputs[2]) < 1e-5
        fd_params = central_difference(loss_now, [head.w1, head.b1, head.w2, head.b2])
        assert max_rel_err(grads.head.w1, fd_params[0]) < 1e-5
        assert max_rel_err(grads.head.b1, fd_params[1]) < 1e-5
        assert max_rel_err(grads.head.w2, fd_params[2]) < 1e-5
        assert max_rel_err(grads.head.b2, fd_params[3]) < 1e-5


class TestCombineLosses:
    def test_weighted_sum(self):
        assert combine_losses(1.0, 2.0, LossConfig(0.07, 1.0, 1.0)) == 3.0

    def test_pure_supervised(self):
        assert combine_losses(1.5, 99.0, LossConfig(0.07, 2.0, 0.0)) == 3.0

    def test_pure_contrastive(self):
        assert combine_losses(99.0, 1.5, LossConfig(0.07, 0.0, 2.0)) == 3.0

    def test_config_validation(self):
        with pytest.raises(NonPositiveTau):
            LossConfig(tau=-1.0)
        with pytest.raises(InputError):
            LossConfig(lambda_sup=-0.1)
        with pytest.raises(InputError):
            combine_losses(math.nan, 1.0)


class TestEmbeddingFile:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(9)
        m = rng.normal(size=(7, 5))
        path = tmp_path / "emb.bin"
        write_embedding_file(path, m)
        np.testing.assert_array_equal(read_embedding_file(path), m)

    def test_truncated(self, tmp_path):
        path = tmp_path / "emb.bin"
        write_embedding_file(path, np.ones((3, 3)))
        data = path.read_bytes()
        path.write_bytes(data[:-8])
        from geoclr.errors import CorruptFile

        with pytest.raises(CorruptFile):
            read_embedding_file(path)
