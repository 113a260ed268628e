import math

import numpy as np
import pytest
import torch

from amenet.blocks import (
    AttentionConfig,
    MapConvPool,
    MultiHeadSelfAttention,
    SeqLSTM,
    TemporalConv1d,
    deterministic_init,
    grad_check,
    scaled_dot_product_attention,
)

from oracles import dense_attention, dense_multi_head, naive_conv1d, naive_conv2d_relu_pool


class TestTemporalConv1d:
    def test_zero_input_broadcasts_bias(self):
        with deterministic_init(0):
            block = TemporalConv1d(3, 5)
        out = block(torch.zeros(8, 3))
        bias = block.conv.bias.detach()
        np.testing.assert_allclose(out.detach().numpy(), bias.expand(8, 5).numpy(), atol=1e-7)

    def test_identity_kernel(self):
        block = TemporalConv1d(4, 4, kernel=1)
        with torch.no_grad():
            block.conv.weight.copy_(torch.eye(4).reshape(4, 4, 1))
            block.conv.bias.zero_()
        x = torch.randn(6, 4, generator=torch.Generator().manual_seed(1))
        np.testing.assert_allclose(block(x).detach().numpy(), x.numpy(), atol=1e-7)

    def test_matches_sliding_window_oracle(self):
        for seed in range(10):
            with deterministic_init(seed):
                block = TemporalConv1d(3, 7, kernel=3).double()
            x = torch.randn(8, 3, generator=torch.Generator().manual_seed(seed + 50)).double()
            ours = block(x).detach().numpy()
            ref = naive_conv1d(
                x.numpy(), block.conv.weight.detach().numpy(), block.conv.bias.detach().numpy()
            )
            np.testing.assert_allclose(ours, ref, atol=1e-6)

    def test_length_preserved_and_batched(self):
        block = TemporalConv1d(2, 6, kernel=5)
        assert block(torch.zeros(11, 2)).shape == (11, 6)
        assert block(torch.zeros(4, 11, 2)).shape == (4, 11, 6)

    def test_even_kernel_rejected(self):
        with pytest.raises(ValueError):
            TemporalConv1d(2, 4, kernel=2)

    def test_wrong_channels(self):
        with pytest.raises(ValueError):
            TemporalConv1d(2, 4)(torch.zeros(5, 3))


class TestMapConvPool:
    def test_zero_map_zero_bias(self):
        with deterministic_init(0):
            block = MapConvPool(3, filters=4)
        with torch.no_grad():
            block.conv.bias.zero_()
        out = block(torch.zeros(3, 16, 16))
        assert torch.all(out == 0.0)

    def test_nonnegative(self):
        for seed in range(5):
            with deterministic_init(seed):
                block = MapConvPool(3, filters=8)
            x = torch.randn(3, 32, 32, generator=torch.Generator().manual_seed(seed))
            assert torch.all(block(x) >= 0.0)

    def test_matches_naive_oracle(self):
        for seed in range(5):
            with deterministic_init(seed):
                block = MapConvPool(3, filters=4, kernel=3, pool=2).double()
            x = torch.randn(3, 32, 32, generator=torch.Generator().manual_seed(seed + 9)).double()
            ours = block(x).detach().numpy()
            ref = naive_conv2d_relu_pool(
                x.numpy(),
                block.conv.weight.detach().numpy(),
                block.conv.bias.detach().numpy(),
                pool=2,
            )
            np.testing.assert_allclose(ours, ref, atol=1e-5)

    def test_feature_dim(self):
        block = MapConvPool(3, filters=16, kernel=3, pool=2)
        assert block.feature_dim(32, 32) == 16 * 15 * 15
        assert block(torch.zeros(3, 32, 32)).shape == (16 * 15 * 15,)


class TestSeqLSTM:
    def test_zero_params_zero_hiddens(self):
        block = SeqLSTM(3, 4)
        with torch.no_grad():
            for p in block.parameters():
                p.zero_()
        hiddens, last = block(torch.zeros(6, 3))
        assert torch.all(hiddens == 0.0) and torch.all(last == 0.0)

    def test_single_step_equals_cell(self):
        with deterministic_init(2):
            block = SeqLSTM(3, 5)
        cell = torch.nn.LSTMCell(3, 5)
        with torch.no_grad():
            cell.weight_ih.copy_(block.lstm.weight_ih_l0)
            cell.weight_hh.copy_(block.lstm.weight_hh_l0)
            cell.bias_ih.copy_(block.lstm.bias_ih_l0)
            cell.bias_hh.copy_(block.lstm.bias_hh_l0)
        x = torch.randn(1, 3, generator=torch.Generator().manual_seed(5))
        hiddens, last = block(x)
        h_ref, _ = cell(x[0:1])
        np.testing.assert_allclose(last.detach().numpy(), h_ref[0].detach().numpy(), atol=1e-6)
        np.testing.assert_allclose(hiddens[-1].detach().numpy(), h_ref[0].detach().numpy(), atol=1e-6)

    def test_hidden_bounds(self):
        with deterministic_init(0):
            block = SeqLSTM(2, 8)
        x = 10.0 * torch.randn(30, 2, generator=torch.Generator().manual_seed(0))
        hiddens, _ = block(x)
        assert torch.all(hiddens > -1.0) and torch.all(hiddens < 1.0)

    def test_gradients_match_finite_differences(self):
        with deterministic_init(1):
            block = SeqLSTM(2, 3)
        x = torch.randn(4, 2, generator=torch.Generator().manual_seed(3))
        assert grad_check(block, x, eps=1e-5) < 1e-4


class TestScaledDotProductAttention:
    def test_single_row_returns_value(self):
        g = torch.Generator().manual_seed(0)
        q, k, v = (torch.randn(1, 4, generator=g) for _ in range(3))
        np.testing.assert_allclose(
            scaled_dot_product_attention(q, k, v).numpy(), v.numpy(), atol=1e-6
        )

    def test_two_identical_keys_average_values(self):
        q = torch.randn(1, 4, generator=torch.Generator().manual_seed(1))
        k = torch.ones(2, 4)
        v = torch.tensor([[0.0, 2.0], [4.0, 6.0]])
        out = scaled_dot_product_attention(q, k, v)
        np.testing.assert_allclose(out.numpy(), [[2.0, 4.0]], atol=1e-6)

    def test_matches_dense_formula(self):
        for seed in range(20):
            g = torch.Generator().manual_seed(seed)
            q = torch.randn(4, 4, generator=g).double()
            k = torch.randn(4, 4, generator=g).double()
            v = torch.randn(4, 6, generator=g).double()
            ours = scaled_dot_product_attention(q, k, v).numpy()
            ref = dense_attention(q.numpy(), k.numpy(), v.numpy())
            np.testing.assert_allclose(ours, ref, atol=1e-6)

    def test_rows_sum_to_one_and_convex_hull(self):
        for seed in range(20):
            g = torch.Generator().manual_seed(seed + 100)
            x = torch.randn(6, 4, generator=g)
            out, w = scaled_dot_product_attention(x, x, x, return_weights=True)
            np.testing.assert_allclose(w.sum(dim=-1).numpy(), np.ones(6), atol=1e-6)
            lo = x.min(dim=0).values - 1e-6
            hi = x.max(dim=0).values + 1e-6
            assert torch.all(out >= lo) and torch.all(out <= hi)

    def test_mismatched_dims_rejected(self):
        with pytest.raises(ValueError):
            scaled_dot_product_attention(torch.zeros(3, 4), torch.zeros(3, 5), torch.zeros(3, 5))


class TestMultiHeadSelfAttention:
    def test_single_head_identity_projections(self):
        cfg = AttentionConfig(model_dim=4, d_q=4, d_k=4, d_v=4, heads=1)
        block = MultiHeadSelfAttention(cfg)
        with torch.no_grad():
            block.w_q.copy_(torch.eye(4).unsqueeze(0))
            block.w_k.copy_(torch.eye(4).unsqueeze(0))
            block.w_v.copy_(torch.eye(4).unsqueeze(0))
            block.w_o.copy_(torch.eye(4))
        x = torch.randn(5, 4, generator=torch.Generator().manual_seed(2))
        np.testing.assert_allclose(
            block(x).detach().numpy(),
            scaled_dot_product_attention(x, x, x).numpy(),
            atol=1e-6,
        )

    def test_head_split_dimensions(self):
        cfg = AttentionConfig(model_dim=8, d_q=4, d_k=4, d_v=4, heads=2)
        assert cfg.head_dim_qk == 2 and cfg.head_dim_v == 2
        with deterministic_init(0):
            block = MultiHeadSelfAttention(cfg)
        assert block(torch.zeros(6, 8)).shape == (6, 8)

    def test_matches_dense_formula(self):
        cfg = AttentionConfig(model_dim=6, d_q=4, d_k=4, d_v=4, heads=2)
        for seed in range(10):
            with deterministic_init(seed):
                block = MultiHeadSelfAttention(cfg).double()
            x = torch.randn(5, 6, generator=torch.Generator().manual_seed(seed + 30)).double()
            ours = block(x).detach().numpy()
            ref = dense_multi_head(
                x.numpy(),
                block.w_q.detach().numpy(),
                block.w_k.detach().numpy(),
                block.w_v.detach().numpy(),
                block.w_o.detach().numpy(),
            )
            np.testing.assert_allclose(ours, ref, atol=1e-6)

    def test_permutation_equivariance_exact(self):
        cfg = AttentionConfig(model_dim=6, d_q=4, d_k=4, d_v=4, heads=2)
        for seed in range(30):
            with deterministic_init(seed):
                block = MultiHeadSelfAttention(cfg)
            g = torch.Generator().manual_seed(seed + 500)
            x = torch.randn(8, 6, generator=g)
            perm = torch.randperm(8, generator=g)
            out = block(x)
            out_perm = block(x[perm])
            assert torch.equal(out[perm], out_perm)

    def test_invalid_head_split(self):
        with pytest.raises(ValueError):
            AttentionConfig(model_dim=4, d_q=5, d_k=5, heads=2)
        with pytest.raises(ValueError):
            AttentionConfig(model_dim=4, d_q=4, d_k=6)


class TestGradCheck:
    def test_linear_layer_nearly_exact(self):
        with deterministic_init(0):
            block = torch.nn.Linear(4, 3)
        x = torch.randn(5, 4, generator=torch.Generator().manual_seed(7))
        assert grad_check(block, x, eps=1e-5) < 1e-8

    def test_attention_block(self):
        cfg = AttentionConfig(model_dim=4, d_q=4, d_k=4, d_v=4, heads=2)
        with deterministic_init(3):
            block = MultiHeadSelfAttention(cfg)
        x = torch.randn(5, 4, generator=torch.Generator().manual_seed(11))
        assert grad_check(block, x, eps=1e-5) < 1e-4

    def test_conv_blocks(self):
        with deterministic_init(1):
            c1 = TemporalConv1d(2, 3)
        assert grad_check(c1, torch.randn(6, 2, generator=torch.Generator().manual_seed(0)), eps=1e-5) < 1e-4
        with deterministic_init(1):
            c2 = MapConvPool(3, filters=2, kernel=3, pool=2)
        assert grad_check(c2, torch.randn(3, 6, 6, generator=torch.Generator().manual_seed(1)), eps=1e-5) < 1e-4

    def test_eps_zero_rejected(self):
        with pytest.raises(ValueError):
            grad_check(torch.nn.Linear(2, 2), torch.zeros(1, 2), eps=0.0)


class TestDeterministicInit:
    def test_same_seed_same_params(self):
        with deterministic_init(5):
            a = torch.nn.Linear(4, 4)
        with deterministic_init(5):
            b = torch.nn.Linear(4, 4)
        assert torch.equal(a.weight, b.weight) and torch.equal(a.bias, b.bias)

    def test_global_stream_untouched(self):
        torch.manual_seed(123)
        expected = torch.randn(3)
        torch.manual_seed(123)
        with deterministic_init(9):
            torch.nn.Linear(8, 8)
        got = torch.randn(3)
        assert torch.equal(expected, got)
