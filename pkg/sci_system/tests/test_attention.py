"""
Tests for windowing, bridged-token pooling and the CDPA attention kernels
"""
import threading

import numpy as np
import torch
import torch.nn.functional as F
from django.test import SimpleTestCase, override_settings
from numpy.testing import assert_allclose, assert_array_equal

from sci_system.exceptions import ConfigError, NumericalError
from sci_system.sci_components.attention import (
    BRIDGED_ATTENTION,
    PROJECTION,
    TEMPORAL_ATTENTION,
    AttentionConfig,
    CDPAWeights,
    MacCounter,
    Ordering,
    bridged_grid,
    bridged_spatial_attention,
    cdpa,
    channel_map,
    pad_to_window,
    pool_bridged_tokens,
    scaled_attention,
    scaled_attention_weights,
    temporal_attention,
    window_partition,
    window_reverse,
)


def tensor(rng, *shape):
    return torch.from_numpy(rng.standard_normal(shape))


def naive_attention(q, k, v, tau):
    output = np.zeros((q.shape[0], v.shape[1]))
    for i in range(q.shape[0]):
        scores = np.array([np.dot(q[i], k[j]) / tau for j in range(k.shape[0])])
        weights = np.exp(scores - scores.max())
        weights /= weights.sum()
        for j in range(k.shape[0]):
            output[i] += weights[j] * v[j]
    return output


def naive_depthwise3x3(plane_stack, weight):
    height, width, channels = plane_stack.shape
    padded = np.pad(plane_stack, ((1, 1), (1, 1), (0, 0)))
    output = np.zeros_like(plane_stack)
    for c in range(channels):
        for h in range(height):
            for w in range(width):
                output[h, w, c] = np.sum(weight[c, 0] * padded[h:h + 3, w:w + 3, c])
    return output


class WindowTests(SimpleTestCase):

    def test_single_window(self):
        x = torch.arange(8 * 32 * 4, dtype=torch.float64).reshape(1, 8, 32, 4)
        windows = window_partition(x, 8, 32)
        self.assertEqual(tuple(windows.shape), (1, 256, 4))
        assert_array_equal(windows[0].numpy(), x.reshape(256, 4).numpy())

    def test_round_trip(self):
        x = tensor(np.random.default_rng(0), 3, 16, 64, 8)
        windows = window_partition(x, 8, 32)
        self.assertTrue(torch.equal(window_reverse(windows, 3, 16, 64, 8, 32), x))

    def test_token_positions(self):
        frames, height, width, h_win, w_win = 2, 8, 8, 4, 2
        x = torch.arange(frames * height * width, dtype=torch.float64).reshape(frames, height, width, 1)
        windows = window_partition(x, h_win, w_win)
        per_row = width // w_win
        per_frame = (height // h_win) * per_row
        for t, h, w in np.ndindex(frames, height, width):
            window = t * per_frame + (h // h_win) * per_row + w // w_win
            position = (h % h_win) * w_win + w % w_win
            self.assertEqual(windows[window, position, 0].item(), x[t, h, w, 0].item())

    def test_partition_requires_multiples(self):
        with self.assertRaises(ConfigError):
            window_partition(torch.zeros(1, 7, 8, 1), 4, 4)

    def test_reflect_padding(self):
        x = np.random.default_rng(1).random((1, 5, 6, 2))
        padded = pad_to_window(torch.from_numpy(x), 4, 4)
        expected = np.pad(x, ((0, 0), (0, 3), (0, 2), (0, 0)), mode='reflect')
        assert_array_equal(padded.numpy(), expected)

    def test_padding_on_meta_device(self):
        padded = pad_to_window(torch.empty(2, 5, 6, 3, device='meta'), 8, 32)
        self.assertEqual(tuple(padded.shape), (2, 8, 32, 3))


class BridgedTokenTests(SimpleTestCase):

    def test_grid_choice(self):
        self.assertEqual(bridged_grid(8, 32, 64), (4, 16))
        self.assertEqual(bridged_grid(8, 32, 256), (8, 32))
        self.assertEqual(bridged_grid(8, 32, 8), (2, 4))
        for infeasible in (7, 144):
            with self.assertRaises(ConfigError):
                bridged_grid(8, 32, infeasible)

    def test_constant_window(self):
        windows = torch.full((3, 64, 2), 0.25, dtype=torch.float64)
        pooled = pool_bridged_tokens(windows, 8, 8, 16)
        self.assertEqual(tuple(pooled.shape), (3, 16, 2))
        self.assertTrue(torch.all(pooled == 0.25))

    def test_identity_pooling(self):
        windows = tensor(np.random.default_rng(2), 2, 256, 3)
        self.assertTrue(torch.equal(pool_bridged_tokens(windows, 8, 32, 256), windows))

    def test_patch_means(self):
        windows = np.random.default_rng(3).random((1, 256, 2))
        pooled = pool_bridged_tokens(torch.from_numpy(windows), 8, 32, 64).numpy()
        grid = windows[0].reshape(8, 32, 2)
        for i in range(4):
            for j in range(16):
                expected = grid[2 * i:2 * i + 2, 2 * j:2 * j + 2].mean(axis=(0, 1))
                assert_allclose(pooled[0, i * 16 + j], expected, rtol=1e-12)


class ScaledAttentionTests(SimpleTestCase):

    def test_rows_are_distributions(self):
        rng = np.random.default_rng(4)
        weights = scaled_attention_weights(tensor(rng, 6, 4), tensor(rng, 9, 4), 0.7)
        assert_allclose(weights.sum(dim=-1).numpy(), 1.0, atol=1e-12)
        self.assertTrue(torch.all(weights >= 0))

    def test_identical_keys_average_values(self):
        rng = np.random.default_rng(5)
        keys = tensor(rng, 1, 3).repeat(5, 1)
        values = tensor(rng, 5, 2)
        output = scaled_attention(tensor(rng, 4, 3), keys, values, 1.0)
        assert_allclose(output.numpy(), np.tile(values.numpy().mean(axis=0), (4, 1)), atol=1e-12)

    def test_saturation_selects_best_key(self):
        keys = torch.eye(3, dtype=torch.float64)
        queries = torch.tensor([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]], dtype=torch.float64)
        values = torch.tensor([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]], dtype=torch.float64)
        output = scaled_attention(queries, keys, values, 1e-3)
        assert_allclose(output.numpy(), [[1.0, 2.0], [5.0, 6.0]], atol=1e-6)

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(6)
        q, k, v = rng.standard_normal((5, 3)), rng.standard_normal((7, 3)), rng.standard_normal((7, 2))
        output = scaled_attention(torch.from_numpy(q), torch.from_numpy(k), torch.from_numpy(v), 1.3)
        assert_allclose(output.numpy(), naive_attention(q, k, v, 1.3), atol=1e-12)

    def test_counts_macs(self):
        rng = np.random.default_rng(7)
        counter = MacCounter()
        scaled_attention(tensor(rng, 2, 5, 3), tensor(rng, 2, 7, 3), tensor(rng, 2, 7, 4), 1.0, counter, TEMPORAL_ATTENTION)
        self.assertEqual(counter[TEMPORAL_ATTENTION], 2 * 5 * 7 * (3 + 4))
        self.assertEqual(counter[BRIDGED_ATTENTION], 0)

    def test_invalid_inputs(self):
        q = torch.zeros(2, 3, dtype=torch.float64)
        with self.assertRaises(ConfigError):
            scaled_attention(q, q, q, 0.0)
        bad = q.clone()
        bad[0, 0] = float('nan')
        with self.assertRaises(NumericalError):
            scaled_attention(bad, q, q, 1.0)


class SpatialTemporalTests(SimpleTestCase):

    def test_zero_gconv_returns_residual(self):
        rng = np.random.default_rng(8)
        config = AttentionConfig(4, 2, 8, 32, 8, 32, 8, heads=1)
        q, k, v, residual = (tensor(rng, 2, 8, 32, 4) for _ in range(4))
        output = bridged_spatial_attention(q, k, v, residual, torch.zeros(4, 1, 3, 3, dtype=torch.float64),
                                           1.0, 1.0, config)
        self.assertTrue(torch.equal(output, residual))

    def test_constant_window_propagates(self):
        rng = np.random.default_rng(9)
        config = AttentionConfig(2, 1, 8, 8, 8, 8, 4, heads=1)
        q, k, residual = (tensor(rng, 1, 8, 8, 2) for _ in range(3))
        v = torch.full((1, 8, 8, 2), 0.3, dtype=torch.float64)
        gconv = tensor(rng, 2, 1, 3, 3)
        output = bridged_spatial_attention(q, k, v, residual, gconv, 0.8, 1.2, config)
        constant = torch.full((1, 8, 8, 2), 0.3, dtype=torch.float64)
        expected = F.conv2d(constant.permute(0, 3, 1, 2), gconv, padding=1, groups=2).permute(0, 2, 3, 1) + residual
        assert_allclose(output.numpy(), expected.numpy(), atol=1e-12)

    def test_matches_naive_composition(self):
        rng = np.random.default_rng(10)
        config = AttentionConfig(4, 1, 8, 32, 8, 32, 8, heads=1)
        q, k, v, residual = (rng.standard_normal((1, 8, 32, 4)) for _ in range(4))
        gconv = rng.standard_normal((4, 1, 3, 3))
        output = bridged_spatial_attention(*(torch.from_numpy(a) for a in (q, k, v, residual)),
                                           torch.from_numpy(gconv), 0.9, 1.4, config).numpy()

        tokens_q, tokens_k, tokens_v = (a[0].reshape(256, 4) for a in (q, k, v))
        bridged = np.stack([
            q[0, 4 * i:4 * i + 4, 8 * j:8 * j + 8].reshape(-1, 4).mean(axis=0)
            for i in range(2) for j in range(4)
        ])
        summary = naive_attention(bridged, tokens_k, tokens_v, 0.9)
        spread = naive_attention(tokens_q, bridged, summary, 1.4).reshape(8, 32, 4)
        expected = naive_depthwise3x3(spread, gconv) + residual[0]
        assert_allclose(output[0], expected, atol=1e-10)

    def test_plain_window_attention(self):
        rng = np.random.default_rng(11)
        config = AttentionConfig(2, 1, 4, 4, 4, 4, None, heads=1)
        q, k, v = (rng.standard_normal((1, 4, 4, 2)) for _ in range(3))
        identity = np.zeros((2, 1, 3, 3))
        identity[:, 0, 1, 1] = 1.0
        output = bridged_spatial_attention(*(torch.from_numpy(a) for a in (q, k, v)),
                                           torch.zeros(1, 4, 4, 2, dtype=torch.float64),
                                           torch.from_numpy(identity), 1.1, 1.0, config).numpy()
        expected = naive_attention(q[0].reshape(16, 2), k[0].reshape(16, 2), v[0].reshape(16, 2), 1.1)
        assert_allclose(output[0].reshape(16, 2), expected, atol=1e-12)

    def test_temporal_single_frame_is_identity(self):
        rng = np.random.default_rng(12)
        q, k, value = (tensor(rng, 1, 4, 4, 4) for _ in range(3))
        self.assertTrue(torch.equal(temporal_attention(q, k, value, 1.0), value))

    def test_temporal_identical_frames(self):
        rng = np.random.default_rng(13)
        q, k = tensor(rng, 3, 4, 4, 2), tensor(rng, 3, 4, 4, 2)
        value = tensor(rng, 1, 4, 4, 2).repeat(3, 1, 1, 1)
        output = temporal_attention(q, k, value, 0.5)
        for t in range(3):
            assert_allclose(output[t].numpy(), value[0].numpy(), atol=1e-12)

    def test_temporal_matches_naive_loop(self):
        rng = np.random.default_rng(14)
        q, k, value = (rng.standard_normal((3, 4, 4, 4)) for _ in range(3))
        for heads in (1, 2):
            output = temporal_attention(*(torch.from_numpy(a) for a in (q, k, value)), 0.8, heads=heads).numpy()
            width = 4 // heads
            for h, w in np.ndindex(4, 4):
                for g in range(heads):
                    part = slice(g * width, (g + 1) * width)
                    expected = naive_attention(q[:, h, w, part], k[:, h, w, part], value[:, h, w, part], 0.8)
                    assert_allclose(output[:, h, w, part], expected, atol=1e-12)


class CDPATests(SimpleTestCase):

    def setUp(self):
        self.weights = CDPAWeights(8, heads=2)
        self.weights.reset_parameters(torch.Generator().manual_seed(0))
        self.config = AttentionConfig(8, 2, 8, 32, 8, 32, 64, heads=2)
        self.x = tensor(np.random.default_rng(15), 2, 8, 32, 8)

    def test_all_orderings(self):
        outputs = {}
        for ordering in Ordering:
            output = cdpa(self.x, self.weights, self.config, ordering)
            self.assertEqual(output.shape, self.x.shape)
            self.assertTrue(torch.isfinite(output).all())
            outputs[ordering] = output
        self.assertFalse(torch.allclose(outputs[Ordering.ST_PROPAGATED], outputs[Ordering.PARALLEL]))

    def _projections(self, x):
        weights = self.weights
        u = F.layer_norm(x, (8,), weights.norm.weight, weights.norm.bias)
        return F.linear(u, weights.w_q), F.linear(u, weights.w_k), F.linear(u, weights.w_v)

    def test_propagated_order_is_manual_composition(self):
        weights = self.weights
        tau1, tau2, tau3 = weights.temperatures
        with torch.no_grad():
            q, k, v = self._projections(self.x)
            spatial = bridged_spatial_attention(q, k, v, self.x, weights.gconv, tau1, tau2, self.config)
            expected = F.linear(temporal_attention(q, k, spatial, tau3, heads=2), weights.w_o)
        output = cdpa(self.x, weights, self.config, Ordering.ST_PROPAGATED)
        assert_allclose(output.numpy(), expected.numpy(), atol=1e-12)

    def test_single_frame_reduces_to_spatial(self):
        weights = self.weights
        x = self.x[:1]
        config = self.config.at_scale(8, 1, 8, 32)
        tau1, tau2, _ = weights.temperatures
        with torch.no_grad():
            q, k, v = self._projections(x)
            expected = F.linear(
                bridged_spatial_attention(q, k, v, x, weights.gconv, tau1, tau2, config), weights.w_o
            )
        assert_allclose(cdpa(x, weights, config).numpy(), expected.numpy(), atol=1e-12)

    def test_frame_permutation_equivariance(self):
        x = torch.cat([self.x, self.x[:1] * 0.5], dim=0)
        config = self.config.at_scale(8, 3, 8, 32)
        permutation = torch.tensor([2, 0, 1])
        for ordering in Ordering:
            output = cdpa(x, self.weights, config, ordering)
            permuted = cdpa(x[permutation], self.weights, config, ordering)
            assert_allclose(permuted.numpy(), output[permutation].numpy(), atol=1e-12)

    def test_meta_device_gives_shapes_and_counts(self):
        weights = CDPAWeights(8, heads=2, device='meta')
        counter = MacCounter()
        output = cdpa(torch.empty(2, 8, 32, 8, device='meta', dtype=torch.float64), weights, self.config,
                      counter=counter)
        self.assertEqual(output.device.type, 'meta')
        self.assertEqual(tuple(output.shape), (2, 8, 32, 8))
        self.assertEqual(counter[PROJECTION], 4 * 2 * 8 * 32 * 8 * 8)


class AttentionConfigTests(SimpleTestCase):

    @override_settings(SCI_WINDOW_HEIGHT=4, SCI_WINDOW_WIDTH=8, SCI_BRIDGED_TOKENS=8, SCI_HEADS=2)
    def test_defaults_come_from_settings(self):
        config = AttentionConfig(4, 1, 16, 16)
        self.assertEqual((config.h_win, config.w_win, config.n_bridged, config.heads), (4, 8, 8, 2))
        self.assertEqual(config.head_dim, 2)
        self.assertTrue(config.reduces)
        self.assertIsNone(AttentionConfig(4, 1, 16, 16, n_bridged=None).n_bridged)

    def test_validation(self):
        with self.assertRaises(ConfigError):
            AttentionConfig(6, 1, 8, 8, 4, 4, 4, heads=4)
        with self.assertRaises(ConfigError):
            AttentionConfig(4, 1, 8, 8, 4, 4, 17, heads=1)
        with self.assertRaises(ConfigError):
            AttentionConfig(4, 0, 8, 8, 4, 4, 4, heads=1)

    def test_padded_extent_and_rescale(self):
        config = AttentionConfig(4, 2, 10, 33, 8, 32, 64, heads=1)
        self.assertEqual(config.padded_extent(), (16, 64))
        scaled = config.at_scale(8, 2, 5, 17)
        self.assertEqual((scaled.channels, scaled.height, scaled.n_bridged), (8, 5, 64))


class MacCounterTests(SimpleTestCase):

    def test_concurrent_adds(self):
        counter = MacCounter()

        def work():
            for _ in range(1000):
                counter.add(PROJECTION, 3)

        threads = [threading.Thread(target=work) for _ in range(8)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        self.assertEqual(counter[PROJECTION], 24000)

        other = MacCounter()
        other.add(TEMPORAL_ATTENTION, 5)
        counter.merge(other)
        self.assertEqual(counter.total, 24005)

    def test_channel_map_counts(self):
        counter = MacCounter()
        channel_map(torch.zeros(2, 3, 4, 5, dtype=torch.float64), torch.zeros(6, 5, dtype=torch.float64), counter)
        self.assertEqual(counter[PROJECTION], 2 * 3 * 4 * 6 * 5)
