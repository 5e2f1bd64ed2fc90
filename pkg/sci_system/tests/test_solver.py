"""
Tests for TV denoising, back-projection and GAP-TV
"""
import tempfile
from unittest import mock
from pathlib import Path

import numpy as np
import pandas as pd
from django.test import SimpleTestCase, override_settings
from numpy.testing import assert_allclose, assert_array_equal

from sci_system.exceptions import ConfigError, ShapeError
from sci_system.sci_components.cube import CodedMask, MeasurementSequence, SpectralCube
from sci_system.sci_components.metrics import psnr
from sci_system.sci_components.optics import apply_adjoint, apply_operator, build_system, forward, mask_energy
from sci_system.sci_components.solver import (
    ENERGY_FLOOR,
    Initializer,
    SolverConfig,
    SolverTrace,
    back_project,
    denoise_tv,
    gap_tv,
)
from sci_system.sci_components.synth import ObjectShape, SceneObject, SceneSpec, synth_scene
from sci_system.serializers import SolverConfigSerializer


def piecewise_scene(frames=1, size=32, channels=8):
    spec = SceneSpec(
        frames=frames,
        height=size,
        width=size,
        channels=channels,
        objects=[
            SceneObject(ObjectShape.DISK, (10, 11), 530.0, 20.0, amplitude=0.9, radius=6),
            SceneObject(ObjectShape.RECTANGLE, (22, 20), 610.0, 25.0, amplitude=0.7,
                        half_height=5, half_width=7),
        ],
    )
    return synth_scene(spec)


class SolverConfigTests(SimpleTestCase):

    @override_settings(SCI_SOLVER_ITERATIONS=12, SCI_TV_WEIGHT=0.3)
    def test_defaults_come_from_settings(self):
        config = SolverConfig()
        self.assertEqual(config.iterations, 12)
        self.assertEqual(config.tv_weight, 0.3)
        self.assertIs(config.initializer, Initializer.ADJOINT)
        self.assertIs(SolverConfig(initializer='zero').initializer, Initializer.ZERO)
        self.assertIsNone(config.temporal_tv)

    def test_serializer_leaves_temporal_tv_unset(self):
        serializer = SolverConfigSerializer(data={'iterations': 4})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertIsNone(serializer.build().temporal_tv)
        serializer = SolverConfigSerializer(data={'temporal_tv': 'false'})
        self.assertTrue(serializer.is_valid(), serializer.errors)
        self.assertIs(serializer.build().temporal_tv, False)

    def test_invalid_values(self):
        for kwargs in ({'iterations': 0}, {'tv_weight': -0.1}, {'tv_inner_iterations': 0}, {'step_size': 0.0}):
            with self.assertRaises(ConfigError):
                SolverConfig(**kwargs)

    def test_trace_frame(self):
        trace = SolverTrace()
        trace.record(0, 2.0)
        trace.record(1, 1.0)
        self.assertEqual(list(trace.to_frame().columns), ['iteration', 'residual'])
        trace = SolverTrace()
        trace.record(0, 2.0, 20.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'trace.csv'
            trace.to_csv(path)
            self.assertEqual(list(pd.read_csv(path).columns), ['iteration', 'residual', 'psnr'])


class DenoiseTVTests(SimpleTestCase):

    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_zero_weight_is_identity(self):
        values = self.rng.random((2, 5, 6, 3))
        result = denoise_tv(values, 0.0, 10)
        assert_array_equal(result, values)
        self.assertIsNot(result, values)

    def test_constant_input_is_fixed(self):
        values = np.full((2, 5, 6, 3), 0.4)
        assert_array_equal(denoise_tv(values, 0.5, 20, temporal=True), values)

    def test_mean_is_preserved(self):
        values = self.rng.random((3, 8, 9, 2))
        for temporal in (False, True):
            result = denoise_tv(values, 0.2, 30, temporal=temporal)
            self.assertAlmostEqual(result.mean(), values.mean(), delta=1e-8)

    def test_step_edge(self):
        signal = np.where(np.arange(64) < 32, 0.2, 0.8)
        noisy = signal + 0.02 * self.rng.standard_normal(64)
        result = denoise_tv(noisy.reshape(1, 1, 64, 1), 0.05, 200).ravel()
        self.assertLess(result[4:28].var(), noisy[4:28].var())
        self.assertLess(result[36:60].var(), noisy[36:60].var())
        self.assertGreater(result[32:].mean() - result[:32].mean(), 0.5)
        self.assertLess(result[30], result[33])

    def test_temporal_flag(self):
        values = np.zeros((3, 4, 4, 1))
        values[1] = 1.0
        assert_array_equal(denoise_tv(values, 0.1, 10), values)
        smoothed = denoise_tv(values, 0.1, 10, temporal=True)
        self.assertLess(smoothed[1].max(), 1.0)

    def test_cube_in_cube_out(self):
        cube = SpectralCube(self.rng.random((1, 4, 4, 2)), [500.0, 600.0])
        result = denoise_tv(cube, 0.1, 5)
        self.assertIsInstance(result, SpectralCube)
        assert_array_equal(result.wavelengths, cube.wavelengths)

    def test_invalid_input(self):
        with self.assertRaises(ConfigError):
            denoise_tv(np.zeros((1, 2, 2, 1)), -1.0, 5)
        with self.assertRaises(ShapeError):
            denoise_tv(np.zeros((2, 2, 1)), 0.1, 5)


class BackProjectionTests(SimpleTestCase):

    def test_zero_measurement(self):
        system = build_system('SD-CASSI', 6, 6, wavelengths=np.linspace(500.0, 650.0, 3))
        cube = back_project(MeasurementSequence(np.zeros((1, 6, system.width_prime))), system)
        self.assertFalse(cube.values.any())

    def test_constant_scene_dd_open_mask(self):
        bands = np.linspace(500.0, 650.0, 4)
        system = build_system('DD-CASSI', 6, 10, wavelengths=bands, mask=CodedMask(np.ones((6, 10))), step=1)
        scene = SpectralCube(np.full((1, 6, 10, 4), 0.6), bands)
        recon = back_project(forward(scene, system), system)
        assert_allclose(recon.values[:, :, 3:, :], 0.6, atol=1e-12)

    def test_beats_zero_cube(self):
        rng = np.random.default_rng(1)
        bands = np.linspace(500.0, 650.0, 4)
        scene = SpectralCube(rng.random((1, 8, 8, 4)), bands)
        zero = SpectralCube.zeros(1, 8, 8, bands)
        for architecture in ('SD-CASSI', 'DD-CASSI', 'PMVIS', 'NDSSI'):
            system = build_system(architecture, 8, 8, wavelengths=bands, seed=2)
            recon = back_project(forward(scene, system), system)
            score = psnr(recon, scene)
            self.assertTrue(np.isfinite(score))
            self.assertGreaterEqual(score, psnr(zero, scene))


class GapTVTests(SimpleTestCase):

    def test_identity_system_recovers_measurement(self):
        bands = np.array([550.0])
        system = build_system('DD-CASSI', 6, 7, wavelengths=bands, mask=CodedMask(np.ones((6, 7))), step=0)
        y = np.random.default_rng(0).random((2, 6, 7))
        recon = gap_tv(MeasurementSequence(y), system, SolverConfig(iterations=3, tv_weight=0.0, step_size=1.0))
        assert_allclose(recon.values[..., 0], y, atol=1e-12)

    def test_single_iteration_is_one_projected_step(self):
        bands = np.linspace(500.0, 650.0, 4)
        system = build_system('SD-CASSI', 8, 8, wavelengths=bands, seed=3)
        scene = SpectralCube(np.random.default_rng(1).random((2, 8, 8, 4)), bands)
        meas = forward(scene, system)
        solver = SolverConfig(iterations=1, tv_weight=0.05, tv_inner_iterations=4, step_size=0.8)

        y = meas.values
        energy = np.maximum(mask_energy(system), ENERGY_FLOOR)[None]
        x0 = apply_adjoint(y, system)
        step = x0 + 0.8 * apply_adjoint((y - apply_operator(x0, system)) / energy, system)
        expected = np.clip(denoise_tv(step, 0.05, 4, temporal=True), 0.0, 1.0)
        assert_allclose(gap_tv(meas, system, solver).values, expected, atol=1e-12)

    def test_initializers(self):
        bands = np.linspace(500.0, 650.0, 3)
        system = build_system('NDSSI', 6, 6, wavelengths=bands, seed=4)
        meas = forward(SpectralCube(np.full((1, 6, 6, 3), 0.5), bands), system)
        for initializer in Initializer:
            trace = SolverTrace()
            recon = gap_tv(meas, system, SolverConfig(iterations=2, initializer=initializer), trace=trace)
            self.assertEqual(len(trace.residuals), 3)
            self.assertTrue(np.all(np.isfinite(recon.values)))

    def test_beats_back_projection_on_piecewise_scene(self):
        scene = piecewise_scene()
        system = build_system('DD-CASSI', 32, 32, wavelengths=scene.wavelengths, seed=0)
        meas = forward(scene, system)
        trace = SolverTrace()
        recon = gap_tv(meas, system, SolverConfig(iterations=100, tv_weight=0.02, tv_inner_iterations=5),
                       ground_truth=scene, trace=trace)

        self.assertTrue(recon.is_normalized)
        self.assertGreater(psnr(recon, scene), psnr(back_project(meas, system), scene) + 3.0)
        self.assertEqual(len(trace.iterations), 101)
        self.assertLessEqual(trace.residuals[-1], trace.residuals[0])
        self.assertIsNotNone(trace.psnrs[-1])

    def test_temporal_tv_follows_frame_count_unless_set(self):
        bands = np.linspace(500.0, 650.0, 3)
        system = build_system('DD-CASSI', 6, 6, wavelengths=bands, seed=2)
        cases = [
            (1, None, False),
            (3, None, True),
            (3, False, False),
            (1, True, True),
        ]
        for frames, flag, expected in cases:
            meas = forward(SpectralCube(np.full((frames, 6, 6, 3), 0.4), bands), system)
            with mock.patch('sci_system.sci_components.solver.denoise_tv', wraps=denoise_tv) as denoiser:
                gap_tv(meas, system, SolverConfig(iterations=2, temporal_tv=flag))
            self.assertEqual(denoiser.call_count, 2)
            for call in denoiser.call_args_list:
                self.assertIs(call.kwargs['temporal'], expected, (frames, flag))

    def test_shape_mismatch(self):
        system = build_system('SD-CASSI', 6, 6, wavelengths=np.linspace(500.0, 650.0, 3))
        with self.assertRaises(ShapeError):
            gap_tv(MeasurementSequence(np.zeros((1, 6, 6))), system, SolverConfig(iterations=1))
