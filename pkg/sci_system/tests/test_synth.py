"""
Tests for the synthetic scene generator and video cropping
"""
import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from sci_system.exceptions import ConfigError, ShapeError
from sci_system.sci_components.cube import SpectralCube
from sci_system.sci_components.synth import (
    ObjectShape,
    SceneObject,
    SceneSpec,
    crop_video,
    draw_crop_step,
    gaussian_spectrum,
    random_scene_spec,
    synth_scene,
)


class SceneObjectTests(SimpleTestCase):

    def test_disk_footprint(self):
        disk = SceneObject(ObjectShape.DISK, (5, 5), 550.0, 20.0, radius=2)
        footprint = disk.footprint(0, 11, 11)
        self.assertEqual(footprint.sum(), 13)
        self.assertTrue(footprint[5, 7])
        self.assertFalse(footprint[7, 7])

    def test_rectangle_moves_and_rotates(self):
        bar = SceneObject(ObjectShape.RECTANGLE, (10, 10), 550.0, 20.0,
                          half_height=1, half_width=4, velocity=(1, 0), rotation=90.0)
        still = bar.footprint(0, 21, 21)
        turned = bar.footprint(1, 21, 21)
        rows, cols = np.nonzero(still)
        self.assertEqual((rows.min(), rows.max(), cols.min(), cols.max()), (9, 11, 6, 14))
        rows, cols = np.nonzero(turned)
        self.assertEqual((rows.min(), rows.max(), cols.min(), cols.max()), (7, 15, 9, 11))
        self.assertEqual(bar.center_at(3), (13, 10))

    def test_invalid_objects(self):
        with self.assertRaises(ConfigError):
            SceneObject('disk', (0, 0), 550.0, 20.0, amplitude=1.5)
        with self.assertRaises(ConfigError):
            SceneObject('disk', (0, 0), 550.0, 0.0)
        with self.assertRaises(ValueError):
            SceneObject('triangle', (0, 0), 550.0, 20.0)


class SceneSpecTests(SimpleTestCase):

    def test_velocity_bound(self):
        fast = SceneObject('disk', (8, 8), 550.0, 20.0, velocity=(0, 3))
        with self.assertRaises(ConfigError):
            SceneSpec(2, 16, 16, 4, [fast], max_displacement=2)

    def test_object_must_stay_in_frame(self):
        drifting = SceneObject('disk', (8, 14), 550.0, 20.0, velocity=(0, 2))
        with self.assertRaises(ConfigError):
            SceneSpec(4, 16, 16, 4, [drifting])

    def test_render(self):
        disk = SceneObject('disk', (4, 4), 520.0, 15.0, amplitude=0.8, radius=2, velocity=(0, 2))
        spec = SceneSpec(3, 12, 16, 6, [disk])
        cube = synth_scene(spec)
        self.assertEqual(cube.shape, (3, 12, 16, 6))
        self.assertTrue(cube.is_normalized)
        object_spectrum = gaussian_spectrum(spec.wavelengths, 520.0, 15.0, 0.8)
        background = gaussian_spectrum(spec.wavelengths, 575.0, 60.0, 0.2)
        for t in range(3):
            assert_allclose(cube.values[t, 4, 4 + 2 * t], object_spectrum)
        assert_allclose(cube.values[0, 11, 15], background)
        assert_allclose(cube.values[2, 4, 4], background)

    def test_later_objects_cover_earlier_ones(self):
        below = SceneObject('rectangle', (5, 5), 520.0, 15.0, half_height=3, half_width=3)
        above = SceneObject('disk', (5, 5), 620.0, 15.0, radius=1)
        spec = SceneSpec(1, 11, 11, 4, [below, above])
        cube = synth_scene(spec)
        assert_allclose(cube.values[0, 5, 5], gaussian_spectrum(spec.wavelengths, 620.0, 15.0))
        assert_allclose(cube.values[0, 3, 3], gaussian_spectrum(spec.wavelengths, 520.0, 15.0))

    def test_background_texture_follows_the_seed(self):
        disk = SceneObject('disk', (6, 6), 520.0, 15.0, radius=2)
        plain = synth_scene(SceneSpec(2, 12, 12, 4, [disk], seed=3))
        assert_array_equal(plain.values, synth_scene(SceneSpec(2, 12, 12, 4, [disk], seed=4)).values)

        first = synth_scene(SceneSpec(2, 12, 12, 4, [disk], seed=3, background_texture=0.5))
        again = synth_scene(SceneSpec(2, 12, 12, 4, [disk], seed=3, background_texture=0.5))
        other = synth_scene(SceneSpec(2, 12, 12, 4, [disk], seed=4, background_texture=0.5))
        assert_array_equal(first.values, again.values)
        self.assertFalse(np.array_equal(first.values, other.values))
        assert_array_equal(first.values[0], first.values[1])
        assert_allclose(first.values[0, 6, 6], plain.values[0, 6, 6])
        ratio = first.values[0, 0, 0] / plain.values[0, 0, 0]
        assert_allclose(ratio, np.full(4, ratio[0]))
        self.assertTrue(0.5 <= ratio[0] <= 1.5)
        with self.assertRaises(ConfigError):
            SceneSpec(1, 4, 4, 2, background_texture=1.5)

    def test_random_spec_is_seeded_and_valid(self):
        first = random_scene_spec(4, 24, 32, 5, n_objects=4, seed=9)
        second = random_scene_spec(4, 24, 32, 5, n_objects=4, seed=9)
        self.assertEqual(first, second)
        self.assertEqual(len(first.objects), 4)
        assert_array_equal(synth_scene(first).values, synth_scene(second).values)
        self.assertNotEqual(first, random_scene_spec(4, 24, 32, 5, n_objects=4, seed=10))


class CropTests(SimpleTestCase):

    def setUp(self):
        values = np.random.default_rng(0).random((4, 20, 24, 2))
        self.cube = SpectralCube(values, [500.0, 600.0])

    def test_zero_step_probability(self):
        rng = np.random.default_rng(1)
        draws = [draw_crop_step(rng) for _ in range(4000)]
        zero_share = sum(step == (0, 0) for step in draws) / len(draws)
        self.assertAlmostEqual(zero_share, 0.7, delta=0.03)
        moving = [step for step in draws if step != (0, 0)]
        self.assertTrue(all(max(abs(v) for v in step) <= 2 for step in moving))
        self.assertEqual(len(set(moving)), 24)
        self.assertEqual(draw_crop_step(rng, max_step=0), (0, 0))

    def test_fixed_step_and_origin(self):
        cropped = crop_video(self.cube, 8, 10, step=(1, -2), origin=(2, 12))
        self.assertEqual(cropped.shape, (4, 8, 10, 2))
        for t in range(4):
            row, col = 2 + t, 12 - 2 * t
            assert_array_equal(cropped.values[t], self.cube.values[t, row:row + 8, col:col + 10])

    def test_single_frame_source_becomes_video(self):
        still = SpectralCube(self.cube.values[:1], self.cube.wavelengths)
        cropped = crop_video(still, 6, 6, step=(2, 1), origin=(0, 0), frames=3)
        for t in range(3):
            assert_array_equal(cropped.values[t], still.values[0, 2 * t:2 * t + 6, t:t + 6])

    def test_seeded_crop_is_reproducible(self):
        first = crop_video(self.cube, 10, 10, seed=5)
        assert_array_equal(first.values, crop_video(self.cube, 10, 10, seed=5).values)

    def test_window_escapes(self):
        with self.assertRaisesMessage(ConfigError, 'window escapes source bounds'):
            crop_video(self.cube, 18, 10, step=(1, 0))
        with self.assertRaisesMessage(ConfigError, 'window escapes source bounds'):
            crop_video(self.cube, 8, 10, step=(0, 0), origin=(15, 0))

    def test_invalid_requests(self):
        with self.assertRaises(ConfigError):
            crop_video(self.cube, 21, 10, step=(0, 0))
        with self.assertRaises(ShapeError):
            crop_video(self.cube, 8, 8, step=(0, 0), frames=5)
