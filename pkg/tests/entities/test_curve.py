import unittest

import numpy as np

from asyncbezier.entities import curve, model
from asyncbezier.exceptions import DimensionError, ParameterRangeError


def curve_from(a, b, c):
    return curve.BezierParams(
        a=np.asarray(a, dtype=float),
        b=np.asarray(b, dtype=float),
        c=np.asarray(c, dtype=float),
    )


class TestBezierParams(unittest.TestCase):
    def setUp(self):
        self.curve = curve_from([0, 0], [1, 2], [2, 0])

    def test_instantiate_class(self):
        pass

    def test_has_attributes(self):
        for attribute in ["a", "b", "c"]:
            with self.subTest(attribute=attribute):
                self.assertTrue(hasattr(self.curve, attribute))

    def test_with_dimension_mismatch_raises(self):
        with self.assertRaises(DimensionError):
            curve_from([0, 0], [1], [2, 0])

    def test_dim(self):
        self.assertEqual(2, self.curve.dim)

    def test_flatten_concatenates_blocks(self):
        np.testing.assert_array_equal(
            [0, 0, 1, 2, 2, 0], self.curve.flatten()
        )

    def test_from_flat_recreates_curve(self):
        recreated = curve.BezierParams.from_flat(self.curve.flatten())
        np.testing.assert_array_equal(self.curve.b, recreated.b)

    def test_from_flat_with_wrong_length_raises(self):
        with self.assertRaises(ValueError):
            curve.BezierParams.from_flat(np.ones(4))

    def test_is_finite(self):
        self.assertTrue(self.curve.is_finite())
        self.curve.b[0] = np.nan
        self.assertFalse(self.curve.is_finite())

    def test_point_curve_has_independent_copies(self):
        theta = np.array([1.0, 2.0])
        point = curve.BezierParams.point(theta)
        point.b[0] = 5.0
        self.assertEqual(1.0, point.a[0])
        self.assertEqual(1.0, theta[0])

    def test_displaced_adds_reparam(self):
        reparam = curve.ReparamVector(
            da=np.zeros(2), db=np.ones(2), dc=np.array([1.0, -1.0])
        )
        displaced = self.curve.displaced(reparam)
        np.testing.assert_array_equal([2, 3], displaced.b)
        np.testing.assert_array_equal([3, -1], displaced.c)
        np.testing.assert_array_equal([1, 2], self.curve.b)

    def test_straight_line_keeps_endpoints(self):
        line = self.curve.straight_line()
        np.testing.assert_array_equal(self.curve.a, line.a)
        np.testing.assert_array_equal(self.curve.c, line.c)
        np.testing.assert_array_equal([1, 0], line.b)


class TestReparamVector(unittest.TestCase):
    def test_zeros(self):
        reparam = curve.ReparamVector.zeros(3)
        self.assertEqual(3, reparam.dim)
        self.assertTrue(np.all(reparam.flatten() == 0))

    def test_between_returns_differences(self):
        start = curve_from([0, 0], [0, 0], [0, 0])
        end = curve_from([0, 0], [1, 1], [2, 3])
        reparam = curve.ReparamVector.between(start, end)
        np.testing.assert_array_equal([0, 0], reparam.da)
        np.testing.assert_array_equal([1, 1], reparam.db)
        np.testing.assert_array_equal([2, 3], reparam.dc)


class TestCurveTrainConfig(unittest.TestCase):
    def setUp(self):
        self.config = curve.CurveTrainConfig()

    def test_instantiate_class(self):
        pass

    def test_has_attributes(self):
        attributes = [
            "k_sgd",
            "k_curve",
            "mu",
            "eta_l",
            "b_init",
            "samples_per_batch_draw",
            "batch_size",
            "optimizer",
        ]
        for attribute in attributes:
            with self.subTest(attribute=attribute):
                self.assertTrue(hasattr(self.config, attribute))

    def test_invalid_settings_raise(self):
        for kwargs in (
            {"k_sgd": 0, "k_curve": 0},
            {"k_sgd": -1},
            {"eta_l": 0},
            {"mu": -0.1},
            {"b_init": "random"},
            {"optimizer": "lbfgs"},
            {"samples_per_batch_draw": 0},
            {"batch_size": 0},
        ):
            with self.subTest(kwargs=kwargs):
                with self.assertRaises(ValueError):
                    curve.CurveTrainConfig(**kwargs)

    def test_to_dict_recreates_config(self):
        config = curve.CurveTrainConfig(**self.config.to_dict())
        self.assertEqual(self.config.to_dict(), config.to_dict())

    def test_pointwise_skips_curve_phase(self):
        pointwise = curve.CurveTrainConfig(k_sgd=3, k_curve=2).pointwise()
        self.assertEqual(0, pointwise.k_curve)
        self.assertEqual(3, pointwise.k_sgd)
        self.assertEqual("global", pointwise.b_init)

    def test_pointwise_keeps_at_least_one_epoch(self):
        pointwise = curve.CurveTrainConfig(k_sgd=0, k_curve=2).pointwise()
        self.assertEqual(1, pointwise.k_sgd)


class TestDecasteljau(unittest.TestCase):
    def setUp(self):
        self.curve = curve_from([0, 0], [1, 2], [2, 0])

    def test_endpoints_are_exact(self):
        phi = curve_from([0.1, 0.7], [1.3, 2.9], [2.2, 0.3])
        np.testing.assert_array_equal(phi.a, curve.decasteljau(phi, 0.0))
        np.testing.assert_array_equal(phi.c, curve.decasteljau(phi, 1.0))

    def test_midpoint(self):
        np.testing.assert_allclose(
            [1, 1], curve.decasteljau(self.curve, 0.5)
        )

    def test_matches_bernstein_form(self):
        t = 0.3
        expected = (
            (1 - t) ** 2 * self.curve.a
            + 2 * t * (1 - t) * self.curve.b
            + t**2 * self.curve.c
        )
        np.testing.assert_allclose(
            expected, curve.decasteljau(self.curve, t), atol=1e-12
        )

    def test_parameter_out_of_range_raises(self):
        for t in (-0.1, 1.1):
            with self.subTest(t=t):
                with self.assertRaises(ParameterRangeError):
                    curve.decasteljau(self.curve, t)


class TestCurveTangentAtZero(unittest.TestCase):
    def test_point_curve_has_zero_tangent(self):
        phi = curve.BezierParams.point(np.array([1.0, 2.0]))
        np.testing.assert_array_equal(
            [0, 0], curve.curve_tangent_at_zero(phi)
        )

    def test_tangent_points_to_middle_control_point(self):
        phi = curve_from([0, 0], [1, 0], [7, 5])
        np.testing.assert_array_equal(
            [2, 0], curve.curve_tangent_at_zero(phi)
        )

    def test_collinear_curve_gives_chord(self):
        phi = curve_from([0, 0], [0.5, 0.5], [1, 1])
        np.testing.assert_array_equal(
            [1, 1], curve.curve_tangent_at_zero(phi)
        )


class TestArcStep(unittest.TestCase):
    def test_full_step_reaches_endpoint(self):
        phi = curve_from([0, 0], [1, 2], [2, 0])
        np.testing.assert_array_equal(
            phi.c, curve.arc_step(phi.a, phi, step=1.0)
        )

    def test_straight_line_interpolates_linearly(self):
        a, c = np.array([1.0, -2.0]), np.array([3.0, 5.0])
        phi = curve.BezierParams(a=a, b=0.5 * (a + c), c=c)
        for step in (0.1, 0.25, 0.5, 0.9):
            with self.subTest(step=step):
                np.testing.assert_allclose(
                    a + step * (c - a),
                    curve.arc_step(a, phi, step=step),
                    atol=1e-9,
                )

    def test_one_dimensional_collinear_curve(self):
        phi = curve_from([0.0], [0.5], [1.0])
        np.testing.assert_allclose(
            [0.5], curve.arc_step(np.zeros(1), phi, step=0.5), atol=1e-9
        )

    def test_non_uniform_speed_line_reaches_same_distance(self):
        phi = curve_from([0.0, 0.0], [0.0, 0.0], [2.0, 0.0])
        np.testing.assert_allclose(
            [0.5, 0.0], curve.arc_step(phi.a, phi, step=0.25), atol=1e-9
        )

    def test_bent_curve_reaches_fraction_of_chord(self):
        phi = curve_from([0.0, 0.0], [0.0, 1.0], [2.0, 0.0])
        result = curve.arc_step(phi.a, phi, step=0.5)
        self.assertAlmostEqual(1.0, np.linalg.norm(result - phi.a), 9)
        self.assertGreater(result[1], 0.4)
        np.testing.assert_allclose([0.8968, 0.4425], result, atol=1e-4)

    def test_zero_chord_returns_anchor(self):
        theta = np.array([1.0, 2.0])
        phi = curve.BezierParams.point(theta)
        result = curve.arc_step(theta, phi, step=0.5)
        np.testing.assert_array_equal(theta, result)
        self.assertIsNot(theta, result)

    def test_non_monotone_chord_uses_parameter_as_step(self):
        phi = curve_from([0.0], [5.0], [0.1])
        with self.assertLogs(curve.__name__, level="WARNING"):
            result = curve.arc_step(phi.a, phi, step=0.5)
        np.testing.assert_allclose(curve.decasteljau(phi, 0.5), result)

    def test_step_out_of_range_raises(self):
        phi = curve_from([0.0], [0.5], [1.0])
        for step in (0.0, 1.5):
            with self.subTest(step=step):
                with self.assertRaises(ParameterRangeError):
                    curve.arc_step(phi.a, phi, step=step)


class TestLossProfile(unittest.TestCase):
    def setUp(self):
        self.spec = model.ModelSpec(
            kind="logistic", n_features=2, n_classes=2
        )
        self.data = model.Dataset(
            features=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
            labels=[0, 1, 1],
        )

    def test_point_curve_has_constant_loss(self):
        theta = np.linspace(-1, 1, self.spec.dimension)
        profile = curve.loss_profile(
            self.spec, curve.BezierParams.point(theta), self.data, 5
        )
        losses = [loss for _, loss in profile]
        self.assertEqual(5, len(profile))
        self.assertTrue(all(loss == losses[0] for loss in losses))

    def test_parameters_are_equidistant(self):
        theta = np.zeros(self.spec.dimension)
        profile = curve.loss_profile(
            self.spec, curve.BezierParams.point(theta), self.data, 3
        )
        self.assertEqual([0.0, 0.5, 1.0], [t for t, _ in profile])

    def test_loss_excludes_regulariser(self):
        spec = model.ModelSpec(
            kind="logistic", n_features=2, n_classes=2, l2=10.0
        )
        theta = np.linspace(-1, 1, spec.dimension)
        profile = curve.loss_profile(
            spec, curve.BezierParams.point(theta), self.data, 2
        )
        loss, _ = spec.score(theta, self.data)
        self.assertEqual(loss, profile[0][1])
        self.assertLess(
            profile[0][1], spec.loss_and_grad(theta, self.data).loss
        )

    def test_with_less_than_two_points_raises(self):
        theta = np.zeros(self.spec.dimension)
        with self.assertRaises(ValueError):
            curve.loss_profile(
                self.spec, curve.BezierParams.point(theta), self.data, 1
            )
