import unittest

import numpy as np

from asyncbezier.entities import state
from asyncbezier.exceptions import (
    ConfigurationError,
    DimensionError,
    DivergenceError,
    HistoryError,
)


class TestStrategyConfig(unittest.TestCase):
    def setUp(self):
        self.config = state.StrategyConfig()

    def test_instantiate_class(self):
        pass

    def test_has_attributes(self):
        attributes = [
            "name",
            "kind",
            "eta_g",
            "client_weighting",
            "alpha",
            "vartheta",
            "correction",
            "per_block",
            "lambda0",
            "adaptive",
            "buffer_k",
        ]
        for attribute in attributes:
            with self.subTest(attribute=attribute):
                self.assertTrue(hasattr(self.config, attribute))

    def test_name_defaults_to_kind(self):
        self.assertEqual("fedasync", self.config.name)

    def test_invalid_settings_raise_with_key(self):
        for key, value in (
            ("kind", "fedavg"),
            ("correction", "momentum"),
            ("eta_g", -1.0),
            ("alpha", 1.5),
            ("vartheta", 2.0),
            ("buffer_k", 0),
            ("client_weighting", "random"),
        ):
            with self.subTest(key=key):
                with self.assertRaises(ConfigurationError) as context:
                    state.StrategyConfig(**{key: value})
                self.assertEqual(key, context.exception.key)

    def test_from_name_uses_roster(self):
        config = state.StrategyConfig.from_name("fedgs")
        self.assertEqual("orthodc", config.correction)
        self.assertEqual(0.0, config.vartheta)
        self.assertEqual("fedgs", config.name)

    def test_from_name_applies_overrides(self):
        config = state.StrategyConfig.from_name("asyncbezier-ed", eta_g=0.25)
        self.assertEqual("asyncbezier", config.kind)
        self.assertEqual("asyncbezier-ed", config.name)
        self.assertEqual(1.0, config.alpha)
        self.assertEqual(0.25, config.eta_g)

    def test_from_name_with_unknown_name_raises(self):
        with self.assertRaises(ConfigurationError):
            state.StrategyConfig.from_name("fedavg")

    def test_all_roster_entries_are_valid(self):
        for name in state.ROSTER:
            with self.subTest(name=name):
                state.StrategyConfig.from_name(name)

    def test_to_dict_recreates_config(self):
        config = state.StrategyConfig.from_name("dcasgd", adaptive=True)
        recreated = state.StrategyConfig(**config.to_dict())
        self.assertEqual(config.to_dict(), recreated.to_dict())

    def test_is_curve_strategy(self):
        self.assertFalse(self.config.is_curve_strategy)
        self.assertTrue(
            state.StrategyConfig.from_name("asyncbezier").is_curve_strategy
        )


class TestStalenessInfo(unittest.TestCase):
    def test_staleness_is_version_gap(self):
        info = state.StalenessInfo(t_origin=3, tau_now=7)
        self.assertEqual(4, info.staleness)
        self.assertEqual(1.0, info.s_factor)


class TestClientUpdate(unittest.TestCase):
    def test_has_attributes(self):
        update = state.ClientUpdate()
        attributes = [
            "client",
            "origin_version",
            "reparam",
            "weight",
            "dispatch_time",
            "arrival_time",
            "endpoint",
        ]
        for attribute in attributes:
            with self.subTest(attribute=attribute):
                self.assertTrue(hasattr(update, attribute))


class TestModelHistory(unittest.TestCase):
    def setUp(self):
        self.history = state.ModelHistory()
        for version in range(4):
            self.history.add(version, np.full(2, float(version)))

    def test_get_returns_model(self):
        np.testing.assert_array_equal([2, 2], self.history.get(2))

    def test_get_missing_version_raises(self):
        with self.assertRaises(HistoryError):
            self.history.get(9)

    def test_prune_removes_older_versions(self):
        self.history.prune(2)
        self.assertEqual(2, len(self.history))
        self.assertNotIn(1, self.history)
        self.assertIn(2, self.history)


class TestGlobalState(unittest.TestCase):
    def setUp(self):
        self.state = state.GlobalState(theta=np.zeros(3))

    def test_instantiate_class(self):
        pass

    def test_has_attributes(self):
        attributes = [
            "theta",
            "version",
            "history",
            "per_client_origin",
            "last_staleness",
            "last_step",
            "scale_clamps",
            "step_clamps",
            "last_curve",
        ]
        for attribute in attributes:
            with self.subTest(attribute=attribute):
                self.assertTrue(hasattr(self.state, attribute))

    def test_starts_at_version_zero_in_history(self):
        self.assertEqual(0, self.state.version)
        np.testing.assert_array_equal(np.zeros(3), self.state.theta_at(0))

    def test_advance_increments_version(self):
        self.state.advance(np.ones(3))
        self.assertEqual(1, self.state.version)
        np.testing.assert_array_equal(np.ones(3), self.state.theta)
        np.testing.assert_array_equal(np.zeros(3), self.state.theta_at(0))

    def test_advance_with_non_finite_model_leaves_state_unchanged(self):
        with self.assertRaises(DivergenceError) as context:
            self.state.advance(np.array([0.0, np.nan, 0.0]))
        self.assertEqual(1, context.exception.version)
        self.assertEqual(0, self.state.version)
        np.testing.assert_array_equal(np.zeros(3), self.state.theta)

    def test_advance_with_dimension_mismatch_raises(self):
        with self.assertRaises(DimensionError):
            self.state.advance(np.ones(2))

    def test_dispatch_records_origin(self):
        self.state.advance(np.ones(3))
        self.assertEqual(1, self.state.dispatch(4))
        self.assertEqual({4: 1}, self.state.per_client_origin)

    def test_prune_history_keeps_versions_in_flight(self):
        self.state.dispatch(0)
        for value in range(1, 4):
            self.state.advance(np.full(3, float(value)))
        self.state.dispatch(1)
        self.state.prune_history()
        self.assertIn(0, self.state.history)
        self.state.per_client_origin.pop(0)
        self.state.prune_history()
        self.assertEqual(1, len(self.state.history))
        self.assertIn(3, self.state.history)
