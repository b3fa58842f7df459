import os
import unittest

import numpy as np
import pandas as pd

from asyncbezier.boundaries.configuration import ConfigurationReader
from asyncbezier.controllers import simulation
from asyncbezier.entities.curve import CurveTrainConfig
from asyncbezier.entities.model import LossEval, ModelSpec
from asyncbezier.entities.state import (
    ClientUpdate,
    GlobalState,
    StrategyConfig,
)
from asyncbezier.exceptions import HistoryError

SLOW_TESTS = "ASYNCBEZIER_SLOW_TESTS"


def small_config(**kwargs):
    settings = {
        "n_clients": 2,
        "total_updates": 4,
        "seed": 1,
        "service_time": "deterministic",
        "service_times": [1.0, 2.9],
        "strategy": StrategyConfig(kind="fedasync", eta_g=0.5),
        "curve_cfg": CurveTrainConfig(
            k_sgd=1, k_curve=1, eta_l=0.1, batch_size=16
        ),
        "data": simulation.DataConfig(
            n_classes=3, n_features=4, n_samples=120, class_sep=3.0
        ),
    }
    settings.update(kwargs)
    return simulation.SimConfig(**settings)


class Diverging(ModelSpec):
    def loss_and_grad(self, theta=None, data=None, batch=None):
        return LossEval(loss=np.nan, gradient=np.full_like(theta, np.nan))


class TestSimConfig(unittest.TestCase):
    def setUp(self):
        self.config = simulation.SimConfig()

    def test_instantiate_class(self):
        pass

    def test_has_attributes(self):
        attributes = [
            "n_clients",
            "total_updates",
            "seed",
            "service_time",
            "sigma",
            "service_times",
            "max_staleness",
            "eval_every",
            "swa_window",
            "strategy",
            "curve_cfg",
            "data",
            "model",
        ]
        for attribute in attributes:
            with self.subTest(attribute=attribute):
                self.assertTrue(hasattr(self.config, attribute))

    def test_from_dict_recreates_config(self):
        config = small_config(max_staleness=3)
        recreated = simulation.SimConfig.from_dict(config.to_dict())
        self.assertEqual(config.to_dict(), recreated.to_dict())

    def test_invalid_settings_raise(self):
        for kwargs in (
            {"n_clients": 0},
            {"total_updates": 0},
            {"service_time": "uniform"},
            {"service_time": "deterministic", "service_times": [1.0, 2.0]},
            {"max_staleness": -1},
            {"eval_every": 0},
        ):
            with self.subTest(kwargs=kwargs):
                with self.assertRaises(ValueError):
                    simulation.SimConfig(**kwargs)


class TestEvent(unittest.TestCase):
    def test_has_attributes(self):
        event = simulation.Event()
        for attribute in ["time", "seq", "client", "dispatch_time"]:
            with self.subTest(attribute=attribute):
                self.assertTrue(hasattr(event, attribute))
        self.assertFalse(hasattr(event, "kind"))

    def test_orders_by_time_then_sequence(self):
        early = simulation.Event(time=1.0, seq=5)
        late = simulation.Event(time=2.0, seq=0)
        tie = simulation.Event(time=1.0, seq=6)
        self.assertLess(early, late)
        self.assertLess(early, tie)


class TestMeasureStaleness(unittest.TestCase):
    def setUp(self):
        self.state = GlobalState(theta=np.zeros(2))

    def test_counts_versions_since_dispatch(self):
        origin = self.state.dispatch(0)
        self.state.advance(np.ones(2))
        self.state.advance(np.ones(2))
        update = ClientUpdate(client=0, origin_version=origin)
        self.assertEqual(2, simulation.measure_staleness(self.state, update))

    def test_evicted_origin_raises(self):
        self.state.advance(np.ones(2))
        self.state.prune_history()
        update = ClientUpdate(client=0, origin_version=0)
        with self.assertRaises(HistoryError):
            simulation.measure_staleness(self.state, update)


class TestSimulation(unittest.TestCase):
    def test_instantiate_class(self):
        pass

    def test_has_attributes(self):
        sim = simulation.Simulation(config=small_config())
        attributes = ["config", "data", "spec", "state", "record", "events"]
        for attribute in attributes:
            with self.subTest(attribute=attribute):
                self.assertTrue(hasattr(sim, attribute))

    def test_client_count_must_match_data(self):
        data = simulation.Simulation(config=small_config()).data
        with self.assertRaises(ValueError):
            simulation.Simulation(
                config=small_config(
                    n_clients=3, service_times=[1.0, 1.0, 1.0]
                ),
                data=data,
            )

    def test_hand_traced_schedule(self):
        sim = simulation.Simulation(config=small_config())
        record = sim.run()
        self.assertEqual(
            [1.0, 2.0, 2.9, 3.0], [event["time"] for event in sim.events]
        )
        self.assertEqual(
            [0, 0, 1, 0], [event["client"] for event in sim.events]
        )
        self.assertEqual(
            [0, 0, 2, 1], [event["staleness"] for event in sim.events]
        )
        self.assertEqual(4, record.n_arrivals)
        self.assertEqual(
            list(range(5)), [row["version"] for row in record.rounds]
        )

    def test_evaluates_every_version(self):
        record = simulation.Simulation(config=small_config()).run()
        self.assertTrue(
            all(np.isfinite(row["acc"]) for row in record.rounds)
        )
        self.assertEqual(record.rounds[-1]["acc"], record.final["acc"])

    def test_evaluation_interval(self):
        config = small_config(eval_every=3, total_updates=4)
        record = simulation.Simulation(config=config).run()
        evaluated = [
            row["version"] for row in record.rounds if np.isfinite(row["acc"])
        ]
        self.assertEqual([0, 3, 4], evaluated)

    def test_drops_stale_updates(self):
        config = small_config(
            n_clients=3,
            service_times=[1.0, 1.0, 10.0],
            max_staleness=5,
            total_updates=19,
        )
        sim = simulation.Simulation(config=config)
        record = sim.run()
        self.assertEqual(1, record.drops)
        last = sim.events[-1]
        self.assertEqual(2, last["client"])
        self.assertEqual(18, last["staleness"])
        self.assertTrue(last["dropped"])
        self.assertEqual(18, sim.state.version)

    def test_same_seed_gives_identical_runs(self):
        config = small_config(service_time="lognormal", service_times=None)
        first = simulation.Simulation(config=config)
        first_record = first.run()
        second = simulation.Simulation(config=config)
        second_record = second.run()
        self.assertEqual(
            first.state.theta.tobytes(), second.state.theta.tobytes()
        )
        pd.testing.assert_frame_equal(
            first_record.rounds_dataframe(), second_record.rounds_dataframe()
        )

    def test_different_seeds_give_different_runs(self):
        first = simulation.Simulation(config=small_config(seed=1))
        first.run()
        second = simulation.Simulation(config=small_config(seed=2))
        second.run()
        self.assertFalse(
            np.array_equal(first.state.theta, second.state.theta)
        )

    def test_single_client_curve_step_equals_position_step(self):
        curve_cfg = CurveTrainConfig(
            k_sgd=1, k_curve=0, b_init="global", eta_l=0.1, batch_size=16
        )
        runs = {}
        for kind in ("fedasync", "asyncbezier"):
            config = small_config(
                n_clients=1,
                service_times=[1.0],
                total_updates=10,
                curve_cfg=curve_cfg,
                strategy=StrategyConfig(
                    kind=kind, eta_g=0.5, correction="identity", alpha=0.0
                ),
            )
            sim = simulation.Simulation(config=config)
            sim.run()
            runs[kind] = sim.state.theta
        np.testing.assert_allclose(
            runs["fedasync"], runs["asyncbezier"], atol=1e-9
        )

    def test_two_client_curve_run_matches_position_run_until_stale(self):
        curve_cfg = CurveTrainConfig(
            k_sgd=1, k_curve=0, b_init="global", eta_l=0.1, batch_size=16
        )
        runs = {}
        for kind in ("fedasync", "asyncbezier"):
            config = small_config(
                total_updates=50,
                curve_cfg=curve_cfg,
                strategy=StrategyConfig(
                    kind=kind, eta_g=0.5, correction="identity", alpha=0.0
                ),
            )
            sim = simulation.Simulation(config=config)
            record = sim.run()
            runs[kind] = (sim.state.theta, record.rounds_dataframe())
        events = sim.events
        first_stale = next(e for e in events if e["staleness"] > 0)
        self.assertEqual(3, first_stale["version"])
        position, curve = runs["fedasync"][1], runs["asyncbezier"][1]
        np.testing.assert_allclose(
            position["loss"][:3], curve["loss"][:3], rtol=1e-9
        )
        self.assertFalse(
            np.allclose(runs["fedasync"][0], runs["asyncbezier"][0])
        )

    def test_stale_curve_step_equals_uncorrected_tangent_step(self):
        curve_cfg = CurveTrainConfig(
            k_sgd=1, k_curve=0, b_init="global", eta_l=0.1, batch_size=16
        )
        strategies = {
            "asyncbezier": StrategyConfig(
                kind="asyncbezier",
                eta_g=1.0,
                client_weighting="uniform",
                correction="identity",
                alpha=0.0,
            ),
            "dcasgd": StrategyConfig(
                kind="dcasgd",
                eta_g=1.0,
                client_weighting="uniform",
                correction="dcasgd",
                lambda0=0.0,
            ),
        }
        runs = {}
        for name, strategy in strategies.items():
            config = small_config(
                total_updates=50, curve_cfg=curve_cfg, strategy=strategy
            )
            sim = simulation.Simulation(config=config)
            sim.run()
            runs[name] = sim.state.theta
            self.assertTrue(any(e["staleness"] > 0 for e in sim.events))
        np.testing.assert_allclose(
            runs["asyncbezier"], runs["dcasgd"], atol=1e-9
        )

    def test_records_curve_of_last_update(self):
        config = small_config(
            strategy=StrategyConfig.from_name("asyncbezier", eta_g=0.5)
        )
        sim = simulation.Simulation(config=config)
        sim.run()
        self.assertEqual(sim.spec.dimension, sim.state.last_curve.dim)

    def test_buffered_strategy_flushes_at_the_end(self):
        config = small_config(
            total_updates=7,
            strategy=StrategyConfig.from_name("fedbuff", buffer_k=3),
        )
        with self.assertLogs("asyncbezier", level="WARNING"):
            record = simulation.Simulation(config=config).run()
        self.assertEqual(
            [0, 1, 2, 3], [row["version"] for row in record.rounds]
        )
        self.assertEqual(7, record.n_arrivals)

    def test_weight_averaging(self):
        config = small_config(swa_window=3)
        record = simulation.Simulation(config=config).run()
        self.assertEqual(3, record.swa["window"])
        self.assertTrue(0 <= record.swa["acc"] <= 1)

    def test_weight_averaging_with_short_history_warns(self):
        config = small_config(swa_window=10)
        with self.assertLogs("asyncbezier", level="WARNING"):
            record = simulation.Simulation(config=config).run()
        self.assertEqual(5, record.swa["window"])

    def test_fairness_of_best_model(self):
        record = simulation.Simulation(config=small_config()).run()
        self.assertEqual(2, len(record.best["per_client_acc"]))
        self.assertEqual(2, len(record.per_client_final))

    def test_divergence_marks_run_as_failed(self):
        config = small_config()
        spec = Diverging(kind="logistic", n_features=4, n_classes=3)
        with self.assertLogs("asyncbezier", level="ERROR"):
            record = simulation.Simulation(config=config, spec=spec).run()
        self.assertTrue(record.failed)
        self.assertIn("diverged", record.failure)
        self.assertEqual([0], [row["version"] for row in record.rounds])
        self.assertTrue(np.isfinite(record.final["acc"]))


class TestRun(unittest.TestCase):
    def test_returns_record(self):
        record = simulation.run(small_config())
        self.assertEqual("fedasync", record.strategy)
        self.assertEqual(1, record.seed)


@unittest.skipUnless(os.environ.get(SLOW_TESTS), f"set {SLOW_TESTS} to run")
class TestHeterogeneousPreset(unittest.TestCase):
    def test_curve_strategy_keeps_up_with_position_steps(self):
        config = ConfigurationReader(environment={}).from_sections(
            {
                "experiment": {
                    "preset": "synthetic-heterogeneous",
                    "seeds": "0,1,2",
                }
            }
        )
        accuracies = {}
        for cell in config.cells():
            record = simulation.run(cell)
            self.assertFalse(record.failed)
            accuracies.setdefault(cell.strategy.name, []).append(
                record.best["acc"]
            )
        wins = sum(
            bezier >= fedasync - 0.02
            for bezier, fedasync in zip(
                accuracies["asyncbezier"], accuracies["fedasync"]
            )
        )
        self.assertGreaterEqual(wins, 2)
