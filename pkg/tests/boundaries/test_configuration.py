import os
import unittest

from asyncbezier.boundaries import configuration
from asyncbezier.entities.state import StrategyConfig
from asyncbezier.exceptions import ConfigurationError

CONFIG = """
[experiment]
seeds = 0, 1
strategies = fedasync, asyncbezier
output_dir = out

[data]
n_classes = 3
n_features = 4

[simulation]
n_clients = 5
total_updates = 20
max_staleness = none

[training]
k_sgd = 3
batch_size = none

[strategy:asyncbezier]
eta_g = 0.25
per_block = yes
"""


class TestExperimentConfig(unittest.TestCase):
    def setUp(self):
        self.config = configuration.ExperimentConfig(
            seeds=[0, 1],
            strategies=[
                StrategyConfig.from_name("fedasync"),
                StrategyConfig.from_name("asyncbezier"),
            ],
        )

    def test_instantiate_class(self):
        pass

    def test_has_attributes(self):
        attributes = [
            "template",
            "seeds",
            "strategies",
            "output_dir",
            "preset",
            "k_values",
            "workers",
            "events",
            "export_curves",
        ]
        for attribute in attributes:
            with self.subTest(attribute=attribute):
                self.assertTrue(hasattr(self.config, attribute))

    def test_cells_iterate_strategies_then_seeds(self):
        cells = self.config.cells()
        self.assertEqual(
            [
                ("fedasync", 0),
                ("fedasync", 1),
                ("asyncbezier", 0),
                ("asyncbezier", 1),
            ],
            [(cell.strategy.name, cell.seed) for cell in cells],
        )

    def test_cells_are_independent(self):
        first, second = self.config.cells()[:2]
        first.curve_cfg.k_sgd = 7
        self.assertNotEqual(7, second.curve_cfg.k_sgd)

    def test_without_seeds_raises(self):
        with self.assertRaises(ConfigurationError):
            configuration.ExperimentConfig(
                seeds=[], strategies=self.config.strategies
            )

    def test_without_strategies_raises(self):
        with self.assertRaises(ConfigurationError):
            configuration.ExperimentConfig(seeds=[0], strategies=[])

    def test_without_workers_raises(self):
        with self.assertRaises(ConfigurationError):
            configuration.ExperimentConfig(
                seeds=[0], strategies=self.config.strategies, workers=0
            )


class TestConfigurationReader(unittest.TestCase):
    def setUp(self):
        self.filename = "test.ini"
        self.reader = configuration.ConfigurationReader(environment={})

    def tearDown(self):
        if os.path.exists(self.filename):
            os.remove(self.filename)

    def assert_error_key(self, sections, key):
        with self.assertRaises(ConfigurationError) as context:
            self.reader.from_sections(sections)
        self.assertEqual(key, context.exception.key)

    def test_instantiate_class(self):
        pass

    def test_has_attributes(self):
        for attribute in ["filename", "environment"]:
            with self.subTest(attribute=attribute):
                self.assertTrue(hasattr(self.reader, attribute))

    def test_read_without_filename_raises(self):
        with self.assertRaisesRegex(ValueError, "Missing attribute filename"):
            self.reader.read()

    def test_read_missing_file_raises(self):
        with self.assertRaises(FileNotFoundError):
            self.reader.read("nonexisting.ini")

    def test_read_file(self):
        with open(self.filename, "w", encoding="utf-8") as file:
            file.write(CONFIG)
        config = self.reader.read(self.filename)
        self.assertEqual([0, 1], config.seeds)
        self.assertEqual("out", config.output_dir)

    def test_read_string(self):
        config = self.reader.read_string(CONFIG)
        template = config.template
        self.assertEqual(3, template.data.n_classes)
        self.assertEqual(5, template.n_clients)
        self.assertIsNone(template.max_staleness)
        self.assertEqual(3, template.curve_cfg.k_sgd)
        self.assertIsNone(template.curve_cfg.batch_size)
        fedasync, asyncbezier = config.strategies
        self.assertEqual(1.0, fedasync.eta_g)
        self.assertEqual(0.25, asyncbezier.eta_g)
        self.assertTrue(asyncbezier.per_block)
        self.assertEqual("orthodc", asyncbezier.correction)

    def test_malformed_file_raises(self):
        with self.assertRaises(ConfigurationError):
            self.reader.read_string("no section header")

    def test_defaults(self):
        config = self.reader.from_sections({})
        self.assertEqual([0], config.seeds)
        self.assertEqual(["asyncbezier"], [s.name for s in config.strategies])
        self.assertEqual("results", config.output_dir)
        self.assertEqual(
            list(configuration.DEFAULT_K_VALUES), config.k_values
        )

    def test_unknown_section_raises(self):
        self.assert_error_key({"server": {}}, "server")

    def test_unknown_key_raises(self):
        self.assert_error_key({"data": {"colour": "red"}}, "data.colour")

    def test_invalid_value_raises(self):
        self.assert_error_key(
            {"simulation": {"n_clients": "many"}}, "simulation.n_clients"
        )

    def test_invalid_boolean_raises(self):
        self.assert_error_key(
            {"experiment": {"events": "perhaps"}}, "experiment.events"
        )

    def test_unknown_model_kind_raises(self):
        self.assert_error_key({"model": {"kind": "cnn"}}, "model.kind")

    def test_known_model_kinds_are_accepted(self):
        for kind in ("logistic", "mlp1"):
            with self.subTest(kind=kind):
                config = self.reader.from_sections(
                    {"model": {"kind": kind, "hidden_width": "4"}}
                )
                self.assertEqual(kind, config.template.model["kind"])

    def test_unknown_strategy_raises(self):
        self.assert_error_key(
            {"experiment": {"strategies": "fedfoo"}},
            "experiment.strategies",
        )

    def test_unknown_strategy_section_raises(self):
        self.assert_error_key({"strategy:fedfoo": {}}, "strategy:fedfoo")

    def test_unknown_preset_raises(self):
        self.assert_error_key(
            {"experiment": {"preset": "imagenet"}}, "experiment.preset"
        )

    def test_invalid_strategy_setting_raises(self):
        self.assert_error_key(
            {
                "experiment": {"strategies": "asyncbezier"},
                "strategy:asyncbezier": {"alpha": "2"},
            },
            "strategy:asyncbezier.alpha",
        )

    def test_inconsistent_simulation_raises(self):
        with self.assertRaises(ConfigurationError):
            self.reader.from_sections({"simulation": {"n_clients": "0"}})

    def test_preset_rates(self):
        config = self.reader.from_sections(
            {
                "experiment": {
                    "preset": "shakespeare-like",
                    "strategies": "fedasync, asyncbezier-ed",
                }
            }
        )
        fedasync, bezier_ed = config.strategies
        self.assertEqual(5.0, fedasync.eta_g)
        self.assertEqual(1.0, bezier_ed.eta_g)
        self.assertEqual(1.0, bezier_ed.alpha)
        self.assertEqual(0.0, bezier_ed.vartheta)
        self.assertEqual(0.001, config.template.curve_cfg.mu)
        self.assertEqual("shakespeare-like", config.preset)

    def test_file_overrides_preset(self):
        config = self.reader.from_sections(
            {
                "experiment": {"preset": "synthetic-heterogeneous"},
                "simulation": {"n_clients": "7"},
                "strategy:asyncbezier": {"eta_g": "0.1"},
            }
        )
        self.assertEqual(7, config.template.n_clients)
        self.assertEqual(400, config.template.total_updates)
        self.assertEqual("mlp1", config.template.model["kind"])
        self.assertEqual(
            ["fedasync", "asyncbezier"], [s.name for s in config.strategies]
        )
        self.assertEqual(0.1, config.strategies[1].eta_g)

    def test_environment_overrides_output_dir(self):
        reader = configuration.ConfigurationReader(
            environment={configuration.OUTPUT_DIR_VARIABLE: "elsewhere"}
        )
        config = reader.read_string(CONFIG)
        self.assertEqual("elsewhere", config.output_dir)

    def test_presets_are_valid(self):
        for preset in configuration.PRESETS:
            with self.subTest(preset=preset):
                config = self.reader.from_sections(
                    {"experiment": {"preset": preset}}
                )
                self.assertTrue(config.cells())
