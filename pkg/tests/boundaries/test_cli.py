import contextlib
import io
import os
import shutil
import unittest

import numpy as np
import pandas as pd

from asyncbezier.boundaries import cli, results
from asyncbezier.controllers.experiment import CellResult
from asyncbezier.entities.curve import BezierParams
from asyncbezier.entities.record import RunRecord

CONFIG = """
[experiment]
seeds = 0
strategies = fedasync, asyncbezier
output_dir = test_output

[data]
n_classes = 2
n_features = 3
n_samples = 60

[simulation]
n_clients = 2
total_updates = 3

[training]
k_sgd = 1
k_curve = 1
eta_l = 0.1
"""


class TestBuildParser(unittest.TestCase):
    def test_needs_command(self):
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                cli.build_parser().parse_args([])

    def test_parses_run(self):
        args = cli.build_parser().parse_args(
            ["run", "--config", "a.ini", "--seeds", "1,2", "--events"]
        )
        self.assertEqual("run", args.command)
        self.assertEqual([1, 2], args.seeds)
        self.assertTrue(args.events)

    def test_invalid_seeds_fail(self):
        with contextlib.redirect_stderr(io.StringIO()):
            with self.assertRaises(SystemExit):
                cli.build_parser().parse_args(
                    ["run", "--config", "a.ini", "--seeds", "one"]
                )

    def test_profile_defaults(self):
        args = cli.build_parser().parse_args(["profile", "--curve", "c.h5"])
        self.assertEqual(21, args.n_points)
        self.assertEqual("profile.csv", args.out)


class TestMain(unittest.TestCase):
    def setUp(self):
        self.filename = "test.ini"
        self.output = "test_output"
        self.curve_filename = "test.h5"
        self.profile_filename = "test.csv"
        with open(self.filename, "w", encoding="utf-8") as file:
            file.write(CONFIG)

    def tearDown(self):
        for filename in (
            self.filename,
            self.curve_filename,
            self.profile_filename,
        ):
            if os.path.exists(filename):
                os.remove(filename)
        if os.path.exists(self.output):
            shutil.rmtree(self.output)

    def main(self, *argv):
        stderr = io.StringIO()
        with contextlib.redirect_stderr(stderr):
            exit_code = cli.main(["--log-level", "ERROR", *argv])
        return exit_code, stderr.getvalue()

    def output_files(self):
        return sorted(os.listdir(self.output))

    def test_run_writes_results(self):
        exit_code, _ = self.main("run", "--config", self.filename)
        self.assertEqual(cli.EXIT_OK, exit_code)
        self.assertEqual(
            [
                "asyncbezier_seed0.json",
                "asyncbezier_seed0_curve.h5",
                "asyncbezier_seed0_rounds.csv",
                "fedasync_seed0.json",
                "fedasync_seed0_rounds.csv",
                "summary.csv",
            ],
            self.output_files(),
        )
        summary = pd.read_csv(os.path.join(self.output, "summary.csv"))
        self.assertEqual(
            ["fedasync", "asyncbezier"], list(summary["strategy"])
        )

    def test_run_with_events_and_seeds(self):
        exit_code, _ = self.main(
            "run", "--config", self.filename, "--events", "--seeds", "3"
        )
        self.assertEqual(cli.EXIT_OK, exit_code)
        self.assertIn("fedasync_seed3_events.jsonl", self.output_files())

    def test_run_with_other_output_directory(self):
        output = os.path.join(self.output, "other")
        self.main("run", "--config", self.filename, "--out", output)
        self.assertIn("summary.csv", os.listdir(output))

    def test_run_with_dataset_file(self):
        os.makedirs(self.output)
        data_filename = os.path.join(self.output, "data.csv")
        rng = np.random.default_rng(0)
        frame = pd.DataFrame(
            rng.standard_normal((40, 3)), columns=["f0", "f1", "f2"]
        )
        frame.insert(0, "label", np.arange(40) % 2)
        frame.to_csv(data_filename, index=False)
        exit_code, _ = self.main(
            "run", "--config", self.filename, "--data", data_filename
        )
        self.assertEqual(cli.EXIT_OK, exit_code)

    def test_missing_config_file(self):
        exit_code, stderr = self.main("run", "--config", "nonexisting.ini")
        self.assertEqual(cli.EXIT_INVALID, exit_code)
        self.assertIn("nonexisting.ini", stderr)

    def test_invalid_config_names_key(self):
        with open(self.filename, "a", encoding="utf-8") as file:
            file.write("colour = red\n")
        exit_code, stderr = self.main("run", "--config", self.filename)
        self.assertEqual(cli.EXIT_INVALID, exit_code)
        self.assertIn("training.colour", stderr)
        self.assertFalse(os.path.exists(self.output))

    def test_epoch_study(self):
        exit_code, _ = self.main(
            "epoch-study", "--config", self.filename, "--k-values", "1,2"
        )
        self.assertEqual(cli.EXIT_OK, exit_code)
        table = pd.read_csv(os.path.join(self.output, "epoch_study.csv"))
        self.assertEqual([1, 1, 2, 2], list(table["k"]))
        self.assertIn("fedasync_seed0_K2.json", self.output_files())

    def test_profile(self):
        curve = BezierParams(
            a=np.zeros(8), b=np.full(8, 0.5), c=np.ones(8)
        )
        results.CurveFile(self.curve_filename).write(curve)
        exit_code, _ = self.main(
            "profile",
            "--curve",
            self.curve_filename,
            "--config",
            self.filename,
            "--n-points",
            "5",
            "--out",
            self.profile_filename,
        )
        self.assertEqual(cli.EXIT_OK, exit_code)
        profile = pd.read_csv(self.profile_filename)
        self.assertEqual(5, len(profile))
        np.testing.assert_allclose(profile["bezier"], profile["linear"])

    def test_profile_with_wrong_dimension(self):
        results.CurveFile(self.curve_filename).write(
            BezierParams.point(np.zeros(5))
        )
        exit_code, stderr = self.main(
            "profile",
            "--curve",
            self.curve_filename,
            "--config",
            self.filename,
        )
        self.assertEqual(cli.EXIT_INVALID, exit_code)
        self.assertIn("dimension", stderr)

    def test_profile_needs_data(self):
        results.CurveFile(self.curve_filename).write(
            BezierParams.point(np.zeros(4))
        )
        exit_code, _ = self.main("profile", "--curve", self.curve_filename)
        self.assertEqual(cli.EXIT_INVALID, exit_code)

    def test_profile_of_invalid_curve(self):
        with open(self.profile_filename, "w", encoding="utf-8") as file:
            file.write("1,2\n3,x\n5,6\n")
        exit_code, stderr = self.main(
            "profile",
            "--curve",
            self.profile_filename,
            "--config",
            self.filename,
        )
        self.assertEqual(cli.EXIT_INVALID, exit_code)
        self.assertIn("'x'", stderr)

    def test_connectivity(self):
        exit_code, _ = self.main(
            "connectivity",
            "--config",
            self.filename,
            "--snapshot-age",
            "2",
            "--n-points",
            "3",
        )
        self.assertEqual(cli.EXIT_OK, exit_code)
        self.assertEqual(
            ["connectivity.csv", "connectivity_curve.h5"],
            self.output_files(),
        )


class TestExitCode(unittest.TestCase):
    def test_failed_run_gives_diverged(self):
        failed = RunRecord(strategy="dcasgd")
        failed.failed = True
        cells = [CellResult(record=RunRecord()), CellResult(record=failed)]
        with self.assertLogs("asyncbezier", level="ERROR"):
            self.assertEqual(cli.EXIT_DIVERGED, cli._exit_code(cells))

    def test_successful_runs(self):
        cells = [CellResult(record=RunRecord())]
        self.assertEqual(cli.EXIT_OK, cli._exit_code(cells))
