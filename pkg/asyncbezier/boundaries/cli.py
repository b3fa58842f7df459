"""
*Command-line interface.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

The ``asyncbezier`` command runs experiments described in configuration
files (see :mod:`asyncbezier.boundaries.configuration`) and writes their
results (see :mod:`asyncbezier.boundaries.results`).


Commands
========

``asyncbezier run --config FILE``
    Run every configured strategy with every seed. Writes one record and
    one rounds file per run, the summary, and, if requested, event logs
    and the curves of the last update of curve strategies.

``asyncbezier epoch-study --config FILE``
    Run every strategy and seed for each number of local epochs and
    write the table of accuracies.

``asyncbezier profile --curve FILE``
    Evaluate the loss along a stored curve and along the straight line
    between its endpoints.

``asyncbezier connectivity --config FILE``
    Let a client train a curve from an aged global model and write the
    loss profiles.


Exit codes
==========

0
    Success

2
    Invalid configuration, curve, or data file

3
    At least one run diverged


Module documentation
====================

"""

import argparse
import logging
import sys

from asyncbezier.boundaries import results
from asyncbezier.boundaries.configuration import ConfigurationReader
from asyncbezier.controllers import datasets, experiment, metrics
from asyncbezier.controllers.training import derive_seed
from asyncbezier.entities.model import ModelSpec
from asyncbezier.exceptions import (
    ConfigurationError,
    CurveFileError,
    DimensionError,
    DivergenceError,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3


def _seed_list(value):
    try:
        seeds = [int(item) for item in value.split(",") if item.strip()]
    except ValueError as error:
        raise argparse.ArgumentTypeError(str(error)) from error
    if not seeds:
        raise argparse.ArgumentTypeError("Need at least one seed.")
    return seeds


def build_parser():
    """
    Parser of the command line.

    Returns
    -------
    parser : :class:`argparse.ArgumentParser`
        Parser with one subcommand per command

    """
    parser = argparse.ArgumentParser(
        prog="asyncbezier",
        description="Simulate asynchronous federated training with "
        "curve-based aggregation and compare strategies.",
    )
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="verbosity of the log output (default: %(default)s)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    for name, help_ in (
        ("run", "run all strategies with all seeds"),
        ("epoch-study", "compare numbers of local epochs"),
    ):
        command = commands.add_parser(name, help=help_)
        _add_experiment_arguments(command)
        if name == "run":
            command.add_argument(
                "--events",
                action="store_true",
                help="write an event log per run",
            )
        else:
            command.add_argument(
                "--k-values",
                type=_seed_list,
                help="comma-separated numbers of local epochs",
            )

    profile = commands.add_parser(
        "profile", help="loss along a stored curve"
    )
    profile.add_argument("--curve", required=True, help="curve file")
    profile.add_argument(
        "--config", help="configuration describing model and data"
    )
    profile.add_argument("--data", help="CSV file with labelled samples")
    profile.add_argument(
        "--n-points", type=int, default=21, help="points along the curve"
    )
    profile.add_argument(
        "--out", default="profile.csv", help="file to write the profile to"
    )

    connectivity = commands.add_parser(
        "connectivity", help="train and profile a curve of one client"
    )
    connectivity.add_argument("--config", required=True)
    connectivity.add_argument("--data", help="CSV file with labelled samples")
    connectivity.add_argument("--out", help="output directory")
    connectivity.add_argument("--snapshot-age", type=int, default=50)
    connectivity.add_argument("--client", type=int, default=0)
    connectivity.add_argument("--n-points", type=int, default=21)
    return parser


def _add_experiment_arguments(command):
    command.add_argument("--config", required=True, help="configuration file")
    command.add_argument("--out", help="output directory")
    command.add_argument(
        "--seeds", type=_seed_list, help="comma-separated seeds"
    )
    command.add_argument(
        "--workers", type=int, help="number of parallel processes"
    )
    command.add_argument("--data", help="CSV file with labelled samples")


def main(argv=None):
    """
    Entry point of the ``asyncbezier`` command.

    Parameters
    ----------
    argv : :class:`list`
        Arguments, defaults to :data:`sys.argv`

    Returns
    -------
    exit_code : :class:`int`
        0 on success, 2 for invalid input, 3 if a run diverged

    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    handlers = {
        "run": run_command,
        "epoch-study": epoch_study_command,
        "profile": profile_command,
        "connectivity": connectivity_command,
    }
    try:
        return handlers[args.command](args)
    except DivergenceError as error:
        logger.error("Diverged: %s", error)
        return EXIT_DIVERGED
    except (
        ConfigurationError,
        CurveFileError,
        DimensionError,
        FileNotFoundError,
        ValueError,
    ) as error:
        logger.error("%s", error)
        print(f"asyncbezier: error: {error}", file=sys.stderr)
        return EXIT_INVALID


def _read_config(args):
    config = ConfigurationReader(filename=args.config).read()
    if getattr(args, "out", None):
        config.output_dir = args.out
    if getattr(args, "seeds", None):
        config.seeds = args.seeds
    if getattr(args, "workers", None):
        config.workers = args.workers
    if getattr(args, "events", False):
        config.events = True
    return config


def _read_data(args, config):
    filename = getattr(args, "data", None) or config.template.data.csv
    if not filename:
        return None
    return results.DatasetFile(filename=filename).read()


def run_command(args):
    """
    Run all strategies with all seeds and write the results.

    Parameters
    ----------
    args : :class:`argparse.Namespace`
        Parsed command line

    Returns
    -------
    exit_code : :class:`int`
        0 on success, 3 if a run diverged

    """
    config = _read_config(args)
    data = _read_data(args, config)
    cells = experiment.run_cells(
        configs=config.cells(), data=data, workers=config.workers
    )
    output = results.OutputDirectory(path=config.output_dir)
    _write_cells(cells, output, config)
    results.write_table(
        metrics.summarise([cell.record for cell in cells]),
        output.path_for("summary.csv"),
    )
    return _exit_code(cells)


def epoch_study_command(args):
    """
    Run the epoch study and write its results.

    Parameters
    ----------
    args : :class:`argparse.Namespace`
        Parsed command line

    Returns
    -------
    exit_code : :class:`int`
        0 on success, 3 if a run diverged

    """
    config = _read_config(args)
    if args.k_values:
        config.k_values = args.k_values
    data = _read_data(args, config)
    configs, ks = experiment.epoch_study_configs(
        config.cells(), config.k_values
    )
    cells = experiment.run_cells(
        configs=configs, data=data, workers=config.workers, ks=ks
    )
    output = results.OutputDirectory(path=config.output_dir)
    _write_cells(cells, output, config)
    results.write_table(
        experiment.epoch_study_table(cells),
        output.path_for("epoch_study.csv"),
    )
    return _exit_code(cells)


def _write_cells(cells, output, config):
    for cell in cells:
        record = cell.record
        basename = results.run_basename(record.strategy, record.seed, cell.k)
        results.RecordFile(
            filename=output.path_for(f"{basename}.json")
        ).write(record)
        results.write_rounds(
            record, output.path_for(f"{basename}_rounds.csv")
        )
        if config.events:
            results.write_events(
                cell.events, output.path_for(f"{basename}_events.jsonl")
            )
        if config.export_curves and cell.curve is not None:
            results.CurveFile(
                filename=output.path_for(f"{basename}_curve.h5")
            ).write(cell.curve)


def _exit_code(cells):
    failed = [cell.record for cell in cells if cell.record.failed]
    for record in failed:
        logger.error("Run %s failed: %s", record, record.failure)
    return EXIT_DIVERGED if failed else EXIT_OK


def profile_command(args):
    """
    Write the loss profiles of a stored curve.

    The loss is evaluated on the dataset given with ``--data`` or, if
    none is given, on the synthetic task of the configuration (with its
    first seed).

    Parameters
    ----------
    args : :class:`argparse.Namespace`
        Parsed command line

    Returns
    -------
    exit_code : :class:`int`
        0 on success

    """
    curve = results.CurveFile(filename=args.curve).read()
    if args.config:
        config = ConfigurationReader(filename=args.config).read()
    else:
        config = None
    template = config.template if config else None
    if args.data:
        data = results.DatasetFile(filename=args.data).read()
    elif template:
        data = datasets.make_synthetic(
            n_classes=template.data.n_classes,
            n_features=template.data.n_features,
            n_samples=template.data.n_samples,
            class_sep=template.data.class_sep,
            seed=derive_seed(config.seeds[0], "data"),
        )
    else:
        raise ConfigurationError("Need --data or --config", key="data")
    model = template.model if template else {"kind": "logistic"}
    spec = ModelSpec(
        n_features=data.n_features, n_classes=data.n_classes, **model
    )
    if spec.dimension != curve.dim:
        raise DimensionError(
            f"Curve has dimension {curve.dim}, model needs {spec.dimension}"
        )
    profile = experiment.curve_profiles(spec, curve, data, args.n_points)
    results.write_table(profile, args.out)
    return EXIT_OK


def connectivity_command(args):
    """
    Train and profile the curve of one client.

    Parameters
    ----------
    args : :class:`argparse.Namespace`
        Parsed command line

    Returns
    -------
    exit_code : :class:`int`
        0 on success

    """
    config = _read_config(args)
    data = _read_data(args, config)
    result = experiment.connectivity_study(
        config=config.cells()[0],
        data=data,
        snapshot_age=args.snapshot_age,
        client=args.client,
        n_points=args.n_points,
    )
    output = results.OutputDirectory(path=config.output_dir)
    results.write_table(result.profile, output.path_for("connectivity.csv"))
    results.CurveFile(
        filename=output.path_for("connectivity_curve.h5")
    ).write(result.curve)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
