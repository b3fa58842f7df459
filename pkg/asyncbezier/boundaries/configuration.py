"""
*Experiment configuration files.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

Experiments are described in a single text file with sections of
``key = value`` pairs, parsed by :mod:`configparser`. The file is
validated completely before anything is computed: unknown sections or
keys and values that cannot be parsed result in a
:class:`ConfigurationError <asyncbezier.exceptions.ConfigurationError>`
naming the offending ``section.key``.


File format
===========

.. code-block:: ini

    [experiment]
    preset = femnist-like
    seeds = 0, 1, 2
    strategies = fedasync, asyncbezier
    output_dir = results

    [data]
    n_classes = 10
    dirichlet_alpha = 0.5

    [model]
    kind = mlp1
    hidden_width = 32

    [simulation]
    n_clients = 30
    total_updates = 400

    [training]
    k_sgd = 2
    k_curve = 2

    [strategy:asyncbezier]
    eta_g = 0.5
    vartheta = 1.0

All sections and keys are optional. Values are taken, in order of
increasing precedence, from the built-in defaults, the preset named in
``[experiment] preset``, and the file itself. The environment variable
``ASYNCBEZIER_OUTPUT_DIR`` overrides the output directory of the file.

The ``[strategy:<name>]`` sections override the settings of the named
strategies (see :data:`asyncbezier.entities.state.ROSTER`) for this
experiment. Each strategy runs with each seed.


Presets
=======

``femnist-like``
    Global learning rates and :math:`\\vartheta = 1` as used for
    character recognition with many clients

``shakespeare-like``
    Global learning rates and :math:`\\vartheta = 0` as used for next
    character prediction

``synthetic-heterogeneous``
    Desk-scale heterogeneous scenario: 30 clients with Dirichlet label
    skew (:math:`\\alpha = 0.5`), 400 updates, lognormal service times
    (:math:`\\sigma = 0.5`), and the learning rates of ``femnist-like``


Module documentation
====================

"""

import configparser
import logging
import os

from asyncbezier.controllers.simulation import DataConfig, SimConfig
from asyncbezier.entities.curve import CurveTrainConfig
from asyncbezier.entities.model import MODEL_KINDS
from asyncbezier.entities.state import ROSTER, StrategyConfig
from asyncbezier.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

#: Environment variable overriding the output directory.
OUTPUT_DIR_VARIABLE = "ASYNCBEZIER_OUTPUT_DIR"

#: Local epochs of the epoch study if not configured.
DEFAULT_K_VALUES = (1, 2, 5, 10)


def _boolean(value):
    lowered = value.strip().lower()
    if lowered in ("1", "yes", "true", "on"):
        return True
    if lowered in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"Not a boolean: '{value}'")


def _optional_int(value):
    if value.strip().lower() in ("", "none"):
        return None
    return int(value)


def _model_kind(value):
    kind = value.strip()
    if kind not in MODEL_KINDS:
        raise ValueError(f"Not one of {', '.join(MODEL_KINDS)}")
    return kind


def _int_list(value):
    return [int(item) for item in _str_list(value)]


def _float_list(value):
    return [float(item) for item in _str_list(value)]


def _str_list(value):
    return [item.strip() for item in value.split(",") if item.strip()]


#: Parsers of all known keys, per section.
SCHEMA = {
    "experiment": {
        "preset": str,
        "seeds": _int_list,
        "strategies": _str_list,
        "output_dir": str,
        "k_values": _int_list,
        "workers": int,
        "events": _boolean,
        "export_curves": _boolean,
    },
    "data": {
        "n_classes": int,
        "n_features": int,
        "n_samples": int,
        "class_sep": float,
        "dirichlet_alpha": float,
        "validation_fraction": float,
        "csv": str,
    },
    "model": {
        "kind": _model_kind,
        "hidden_width": int,
        "l2": float,
    },
    "simulation": {
        "n_clients": int,
        "total_updates": int,
        "service_time": str,
        "sigma": float,
        "service_times": _float_list,
        "max_staleness": _optional_int,
        "eval_every": int,
        "swa_window": int,
    },
    "training": {
        "k_sgd": int,
        "k_curve": int,
        "mu": float,
        "eta_l": float,
        "b_init": str,
        "samples_per_batch_draw": int,
        "batch_size": _optional_int,
        "optimizer": str,
    },
    "strategy": {
        "eta_g": float,
        "client_weighting": str,
        "alpha": float,
        "vartheta": float,
        "correction": str,
        "per_block": _boolean,
        "lambda0": float,
        "adaptive": _boolean,
        "buffer_k": int,
    },
}

_COMMON_TRAINING = {"mu": 0.001, "eta_l": 0.001, "k_sgd": 2, "k_curve": 2}
_COMMON_STRATEGY = {"client_weighting": "proportional", "lambda0": 2.0}


def _strategy_rates(rates, vartheta):
    sections = {}
    for name, eta_g in rates.items():
        settings = dict(_COMMON_STRATEGY, eta_g=eta_g)
        if ROSTER[name]["kind"] == "asyncbezier":
            settings["vartheta"] = vartheta
        sections[f"strategy:{name}"] = settings
    return sections


_FEMNIST_RATES = {
    "fedasync": 3.0,
    "fedortho": 3.0,
    "fedgs": 1.0,
    "dcasgd": 1.0,
    "fedbuff": 1.0,
    "asyncbezier": 0.5,
    "asyncbezier-ed": 0.25,
}

_SHAKESPEARE_RATES = {
    "fedasync": 5.0,
    "fedortho": 5.0,
    "fedgs": 2.5,
    "dcasgd": 2.5,
    "fedbuff": 2.0,
    "asyncbezier": 1.5,
    "asyncbezier-ed": 1.0,
}

#: Named presets, given as settings per section.
PRESETS = {
    "femnist-like": {
        "training": dict(_COMMON_TRAINING),
        **_strategy_rates(_FEMNIST_RATES, vartheta=1.0),
    },
    "shakespeare-like": {
        "training": dict(_COMMON_TRAINING),
        **_strategy_rates(_SHAKESPEARE_RATES, vartheta=0.0),
    },
    "synthetic-heterogeneous": {
        "experiment": {"strategies": ["fedasync", "asyncbezier"]},
        "data": {
            "n_classes": 10,
            "n_features": 20,
            "n_samples": 6000,
            "class_sep": 2.0,
            "dirichlet_alpha": 0.5,
        },
        "model": {"kind": "mlp1", "hidden_width": 32},
        "simulation": {
            "n_clients": 30,
            "total_updates": 400,
            "service_time": "lognormal",
            "sigma": 0.5,
            "eval_every": 10,
        },
        "training": dict(
            _COMMON_TRAINING, eta_l=0.01, optimizer="adam", batch_size=32
        ),
        **_strategy_rates(_FEMNIST_RATES, vartheta=1.0),
    },
}


class ExperimentConfig:
    """
    Configuration of an experiment: strategies, seeds, and a run template.

    Attributes
    ----------
    template : :class:`asyncbezier.controllers.simulation.SimConfig`
        Settings shared by all runs. Strategy and seed are set per run.

    seeds : :class:`list`
        Seeds, each strategy is run once per seed

    strategies : :class:`list`
        :class:`asyncbezier.entities.state.StrategyConfig` objects

    output_dir : :class:`str`
        Directory results are written to

    preset : :class:`str`
        Name of the preset used, empty if none

    k_values : :class:`list`
        Numbers of local epochs compared by the epoch study

    workers : :class:`int`
        Number of runs executed in parallel

    events : :class:`bool`
        Whether to write event logs

    export_curves : :class:`bool`
        Whether to export the last curve of curve strategies


    Raises
    ------
    ConfigurationError
        Raised if no seeds or no strategies are given.

    """

    def __init__(
        self,
        template=None,
        seeds=None,
        strategies=None,
        output_dir="results",
        preset="",
        k_values=DEFAULT_K_VALUES,
        workers=1,
        events=False,
        export_curves=True,
    ):
        if not seeds:
            raise ConfigurationError(
                "Need at least one seed", "experiment.seeds"
            )
        if not strategies:
            raise ConfigurationError(
                "Need at least one strategy", "experiment.strategies"
            )
        if workers < 1:
            raise ConfigurationError(
                "Need at least one worker", "experiment.workers"
            )
        self.template = template or SimConfig()
        self.seeds = [int(seed) for seed in seeds]
        self.strategies = list(strategies)
        self.output_dir = output_dir
        self.preset = preset
        self.k_values = list(k_values)
        self.workers = int(workers)
        self.events = bool(events)
        self.export_curves = bool(export_curves)

    def cells(self):
        """
        Configurations of all runs, strategies first, then seeds.

        Returns
        -------
        cells : :class:`list`
            :class:`asyncbezier.controllers.simulation.SimConfig` objects

        """
        cells = []
        for strategy in self.strategies:
            for seed in self.seeds:
                config = self.template.to_dict()
                config.update(seed=seed, strategy=strategy.to_dict())
                cells.append(SimConfig.from_dict(config))
        return cells


class ConfigurationReader:
    """
    Read and validate experiment configuration files.

    Attributes
    ----------
    filename : :class:`str`
        Name of the configuration file

    environment : :class:`dict`
        Environment variables to consider. Defaults to :data:`os.environ`.

    Examples
    --------
    .. code-block::

        reader = ConfigurationReader(filename="experiment.ini")
        config = reader.read()
        for cell in config.cells():
            ...

    """

    def __init__(self, filename="", environment=None):
        self.filename = filename
        self.environment = os.environ if environment is None else environment

    def read(self, filename=""):
        """
        Read, validate, and resolve a configuration file.

        Parameters
        ----------
        filename : :class:`str`
            Name of the file. Takes precedence over :attr:`filename`.

        Returns
        -------
        config : :class:`ExperimentConfig`
            Resolved configuration

        Raises
        ------
        FileNotFoundError
            Raised if the file does not exist.

        ConfigurationError
            Raised for invalid contents.

        """
        if filename:
            self.filename = filename
        if not self.filename:
            raise ValueError("Missing attribute filename")
        if not os.path.exists(self.filename):
            raise FileNotFoundError(f"File {self.filename} does not exist.")
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read(self.filename, encoding="utf-8")
        except configparser.Error as error:
            raise ConfigurationError(str(error), key="") from error
        return self.from_sections(
            {name: dict(parser[name]) for name in parser.sections()}
        )

    def read_string(self, text=""):
        """
        Read, validate, and resolve a configuration given as text.

        Parameters
        ----------
        text : :class:`str`
            Contents of a configuration file

        Returns
        -------
        config : :class:`ExperimentConfig`
            Resolved configuration

        """
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text)
        except configparser.Error as error:
            raise ConfigurationError(str(error), key="") from error
        return self.from_sections(
            {name: dict(parser[name]) for name in parser.sections()}
        )

    def from_sections(self, sections=None):
        """
        Validate and resolve raw sections.

        Parameters
        ----------
        sections : :class:`dict`
            Raw string values per section and key

        Returns
        -------
        config : :class:`ExperimentConfig`
            Resolved configuration

        """
        settings = self._parse(sections or {})
        preset = settings.get("experiment", {}).get("preset", "")
        if preset:
            if preset not in PRESETS:
                raise self._error(
                    f"Unknown preset '{preset}'", "experiment.preset"
                )
            settings = _merge(PRESETS[preset], settings)
        return self._build(settings, preset)

    def _parse(self, sections):
        settings = {}
        for section, values in sections.items():
            schema_name = section.split(":", 1)[0]
            if schema_name not in SCHEMA or (
                schema_name == "strategy" and ":" not in section
            ):
                raise self._error(f"Unknown section '{section}'", section)
            if schema_name == "strategy":
                name = section.split(":", 1)[1]
                if name not in ROSTER:
                    raise self._error(f"Unknown strategy '{name}'", section)
            schema = SCHEMA[schema_name]
            settings[section] = {}
            for key, value in values.items():
                if key not in schema:
                    raise self._error(
                        f"Unknown key '{key}'", f"{section}.{key}"
                    )
                try:
                    settings[section][key] = schema[key](value)
                except ValueError as error:
                    raise self._error(
                        f"Invalid value '{value}': {error}",
                        f"{section}.{key}",
                    ) from error
        return settings

    def _build(self, settings, preset):
        experiment = settings.get("experiment", {})
        try:
            template = SimConfig(
                data=DataConfig(**settings.get("data", {})),
                model=settings.get("model", {}),
                curve_cfg=CurveTrainConfig(**settings.get("training", {})),
                **settings.get("simulation", {}),
            )
        except ValueError as error:
            raise self._error(str(error), _guess_key(error, settings))
        strategies = []
        for name in experiment.get("strategies", ["asyncbezier"]):
            if name not in ROSTER:
                raise self._error(
                    f"Unknown strategy '{name}'", "experiment.strategies"
                )
            overrides = settings.get(f"strategy:{name}", {})
            try:
                strategies.append(StrategyConfig.from_name(name, **overrides))
            except ConfigurationError as error:
                raise self._error(
                    str(error), f"strategy:{name}.{error.key}"
                ) from error
        output_dir = self.environment.get(
            OUTPUT_DIR_VARIABLE, experiment.get("output_dir", "results")
        )
        return ExperimentConfig(
            template=template,
            seeds=experiment.get("seeds", [0]),
            strategies=strategies,
            output_dir=output_dir,
            preset=preset,
            k_values=experiment.get("k_values", DEFAULT_K_VALUES),
            workers=experiment.get("workers", 1),
            events=experiment.get("events", False),
            export_curves=experiment.get("export_curves", True),
        )

    @staticmethod
    def _error(message, key):
        message = f"{key}: {message}" if key else message
        logger.error(message)
        return ConfigurationError(message, key=key)


def _merge(base, overrides):
    merged = {section: dict(values) for section, values in base.items()}
    for section, values in overrides.items():
        merged.setdefault(section, {}).update(values)
    return merged


def _guess_key(error, settings):
    text = str(error).lower()
    for section in ("simulation", "training", "model", "data"):
        for key in settings.get(section, {}):
            if key.replace("_", " ") in text or key in text:
                return f"{section}.{key}"
    return ""
