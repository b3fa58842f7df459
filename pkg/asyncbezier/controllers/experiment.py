"""
*Experiments: many runs, epoch studies, and curve connectivity.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

A single :class:`asyncbezier.controllers.simulation.Simulation` compares
nothing. Experiments run a grid of configurations, usually every strategy
with every seed, and condense the results.

Runs are independent of each other and can be executed in parallel
processes. Results are always returned in the order of the
configurations, regardless of the number of workers, hence the output of
an experiment does not depend on how it was executed.


Epoch study
===========

How does the number :math:`K` of local epochs affect the strategies? For
each :math:`K`, curve strategies train with :math:`K` epochs of SGD
followed by :math:`\\min(K, 2)` epochs of curve training, baselines with
:math:`K` epochs of SGD only. The result is a table of accuracies per
:math:`K` and strategy (:func:`epoch_study_table`).


Curve connectivity
==================

Does a learned curve connect the global model with the local endpoint
through a region of low loss? :func:`connectivity_study` lets a client
train a curve from a global model of some age and compares the loss
along the curve with the loss along the straight line between the same
endpoints.


Module documentation
====================

"""

import concurrent.futures
import logging

import numpy as np
import pandas as pd

from asyncbezier.controllers import metrics
from asyncbezier.controllers.simulation import SimConfig, Simulation
from asyncbezier.controllers.training import derive_seed, train_curve
from asyncbezier.entities.curve import (
    BezierParams,
    CurveTrainConfig,
    loss_profile,
)

logger = logging.getLogger(__name__)


class CellResult:
    """
    Results of one run of an experiment.

    Attributes
    ----------
    record : :class:`asyncbezier.entities.record.RunRecord`
        Results of the run

    events : :class:`list`
        Event log of the run

    curve : :class:`asyncbezier.entities.curve.BezierParams` | :obj:`None`
        Curve of the last applied update, only for curve strategies

    k : :class:`int` | :obj:`None`
        Number of local epochs, only set for epoch studies

    """

    def __init__(self, record=None, events=None, curve=None, k=None):
        self.record = record
        self.events = events or []
        self.curve = curve
        self.k = k

    def __str__(self):
        return f"{self.record} <{type(self).__name__}>"


def run_cell(config=None, data=None, k=None):
    """
    Run one configuration.

    Module-level function, hence usable with process pools.

    Parameters
    ----------
    config : :class:`asyncbezier.controllers.simulation.SimConfig`
        Configuration of the run

    data : :class:`asyncbezier.entities.model.Dataset`
        Dataset to use instead of the synthetic task

    k : :class:`int` | :obj:`None`
        Number of local epochs, passed through to the result

    Returns
    -------
    result : :class:`CellResult`
        Results of the run

    """
    simulation = Simulation(config=config, data=data)
    record = simulation.run()
    return CellResult(
        record=record,
        events=simulation.events,
        curve=simulation.state.last_curve,
        k=k,
    )


def run_cells(configs=None, data=None, workers=1, ks=None):
    """
    Run several configurations, possibly in parallel processes.

    Parameters
    ----------
    configs : :class:`list`
        :class:`asyncbezier.controllers.simulation.SimConfig` objects

    data : :class:`asyncbezier.entities.model.Dataset`
        Dataset to use instead of the synthetic task

    workers : :class:`int`
        Number of processes. With one worker, runs are executed in the
        current process.

    ks : :class:`list` | :obj:`None`
        Number of local epochs per configuration, for epoch studies

    Returns
    -------
    results : :class:`list`
        :class:`CellResult` objects in order of the configurations

    """
    if not configs:
        raise ValueError("Need configurations to run.")
    ks = list(ks) if ks is not None else [None] * len(configs)
    if len(ks) != len(configs):
        raise ValueError("Need one number of epochs per configuration.")
    datas = [data] * len(configs)
    logger.info(
        "Running %d configurations on %d worker(s)", len(configs), workers
    )
    if workers <= 1:
        return list(map(run_cell, configs, datas, ks))
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell, configs, datas, ks))


def epoch_study_configs(configs=None, k_values=None):
    """
    Configurations of an epoch study.

    Parameters
    ----------
    configs : :class:`list`
        :class:`asyncbezier.controllers.simulation.SimConfig` objects, one
        per strategy and seed

    k_values : :class:`list`
        Numbers of local epochs

    Returns
    -------
    configs : :class:`list`
        Configurations, for each number of epochs all given ones

    ks : :class:`list`
        Number of epochs of each configuration

    """
    if not k_values or min(k_values) < 1:
        raise ValueError("Need positive numbers of local epochs.")
    study, ks = [], []
    for k in k_values:
        for config in configs:
            settings = config.to_dict()
            curve = config.strategy.is_curve_strategy
            settings["training"].update(
                k_sgd=k,
                k_curve=min(k, 2) if curve else 0,
                b_init=settings["training"]["b_init"] if curve else "global",
            )
            study.append(SimConfig.from_dict(settings))
            ks.append(k)
    return study, ks


def epoch_study_table(results=None):
    """
    Accuracies per number of local epochs and strategy.

    Parameters
    ----------
    results : :class:`list`
        :class:`CellResult` objects with :attr:`CellResult.k` set

    Returns
    -------
    table : :class:`pandas.DataFrame`
        Column ``k`` followed by the columns of
        :func:`asyncbezier.controllers.metrics.summarise`

    """
    if not results:
        raise ValueError("Need results of an epoch study.")
    tables = []
    for k in dict.fromkeys(result.k for result in results):
        summary = metrics.summarise(
            [result.record for result in results if result.k == k]
        )
        summary.insert(0, "k", k)
        tables.append(summary)
    return pd.concat(tables, ignore_index=True)


class ConnectivityResult:
    """
    Loss along a learned curve and along the straight line.

    Attributes
    ----------
    curve : :class:`asyncbezier.entities.curve.BezierParams`
        Curve learned by the client

    profile : :class:`pandas.DataFrame`
        Columns ``t``, ``bezier``, and ``linear``

    """

    def __init__(self, curve=None, profile=None):
        self.curve = curve
        self.profile = profile

    @property
    def mean_bezier(self):
        """
        Mean loss along the curve.

        Returns
        -------
        mean : :class:`float`
            Mean over all points of the profile

        """
        return float(self.profile["bezier"].mean())

    @property
    def mean_linear(self):
        """
        Mean loss along the straight line.

        Returns
        -------
        mean : :class:`float`
            Mean over all points of the profile

        """
        return float(self.profile["linear"].mean())


def curve_profiles(spec=None, curve=None, data=None, n_points=21):
    """
    Loss along a curve and along the line between its endpoints.

    Parameters
    ----------
    spec : :class:`asyncbezier.entities.model.ModelSpec`
        Model specification

    curve : :class:`asyncbezier.entities.curve.BezierParams`
        Curve to evaluate

    data : :class:`asyncbezier.entities.model.Dataset`
        Dataset the loss is computed on

    n_points : :class:`int`
        Number of equidistant points, including both endpoints

    Returns
    -------
    profile : :class:`pandas.DataFrame`
        Columns ``t``, ``bezier``, and ``linear``

    """
    bezier = loss_profile(spec, curve, data, n_points)
    linear = loss_profile(spec, curve.straight_line(), data, n_points)
    return pd.DataFrame(
        {
            "t": [t for t, _ in bezier],
            "bezier": [loss for _, loss in bezier],
            "linear": [loss for _, loss in linear],
        }
    )


def connectivity_study(
    config=None,
    data=None,
    snapshot_age=50,
    client=0,
    curve_cfg=None,
    n_points=21,
):
    """
    Train a curve from an aged global model and profile its loss.

    The global model is trained for ``snapshot_age`` updates with the
    configured strategy. The client then trains a curve starting from
    this model on its training data, and the loss along the curve and the
    straight line is evaluated on the same data.

    Parameters
    ----------
    config : :class:`asyncbezier.controllers.simulation.SimConfig`
        Configuration of the simulation producing the global model

    data : :class:`asyncbezier.entities.model.Dataset`
        Dataset to use instead of the synthetic task

    snapshot_age : :class:`int`
        Number of updates before the client trains. Zero uses the initial
        model.

    client : :class:`int`
        Client training the curve

    curve_cfg : :class:`asyncbezier.entities.curve.CurveTrainConfig`
        Local training of the client, defaults to five epochs of SGD and
        two epochs of curve training with the settings of ``config``.

    n_points : :class:`int`
        Number of points of the profiles

    Returns
    -------
    result : :class:`ConnectivityResult`
        Learned curve and loss profiles

    """
    config = config or SimConfig()
    if snapshot_age < 0:
        raise ValueError("Need a non-negative snapshot age.")
    if curve_cfg is None:
        settings = config.curve_cfg.to_dict()
        settings.update(k_sgd=5, k_curve=2)
        curve_cfg = CurveTrainConfig(**settings)
    settings = config.to_dict()
    settings["total_updates"] = max(snapshot_age, 1)
    simulation = Simulation(config=SimConfig.from_dict(settings), data=data)
    if snapshot_age:
        simulation.run()
        theta = simulation.state.theta
    else:
        theta = simulation.spec.init_params(derive_seed(config.seed, "init"))
    if not 0 <= client < simulation.data.n_clients:
        raise ValueError(f"No client {client}.")
    train = simulation.data.train[client]
    reparam = train_curve(
        spec=simulation.spec,
        theta_global=theta,
        data=train,
        cfg=curve_cfg,
        seed=derive_seed(config.seed, "connectivity", client),
    )
    curve = BezierParams.point(theta).displaced(reparam)
    profile = curve_profiles(simulation.spec, curve, train, n_points)
    logger.info(
        "Mean loss along curve %.4g, along line %.4g",
        profile["bezier"].mean(),
        profile["linear"].mean(),
    )
    if not np.all(np.isfinite(profile[["bezier", "linear"]].to_numpy())):
        logger.warning("Non-finite loss along the profiles.")
    return ConnectivityResult(curve=curve, profile=profile)
