"""
*Deterministic discrete-event simulation of asynchronous training.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

Clients differ in how long they need for a round of local training. The
simulation models this by drawing a service time whenever a client is
dispatched, and processes client arrivals in order of simulated time. At
each arrival, the server applies the update using the configured
strategy and immediately dispatches the client again with the new global
model. Staleness is hence not imposed, but emerges from the differences
in service times.


Event loop
==========

#. At time 0, all clients are dispatched in order of their index.
#. The earliest arrival (ties broken by order of insertion) is taken from
   the queue.
#. The client trains against the global model it received (local training
   is a pure function of this model and its seed and is therefore
   performed on arrival).
#. If the update is staler than ``max_staleness``, it is dropped and
   counted. Otherwise, the strategy processes it.
#. The client is dispatched again with the current global model.
#. Steps 2 to 5 repeat until ``total_updates`` updates have arrived.

Simulated time is virtual: the wall clock is never consulted, and all
randomness derives from the run seed via independent streams per purpose
(data, partitioning, initialisation, scheduling, and per-dispatch client
training). A run is thus fully determined by its configuration.


Service times
=============

``lognormal``
    :math:`\\exp(\\mathcal{N}(0, \\sigma^2))` multiplied by the client's
    dataset size relative to the mean dataset size. Larger clients are
    hence slower on average.

``deterministic``
    Fixed service time per client, given as list ``service_times``.


Usage
=====

.. code-block::

    from asyncbezier.controllers import simulation
    from asyncbezier.entities.state import StrategyConfig

    config = simulation.SimConfig(
        n_clients=10,
        total_updates=100,
        seed=42,
        strategy=StrategyConfig.from_name("asyncbezier", eta_g=0.5),
    )
    record = simulation.run(config)


Module documentation
====================

"""

import collections
import heapq
import itertools
import logging

import numpy as np

from asyncbezier.controllers import datasets, metrics
from asyncbezier.controllers.aggregation import (
    StrategyFactory,
    swa_tail_average,
)
from asyncbezier.controllers.training import derive_seed, train_curve
from asyncbezier.entities.curve import CurveTrainConfig
from asyncbezier.entities.model import Dataset, ModelSpec
from asyncbezier.entities.record import RunRecord
from asyncbezier.entities.state import (
    ClientUpdate,
    GlobalState,
    StrategyConfig,
)
from asyncbezier.exceptions import DivergenceError, HistoryError

logger = logging.getLogger(__name__)

SERVICE_TIME_MODES = ("lognormal", "deterministic")


class DataConfig:
    """
    Description of the task and its distribution over clients.

    Attributes
    ----------
    n_classes : :class:`int`
        Number of classes of the synthetic task

        Default: 10

    n_features : :class:`int`
        Number of features of the synthetic task

        Default: 20

    n_samples : :class:`int`
        Number of samples of the synthetic task

        Default: 3000

    class_sep : :class:`float`
        Distance between class means

        Default: 2.0

    dirichlet_alpha : :class:`float`
        Concentration of the label skew

        Default: 0.5

    validation_fraction : :class:`float`
        Share of each client's samples used for validation

        Default: 0.2

    csv : :class:`str`
        Path of a CSV dataset replacing the synthetic task, empty if
        unused. The file is read by the caller, the path is kept for
        provenance.

    """

    def __init__(
        self,
        n_classes=10,
        n_features=20,
        n_samples=3000,
        class_sep=2.0,
        dirichlet_alpha=0.5,
        validation_fraction=0.2,
        csv="",
    ):
        self.n_classes = int(n_classes)
        self.n_features = int(n_features)
        self.n_samples = int(n_samples)
        self.class_sep = float(class_sep)
        self.dirichlet_alpha = float(dirichlet_alpha)
        self.validation_fraction = float(validation_fraction)
        self.csv = csv or ""

    def to_dict(self):
        """
        Configuration as dict.

        Returns
        -------
        config : :class:`dict`
            Keyword arguments recreating the configuration.

        """
        return dict(vars(self))


class SimConfig:
    """
    Configuration of a single simulation run.

    Attributes
    ----------
    n_clients : :class:`int`
        Number of clients

    total_updates : :class:`int`
        Number of client updates arriving at the server before the run
        ends

    seed : :class:`int`
        Seed of the run

    service_time : :class:`str`
        Service time model, ``lognormal`` or ``deterministic``

    sigma : :class:`float`
        Spread of the lognormal service times

    service_times : :class:`list`
        Service time per client for the deterministic model

    max_staleness : :class:`int` | :obj:`None`
        Updates staler than this are dropped. :obj:`None` means no bound.

    eval_every : :class:`int`
        Evaluate the global model every this many versions (and always
        at the end)

    swa_window : :class:`int`
        Number of most recent global models averaged for
        meta-aggregation. Zero disables averaging.

    strategy : :class:`asyncbezier.entities.state.StrategyConfig`
        Server strategy

    curve_cfg : :class:`asyncbezier.entities.curve.CurveTrainConfig`
        Client training configuration

    data : :class:`DataConfig`
        Task and its distribution over clients

    model : :class:`dict`
        ``kind``, ``hidden_width``, and ``l2`` of the model. Feature and
        class numbers are taken from the data.


    Raises
    ------
    ValueError
        Raised for inconsistent settings.

    """

    def __init__(
        self,
        n_clients=1,
        total_updates=1,
        seed=0,
        service_time="lognormal",
        sigma=0.5,
        service_times=None,
        max_staleness=None,
        eval_every=1,
        swa_window=0,
        strategy=None,
        curve_cfg=None,
        data=None,
        model=None,
    ):
        if n_clients < 1 or total_updates < 1:
            raise ValueError("Need at least one client and one update.")
        if service_time not in SERVICE_TIME_MODES:
            raise ValueError(f"Unknown service time model '{service_time}'")
        if service_time == "deterministic" and (
            service_times is None or len(service_times) != n_clients
        ):
            raise ValueError("Need one service time per client.")
        if max_staleness is not None and max_staleness < 0:
            raise ValueError("Maximum staleness needs to be non-negative.")
        if eval_every < 1 or swa_window < 0:
            raise ValueError("Need eval_every >= 1 and swa_window >= 0.")
        self.n_clients = int(n_clients)
        self.total_updates = int(total_updates)
        self.seed = int(seed)
        self.service_time = service_time
        self.sigma = float(sigma)
        self.service_times = (
            [float(item) for item in service_times] if service_times else []
        )
        self.max_staleness = (
            None if max_staleness is None else int(max_staleness)
        )
        self.eval_every = int(eval_every)
        self.swa_window = int(swa_window)
        self.strategy = strategy or StrategyConfig()
        self.curve_cfg = curve_cfg or CurveTrainConfig()
        self.data = data or DataConfig()
        self.model = {"kind": "logistic", "hidden_width": 0, "l2": 0.0}
        self.model.update(model or {})

    def to_dict(self):
        """
        Configuration as nested dict.

        Returns
        -------
        config : :class:`dict`
            Configuration, recreated by :meth:`from_dict`

        """
        config = {
            key: value
            for key, value in vars(self).items()
            if key not in ("strategy", "curve_cfg", "data", "model")
        }
        config["strategy"] = self.strategy.to_dict()
        config["training"] = self.curve_cfg.to_dict()
        config["data"] = self.data.to_dict()
        config["model"] = dict(self.model)
        return config

    @classmethod
    def from_dict(cls, config=None):
        """
        Recreate a configuration from its dict representation.

        Parameters
        ----------
        config : :class:`dict`
            Output of :meth:`to_dict`

        Returns
        -------
        config : :class:`SimConfig`
            Configuration

        """
        config = dict(config)
        strategy = StrategyConfig(**config.pop("strategy"))
        curve_cfg = CurveTrainConfig(**config.pop("training"))
        data = DataConfig(**config.pop("data"))
        return cls(
            strategy=strategy, curve_cfg=curve_cfg, data=data, **config
        )


class Event:
    """
    Arrival of a client update, the only entry of the event queue.

    Events are ordered by time, ties are broken by the sequence number
    assigned on insertion.

    Attributes
    ----------
    time : :class:`float`
        Simulated time of the event

    seq : :class:`int`
        Sequence number, strictly increasing with insertion

    client : :class:`int`
        Client index

    dispatch_time : :class:`float`
        Time the client was dispatched

    """

    def __init__(self, time=0.0, seq=0, client=0, dispatch_time=0.0):
        self.time = float(time)
        self.seq = int(seq)
        self.client = client
        self.dispatch_time = float(dispatch_time)

    def __lt__(self, other):
        return (self.time, self.seq) < (other.time, other.seq)

    def __str__(self):
        return f"arrival of client {self.client} at {self.time:g}"


def measure_staleness(state=None, update=None):
    """
    Number of versions the global model advanced since dispatch.

    Parameters
    ----------
    state : :class:`asyncbezier.entities.state.GlobalState`
        Server state

    update : :class:`asyncbezier.entities.state.ClientUpdate`
        Arriving update

    Returns
    -------
    staleness : :class:`int`
        :math:`\\tau - t`

    Raises
    ------
    HistoryError
        Raised if the origin version is no longer in the history.

    """
    if update.origin_version not in state.history:
        message = f"Origin version {update.origin_version} evicted"
        logger.error(message)
        raise HistoryError(message)
    return state.version - update.origin_version


class Simulation:
    """
    Asynchronous federated training of one strategy with one seed.

    Attributes
    ----------
    config : :class:`SimConfig`
        Configuration of the run

    data : :class:`asyncbezier.controllers.datasets.FederatedData`
        Training and validation sets of all clients

    spec : :class:`asyncbezier.entities.model.ModelSpec`
        Model specification

    state : :class:`asyncbezier.entities.state.GlobalState`
        Server state, available after :meth:`run`

    record : :class:`asyncbezier.entities.record.RunRecord`
        Results, available after :meth:`run`

    events : :class:`list`
        One :class:`dict` per arrival: ``time``, ``client``,
        ``staleness``, ``dropped``, ``version`` and, if the global model
        advanced, ``s_factor``, ``step`` and (if evaluated) ``loss`` and
        ``acc``


    Parameters
    ----------
    config : :class:`SimConfig`
        Configuration of the run

    data : :class:`Dataset` | :class:`FederatedData`
        Data to use instead of the synthetic task. A single dataset is
        partitioned over the clients, federated data are used as is.

    spec : :class:`asyncbezier.entities.model.ModelSpec`
        Model to use instead of the one described by the configuration


    Examples
    --------
    .. code-block::

        sim = Simulation(config=config)
        record = sim.run()
        sim.state.last_curve     # curve of the last update (AsyncBezier)

    """

    def __init__(self, config=None, data=None, spec=None):
        self.config = config or SimConfig()
        self.data = self._prepare_data(data)
        if self.data.n_clients != self.config.n_clients:
            raise ValueError("Number of clients differs from the data.")
        if spec is None:
            spec = ModelSpec(
                n_features=self.data.n_features,
                n_classes=self.data.n_classes,
                **self.config.model,
            )
        self.spec = spec
        self.state = None
        self.record = None
        self.events = []
        self._weights = self.data.weights(
            self.config.strategy.client_weighting
        )
        self._strategy = None
        self._queue = []
        self._seq = itertools.count()
        self._dispatches = collections.Counter()
        self._schedule_rng = None
        self._tail = collections.deque(maxlen=max(self.config.swa_window, 1))
        self._per_client = []

    def _prepare_data(self, data):
        config = self.config
        if isinstance(data, datasets.FederatedData):
            return data
        if data is None:
            data = datasets.make_synthetic(
                n_classes=config.data.n_classes,
                n_features=config.data.n_features,
                n_samples=config.data.n_samples,
                class_sep=config.data.class_sep,
                seed=derive_seed(config.seed, "data"),
            )
        if not isinstance(data, Dataset):
            raise ValueError("Need a Dataset or FederatedData.")
        return datasets.make_federated(
            global_=data,
            n_clients=config.n_clients,
            alpha=config.data.dirichlet_alpha,
            validation_fraction=config.data.validation_fraction,
            seed=derive_seed(config.seed, "partition"),
        )

    def run(self):
        """
        Run the simulation.

        A diverging model aborts the run. The record returned is flagged
        as failed in this case and contains the results up to the last
        finite global model.

        Returns
        -------
        record : :class:`asyncbezier.entities.record.RunRecord`
            Results of the run

        """
        config = self.config
        logger.info(
            "Running %s with seed %d", config.strategy.name, config.seed
        )
        self.record = RunRecord(
            strategy=config.strategy.name,
            seed=config.seed,
            config=config.to_dict(),
        )
        self.state = GlobalState(
            theta=self._initial_theta(derive_seed(config.seed, "init"))
        )
        self._strategy = StrategyFactory().get_strategy(config.strategy)
        self._schedule_rng = np.random.default_rng(
            derive_seed(config.seed, "schedule")
        )
        self._tail.append(self.state.theta)
        self._record_version(client=None, time=0.0, force_eval=True)
        for client in range(config.n_clients):
            self._dispatch(client, 0.0)
        try:
            while self.record.n_arrivals < config.total_updates:
                self._process(heapq.heappop(self._queue))
            if self._strategy.finish(self.state):
                self._record_version(client=None, time=self._now())
        except DivergenceError as error:
            self.record.failed = True
            self.record.failure = str(error)
            logger.error(
                "Run %s seed %d diverged: %s",
                config.strategy.name,
                config.seed,
                error,
            )
        self._finalise()
        return self.record

    def _initial_theta(self, seed):
        return self.spec.init_params(seed)

    def _now(self):
        return self.events[-1]["time"] if self.events else 0.0

    def _service_time(self, client):
        config = self.config
        if config.service_time == "deterministic":
            return config.service_times[client]
        sizes = self.data.sizes()
        scale = sizes[client] / sizes.mean()
        return float(self._schedule_rng.lognormal(0.0, config.sigma) * scale)

    def _dispatch(self, client, time):
        self.state.dispatch(client)
        event = Event(
            time=time + self._service_time(client),
            seq=next(self._seq),
            client=client,
            dispatch_time=time,
        )
        heapq.heappush(self._queue, event)

    def _process(self, event):
        config = self.config
        client = event.client
        origin = self.state.per_client_origin.pop(client)
        self.record.n_arrivals += 1
        update = ClientUpdate(
            client=client,
            origin_version=origin,
            weight=self._weights[client],
            dispatch_time=event.dispatch_time,
            arrival_time=event.time,
        )
        staleness = measure_staleness(self.state, update)
        entry = {
            "time": event.time,
            "client": client,
            "staleness": staleness,
            "dropped": False,
        }
        if (
            config.max_staleness is not None
            and staleness > config.max_staleness
        ):
            self.record.drops += 1
            entry["dropped"] = True
            logger.warning(
                "Dropping update of client %d with staleness %d",
                client,
                staleness,
            )
        else:
            update.reparam = self._train(client, origin)
            if self._strategy.receive(self.state, update):
                entry.update(self._record_version(client, event.time))
        entry["version"] = self.state.version
        self.events.append(entry)
        self._dispatch(client, event.time)
        self.state.prune_history()

    def _train(self, client, origin):
        config = self.config
        curve_cfg = config.curve_cfg
        if not config.strategy.is_curve_strategy:
            curve_cfg = curve_cfg.pointwise()
        seed = derive_seed(
            config.seed, "training", client, self._dispatches[client]
        )
        self._dispatches[client] += 1
        return train_curve(
            spec=self.spec,
            theta_global=self.state.theta_at(origin),
            data=self.data.train[client],
            cfg=curve_cfg,
            seed=seed,
        )

    def _record_version(self, client=None, time=0.0, force_eval=False):
        state = self.state
        staleness = state.last_staleness
        row = {
            "version": state.version,
            "staleness": staleness.staleness if staleness else 0,
            "s_factor": staleness.s_factor if staleness else 1.0,
            "step": state.last_step,
            "time": time,
            "client": np.nan if client is None else client,
        }
        if state.version > 0:
            self._tail.append(state.theta)
        if force_eval or state.version % self.config.eval_every == 0:
            row.update(self._evaluate())
        self.record.add_round(**row)
        self.record.scale_clamps = state.scale_clamps
        self.record.step_clamps = state.step_clamps
        return {
            key: row[key]
            for key in ("s_factor", "step", "loss", "acc")
            if key in row
        }

    def _evaluate(self):
        pooled, per_client = metrics.evaluate(
            self.spec, self.state.theta, self.data.validation
        )
        best = self.record.best
        if not best or pooled["acc"] > best["acc"]:
            best.update(
                version=self.state.version,
                loss=pooled["loss"],
                acc=pooled["acc"],
                per_client_acc=[item["acc"] for item in per_client],
            )
        self._per_client = per_client
        return {"loss": pooled["loss"], "acc": pooled["acc"]}

    def _finalise(self):
        record = self.record
        last = record.rounds[-1]
        if not np.isfinite(last["acc"]):
            last.update(self._evaluate())
        record.final = {"loss": last["loss"], "acc": last["acc"]}
        record.per_client_final = list(self._per_client)
        record.gini, record.theil = metrics.fairness(
            record.best["per_client_acc"]
        )
        if self.config.swa_window:
            self._finalise_swa()
        logger.info("Finished %s", record)

    def _finalise_swa(self):
        window = self.config.swa_window
        if len(self._tail) < window:
            logger.warning(
                "Only %d models available for averaging window %d",
                len(self._tail),
                window,
            )
            window = len(self._tail)
        average = swa_tail_average(list(self._tail), window)
        pooled, _ = metrics.evaluate(self.spec, average, self.data.validation)
        self.record.swa = {"window": window, **pooled}


def run(cfg=None):
    """
    Run a simulation with the synthetic task of a configuration.

    Parameters
    ----------
    cfg : :class:`SimConfig`
        Configuration of the run

    Returns
    -------
    record : :class:`asyncbezier.entities.record.RunRecord`
        Results of the run

    """
    return Simulation(config=cfg).run()
