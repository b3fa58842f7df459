"""
*Server-side state and the messages exchanged with clients.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

The server holds the current global model :math:`\\Theta^\\tau`, its
version :math:`\\tau`, and enough of its past to correct stale updates:
a client that received :math:`\\Theta^t` and reports back while the
server is at :math:`\\tau > t` needs :math:`\\Theta^t` to be known at
arrival time. All this is contained in :class:`GlobalState`.

Clients report back with a :class:`ClientUpdate`. Which update rule the
server applies is described by a :class:`StrategyConfig`.


Strategies
==========

The following strategies are available by name, with their defaults
defined in :data:`ROSTER`:

``fedasync``
    Position step towards the client's endpoint

``fedgs``, ``fedortho``
    FedAsync with the update projected against the global drift if it
    conflicts with it (:math:`\\vartheta=0`) or unless it is aligned with
    it (:math:`\\vartheta=1`)

``dcasgd``
    Tangent step with delay compensation

``fedbuff``
    Buffered position steps, averaging :math:`K` updates

``asyncbezier``, ``asyncbezier-ed``
    Step along the client's (corrected) curve, without and with
    staleness-dependent step scaling


Module documentation
====================

"""

import logging

import numpy as np

from asyncbezier.entities import params
from asyncbezier.exceptions import (
    ConfigurationError,
    DivergenceError,
    HistoryError,
)

logger = logging.getLogger(__name__)

STRATEGY_KINDS = (
    "fedasync",
    "fedgs",
    "fedortho",
    "dcasgd",
    "fedbuff",
    "asyncbezier",
)

CORRECTION_KINDS = ("identity", "orthodc", "dcasgd")

#: Named strategies and the settings deviating from the defaults.
ROSTER = {
    "fedasync": {"kind": "fedasync"},
    "fedgs": {"kind": "fedgs", "correction": "orthodc", "vartheta": 0.0},
    "fedortho": {
        "kind": "fedortho",
        "correction": "orthodc",
        "vartheta": 1.0,
    },
    "dcasgd": {"kind": "dcasgd", "correction": "dcasgd"},
    "fedbuff": {"kind": "fedbuff", "buffer_k": 10},
    "asyncbezier": {"kind": "asyncbezier", "correction": "orthodc"},
    "asyncbezier-ed": {
        "kind": "asyncbezier",
        "correction": "orthodc",
        "alpha": 1.0,
    },
}


class StrategyConfig:
    """
    Server update rule and its hyperparameters.

    Attributes
    ----------
    name : :class:`str`
        Name of the strategy, used for labelling results

    kind : :class:`str`
        Update rule, one of :data:`STRATEGY_KINDS`

    eta_g : :class:`float`
        Global learning rate :math:`\\eta_g`

        Default: 1.0

    client_weighting : :class:`str`
        ``proportional`` or ``uniform``

        Default: "proportional"

    alpha : :class:`float`
        Decay strength of the staleness scaling (``asyncbezier`` only)

        Default: 0.0

    vartheta : :class:`float`
        Cosine threshold of the OrthoDC correction

        Default: 1.0

    correction : :class:`str`
        Correction rule applied to stale updates, one of
        :data:`CORRECTION_KINDS`

        Default: "identity"

    per_block : :class:`bool`
        Whether OrthoDC tests and projects each control point separately

        Default: False

    lambda0 : :class:`float`
        Strength of the DC-ASGD delay compensation

        Default: 2.0

    adaptive : :class:`bool`
        Whether the DC-ASGD strength is normalised by a moving average
        of squared pseudo-gradients

        Default: False

    buffer_k : :class:`int`
        Number of updates buffered before a FedBuff step

        Default: 10


    Raises
    ------
    ConfigurationError
        Raised for unknown kinds or values outside their ranges.

    """

    def __init__(
        self,
        kind="fedasync",
        name=None,
        eta_g=1.0,
        client_weighting="proportional",
        alpha=0.0,
        vartheta=1.0,
        correction="identity",
        per_block=False,
        lambda0=2.0,
        adaptive=False,
        buffer_k=10,
    ):
        if kind not in STRATEGY_KINDS:
            raise ConfigurationError(f"Unknown strategy '{kind}'", key="kind")
        if correction not in CORRECTION_KINDS:
            raise ConfigurationError(
                f"Unknown correction '{correction}'", key="correction"
            )
        if eta_g < 0:
            raise ConfigurationError("Need eta_g >= 0", key="eta_g")
        if not 0 <= alpha <= 1:
            raise ConfigurationError("Need alpha in [0, 1]", key="alpha")
        if not -1 <= vartheta <= 1:
            raise ConfigurationError(
                "Need vartheta in [-1, 1]", key="vartheta"
            )
        if buffer_k < 1:
            raise ConfigurationError("Need buffer_k >= 1", key="buffer_k")
        if client_weighting not in ("proportional", "uniform"):
            raise ConfigurationError(
                f"Unknown client weighting '{client_weighting}'",
                key="client_weighting",
            )
        self.name = name or kind
        self.kind = kind
        self.eta_g = float(eta_g)
        self.client_weighting = client_weighting
        self.alpha = float(alpha)
        self.vartheta = float(vartheta)
        self.correction = correction
        self.per_block = bool(per_block)
        self.lambda0 = float(lambda0)
        self.adaptive = bool(adaptive)
        self.buffer_k = int(buffer_k)

    def __str__(self):
        return f"{self.name} <{type(self).__name__}: eta_g {self.eta_g}>"

    @classmethod
    def from_name(cls, name="fedasync", **kwargs):
        """
        Create the configuration of a named strategy.

        Parameters
        ----------
        name : :class:`str`
            Name of a strategy in :data:`ROSTER`

        **kwargs
            Settings overriding the strategy's defaults

        Returns
        -------
        config : :class:`StrategyConfig`
            Configuration of the named strategy

        Raises
        ------
        ConfigurationError
            Raised if the name is unknown.

        """
        if name not in ROSTER:
            raise ConfigurationError(f"Unknown strategy '{name}'", key="name")
        settings = dict(ROSTER[name])
        settings.update(kwargs)
        settings["name"] = name
        return cls(**settings)

    def to_dict(self):
        """
        Configuration as dict.

        Returns
        -------
        config : :class:`dict`
            Keyword arguments recreating the configuration.

        """
        return dict(vars(self))

    @property
    def is_curve_strategy(self):
        """
        Whether clients of this strategy train curves.

        Returns
        -------
        curve : :class:`bool`
            True for ``asyncbezier`` strategies.

        """
        return self.kind == "asyncbezier"


class ClientUpdate:
    """
    Message of a client to the server.

    Attributes
    ----------
    client : :class:`int`
        Client index

    origin_version : :class:`int`
        Version :math:`t` of the global model the client trained against

    reparam : :class:`asyncbezier.entities.curve.ReparamVector`
        Displacement of the learned curve with respect to the point curve
        at :math:`\\Theta^t`

    weight : :class:`float`
        Client weight :math:`w_i`

    dispatch_time : :class:`float`
        Simulated time the client received the global model

    arrival_time : :class:`float`
        Simulated time the update reaches the server

    endpoint : :class:`numpy.ndarray` | :obj:`None`
        Learned endpoint :math:`\\Theta^t + \\Delta C`, if resolved by the
        server. Used by buffering strategies.

    """

    def __init__(
        self,
        client=0,
        origin_version=0,
        reparam=None,
        weight=1.0,
        dispatch_time=0.0,
        arrival_time=0.0,
    ):
        self.client = client
        self.origin_version = int(origin_version)
        self.reparam = reparam
        self.weight = float(weight)
        self.dispatch_time = float(dispatch_time)
        self.arrival_time = float(arrival_time)
        self.endpoint = None

    def __str__(self):
        return (
            f"client {self.client} <{type(self).__name__}: "
            f"version {self.origin_version}>"
        )


class StalenessInfo:
    """
    Staleness of an update at the time it is applied.

    Attributes
    ----------
    t_origin : :class:`int`
        Version the client trained against

    tau_now : :class:`int`
        Version of the server when applying the update

    s_factor : :class:`float`
        Staleness scale applied to the step

    """

    def __init__(self, t_origin=0, tau_now=0, s_factor=1.0):
        self.t_origin = int(t_origin)
        self.tau_now = int(tau_now)
        self.s_factor = float(s_factor)

    @property
    def staleness(self):
        """
        Version gap between origin and application.

        Returns
        -------
        staleness : :class:`int`
            :math:`\\tau - t`

        """
        return self.tau_now - self.t_origin


class ModelHistory:
    """
    Past global models, addressable by version.

    Only versions that are still needed are kept: the simulation calls
    :meth:`prune` with the oldest version a client in flight trained
    against.

    Attributes
    ----------
    models : :class:`dict`
        Parameter vectors keyed by version

    """

    def __init__(self):
        self.models = {}

    def __len__(self):
        return len(self.models)

    def __contains__(self, version):
        return version in self.models

    def add(self, version=0, theta=None):
        """
        Add the model of a version.

        Parameters
        ----------
        version : :class:`int`
            Version of the model

        theta : :class:`numpy.ndarray`
            Parameter vector. Stored without copying.

        """
        self.models[int(version)] = theta

    def get(self, version=0):
        """
        Model of a given version.

        Parameters
        ----------
        version : :class:`int`
            Version of the model

        Returns
        -------
        theta : :class:`numpy.ndarray`
            Parameter vector

        Raises
        ------
        HistoryError
            Raised if the version is no longer (or not yet) present.

        """
        try:
            return self.models[int(version)]
        except KeyError as error:
            message = f"Version {version} not in model history"
            logger.error(message)
            raise HistoryError(message) from error

    def prune(self, oldest_needed=0):
        """
        Remove all models older than a given version.

        Parameters
        ----------
        oldest_needed : :class:`int`
            Oldest version still needed

        """
        for version in [item for item in self.models if item < oldest_needed]:
            del self.models[version]


class GlobalState:
    """
    State of the server: current model, version, and history.

    Attributes
    ----------
    theta : :class:`numpy.ndarray`
        Current global model :math:`\\Theta^\\tau`

    version : :class:`int`
        Version :math:`\\tau` of the current global model

    history : :class:`ModelHistory`
        Past global models, including the current one

    per_client_origin : :class:`dict`
        Version of the model each client in flight trained against

    last_staleness : :class:`StalenessInfo` | :obj:`None`
        Staleness of the most recently applied update

    last_step : :class:`float`
        Step length (fraction of the chord or interpolation weight) of
        the most recently applied update

    scale_clamps : :class:`int`
        Number of times the staleness scale was clamped

    step_clamps : :class:`int`
        Number of times the step length was clamped

    last_curve : :class:`asyncbezier.entities.curve.BezierParams`
        Corrected curve most recently stepped along, :obj:`None` for
        strategies not training curves


    Parameters
    ----------
    theta : array_like
        Initial global model


    Examples
    --------
    .. code-block::

        state = GlobalState(theta=np.zeros(3))
        state.advance(np.ones(3))
        state.version               # 1
        state.history.get(0)        # array([0., 0., 0.])

    """

    def __init__(self, theta=None):
        self.theta = params.as_param_vector(theta)
        self.version = 0
        self.history = ModelHistory()
        self.history.add(self.version, self.theta)
        self.per_client_origin = {}
        self.last_staleness = None
        self.last_step = 0.0
        self.scale_clamps = 0
        self.step_clamps = 0
        self.last_curve = None

    def __str__(self):
        return f"version {self.version} <{type(self).__name__}>"

    def advance(self, theta=None):
        """
        Replace the global model by its next version.

        Parameters
        ----------
        theta : :class:`numpy.ndarray`
            New global model

        Raises
        ------
        DivergenceError
            Raised if the new model contains non-finite values. The state
            is left unchanged in this case.

        """
        try:
            params.check_finite(theta, context="global model")
        except DivergenceError as error:
            error.version = self.version + 1
            logger.error("Global model diverged at version %d", error.version)
            raise
        params.check_dimensions(self.theta, theta)
        self.theta = np.asarray(theta, dtype=np.float64)
        self.version += 1
        self.history.add(self.version, self.theta)

    def theta_at(self, version=0):
        """
        Global model of a past (or the current) version.

        Parameters
        ----------
        version : :class:`int`
            Version of the model

        Returns
        -------
        theta : :class:`numpy.ndarray`
            Parameter vector

        """
        return self.history.get(version)

    def dispatch(self, client=0):
        """
        Record the current version as origin of a client's next update.

        Parameters
        ----------
        client : :class:`int`
            Client index

        Returns
        -------
        version : :class:`int`
            Current version

        """
        self.per_client_origin[client] = self.version
        return self.version

    def prune_history(self):
        """Drop all models no client in flight depends on."""
        oldest = min(self.per_client_origin.values(), default=self.version)
        self.history.prune(min(oldest, self.version))
