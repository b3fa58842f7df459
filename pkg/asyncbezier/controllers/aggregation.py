"""
*Server update rules.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

Whenever a client update arrives, the server combines it with the
current global model :math:`\\Theta^\\tau`. How this is done is the
defining difference between the strategies of asynchronous federated
optimisation compared by the asyncbezier package.


Update rules
============

Position step (FedAsync, FedGS, FedOrtho)
    The client's endpoint :math:`\\hat\\Theta = \\Theta^t + \\Delta C` is
    trusted as a position, and the global model is moved towards it:
    :math:`\\Theta^{\\tau+1} = \\Theta^\\tau + \\eta_g w_i (\\hat\\Theta -
    \\Theta^\\tau)`. FedGS and FedOrtho correct :math:`\\hat\\Theta -
    \\Theta^\\tau` with OrthoDC beforehand.

Tangent step (DC-ASGD)
    The client's displacement :math:`\\Delta C` is trusted as a
    direction, corrected for the delay, and applied at the current
    model: :math:`\\Theta^{\\tau+1} = \\Theta^\\tau + \\eta_g w_i
    \\pi(\\Delta C)`.

Buffered position step (FedBuff)
    Endpoints are collected until :math:`K` updates are available. Then,
    the weighted mean of their position steps is applied at once.

Curve step (AsyncBezier)
    The client's curve is corrected and re-based at :math:`\\Theta^\\tau`,
    yielding the curve :math:`\\psi`. The global model moves along
    :math:`\\psi` by the fraction :math:`S \\cdot w_i \\cdot \\eta_g` of
    its chord length (see :func:`asyncbezier.entities.curve.arc_step`).
    The staleness scale :math:`S` (:func:`staleness_scale`) modulates the
    step length of delayed updates.

Each rule is implemented as a function operating on a
:class:`GlobalState <asyncbezier.entities.state.GlobalState>`, and as
strategy class wrapping it. Strategy objects are obtained via
:class:`StrategyFactory`.

Meta-aggregation by stochastic weight averaging is available via
:func:`swa_tail_average`.


Module documentation
====================

"""

import logging
import sys

import numpy as np

from asyncbezier.controllers.correction import (
    CorrectionRuleFactory,
    Identity,
    apply_correction,
)
from asyncbezier.entities import params
from asyncbezier.entities.curve import BezierParams, arc_step, decasteljau
from asyncbezier.entities.state import StalenessInfo
from asyncbezier.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

#: Upper bound of the staleness scale.
S_MAX = 10.0

#: Lower bound of the staleness scale.
S_MIN = np.finfo(np.float64).tiny


def clamp_scale(scale=1.0):
    """
    Clamp a staleness scale to :math:`(0, S_\\text{max}]`.

    Parameters
    ----------
    scale : :class:`float`
        Unclamped staleness scale

    Returns
    -------
    scale : :class:`float`
        Clamped staleness scale

    clamped : :class:`bool`
        Whether the value had to be clamped

    """
    clamped_scale = min(max(scale, S_MIN), S_MAX)
    return clamped_scale, clamped_scale != scale


def staleness_scale(
    theta_t=None, theta_tau=None, theta_hat_tau=None, alpha=0.0
):
    """
    Scale of the step length of a (possibly) stale update.

    The scale compares the length of the proposed step to the distance
    the global model travelled while the client was training:

    .. math::

        S^{t,\\tau} = 1 + \\alpha\\left(\\frac{\\lVert\\Theta^\\tau -
        \\hat\\Theta^\\tau\\rVert}{\\lVert\\Theta^t - \\Theta^\\tau\\rVert}
        - 1\\right)

    Parameters
    ----------
    theta_t : :class:`numpy.ndarray`
        Model the client trained against

    theta_tau : :class:`numpy.ndarray`
        Current global model

    theta_hat_tau : :class:`numpy.ndarray`
        Endpoint of the corrected curve

    alpha : :class:`float`
        Decay strength in :math:`[0, 1]`

    Returns
    -------
    scale : :class:`float`
        Staleness scale, clamped to :math:`(0, S_\\text{max}]`. Exactly 1
        for :math:`\\alpha = 0` or if the global model did not move.

    """
    if not 0 <= alpha <= 1:
        raise ValueError("Need alpha in [0, 1].")
    scale, clamped = clamp_scale(
        _raw_staleness_scale(theta_t, theta_tau, theta_hat_tau, alpha)
    )
    if clamped:
        logger.warning("Staleness scale clamped to %g", scale)
    return scale


def _raw_staleness_scale(theta_t, theta_tau, theta_hat_tau, alpha):
    if alpha == 0:
        return 1.0
    drift = params.norm(np.asarray(theta_t) - np.asarray(theta_tau))
    if drift == 0.0:
        return 1.0
    step = params.norm(np.asarray(theta_tau) - np.asarray(theta_hat_tau))
    return 1.0 + alpha * (step / drift - 1.0)


def asyncbezier_apply(state=None, update=None, cfg=None, rule=None):
    """
    Move the global model along a client's corrected curve.

    Parameters
    ----------
    state : :class:`asyncbezier.entities.state.GlobalState`
        Server state, modified in place

    update : :class:`asyncbezier.entities.state.ClientUpdate`
        Client update

    cfg : :class:`asyncbezier.entities.state.StrategyConfig`
        Strategy configuration (``eta_g`` and ``alpha`` are used)

    rule : :class:`asyncbezier.controllers.correction.CorrectionRule`
        Correction rule. Defaults to the identity.

    Returns
    -------
    state : :class:`asyncbezier.entities.state.GlobalState`
        The updated server state, advanced by one version

    Raises
    ------
    DivergenceError
        Raised if the new global model is not finite.

    """
    theta_tau = state.theta
    theta_t = state.theta_at(update.origin_version)
    corrected = apply_correction(rule, update, theta_tau, theta_t)
    psi = BezierParams.point(theta_tau).displaced(corrected)
    psi.a = theta_tau.copy()
    theta_hat = decasteljau(psi, 1.0)
    scale = staleness_scale(theta_t, theta_tau, theta_hat, cfg.alpha)
    if scale in (S_MIN, S_MAX):
        state.scale_clamps += 1
    step = scale * update.weight * cfg.eta_g
    if step > 1.0:
        state.step_clamps += 1
        logger.warning("Curve step %g clamped to 1", step)
        step = 1.0
    if step > 0.0:
        theta_new = arc_step(theta_tau, psi, step)
    else:
        theta_new = theta_tau.copy()
    state.last_staleness = StalenessInfo(
        update.origin_version, state.version, scale
    )
    state.last_step = step
    state.last_curve = psi
    state.advance(theta_new)
    return state


def fedasync_apply(state=None, update=None, cfg=None, rule=None):
    """
    Move the global model towards a client's endpoint.

    Parameters
    ----------
    state : :class:`asyncbezier.entities.state.GlobalState`
        Server state, modified in place

    update : :class:`asyncbezier.entities.state.ClientUpdate`
        Client update. Only the endpoint displacement ``dc`` is used.

    cfg : :class:`asyncbezier.entities.state.StrategyConfig`
        Strategy configuration (``eta_g`` is used)

    rule : :class:`asyncbezier.controllers.correction.CorrectionRule`
        Correction applied to the position step. FedGS and FedOrtho use
        OrthoDC here. Defaults to the identity.

    Returns
    -------
    state : :class:`asyncbezier.entities.state.GlobalState`
        The updated server state, advanced by one version

    """
    theta_tau = state.theta
    theta_t = state.theta_at(update.origin_version)
    delta = resolve_endpoint(state, update) - theta_tau
    if rule is not None:
        delta = rule.correct_vector(delta, theta_tau, theta_t)
    step = cfg.eta_g * update.weight
    state.last_staleness = StalenessInfo(update.origin_version, state.version)
    state.last_step = step
    state.advance(theta_tau + step * delta)
    return state


def dcasgd_apply(state=None, update=None, cfg=None, rule=None):
    """
    Apply a client's delay-compensated displacement at the global model.

    Parameters
    ----------
    state : :class:`asyncbezier.entities.state.GlobalState`
        Server state, modified in place

    update : :class:`asyncbezier.entities.state.ClientUpdate`
        Client update. Only the endpoint displacement ``dc`` is used.

    cfg : :class:`asyncbezier.entities.state.StrategyConfig`
        Strategy configuration (``eta_g`` is used)

    rule : :class:`asyncbezier.controllers.correction.CorrectionRule`
        Delay compensation, usually
        :class:`asyncbezier.controllers.correction.DCASGD`

    Returns
    -------
    state : :class:`asyncbezier.entities.state.GlobalState`
        The updated server state, advanced by one version

    """
    if rule is None:
        rule = Identity()
    theta_tau = state.theta
    theta_t = state.theta_at(update.origin_version)
    delta = rule.correct_vector(update.reparam.dc, theta_tau, theta_t)
    step = cfg.eta_g * update.weight
    state.last_staleness = StalenessInfo(update.origin_version, state.version)
    state.last_step = step
    state.advance(theta_tau + step * delta)
    return state


def resolve_endpoint(state=None, update=None):
    """
    Client endpoint expressed in absolute parameters.

    The endpoint :math:`\\hat\\Theta = \\Theta^t + \\Delta C` is computed
    once and cached on the update, as buffered updates may outlive the
    model they originate from in the history.

    Parameters
    ----------
    state : :class:`asyncbezier.entities.state.GlobalState`
        Server state

    update : :class:`asyncbezier.entities.state.ClientUpdate`
        Client update

    Returns
    -------
    endpoint : :class:`numpy.ndarray`
        Learned endpoint of the client

    """
    if update.endpoint is None:
        theta_t = state.theta_at(update.origin_version)
        update.endpoint = theta_t + update.reparam.dc
    return update.endpoint


def fedbuff_apply(buffer=None, state=None, cfg=None):
    """
    Apply the weighted mean of buffered position steps.

    Parameters
    ----------
    buffer : :class:`list`
        Buffered :class:`asyncbezier.entities.state.ClientUpdate` objects
        with resolved endpoints (see :func:`resolve_endpoint`)

    state : :class:`asyncbezier.entities.state.GlobalState`
        Server state, modified in place

    cfg : :class:`asyncbezier.entities.state.StrategyConfig`
        Strategy configuration (``eta_g`` is used)

    Returns
    -------
    state : :class:`asyncbezier.entities.state.GlobalState`
        The updated server state, advanced by one version

    Raises
    ------
    ValueError
        Raised if the buffer is empty or its weights sum to zero.

    """
    if not buffer:
        raise ValueError("Need buffered updates to apply.")
    weights = np.array([update.weight for update in buffer])
    if weights.sum() <= 0:
        raise ValueError("Need positive total weight of buffered updates.")
    theta_tau = state.theta
    delta = params.zeros(theta_tau.shape[0])
    for weight, update in zip(weights, buffer):
        delta += weight * (resolve_endpoint(state, update) - theta_tau)
    delta /= weights.sum()
    state.last_staleness = StalenessInfo(
        min(update.origin_version for update in buffer), state.version
    )
    state.last_step = cfg.eta_g
    state.advance(theta_tau + cfg.eta_g * delta)
    return state


def swa_tail_average(history=None, window=1):
    """
    Mean of the most recent global models.

    Parameters
    ----------
    history : :class:`list`
        Global models, oldest first

    window : :class:`int`
        Number of most recent models to average

    Returns
    -------
    average : :class:`numpy.ndarray`
        Arithmetic mean of the last ``window`` models

    Raises
    ------
    ValueError
        Raised if the window is not positive or exceeds the history.

    """
    if window < 1:
        raise ValueError("Need a positive averaging window.")
    if history is None or len(history) < window:
        raise ValueError("Need at least as many models as the window.")
    return np.mean(np.stack(list(history)[-window:]), axis=0)


class Strategy:
    """
    Base class of server strategies.

    A strategy receives client updates one by one and decides when and
    how the global model is updated.

    Attributes
    ----------
    config : :class:`asyncbezier.entities.state.StrategyConfig`
        Strategy configuration

    rule : :class:`asyncbezier.controllers.correction.CorrectionRule`
        Correction rule applied to stale updates

    """

    def __init__(self, config=None, rule=None):
        self.config = config
        if rule is None:
            rule = CorrectionRuleFactory().from_strategy(config)
        self.rule = rule

    def __str__(self):
        return f"{self.config.name} <{type(self).__name__}>"

    def receive(self, state=None, update=None):
        """
        Process an arriving client update.

        Parameters
        ----------
        state : :class:`asyncbezier.entities.state.GlobalState`
            Server state, modified in place

        update : :class:`asyncbezier.entities.state.ClientUpdate`
            Client update

        Returns
        -------
        advanced : :class:`bool`
            Whether the global model advanced to a new version

        """
        self._apply(state, update)
        return True

    def finish(self, state=None):
        """
        Process pending updates at the end of a run.

        Parameters
        ----------
        state : :class:`asyncbezier.entities.state.GlobalState`
            Server state, modified in place

        Returns
        -------
        advanced : :class:`bool`
            Whether the global model advanced to a new version

        """
        return False

    def _apply(self, state, update):
        raise NotImplementedError


class FedAsyncStrategy(Strategy):
    """Position step, optionally corrected (FedAsync, FedGS, FedOrtho)."""

    def _apply(self, state, update):
        fedasync_apply(state, update, self.config, self.rule)


class DCASGDStrategy(Strategy):
    """Delay-compensated tangent step."""

    def _apply(self, state, update):
        dcasgd_apply(state, update, self.config, self.rule)


class AsyncBezierStrategy(Strategy):
    """Step along the corrected client curve."""

    def _apply(self, state, update):
        asyncbezier_apply(state, update, self.config, self.rule)


class FedBuffStrategy(Strategy):
    """
    Buffered position steps.

    Attributes
    ----------
    buffer : :class:`list`
        Updates received since the last flush

    """

    def __init__(self, config=None, rule=None):
        super().__init__(config=config, rule=rule)
        self.buffer = []

    def receive(self, state=None, update=None):
        """
        Buffer an update and flush once the buffer is full.

        Parameters
        ----------
        state : :class:`asyncbezier.entities.state.GlobalState`
            Server state, modified in place when flushing

        update : :class:`asyncbezier.entities.state.ClientUpdate`
            Client update

        Returns
        -------
        advanced : :class:`bool`
            Whether the buffer was flushed

        """
        resolve_endpoint(state, update)
        self.buffer.append(update)
        if len(self.buffer) < self.config.buffer_k:
            return False
        self._flush(state)
        return True

    def finish(self, state=None):
        """
        Flush a partially filled buffer.

        Parameters
        ----------
        state : :class:`asyncbezier.entities.state.GlobalState`
            Server state, modified in place

        Returns
        -------
        advanced : :class:`bool`
            Whether any updates were pending

        """
        if not self.buffer:
            return False
        logger.warning(
            "Flushing partial buffer of %d/%d updates",
            len(self.buffer),
            self.config.buffer_k,
        )
        self._flush(state)
        return True

    def _flush(self, state):
        buffer, self.buffer = self.buffer, []
        fedbuff_apply(buffer, state, self.config)


class StrategyFactory:
    """
    Factory for server strategies.

    Examples
    --------
    .. code-block::

        config = StrategyConfig.from_name("fedortho", eta_g=3.0)
        strategy = StrategyFactory().get_strategy(config)

    """

    names = {
        "fedasync": "FedAsyncStrategy",
        "fedgs": "FedAsyncStrategy",
        "fedortho": "FedAsyncStrategy",
        "dcasgd": "DCASGDStrategy",
        "fedbuff": "FedBuffStrategy",
        "asyncbezier": "AsyncBezierStrategy",
    }

    def get_strategy(self, config=None):
        """
        Create the strategy for a configuration.

        Parameters
        ----------
        config : :class:`asyncbezier.entities.state.StrategyConfig`
            Strategy configuration

        Returns
        -------
        strategy : :class:`Strategy`
            Strategy object with its correction rule

        Raises
        ------
        ConfigurationError
            Raised for unknown strategy kinds.

        """
        if config.kind not in self.names:
            message = f"Unknown strategy '{config.kind}'"
            logger.error(message)
            raise ConfigurationError(message, key="kind")
        return getattr(sys.modules[__name__], self.names[config.kind])(
            config=config
        )
