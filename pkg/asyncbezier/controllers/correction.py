"""
*Correcting stale client updates.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

A client trains against :math:`\\Theta^t`, but by the time its update
arrives, the server has moved on to :math:`\\Theta^\\tau`. The
difference, the *global drift* :math:`\\Delta^g`, is known to the server.
A correction rule maps the stale update to one that better fits the
current global model.


Correction rules
================

Identity
    The update is used as is.

OrthoDC
    If the update :math:`\\Delta` does not agree sufficiently with the
    drift, *i.e.* the cosine of the angle between both is at most
    :math:`\\vartheta`, the component of the update along the drift is
    removed:

    .. math::

        \\pi(\\Delta) = \\Delta - \\frac{\\langle\\Delta, \\Delta^g\\rangle}
        {\\langle\\Delta^g, \\Delta^g\\rangle} \\Delta^g

    With :math:`\\vartheta = 0`, only conflicting updates are projected
    (classical gradient surgery), with :math:`\\vartheta = 1`, all
    updates are orthogonalised against the drift.

    For curves, update and drift are the flattened concatenations over
    the three control points, the drift being :math:`\\Theta^\\tau -
    \\Theta^t` repeated three times. Alternatively, each control point
    may be tested and projected on its own (``per_block``).

DC-ASGD
    The stale (pseudo-)gradient :math:`g` is compensated by a first
    order Taylor expansion, using :math:`g \\odot g` as diagonal estimate
    of the Hessian:

    .. math::

        g + \\lambda\\, g \\odot g \\odot (\\Theta^\\tau - \\Theta^t)

    Client displacements :math:`d` are turned into pseudo-gradients
    :math:`g = -d` and back.

Rules are created by name using :class:`CorrectionRuleFactory`.


Module documentation
====================

"""

import logging
import sys

import numpy as np

from asyncbezier.entities import params
from asyncbezier.entities.curve import ReparamVector
from asyncbezier.exceptions import ConfigurationError

logger = logging.getLogger(__name__)

#: Decay of the moving average of squared pseudo-gradients.
EMA_DECAY = 0.95

#: Added to the moving average before normalising the DC-ASGD strength.
EMA_EPSILON = 1e-8


class DriftVector:
    """
    Displacement of the global model while a client was training.

    Attributes
    ----------
    dg : :class:`numpy.ndarray`
        Drift of the global model, :math:`\\Theta^\\tau - \\Theta^t`

    flat : :class:`numpy.ndarray`
        Drift of the point curve, *i.e.* :attr:`dg` repeated once per
        control point

    """

    def __init__(self, dg=None, n_blocks=3):
        self.dg = params.as_param_vector(dg)
        self.flat = np.tile(self.dg, n_blocks)

    @classmethod
    def from_models(cls, theta_then=None, theta_now=None):
        """
        Create the drift between two global models.

        Parameters
        ----------
        theta_then : :class:`numpy.ndarray`
            Model :math:`\\Theta^t` the client trained against

        theta_now : :class:`numpy.ndarray`
            Current model :math:`\\Theta^\\tau`

        Returns
        -------
        drift : :class:`DriftVector`
            Drift from ``theta_then`` to ``theta_now``

        """
        params.check_dimensions(theta_then, theta_now)
        return cls(dg=np.asarray(theta_now) - np.asarray(theta_then))

    def is_zero(self):
        """
        Whether the global model did not move.

        Returns
        -------
        zero : :class:`bool`
            True if all entries are zero

        """
        return not np.any(self.dg)


def orthodc(delta=None, drift=None, vartheta=1.0):
    """
    Remove the component of an update along the drift, if conflicting.

    Parameters
    ----------
    delta : :class:`numpy.ndarray`
        (Flattened) update

    drift : :class:`numpy.ndarray`
        (Flattened) drift of the same dimension

    vartheta : :class:`float`
        Cosine threshold in :math:`[-1, 1]`. The projection is applied if
        the cosine between update and drift is at most ``vartheta``.

    Returns
    -------
    corrected : :class:`numpy.ndarray`
        Projected update, or a copy of the update

    Raises
    ------
    DimensionError
        Raised if update and drift differ in dimension.

    ValueError
        Raised if ``vartheta`` is outside :math:`[-1, 1]`.

    """
    if not -1 <= vartheta <= 1:
        raise ValueError("Need vartheta in [-1, 1].")
    delta = np.asarray(delta, dtype=np.float64)
    params.check_dimensions(delta, drift)
    if not np.any(drift):
        return delta.copy()
    if params.cosine(delta, drift) <= vartheta:
        return delta - params.project_onto(delta, drift)
    return delta.copy()


class DCASGDState:
    """
    Moving average of squared pseudo-gradients for adaptive DC-ASGD.

    The state is owned by the server and updated once per correction.

    Attributes
    ----------
    ema : :class:`numpy.ndarray` | :obj:`None`
        Exponential moving average of :math:`g \\odot g`, :obj:`None`
        before the first update

    decay : :class:`float`
        Decay of the moving average

    """

    def __init__(self, decay=EMA_DECAY):
        self.ema = None
        self.decay = decay

    def update(self, gradient=None):
        """
        Incorporate a new pseudo-gradient.

        The first gradient initialises the average.

        Parameters
        ----------
        gradient : :class:`numpy.ndarray`
            Pseudo-gradient

        """
        squared = np.asarray(gradient) ** 2
        if self.ema is None:
            self.ema = squared
        else:
            self.ema = self.decay * self.ema + (1 - self.decay) * squared

    def strength(self, lambda0=2.0):
        """
        Normalised compensation strength.

        Parameters
        ----------
        lambda0 : :class:`float`
            Base strength

        Returns
        -------
        strength : :class:`float`
            :math:`\\lambda_0 / (\\varepsilon + \\overline{\\text{EMA}})`

        """
        return lambda0 / (EMA_EPSILON + float(np.mean(self.ema)))


def dcasgd_correct(
    g=None, theta_now=None, theta_then=None, lambda0=2.0, state=None
):
    """
    Compensate a stale (pseudo-)gradient for the delay.

    Parameters
    ----------
    g : :class:`numpy.ndarray`
        Stale (pseudo-)gradient

    theta_now : :class:`numpy.ndarray`
        Current global model :math:`\\Theta^\\tau`

    theta_then : :class:`numpy.ndarray`
        Model :math:`\\Theta^t` the gradient was computed at

    lambda0 : :class:`float`
        Strength of the compensation

    state : :class:`DCASGDState` | :obj:`None`
        If given, the strength is normalised by the moving average of
        squared gradients (adaptive mode). The state is updated before
        being used.

    Returns
    -------
    corrected : :class:`numpy.ndarray`
        :math:`g + \\lambda\\, g \\odot g \\odot (\\Theta^\\tau - \\Theta^t)`

    """
    g = np.asarray(g, dtype=np.float64)
    params.check_dimensions(g, theta_now, theta_then)
    strength = lambda0
    if state is not None:
        state.update(g)
        strength = state.strength(lambda0)
    delay = np.asarray(theta_now) - np.asarray(theta_then)
    return g + strength * g * g * delay


class CorrectionRule:
    """
    Base class for correction rules.

    Subclasses implement :meth:`_correct`. The public :meth:`correct`
    method takes care of resolving the drift and of the identity at
    zero delay.

    Attributes
    ----------
    kind : :class:`str`
        Name of the rule

    """

    kind = ""

    def __str__(self):
        return f"{self.kind} <{type(self).__name__}>"

    def correct(self, reparam=None, theta_now=None, theta_then=None):
        """
        Correct a stale reparametrisation vector.

        Parameters
        ----------
        reparam : :class:`asyncbezier.entities.curve.ReparamVector`
            Update as sent by the client

        theta_now : :class:`numpy.ndarray`
            Current global model :math:`\\Theta^\\tau`

        theta_then : :class:`numpy.ndarray`
            Model :math:`\\Theta^t` the client trained against

        Returns
        -------
        corrected : :class:`asyncbezier.entities.curve.ReparamVector`
            Corrected update, to be applied at :math:`\\Theta^\\tau`

        """
        drift = DriftVector.from_models(theta_then, theta_now)
        params.check_dimensions(reparam.da, drift.dg)
        return self._correct(reparam, theta_now, theta_then, drift)

    def correct_vector(self, delta=None, theta_now=None, theta_then=None):
        """
        Correct a single displacement, *e.g.* a client's endpoint step.

        Parameters
        ----------
        delta : :class:`numpy.ndarray`
            Displacement

        theta_now : :class:`numpy.ndarray`
            Current global model :math:`\\Theta^\\tau`

        theta_then : :class:`numpy.ndarray`
            Model :math:`\\Theta^t` the client trained against

        Returns
        -------
        corrected : :class:`numpy.ndarray`
            Corrected displacement

        """
        drift = DriftVector.from_models(theta_then, theta_now)
        params.check_dimensions(delta, drift.dg)
        return self._correct_vector(delta, theta_now, theta_then, drift)

    def _correct(self, reparam, theta_now, theta_then, drift):
        return ReparamVector(
            *[
                self._correct_vector(block, theta_now, theta_then, drift)
                for block in reparam.blocks
            ]
        )

    def _correct_vector(self, delta, theta_now, theta_then, drift):
        return np.array(delta, dtype=np.float64)


class Identity(CorrectionRule):
    """Leave updates unchanged."""

    kind = "identity"


class OrthoDC(CorrectionRule):
    """
    Orthogonalise updates against the global drift.

    Attributes
    ----------
    vartheta : :class:`float`
        Cosine threshold in :math:`[-1, 1]`

    per_block : :class:`bool`
        If True, each control point displacement is tested and projected
        against the drift of its own. Otherwise, a single test on the
        flattened vectors decides for all three.

    """

    kind = "orthodc"

    def __init__(self, vartheta=1.0, per_block=False):
        if not -1 <= vartheta <= 1:
            raise ConfigurationError(
                "Need vartheta in [-1, 1]", key="vartheta"
            )
        self.vartheta = vartheta
        self.per_block = per_block

    def _correct(self, reparam, theta_now, theta_then, drift):
        if self.per_block:
            return super()._correct(reparam, theta_now, theta_then, drift)
        flat = orthodc(reparam.flatten(), drift.flat, self.vartheta)
        return ReparamVector.from_flat(flat)

    def _correct_vector(self, delta, theta_now, theta_then, drift):
        return orthodc(delta, drift.dg, self.vartheta)


class DCASGD(CorrectionRule):
    """
    Delay compensation with a diagonal Hessian estimate.

    Displacements are converted to pseudo-gradients by negation,
    compensated, and converted back.

    Attributes
    ----------
    lambda0 : :class:`float`
        Strength of the compensation

    adaptive : :class:`bool`
        Whether to normalise the strength by a moving average of squared
        pseudo-gradients

    state : :class:`DCASGDState` | :obj:`None`
        Moving average, used in adaptive mode only

    """

    kind = "dcasgd"

    def __init__(self, lambda0=2.0, adaptive=False):
        self.lambda0 = lambda0
        self.adaptive = adaptive
        self.state = DCASGDState() if adaptive else None

    def _correct(self, reparam, theta_now, theta_then, drift):
        # A does not move, hence only B and C feed the moving average.
        strength = self._strength(-np.concatenate([reparam.db, reparam.dc]))
        return ReparamVector(
            *[
                self._compensate(block, theta_now, theta_then, strength)
                for block in reparam.blocks
            ]
        )

    def _correct_vector(self, delta, theta_now, theta_then, drift):
        strength = self._strength(-np.asarray(delta, dtype=np.float64))
        return self._compensate(delta, theta_now, theta_then, strength)

    def _strength(self, pseudo_gradient):
        if self.state is None:
            return self.lambda0
        self.state.update(pseudo_gradient)
        return self.state.strength(self.lambda0)

    @staticmethod
    def _compensate(delta, theta_now, theta_then, strength):
        pseudo_gradient = -np.asarray(delta, dtype=np.float64)
        corrected = dcasgd_correct(
            g=pseudo_gradient,
            theta_now=theta_now,
            theta_then=theta_then,
            lambda0=strength,
        )
        return -corrected


class CorrectionRuleFactory:
    """
    Factory for correction rules.

    Examples
    --------
    .. code-block::

        factory = CorrectionRuleFactory()
        rule = factory.get_rule("orthodc", vartheta=0.0)

    """

    names = {"identity": "Identity", "orthodc": "OrthoDC", "dcasgd": "DCASGD"}

    def get_rule(self, kind="identity", **kwargs):
        """
        Create a correction rule by name.

        Parameters
        ----------
        kind : :class:`str`
            Name of the rule: ``identity``, ``orthodc``, or ``dcasgd``

        **kwargs
            Hyperparameters of the rule

        Returns
        -------
        rule : :class:`CorrectionRule`
            Correction rule

        Raises
        ------
        ConfigurationError
            Raised for unknown rules.

        """
        if kind not in self.names:
            message = f"Unknown correction rule '{kind}'"
            logger.error(message)
            raise ConfigurationError(message, key="correction")
        return getattr(sys.modules[__name__], self.names[kind])(**kwargs)

    def from_strategy(self, strategy=None):
        """
        Create the correction rule configured for a strategy.

        Parameters
        ----------
        strategy : :class:`asyncbezier.entities.state.StrategyConfig`
            Strategy configuration

        Returns
        -------
        rule : :class:`CorrectionRule`
            Correction rule

        """
        kwargs = {}
        if strategy.correction == "orthodc":
            kwargs = {
                "vartheta": strategy.vartheta,
                "per_block": strategy.per_block,
            }
        elif strategy.correction == "dcasgd":
            kwargs = {
                "lambda0": strategy.lambda0,
                "adaptive": strategy.adaptive,
            }
        return self.get_rule(strategy.correction, **kwargs)


def apply_correction(rule=None, update=None, theta_now=None, theta_then=None):
    """
    Correct the update of a client for its staleness.

    Parameters
    ----------
    rule : :class:`CorrectionRule`
        Correction rule

    update : :class:`asyncbezier.entities.state.ClientUpdate`
        Update as sent by the client

    theta_now : :class:`numpy.ndarray`
        Current global model :math:`\\Theta^\\tau`

    theta_then : :class:`numpy.ndarray`
        Model :math:`\\Theta^t` the client trained against

    Returns
    -------
    corrected : :class:`asyncbezier.entities.curve.ReparamVector`
        Corrected update, to be re-based at :math:`\\Theta^\\tau`

    """
    if rule is None:
        rule = Identity()
    return rule.correct(update.reparam, theta_now, theta_then)
