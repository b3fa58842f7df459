"""
*Client-side training of Bézier curves.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

Each client receives a snapshot :math:`\\Theta^t` of the global model and
learns a quadratic Bézier curve starting at this snapshot. The objective
is the expected (proximal) client loss along the curve,

.. math::

    \\min_\\phi \\mathbb{E}_{S \\sim P} \\left[\\ell_i(\\iota_\\phi(S)) +
    \\frac{\\mu}{2} \\lVert \\iota_\\phi(S) - \\Theta^t \\rVert^2\\right],

where the sampling distribution :math:`P` changes during training.


Two training phases
===================

Endpoint phase
    For ``k_sgd`` epochs, the curve is only sampled at :math:`t=1`. Hence,
    only the endpoint :math:`C` receives gradients, and training is plain
    (proximal) SGD on a single model starting at :math:`\\Theta^t`. This
    forces movement away from the global model.

Curve phase
    At its beginning, :math:`B` is (re)initialised according to
    ``b_init``. Afterwards, for ``k_curve`` epochs, one curve parameter
    :math:`t \\sim \\mathcal{U}[0, 1]` is drawn per minibatch (or several,
    see ``samples_per_batch_draw``), and the parameter-space gradient
    :math:`g` at :math:`\\iota_\\phi(t)` is propagated to the control
    points by the chain rule: :math:`\\partial/\\partial B = 2t(1-t)\\,g`,
    :math:`\\partial/\\partial C = t^2 g`.

Throughout both phases, :math:`A` stays pinned to :math:`\\Theta^t`. The
client returns the displacement of its curve with respect to the point
curve at :math:`\\Theta^t` as :class:`ReparamVector
<asyncbezier.entities.curve.ReparamVector>`.

Baselines training a single model use the very same procedure with
``k_curve = 0`` and ``b_init = "global"``
(see :meth:`CurveTrainConfig.pointwise
<asyncbezier.entities.curve.CurveTrainConfig.pointwise>`). Hence,
curve training strictly generalises pointwise training.


Randomness
==========

All randomness is derived from the seed passed to :func:`train_curve`,
the client id, and a purpose: minibatches are reshuffled every epoch from
``(seed, client, epoch)``, curve parameters are drawn from a stream of
their own. Training is thus a pure function of its inputs.


Module documentation
====================

"""

import logging
import zlib

import numpy as np

from asyncbezier.entities import model, params
from asyncbezier.entities.curve import (
    BezierParams,
    CurveTrainConfig,
    ReparamVector,
    decasteljau,
)
from asyncbezier.exceptions import DivergenceError

logger = logging.getLogger(__name__)

BATCH_STREAM = 0
CURVE_STREAM = 1


class SGD:
    """
    Plain stochastic gradient descent.

    Attributes
    ----------
    eta : :class:`float`
        Step size

    """

    def __init__(self, eta=0.001):
        self.eta = eta

    def step(self, theta=None, gradient=None):
        """
        Perform one optimisation step.

        Parameters
        ----------
        theta : :class:`numpy.ndarray`
            Current parameters

        gradient : :class:`numpy.ndarray`
            Gradient at the current parameters

        Returns
        -------
        theta : :class:`numpy.ndarray`
            Updated parameters (new array)

        """
        return theta - self.eta * gradient


class Adam(SGD):
    """
    Adam optimiser with bias correction.

    Attributes
    ----------
    eta : :class:`float`
        Step size

    betas : :class:`tuple`
        Decay rates of the first and second moment estimates.

        Default: (0.9, 0.999)

    epsilon : :class:`float`
        Term added to the denominator for numerical stability.

        Default: 1e-8

    """

    def __init__(self, eta=0.001, betas=(0.9, 0.999), epsilon=1e-8):
        super().__init__(eta=eta)
        self.betas = betas
        self.epsilon = epsilon
        self._first_moment = None
        self._second_moment = None
        self._steps = 0

    def step(self, theta=None, gradient=None):
        """
        Perform one optimisation step.

        Parameters
        ----------
        theta : :class:`numpy.ndarray`
            Current parameters

        gradient : :class:`numpy.ndarray`
            Gradient at the current parameters

        Returns
        -------
        theta : :class:`numpy.ndarray`
            Updated parameters (new array)

        """
        if self._first_moment is None:
            self._first_moment = np.zeros_like(theta)
            self._second_moment = np.zeros_like(theta)
        beta1, beta2 = self.betas
        self._steps += 1
        self._first_moment = (
            beta1 * self._first_moment + (1 - beta1) * gradient
        )
        self._second_moment = (
            beta2 * self._second_moment + (1 - beta2) * gradient**2
        )
        first = self._first_moment / (1 - beta1**self._steps)
        second = self._second_moment / (1 - beta2**self._steps)
        return theta - self.eta * first / (np.sqrt(second) + self.epsilon)


def get_optimizer(cfg=None):
    """
    Obtain the local optimiser configured.

    Parameters
    ----------
    cfg : :class:`asyncbezier.entities.curve.CurveTrainConfig`
        Training configuration

    Returns
    -------
    optimizer : :class:`SGD` | :class:`Adam`
        Freshly initialised optimiser

    """
    if cfg.optimizer == "adam":
        return Adam(eta=cfg.eta_l)
    return SGD(eta=cfg.eta_l)


def client_entropy(client_id=None):
    """
    Non-negative integer representing a client id for seeding.

    Integer ids are used as is, other ids (*e.g.* ``"global"``) are
    mapped via CRC32, as Python's own string hashing is salted per
    process.

    Returns
    -------
    entropy : :class:`int`
        Integer usable as entropy for :class:`numpy.random.SeedSequence`

    """
    if isinstance(client_id, (int, np.integer)) and client_id >= 0:
        return int(client_id)
    return zlib.crc32(str(client_id).encode())


def minibatches(n_samples=1, batch_size=None, seed=0, client_id=0, epoch=0):
    """
    Shuffled sequential minibatches for one epoch.

    Parameters
    ----------
    n_samples : :class:`int`
        Number of samples of the client

    batch_size : :class:`int` | :obj:`None`
        Size of the minibatches. :obj:`None` means full batch.

    seed : :class:`int`
        Training seed

    client_id : :class:`int` | :class:`str`
        Client id

    epoch : :class:`int`
        Epoch index, counting over both training phases

    Returns
    -------
    batches : :class:`list`
        Index arrays, the last one possibly shorter.

    """
    rng = np.random.default_rng(
        [int(seed), client_entropy(client_id), BATCH_STREAM, int(epoch)]
    )
    order = rng.permutation(n_samples)
    if batch_size is None or batch_size >= n_samples:
        return [order]
    return [
        order[start : start + batch_size]
        for start in range(0, n_samples, batch_size)
    ]


def train_curve(spec=None, theta_global=None, data=None, cfg=None, seed=0):
    """
    Train a quadratic Bézier curve starting at the global model.

    Parameters
    ----------
    spec : :class:`asyncbezier.entities.model.ModelSpec`
        Model specification (or any object providing ``loss_and_grad``)

    theta_global : :class:`numpy.ndarray`
        Snapshot :math:`\\Theta^t` of the global model

    data : :class:`asyncbezier.entities.model.Dataset`
        Training data of the client

    cfg : :class:`asyncbezier.entities.curve.CurveTrainConfig`
        Training configuration. Defaults are used if omitted.

    seed : :class:`int`
        Training seed

    Returns
    -------
    reparam : :class:`asyncbezier.entities.curve.ReparamVector`
        Learned curve minus the point curve at :math:`\\Theta^t`.

        As :math:`A` is pinned, :attr:`da` is always zero.

    Raises
    ------
    DivergenceError
        Raised if any parameter becomes non-finite. The
        :attr:`epoch <asyncbezier.exceptions.DivergenceError.epoch>`
        attribute contains the (zero-based) epoch.

    """
    if cfg is None:
        cfg = CurveTrainConfig()
    anchor = params.as_param_vector(theta_global)
    endpoint = anchor.copy()
    optimizer = get_optimizer(cfg)
    for epoch in range(cfg.k_sgd):
        for batch in minibatches(
            data.n_samples, cfg.batch_size, seed, data.id, epoch
        ):
            evaluation = model.prox_loss_and_grad(
                spec=spec,
                theta=endpoint,
                anchor=anchor,
                mu=cfg.mu,
                data=data,
                batch=batch,
            )
            endpoint = optimizer.step(endpoint, evaluation.gradient)
            _check_finite(endpoint, epoch)
        logger.debug("Client %s epoch %d (endpoint)", data.id, epoch)

    curve = BezierParams(a=anchor, b=anchor.copy(), c=endpoint)
    if cfg.b_init == "midpoint":
        curve.b = 0.5 * (curve.a + curve.c)
    if cfg.k_curve:
        curve = _train_curve_phase(spec, curve, data, cfg, seed)
    return ReparamVector.between(BezierParams.point(anchor), curve)


def _train_curve_phase(spec, curve, data, cfg, seed):
    rng = np.random.default_rng(
        [int(seed), client_entropy(data.id), CURVE_STREAM]
    )
    optimizer = get_optimizer(cfg)
    dim = curve.dim
    for curve_epoch in range(cfg.k_curve):
        epoch = cfg.k_sgd + curve_epoch
        for batch in minibatches(
            data.n_samples, cfg.batch_size, seed, data.id, epoch
        ):
            gradient = control_point_gradient(
                spec=spec,
                curve=curve,
                anchor=curve.a,
                mu=cfg.mu,
                data=data,
                batch=batch,
                ts=rng.uniform(0.0, 1.0, size=cfg.samples_per_batch_draw),
            )
            flat = np.concatenate([curve.b, curve.c])
            flat = optimizer.step(flat, gradient)
            _check_finite(flat, epoch)
            curve.b, curve.c = flat[:dim], flat[dim:]
        logger.debug("Client %s epoch %d (curve)", data.id, epoch)
    return curve


def control_point_gradient(
    spec=None, curve=None, anchor=None, mu=0.0, data=None, batch=None, ts=()
):
    """
    Gradient of the sampled curve objective with respect to B and C.

    For each curve parameter :math:`t`, the gradient :math:`g` of the
    proximal loss at :math:`\\iota_\\phi(t)` is computed and propagated
    to the control points by the chain rule. The contributions are
    averaged over the parameters given.

    Parameters
    ----------
    spec : :class:`asyncbezier.entities.model.ModelSpec`
        Model specification

    curve : :class:`asyncbezier.entities.curve.BezierParams`
        Current curve

    anchor : :class:`numpy.ndarray`
        Centre of the proximal term, :math:`\\Theta^t`

    mu : :class:`float`
        Proximal coefficient

    data : :class:`asyncbezier.entities.model.Dataset`
        Training data

    batch : array_like | :obj:`None`
        Indices of the samples to use

    ts : array_like
        Curve parameters to sample the objective at

    Returns
    -------
    gradient : :class:`numpy.ndarray`
        Concatenated gradients with respect to :math:`B` and :math:`C`.

    """
    if len(ts) == 0:
        raise ValueError("Need curve parameters to sample at.")
    gradient_b = params.zeros(curve.dim)
    gradient_c = params.zeros(curve.dim)
    for t in ts:
        evaluation = model.prox_loss_and_grad(
            spec=spec,
            theta=decasteljau(curve, float(t)),
            anchor=anchor,
            mu=mu,
            data=data,
            batch=batch,
        )
        gradient_b += 2.0 * t * (1.0 - t) * evaluation.gradient
        gradient_c += t * t * evaluation.gradient
    return np.concatenate([gradient_b, gradient_c]) / len(ts)


def _check_finite(vector, epoch):
    if not np.all(np.isfinite(vector)):
        message = f"Local training diverged in epoch {epoch}"
        logger.error(message)
        raise DivergenceError(message, epoch=epoch)


def derive_seed(seed=0, *keys):
    """
    Derive an independent seed for a given purpose.

    All random streams of a run originate from the single run seed. To
    keep them independent, each purpose (and, where applicable, client
    and counter) spawns a seed of its own.

    Parameters
    ----------
    seed : :class:`int`
        Run seed

    *keys
        Purpose (:class:`str`) and further integers, *e.g.* client and
        dispatch count.

    Returns
    -------
    seed : :class:`int`
        Derived seed, a non-negative 64-bit integer.

    Examples
    --------
    .. code-block::

        derive_seed(42, "schedule")
        derive_seed(42, "training", 3, 0)

    """
    entropy = [int(seed)] + [client_entropy(key) for key in keys]
    state = np.random.SeedSequence(entropy).generate_state(1, np.uint64)
    return int(state[0])
