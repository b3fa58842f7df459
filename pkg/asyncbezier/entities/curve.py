"""
*Quadratic Bézier curves in parameter space.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

Rather than a single model, each client learns a low-loss *curve* in
parameter space starting at the global model it received. Curves are
quadratic Bézier curves, parametrised by three control points
:math:`A, B, C`:

.. math::

    \\iota_\\phi(t) = (1-t)^2 A + 2t(1-t) B + t^2 C, \\quad t \\in [0, 1]

The curve starts at :math:`A` (pinned to the global model) and ends at
:math:`C` (the client's learned endpoint). The middle control point
:math:`B` bends the curve away from the straight line, thus allowing to
go around regions of high loss between the two endpoints.

The server moves the global model part-way along a (delay-corrected)
curve. To make the step length independent of how the curve is
parametrised, :func:`arc_step` chooses the curve parameter such that the
distance (chord length) from the start equals a given fraction of the
distance to the far endpoint.


Overview
========

* :class:`BezierParams` -- control points :math:`(A, B, C)` of a curve
* :class:`ReparamVector` -- displacement of the control points with
  respect to the point curve at the global model, *i.e.* what a client
  transmits to the server
* :class:`CurveTrainConfig` -- hyperparameters of client curve training
* :func:`decasteljau` -- evaluate a curve
* :func:`curve_tangent_at_zero` -- tangent at the start of a curve
* :func:`arc_step` -- move along a curve by a fraction of its chord
* :func:`loss_profile` -- loss along a curve


Module documentation
====================

"""

import logging

import numpy as np

from asyncbezier.entities import params
from asyncbezier.exceptions import ParameterRangeError

logger = logging.getLogger(__name__)

B_INIT_MODES = ("global", "midpoint")
LOCAL_OPTIMIZERS = ("sgd", "adam")

#: Number of grid points used to detect non-monotone chord lengths.
MONOTONICITY_GRID = 33

#: Relative tolerance of the bisection in :func:`arc_step`.
BISECTION_TOLERANCE = 1e-12


class ControlPoints:
    """
    Base class for three blocks of parameter vectors.

    Both, the control points of a curve and their displacements,
    consist of three vectors of identical dimension. This class provides
    the common behaviour, most importantly flattening into a single
    vector of three times the dimension (the representation used when
    correcting stale updates) and back.

    Attributes
    ----------
    blocks : :class:`tuple`
        The three vectors, in order.

    """

    _block_names = ("first", "second", "third")

    def __init__(self, first=None, second=None, third=None):
        blocks = [
            np.asarray(item, dtype=np.float64)
            for item in (first, second, third)
        ]
        params.check_dimensions(*blocks)
        for name, block in zip(self._block_names, blocks):
            setattr(self, name, block)

    @property
    def blocks(self):
        """
        The three vectors, in order.

        Returns
        -------
        blocks : :class:`tuple`
            Three :class:`numpy.ndarray` objects

        """
        return tuple(getattr(self, name) for name in self._block_names)

    @property
    def dim(self):
        """
        Dimension of each block.

        Returns
        -------
        dim : :class:`int`
            Dimension of the underlying parameter space

        """
        return self.blocks[0].shape[0]

    def flatten(self):
        """
        Concatenate the three blocks into one vector.

        Returns
        -------
        flat : :class:`numpy.ndarray`
            Vector of dimension ``3 * dim``

        """
        return np.concatenate(self.blocks)

    @classmethod
    def from_flat(cls, flat=None):
        """
        Create an object from a flattened vector.

        Parameters
        ----------
        flat : :class:`numpy.ndarray`
            Vector whose dimension is a multiple of three.

        Returns
        -------
        control_points : :class:`ControlPoints`
            Object of the respective subclass.

        """
        flat = np.asarray(flat, dtype=np.float64)
        if flat.ndim != 1 or flat.shape[0] % 3:
            raise ValueError("Flat vector needs a dimension divisible by 3.")
        return cls(*np.split(flat.copy(), 3))

    def is_finite(self):
        """
        Check whether all entries are finite.

        Returns
        -------
        finite : :class:`bool`
            :obj:`True` if no block contains NaN or infinite values.

        """
        return all(np.all(np.isfinite(block)) for block in self.blocks)


class BezierParams(ControlPoints):
    """
    Control points of a quadratic Bézier curve.

    Attributes
    ----------
    a : :class:`numpy.ndarray`
        Start point :math:`A`, the curve's value at :math:`t=0`.

    b : :class:`numpy.ndarray`
        Middle control point :math:`B`, not on the curve in general.

    c : :class:`numpy.ndarray`
        End point :math:`C`, the curve's value at :math:`t=1`.

    Examples
    --------
    A curve degenerate to a single point (the "point parametrisation" of
    a model) is obtained by:

    .. code-block::

        curve = BezierParams.point(theta)

    """

    _block_names = ("a", "b", "c")

    def __init__(self, a=None, b=None, c=None):
        super().__init__(a, b, c)

    @classmethod
    def point(cls, theta=None):
        """
        Point parametrisation of a model: all control points equal.

        Parameters
        ----------
        theta : :class:`numpy.ndarray`
            Model parameters

        Returns
        -------
        curve : :class:`BezierParams`
            Curve with :math:`A = B = C = \\theta` (as copies).

        """
        return cls(a=theta.copy(), b=theta.copy(), c=theta.copy())

    def displaced(self, reparam=None):
        """
        Add a reparametrisation vector to the control points.

        Parameters
        ----------
        reparam : :class:`ReparamVector`
            Displacement of the three control points

        Returns
        -------
        curve : :class:`BezierParams`
            New curve

        """
        return BezierParams(
            a=self.a + reparam.da,
            b=self.b + reparam.db,
            c=self.c + reparam.dc,
        )

    def straight_line(self):
        """
        Straight line between the endpoints of the curve.

        The middle control point is placed in the middle of :math:`A` and
        :math:`C`, resulting in a uniformly parametrised line segment.

        Returns
        -------
        curve : :class:`BezierParams`
            Linear curve sharing the endpoints
        """
        return BezierParams(
            a=self.a.copy(), b=0.5 * (self.a + self.c), c=self.c.copy()
        )


class ReparamVector(ControlPoints):
    """
    Displacement of the control points relative to a point curve.

    This is what a client transmits back to the server: the difference
    between the learned curve and the point parametrisation of the global
    model the client started from.

    Attributes
    ----------
    da : :class:`numpy.ndarray`
        Displacement of :math:`A`. Zero as long as :math:`A` is pinned.

    db : :class:`numpy.ndarray`
        Displacement of :math:`B`

    dc : :class:`numpy.ndarray`
        Displacement of :math:`C`

    """

    _block_names = ("da", "db", "dc")

    def __init__(self, da=None, db=None, dc=None):
        super().__init__(da, db, dc)

    @classmethod
    def zeros(cls, dim=1):
        """
        Reparametrisation vector without any displacement.

        Parameters
        ----------
        dim : :class:`int`
            Dimension of the parameter space

        Returns
        -------
        reparam : :class:`ReparamVector`
            All-zero displacement

        """
        return cls(params.zeros(dim), params.zeros(dim), params.zeros(dim))

    @classmethod
    def between(cls, start=None, end=None):
        """
        Displacement leading from one curve to another.

        Parameters
        ----------
        start : :class:`BezierParams`
            Curve displaced from

        end : :class:`BezierParams`
            Curve displaced to

        Returns
        -------
        reparam : :class:`ReparamVector`
            ``end - start``, componentwise

        """
        return cls(end.a - start.a, end.b - start.b, end.c - start.c)


class CurveTrainConfig:
    """
    Hyperparameters of the client-side curve training.

    Training proceeds in two phases. First, for :attr:`k_sgd` epochs,
    only the endpoint :math:`C` is trained (the curve is sampled at
    :math:`t=1` only). Afterwards, for :attr:`k_curve` epochs, the curve
    is sampled uniformly, training :math:`B` and :math:`C`.

    Attributes
    ----------
    k_sgd : :class:`int`
        Number of epochs of endpoint training

        Default: 2

    k_curve : :class:`int`
        Number of epochs of curve training

        Default: 2

    mu : :class:`float`
        Coefficient of the proximal term

        Default: 0.001

    eta_l : :class:`float`
        Local step size

        Default: 0.001

    b_init : :class:`str`
        Initialisation of :math:`B` at the beginning of the second phase.

        ``midpoint`` places :math:`B` in the middle between :math:`A`
        and :math:`C`, ``global`` keeps it at the global model.

        Default: "midpoint"

    samples_per_batch_draw : :class:`int`
        Number of curve positions drawn per minibatch.

        Default: 1

    batch_size : :class:`int` | :obj:`None`
        Size of the minibatches. :obj:`None` means full batch.

        Default: 32

    optimizer : :class:`str`
        Local optimiser, either ``sgd`` or ``adam``.

        Default: "sgd"


    Raises
    ------
    ValueError
        Raised if the configuration is inconsistent.

    """

    def __init__(
        self,
        k_sgd=2,
        k_curve=2,
        mu=0.001,
        eta_l=0.001,
        b_init="midpoint",
        samples_per_batch_draw=1,
        batch_size=32,
        optimizer="sgd",
    ):
        if k_sgd < 0 or k_curve < 0 or k_sgd + k_curve == 0:
            raise ValueError("Need a non-negative number of epochs > 0.")
        if mu < 0 or eta_l <= 0:
            raise ValueError("Need mu >= 0 and a positive step size.")
        if b_init not in B_INIT_MODES:
            raise ValueError(f"Unknown b_init mode '{b_init}'")
        if optimizer not in LOCAL_OPTIMIZERS:
            raise ValueError(f"Unknown optimizer '{optimizer}'")
        if samples_per_batch_draw < 1:
            raise ValueError("Need at least one curve sample per batch.")
        if batch_size is not None and batch_size < 1:
            raise ValueError("Batch size needs to be positive.")
        self.k_sgd = int(k_sgd)
        self.k_curve = int(k_curve)
        self.mu = float(mu)
        self.eta_l = float(eta_l)
        self.b_init = b_init
        self.samples_per_batch_draw = int(samples_per_batch_draw)
        self.batch_size = batch_size
        self.optimizer = optimizer

    def to_dict(self):
        """
        Configuration as dict.

        Returns
        -------
        config : :class:`dict`
            Keyword arguments recreating the configuration.

        """
        return dict(vars(self))

    def pointwise(self):
        """
        Configuration for pointwise (non-curve) local training.

        Baselines train a single model only. This corresponds to skipping
        the curve phase and leaving :math:`B` at the global model.

        Returns
        -------
        config : :class:`CurveTrainConfig`
            Copy with ``k_curve = 0`` and ``b_init = "global"``.

        """
        config = self.to_dict()
        config.update(k_curve=0, b_init="global")
        if config["k_sgd"] == 0:
            config["k_sgd"] = 1
        return CurveTrainConfig(**config)


def decasteljau(phi=None, t=0.0):
    """
    Evaluate a quadratic Bézier curve using de Casteljau's algorithm.

    The point is obtained by two rounds of linear interpolation between
    the control points. The endpoints are returned exactly, and a curve
    with identical control points evaluates to exactly this point.

    Parameters
    ----------
    phi : :class:`BezierParams`
        Control points of the curve

    t : :class:`float`
        Curve parameter in [0, 1]

    Returns
    -------
    point : :class:`numpy.ndarray`
        Point on the curve

    Raises
    ------
    ParameterRangeError
        Raised if ``t`` is outside [0, 1].

    """
    if not 0.0 <= t <= 1.0:
        raise ParameterRangeError(f"Curve parameter {t} outside [0, 1]")
    if t == 0.0:
        return phi.a.copy()
    if t == 1.0:
        return phi.c.copy()
    first = phi.a + t * (phi.b - phi.a)
    second = phi.b + t * (phi.c - phi.b)
    return first + t * (second - first)


def curve_tangent_at_zero(phi=None):
    """
    Tangent of a quadratic Bézier curve at its start.

    Parameters
    ----------
    phi : :class:`BezierParams`
        Control points of the curve

    Returns
    -------
    tangent : :class:`numpy.ndarray`
        Derivative :math:`2(B - A)` of the curve at :math:`t=0`.

    """
    return 2.0 * (phi.b - phi.a)


def arc_step(theta_anchor=None, psi=None, step=1.0):
    """
    Move along a curve by a fraction of its chord length.

    Returns the point :math:`\\iota_\\psi(s^*)` with :math:`s^*` chosen
    such that its distance to the anchor equals ``step`` times the
    distance of the far endpoint to the anchor. As the chord length of
    a quadratic curve has no convenient closed-form inverse, :math:`s^*`
    is found by bisection.

    If the chord length is not monotone along the curve (checked on a
    grid of :data:`MONOTONICITY_GRID` points), bisection is not
    meaningful, and :math:`s^* = \\text{step}` is used instead. A warning
    is logged in this case.

    Parameters
    ----------
    theta_anchor : :class:`numpy.ndarray`
        Start of the curve, :math:`\\Theta`

    psi : :class:`BezierParams`
        Curve starting at the anchor

    step : :class:`float`
        Fraction of the chord length in (0, 1]

    Returns
    -------
    point : :class:`numpy.ndarray`
        New point on the curve. If the far endpoint coincides with the
        anchor, a copy of the anchor is returned.

    Raises
    ------
    ParameterRangeError
        Raised if ``step`` is outside (0, 1].

    """
    if not 0.0 < step <= 1.0:
        raise ParameterRangeError(f"Step {step} outside (0, 1]")

    def chord(s):
        return params.norm(decasteljau(psi, s) - theta_anchor)

    full_chord = chord(1.0)
    if full_chord == 0.0:
        return np.array(theta_anchor, dtype=np.float64, copy=True)
    if step == 1.0:
        return decasteljau(psi, 1.0)
    grid = np.array(
        [chord(s) for s in np.linspace(0.0, 1.0, MONOTONICITY_GRID)]
    )
    if np.any(np.diff(grid) < -BISECTION_TOLERANCE * full_chord):
        logger.warning(
            "Chord length not monotone along curve, using s = step = %g",
            step,
        )
        return decasteljau(psi, step)
    target = step * full_chord
    lower, upper = 0.0, 1.0
    middle = step
    for _ in range(200):
        middle = 0.5 * (lower + upper)
        difference = chord(middle) - target
        if abs(difference) <= BISECTION_TOLERANCE * full_chord:
            break
        if difference < 0:
            lower = middle
        else:
            upper = middle
    return decasteljau(psi, middle)


def loss_profile(spec=None, phi=None, data=None, n_points=21):
    """
    Full-batch loss along a curve.

    The loss is the one reported for evaluation, see
    :meth:`asyncbezier.entities.model.ModelSpec.score`, hence without the
    regulariser.

    Parameters
    ----------
    spec : :class:`asyncbezier.entities.model.ModelSpec`
        Model specification

    phi : :class:`BezierParams`
        Curve to evaluate

    data : :class:`asyncbezier.entities.model.Dataset`
        Dataset to evaluate the loss on

    n_points : :class:`int`
        Number of equidistant curve parameters, including both endpoints.

    Returns
    -------
    profile : :class:`list`
        List of ``(t, loss)`` tuples with :math:`t = i/(n-1)`.

    Raises
    ------
    ValueError
        Raised if less than two points are requested.

    """
    if n_points < 2:
        raise ValueError("Need at least two points for a loss profile.")
    profile = []
    for idx in range(n_points):
        t = idx / (n_points - 1)
        loss, _ = spec.score(theta=decasteljau(phi, t), data=data)
        profile.append((t, loss))
    return profile
