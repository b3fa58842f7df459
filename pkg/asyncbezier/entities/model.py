"""
*Desk-scale models and the data they are trained on.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

Asynchronous federated optimisation is studied here on small,
differentiable objectives whose loss and gradient can be evaluated
analytically and cheaply. Two model kinds are available:

logistic
    Multinomial logistic regression (softmax regression), *i.e.* a single
    affine map from features to class scores.

mlp1
    A perceptron with one hidden layer of configurable width and ReLU
    activation.

Both are trained on the mean cross-entropy over a batch plus an optional
L2 regulariser. All model parameters are packed into one flat parameter
vector (see :mod:`asyncbezier.entities.params`), with the layout defined
by :meth:`ModelSpec.unpack`.


Overview
========

* :class:`Dataset`

  Features and integer class labels of one client (or the global
  population).

* :class:`ModelSpec`

  Kind and shape of a model; evaluates loss and gradient for a given
  parameter vector.

* :class:`LossEval`

  Result of a loss and gradient evaluation.

* :func:`loss_and_grad` and :func:`prox_loss_and_grad`

  Functional entry points used by the client training procedure. The
  latter adds the proximal term :math:`\\mu/2 \\lVert\\theta -
  \\theta_\\text{anchor}\\rVert^2` tethering local training to the
  dispatched global model.


Usage
=====

.. code-block::

    spec = ModelSpec(kind="mlp1", n_features=5, n_classes=3, hidden_width=16)
    theta = spec.init_params(seed=0)
    evaluation = loss_and_grad(spec, theta, dataset)
    evaluation.loss, evaluation.gradient


Module documentation
====================

"""

import logging

import numpy as np

from asyncbezier.entities import params

logger = logging.getLogger(__name__)

MODEL_KINDS = ("logistic", "mlp1")


class Dataset:
    """
    Features and class labels of one client or the global population.

    Attributes
    ----------
    features : :class:`numpy.ndarray`
        Matrix of shape ``(n_samples, n_features)`` with dtype ``float64``.

    labels : :class:`numpy.ndarray`
        Integer class ids in ``[0, n_classes)``, one per sample.

    n_classes : :class:`int`
        Number of classes of the underlying task.

        Note that a client does not necessarily hold samples of every
        class. Hence, the number of classes is stored explicitly.

    id : :class:`int` | :class:`str`
        Client index or ``"global"``.

    indices : :class:`numpy.ndarray`
        Indices of the samples within the dataset they were taken from.

        For a freshly created dataset, these are simply ``0..n-1``.


    Parameters
    ----------
    features : array_like
        Feature matrix

    labels : array_like
        Class labels

    n_classes : :class:`int`
        Number of classes. If omitted, ``max(labels) + 1`` is used.

    id_ : :class:`int` | :class:`str`
        Client index or ``"global"``

    indices : array_like
        Indices of the samples in their parent dataset.


    Raises
    ------
    ValueError
        Raised if no samples are given, features and labels differ in
        length, or labels are outside the range of classes.

    """

    def __init__(
        self,
        features=None,
        labels=None,
        n_classes=None,
        id_="global",
        indices=None,
    ):
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64)
        if features.ndim != 2 or features.shape[0] < 1:
            raise ValueError("Need at least one sample with features.")
        if labels.shape != (features.shape[0],):
            raise ValueError("Need exactly one label per sample.")
        if n_classes is None:
            n_classes = int(labels.max()) + 1
        if labels.min() < 0 or labels.max() >= n_classes:
            raise ValueError("Labels need to be in [0, n_classes).")
        self.features = features
        self.labels = labels
        self.n_classes = int(n_classes)
        self.id = id_
        if indices is None:
            indices = np.arange(features.shape[0])
        self.indices = np.asarray(indices, dtype=np.int64)

    def __str__(self):
        return (
            f"{self.id} <{type(self).__name__}: {self.n_samples} samples, "
            f"{self.n_features} features, {self.n_classes} classes>"
        )

    @property
    def n_samples(self):
        """
        Number of samples in the dataset.

        Returns
        -------
        n_samples : :class:`int`
            Number of samples

        """
        return self.features.shape[0]

    @property
    def n_features(self):
        """
        Number of features per sample.

        Returns
        -------
        n_features : :class:`int`
            Number of features

        """
        return self.features.shape[1]

    def subset(self, indices=None, id_=None):
        """
        Create a dataset from a subset of the samples.

        Parameters
        ----------
        indices : array_like
            Positions of the samples (within this dataset) to include.

        id_ : :class:`int` | :class:`str`
            Identifier of the new dataset. Defaults to the current one.

        Returns
        -------
        dataset : :class:`Dataset`
            New dataset with copies of the selected samples.

            Its :attr:`indices` refer to the samples' original positions.

        """
        indices = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[indices],
            labels=self.labels[indices],
            n_classes=self.n_classes,
            id_=self.id if id_ is None else id_,
            indices=self.indices[indices],
        )

    def label_histogram(self):
        """
        Relative frequency of each class in the dataset.

        Returns
        -------
        histogram : :class:`numpy.ndarray`
            Array of length :attr:`n_classes` summing up to one.

        """
        counts = np.bincount(self.labels, minlength=self.n_classes)
        return counts / counts.sum()


def concatenate(datasets=None, id_="global"):
    """
    Pool several datasets into one.

    Parameters
    ----------
    datasets : :class:`list`
        :obj:`Dataset` objects sharing feature dimension and classes.

    id_ : :class:`int` | :class:`str`
        Identifier of the pooled dataset.

    Returns
    -------
    dataset : :class:`Dataset`
        Pooled dataset, samples in the order of ``datasets``.

    """
    if not datasets:
        raise ValueError("Need datasets to concatenate.")
    return Dataset(
        features=np.concatenate([item.features for item in datasets]),
        labels=np.concatenate([item.labels for item in datasets]),
        n_classes=datasets[0].n_classes,
        id_=id_,
        indices=np.concatenate([item.indices for item in datasets]),
    )


class LossEval:
    """
    Loss and gradient of an objective at one parameter vector.

    Attributes
    ----------
    loss : :class:`float`
        Value of the objective.

    gradient : :class:`numpy.ndarray`
        Gradient of the objective with respect to the parameters.

    n_samples_used : :class:`int`
        Number of samples the objective was evaluated on.

    """

    def __init__(self, loss=0.0, gradient=None, n_samples_used=0):
        self.loss = loss
        self.gradient = gradient
        self.n_samples_used = n_samples_used


class ModelSpec:
    """
    Kind and shape of a model.

    The specification determines the dimension and layout of the flat
    parameter vector, which is identical for all clients and the server.

    For ``logistic`` models, the parameter vector contains the weight
    matrix of shape ``(n_features, n_classes)`` (row-major) followed by
    the bias vector of length ``n_classes``. For ``mlp1`` models, the
    hidden layer weights ``(n_features, hidden_width)`` and biases are
    followed by the output layer weights ``(hidden_width, n_classes)``
    and biases.


    Attributes
    ----------
    kind : :class:`str`
        Either ``logistic`` or ``mlp1``

    n_features : :class:`int`
        Number of input features

    n_classes : :class:`int`
        Number of classes

    hidden_width : :class:`int`
        Width of the hidden layer (``mlp1`` only)

    l2 : :class:`float`
        Coefficient of the L2 regulariser :math:`l_2/2 \\lVert\\theta
        \\rVert^2`


    Raises
    ------
    ValueError
        Raised for unknown kinds or inconsistent shapes.


    Examples
    --------
    .. code-block::

        spec = ModelSpec(kind="logistic", n_features=2, n_classes=2)
        spec.dimension    # 6

    """

    def __init__(
        self,
        kind="logistic",
        n_features=1,
        n_classes=2,
        hidden_width=0,
        l2=0.0,
    ):
        if kind not in MODEL_KINDS:
            raise ValueError(f"Unknown model kind '{kind}'")
        if n_features < 1 or n_classes < 2:
            raise ValueError("Need at least one feature and two classes.")
        if kind == "mlp1" and hidden_width < 1:
            raise ValueError("Need a positive hidden width for mlp1.")
        if l2 < 0:
            raise ValueError("L2 coefficient needs to be non-negative.")
        self.kind = kind
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)
        self.hidden_width = int(hidden_width) if kind == "mlp1" else 0
        self.l2 = float(l2)

    def __str__(self):
        return f"{self.kind} <{type(self).__name__}: dim {self.dimension}>"

    @property
    def shapes(self):
        """
        Shapes of the individual parameter blocks, in packing order.

        Returns
        -------
        shapes : :class:`list`
            List of shape tuples.

        """
        if self.kind == "logistic":
            return [(self.n_features, self.n_classes), (self.n_classes,)]
        return [
            (self.n_features, self.hidden_width),
            (self.hidden_width,),
            (self.hidden_width, self.n_classes),
            (self.n_classes,),
        ]

    @property
    def dimension(self):
        """
        Dimension of the flat parameter vector.

        Returns
        -------
        dimension : :class:`int`
            Number of model parameters

        """
        return int(sum(np.prod(shape) for shape in self.shapes))

    def to_dict(self):
        """
        Configuration of the model as dict.

        Returns
        -------
        config : :class:`dict`
            Keyword arguments recreating the specification.

        """
        return {
            "kind": self.kind,
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "hidden_width": self.hidden_width,
            "l2": self.l2,
        }

    def unpack(self, theta=None):
        """
        Split a flat parameter vector into its blocks.

        Parameters
        ----------
        theta : :class:`numpy.ndarray`
            Flat parameter vector

        Returns
        -------
        blocks : :class:`list`
            Reshaped views into ``theta``, one per entry of :attr:`shapes`.

        Raises
        ------
        DimensionError
            Raised if ``theta`` does not match :attr:`dimension`.

        """
        params.check_dimensions(theta, np.empty(self.dimension))
        blocks = []
        start = 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            blocks.append(theta[start : start + size].reshape(shape))
            start += size
        return blocks

    def init_params(self, seed=0):
        """
        Initial parameter vector.

        Logistic models start at zero (the objective is convex). For
        ``mlp1`` models, weights are drawn uniformly from
        :math:`[-1/\\sqrt{n}, 1/\\sqrt{n}]` with :math:`n` the fan-in of
        the layer, biases start at zero.

        Parameters
        ----------
        seed : :class:`int`
            Seed of the random number generator.

        Returns
        -------
        theta : :class:`numpy.ndarray`
            Initial parameters

        """
        theta = params.zeros(self.dimension)
        if self.kind == "logistic":
            return theta
        rng = np.random.default_rng(seed)
        w1, _, w2, _ = self.unpack(theta)
        bound = 1.0 / np.sqrt(self.n_features)
        w1[...] = rng.uniform(-bound, bound, size=w1.shape)
        bound = 1.0 / np.sqrt(self.hidden_width)
        w2[...] = rng.uniform(-bound, bound, size=w2.shape)
        return theta

    def logits(self, theta=None, features=None):
        """
        Class scores for a feature matrix.

        Parameters
        ----------
        theta : :class:`numpy.ndarray`
            Flat parameter vector

        features : :class:`numpy.ndarray`
            Feature matrix of shape ``(n_samples, n_features)``

        Returns
        -------
        logits : :class:`numpy.ndarray`
            Scores of shape ``(n_samples, n_classes)``

        """
        return self._forward(theta, features)[-1]

    def predict(self, theta=None, features=None):
        """
        Predicted class ids for a feature matrix.

        Returns
        -------
        predictions : :class:`numpy.ndarray`
            Class id with highest score per sample.

        """
        return np.argmax(self.logits(theta, features), axis=1)

    def score(self, theta=None, data=None):
        """
        Mean cross-entropy and accuracy on an entire dataset.

        In contrast to :meth:`loss_and_grad`, the regulariser is *not*
        included, as this is the quantity reported for evaluation.

        Parameters
        ----------
        theta : :class:`numpy.ndarray`
            Flat parameter vector

        data : :class:`Dataset`
            Dataset to evaluate on

        Returns
        -------
        loss : :class:`float`
            Mean cross-entropy

        accuracy : :class:`float`
            Fraction of correctly classified samples

        """
        logits = self.logits(theta, data.features)
        log_probs = _log_softmax(logits)
        rows = np.arange(data.n_samples)
        loss = float(-np.mean(log_probs[rows, data.labels]))
        accuracy = float(np.mean(np.argmax(logits, axis=1) == data.labels))
        return loss, accuracy

    def loss_and_grad(self, theta=None, data=None, batch=None):
        """
        Regularised mean cross-entropy and its exact gradient.

        Parameters
        ----------
        theta : :class:`numpy.ndarray`
            Flat parameter vector

        data : :class:`Dataset`
            Dataset the batch is taken from

        batch : array_like | :obj:`None`
            Indices of the samples to use. :obj:`None` uses all samples.

        Returns
        -------
        evaluation : :class:`LossEval`
            Loss and gradient

        Raises
        ------
        ValueError
            Raised if the batch is empty or contains invalid indices.

        """
        features, labels = _select_batch(data, batch)
        n_samples = labels.shape[0]
        activations = self._forward(theta, features)
        logits = activations[-1]
        log_probs = _log_softmax(logits)
        rows = np.arange(n_samples)
        loss = -np.mean(log_probs[rows, labels])
        delta = np.exp(log_probs)
        delta[rows, labels] -= 1.0
        delta /= n_samples
        gradient = params.zeros(self.dimension)
        blocks = self.unpack(gradient)
        if self.kind == "logistic":
            blocks[0][...] = features.T @ delta
            blocks[1][...] = delta.sum(axis=0)
        else:
            hidden, relu, _ = activations
            _, _, w2, _ = self.unpack(theta)
            blocks[2][...] = relu.T @ delta
            blocks[3][...] = delta.sum(axis=0)
            delta_hidden = (delta @ w2.T) * (hidden > 0)
            blocks[0][...] = features.T @ delta_hidden
            blocks[1][...] = delta_hidden.sum(axis=0)
        if self.l2:
            loss += 0.5 * self.l2 * params.inner(theta, theta)
            gradient += self.l2 * theta
        return LossEval(
            loss=float(loss), gradient=gradient, n_samples_used=n_samples
        )

    def _forward(self, theta, features):
        blocks = self.unpack(theta)
        if self.kind == "logistic":
            return [features @ blocks[0] + blocks[1]]
        w1, b1, w2, b2 = blocks
        hidden = features @ w1 + b1
        relu = np.maximum(hidden, 0.0)
        return [hidden, relu, relu @ w2 + b2]


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _select_batch(data, batch):
    if batch is None:
        return data.features, data.labels
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ValueError("Need a non-empty batch.")
    if batch.min() < 0 or batch.max() >= data.n_samples:
        raise ValueError("Batch indices out of range.")
    return data.features[batch], data.labels[batch]


def loss_and_grad(spec=None, theta=None, data=None, batch=None):
    """
    Loss and gradient of a model on a batch.

    Convenience function calling :meth:`ModelSpec.loss_and_grad`. Any
    object implementing this method may serve as ``spec``.

    Parameters
    ----------
    spec : :class:`ModelSpec`
        Model specification

    theta : :class:`numpy.ndarray`
        Flat parameter vector

    data : :class:`Dataset`
        Dataset the batch is taken from

    batch : array_like | :obj:`None`
        Indices of the samples to use. :obj:`None` uses all samples.

    Returns
    -------
    evaluation : :class:`LossEval`
        Loss and gradient

    """
    return spec.loss_and_grad(theta=theta, data=data, batch=batch)


def prox_loss_and_grad(
    spec=None, theta=None, anchor=None, mu=0.0, data=None, batch=None
):
    """
    Loss and gradient including a proximal term.

    The proximal term :math:`\\mu/2 \\lVert\\theta - \\text{anchor}
    \\rVert^2` tethers local training to the global model a client
    started from.

    Parameters
    ----------
    spec : :class:`ModelSpec`
        Model specification

    theta : :class:`numpy.ndarray`
        Flat parameter vector

    anchor : :class:`numpy.ndarray`
        Parameter vector the proximal term is centred at

    mu : :class:`float`
        Proximal coefficient, non-negative

    data : :class:`Dataset`
        Dataset the batch is taken from

    batch : array_like | :obj:`None`
        Indices of the samples to use. :obj:`None` uses all samples.

    Returns
    -------
    evaluation : :class:`LossEval`
        Loss and gradient

    Raises
    ------
    ValueError
        Raised if ``mu`` is negative.

    """
    if mu < 0:
        raise ValueError("Proximal coefficient needs to be non-negative.")
    evaluation = loss_and_grad(spec=spec, theta=theta, data=data, batch=batch)
    if mu == 0:
        return evaluation
    difference = theta - anchor
    evaluation.loss += 0.5 * mu * params.inner(difference, difference)
    evaluation.gradient = evaluation.gradient + mu * difference
    return evaluation
