"""
*Synthetic tasks and heterogeneous client data.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

Federated optimisation is interesting only if clients differ. The
module provides the means to create such a situation at desk scale:
a synthetic classification task (:func:`make_synthetic`), its
distribution over clients with label skew (:func:`dirichlet_partition`),
and per-client validation sets (:func:`train_validation_split`).

:class:`FederatedData` bundles the resulting training and validation sets
of all clients, together with the client weights used by the server.


Label skew
==========

For each class separately, the proportions of its samples going to each
client are drawn from a symmetric Dirichlet distribution with
concentration :math:`\\alpha`. Small values of :math:`\\alpha` result in
clients holding samples of only a few classes, large values approach an
i.i.d. split.

Clients need to hold at least one sample. If a draw leaves a client
empty, all proportions are redrawn (at most :data:`MAX_REDRAWS` times).
Should this not help, samples are moved round-robin from the largest
clients to the empty ones, and a warning is logged.


Usage
=====

.. code-block::

    from asyncbezier.controllers import datasets

    data = datasets.make_synthetic(
        n_classes=10, n_features=20, n_samples=6000, class_sep=2.0, seed=0
    )
    clients = datasets.dirichlet_partition(data, n_clients=30, alpha=0.5)


Module documentation
====================

"""

import logging

import numpy as np

from asyncbezier.controllers.training import client_entropy
from asyncbezier.entities.model import Dataset, concatenate

logger = logging.getLogger(__name__)

#: Maximum number of redraws of the Dirichlet proportions.
MAX_REDRAWS = 100

CLIENT_WEIGHTINGS = ("proportional", "uniform")


def make_synthetic(
    n_classes=2, n_features=2, n_samples=100, class_sep=1.0, seed=0
):
    """
    Create a classification task with Gaussian class clusters.

    Each class is a Gaussian with unit covariance. Class means are
    separated by ``class_sep``: if there are at most as many classes as
    features, the means lie on scaled coordinate axes, with all pairwise
    distances equal to ``class_sep``. Otherwise, they lie in random
    directions at distance ``class_sep / sqrt(2)`` from the origin.

    Labels are balanced (up to one sample) and shuffled.

    Parameters
    ----------
    n_classes : :class:`int`
        Number of classes

    n_features : :class:`int`
        Number of features

    n_samples : :class:`int`
        Number of samples

    class_sep : :class:`float`
        Distance between class means. Zero makes classes
        indistinguishable.

    seed : :class:`int`
        Seed of the random number generator

    Returns
    -------
    dataset : :class:`asyncbezier.entities.model.Dataset`
        Dataset with id ``"global"``

    """
    if min(n_classes, n_features, n_samples) < 1:
        raise ValueError("Need positive numbers of classes/features/samples.")
    if n_classes < 2:
        raise ValueError("Need at least two classes.")
    if class_sep < 0:
        raise ValueError("Class separation needs to be non-negative.")
    rng = np.random.default_rng(seed)
    radius = class_sep / np.sqrt(2.0)
    if n_classes <= n_features:
        means = np.zeros((n_classes, n_features))
        means[np.arange(n_classes), np.arange(n_classes)] = radius
    else:
        directions = rng.standard_normal((n_classes, n_features))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        means = radius * directions
    labels = rng.permutation(np.arange(n_samples) % n_classes)
    features = means[labels] + rng.standard_normal((n_samples, n_features))
    return Dataset(features=features, labels=labels, n_classes=n_classes)


def dirichlet_partition(global_=None, n_clients=1, alpha=0.5, seed=0):
    """
    Distribute a dataset over clients with Dirichlet label skew.

    Parameters
    ----------
    global_ : :class:`asyncbezier.entities.model.Dataset`
        Dataset to distribute

    n_clients : :class:`int`
        Number of clients

    alpha : :class:`float`
        Concentration of the Dirichlet distribution

    seed : :class:`int`
        Seed of the random number generator

    Returns
    -------
    clients : :class:`list`
        One :class:`asyncbezier.entities.model.Dataset` per client, with
        ids ``0..n_clients-1``. Sample order within a client follows the
        global order.

    Raises
    ------
    ValueError
        Raised for invalid arguments, including more clients than
        samples.

    """
    if global_ is None:
        raise ValueError("Need data to partition.")
    if n_clients < 1:
        raise ValueError("Need at least one client.")
    if alpha <= 0:
        raise ValueError("Dirichlet concentration needs to be positive.")
    if n_clients > global_.n_samples:
        raise ValueError(
            f"Cannot partition {global_.n_samples} samples over "
            f"{n_clients} clients."
        )
    if n_clients == 1:
        return [global_.subset(np.arange(global_.n_samples), id_=0)]
    rng = np.random.default_rng(seed)
    for _ in range(MAX_REDRAWS):
        assignment = _draw_assignment(global_.labels, n_clients, alpha, rng)
        if min(len(item) for item in assignment) > 0:
            break
    else:
        logger.warning(
            "No Dirichlet draw without empty clients in %d attempts, "
            "repairing round-robin.",
            MAX_REDRAWS,
        )
        _repair_empty(assignment)
    return [
        global_.subset(np.sort(np.asarray(item, dtype=np.int64)), id_=idx)
        for idx, item in enumerate(assignment)
    ]


def _draw_assignment(labels, n_clients, alpha, rng):
    assignment = [[] for _ in range(n_clients)]
    for label in np.unique(labels):
        positions = np.flatnonzero(labels == label)
        rng.shuffle(positions)
        proportions = rng.dirichlet(np.repeat(alpha, n_clients))
        cuts = (np.cumsum(proportions) * len(positions)).astype(int)[:-1]
        for client, chunk in zip(assignment, np.split(positions, cuts)):
            client.extend(chunk.tolist())
    return assignment


def _repair_empty(assignment):
    empty = [idx for idx, item in enumerate(assignment) if not item]
    for idx in empty:
        sizes = [len(item) for item in assignment]
        largest = int(np.argmax(sizes))
        assignment[idx].append(assignment[largest].pop())


def train_validation_split(data=None, fraction=0.2, seed=0):
    """
    Split a client dataset into training and validation parts.

    Parameters
    ----------
    data : :class:`asyncbezier.entities.model.Dataset`
        Client dataset

    fraction : :class:`float`
        Share of samples used for validation, in ``[0, 1)``.

        At least one sample always stays in the training part. If the
        validation part would be empty, the training part doubles as
        validation set.

    seed : :class:`int`
        Seed; combined with the client id.

    Returns
    -------
    train : :class:`asyncbezier.entities.model.Dataset`
        Training part

    validation : :class:`asyncbezier.entities.model.Dataset`
        Validation part

    """
    if data is None:
        raise ValueError("Need data to split.")
    if not 0 <= fraction < 1:
        raise ValueError("Validation fraction needs to be in [0, 1).")
    n_validation = min(
        int(round(fraction * data.n_samples)), data.n_samples - 1
    )
    if n_validation == 0:
        return data, data
    rng = np.random.default_rng([int(seed), client_entropy(data.id)])
    order = rng.permutation(data.n_samples)
    train = data.subset(np.sort(order[n_validation:]))
    validation = data.subset(np.sort(order[:n_validation]))
    return train, validation


class FederatedData:
    """
    Training and validation data of all clients.

    Attributes
    ----------
    train : :class:`list`
        Training sets, one :class:`asyncbezier.entities.model.Dataset`
        per client, in client order

    validation : :class:`list`
        Validation sets, in client order

    Raises
    ------
    ValueError
        Raised if no clients or different numbers of training and
        validation sets are given.

    Examples
    --------
    Usually, federated data are created using :func:`make_federated`.
    Sets of already split data can be wrapped directly, though:

    .. code-block::

        data = FederatedData(train=[train0, train1], validation=[val0, val1])
        data.weights("uniform")     # array([0.5, 0.5])

    """

    def __init__(self, train=None, validation=None):
        if not train:
            raise ValueError("Need at least one client.")
        if validation is None:
            validation = list(train)
        if len(validation) != len(train):
            raise ValueError("Need one validation set per client.")
        self.train = list(train)
        self.validation = list(validation)

    @property
    def n_clients(self):
        """
        Number of clients.

        Returns
        -------
        n_clients : :class:`int`
            Number of clients

        """
        return len(self.train)

    @property
    def n_features(self):
        """
        Number of features of the task.

        Returns
        -------
        n_features : :class:`int`
            Number of features

        """
        return self.train[0].n_features

    @property
    def n_classes(self):
        """
        Number of classes of the task.

        Returns
        -------
        n_classes : :class:`int`
            Number of classes

        """
        return self.train[0].n_classes

    def sizes(self):
        """
        Number of training samples per client.

        Returns
        -------
        sizes : :class:`numpy.ndarray`
            Integer array of length :attr:`n_clients`

        """
        return np.array([item.n_samples for item in self.train])

    def weights(self, mode="proportional"):
        """
        Client weights :math:`w_i` of the federated objective.

        Parameters
        ----------
        mode : :class:`str`
            ``proportional`` weights clients by their share of training
            samples, ``uniform`` weights all clients equally.

        Returns
        -------
        weights : :class:`numpy.ndarray`
            Weights summing up to one

        """
        if mode not in CLIENT_WEIGHTINGS:
            raise ValueError(f"Unknown client weighting '{mode}'")
        if mode == "uniform":
            return np.full(self.n_clients, 1.0 / self.n_clients)
        sizes = self.sizes()
        return sizes / sizes.sum()

    def pooled_validation(self):
        """
        Validation sets of all clients pooled into one dataset.

        Returns
        -------
        dataset : :class:`asyncbezier.entities.model.Dataset`
            Dataset with id ``"global"``

        """
        return concatenate(self.validation, id_="global")


def make_federated(
    global_=None, n_clients=1, alpha=0.5, validation_fraction=0.2, seed=0
):
    """
    Partition a dataset over clients and split off validation sets.

    Parameters
    ----------
    global_ : :class:`asyncbezier.entities.model.Dataset`
        Dataset to distribute

    n_clients : :class:`int`
        Number of clients

    alpha : :class:`float`
        Concentration of the Dirichlet distribution

    validation_fraction : :class:`float`
        Share of each client's samples used for validation

    seed : :class:`int`
        Seed used for both, partitioning and splitting

    Returns
    -------
    data : :class:`FederatedData`
        Training and validation sets of all clients

    """
    clients = dirichlet_partition(
        global_=global_, n_clients=n_clients, alpha=alpha, seed=seed
    )
    splits = [
        train_validation_split(item, validation_fraction, seed)
        for item in clients
    ]
    logger.info(
        "Partitioned %d samples over %d clients.",
        global_.n_samples,
        n_clients,
    )
    return FederatedData(
        train=[train for train, _ in splits],
        validation=[validation for _, validation in splits],
    )
