"""
*Evaluation, convergence speed, and fairness.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

Three kinds of metrics are used to compare strategies:

Performance
    Loss and accuracy of a global model on each client's validation set
    and on all validation sets pooled (:func:`evaluate`).

Convergence speed
    The number of rounds :math:`T_e` until the error of the global model
    first falls to a threshold :math:`e` (:func:`rounds_to_error`).

Fairness
    Inequality of the per-client accuracies, measured by the Gini
    coefficient (:func:`gini`) and the Theil index (:func:`theil`). Both
    are zero if all clients fare equally well and invariant to scaling.

Results of several runs are condensed into a table of means and standard
deviations by :func:`summarise`.


Module documentation
====================

"""

import logging

import numpy as np
import pandas as pd

from asyncbezier.entities.model import concatenate

logger = logging.getLogger(__name__)


def rounds_to_error(accuracies=None, e=0.1, versions=None):
    """
    First round at which the error falls to a threshold.

    Parameters
    ----------
    accuracies : array_like
        Accuracy per evaluated round

    e : :class:`float`
        Error threshold in (0, 1)

    versions : array_like | :obj:`None`
        Versions of the evaluated rounds. If omitted, the position in
        ``accuracies`` is used.

    Returns
    -------
    rounds : :class:`int` | :obj:`None`
        Smallest version with :math:`1 - \\text{acc} \\le e`, :obj:`None`
        if the threshold is never reached

    """
    if not 0 < e < 1:
        raise ValueError("Need an error threshold in (0, 1).")
    accuracies = np.asarray(accuracies, dtype=float)
    reached = np.flatnonzero(1.0 - accuracies <= e)
    if reached.size == 0:
        return None
    if versions is None:
        return int(reached[0])
    return int(np.asarray(versions)[reached[0]])


def gini(x=None):
    """
    Gini coefficient of non-negative values.

    Computed as exact double sum:

    .. math::

        G = \\frac{1}{2 N^2 \\bar x} \\sum_i \\sum_j |x_i - x_j|

    Parameters
    ----------
    x : array_like
        Non-negative values, *e.g.* per-client accuracies

    Returns
    -------
    gini : :class:`float`
        Value in :math:`[0, 1)`

    Raises
    ------
    ValueError
        Raised for empty input, negative values, or a zero mean.

    """
    x = _as_sample(x)
    if np.any(x < 0):
        raise ValueError("Gini coefficient needs non-negative values.")
    mean = x.mean()
    if mean == 0:
        raise ValueError("Gini coefficient undefined for zero mean.")
    total = sum(float(np.abs(value - x).sum()) for value in x)
    return total / (2 * x.size**2 * mean)


def theil(x=None):
    """
    Theil index of positive values (natural logarithm).

    .. math::

        T = \\frac{1}{N \\bar x} \\sum_i x_i \\ln\\frac{x_i}{\\bar x}

    Parameters
    ----------
    x : array_like
        Positive values

    Returns
    -------
    theil : :class:`float`
        Non-negative value, zero iff all values are equal

    Raises
    ------
    ValueError
        Raised for empty input or non-positive values.

    """
    x = _as_sample(x)
    if np.any(x <= 0):
        raise ValueError("Theil index needs positive values.")
    if np.all(x == x[0]):
        return 0.0
    ratio = x / x.mean()
    return max(0.0, float(np.sum(ratio * np.log(ratio)) / x.size))


def _as_sample(x):
    if x is None:
        raise ValueError("Need values.")
    x = np.asarray(x, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("Need at least one value.")
    return x


def evaluate(spec=None, theta=None, datasets=None):
    """
    Loss and accuracy per client and pooled over all clients.

    Parameters
    ----------
    spec : :class:`asyncbezier.entities.model.ModelSpec`
        Model specification

    theta : :class:`numpy.ndarray`
        Parameters of the model to evaluate

    datasets : :class:`list`
        One :class:`asyncbezier.entities.model.Dataset` per client

    Returns
    -------
    pooled : :class:`dict`
        ``loss`` and ``acc`` on all datasets pooled

    per_client : :class:`list`
        One :class:`dict` per dataset with ``client``, ``loss``, and
        ``acc``

    """
    if not datasets:
        raise ValueError("Need datasets to evaluate on.")
    per_client = []
    for data in datasets:
        loss, accuracy = spec.score(theta, data)
        per_client.append({"client": data.id, "loss": loss, "acc": accuracy})
    if len(datasets) == 1:
        pooled = {"loss": per_client[0]["loss"], "acc": per_client[0]["acc"]}
    else:
        loss, accuracy = spec.score(theta, concatenate(datasets))
        pooled = {"loss": loss, "acc": accuracy}
    return pooled, per_client


def fairness(per_client_acc=None):
    """
    Gini coefficient and Theil index of per-client accuracies.

    Degenerate inputs (all accuracies zero) yield NaN rather than an
    error, as they may legitimately occur early in training.

    Parameters
    ----------
    per_client_acc : array_like
        Accuracies of all clients

    Returns
    -------
    gini : :class:`float`
        Gini coefficient or NaN

    theil : :class:`float`
        Theil index or NaN if any client has zero accuracy

    """
    values = np.asarray(per_client_acc, dtype=float)
    gini_value = gini(values) if values.sum() > 0 else np.nan
    theil_value = theil(values) if np.all(values > 0) else np.nan
    return gini_value, theil_value


#: Metrics condensed by :func:`summarise`.
SUMMARY_METRICS = ("final_acc", "final_loss", "best_acc", "gini", "theil")


def summarise(records=None):
    """
    Means and standard deviations of runs per strategy.

    Parameters
    ----------
    records : :class:`list`
        :class:`asyncbezier.entities.record.RunRecord` objects

    Returns
    -------
    summary : :class:`pandas.DataFrame`
        One row per strategy (in order of first appearance) with the
        number of runs and failures and, for each metric in
        :data:`SUMMARY_METRICS`, columns ``<metric>_mean`` and
        ``<metric>_std`` (sample standard deviation)

    """
    if not records:
        raise ValueError("Need run records to summarise.")
    rows = [
        {
            "strategy": record.strategy,
            "seed": record.seed,
            "failed": bool(record.failed),
            "final_acc": record.final.get("acc", np.nan),
            "final_loss": record.final.get("loss", np.nan),
            "best_acc": record.best.get("acc", np.nan),
            "gini": record.gini,
            "theil": record.theil,
        }
        for record in records
    ]
    dataframe = pd.DataFrame(rows)
    grouped = dataframe.groupby("strategy", sort=False)
    summary = pd.DataFrame(
        {
            "n_runs": grouped["seed"].count(),
            "n_failed": grouped["failed"].sum().astype(int),
        }
    )
    for metric in SUMMARY_METRICS:
        summary[f"{metric}_mean"] = grouped[metric].mean()
        summary[f"{metric}_std"] = grouped[metric].std()
    return summary.reset_index()
