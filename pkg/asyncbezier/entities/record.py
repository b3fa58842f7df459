"""
*Results of a single simulation run.*

A :class:`RunRecord` collects everything a run produces: the series of
global model metrics, per-client results of the final model, fairness
of the best model, counters of numerical events, and an echo of the
configuration sufficient to repeat the run.

Records are plain data. Converting them to files is the task of
:mod:`asyncbezier.boundaries.results`.


Module documentation
====================

"""

import logging

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

#: Columns of the rounds series, in order.
ROUND_COLUMNS = (
    "version",
    "loss",
    "acc",
    "staleness",
    "s_factor",
    "step",
    "time",
    "client",
)


class RunRecord:
    """
    Metrics and bookkeeping of a single run.

    Attributes
    ----------
    strategy : :class:`str`
        Name of the strategy

    seed : :class:`int`
        Seed of the run

    config : :class:`dict`
        Resolved configuration of the run

    rounds : :class:`list`
        One :class:`dict` per applied update with the keys given in
        :data:`ROUND_COLUMNS`. Loss and accuracy are NaN for versions
        not evaluated.

    per_client_final : :class:`list`
        One :class:`dict` per client (``client``, ``loss``, ``acc``)
        for the final global model

    final : :class:`dict`
        Pooled validation ``loss`` and ``acc`` of the final model

    best : :class:`dict`
        ``version``, ``loss``, and ``acc`` of the evaluated model with the
        highest pooled validation accuracy, together with its per-client
        accuracies (``per_client_acc``)

    gini : :class:`float`
        Gini coefficient of the per-client accuracies of the best model

    theil : :class:`float`
        Theil index of the per-client accuracies of the best model

    swa : :class:`dict`
        ``window``, ``loss``, and ``acc`` of the tail average of global
        models, empty if not requested

    n_arrivals : :class:`int`
        Number of client updates that arrived at the server

    drops : :class:`int`
        Number of updates dropped for exceeding the maximum staleness

    scale_clamps : :class:`int`
        Number of clamped staleness scales

    step_clamps : :class:`int`
        Number of clamped curve steps

    failed : :class:`bool`
        Whether the run aborted

    failure : :class:`str`
        Reason of the abort, empty for successful runs

    """

    def __init__(self, strategy="", seed=0, config=None):
        self.strategy = strategy
        self.seed = int(seed)
        self.config = config or {}
        self.rounds = []
        self.per_client_final = []
        self.final = {}
        self.best = {}
        self.gini = np.nan
        self.theil = np.nan
        self.swa = {}
        self.n_arrivals = 0
        self.drops = 0
        self.scale_clamps = 0
        self.step_clamps = 0
        self.failed = False
        self.failure = ""

    def __str__(self):
        status = "failed" if self.failed else f"{len(self.rounds)} rounds"
        return (
            f"{self.strategy} seed {self.seed} <{type(self).__name__}: "
            f"{status}>"
        )

    def add_round(self, **kwargs):
        """
        Append a row to the rounds series.

        Parameters
        ----------
        **kwargs
            Values of the columns given in :data:`ROUND_COLUMNS`. Missing
            metrics are set to NaN.

        Raises
        ------
        ValueError
            Raised for unknown columns or if the version does not
            increase.

        """
        unknown = set(kwargs) - set(ROUND_COLUMNS)
        if unknown:
            raise ValueError(f"Unknown round columns: {sorted(unknown)}")
        if self.rounds and kwargs["version"] <= self.rounds[-1]["version"]:
            raise ValueError("Rounds need strictly increasing versions.")
        row = {column: np.nan for column in ROUND_COLUMNS}
        row.update(kwargs)
        self.rounds.append(row)

    @property
    def accuracies(self):
        """
        Pooled validation accuracies of all evaluated versions.

        Returns
        -------
        versions : :class:`numpy.ndarray`
            Evaluated versions

        accuracies : :class:`numpy.ndarray`
            Accuracies, in order of versions

        """
        evaluated = [row for row in self.rounds if np.isfinite(row["acc"])]
        return (
            np.array([row["version"] for row in evaluated], dtype=int),
            np.array([row["acc"] for row in evaluated], dtype=float),
        )

    def rounds_dataframe(self):
        """
        Rounds series as table.

        Returns
        -------
        dataframe : :class:`pandas.DataFrame`
            One row per applied update, columns as in
            :data:`ROUND_COLUMNS`

        """
        return pd.DataFrame(self.rounds, columns=list(ROUND_COLUMNS))

    def to_dict(self):
        """
        Record as (JSON-serialisable) dict.

        Returns
        -------
        record : :class:`dict`
            All attributes of the record

        """
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "config": self.config,
            "rounds": [dict(row) for row in self.rounds],
            "per_client_final": [dict(row) for row in self.per_client_final],
            "final": dict(self.final),
            "best": dict(self.best),
            "gini": self.gini,
            "theil": self.theil,
            "swa": dict(self.swa),
            "n_arrivals": self.n_arrivals,
            "drops": self.drops,
            "scale_clamps": self.scale_clamps,
            "step_clamps": self.step_clamps,
            "failed": self.failed,
            "failure": self.failure,
        }

    @classmethod
    def from_dict(cls, record=None):
        """
        Recreate a record from its dict representation.

        Values written as ``null`` (*i.e.* NaN on writing) are restored as
        NaN.

        Parameters
        ----------
        record : :class:`dict`
            Output of :meth:`to_dict`, possibly after a JSON round trip

        Returns
        -------
        record : :class:`RunRecord`
            Recreated record

        """
        obj = cls(
            strategy=record["strategy"],
            seed=record["seed"],
            config=record["config"],
        )
        obj.rounds = [
            {
                key: np.nan if value is None else value
                for key, value in row.items()
            }
            for row in record["rounds"]
        ]
        obj.per_client_final = list(record["per_client_final"])
        obj.final = dict(record["final"])
        obj.best = dict(record["best"])
        obj.swa = dict(record["swa"])
        for key in ("gini", "theil"):
            value = record[key]
            setattr(obj, key, np.nan if value is None else value)
        for key in (
            "n_arrivals",
            "drops",
            "scale_clamps",
            "step_clamps",
            "failed",
            "failure",
        ):
            setattr(obj, key, record[key])
        return obj
