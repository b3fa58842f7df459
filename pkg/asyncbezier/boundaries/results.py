"""
*Reading and writing result, curve, and data files.*

.. sidebar:: Contents

    .. contents::
        :local:
        :depth: 1

All files written by an experiment end up in a single output directory.
Within one invocation, each file is written once: an
:class:`OutputDirectory` refuses to hand out the same path twice, as two
runs writing to the same file would silently overwrite each other's
results.


File formats
============

Run records (``<strategy>_seed<seed>[_K<k>].json``)
    Complete :class:`asyncbezier.entities.record.RunRecord` with sorted
    keys. NaN and infinite values are written as ``null``.

Rounds (``<strategy>_seed<seed>[_K<k>]_rounds.csv``)
    Columns ``version,loss,acc,staleness,s_factor``, empty fields for
    versions not evaluated.

Summary (``summary.csv``)
    One row per strategy, see
    :func:`asyncbezier.controllers.metrics.summarise`.

Epoch study (``epoch_study.csv``)
    One row per number of local epochs and strategy.

Event logs (``<strategy>_seed<seed>_events.jsonl``)
    One JSON object per arrival at the server.

Curves (``.h5`` or ``.csv``)
    Control points :math:`A, B, C` as rows of a :math:`3 \\times d`
    matrix, either as dataset ``control_points`` of an HDF5 file or as
    comma-separated text without header.

Datasets (``.csv``)
    Header ``label,f0,f1,...`` followed by one sample per line with an
    integer class label.


Module documentation
====================

"""

import json
import logging
import os
import re
from contextlib import contextmanager

import h5py
import numpy as np
import pandas as pd

from asyncbezier.entities.curve import BezierParams
from asyncbezier.entities.model import Dataset
from asyncbezier.entities.record import RunRecord
from asyncbezier.exceptions import CurveFileError

logger = logging.getLogger(__name__)

#: Columns written to the rounds files.
ROUNDS_CSV_COLUMNS = ("version", "loss", "acc", "staleness", "s_factor")

#: Name of the HDF5 dataset containing the control points.
CONTROL_POINTS = "control_points"

HDF5_SUFFIXES = (".h5", ".hdf5")


def run_basename(strategy="", seed=0, k=None):
    """
    Base name of the files of a run.

    Parameters
    ----------
    strategy : :class:`str`
        Name of the strategy

    seed : :class:`int`
        Seed of the run

    k : :class:`int` | :obj:`None`
        Number of local epochs, only set for epoch studies

    Returns
    -------
    basename : :class:`str`
        Name without extension, *e.g.* ``asyncbezier_seed0_K5``

    """
    basename = f"{strategy}_seed{seed}"
    if k is not None:
        basename += f"_K{k}"
    return basename


def to_json_compatible(value=None):
    """
    Convert a value to something :mod:`json` writes as valid JSON.

    NumPy scalars and arrays become Python numbers and lists, non-finite
    floats become :obj:`None`.

    Parameters
    ----------
    value
        Arbitrarily nested dicts, lists, tuples, and scalars

    Returns
    -------
    value
        Converted value

    """
    if isinstance(value, dict):
        return {
            str(key): to_json_compatible(item) for key, item in value.items()
        }
    if isinstance(value, (list, tuple, np.ndarray)):
        return [to_json_compatible(item) for item in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


class OutputDirectory:
    """
    Directory for the files of one invocation, each written once.

    Attributes
    ----------
    path : :class:`str`
        Path of the directory, created on first use

    Raises
    ------
    ValueError
        Raised if a file name is requested twice.

    Examples
    --------
    .. code-block::

        output = OutputDirectory(path="results")
        RecordFile(filename=output.path_for("fedasync_seed0.json"))

    """

    def __init__(self, path="results"):
        self.path = path
        self._written = set()

    def path_for(self, name=""):
        """
        Path of a file in the directory.

        Parameters
        ----------
        name : :class:`str`
            File name

        Returns
        -------
        path : :class:`str`
            Full path of the file

        Raises
        ------
        ValueError
            Raised if the name has been used before.

        """
        if not name:
            raise ValueError("Need a file name.")
        if name in self._written:
            raise ValueError(f"File {name} written twice in one invocation.")
        self._written.add(name)
        os.makedirs(self.path, exist_ok=True)
        return os.path.join(self.path, name)

    @property
    def written(self):
        """
        Names of all files handed out so far, sorted.

        Returns
        -------
        names : :class:`list`
            File names

        """
        return sorted(self._written)


class RecordFile:
    """
    JSON file of a run record.

    Attributes
    ----------
    filename : :class:`str`
        Name of the file

    """

    def __init__(self, filename=""):
        self.filename = filename

    def write(self, record=None):
        """
        Write a run record.

        Parameters
        ----------
        record : :class:`asyncbezier.entities.record.RunRecord`
            Record to write

        """
        if not self.filename:
            raise ValueError("Missing attribute filename")
        contents = to_json_compatible(record.to_dict())
        with open(self.filename, "w", encoding="utf-8") as file:
            json.dump(
                contents, file, sort_keys=True, indent=2, allow_nan=False
            )
            file.write("\n")
        logger.debug("Wrote record %s", self.filename)

    def read(self):
        """
        Read a run record.

        Returns
        -------
        record : :class:`asyncbezier.entities.record.RunRecord`
            Record with ``null`` values restored as NaN

        """
        if not self.filename:
            raise ValueError("Missing attribute filename")
        with open(self.filename, encoding="utf-8") as file:
            return RunRecord.from_dict(json.load(file))


def write_rounds(record=None, filename=""):
    """
    Write the rounds series of a run as CSV file.

    Parameters
    ----------
    record : :class:`asyncbezier.entities.record.RunRecord`
        Record whose rounds to write

    filename : :class:`str`
        Name of the file

    """
    dataframe = record.rounds_dataframe()[list(ROUNDS_CSV_COLUMNS)]
    dataframe.to_csv(filename, index=False, na_rep="")


def write_table(dataframe=None, filename=""):
    """
    Write a table (summary, epoch study, loss profile) as CSV file.

    Parameters
    ----------
    dataframe : :class:`pandas.DataFrame`
        Table to write, the index is not written

    filename : :class:`str`
        Name of the file

    """
    dataframe.to_csv(filename, index=False, na_rep="")
    logger.debug("Wrote table %s", filename)


def write_events(events=None, filename=""):
    """
    Write an event log with one JSON object per line.

    Parameters
    ----------
    events : :class:`list`
        One :class:`dict` per event

    filename : :class:`str`
        Name of the file

    """
    with open(filename, "w", encoding="utf-8") as file:
        for event in events or []:
            file.write(
                json.dumps(
                    to_json_compatible(event), sort_keys=True, allow_nan=False
                )
            )
            file.write("\n")


class CurveFile:
    """
    File containing the control points of a curve.

    The format is chosen by the extension of the file name: ``.h5`` and
    ``.hdf5`` for HDF5 files, anything else for CSV files.

    Attributes
    ----------
    filename : :class:`str`
        Name of the file

    Raises
    ------
    ValueError
        Raised if no filename is set.

    FileNotFoundError
        Raised if the file to read does not exist.

    asyncbezier.exceptions.CurveFileError
        Raised if the contents of the file cannot be parsed.

    Examples
    --------
    .. code-block::

        CurveFile(filename="curve.h5").write(curve)
        curve = CurveFile(filename="curve.h5").read()

    """

    def __init__(self, filename=""):
        self.filename = filename

    @property
    def is_hdf5(self):
        """
        Whether the file is an HDF5 file.

        Returns
        -------
        is_hdf5 : :class:`bool`
            Decided by the extension of :attr:`filename`

        """
        return os.path.splitext(self.filename)[1].lower() in HDF5_SUFFIXES

    def write(self, curve=None):
        """
        Write the control points of a curve.

        Parameters
        ----------
        curve : :class:`asyncbezier.entities.curve.BezierParams`
            Curve to write

        """
        if not self.filename:
            raise ValueError("Missing attribute filename")
        matrix = np.vstack(curve.blocks)
        if self.is_hdf5:
            with self._hdf5_file("w") as file:
                dataset = file.create_dataset(CONTROL_POINTS, data=matrix)
                dataset.attrs["rows"] = "A,B,C"
        else:
            pd.DataFrame(matrix).to_csv(
                self.filename, header=False, index=False
            )
        logger.debug("Wrote curve %s", self.filename)

    def read(self):
        """
        Read the control points of a curve.

        Returns
        -------
        curve : :class:`asyncbezier.entities.curve.BezierParams`
            Curve read from the file

        """
        if not self.filename:
            raise ValueError("Missing attribute filename")
        if not os.path.exists(self.filename):
            raise FileNotFoundError(f"File {self.filename} does not exist.")
        if self.is_hdf5:
            matrix = self._read_hdf5()
        else:
            matrix = self._read_csv()
        if not np.all(np.isfinite(matrix)):
            row, column = np.argwhere(~np.isfinite(matrix))[0]
            raise CurveFileError(
                "Non-finite control point", row=row + 1, column=column + 1
            )
        return BezierParams(a=matrix[0], b=matrix[1], c=matrix[2])

    @contextmanager
    def _hdf5_file(self, mode="r"):
        file = h5py.File(self.filename, mode)
        try:
            yield file
        finally:
            file.close()

    def _read_hdf5(self):
        try:
            with self._hdf5_file("r") as file:
                if CONTROL_POINTS not in file:
                    raise CurveFileError(
                        f"Missing dataset '{CONTROL_POINTS}'"
                    )
                matrix = np.asarray(file[CONTROL_POINTS][()], dtype=float)
        except OSError as error:
            raise CurveFileError(f"Cannot read HDF5 file: {error}") from error
        if matrix.ndim != 2 or matrix.shape[0] != 3:
            raise CurveFileError(
                f"Need three rows of control points, got {matrix.shape}"
            )
        return matrix

    def _read_csv(self):
        try:
            cells = pd.read_csv(
                self.filename,
                header=None,
                dtype=str,
                keep_default_na=False,
                skip_blank_lines=True,
            )
        except pd.errors.EmptyDataError as error:
            raise CurveFileError("Empty curve file", row=1) from error
        except pd.errors.ParserError as error:
            raise _ragged_row_error(error) from error
        if cells.shape[0] != 3:
            raise CurveFileError(
                f"Need three rows of control points, got {cells.shape[0]}",
                row=min(cells.shape[0] + 1, 4),
            )
        matrix = np.empty(cells.shape, dtype=float)
        for row in range(cells.shape[0]):
            for column in range(cells.shape[1]):
                value = cells.iat[row, column]
                text = value.strip() if isinstance(value, str) else ""
                try:
                    matrix[row, column] = float(text)
                except ValueError as error:
                    raise CurveFileError(
                        f"Cannot parse '{text}' as number",
                        row=row + 1,
                        column=column + 1,
                    ) from error
        return matrix


def _ragged_row_error(error):
    match = re.search(r"Expected (\d+) fields in line (\d+)", str(error))
    if not match:
        return CurveFileError(f"Cannot parse curve file: {error}")
    expected, line = (int(number) for number in match.groups())
    return CurveFileError(
        f"Row {line} has more than {expected} values",
        row=line,
        column=expected + 1,
    )


class DatasetFile:
    """
    CSV file of a labelled dataset.

    Attributes
    ----------
    filename : :class:`str`
        Name of the file

    """

    def __init__(self, filename=""):
        self.filename = filename

    def read(self, n_classes=None):
        """
        Read a dataset.

        Parameters
        ----------
        n_classes : :class:`int` | :obj:`None`
            Number of classes. Inferred from the labels if not given.

        Returns
        -------
        dataset : :class:`asyncbezier.entities.model.Dataset`
            Dataset with id ``global``

        Raises
        ------
        ValueError
            Raised if the header or the values are invalid.

        """
        if not self.filename:
            raise ValueError("Missing attribute filename")
        if not os.path.exists(self.filename):
            raise FileNotFoundError(f"File {self.filename} does not exist.")
        dataframe = pd.read_csv(self.filename)
        expected = ["label"] + [
            f"f{idx}" for idx in range(dataframe.shape[1] - 1)
        ]
        if list(dataframe.columns) != expected or len(expected) < 2:
            raise ValueError(
                "Need header 'label,f0,f1,...' in dataset file."
            )
        if dataframe.isna().to_numpy().any():
            raise ValueError("Dataset file contains missing values.")
        if not pd.api.types.is_integer_dtype(dataframe["label"]):
            raise ValueError("Need integer labels in dataset file.")
        return Dataset(
            features=dataframe[expected[1:]].to_numpy(dtype=float),
            labels=dataframe["label"].to_numpy(),
            n_classes=n_classes,
        )

    def write(self, dataset=None):
        """
        Write a dataset.

        Parameters
        ----------
        dataset : :class:`asyncbezier.entities.model.Dataset`
            Dataset to write

        """
        if not self.filename:
            raise ValueError("Missing attribute filename")
        dataframe = pd.DataFrame(
            dataset.features,
            columns=[f"f{idx}" for idx in range(dataset.n_features)],
        )
        dataframe.insert(0, "label", dataset.labels)
        dataframe.to_csv(self.filename, index=False)
