"""Entities of the asyncbezier package."""

from asyncbezier.entities import params  # noqa
from asyncbezier.entities import model  # noqa
from asyncbezier.entities import curve  # noqa
from asyncbezier.entities import state  # noqa
from asyncbezier.entities import record  # noqa
